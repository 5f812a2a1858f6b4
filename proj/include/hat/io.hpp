#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hat/attack.hpp"
#include "hat/bit_code.hpp"
#include "hat/data.hpp"
#include "hat/error.hpp"
#include "hat/eval.hpp"
#include "hat/model.hpp"
#include "hat/retrieval.hpp"

// File formats
//
// Dataset ("HSD1"):  magic "HSD1" | u32 header_len | JSON header |
//                    N*d float64 features | N*ceil(C/8) packed labels |
//                    N split tags (u8: 0 train, 1 database, 2 query).
//                    All integers and floats little-endian; bit c of a label
//                    record sits at byte c/8, bit c%8.
// Codes   ("HSC1"):  magic "HSC1" | u32 K | u64 N | N*ceil(K/8) code bytes
//                    (bit j at byte j/8, bit j%8) | u32 C | N*ceil(C/8)
//                    packed label bytes.
// Model   (JSON):    {"format":"hsm","version":1,"layer_dims":[...],
//                    "weights":[row-major per layer],"biases":[...],"seed":n}
// Attacks (JSONL):   one record per query per method; codes hex-encoded.

namespace hat::io {

using json = nlohmann::ordered_json;

namespace detail {

inline void append_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void append_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void append_f64(std::string& out, double v) {
    std::uint64_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, sizeof(bits));
    append_u64(out, bits);
}

class Reader {
public:
    Reader(std::string data, std::filesystem::path path) : data_(std::move(data)), path_(std::move(path)) {}

    std::uint32_t read_u32() { return static_cast<std::uint32_t>(read_uint(4)); }
    std::uint64_t read_u64() { return read_uint(8); }

    double read_f64() {
        const std::uint64_t bits = read_u64();
        double v;
        std::memcpy(&v, &bits, sizeof(v));
        return v;
    }

    std::string read_bytes(std::size_t n) {
        require(n);
        std::string out = data_.substr(pos_, n);
        pos_ += n;
        return out;
    }

    std::uint8_t read_u8() { return static_cast<std::uint8_t>(read_uint(1)); }

    void expect_magic(const char* magic) {
        const std::string found = read_bytes(4);
        if (found != magic)
            raise(Errc::format_error, path_.string() + ": bad magic '" + found + "', expected '" + magic + "'");
    }

    bool exhausted() const { return pos_ == data_.size(); }
    const std::filesystem::path& path() const { return path_; }

    [[noreturn]] void corrupt(const std::string& what) const {
        raise(Errc::corrupt_file, path_.string() + ": " + what);
    }

private:
    std::uint64_t read_uint(std::size_t bytes) {
        require(bytes);
        std::uint64_t v = 0;
        for (std::size_t i = 0; i < bytes; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += bytes;
        return v;
    }

    void require(std::size_t n) const {
        if (pos_ + n > data_.size()) raise(Errc::corrupt_file, path_.string() + ": truncated file");
    }

    std::string data_;
    std::filesystem::path path_;
    std::size_t pos_ = 0;
};

inline std::vector<std::uint8_t> pack_label(const Label& label) {
    std::vector<std::uint8_t> bytes((label.size() + 7) / 8, 0);
    for (std::size_t c = 0; c < label.size(); ++c)
        if (label[c]) bytes[c / 8] |= static_cast<std::uint8_t>(1u << (c % 8));
    return bytes;
}

inline Label unpack_label(const std::string& bytes, std::size_t c_total) {
    Label label(c_total, 0);
    for (std::size_t c = 0; c < c_total; ++c)
        label[c] = (static_cast<unsigned char>(bytes[c / 8]) >> (c % 8)) & 1;
    return label;
}

} // namespace detail

/// Writes the full content to a temp file in the target directory, then
/// renames it into place; a failed write never leaves a partial artifact.
inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
    if (path.empty()) raise(Errc::invalid_argument, "output path is empty");
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) raise(Errc::io_error, "cannot open " + tmp.string() + " for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) {
            out.close();
            std::filesystem::remove(tmp);
            raise(Errc::io_error, "write failed for " + tmp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        raise(Errc::io_error, "rename to " + path.string() + " failed: " + ec.message());
    }
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(Errc::missing_artifact, "expected artifact at " + path.string());
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return data;
}

inline json spec_to_json(const SyntheticSpec& spec) {
    return json{{"classes", spec.classes},
                {"feature_dim", spec.feature_dim},
                {"train_per_class", spec.train_per_class},
                {"database_per_class", spec.database_per_class},
                {"query_per_class", spec.query_per_class},
                {"blob_std", spec.blob_std},
                {"multi_label_prob", spec.multi_label_prob},
                {"open_set_classes", spec.open_set_classes}};
}

inline SyntheticSpec spec_from_json(const json& j) {
    SyntheticSpec spec;
    spec.classes = j.at("classes").get<std::size_t>();
    spec.feature_dim = j.at("feature_dim").get<std::size_t>();
    spec.train_per_class = j.at("train_per_class").get<std::size_t>();
    spec.database_per_class = j.at("database_per_class").get<std::size_t>();
    spec.query_per_class = j.at("query_per_class").get<std::size_t>();
    spec.blob_std = j.at("blob_std").get<double>();
    spec.multi_label_prob = j.at("multi_label_prob").get<double>();
    spec.open_set_classes = j.at("open_set_classes").get<std::size_t>();
    return spec;
}

// ---- dataset ----

inline void save_dataset(const Database& db, const std::filesystem::path& path) {
    json header{{"format", "hsd"},
                {"version", 1},
                {"feature_dim", db.feature_dim},
                {"classes", db.num_classes},
                {"counts",
                 {{"train", db.count_of(Split::train)},
                  {"database", db.count_of(Split::database)},
                  {"query", db.count_of(Split::query)}}},
                {"seed", db.seed},
                {"spec", spec_to_json(db.spec)}};
    const std::string header_text = header.dump();

    std::string out;
    out.reserve(16 + header_text.size() + db.size() * (db.feature_dim * 8 + (db.num_classes + 7) / 8 + 1));
    out += "HSD1";
    detail::append_u32(out, static_cast<std::uint32_t>(header_text.size()));
    out += header_text;
    for (const Record& rec : db.records)
        for (double v : rec.features) detail::append_f64(out, v);
    for (const Record& rec : db.records)
        for (std::uint8_t b : detail::pack_label(rec.label)) out.push_back(static_cast<char>(b));
    for (Split s : db.split) out.push_back(static_cast<char>(static_cast<int>(s)));
    atomic_write(path, out);
}

inline Database load_dataset(const std::filesystem::path& path) {
    detail::Reader reader(read_file(path), path);
    reader.expect_magic("HSD1");
    const std::uint32_t header_len = reader.read_u32();
    json header;
    try {
        header = json::parse(reader.read_bytes(header_len));
    } catch (const json::exception& e) {
        raise(Errc::format_error, path.string() + ": invalid header JSON: " + e.what());
    }
    if (header.value("format", "") != "hsd" || header.value("version", 0) != 1)
        raise(Errc::format_error, path.string() + ": unsupported dataset format/version");

    Database db;
    db.feature_dim = header.at("feature_dim").get<std::size_t>();
    db.num_classes = header.at("classes").get<std::size_t>();
    db.seed = header.at("seed").get<std::uint64_t>();
    db.spec = spec_from_json(header.at("spec"));
    const std::size_t n = header.at("counts").at("train").get<std::size_t>() +
                          header.at("counts").at("database").get<std::size_t>() +
                          header.at("counts").at("query").get<std::size_t>();

    db.records.resize(n);
    for (Record& rec : db.records) {
        rec.features.resize(db.feature_dim);
        for (double& v : rec.features) v = reader.read_f64();
    }
    const std::size_t label_bytes = (db.num_classes + 7) / 8;
    for (Record& rec : db.records) rec.label = detail::unpack_label(reader.read_bytes(label_bytes), db.num_classes);
    db.split.resize(n);
    for (Split& s : db.split) {
        const std::uint8_t tag = reader.read_u8();
        if (tag > 2) reader.corrupt("invalid split tag");
        s = static_cast<Split>(tag);
    }
    if (!reader.exhausted()) reader.corrupt("trailing bytes after dataset payload");
    return db;
}

// ---- code index ----

inline void save_codes(const CodeIndex& index, const std::filesystem::path& path) {
    if (index.size() == 0) raise(Errc::empty_database, "refusing to save an empty code index");
    const std::size_t c_total = index.labels.front().size();
    std::string out;
    out += "HSC1";
    detail::append_u32(out, static_cast<std::uint32_t>(index.bits));
    detail::append_u64(out, index.size());
    for (const BitCode& code : index.codes)
        for (std::uint8_t b : code.to_bytes()) out.push_back(static_cast<char>(b));
    detail::append_u32(out, static_cast<std::uint32_t>(c_total));
    for (const Label& label : index.labels)
        for (std::uint8_t b : detail::pack_label(label)) out.push_back(static_cast<char>(b));
    atomic_write(path, out);
}

inline CodeIndex load_codes(const std::filesystem::path& path) {
    detail::Reader reader(read_file(path), path);
    reader.expect_magic("HSC1");
    CodeIndex index;
    index.bits = reader.read_u32();
    if (index.bits == 0) reader.corrupt("code length is zero");
    const std::uint64_t n = reader.read_u64();
    const std::size_t code_bytes = (index.bits + 7) / 8;
    index.codes.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        const std::string bytes = reader.read_bytes(code_bytes);
        index.codes.push_back(BitCode::from_bytes(
            {reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()}, index.bits));
    }
    const std::uint32_t c_total = reader.read_u32();
    const std::size_t label_bytes = (c_total + 7) / 8;
    index.labels.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i)
        index.labels.push_back(detail::unpack_label(reader.read_bytes(label_bytes), c_total));
    if (!reader.exhausted()) reader.corrupt("trailing bytes after code payload");
    return index;
}

// ---- model snapshot ----

inline void save_model(const HashModel& model, const std::filesystem::path& path) {
    json doc{{"format", "hsm"},
             {"version", 1},
             {"layer_dims", model.layer_dims()},
             {"weights", model.weights()},
             {"biases", model.biases()},
             {"seed", model.seed()}};
    if (model.output_scale() != 1.0) doc["output_scale"] = model.output_scale();
    if (model.extractor_dim() > 0) {
        doc["input_dim"] = model.input_dim();
        doc["extractor_gain"] = model.extractor_gain();
        doc["extractor_weights"] = model.extractor_weights();
    }
    atomic_write(path, doc.dump(2) + "\n");
}

inline HashModel load_model(const std::filesystem::path& path) {
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::exception& e) {
        raise(Errc::format_error, path.string() + ": invalid model JSON: " + std::string(e.what()));
    }
    if (doc.value("format", "") != "hsm" || doc.value("version", 0) != 1)
        raise(Errc::format_error, path.string() + ": unsupported model format/version");
    try {
        return HashModel::from_parameters(doc.at("layer_dims").get<std::vector<std::size_t>>(),
                                          doc.at("weights").get<std::vector<std::vector<double>>>(),
                                          doc.at("biases").get<std::vector<std::vector<double>>>(),
                                          doc.at("seed").get<std::uint64_t>(),
                                          doc.value("input_dim", std::size_t{0}),
                                          doc.value("extractor_gain", 1.0),
                                          doc.value("extractor_weights", std::vector<double>{}),
                                          doc.value("output_scale", 1.0));
    } catch (const json::exception& e) {
        raise(Errc::format_error, path.string() + ": malformed model document: " + std::string(e.what()));
    }
}

// ---- attack records ----

/// One attack outcome bound to its query; `method` is original|noise|p2p|dhta.
struct AttackRecord {
    std::size_t query_index = 0; // position in the dataset's query split
    std::string method;
    Label original_label;
    double epsilon = 0.0;
    int n_t = 0;
    int iterations = 0;
    AttackResult result;
};

inline json attack_record_to_json(const AttackRecord& rec, bool store_trace) {
    json j{{"query_index", rec.query_index},
           {"method", rec.method},
           {"target_label", rec.result.target_label},
           {"original_label", rec.original_label},
           {"epsilon", rec.epsilon},
           {"n_t", rec.n_t},
           {"iterations", rec.iterations},
           {"perceptibility", rec.result.perceptibility},
           {"adversarial", rec.result.adversarial}};
    if (rec.result.anchor) {
        j["anchor_code"] = rec.result.anchor->to_hex();
        j["hamming_to_anchor"] = rec.result.hamming_to_anchor;
        j["best_objective"] = rec.result.best_objective;
        j["best_iteration"] = rec.result.best_iteration;
        j["best_alpha"] = rec.result.best_alpha;
    }
    if (!rec.result.final_code.empty()) j["final_code"] = rec.result.final_code.to_hex();
    if (store_trace && !rec.result.objective_trace.empty()) j["objective_trace"] = rec.result.objective_trace;
    return j;
}

inline void save_attack_records(const std::vector<AttackRecord>& records, bool store_trace,
                                const std::filesystem::path& path) {
    std::string out;
    for (const AttackRecord& rec : records) {
        out += attack_record_to_json(rec, store_trace).dump();
        out.push_back('\n');
    }
    atomic_write(path, out);
}

inline std::vector<AttackRecord> load_attack_records(const std::filesystem::path& path, std::size_t bits) {
    const std::string data = read_file(path);
    std::vector<AttackRecord> records;
    std::size_t start = 0;
    while (start < data.size()) {
        std::size_t end = data.find('\n', start);
        if (end == std::string::npos) end = data.size();
        const std::string line = data.substr(start, end - start);
        start = end + 1;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            raise(Errc::corrupt_file, path.string() + ": bad JSON line: " + std::string(e.what()));
        }
        AttackRecord rec;
        rec.query_index = j.at("query_index").get<std::size_t>();
        rec.method = j.at("method").get<std::string>();
        rec.original_label = j.at("original_label").get<Label>();
        rec.epsilon = j.at("epsilon").get<double>();
        rec.n_t = j.at("n_t").get<int>();
        rec.iterations = j.at("iterations").get<int>();
        rec.result.target_label = j.at("target_label").get<Label>();
        rec.result.perceptibility = j.at("perceptibility").get<double>();
        rec.result.adversarial = j.at("adversarial").get<std::vector<double>>();
        if (j.contains("anchor_code")) {
            rec.result.anchor = BitCode::from_hex(j.at("anchor_code").get<std::string>(), bits);
            rec.result.hamming_to_anchor = j.at("hamming_to_anchor").get<int>();
            rec.result.best_objective = j.at("best_objective").get<double>();
            rec.result.best_iteration = j.at("best_iteration").get<int>();
            rec.result.best_alpha = j.at("best_alpha").get<double>();
        }
        if (j.contains("final_code")) rec.result.final_code = BitCode::from_hex(j.at("final_code").get<std::string>(), bits);
        if (j.contains("objective_trace")) rec.result.objective_trace = j.at("objective_trace").get<std::vector<double>>();
        records.push_back(std::move(rec));
    }
    return records;
}

// ---- curves and traces ----

inline std::string format_fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

inline void save_curve_csv(const PrCurve& curve, const std::filesystem::path& path) {
    std::string out = "cutoff,recall,precision\n";
    for (const PrPoint& p : curve.points) {
        out += std::to_string(p.cutoff);
        out.push_back(',');
        out += format_fixed(p.recall, 6);
        out.push_back(',');
        out += format_fixed(p.precision, 6);
        out.push_back('\n');
    }
    atomic_write(path, out);
}

inline void save_loss_trace_csv(const std::vector<double>& trace, const std::filesystem::path& path) {
    std::string out = "epoch,loss\n";
    for (std::size_t e = 0; e < trace.size(); ++e) {
        out += std::to_string(e);
        out.push_back(',');
        out += format_fixed(trace[e], 8);
        out.push_back('\n');
    }
    atomic_write(path, out);
}

} // namespace hat::io
