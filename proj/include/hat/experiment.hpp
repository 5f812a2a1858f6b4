#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <iostream>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "hat/attack.hpp"
#include "hat/data.hpp"
#include "hat/error.hpp"
#include "hat/eval.hpp"
#include "hat/io.hpp"
#include "hat/model.hpp"
#include "hat/retrieval.hpp"
#include "hat/rng.hpp"

namespace hat {

enum class Method { original, noise, p2p, dhta };

inline const char* method_name(Method m) {
    switch (m) {
        case Method::original: return "original";
        case Method::noise: return "noise";
        case Method::p2p: return "p2p";
        case Method::dhta: return "dhta";
    }
    return "?";
}

inline Method method_from_name(const std::string& name) {
    if (name == "original") return Method::original;
    if (name == "noise") return Method::noise;
    if (name == "p2p") return Method::p2p;
    if (name == "dhta") return Method::dhta;
    raise(Errc::invalid_config, "unknown method '" + name + "' (expected original|noise|p2p|dhta)");
}

enum class TargetPolicy { random_different, fixed, open_set };

inline const char* target_policy_name(TargetPolicy p) {
    switch (p) {
        case TargetPolicy::random_different: return "random-different";
        case TargetPolicy::fixed: return "fixed";
        case TargetPolicy::open_set: return "open-set";
    }
    return "?";
}

/// Full description of one experiment: dataset, model, training, attack,
/// evaluation and orchestration knobs. Loaded from a strict JSON document
/// (unknown keys are rejected, all violations reported at once).
struct ExperimentConfig {
    SyntheticSpec dataset;
    std::string dataset_path; // when set, use this pre-generated dataset file
    std::vector<std::size_t> bits = {16, 32, 48, 64};
    std::vector<std::size_t> hidden_dims = {64};
    std::size_t extractor_dim = 0; // 0 disables the frozen random-feature stage
    double extractor_gain = 1.0;
    double output_scale = 1.0;
    TrainConfig train;
    AttackConfig attack;
    std::size_t eval_cutoff = 0;     // t-MAP / PR cutoff; 0 = entire database
    std::size_t eval_map_cutoff = 0; // own-label MAP cutoff; 0 = entire database
    ApDenominator ap_denominator = ApDenominator::retrieved_relevant;
    std::vector<Method> methods = {Method::original, Method::noise, Method::p2p, Method::dhta};
    TargetPolicy target_policy = TargetPolicy::random_different;
    std::size_t fixed_target_class = 0;
    std::size_t num_queries = 100;
    std::uint64_t seed = 1;
    int threads = 0; // 0 = hardware concurrency
    bool store_trace = false;

    void validate() const {
        std::vector<std::string> violations;
        try {
            dataset.validate();
        } catch (const Error& e) {
            violations.push_back(std::string("dataset: ") + e.what());
        }
        try {
            train.validate();
        } catch (const Error& e) {
            violations.push_back(std::string("train: ") + e.what());
        }
        try {
            attack.validate();
        } catch (const Error& e) {
            violations.push_back(std::string("attack: ") + e.what());
        }
        if (bits.empty()) violations.push_back("bits: at least one code length required");
        static const std::set<std::size_t> presets{8, 16, 32, 48, 64};
        for (std::size_t k : bits)
            if (!presets.count(k))
                violations.push_back("bits: " + std::to_string(k) + " not in the preset set {8,16,32,48,64}");
        if (methods.empty()) violations.push_back("methods: at least one method required");
        if (num_queries == 0) violations.push_back("num_queries: must be >= 1");
        if (target_policy == TargetPolicy::fixed && fixed_target_class >= dataset.classes)
            violations.push_back("fixed_target_class: out of range");
        if (target_policy == TargetPolicy::open_set && dataset.open_set_classes == 0)
            violations.push_back("target_policy: open-set requires dataset.open_set_classes > 0");
        if (threads < 0) violations.push_back("threads: must be >= 0");
        if (extractor_dim > 0 && !(extractor_gain > 0.0))
            violations.push_back("model.extractor_gain: must be > 0");
        if (!(output_scale > 0.0)) violations.push_back("model.output_scale: must be > 0");
        if (!violations.empty()) {
            std::string msg = "configuration invalid:";
            for (const auto& v : violations) msg += "\n  - " + v;
            raise(Errc::invalid_config, msg);
        }
    }

    static ExperimentConfig from_json(const nlohmann::json& doc);
    static ExperimentConfig load(const std::filesystem::path& path);
    nlohmann::ordered_json to_json() const;
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& obj, const std::set<std::string>& allowed,
                                const std::string& scope, std::vector<std::string>& violations) {
    for (const auto& item : obj.items())
        if (!allowed.count(item.key())) violations.push_back(scope + ": unknown key '" + item.key() + "'");
}

template <typename T>
void read_field(const nlohmann::json& obj, const char* key, T& out, const std::string& scope,
                std::vector<std::string>& violations) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        violations.push_back(scope + "." + key + ": wrong type");
    }
}

} // namespace detail

inline ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& doc) {
    ExperimentConfig cfg;
    std::vector<std::string> violations;
    if (!doc.is_object()) raise(Errc::invalid_config, "config root must be a JSON object");

    detail::reject_unknown_keys(doc,
                                {"dataset", "dataset_path", "bits", "model", "train", "attack", "evaluation",
                                 "methods", "target_policy", "fixed_target_class", "num_queries", "seed",
                                 "threads", "store_trace"},
                                "config", violations);
    detail::read_field(doc, "dataset_path", cfg.dataset_path, "config", violations);

    if (doc.contains("dataset")) {
        const auto& d = doc.at("dataset");
        detail::reject_unknown_keys(d,
                                    {"classes", "feature_dim", "train_per_class", "database_per_class",
                                     "query_per_class", "blob_std", "multi_label_prob", "open_set_classes"},
                                    "dataset", violations);
        detail::read_field(d, "classes", cfg.dataset.classes, "dataset", violations);
        detail::read_field(d, "feature_dim", cfg.dataset.feature_dim, "dataset", violations);
        detail::read_field(d, "train_per_class", cfg.dataset.train_per_class, "dataset", violations);
        detail::read_field(d, "database_per_class", cfg.dataset.database_per_class, "dataset", violations);
        detail::read_field(d, "query_per_class", cfg.dataset.query_per_class, "dataset", violations);
        detail::read_field(d, "blob_std", cfg.dataset.blob_std, "dataset", violations);
        detail::read_field(d, "multi_label_prob", cfg.dataset.multi_label_prob, "dataset", violations);
        detail::read_field(d, "open_set_classes", cfg.dataset.open_set_classes, "dataset", violations);
    }
    detail::read_field(doc, "bits", cfg.bits, "config", violations);
    if (doc.contains("model")) {
        const auto& m = doc.at("model");
        detail::reject_unknown_keys(m, {"hidden_dims", "extractor_dim", "extractor_gain", "output_scale"},
                                    "model", violations);
        detail::read_field(m, "hidden_dims", cfg.hidden_dims, "model", violations);
        detail::read_field(m, "extractor_dim", cfg.extractor_dim, "model", violations);
        detail::read_field(m, "extractor_gain", cfg.extractor_gain, "model", violations);
        detail::read_field(m, "output_scale", cfg.output_scale, "model", violations);
    }
    if (doc.contains("train")) {
        const auto& t = doc.at("train");
        detail::reject_unknown_keys(
            t, {"epochs", "batch_size", "learning_rate", "quantization_weight", "seed"}, "train", violations);
        detail::read_field(t, "epochs", cfg.train.epochs, "train", violations);
        detail::read_field(t, "batch_size", cfg.train.batch_size, "train", violations);
        detail::read_field(t, "learning_rate", cfg.train.learning_rate, "train", violations);
        detail::read_field(t, "quantization_weight", cfg.train.quantization_weight, "train", violations);
        detail::read_field(t, "seed", cfg.train.seed, "train", violations);
    }
    if (doc.contains("attack")) {
        const auto& a = doc.at("attack");
        detail::reject_unknown_keys(
            a, {"epsilon", "iterations", "step_size", "alpha_schedule", "n_t"}, "attack", violations);
        detail::read_field(a, "epsilon", cfg.attack.epsilon, "attack", violations);
        detail::read_field(a, "iterations", cfg.attack.iterations, "attack", violations);
        detail::read_field(a, "step_size", cfg.attack.step_size, "attack", violations);
        detail::read_field(a, "n_t", cfg.attack.n_t, "attack", violations);
        if (a.contains("alpha_schedule")) {
            try {
                cfg.attack.alpha_schedule.clear();
                for (const auto& pair : a.at("alpha_schedule"))
                    cfg.attack.alpha_schedule.push_back(
                        AlphaStage{pair.at(0).get<int>(), pair.at(1).get<double>()});
            } catch (const nlohmann::json::exception&) {
                violations.push_back("attack.alpha_schedule: expected [[start_iteration, alpha], ...]");
            }
        }
    }
    if (doc.contains("evaluation")) {
        const auto& e = doc.at("evaluation");
        detail::reject_unknown_keys(e, {"cutoff", "map_cutoff", "ap_denominator"}, "evaluation", violations);
        detail::read_field(e, "cutoff", cfg.eval_cutoff, "evaluation", violations);
        detail::read_field(e, "map_cutoff", cfg.eval_map_cutoff, "evaluation", violations);
        if (e.contains("ap_denominator")) {
            const std::string denom = e.at("ap_denominator").is_string() ? e.at("ap_denominator").get<std::string>() : "?";
            if (denom == "retrieved")
                cfg.ap_denominator = ApDenominator::retrieved_relevant;
            else if (denom == "total")
                cfg.ap_denominator = ApDenominator::total_relevant;
            else
                violations.push_back("evaluation.ap_denominator: expected 'retrieved' or 'total'");
        }
    }
    if (doc.contains("methods")) {
        try {
            cfg.methods.clear();
            for (const auto& m : doc.at("methods")) cfg.methods.push_back(method_from_name(m.get<std::string>()));
        } catch (const Error& e) {
            violations.push_back(e.what());
        } catch (const nlohmann::json::exception&) {
            violations.push_back("methods: expected an array of method names");
        }
    }
    if (doc.contains("target_policy")) {
        const std::string policy = doc.at("target_policy").is_string() ? doc.at("target_policy").get<std::string>() : "?";
        if (policy == "random-different")
            cfg.target_policy = TargetPolicy::random_different;
        else if (policy == "fixed")
            cfg.target_policy = TargetPolicy::fixed;
        else if (policy == "open-set")
            cfg.target_policy = TargetPolicy::open_set;
        else
            violations.push_back("target_policy: expected random-different|fixed|open-set");
    }
    detail::read_field(doc, "fixed_target_class", cfg.fixed_target_class, "config", violations);
    detail::read_field(doc, "num_queries", cfg.num_queries, "config", violations);
    detail::read_field(doc, "seed", cfg.seed, "config", violations);
    detail::read_field(doc, "threads", cfg.threads, "config", violations);
    detail::read_field(doc, "store_trace", cfg.store_trace, "config", violations);

    try {
        cfg.validate();
    } catch (const Error& e) {
        if (violations.empty()) throw;
        violations.push_back(e.what());
    }
    if (!violations.empty()) {
        std::string msg = "configuration invalid:";
        for (const auto& v : violations) msg += "\n  - " + v;
        raise(Errc::invalid_config, msg);
    }
    return cfg;
}

inline ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(io::read_file(path));
    } catch (const nlohmann::json::exception& e) {
        raise(Errc::invalid_config, path.string() + ": not valid JSON: " + std::string(e.what()));
    }
    return from_json(doc);
}

inline nlohmann::ordered_json ExperimentConfig::to_json() const {
    nlohmann::ordered_json schedule = nlohmann::ordered_json::array();
    for (const AlphaStage& s : attack.alpha_schedule)
        schedule.push_back(nlohmann::ordered_json::array({s.start_iteration, s.alpha}));
    nlohmann::ordered_json methods_json = nlohmann::ordered_json::array();
    for (Method m : methods) methods_json.push_back(method_name(m));
    nlohmann::ordered_json doc{
        {"dataset", io::spec_to_json(dataset)},
        {"bits", bits},
        {"model",
         {{"hidden_dims", hidden_dims},
          {"extractor_dim", extractor_dim},
          {"extractor_gain", extractor_gain},
          {"output_scale", output_scale}}},
        {"train",
         {{"epochs", train.epochs},
          {"batch_size", train.batch_size},
          {"learning_rate", train.learning_rate},
          {"quantization_weight", train.quantization_weight},
          {"seed", train.seed}}},
        {"attack",
         {{"epsilon", attack.epsilon},
          {"iterations", attack.iterations},
          {"step_size", attack.step_size},
          {"alpha_schedule", schedule},
          {"n_t", attack.n_t}}},
        {"evaluation",
         {{"cutoff", eval_cutoff},
          {"map_cutoff", eval_map_cutoff},
          {"ap_denominator", ap_denominator == ApDenominator::retrieved_relevant ? "retrieved" : "total"}}},
        {"methods", methods_json},
        {"target_policy", target_policy_name(target_policy)},
        {"fixed_target_class", fixed_target_class},
        {"num_queries", num_queries},
        {"seed", seed},
        {"threads", threads},
        {"store_trace", store_trace}};
    if (!dataset_path.empty()) doc["dataset_path"] = dataset_path;
    return doc;
}

/// Runs fn(0..n-1) on a bounded worker pool; any worker exception is
/// rethrown after join. Work items must not share mutable state.
inline void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
    int workers = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
    workers = std::max(1, std::min<int>(workers, static_cast<int>(n)));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr first_error;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                    return;
                }
            }
        });
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

// ---- stage plumbing ----

namespace paths {
inline std::filesystem::path dataset(const std::filesystem::path& out) { return out / "dataset.hsd"; }
inline std::filesystem::path bits_dir(const std::filesystem::path& out, std::size_t k) {
    return out / ("bits" + std::to_string(k));
}
inline std::filesystem::path model(const std::filesystem::path& out, std::size_t k) {
    return bits_dir(out, k) / "model.json";
}
inline std::filesystem::path loss_trace(const std::filesystem::path& out, std::size_t k) {
    return bits_dir(out, k) / "loss_trace.csv";
}
inline std::filesystem::path codes(const std::filesystem::path& out, std::size_t k) {
    return bits_dir(out, k) / "database_codes.hsc";
}
inline std::filesystem::path attacks(const std::filesystem::path& out, std::size_t k, Method m) {
    return bits_dir(out, k) / ("attacks_" + std::string(method_name(m)) + ".jsonl");
}
inline std::filesystem::path eval(const std::filesystem::path& out, std::size_t k, Method m) {
    return bits_dir(out, k) / ("eval_" + std::string(method_name(m)) + ".json");
}
inline std::filesystem::path curve(const std::filesystem::path& out, std::size_t k, Method m) {
    return bits_dir(out, k) / ("curve_" + std::string(method_name(m)) + ".csv");
}
inline std::filesystem::path report_md(const std::filesystem::path& out) { return out / "report.md"; }
inline std::filesystem::path report_csv(const std::filesystem::path& out) { return out / "report.csv"; }
inline std::filesystem::path timings(const std::filesystem::path& out) { return out / "timings.json"; }
} // namespace paths

namespace detail {

inline void require_artifact(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) raise(Errc::missing_artifact, "expected artifact at " + path.string());
}

inline std::filesystem::path dataset_file(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
    return cfg.dataset_path.empty() ? paths::dataset(out_dir) : std::filesystem::path(cfg.dataset_path);
}

/// Wall-clock bookkeeping sidecar; intentionally outside the report tables so
/// repeated runs stay byte-identical where determinism is promised.
class StageTimer {
public:
    StageTimer(std::filesystem::path out_dir, std::string key)
        : out_dir_(std::move(out_dir)), key_(std::move(key)), start_(std::chrono::steady_clock::now()) {}

    ~StageTimer() {
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        try {
            nlohmann::ordered_json doc = nlohmann::ordered_json::object();
            const auto path = paths::timings(out_dir_);
            if (std::filesystem::exists(path)) doc = nlohmann::ordered_json::parse(io::read_file(path));
            doc[key_] = seconds;
            io::atomic_write(path, doc.dump(2) + "\n");
        } catch (...) {
            // timing bookkeeping must never fail a stage
        }
    }

private:
    std::filesystem::path out_dir_;
    std::string key_;
    std::chrono::steady_clock::time_point start_;
};

/// Benign query selection: uniform without replacement from the query split.
/// Under the open-set policy, queries carrying a held-out class label are
/// excluded from the pool (held-out classes exist only as attack targets).
inline std::vector<std::size_t> select_queries(const Database& db, std::size_t count, std::uint64_t seed,
                                               bool exclude_open_set_queries = false) {
    std::vector<std::size_t> pool = db.indices_of(Split::query);
    if (exclude_open_set_queries) {
        std::vector<std::size_t> kept;
        for (std::size_t i : pool) {
            bool open = false;
            for (std::size_t c = db.spec.trained_classes(); c < db.spec.classes; ++c)
                open |= db.records[i].label[c] != 0;
            if (!open) kept.push_back(i);
        }
        pool = std::move(kept);
    }
    if (pool.empty()) raise(Errc::empty_database, "dataset has no eligible query-split records");
    const std::size_t take = std::min(count, pool.size());
    Rng rng(seed);
    for (std::size_t i = 0; i < take; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.bounded(pool.size() - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(take);
    std::sort(pool.begin(), pool.end()); // stable query order in all artifacts
    return pool;
}

/// Picks the target class for one query under the configured policy; the
/// chosen label never shares a positive component with the query's label.
inline Label pick_target_label(const ExperimentConfig& cfg, const Label& query_label, std::uint64_t seed) {
    const std::size_t classes = cfg.dataset.classes;
    std::vector<std::size_t> candidates;
    const std::size_t first = cfg.target_policy == TargetPolicy::open_set ? cfg.dataset.trained_classes() : 0;
    for (std::size_t c = first; c < classes; ++c)
        if (!query_label[c]) candidates.push_back(c);
    if (cfg.target_policy == TargetPolicy::fixed) {
        candidates.clear();
        if (!query_label[cfg.fixed_target_class]) candidates.push_back(cfg.fixed_target_class);
    }
    if (candidates.empty())
        raise(Errc::target_label_absent, "no admissible target class for a query under the configured policy");
    Rng rng(seed);
    return one_hot(candidates[rng.bounded(candidates.size())], classes);
}

} // namespace detail

// ---- pipeline stages ----

inline void cmd_generate(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
    cfg.validate();
    std::filesystem::create_directories(out_dir);
    if (!cfg.dataset_path.empty()) {
        // External dataset: nothing to synthesize, just check it is readable.
        detail::require_artifact(cfg.dataset_path);
        return;
    }
    detail::StageTimer timer(out_dir, "generate");
    const Database db = generate(cfg.dataset, derive_seed(cfg.seed, "dataset"));
    io::save_dataset(db, paths::dataset(out_dir));
}

inline void cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
    cfg.validate();
    detail::require_artifact(detail::dataset_file(cfg, out_dir));
    const Database db = io::load_dataset(detail::dataset_file(cfg, out_dir));
    for (std::size_t k : cfg.bits) {
        detail::StageTimer timer(out_dir, "train.bits" + std::to_string(k));
        std::filesystem::create_directories(paths::bits_dir(out_dir, k));
        std::vector<std::size_t> dims{db.feature_dim};
        dims.insert(dims.end(), cfg.hidden_dims.begin(), cfg.hidden_dims.end());
        dims.push_back(k);
        HashModel model(dims, derive_seed(cfg.seed, "init", k), cfg.extractor_dim, cfg.extractor_gain,
                        cfg.output_scale);
        TrainConfig train_cfg = cfg.train;
        train_cfg.seed = derive_seed(cfg.seed, "train", k);
        const std::vector<double> trace = train(model, db, train_cfg);
        io::save_model(model, paths::model(out_dir, k));
        io::save_loss_trace_csv(trace, paths::loss_trace(out_dir, k));
    }
}

inline void cmd_index(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
    cfg.validate();
    detail::require_artifact(detail::dataset_file(cfg, out_dir));
    const Database db = io::load_dataset(detail::dataset_file(cfg, out_dir));
    for (std::size_t k : cfg.bits) {
        detail::require_artifact(paths::model(out_dir, k));
        detail::StageTimer timer(out_dir, "index.bits" + std::to_string(k));
        const HashModel model = io::load_model(paths::model(out_dir, k));
        io::save_codes(build_index(db, model), paths::codes(out_dir, k));
    }
}

inline void cmd_attack(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
    cfg.validate();
    detail::require_artifact(detail::dataset_file(cfg, out_dir));
    const Database db = io::load_dataset(detail::dataset_file(cfg, out_dir));
    const std::vector<std::size_t> query_ids =
        detail::select_queries(db, cfg.num_queries, derive_seed(cfg.seed, "queries"),
                               cfg.target_policy == TargetPolicy::open_set);

    for (std::size_t k : cfg.bits) {
        detail::require_artifact(paths::model(out_dir, k));
        detail::require_artifact(paths::codes(out_dir, k));
        const HashModel model = io::load_model(paths::model(out_dir, k));
        const CodeIndex index = io::load_codes(paths::codes(out_dir, k));

        // Targets are derived per dataset query id, so runs with more queries
        // keep earlier queries' targets unchanged.
        std::vector<Label> targets(query_ids.size());
        for (std::size_t i = 0; i < query_ids.size(); ++i)
            targets[i] = detail::pick_target_label(cfg, db.records[query_ids[i]].label,
                                                   derive_seed(cfg.seed, "target", query_ids[i]));

        for (Method method : cfg.methods) {
            detail::StageTimer timer(out_dir,
                                     "attack." + std::string(method_name(method)) + ".bits" + std::to_string(k));
            std::vector<io::AttackRecord> records(query_ids.size());
            parallel_for(query_ids.size(), cfg.threads, [&](std::size_t i) {
                const std::size_t qid = query_ids[i];
                const Record& rec = db.records[qid];
                AttackConfig attack_cfg = cfg.attack;
                attack_cfg.seed = derive_seed(cfg.seed, "sample", qid);

                io::AttackRecord out;
                out.query_index = qid;
                out.method = method_name(method);
                out.original_label = rec.label;
                out.epsilon = attack_cfg.epsilon;
                out.n_t = method == Method::p2p ? 1 : attack_cfg.n_t;
                out.iterations = attack_cfg.iterations;
                switch (method) {
                    case Method::original: {
                        out.result.original = rec.features;
                        out.result.adversarial = rec.features;
                        out.result.target_label = targets[i];
                        out.result.perceptibility = 0.0;
                        break;
                    }
                    case Method::noise: {
                        out.result = noise_baseline(rec.features, attack_cfg,
                                                    derive_seed(cfg.seed, "noise", qid));
                        out.result.target_label = targets[i];
                        break;
                    }
                    case Method::p2p: {
                        out.result = p2p(rec.features, targets[i], index, model, attack_cfg);
                        break;
                    }
                    case Method::dhta: {
                        out.result = dhta(rec.features, targets[i], index, model, attack_cfg);
                        break;
                    }
                }
                if (out.result.final_code.empty()) out.result.final_code = model.code(out.result.adversarial);
                records[i] = std::move(out);
            });
            io::save_attack_records(records, cfg.store_trace, paths::attacks(out_dir, k, method));
        }
    }
}

inline void cmd_evaluate(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
    cfg.validate();
    for (std::size_t k : cfg.bits) {
        detail::require_artifact(paths::model(out_dir, k));
        detail::require_artifact(paths::codes(out_dir, k));
        const HashModel model = io::load_model(paths::model(out_dir, k));
        const CodeIndex index = io::load_codes(paths::codes(out_dir, k));
        const std::size_t cutoff = cfg.eval_cutoff == 0 ? index.size() : std::min(cfg.eval_cutoff, index.size());
        const std::size_t map_cutoff =
            cfg.eval_map_cutoff == 0 ? index.size() : std::min(cfg.eval_map_cutoff, index.size());

        for (Method method : cfg.methods) {
            detail::require_artifact(paths::attacks(out_dir, k, method));
            detail::StageTimer timer(out_dir,
                                     "evaluate." + std::string(method_name(method)) + ".bits" + std::to_string(k));
            const std::vector<io::AttackRecord> records = io::load_attack_records(paths::attacks(out_dir, k, method), k);
            if (records.empty()) raise(Errc::corrupt_file, "no attack records for " + std::string(method_name(method)));

            std::vector<AttackResult> results;
            std::vector<Record> own_label_queries;
            results.reserve(records.size());
            for (const auto& rec : records) {
                results.push_back(rec.result);
                own_label_queries.push_back(Record{rec.result.adversarial, rec.original_label});
            }

            const EvalReport targeted = t_map(results, index, model, cutoff, cfg.ap_denominator);
            const EvalReport own = map_original(own_label_queries, index, model, map_cutoff, cfg.ap_denominator);

            // PR/precision curves: attack methods judged by target label, the
            // benign baseline by the query's own label.
            std::vector<RankedList> rankings;
            std::vector<RelevanceJudger> judgers;
            for (const auto& rec : records) {
                rankings.push_back(query(index, model.code(rec.result.adversarial), cutoff));
                judgers.push_back(RelevanceJudger{method == Method::original ? rec.original_label
                                                                             : rec.result.target_label});
            }
            const PrCurve curve = pr_curve(rankings, judgers, index.labels, cutoff);
            if (curve.excluded_queries > 0)
                std::cerr << "warning: " << curve.excluded_queries
                          << " query(ies) have no relevant database item for " << method_name(method)
                          << ": they contribute AP 0 to the mean and are excluded from the PR curve\n";
            io::save_curve_csv(curve, paths::curve(out_dir, k, method));

            nlohmann::ordered_json doc{
                {"method", method_name(method)},
                {"bits", k},
                {"cutoff", cutoff},
                {"map_cutoff", map_cutoff},
                {"epsilon", cfg.attack.epsilon},
                {"n_t", method == Method::p2p ? 1 : cfg.attack.n_t},
                {"iterations", cfg.attack.iterations},
                {"num_queries", records.size()},
                {"query_selection", "uniform-without-replacement"},
                {"ap_denominator", cfg.ap_denominator == ApDenominator::retrieved_relevant ? "retrieved" : "total"},
                {"t_map", targeted.mean_ap},
                {"map_original_labels", own.mean_ap},
                {"per_query_t_ap", targeted.per_query_ap},
                {"per_query_map_ap", own.per_query_ap},
                {"pr_excluded_queries", curve.excluded_queries}};
            io::atomic_write(paths::eval(out_dir, k, method), doc.dump(2) + "\n");
        }
    }
}

inline void cmd_report(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
    cfg.validate();
    detail::StageTimer timer(out_dir, "report");

    // method -> bits -> (t_map, map)
    std::vector<std::vector<std::pair<double, double>>> table(cfg.methods.size());
    for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
        for (std::size_t k : cfg.bits) {
            const auto path = paths::eval(out_dir, k, cfg.methods[mi]);
            detail::require_artifact(path);
            nlohmann::json doc;
            try {
                doc = nlohmann::json::parse(io::read_file(path));
            } catch (const nlohmann::json::exception& e) {
                raise(Errc::corrupt_file, path.string() + ": " + std::string(e.what()));
            }
            table[mi].emplace_back(doc.at("t_map").get<double>(), doc.at("map_original_labels").get<double>());
        }
    }

    auto pct = [](double v) { return io::format_fixed(100.0 * v, 2); };

    std::string md;
    md += "# Attack report\n\n";
    md += "Synthetic benchmark: " + std::to_string(cfg.dataset.classes) + " classes, feature_dim " +
          std::to_string(cfg.dataset.feature_dim) + ", blob_std " + io::format_fixed(cfg.dataset.blob_std, 4) +
          ", " + std::to_string(cfg.num_queries) + " benign queries (uniform without replacement), seed " +
          std::to_string(cfg.seed) + ".\n";
    md += "Attack: epsilon " + io::format_fixed(cfg.attack.epsilon, 4) + ", n_t " + std::to_string(cfg.attack.n_t) +
          " (P2P forces 1), " + std::to_string(cfg.attack.iterations) + " iterations, target policy " +
          std::string(target_policy_name(cfg.target_policy)) + ".\n\n";

    auto write_table = [&](const std::string& title, bool use_t_map) {
        md += "## " + title + "\n\n| Method |";
        for (std::size_t k : cfg.bits) md += " " + std::to_string(k) + " bits |";
        md += "\n|---|";
        for (std::size_t i = 0; i < cfg.bits.size(); ++i) md += "---|";
        md += "\n";
        for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
            md += "| " + std::string(method_name(cfg.methods[mi])) + " |";
            for (std::size_t ki = 0; ki < cfg.bits.size(); ++ki)
                md += " " + pct(use_t_map ? table[mi][ki].first : table[mi][ki].second) + " |";
            md += "\n";
        }
        md += "\n";
    };
    write_table("t-MAP (%) judged against the target label", true);
    write_table("MAP (%) judged against the original label", false);
    io::atomic_write(paths::report_md(out_dir), md);

    std::string csv = "method,metric,bits,value_percent\n";
    for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi)
        for (std::size_t ki = 0; ki < cfg.bits.size(); ++ki) {
            csv += std::string(method_name(cfg.methods[mi])) + ",t_map," + std::to_string(cfg.bits[ki]) + "," +
                   pct(table[mi][ki].first) + "\n";
            csv += std::string(method_name(cfg.methods[mi])) + ",map," + std::to_string(cfg.bits[ki]) + "," +
                   pct(table[mi][ki].second) + "\n";
        }
    io::atomic_write(paths::report_csv(out_dir), csv);
}

/// Convenience wrapper used by tests: the whole protocol end to end.
inline void run_pipeline(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
    cmd_generate(cfg, out_dir);
    cmd_train(cfg, out_dir);
    cmd_index(cfg, out_dir);
    cmd_attack(cfg, out_dir);
    cmd_evaluate(cfg, out_dir);
    cmd_report(cfg, out_dir);
}

} // namespace hat
