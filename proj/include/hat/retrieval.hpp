#pragma once

#include <cstdint>
#include <vector>

#include "hat/bit_code.hpp"
#include "hat/data.hpp"
#include "hat/error.hpp"
#include "hat/model.hpp"

namespace hat {

/// Hashed view of the database split: code + label per object, positions are
/// the stable original order. Immutable once built; queries are thread-safe.
struct CodeIndex {
    std::vector<BitCode> codes;
    std::vector<Label> labels;
    std::size_t bits = 0;

    std::size_t size() const { return codes.size(); }
};

struct RankedEntry {
    std::uint32_t index;    // position in the index
    std::uint32_t distance; // exact Hamming distance to the query code
};

/// Ranking with non-decreasing distances; ties ordered by ascending index.
using RankedList = std::vector<RankedEntry>;

/// Hashes every record of the chosen split (default: database) into an index.
inline CodeIndex build_index(const Database& db, const HashModel& model, Split split = Split::database) {
    const auto indices = db.indices_of(split);
    if (indices.empty()) raise(Errc::empty_database, "no records in the requested split");
    CodeIndex index;
    index.bits = model.bits();
    index.codes.reserve(indices.size());
    index.labels.reserve(indices.size());
    for (std::size_t i : indices) {
        index.codes.push_back(model.code(db.records[i].features));
        index.labels.push_back(db.records[i].label);
    }
    return index;
}

/// Exhaustive Hamming ranking: top-min(M, N) entries by ascending distance,
/// ties by ascending index. Bucket sort over distances keeps it exact and O(N + K).
inline RankedList query(const CodeIndex& index, const BitCode& q, std::size_t m) {
    if (q.length() != index.bits) raise(Errc::length_mismatch, "query code length does not match index");
    if (m < 1) raise(Errc::invalid_cutoff, "M must be >= 1");

    std::vector<std::vector<std::uint32_t>> buckets(index.bits + 1);
    for (std::uint32_t i = 0; i < index.size(); ++i)
        buckets[static_cast<std::size_t>(hamming(q, index.codes[i]))].push_back(i);

    RankedList ranked;
    const std::size_t take = std::min(m, index.size());
    ranked.reserve(take);
    for (std::uint32_t d = 0; d <= index.bits && ranked.size() < take; ++d)
        for (std::uint32_t i : buckets[d]) {
            ranked.push_back(RankedEntry{i, d});
            if (ranked.size() == take) break;
        }
    return ranked;
}

} // namespace hat
