#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "hat/bit_code.hpp"
#include "hat/error.hpp"

namespace hat {

/// Non-empty multiset of equal-length codes (duplicates allowed: several
/// database objects may hash to the same code).
class CodeSet {
public:
    explicit CodeSet(std::vector<BitCode> codes) : codes_(std::move(codes)) {
        if (codes_.empty()) raise(Errc::empty_code_set, "code set must be non-empty");
        bits_ = codes_.front().length();
        for (const auto& c : codes_)
            if (c.length() != bits_) raise(Errc::length_mismatch, "code set mixes code lengths");
    }

    std::size_t size() const noexcept { return codes_.size(); }
    std::size_t bits() const noexcept { return bits_; }
    const BitCode& operator[](std::size_t i) const { return codes_[i]; }
    auto begin() const { return codes_.begin(); }
    auto end() const { return codes_.end(); }

private:
    std::vector<BitCode> codes_;
    std::size_t bits_ = 0;
};

/// Per-component counts of +1 and -1 entries across a code set.
/// plus_counts[j] + minus_counts[j] == set size for every j.
struct VoteTally {
    std::vector<int> plus_counts;
    std::vector<int> minus_counts;
};

/// Exact rational mean (numerator / denominator); avoids float rounding in
/// oracle comparisons. Denominator is always positive.
struct ExactMean {
    std::int64_t numerator = 0;
    std::int64_t denominator = 1;

    double value() const { return static_cast<double>(numerator) / static_cast<double>(denominator); }

    friend bool operator==(const ExactMean& a, const ExactMean& b) {
        return a.numerator * b.denominator == b.numerator * a.denominator;
    }
    friend bool operator<(const ExactMean& a, const ExactMean& b) {
        return a.numerator * b.denominator < b.numerator * a.denominator;
    }
    friend bool operator<=(const ExactMean& a, const ExactMean& b) { return a == b || a < b; }
};

/// Average Hamming distance from h0 to the members of the set, as an exact
/// rational with denominator |set|. Range [0, K].
inline ExactMean average_distance(const BitCode& h0, const CodeSet& set) {
    std::int64_t total = 0;
    for (const auto& h : set) total += hamming(h0, h);
    return ExactMean{total, static_cast<std::int64_t>(set.size())};
}

/// Counts, per component, how many set members carry +1 and how many -1.
inline VoteTally tally_votes(const CodeSet& set) {
    VoteTally tally;
    tally.plus_counts.assign(set.bits(), 0);
    tally.minus_counts.assign(set.bits(), 0);
    for (const auto& code : set)
        for (std::size_t j = 0; j < set.bits(); ++j)
            ++(code.sign_at(j) == 1 ? tally.plus_counts[j] : tally.minus_counts[j]);
    return tally;
}

/// Component-wise majority vote; ties go to +1. The result minimizes the sum
/// of Hamming distances to the set members over all of {+1,-1}^K.
inline BitCode anchor_code(const CodeSet& set) {
    const VoteTally tally = tally_votes(set);
    std::vector<int> signs(set.bits());
    for (std::size_t j = 0; j < set.bits(); ++j)
        signs[j] = tally.plus_counts[j] >= tally.minus_counts[j] ? 1 : -1;
    return BitCode::pack(signs);
}

struct BruteForceAnchor {
    BitCode code;
    std::int64_t minimal_sum = 0;
};

/// Exhaustive reference: scans all 2^K codes and returns a minimizer of the
/// distance sum (ties broken toward the numerically smallest bit pattern)
/// together with the minimal sum. Guarded to K <= 20.
inline BruteForceAnchor brute_force_anchor(const CodeSet& set) {
    const std::size_t k = set.bits();
    if (k > 20) raise(Errc::oracle_too_large, "exhaustive anchor search is limited to K <= 20");
    std::vector<std::uint32_t> members;
    members.reserve(set.size());
    for (const auto& code : set) members.push_back(static_cast<std::uint32_t>(code.words()[0]));

    std::uint32_t best_mask = 0;
    std::int64_t best_sum = std::numeric_limits<std::int64_t>::max();
    const std::uint32_t count = std::uint32_t{1} << k;
    for (std::uint32_t mask = 0; mask < count; ++mask) {
        std::int64_t sum = 0;
        for (std::uint32_t m : members) sum += std::popcount(mask ^ m);
        if (sum < best_sum) {
            best_sum = sum;
            best_mask = mask;
        }
    }
    return BruteForceAnchor{BitCode::from_bits(best_mask, k), best_sum};
}

} // namespace hat
