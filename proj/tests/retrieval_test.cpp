#include <gtest/gtest.h>

#include <algorithm>
#include <vector>

#include "hat/anchor.hpp"
#include "hat/data.hpp"
#include "hat/model.hpp"
#include "hat/retrieval.hpp"
#include "hat/rng.hpp"

namespace {

using hat::BitCode;
using hat::CodeIndex;
using hat::Database;
using hat::Errc;
using hat::Error;
using hat::HashModel;
using hat::RankedList;
using hat::Rng;
using hat::Split;

BitCode random_code(Rng& rng, std::size_t k) {
    std::vector<int> signs(k);
    for (int& s : signs) s = rng.next_u64() & 1 ? 1 : -1;
    return BitCode::pack(signs);
}

CodeIndex random_index(Rng& rng, std::size_t n, std::size_t k) {
    CodeIndex index;
    index.bits = k;
    for (std::size_t i = 0; i < n; ++i) {
        index.codes.push_back(random_code(rng, k));
        index.labels.push_back(hat::one_hot(rng.bounded(3), 3));
    }
    return index;
}

// Naive oracle: full sort by (distance, index).
RankedList naive_query(const CodeIndex& index, const BitCode& q, std::size_t m) {
    std::vector<std::pair<int, std::uint32_t>> order;
    for (std::uint32_t i = 0; i < index.size(); ++i) order.emplace_back(hamming(q, index.codes[i]), i);
    std::sort(order.begin(), order.end());
    RankedList out;
    for (std::size_t i = 0; i < std::min(m, order.size()); ++i)
        out.push_back({order[i].second, static_cast<std::uint32_t>(order[i].first)});
    return out;
}

TEST(BuildIndex, SingleObjectAndDeterminism) {
    hat::SyntheticSpec spec;
    spec.classes = 2;
    spec.feature_dim = 4;
    spec.train_per_class = 2;
    spec.database_per_class = 1;
    spec.query_per_class = 1;
    Database db = hat::generate(spec, 5);
    const HashModel model({4, 8}, 3);

    // database split has exactly 2 records (1 per class)
    const CodeIndex index = hat::build_index(db, model);
    EXPECT_EQ(index.size(), 2u);
    const CodeIndex again = hat::build_index(db, model);
    EXPECT_EQ(index.codes, again.codes);

    const auto db_indices = db.indices_of(Split::database);
    for (std::size_t i = 0; i < db_indices.size(); ++i)
        EXPECT_EQ(index.codes[i], model.code(db.records[db_indices[i]].features));
}

TEST(BuildIndex, EmptySplitRejected) {
    Database db;
    db.feature_dim = 2;
    db.num_classes = 2;
    db.records.push_back({{0.5, 0.5}, hat::one_hot(0, 2)});
    db.split.push_back(Split::train);
    const HashModel model({2, 4}, 1);
    try {
        hat::build_index(db, model); // no database-split records
        FAIL() << "expected EmptyDatabase";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::empty_database);
    }
}

TEST(Query, ExactMatchFirstAndSaturation) {
    Rng rng(7);
    CodeIndex index = random_index(rng, 20, 12);
    index.codes[5] = index.codes[13] = random_code(rng, 12); // duplicate codes

    const auto ranked = hat::query(index, index.codes[5], 4);
    ASSERT_GE(ranked.size(), 2u);
    EXPECT_EQ(ranked[0].index, 5u); // lowest index among exact matches
    EXPECT_EQ(ranked[0].distance, 0u);
    EXPECT_EQ(ranked[1].index, 13u);
    EXPECT_EQ(ranked[1].distance, 0u);

    const auto full = hat::query(index, index.codes[0], 500); // M > N returns all N
    EXPECT_EQ(full.size(), index.size());
}

TEST(Query, MatchesNaiveSortOracleIncludingTies) {
    Rng rng(11);
    for (int trial = 0; trial < 30; ++trial) {
        const CodeIndex index = random_index(rng, 100, 16);
        const BitCode q = random_code(rng, 16);
        const std::size_t m = 1 + rng.bounded(120);
        const RankedList fast = hat::query(index, q, m);
        const RankedList slow = naive_query(index, q, m);
        ASSERT_EQ(fast.size(), slow.size());
        for (std::size_t i = 0; i < fast.size(); ++i) {
            ASSERT_EQ(fast[i].index, slow[i].index);
            ASSERT_EQ(fast[i].distance, slow[i].distance);
        }
    }
}

TEST(Query, DistancesNonDecreasingAndExact) {
    Rng rng(13);
    const CodeIndex index = random_index(rng, 64, 24);
    const BitCode q = random_code(rng, 24);
    const RankedList ranked = hat::query(index, q, 64);
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        EXPECT_EQ(ranked[i].distance, static_cast<std::uint32_t>(hamming(q, index.codes[ranked[i].index])));
        if (i > 0) EXPECT_GE(ranked[i].distance, ranked[i - 1].distance);
    }
}

TEST(Query, LengthMismatchRejected) {
    Rng rng(17);
    const CodeIndex index = random_index(rng, 4, 8);
    try {
        hat::query(index, random_code(rng, 10), 2);
        FAIL() << "expected LengthMismatch";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::length_mismatch);
    }
}

// The anchor code of a code set attains the lowest mean distance to that set
// among all probed codes, observed through the retrieval surface.
TEST(Query, AnchorAttainsMinimalMeanDistanceOverSubIndex) {
    Rng rng(19);
    std::vector<BitCode> members;
    for (int i = 0; i < 7; ++i) members.push_back(random_code(rng, 10));
    const hat::CodeSet set{members};
    const BitCode anchor = hat::anchor_code(set);

    CodeIndex sub;
    sub.bits = 10;
    sub.codes = members;
    sub.labels.assign(members.size(), hat::one_hot(0, 1));

    auto mean_distance = [&](const BitCode& probe) {
        const RankedList ranked = hat::query(sub, probe, sub.size());
        double total = 0;
        for (const auto& e : ranked) total += e.distance;
        return total / static_cast<double>(ranked.size());
    };

    const double anchor_mean = mean_distance(anchor);
    for (const BitCode& member : members) EXPECT_LE(anchor_mean, mean_distance(member));
    for (int probe = 0; probe < 50; ++probe) EXPECT_LE(anchor_mean, mean_distance(random_code(rng, 10)));
}

} // namespace
