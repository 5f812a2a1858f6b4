#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "hat/error.hpp"
#include "hat/rng.hpp"

namespace hat {

/// Binary label vector of length C; label[c] == 1 means membership in class c.
using Label = std::vector<std::uint8_t>;

/// Relevance rule shared across the toolkit: two labels match when they share
/// at least one positive component (reduces to equality for one-hot labels).
inline bool labels_match(const Label& a, const Label& b) {
    const std::size_t n = std::min(a.size(), b.size());
    for (std::size_t c = 0; c < n; ++c)
        if (a[c] && b[c]) return true;
    return false;
}

inline Label one_hot(std::size_t cls, std::size_t num_classes) {
    Label label(num_classes, 0);
    label[cls] = 1;
    return label;
}

struct Record {
    std::vector<double> features; // in [0,1]^d
    Label label;                  // length C, >= 1 positive component
};

enum class Split { train, database, query };

inline const char* split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::database: return "database";
        case Split::query: return "query";
    }
    return "?";
}

/// Parameters of the synthetic Gaussian-blob dataset. Classes are isotropic
/// blobs around seeded centers in [0.2, 0.8]^d, clamped to [0,1]. The last
/// `open_set_classes` classes never appear in the training split.
struct SyntheticSpec {
    std::size_t classes = 10;
    std::size_t feature_dim = 32;
    std::size_t train_per_class = 100;
    std::size_t database_per_class = 100;
    std::size_t query_per_class = 10;
    double blob_std = 0.05;
    double multi_label_prob = 0.0;
    std::size_t open_set_classes = 0;

    void validate() const {
        if (classes < 2) raise(Errc::invalid_spec, "classes must be >= 2");
        if (feature_dim == 0) raise(Errc::invalid_spec, "feature_dim must be >= 1");
        if (database_per_class == 0 || query_per_class == 0)
            raise(Errc::invalid_spec, "database/query per-class counts must be positive");
        if (blob_std < 0.0) raise(Errc::invalid_spec, "blob_std must be >= 0");
        if (multi_label_prob < 0.0 || multi_label_prob > 1.0)
            raise(Errc::invalid_spec, "multi_label_prob must be in [0,1]");
        if (open_set_classes >= classes) raise(Errc::invalid_spec, "open_set_classes must leave >= 1 trained class");
        if (open_set_classes == 0 && train_per_class == 0)
            raise(Errc::invalid_spec, "train_per_class must be positive");
    }

    std::size_t trained_classes() const { return classes - open_set_classes; }
};

/// Labeled feature collection with train/database/query split tags. Carries
/// its generation provenance (spec + seed) so persisted datasets are
/// self-describing.
struct Database {
    std::size_t feature_dim = 0;
    std::size_t num_classes = 0;
    std::vector<Record> records;
    std::vector<Split> split; // parallel to records
    SyntheticSpec spec;
    std::uint64_t seed = 0;

    std::size_t size() const { return records.size(); }

    std::vector<std::size_t> indices_of(Split s) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < split.size(); ++i)
            if (split[i] == s) out.push_back(i);
        return out;
    }

    std::size_t count_of(Split s) const {
        std::size_t n = 0;
        for (Split tag : split) n += tag == s;
        return n;
    }
};

namespace detail {
inline std::vector<std::vector<double>> place_centers(const SyntheticSpec& spec, Rng& rng) {
    const double min_gap = 4.0 * spec.blob_std;
    std::vector<std::vector<double>> centers;
    centers.reserve(spec.classes);
    int attempts = 0;
    while (centers.size() < spec.classes) {
        if (++attempts > 100000)
            raise(Errc::invalid_spec, "could not place blob centers >= 4*sigma apart; lower blob_std");
        std::vector<double> center(spec.feature_dim);
        for (double& v : center) v = rng.uniform(0.2, 0.8);
        bool ok = true;
        for (const auto& other : centers) {
            double sq = 0.0;
            for (std::size_t d = 0; d < center.size(); ++d) {
                const double diff = center[d] - other[d];
                sq += diff * diff;
            }
            if (std::sqrt(sq) < min_gap) {
                ok = false;
                break;
            }
        }
        if (ok) centers.push_back(std::move(center));
    }
    return centers;
}
} // namespace detail

/// Deterministic synthetic dataset: features are clamp(center_c + N(0, s^2 I), 0, 1).
/// Multi-label mode adds one extra class label with the configured probability;
/// training-split records never receive open-set labels.
inline Database generate(const SyntheticSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    const auto centers = detail::place_centers(spec, rng);

    Database db;
    db.feature_dim = spec.feature_dim;
    db.num_classes = spec.classes;
    db.spec = spec;
    db.seed = seed;

    auto emit = [&](Split split_tag, std::size_t cls, std::size_t count) {
        for (std::size_t n = 0; n < count; ++n) {
            Record rec;
            rec.features.resize(spec.feature_dim);
            for (std::size_t d = 0; d < spec.feature_dim; ++d)
                rec.features[d] = std::clamp(centers[cls][d] + spec.blob_std * rng.next_normal(), 0.0, 1.0);
            rec.label = one_hot(cls, spec.classes);
            if (spec.multi_label_prob > 0.0 && rng.next_unit() < spec.multi_label_prob) {
                // Extra labels for train records stay within the trained classes.
                const std::size_t pool = split_tag == Split::train ? spec.trained_classes() : spec.classes;
                if (pool > 1) {
                    std::size_t extra = rng.bounded(pool - 1);
                    if (extra >= cls) ++extra;
                    rec.label[extra] = 1;
                }
            }
            db.records.push_back(std::move(rec));
            db.split.push_back(split_tag);
        }
    };

    for (std::size_t c = 0; c < spec.trained_classes(); ++c) emit(Split::train, c, spec.train_per_class);
    for (std::size_t c = 0; c < spec.classes; ++c) emit(Split::database, c, spec.database_per_class);
    for (std::size_t c = 0; c < spec.classes; ++c) emit(Split::query, c, spec.query_per_class);
    return db;
}

} // namespace hat
