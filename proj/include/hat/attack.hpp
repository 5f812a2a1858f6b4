#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hat/anchor.hpp"
#include "hat/bit_code.hpp"
#include "hat/error.hpp"
#include "hat/model.hpp"
#include "hat/retrieval.hpp"
#include "hat/rng.hpp"

namespace hat {

/// One stage of the tanh sharpness schedule: alpha applies from
/// start_iteration until the next stage begins.
struct AlphaStage {
    int start_iteration = 0;
    double alpha = 0.1;

    friend bool operator==(const AlphaStage&, const AlphaStage&) = default;
};

/// Schedule used for 2000-iteration image attacks: 0.1 for the first half,
/// then stepped every 200 iterations through 0.2, 0.3, 0.5, 0.7, 1.0.
inline std::vector<AlphaStage> default_alpha_schedule() {
    return {{0, 0.1}, {1000, 0.2}, {1200, 0.3}, {1400, 0.5}, {1600, 0.7}, {1800, 1.0}};
}

struct AttackConfig {
    double epsilon = 0.032; // l-inf budget on [0,1]-normalized features
    int iterations = 2000;
    double step_size = 1.0;
    std::vector<AlphaStage> alpha_schedule = default_alpha_schedule();
    int n_t = 9;
    std::uint64_t seed = 0;

    void validate() const {
        if (epsilon < 0.0 || !std::isfinite(epsilon)) raise(Errc::invalid_config, "epsilon must be >= 0");
        if (iterations < 1) raise(Errc::invalid_config, "iterations must be >= 1");
        if (!(step_size > 0.0)) raise(Errc::invalid_config, "step_size must be > 0");
        if (n_t < 1) raise(Errc::invalid_config, "n_t must be >= 1");
        if (alpha_schedule.empty()) raise(Errc::invalid_config, "alpha_schedule must be non-empty");
        if (alpha_schedule.front().start_iteration != 0)
            raise(Errc::invalid_config, "alpha_schedule must start at iteration 0");
        int prev = -1;
        for (const AlphaStage& stage : alpha_schedule) {
            if (stage.start_iteration <= prev)
                raise(Errc::invalid_config, "alpha_schedule start_iterations must be strictly increasing");
            if (!(stage.alpha > 0.0) || stage.alpha > 1.0)
                raise(Errc::invalid_config, "alpha values must lie in (0, 1]");
            prev = stage.start_iteration;
        }
    }

    double alpha_at(int iteration) const {
        double alpha = alpha_schedule.front().alpha;
        for (const AlphaStage& stage : alpha_schedule) {
            if (stage.start_iteration > iteration) break;
            alpha = stage.alpha;
        }
        return alpha;
    }

    /// Video-retrieval preset: 500 iterations with alpha fixed at 0.1.
    static AttackConfig video_defaults() {
        AttackConfig cfg;
        cfg.iterations = 500;
        cfg.alpha_schedule = {{0, 0.1}};
        return cfg;
    }
};

struct AttackResult {
    std::vector<double> adversarial;
    std::vector<double> original;
    Label target_label;
    std::optional<BitCode> anchor;
    BitCode final_code;             // empty until a model hashes the adversarial
    int hamming_to_anchor = -1;     // -1 when no anchor applies (noise/original)
    double perceptibility = 0.0;
    std::vector<double> objective_trace;
    double best_objective = 0.0;
    int best_iteration = -1;
    double best_alpha = 0.0;
};

/// Test/diagnostic hook called once per iteration with the iterate the
/// objective was evaluated at.
using AttackObserver =
    std::function<void(int iteration, double alpha, std::span<const double> iterate, double objective)>;

/// Root-mean-square perturbation sqrt((1/n) * ||x' - x||_2^2) over
/// [0,1]-scaled features; <= epsilon whenever ||x' - x||_inf <= epsilon.
inline double perceptibility(std::span<const double> x, std::span<const double> x_prime) {
    if (x.size() != x_prime.size()) raise(Errc::dim_mismatch, "perceptibility over vectors of different dims");
    double sq = 0.0;
    for (std::size_t d = 0; d < x.size(); ++d) {
        const double diff = x_prime[d] - x[d];
        sq += diff * diff;
    }
    return std::sqrt(sq / static_cast<double>(x.size()));
}

/// Codes of min(n_t, available) distinct database objects with the target
/// label, sampled uniformly without replacement; deterministic per seed.
inline CodeSet select_target_set(const CodeIndex& index, const Label& target_label, int n_t, std::uint64_t seed) {
    if (n_t < 1) raise(Errc::invalid_argument, "n_t must be >= 1");
    std::vector<std::size_t> matching;
    for (std::size_t i = 0; i < index.size(); ++i)
        if (labels_match(index.labels[i], target_label)) matching.push_back(i);
    if (matching.empty()) raise(Errc::target_label_absent, "no database object carries the target label");

    const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(n_t), matching.size());
    Rng rng(seed);
    for (std::size_t i = 0; i < take; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.bounded(matching.size() - i));
        std::swap(matching[i], matching[j]);
    }
    std::vector<BitCode> codes;
    codes.reserve(take);
    for (std::size_t i = 0; i < take; ++i) codes.push_back(index.codes[matching[i]]);
    return CodeSet(std::move(codes));
}

namespace detail {
inline void check_unit_box(std::span<const double> x) {
    for (double v : x) {
        if (!std::isfinite(v)) raise(Errc::non_finite_input, "query features contain NaN or Inf");
        if (v < 0.0 || v > 1.0) raise(Errc::invalid_argument, "query features must lie in [0,1]");
    }
}
} // namespace detail

/// Targeted attack toward the anchor code of a sampled target-label code set:
/// gradient descent on -(1/K) <h_a, tanh(alpha * f(x'))> with per-step
/// projection onto {||x' - x||_inf <= eps} intersected with [0,1]^d. Returns
/// the evaluated iterate with the lowest objective.
inline AttackResult dhta(std::span<const double> x, const Label& target_label, const CodeIndex& index,
                         const HashModel& model, const AttackConfig& cfg, const AttackObserver& observer = {}) {
    cfg.validate();
    detail::check_unit_box(x);
    if (index.bits != model.bits()) raise(Errc::dim_mismatch, "index code length does not match model bits");
    const CodeSet target_set = select_target_set(index, target_label, cfg.n_t, cfg.seed);
    const BitCode anchor = anchor_code(target_set);
    const std::size_t k = model.bits();
    const double inv_k = 1.0 / static_cast<double>(k);
    const std::vector<int> anchor_signs = anchor.unpack();

    std::vector<double> lo(x.size()), hi(x.size());
    for (std::size_t d = 0; d < x.size(); ++d) {
        lo[d] = std::max(0.0, x[d] - cfg.epsilon);
        hi[d] = std::min(1.0, x[d] + cfg.epsilon);
    }

    AttackResult result;
    result.original.assign(x.begin(), x.end());
    result.target_label = target_label;
    result.anchor = anchor;
    result.objective_trace.reserve(static_cast<std::size_t>(cfg.iterations));
    result.best_objective = std::numeric_limits<double>::infinity();

    std::vector<double> current(x.begin(), x.end());
    std::vector<double> best(current);
    std::vector<double> grad_z(k);
    for (int it = 0; it < cfg.iterations; ++it) {
        const double alpha = cfg.alpha_at(it);
        const HashModel::ForwardTrace trace = model.forward_trace(current);
        double objective = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            const double t = std::tanh(alpha * trace.output[j]);
            objective -= inv_k * anchor_signs[j] * t;
            grad_z[j] = -inv_k * anchor_signs[j] * alpha * (1.0 - t * t);
        }
        result.objective_trace.push_back(objective);
        if (observer) observer(it, alpha, current, objective);
        if (objective < result.best_objective) {
            result.best_objective = objective;
            result.best_iteration = it;
            result.best_alpha = alpha;
            best = current;
        }

        const std::vector<double> grad_x = model.input_gradient(trace, grad_z, current);
        for (std::size_t d = 0; d < current.size(); ++d)
            current[d] = std::clamp(current[d] - cfg.step_size * grad_x[d], lo[d], hi[d]);
    }

    result.adversarial = std::move(best);
    result.final_code = model.code(result.adversarial);
    result.hamming_to_anchor = hamming(result.final_code, anchor);
    result.perceptibility = perceptibility(x, result.adversarial);
    return result;
}

/// Point-to-point baseline: DHTA with a single sampled target code.
inline AttackResult p2p(std::span<const double> x, const Label& target_label, const CodeIndex& index,
                        const HashModel& model, const AttackConfig& cfg, const AttackObserver& observer = {}) {
    AttackConfig single = cfg;
    single.n_t = 1;
    return dhta(x, target_label, index, model, single, observer);
}

/// Additive uniform noise in U(-eps, +eps)^d, clamped back to [0,1]. Anchor
/// and target fields stay unset; callers attach label bookkeeping as needed.
inline AttackResult noise_baseline(std::span<const double> x, const AttackConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    detail::check_unit_box(x);
    Rng rng(seed);
    AttackResult result;
    result.original.assign(x.begin(), x.end());
    result.adversarial.resize(x.size());
    for (std::size_t d = 0; d < x.size(); ++d) {
        const double noise = rng.uniform(-cfg.epsilon, cfg.epsilon);
        result.adversarial[d] = std::clamp(x[d] + noise, 0.0, 1.0);
    }
    result.perceptibility = perceptibility(x, result.adversarial);
    return result;
}

} // namespace hat
