#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hat/bit_code.hpp"
#include "hat/data.hpp"
#include "hat/error.hpp"
#include "hat/rng.hpp"

namespace hat {

struct TrainConfig {
    int epochs = 60;
    int batch_size = 32;
    double learning_rate = 2e-4;
    double quantization_weight = 1e-3;
    std::uint64_t seed = 1;

    void validate() const {
        if (epochs < 0) raise(Errc::invalid_config, "epochs must be >= 0");
        if (batch_size < 2) raise(Errc::invalid_config, "batch_size must be >= 2");
        if (learning_rate < 0.0) raise(Errc::invalid_config, "learning_rate must be >= 0");
        if (quantization_weight < 0.0) raise(Errc::invalid_config, "quantization_weight must be >= 0");
    }
};

/// Fully-connected network x -> z with tanh on hidden layers and a linear
/// K-dimensional output head. Codes are sign(z) with sign(0) := +1.
///
/// An optional frozen random-feature extractor phi(x) = tanh(gain * We * (x - 0.5))
/// can precede the trainable stack; it stands in for the fixed high-gain
/// feature backbone of a production hashing model and is never updated by
/// training. With extractor_dim 0 the input feeds the first layer directly.
class HashModel {
public:
    HashModel() = default;

    /// Seeded init: weights uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)], zero biases.
    /// layer_dims covers the trainable stack: [input (or extractor) width, hidden..., K].
    HashModel(std::vector<std::size_t> layer_dims, std::uint64_t seed, std::size_t extractor_dim = 0,
              double extractor_gain = 1.0, double output_scale = 1.0)
        : dims_(std::move(layer_dims)), seed_(seed), extractor_dim_(extractor_dim), extractor_gain_(extractor_gain),
          output_scale_(output_scale) {
        if (dims_.size() < 2) raise(Errc::invalid_spec, "model needs at least input and output dimensions");
        for (std::size_t d : dims_)
            if (d == 0) raise(Errc::invalid_spec, "layer dimensions must be positive");
        if (extractor_dim_ > 0 && !(extractor_gain_ > 0.0))
            raise(Errc::invalid_spec, "extractor_gain must be > 0");
        if (!(output_scale_ > 0.0)) raise(Errc::invalid_spec, "output_scale must be > 0");
        Rng rng(seed);
        if (extractor_dim_ > 0) {
            // dims_.front() is the raw input width; the extractor expands it
            // and the first trainable layer consumes extractor_dim units.
            input_dim_ = dims_.front();
            const double bound = 1.0 / std::sqrt(static_cast<double>(input_dim_));
            extractor_weights_.resize(extractor_dim_ * input_dim_);
            for (double& w : extractor_weights_) w = rng.uniform(-bound, bound);
            dims_.front() = extractor_dim_;
        } else {
            input_dim_ = dims_.front();
        }
        weights_.resize(layers());
        biases_.resize(layers());
        for (std::size_t l = 0; l < layers(); ++l) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(dims_[l]));
            weights_[l].resize(dims_[l + 1] * dims_[l]);
            for (double& w : weights_[l]) w = rng.uniform(-bound, bound);
            biases_[l].assign(dims_[l + 1], 0.0);
        }
    }

    std::size_t layers() const { return dims_.size() - 1; }
    std::size_t input_dim() const { return input_dim_; }
    std::size_t bits() const { return dims_.back(); }
    const std::vector<std::size_t>& layer_dims() const { return dims_; }
    std::uint64_t seed() const { return seed_; }
    std::size_t extractor_dim() const { return extractor_dim_; }
    double extractor_gain() const { return extractor_gain_; }
    const std::vector<double>& extractor_weights() const { return extractor_weights_; }
    double output_scale() const { return output_scale_; }

    // Raw parameter access (row-major weight matrices), used by persistence
    // and by the training loop.
    std::vector<std::vector<double>>& weights() { return weights_; }
    std::vector<std::vector<double>>& biases() { return biases_; }
    const std::vector<std::vector<double>>& weights() const { return weights_; }
    const std::vector<std::vector<double>>& biases() const { return biases_; }

    static HashModel from_parameters(std::vector<std::size_t> dims, std::vector<std::vector<double>> weights,
                                     std::vector<std::vector<double>> biases, std::uint64_t seed,
                                     std::size_t raw_input_dim = 0, double extractor_gain = 1.0,
                                     std::vector<double> extractor_weights = {}, double output_scale = 1.0) {
        HashModel m;
        m.dims_ = std::move(dims);
        m.seed_ = seed;
        if (m.dims_.size() < 2) raise(Errc::invalid_spec, "model needs at least input and output dimensions");
        if (weights.size() != m.layers() || biases.size() != m.layers())
            raise(Errc::invalid_spec, "parameter count does not match layer_dims");
        for (std::size_t l = 0; l < m.layers(); ++l) {
            if (weights[l].size() != m.dims_[l + 1] * m.dims_[l] || biases[l].size() != m.dims_[l + 1])
                raise(Errc::invalid_spec, "parameter shape does not match layer_dims");
        }
        m.weights_ = std::move(weights);
        m.biases_ = std::move(biases);
        if (!(output_scale > 0.0)) raise(Errc::invalid_spec, "output_scale must be > 0");
        m.output_scale_ = output_scale;
        if (extractor_weights.empty()) {
            m.input_dim_ = m.dims_.front();
        } else {
            if (raw_input_dim == 0 || extractor_weights.size() != m.dims_.front() * raw_input_dim)
                raise(Errc::invalid_spec, "extractor shape does not match layer_dims");
            m.input_dim_ = raw_input_dim;
            m.extractor_dim_ = m.dims_.front();
            m.extractor_gain_ = extractor_gain;
            m.extractor_weights_ = std::move(extractor_weights);
        }
        return m;
    }

    /// Activations kept for backpropagation: extractor is the frozen-stage
    /// output (empty when disabled), hidden[l] is the tanh output of hidden
    /// layer l, output is the raw final pre-activation z.
    struct ForwardTrace {
        std::vector<double> extractor;
        std::vector<std::vector<double>> hidden;
        std::vector<double> output;
    };

    ForwardTrace forward_trace(std::span<const double> x) const {
        check_input(x);
        ForwardTrace trace;
        trace.hidden.reserve(layers() - 1);
        std::vector<double> current;
        if (extractor_dim_ > 0) {
            trace.extractor.resize(extractor_dim_);
            for (std::size_t e = 0; e < extractor_dim_; ++e) {
                const double* row = &extractor_weights_[e * input_dim_];
                double acc = 0.0;
                for (std::size_t d = 0; d < input_dim_; ++d) acc += row[d] * (x[d] - 0.5);
                trace.extractor[e] = std::tanh(extractor_gain_ * acc);
            }
            current = trace.extractor;
        } else {
            current.assign(x.begin(), x.end());
        }
        for (std::size_t l = 0; l < layers(); ++l) {
            std::vector<double> next = affine(l, current);
            if (l + 1 < layers()) {
                for (double& v : next) v = std::tanh(v);
                trace.hidden.push_back(next);
            } else {
                if (output_scale_ != 1.0)
                    for (double& v : next) v *= output_scale_;
                trace.output = std::move(next);
                return trace;
            }
            current = trace.hidden.back();
        }
        return trace; // unreachable; layers() >= 1
    }

    /// z = f(x): raw K-dimensional output.
    std::vector<double> forward(std::span<const double> x) const { return forward_trace(x).output; }

    /// Binary code sign(f(x)) with sign(0) := +1.
    BitCode code(std::span<const double> x) const {
        const std::vector<double> z = forward(x);
        std::vector<int> signs(z.size());
        for (std::size_t j = 0; j < z.size(); ++j) signs[j] = z[j] >= 0.0 ? 1 : -1;
        return BitCode::pack(signs);
    }

    /// tanh(alpha * f(x)), the differentiable surrogate of code(). alpha in (0,1].
    std::vector<double> relaxed_code(std::span<const double> x, double alpha) const {
        check_alpha(alpha);
        std::vector<double> z = forward(x);
        for (double& v : z) v = std::tanh(alpha * v);
        return z;
    }

    /// d<upstream, tanh(alpha*f(x))>/dx by exact backpropagation.
    std::vector<double> grad_wrt_input(std::span<const double> x, std::span<const double> upstream,
                                       double alpha) const {
        check_alpha(alpha);
        if (upstream.size() != bits()) raise(Errc::dim_mismatch, "upstream vector must have K entries");
        const ForwardTrace trace = forward_trace(x);
        std::vector<double> grad_z(bits());
        for (std::size_t j = 0; j < bits(); ++j) {
            const double t = std::tanh(alpha * trace.output[j]);
            grad_z[j] = upstream[j] * alpha * (1.0 - t * t);
        }
        return input_gradient(trace, grad_z, x);
    }

    /// Backpropagates a gradient w.r.t. the raw output z down to the input,
    /// reusing an existing forward trace.
    std::vector<double> input_gradient(const ForwardTrace& trace, std::span<const double> grad_output,
                                       std::span<const double> /*x*/) const {
        std::vector<double> grad(grad_output.begin(), grad_output.end());
        if (output_scale_ != 1.0)
            for (double& g : grad) g *= output_scale_;
        for (std::size_t l = layers(); l-- > 0;) {
            std::vector<double> prev(dims_[l], 0.0);
            const auto& w = weights_[l];
            const std::size_t out_dim = dims_[l + 1];
            const std::size_t in_dim = dims_[l];
            for (std::size_t o = 0; o < out_dim; ++o) {
                const double g = grad[o];
                const double* row = &w[o * in_dim];
                for (std::size_t i = 0; i < in_dim; ++i) prev[i] += row[i] * g;
            }
            if (l > 0) {
                const auto& act = trace.hidden[l - 1];
                for (std::size_t i = 0; i < in_dim; ++i) prev[i] *= 1.0 - act[i] * act[i];
            }
            grad = std::move(prev);
        }
        if (extractor_dim_ == 0) return grad;
        // Through the frozen stage: d phi_e / d x_d = (1 - phi_e^2) * gain * We[e,d].
        std::vector<double> grad_x(input_dim_, 0.0);
        for (std::size_t e = 0; e < extractor_dim_; ++e) {
            const double phi = trace.extractor[e];
            const double g = grad[e] * (1.0 - phi * phi) * extractor_gain_;
            const double* row = &extractor_weights_[e * input_dim_];
            for (std::size_t d = 0; d < input_dim_; ++d) grad_x[d] += g * row[d];
        }
        return grad_x;
    }

    bool parameters_finite() const {
        for (const auto& w : weights_)
            for (double v : w)
                if (!std::isfinite(v)) return false;
        for (const auto& b : biases_)
            for (double v : b)
                if (!std::isfinite(v)) return false;
        return true;
    }

private:
    void check_input(std::span<const double> x) const {
        if (x.size() != input_dim())
            raise(Errc::dim_mismatch,
                  "input has dim " + std::to_string(x.size()) + ", model expects " + std::to_string(input_dim()));
        for (double v : x)
            if (!std::isfinite(v)) raise(Errc::non_finite_input, "input contains NaN or Inf");
    }

    static void check_alpha(double alpha) {
        if (!(alpha > 0.0) || alpha > 1.0) raise(Errc::invalid_alpha, "alpha must lie in (0, 1]");
    }

    std::vector<double> affine(std::size_t l, const std::vector<double>& in) const {
        const std::size_t out_dim = dims_[l + 1];
        const std::size_t in_dim = dims_[l];
        std::vector<double> out(biases_[l]);
        const auto& w = weights_[l];
        for (std::size_t o = 0; o < out_dim; ++o) {
            const double* row = &w[o * in_dim];
            double acc = 0.0;
            for (std::size_t i = 0; i < in_dim; ++i) acc += row[i] * in[i];
            out[o] += acc;
        }
        return out;
    }

    std::vector<std::size_t> dims_;
    std::vector<std::vector<double>> weights_;
    std::vector<std::vector<double>> biases_;
    std::uint64_t seed_ = 0;
    std::size_t input_dim_ = 0;
    std::size_t extractor_dim_ = 0;
    double extractor_gain_ = 1.0;
    double output_scale_ = 1.0;
    std::vector<double> extractor_weights_; // row-major extractor_dim x input_dim
};

namespace detail {

inline bool has_dissimilar_pair(const std::vector<const Label*>& labels) {
    // Distinct label vectors are few; quadratic scan over the distinct set.
    std::vector<const Label*> distinct;
    for (const Label* l : labels) {
        bool seen = false;
        for (const Label* d : distinct)
            if (*d == *l) {
                seen = true;
                break;
            }
        if (!seen) distinct.push_back(l);
    }
    for (std::size_t a = 0; a < distinct.size(); ++a)
        for (std::size_t b = a + 1; b < distinct.size(); ++b)
            if (!labels_match(*distinct[a], *distinct[b])) return true;
    return false;
}

} // namespace detail

/// Trains the model on the train split with the pairwise code-similarity loss
///   L = sum_{i<j in batch} ((1/K) <tanh(z_i), tanh(z_j)> - s_ij)^2
///     + lambda_q * sum_i || |tanh(z_i)| - 1 ||^2,
/// s_ij = +1 when the labels share a class, -1 otherwise. Plain mini-batch
/// gradient descent, seeded shuffling, fixed reduction order. Returns the
/// per-epoch mean batch loss.
inline std::vector<double> train(HashModel& model, const Database& db, const TrainConfig& cfg) {
    cfg.validate();
    const auto train_indices = db.indices_of(Split::train);
    if (train_indices.empty()) raise(Errc::degenerate_dataset, "training split is empty");
    if (db.feature_dim != model.input_dim()) raise(Errc::dim_mismatch, "dataset feature_dim does not match model");

    std::vector<const Label*> labels;
    labels.reserve(train_indices.size());
    for (std::size_t i : train_indices) labels.push_back(&db.records[i].label);
    if (!detail::has_dissimilar_pair(labels))
        raise(Errc::degenerate_dataset, "training split has no dissimilar pair (single class)");

    const std::size_t k = model.bits();
    const double inv_k = 1.0 / static_cast<double>(k);
    Rng rng(cfg.seed);
    std::vector<std::size_t> order(train_indices);
    std::vector<double> trace;
    trace.reserve(static_cast<std::size_t>(cfg.epochs));

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Seeded Fisher-Yates shuffle.
        for (std::size_t i = order.size(); i > 1; --i) {
            const std::size_t j = rng.bounded(i);
            std::swap(order[i - 1], order[j]);
        }

        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start + 2 <= order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            const std::size_t b = stop - start;
            if (b < 2) break;

            std::vector<HashModel::ForwardTrace> traces(b);
            std::vector<std::vector<double>> u(b, std::vector<double>(k));
            for (std::size_t s = 0; s < b; ++s) {
                traces[s] = model.forward_trace(db.records[order[start + s]].features);
                for (std::size_t j = 0; j < k; ++j) u[s][j] = std::tanh(traces[s].output[j]);
            }

            double loss = 0.0;
            std::vector<std::vector<double>> grad_u(b, std::vector<double>(k, 0.0));
            for (std::size_t a = 0; a < b; ++a) {
                for (std::size_t c = a + 1; c < b; ++c) {
                    const Label& la = db.records[order[start + a]].label;
                    const Label& lc = db.records[order[start + c]].label;
                    const double s_ij = labels_match(la, lc) ? 1.0 : -1.0;
                    double dot = 0.0;
                    for (std::size_t j = 0; j < k; ++j) dot += u[a][j] * u[c][j];
                    const double residual = inv_k * dot - s_ij;
                    loss += residual * residual;
                    const double scale = 2.0 * residual * inv_k;
                    for (std::size_t j = 0; j < k; ++j) {
                        grad_u[a][j] += scale * u[c][j];
                        grad_u[c][j] += scale * u[a][j];
                    }
                }
            }
            if (cfg.quantization_weight > 0.0) {
                for (std::size_t s = 0; s < b; ++s) {
                    for (std::size_t j = 0; j < k; ++j) {
                        const double mag = std::abs(u[s][j]) - 1.0;
                        loss += cfg.quantization_weight * mag * mag;
                        const double sgn = u[s][j] > 0.0 ? 1.0 : (u[s][j] < 0.0 ? -1.0 : 0.0);
                        grad_u[s][j] += cfg.quantization_weight * 2.0 * mag * sgn;
                    }
                }
            }

            // Backprop: accumulate parameter gradients over the batch.
            const std::size_t layer_count = model.layers();
            std::vector<std::vector<double>> grad_w(layer_count), grad_b(layer_count);
            for (std::size_t l = 0; l < layer_count; ++l) {
                grad_w[l].assign(model.weights()[l].size(), 0.0);
                grad_b[l].assign(model.biases()[l].size(), 0.0);
            }
            for (std::size_t s = 0; s < b; ++s) {
                std::vector<double> delta(k);
                for (std::size_t j = 0; j < k; ++j)
                    delta[j] = grad_u[s][j] * (1.0 - u[s][j] * u[s][j]) * model.output_scale();
                const auto& dims = model.layer_dims();
                const std::vector<double>& stack_input =
                    model.extractor_dim() > 0 ? traces[s].extractor : db.records[order[start + s]].features;
                for (std::size_t l = layer_count; l-- > 0;) {
                    const std::vector<double>& input_act = l == 0 ? stack_input : traces[s].hidden[l - 1];
                    const std::size_t out_dim = dims[l + 1];
                    const std::size_t in_dim = dims[l];
                    for (std::size_t o = 0; o < out_dim; ++o) {
                        grad_b[l][o] += delta[o];
                        double* row = &grad_w[l][o * in_dim];
                        const double g = delta[o];
                        for (std::size_t i = 0; i < in_dim; ++i) row[i] += g * input_act[i];
                    }
                    if (l == 0) break;
                    std::vector<double> prev(in_dim, 0.0);
                    const auto& w = model.weights()[l];
                    for (std::size_t o = 0; o < out_dim; ++o) {
                        const double g = delta[o];
                        const double* row = &w[o * in_dim];
                        for (std::size_t i = 0; i < in_dim; ++i) prev[i] += row[i] * g;
                    }
                    for (std::size_t i = 0; i < in_dim; ++i) prev[i] *= 1.0 - input_act[i] * input_act[i];
                    delta = std::move(prev);
                }
            }

            for (std::size_t l = 0; l < layer_count; ++l) {
                auto& w = model.weights()[l];
                auto& bias = model.biases()[l];
                for (std::size_t i = 0; i < w.size(); ++i) w[i] -= cfg.learning_rate * grad_w[l][i];
                for (std::size_t i = 0; i < bias.size(); ++i) bias[i] -= cfg.learning_rate * grad_b[l][i];
            }

            epoch_loss += loss;
            ++batches;
        }
        if (!model.parameters_finite())
            raise(Errc::non_finite_value, "training diverged: non-finite parameters after epoch " +
                                              std::to_string(epoch) + "; lower the learning rate");
        trace.push_back(batches == 0 ? 0.0 : epoch_loss / static_cast<double>(batches));
    }
    return trace;
}

} // namespace hat
