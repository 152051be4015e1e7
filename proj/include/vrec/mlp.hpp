#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "vrec/common.hpp"

namespace vrec {

enum class SkipMode { concat, additive };

/// Residual MLP hyperparameters. The default is 8 linear layers of width 256
/// with LeakyReLU(0.01) between them, a sigmoid on the scalar output, and the
/// raw input features re-injected at the middle layer.
struct MlpConfig {
    int n_layers = 8;
    int hidden_width = 256;
    int in_dim = 32;
    int out_dim = 1;
    double leaky_slope = 0.01;
    SkipMode skip = SkipMode::concat;

    /// 1-based index of the layer whose input receives the skip connection.
    int skip_layer() const { return n_layers / 2 + 1; }

    void validate() const {
        if (n_layers < 2) throw ConfigError("mlp.n_layers", "must be >= 2");
        if (hidden_width < 1) throw ConfigError("mlp.hidden_width", "must be >= 1");
        if (in_dim < 1) throw ConfigError("mlp.in_dim", "must be >= 1");
        if (out_dim < 1) throw ConfigError("mlp.out_dim", "must be >= 1");
        if (!(leaky_slope > 0.0) || !(leaky_slope < 1.0))
            throw ConfigError("mlp.leaky_slope", "must be in (0, 1)");
        if (skip == SkipMode::additive && in_dim > hidden_width)
            throw ConfigError("mlp.skip", "additive skip requires in_dim <= hidden_width");
    }

    /// Rows of the matrix feeding layer i (1-based).
    int layer_in(int i) const {
        if (i == 1) return in_dim;
        int base = hidden_width;
        if (skip == SkipMode::concat && i == skip_layer()) base += in_dim;
        return base;
    }

    /// Rows of layer i's output (1-based).
    int layer_out(int i) const { return i == n_layers ? out_dim : hidden_width; }
};

template <typename T>
using MatX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using VecX = Eigen::Matrix<T, Eigen::Dynamic, 1>;

/// Trainable state Phi: per-layer weight matrices (out x in) and bias vectors.
template <typename T>
struct MlpParams {
    std::vector<MatX<T>> W;
    std::vector<VecX<T>> b;

    static MlpParams zeros(const MlpConfig& cfg) {
        cfg.validate();
        MlpParams p;
        p.W.resize(static_cast<std::size_t>(cfg.n_layers));
        p.b.resize(static_cast<std::size_t>(cfg.n_layers));
        for (int i = 1; i <= cfg.n_layers; ++i) {
            p.W[static_cast<std::size_t>(i - 1)] = MatX<T>::Zero(cfg.layer_out(i), cfg.layer_in(i));
            p.b[static_cast<std::size_t>(i - 1)] = VecX<T>::Zero(cfg.layer_out(i));
        }
        return p;
    }

    std::size_t count() const {
        std::size_t n = 0;
        for (const auto& w : W) n += static_cast<std::size_t>(w.size());
        for (const auto& v : b) n += static_cast<std::size_t>(v.size());
        return n;
    }
};

/// Kaiming-uniform init matched to LeakyReLU: bound = gain * sqrt(3 / fan_in)
/// with gain = sqrt(2 / (1 + slope^2)); biases zero. Fill order is fixed
/// (layer by layer, column-major within each matrix) so a seed pins the state.
template <typename T>
void kaiming_init(const MlpConfig& cfg, MlpParams<T>& params, Rng& rng) {
    double gain = std::sqrt(2.0 / (1.0 + cfg.leaky_slope * cfg.leaky_slope));
    for (int i = 1; i <= cfg.n_layers; ++i) {
        auto& w = params.W[static_cast<std::size_t>(i - 1)];
        double bound = gain * std::sqrt(3.0 / static_cast<double>(cfg.layer_in(i)));
        for (Eigen::Index k = 0; k < w.size(); ++k)
            w.data()[k] = static_cast<T>(rng.uniform(-bound, bound));
        params.b[static_cast<std::size_t>(i - 1)].setZero();
    }
}

/// Post-activation tape from a forward pass: `inputs[i]` is the matrix fed to
/// layer i+1 (after any skip), `output` the post-sigmoid result. For a
/// LeakyReLU with positive slope the activation branch is recoverable from
/// the sign of its output, so post-activation values suffice for backward.
/// An additive skip destroys that sign, so the pre-skip activation is taped
/// separately for the one layer it matters.
template <typename T>
struct MlpTape {
    std::vector<MatX<T>> inputs;
    MatX<T> pre_skip;
    MatX<T> output;
};

namespace detail {

template <typename T>
inline T leaky(T v, T slope) { return v > T(0) ? v : slope * v; }

template <typename T>
inline T leaky_grad_from_out(T h, T slope) { return h > T(0) ? T(1) : slope; }

}  // namespace detail

/// Forward pass over a batch (columns are points). x is (in_dim x B);
/// returns (out_dim x B) post-sigmoid. Pass a tape to keep what backward needs.
template <typename T>
MatX<T> mlp_forward(const MlpConfig& cfg, const MlpParams<T>& params, const MatX<T>& x,
                    MlpTape<T>* tape = nullptr) {
    const T slope = static_cast<T>(cfg.leaky_slope);
    if (tape) {
        tape->inputs.clear();
        tape->inputs.resize(static_cast<std::size_t>(cfg.n_layers));
    }
    MatX<T> h = x;
    for (int i = 1; i <= cfg.n_layers; ++i) {
        if (i == cfg.skip_layer() && i > 1) {
            if (cfg.skip == SkipMode::concat) {
                MatX<T> cat(h.rows() + x.rows(), h.cols());
                cat.topRows(h.rows()) = h;
                cat.bottomRows(x.rows()) = x;
                h = std::move(cat);
            } else {
                if (tape) tape->pre_skip = h;
                h.topRows(x.rows()) += x;
            }
        }
        if (tape) tape->inputs[static_cast<std::size_t>(i - 1)] = h;
        MatX<T> z = params.W[static_cast<std::size_t>(i - 1)] * h;
        z.colwise() += params.b[static_cast<std::size_t>(i - 1)];
        if (i < cfg.n_layers) {
            h = z.unaryExpr([slope](T v) { return detail::leaky(v, slope); });
        } else {
            h = z.unaryExpr([](T v) { return T(1) / (T(1) + std::exp(-v)); });
        }
    }
    if (tape) tape->output = h;
    return h;
}

/// Backward pass. upstream is dLoss/dOutput (out_dim x B). Accumulates into
/// grad (same shapes as params, caller-zeroed or carrying prior sums) and
/// returns dLoss/dx (in_dim x B).
template <typename T>
MatX<T> mlp_backward(const MlpConfig& cfg, const MlpParams<T>& params, const MlpTape<T>& tape,
                     const MatX<T>& upstream, MlpParams<T>& grad) {
    const T slope = static_cast<T>(cfg.leaky_slope);
    MatX<T> dx = MatX<T>::Zero(cfg.in_dim, upstream.cols());
    // Output layer: sigmoid' = y (1 - y), read off the taped output.
    MatX<T> dz = upstream.cwiseProduct(
        tape.output.unaryExpr([](T y) { return y * (T(1) - y); }));
    for (int i = cfg.n_layers; i >= 1; --i) {
        const MatX<T>& in = tape.inputs[static_cast<std::size_t>(i - 1)];
        grad.W[static_cast<std::size_t>(i - 1)].noalias() += dz * in.transpose();
        grad.b[static_cast<std::size_t>(i - 1)] += dz.rowwise().sum();
        MatX<T> din = params.W[static_cast<std::size_t>(i - 1)].transpose() * dz;
        if (i == cfg.skip_layer() && i > 1) {
            if (cfg.skip == SkipMode::concat) {
                dx += din.bottomRows(cfg.in_dim);
                din.conservativeResize(cfg.hidden_width, Eigen::NoChange);
            } else {
                dx += din.topRows(cfg.in_dim);
            }
        }
        if (i == 1) {
            dx += din;
            break;
        }
        // din is now dLoss/dh_{i-1}. Recover h_{i-1}: for concat it is the
        // top block of layer i's taped input; for an additive skip the taped
        // input is a sum, so use the separately taped pre-skip activation.
        const MatX<T>& h_prev = (i == cfg.skip_layer() && cfg.skip == SkipMode::additive)
                                    ? tape.pre_skip
                                    : in;
        dz = din.cwiseProduct(h_prev.topRows(cfg.hidden_width).unaryExpr(
            [slope](T h) { return detail::leaky_grad_from_out(h, slope); }));
    }
    return dx;
}

}  // namespace vrec
