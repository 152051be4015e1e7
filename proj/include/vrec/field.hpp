#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "vrec/common.hpp"
#include "vrec/geometry.hpp"
#include "vrec/hash_encoder.hpp"
#include "vrec/mlp.hpp"
#include "vrec/volume.hpp"

namespace vrec {

enum class EncoderKind { hash, frequency };

/// Sinusoid encoder used only for the ablation study.
struct FrequencyConfig {
    int frequencies = 10;  // K

    int out_dim() const { return 6 * frequencies; }

    void validate() const {
        if (frequencies < 1) throw ConfigError("encoder.frequencies", "must be >= 1");
    }
};

/// Per axis i (axis-major), per k in 0..K-1: sin(2^k pi u_i), cos(2^k pi u_i),
/// with u in the unit cube. Output length 6K.
inline void frequency_encode(const Vec3& x_unit, int K, double* out) {
    for (int i = 0; i < 3; ++i) {
        double u = x_unit[i];
        for (int k = 0; k < K; ++k) {
            double arg = std::ldexp(3.14159265358979323846 * u, k);
            out[i * 2 * K + 2 * k] = std::sin(arg);
            out[i * 2 * K + 2 * k + 1] = std::cos(arg);
        }
    }
}

inline std::vector<double> frequency_encode(const Vec3& x_unit, int K) {
    std::vector<double> out(static_cast<std::size_t>(6) * K);
    frequency_encode(x_unit, K, out.data());
    return out;
}

/// Joint trainable state of the occupancy field.
template <typename T>
struct FieldParams {
    HashEncoderParams<T> theta;
    MlpParams<T> phi;
};

/// Full description of one occupancy field: which encoder feeds which MLP.
/// The frequency encoder is parameter-free, so in that mode theta stays empty.
struct FieldSpec {
    EncoderKind kind = EncoderKind::hash;
    HashEncoderConfig hash;
    FrequencyConfig freq;
    MlpConfig mlp;

    int encoder_out_dim() const {
        return kind == EncoderKind::hash ? hash.out_dim() : freq.out_dim();
    }

    void validate() const {
        if (kind == EncoderKind::hash)
            hash.validate();
        else
            freq.validate();
        mlp.validate();
        if (mlp.in_dim != encoder_out_dim())
            throw ConfigError("mlp.in_dim", "must equal encoder output dimension");
    }
};

/// Sizes-only copy with every entry zeroed; the gradient accumulator shape.
template <typename T>
FieldParams<T> zero_like(const FieldParams<T>& p) {
    FieldParams<T> z;
    z.theta.tables.resize(p.theta.tables.size());
    for (std::size_t i = 0; i < p.theta.tables.size(); ++i)
        z.theta.tables[i].assign(p.theta.tables[i].size(), T(0));
    z.phi.W.resize(p.phi.W.size());
    z.phi.b.resize(p.phi.b.size());
    for (std::size_t i = 0; i < p.phi.W.size(); ++i)
        z.phi.W[i] = MatX<T>::Zero(p.phi.W[i].rows(), p.phi.W[i].cols());
    for (std::size_t i = 0; i < p.phi.b.size(); ++i)
        z.phi.b[i] = VecX<T>::Zero(p.phi.b[i].size());
    return z;
}

/// Seeded joint init: table entries uniform in [-1e-4, 1e-4] (level by level,
/// rows in order), then Kaiming-uniform MLP weights with zero biases. The
/// draw order is fixed, so one seed pins every parameter.
template <typename T>
FieldParams<T> init_params(const HashEncoderConfig& enc_cfg, const MlpConfig& mlp_cfg, uint64_t seed) {
    enc_cfg.validate();
    mlp_cfg.validate();
    Rng rng(seed);
    FieldParams<T> p;
    p.theta = HashEncoderParams<T>::zeros(enc_cfg);
    for (auto& table : p.theta.tables)
        for (auto& v : table) v = static_cast<T>(rng.uniform(-1e-4, 1e-4));
    p.phi = MlpParams<T>::zeros(mlp_cfg);
    kaiming_init(mlp_cfg, p.phi, rng);
    return p;
}

/// Seeded init for either encoder kind; the frequency path has no encoder
/// parameters and draws only the MLP weights.
template <typename T>
FieldParams<T> init_field(const FieldSpec& spec, uint64_t seed) {
    spec.validate();
    if (spec.kind == EncoderKind::hash) return init_params<T>(spec.hash, spec.mlp, seed);
    Rng rng(seed);
    FieldParams<T> p;
    p.phi = MlpParams<T>::zeros(spec.mlp);
    kaiming_init(spec.mlp, p.phi, rng);
    return p;
}

/// Every MLP call in this project runs on fixed 256-column blocks (tails are
/// zero-padded and the pad discarded). A GEMM's rounding depends on its
/// shape; pinning the shape makes each point's result independent of how the
/// caller batched or chunked it, which the reproducibility contract needs.
inline constexpr int kMlpBlockCols = 256;

/// Forward the MLP over an arbitrary batch via fixed-shape blocks.
/// x is (in_dim x B); returns (out_dim x B).
template <typename T>
MatX<T> mlp_forward_blocked(const MlpConfig& cfg, const MlpParams<T>& params, const MatX<T>& x) {
    const Eigen::Index b = x.cols();
    MatX<T> out(cfg.out_dim, b);
    MatX<T> block(cfg.in_dim, kMlpBlockCols);
    for (Eigen::Index start = 0; start < b; start += kMlpBlockCols) {
        Eigen::Index n = std::min<Eigen::Index>(kMlpBlockCols, b - start);
        block.leftCols(n) = x.middleCols(start, n);
        if (n < kMlpBlockCols) block.rightCols(kMlpBlockCols - n).setZero();
        MatX<T> y = mlp_forward(cfg, params, block);
        out.middleCols(start, n) = y.leftCols(n);
    }
    return out;
}

/// Occupancy for a batch of 1-based voxel index triples:
/// normalize -> encode -> MLP, order preserved, parameters untouched.
template <typename T>
std::vector<T> field_evaluate(const HashEncoderConfig& enc_cfg, const HashEncoderParams<T>& theta,
                              const MlpConfig& mlp_cfg, const MlpParams<T>& phi,
                              const std::vector<std::array<int, 3>>& points, const VolumeGrid& grid) {
    enc_cfg.validate();
    mlp_cfg.validate();
    if (mlp_cfg.in_dim != enc_cfg.out_dim())
        throw ConfigError("mlp.in_dim", "must equal encoder output dimension");
    const Eigen::Index b = static_cast<Eigen::Index>(points.size());
    MatX<T> feats(enc_cfg.out_dim(), b);
    std::vector<T> col(static_cast<std::size_t>(enc_cfg.out_dim()));
    for (Eigen::Index i = 0; i < b; ++i) {
        const auto& p = points[static_cast<std::size_t>(i)];
        Vec3 xn = normalize_coords(p[0], p[1], p[2], grid);
        encode(enc_cfg, theta, xn, grid, col.data());
        for (int j = 0; j < enc_cfg.out_dim(); ++j) feats(j, i) = col[static_cast<std::size_t>(j)];
    }
    MatX<T> y = mlp_forward_blocked(mlp_cfg, phi, feats);
    std::vector<T> out(static_cast<std::size_t>(b));
    for (Eigen::Index i = 0; i < b; ++i) out[static_cast<std::size_t>(i)] = y(0, i);
    return out;
}

/// Frequency-encoder counterpart of field_evaluate (ablation path).
template <typename T>
std::vector<T> field_evaluate_frequency(const FrequencyConfig& enc_cfg,
                                        const MlpConfig& mlp_cfg, const MlpParams<T>& phi,
                                        const std::vector<std::array<int, 3>>& points, const VolumeGrid& grid) {
    enc_cfg.validate();
    mlp_cfg.validate();
    if (mlp_cfg.in_dim != enc_cfg.out_dim())
        throw ConfigError("mlp.in_dim", "must equal encoder output dimension");
    const Eigen::Index b = static_cast<Eigen::Index>(points.size());
    MatX<T> feats(enc_cfg.out_dim(), b);
    std::vector<double> col(static_cast<std::size_t>(enc_cfg.out_dim()));
    for (Eigen::Index i = 0; i < b; ++i) {
        const auto& p = points[static_cast<std::size_t>(i)];
        Vec3 xn = normalize_coords(p[0], p[1], p[2], grid);
        Vec3 xu = unit_from_normalized(xn, grid);
        frequency_encode(xu, enc_cfg.frequencies, col.data());
        for (int j = 0; j < enc_cfg.out_dim(); ++j) feats(j, i) = static_cast<T>(col[static_cast<std::size_t>(j)]);
    }
    MatX<T> y = mlp_forward_blocked(mlp_cfg, phi, feats);
    std::vector<T> out(static_cast<std::size_t>(b));
    for (Eigen::Index i = 0; i < b; ++i) out[static_cast<std::size_t>(i)] = y(0, i);
    return out;
}

/// Kind-dispatching convenience overload.
template <typename T>
std::vector<T> field_evaluate(const FieldSpec& spec, const FieldParams<T>& params,
                              const std::vector<std::array<int, 3>>& points, const VolumeGrid& grid) {
    if (spec.kind == EncoderKind::hash)
        return field_evaluate(spec.hash, params.theta, spec.mlp, params.phi, points, grid);
    return field_evaluate_frequency(spec.freq, spec.mlp, params.phi, points, grid);
}

}  // namespace vrec
