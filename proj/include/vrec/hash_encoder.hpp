#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "vrec/common.hpp"
#include "vrec/geometry.hpp"
#include "vrec/volume.hpp"

namespace vrec {

/// Multiresolution hash encoder hyperparameters. Defaults are the model's
/// standard operating point: 16 levels of 2^19-entry tables with 2 features,
/// coarsest resolution 16, growth factor 2.
struct HashEncoderConfig {
    int levels = 16;                   // L
    uint32_t table_size = 1u << 19;    // T, power of two
    int features = 2;                  // F
    int coarsest_resolution = 16;      // N_min
    double growth_factor = 2.0;        // b
    int input_dim = 3;                 // d

    int out_dim() const { return levels * features; }

    void validate() const {
        if (levels < 1) throw ConfigError("encoder.levels", "must be >= 1");
        if (table_size == 0 || (table_size & (table_size - 1)) != 0)
            throw ConfigError("encoder.table_size", "must be a power of two");
        if (features < 1) throw ConfigError("encoder.features", "must be >= 1");
        if (coarsest_resolution < 1) throw ConfigError("encoder.coarsest_resolution", "must be >= 1");
        if (!(growth_factor > 1.0)) throw ConfigError("encoder.growth_factor", "must be > 1");
        if (input_dim != 3) throw ConfigError("encoder.input_dim", "only d = 3 is supported");
    }
};

/// Per-level addressing mode: dense levels have a collision-free 1:1 vertex
/// mapping, hashed levels go through the spatial hash.
struct LevelAddressing {
    int level = 0;
    int64_t resolution = 0;  // N_l
    bool dense = false;      // (N_l+1)^3 <= T
};

/// N_l = floor(N_min * b^l).
inline int64_t level_resolution(const HashEncoderConfig& cfg, int level) {
    if (level < 0 || level >= cfg.levels) throw std::out_of_range("level index outside [0, L)");
    return static_cast<int64_t>(std::floor(cfg.coarsest_resolution * std::pow(cfg.growth_factor, level)));
}

inline LevelAddressing level_addressing(const HashEncoderConfig& cfg, int level) {
    LevelAddressing a;
    a.level = level;
    a.resolution = level_resolution(cfg, level);
    int64_t verts = a.resolution + 1;
    a.dense = verts * verts * verts <= static_cast<int64_t>(cfg.table_size);
    return a;
}

/// XOR spatial hash over integer lattice vertex coordinates:
///   h = (x*pi1 ^ y*pi2 ^ z*pi3) mod T
/// with pi = (1, 2654435761, 805459861). Products wrap mod 2^32.
inline uint32_t spatial_hash(uint32_t vx, uint32_t vy, uint32_t vz, uint32_t table_size) {
    uint32_t h = vx * 1u ^ vy * 2654435761u ^ vz * 805459861u;
    return h & (table_size - 1);
}

/// Table row for a level-grid vertex: dense row-major (x fastest) on
/// collision-free levels, hashed otherwise.
inline uint32_t vertex_entry_index(const HashEncoderConfig& cfg, int level,
                                   int64_t vx, int64_t vy, int64_t vz) {
    LevelAddressing a = level_addressing(cfg, level);
    if (vx < 0 || vx > a.resolution || vy < 0 || vy > a.resolution || vz < 0 || vz > a.resolution)
        throw std::out_of_range("vertex outside level grid");
    if (a.dense) {
        int64_t n = a.resolution + 1;
        return static_cast<uint32_t>(vx + n * (vy + n * vz));
    }
    return spatial_hash(static_cast<uint32_t>(vx), static_cast<uint32_t>(vy),
                        static_cast<uint32_t>(vz), cfg.table_size);
}

/// Trainable state Theta: one table of table_size x features values per level.
template <typename T>
struct HashEncoderParams {
    std::vector<std::vector<T>> tables;

    static HashEncoderParams zeros(const HashEncoderConfig& cfg) {
        cfg.validate();
        HashEncoderParams p;
        p.tables.assign(cfg.levels, std::vector<T>(static_cast<std::size_t>(cfg.table_size) * cfg.features, T(0)));
        return p;
    }

    std::size_t count() const {
        std::size_t n = 0;
        for (const auto& t : tables) n += t.size();
        return n;
    }
};

/// Map normalized mm coordinates into the unit cube: the normalized bounding
/// box [-n', +n'] per axis goes affinely to [0, 1]. A zero-extent axis
/// (single voxel) maps to 0.5.
inline Vec3 unit_from_normalized(const Vec3& x_norm, const VolumeGrid& grid) {
    Vec3 half = normalized_half_extent(grid);
    Vec3 u;
    for (int i = 0; i < 3; ++i) {
        if (half[i] == 0.0) {
            u[i] = 0.5;
            continue;
        }
        double slack = 1e-9 * (1.0 + half[i]);
        if (x_norm[i] < -half[i] - slack || x_norm[i] > half[i] + slack)
            throw std::out_of_range("coordinate outside normalized bounding box");
        u[i] = std::clamp((x_norm[i] + half[i]) / (2.0 * half[i]), 0.0, 1.0);
    }
    return u;
}

namespace detail {

/// Cell lookup for one level: the 8 corner table rows and their trilinear
/// weights. A query at the exact upper boundary clamps into the last cell.
struct CellCorners {
    std::array<uint32_t, 8> rows;
    std::array<double, 8> weights;
};

inline CellCorners level_corners(const HashEncoderConfig& cfg, const LevelAddressing& a, const Vec3& unit) {
    CellCorners out;
    int64_t n = a.resolution;
    int64_t cx[3];
    double fx[3];
    for (int i = 0; i < 3; ++i) {
        double pos = unit[i] * static_cast<double>(n);
        int64_t c = static_cast<int64_t>(std::floor(pos));
        if (c > n - 1) c = n - 1;
        if (c < 0) c = 0;
        cx[i] = c;
        fx[i] = pos - static_cast<double>(c);
    }
    int64_t verts = n + 1;
    int k = 0;
    for (int dz = 0; dz < 2; ++dz)
        for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx, ++k) {
                int64_t vx = cx[0] + dx, vy = cx[1] + dy, vz = cx[2] + dz;
                if (a.dense)
                    out.rows[k] = static_cast<uint32_t>(vx + verts * (vy + verts * vz));
                else
                    out.rows[k] = spatial_hash(static_cast<uint32_t>(vx), static_cast<uint32_t>(vy),
                                               static_cast<uint32_t>(vz), cfg.table_size);
                out.weights[k] = (dx ? fx[0] : 1.0 - fx[0]) * (dy ? fx[1] : 1.0 - fx[1]) * (dz ? fx[2] : 1.0 - fx[2]);
            }
    return out;
}

}  // namespace detail

/// Encode one point: per level, trilinearly interpolate the 8 cell-corner
/// feature rows and concatenate the per-level results in level order.
/// `out` must have room for out_dim() values.
template <typename T>
void encode(const HashEncoderConfig& cfg, const HashEncoderParams<T>& params,
            const Vec3& x_norm, const VolumeGrid& grid, T* out) {
    Vec3 unit = unit_from_normalized(x_norm, grid);
    const int f = cfg.features;
    for (int l = 0; l < cfg.levels; ++l) {
        LevelAddressing a = level_addressing(cfg, l);
        detail::CellCorners cc = detail::level_corners(cfg, a, unit);
        const T* table = params.tables[static_cast<std::size_t>(l)].data();
        for (int j = 0; j < f; ++j) {
            double acc = 0.0;
            for (int k = 0; k < 8; ++k)
                acc += cc.weights[k] * static_cast<double>(table[static_cast<std::size_t>(cc.rows[k]) * f + j]);
            out[l * f + j] = static_cast<T>(acc);
        }
    }
}

/// Sparse gradient of encode w.r.t. Theta for one point. Rows hit by several
/// cell corners (hash collisions within a cell) accumulate additively, so at
/// most 8 distinct rows per level appear.
template <typename T>
struct SparseThetaGrad {
    struct Entry {
        int level;
        uint32_t row;
        std::vector<T> grad;  // length F
    };
    std::vector<Entry> entries;
};

template <typename T>
SparseThetaGrad<T> encode_backward(const HashEncoderConfig& cfg, const HashEncoderParams<T>&,
                                   const Vec3& x_norm, const VolumeGrid& grid,
                                   const T* upstream /* length out_dim() */) {
    Vec3 unit = unit_from_normalized(x_norm, grid);
    const int f = cfg.features;
    SparseThetaGrad<T> out;
    for (int l = 0; l < cfg.levels; ++l) {
        LevelAddressing a = level_addressing(cfg, l);
        detail::CellCorners cc = detail::level_corners(cfg, a, unit);
        // Merge duplicate rows first; their weights add.
        std::array<uint32_t, 8> rows = cc.rows;
        std::array<double, 8> wsum{};
        int nunique = 0;
        for (int k = 0; k < 8; ++k) {
            int hit = -1;
            for (int m = 0; m < nunique; ++m)
                if (rows[m] == cc.rows[k]) { hit = m; break; }
            if (hit < 0) {
                rows[nunique] = cc.rows[k];
                wsum[nunique] = cc.weights[k];
                ++nunique;
            } else {
                wsum[hit] += cc.weights[k];
            }
        }
        for (int m = 0; m < nunique; ++m) {
            typename SparseThetaGrad<T>::Entry e;
            e.level = l;
            e.row = rows[m];
            e.grad.resize(static_cast<std::size_t>(f));
            for (int j = 0; j < f; ++j)
                e.grad[static_cast<std::size_t>(j)] = static_cast<T>(wsum[m] * static_cast<double>(upstream[l * f + j]));
            out.entries.push_back(std::move(e));
        }
    }
    return out;
}

/// Precomputed gather/scatter plan for a fixed batch of query points. The
/// corner rows and weights of every (point, level) pair are resolved once;
/// gather and scatter then reuse them. Training renders the same voxel
/// centers every iteration, so this removes all per-iteration hashing.
template <typename T>
class EncoderPlan {
public:
    void build(const HashEncoderConfig& cfg, const VolumeGrid& grid, const std::vector<Vec3>& x_norm) {
        cfg.validate();
        cfg_ = cfg;
        npoints_ = static_cast<int64_t>(x_norm.size());
        const int L = cfg.levels;
        rows_.resize(static_cast<std::size_t>(npoints_) * L * 8);
        weights_.resize(static_cast<std::size_t>(npoints_) * L * 8);
        std::vector<LevelAddressing> addr(static_cast<std::size_t>(L));
        for (int l = 0; l < L; ++l) addr[static_cast<std::size_t>(l)] = level_addressing(cfg, l);
        for (int64_t p = 0; p < npoints_; ++p) {
            Vec3 unit = unit_from_normalized(x_norm[static_cast<std::size_t>(p)], grid);
            for (int l = 0; l < L; ++l) {
                detail::CellCorners cc = detail::level_corners(cfg, addr[static_cast<std::size_t>(l)], unit);
                std::size_t base = (static_cast<std::size_t>(p) * L + l) * 8;
                for (int k = 0; k < 8; ++k) {
                    rows_[base + k] = cc.rows[k];
                    weights_[base + k] = cc.weights[k];
                }
            }
        }
    }

    int64_t size() const { return npoints_; }
    const HashEncoderConfig& config() const { return cfg_; }

    /// Features for points [begin, end) into out (out_dim x (end-begin)),
    /// one column per point.
    void gather(const HashEncoderParams<T>& params, int64_t begin, int64_t end,
                Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>& out) const {
        const int L = cfg_.levels, f = cfg_.features;
        out.resize(L * f, end - begin);
        for (int64_t p = begin; p < end; ++p) {
            T* col = out.col(p - begin).data();
            for (int l = 0; l < L; ++l) {
                const T* table = params.tables[static_cast<std::size_t>(l)].data();
                std::size_t base = (static_cast<std::size_t>(p) * L + l) * 8;
                for (int j = 0; j < f; ++j) {
                    // Double accumulation with double weights: matches the
                    // direct per-point encoding bitwise in float mode.
                    double acc = 0.0;
                    for (int k = 0; k < 8; ++k)
                        acc += weights_[base + k] *
                               static_cast<double>(table[static_cast<std::size_t>(rows_[base + k]) * f + j]);
                    col[l * f + j] = static_cast<T>(acc);
                }
            }
        }
    }

    /// Adjoint of gather: scatter upstream (out_dim x (end-begin)) into the
    /// dense gradient accumulator. Single-threaded over the given range;
    /// callers order ranges for determinism.
    void scatter(const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>& upstream, int64_t begin, int64_t end,
                 HashEncoderParams<T>& grad) const {
        const int L = cfg_.levels, f = cfg_.features;
        for (int64_t p = begin; p < end; ++p) {
            const T* col = upstream.col(p - begin).data();
            for (int l = 0; l < L; ++l) {
                T* table = grad.tables[static_cast<std::size_t>(l)].data();
                std::size_t base = (static_cast<std::size_t>(p) * L + l) * 8;
                for (int k = 0; k < 8; ++k) {
                    double w = weights_[base + k];
                    T* row = table + static_cast<std::size_t>(rows_[base + k]) * f;
                    for (int j = 0; j < f; ++j)
                        row[j] += static_cast<T>(w * static_cast<double>(col[l * f + j]));
                }
            }
        }
    }

private:
    HashEncoderConfig cfg_;
    int64_t npoints_ = 0;
    std::vector<uint32_t> rows_;
    std::vector<double> weights_;
};

}  // namespace vrec
