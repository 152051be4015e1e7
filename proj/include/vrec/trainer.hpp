#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "vrec/field.hpp"
#include "vrec/metrics.hpp"
#include "vrec/parallel.hpp"
#include "vrec/projector.hpp"

namespace vrec {

struct TrainConfig {
    int64_t iterations = 5000;
    double lr = 1e-4;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    uint64_t seed = 0;
    int64_t log_every = 100;
    std::vector<double> binarize_thresholds = {0.4, 0.5, 0.6};
    /// Replaces the per-view pixel count det_u*det_v in the loss normalizer
    /// N*det_u*det_v. Setting 512 reproduces the literal one-row convention
    /// some references use for a 512x512 detector; unset means true count.
    std::optional<double> pixel_norm_override;
    ProjectorConfig projector;
    /// Voxels per evaluation chunk; bounds peak memory, not results.
    int64_t chunk_points = 4096;

    void validate() const {
        if (iterations < 0) throw ConfigError("trainer.iterations", "must be >= 0");
        if (!(lr > 0.0)) throw ConfigError("trainer.lr", "must be > 0");
        if (!(adam_beta1 >= 0.0) || !(adam_beta1 < 1.0))
            throw ConfigError("trainer.adam_beta1", "must be in [0, 1)");
        if (!(adam_beta2 >= 0.0) || !(adam_beta2 < 1.0))
            throw ConfigError("trainer.adam_beta2", "must be in [0, 1)");
        if (!(adam_eps > 0.0)) throw ConfigError("trainer.adam_eps", "must be > 0");
        if (log_every < 1) throw ConfigError("trainer.log_every", "must be >= 1");
        if (chunk_points < 1) throw ConfigError("trainer.chunk_points", "must be >= 1");
        for (double t : binarize_thresholds)
            if (!(t > 0.0) || !(t < 1.0))
                throw ConfigError("trainer.binarize_thresholds", "must be in (0, 1)");
        if (pixel_norm_override && !(*pixel_norm_override > 0.0))
            throw ConfigError("trainer.pixel_norm_override", "must be > 0");
        projector.validate();
    }
};

/// Adam accumulators, flat over the parameter blocks in span order; one
/// shared step counter.
struct AdamState {
    std::vector<float> m, v;
    int64_t t = 0;
};

struct TrainRecord {
    int64_t iteration = 0;
    double loss = 0.0;
    /// One report per binarization threshold; empty off the logging stride.
    std::vector<MetricsReport> reports;
};

struct TrainResult {
    FieldParams<float> params;
    AdamState adam;
    std::vector<TrainRecord> records;
    bool aborted = false;
};

/// Parameter blocks in the canonical flat order: encoder tables level by
/// level, then per MLP layer the weight matrix (column-major) and bias.
/// AdamState and the checkpoint format index into this order.
std::vector<std::span<float>> param_spans(FieldParams<float>& p);
std::vector<std::span<const float>> param_spans(const FieldParams<float>& p);

/// One bias-corrected Adam update over matching parameter/gradient blocks.
/// Moments auto-initialize to zero on first use; t increments once per call.
/// Non-finite gradients are rejected (std::runtime_error naming the block)
/// before any state changes.
void adam_step(const std::vector<std::span<float>>& params,
               const std::vector<std::span<const float>>& grads, AdamState& state,
               const TrainConfig& cfg);

/// Mean squared pixel difference over all views: sum (P-G)^2 / (N * det_u *
/// det_v), with the per-view pixel count replaceable by pixel_norm_override.
/// Per-view partial sums are combined pairwise, so a two-view loss is exactly
/// invariant under swapping the views.
double mse_loss(const std::vector<ProjectionImage>& rendered,
                const std::vector<ProjectionImage>& target,
                std::optional<double> pixel_norm_override = std::nullopt);

namespace detail {

inline std::array<int, 3> voxel_triple(const VolumeGrid& g, int64_t flat) {
    const int64_t nx = g.nx, ny = g.ny;
    return {static_cast<int>(flat % nx) + 1, static_cast<int>((flat / nx) % ny) + 1,
            static_cast<int>(flat / (nx * ny)) + 1};
}

}  // namespace detail

/// Occupancy at every voxel center, x-fastest, chunked to bound memory.
/// Chunking and thread count never change the values: every MLP call runs on
/// fixed-shape blocks and chunks write disjoint ranges.
template <typename T>
std::vector<T> render_field_values(const FieldSpec& spec, const FieldParams<T>& params,
                                   const VolumeGrid& grid, int64_t chunk_points = 4096,
                                   const ParallelConfig& par = {}) {
    spec.validate();
    grid.validate_shape();
    const int64_t n = static_cast<int64_t>(grid.nx) * grid.ny * grid.nz;
    std::vector<T> out(static_cast<std::size_t>(n));
    parallel_for_chunks(n, chunk_points, par.threads, [&](int64_t begin, int64_t end) {
        std::vector<std::array<int, 3>> pts;
        pts.reserve(static_cast<std::size_t>(end - begin));
        for (int64_t i = begin; i < end; ++i) pts.push_back(detail::voxel_triple(grid, i));
        std::vector<T> vals = field_evaluate(spec, params, pts, grid);
        std::copy(vals.begin(), vals.end(), out.begin() + begin);
    });
    return out;
}

/// render_field_values wrapped into a VolumeGrid (float path).
VolumeGrid render_volume(const FieldSpec& spec, const FieldParams<float>& params,
                         const VolumeGrid& grid, int64_t chunk_points = 4096,
                         const ParallelConfig& par = {});

/// Loss and full parameter gradient of one training iteration: render the
/// field, project every view, MSE against the targets, then pull the
/// residual back through projector, MLP, and encoder. Returns the loss;
/// fills `grads` (zeroed here) and optionally the rendered volume. Shared by
/// the float training loop and the double-precision gradient checks.
template <typename T>
double field_loss_and_grads(const FieldSpec& spec, const FieldParams<T>& params,
                            const VolumeGrid& grid, const std::vector<ProjectionImage>& targets,
                            const ProjectorConfig& proj_cfg,
                            std::optional<double> pixel_norm_override, int64_t chunk_points,
                            FieldParams<T>& grads, std::vector<T>* volume_out = nullptr) {
    spec.validate();
    grid.validate_shape();
    proj_cfg.validate();
    if (targets.empty()) throw ConfigError("projections", "need at least one view");
    const GridShape gs(grid);
    const int64_t nvox = gs.voxel_count();
    const std::size_t nviews = targets.size();

    int64_t total_pix = 0;
    for (const auto& t : targets) {
        t.geometry.validate();
        const std::size_t npix =
            static_cast<std::size_t>(t.geometry.det_u) * static_cast<std::size_t>(t.geometry.det_v);
        if (t.data.size() != npix)
            throw ConfigError("projections", "pixel buffer does not match its geometry");
        total_pix += static_cast<int64_t>(npix);
    }
    const double denom = pixel_norm_override
                             ? static_cast<double>(nviews) * *pixel_norm_override
                             : static_cast<double>(total_pix);

    // Pass A: render, project, score, and pull the residual back to d/dVolume.
    std::vector<T> vol = render_field_values(spec, params, grid, chunk_points, proj_cfg.parallel);

    std::vector<std::vector<T>> view_grad(nviews);
    double loss = 0.0;
    for (std::size_t k = 0; k < nviews; ++k) {
        const auto& g = targets[k];
        const int64_t npix = static_cast<int64_t>(g.data.size());
        std::vector<T> proj(static_cast<std::size_t>(npix), T(0));
        forward_project_span(vol.data(), gs, g.geometry, proj_cfg, proj.data());
        std::vector<T> residual(static_cast<std::size_t>(npix));
        double s = 0.0;
        for (int64_t i = 0; i < npix; ++i) {
            const double d = static_cast<double>(proj[static_cast<std::size_t>(i)]) -
                             static_cast<double>(g.data[static_cast<std::size_t>(i)]);
            s += d * d;
            residual[static_cast<std::size_t>(i)] = static_cast<T>(2.0 * d / denom);
        }
        loss += s;  // commutative pairwise: two-view order cannot matter
        view_grad[k].assign(static_cast<std::size_t>(nvox), T(0));
        backproject_span(residual.data(), gs, g.geometry, proj_cfg, view_grad[k].data());
    }
    loss /= denom;

    // Per-view buffers summed voxelwise keep the two-view case exactly
    // order-invariant (IEEE addition commutes; only regrouping does not).
    std::vector<T> dvol = std::move(view_grad[0]);
    for (std::size_t k = 1; k < nviews; ++k)
        for (int64_t i = 0; i < nvox; ++i)
            dvol[static_cast<std::size_t>(i)] += view_grad[k][static_cast<std::size_t>(i)];

    // Pass B: re-run the field chunk by chunk with tapes and accumulate
    // parameter gradients. Chunks merge in ascending order, so results are
    // independent of the worker count.
    grads = zero_like(params);
    const bool hash = spec.kind == EncoderKind::hash;
    struct Slot {
        MlpParams<T> dphi;
        EncoderPlan<T> plan;
        MatX<T> dx;
        std::vector<Vec3> xn;
        int64_t len = 0;
        bool init = false;
    };
    const int threads = proj_cfg.parallel.threads;
    const int slots = std::min<int>(4, std::max(1, threads) + 1);
    std::vector<Slot> slot_data(static_cast<std::size_t>(slots));

    auto produce = [&](int64_t, int64_t begin, int64_t end, int si) {
        Slot& s = slot_data[static_cast<std::size_t>(si)];
        const int64_t len = end - begin;
        s.len = len;
        if (!s.init) {
            s.dphi = MlpParams<T>::zeros(spec.mlp);
            s.init = true;
        } else {
            for (auto& w : s.dphi.W) w.setZero();
            for (auto& b : s.dphi.b) b.setZero();
        }
        const int in_dim = spec.mlp.in_dim;
        MatX<T> feats(in_dim, len);
        if (hash) {
            s.xn.clear();
            s.xn.reserve(static_cast<std::size_t>(len));
            for (int64_t i = begin; i < end; ++i) {
                auto p = detail::voxel_triple(grid, i);
                s.xn.push_back(normalize_coords(p[0], p[1], p[2], grid));
            }
            s.plan.build(spec.hash, grid, s.xn);
            s.plan.gather(params.theta, 0, len, feats);
        } else {
            std::vector<double> col(static_cast<std::size_t>(in_dim));
            for (int64_t i = begin; i < end; ++i) {
                auto p = detail::voxel_triple(grid, i);
                Vec3 xu = unit_from_normalized(normalize_coords(p[0], p[1], p[2], grid), grid);
                frequency_encode(xu, spec.freq.frequencies, col.data());
                for (int j = 0; j < in_dim; ++j)
                    feats(j, i - begin) = static_cast<T>(col[static_cast<std::size_t>(j)]);
            }
        }
        s.dx.resize(in_dim, len);
        MatX<T> block(in_dim, kMlpBlockCols);
        MatX<T> upstream(spec.mlp.out_dim, kMlpBlockCols);
        MlpTape<T> tape;
        for (int64_t start = 0; start < len; start += kMlpBlockCols) {
            const int64_t nb = std::min<int64_t>(kMlpBlockCols, len - start);
            block.leftCols(nb) = feats.middleCols(start, nb);
            if (nb < kMlpBlockCols) block.rightCols(kMlpBlockCols - nb).setZero();
            mlp_forward(spec.mlp, params.phi, block, &tape);
            upstream.setZero();
            for (int64_t j = 0; j < nb; ++j)
                upstream(0, j) = dvol[static_cast<std::size_t>(begin + start + j)];
            MatX<T> dxb = mlp_backward(spec.mlp, params.phi, tape, upstream, s.dphi);
            s.dx.middleCols(start, nb) = dxb.leftCols(nb);
        }
    };
    auto merge = [&](int64_t, int si) {
        Slot& s = slot_data[static_cast<std::size_t>(si)];
        for (std::size_t i = 0; i < s.dphi.W.size(); ++i) grads.phi.W[i] += s.dphi.W[i];
        for (std::size_t i = 0; i < s.dphi.b.size(); ++i) grads.phi.b[i] += s.dphi.b[i];
        if (hash) s.plan.scatter(s.dx, 0, s.len, grads.theta);
    };
    ordered_chunked_run(nvox, chunk_points, threads, slots, produce, merge);

    if (volume_out) *volume_out = std::move(vol);
    return loss;
}

/// Full self-supervised optimization: per iteration render -> project ->
/// MSE -> backpropagate -> Adam. Loss is recorded every iteration; when
/// ground truth is given, full metric reports are added every log_every
/// iterations and at the final one. A non-finite loss or gradient aborts,
/// returning the last good parameters. Deterministic per seed; bitwise
/// reproducible for any thread count in deterministic mode.
///
/// `start_iteration` labels the first executed iteration start_iteration+1
/// and runs through cfg.iterations; pass a checkpointed params/adam pair to
/// resume a run bitwise-identically.
TrainResult train(const FieldSpec& spec, const VolumeGrid& grid,
                  const std::vector<ProjectionImage>& targets, const TrainConfig& cfg,
                  const VolumeGrid* ground_truth = nullptr,
                  const FieldParams<float>* warm_start = nullptr,
                  const AdamState* adam_resume = nullptr, int64_t start_iteration = 0);

}  // namespace vrec
