#include "vrec/trainer.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

namespace vrec {

namespace {

template <typename P, typename S>
std::vector<S> spans_of(P& p) {
    std::vector<S> out;
    for (auto& table : p.theta.tables) out.push_back(S(table.data(), table.size()));
    for (std::size_t i = 0; i < p.phi.W.size(); ++i) {
        out.push_back(S(p.phi.W[i].data(), static_cast<std::size_t>(p.phi.W[i].size())));
        out.push_back(S(p.phi.b[i].data(), static_cast<std::size_t>(p.phi.b[i].size())));
    }
    return out;
}

}  // namespace

std::vector<std::span<float>> param_spans(FieldParams<float>& p) {
    return spans_of<FieldParams<float>, std::span<float>>(p);
}

std::vector<std::span<const float>> param_spans(const FieldParams<float>& p) {
    return spans_of<const FieldParams<float>, std::span<const float>>(p);
}

void adam_step(const std::vector<std::span<float>>& params,
               const std::vector<std::span<const float>>& grads, AdamState& state,
               const TrainConfig& cfg) {
    cfg.validate();
    if (params.size() != grads.size())
        throw ConfigError("adam", "parameter/gradient block counts differ");
    std::size_t total = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].size() != grads[i].size())
            throw ConfigError("adam", "block " + std::to_string(i) + " shape mismatch");
        total += params[i].size();
    }
    if (state.m.empty() && state.v.empty()) {
        state.m.assign(total, 0.0f);
        state.v.assign(total, 0.0f);
    }
    if (state.m.size() != total || state.v.size() != total)
        throw ConfigError("adam", "moment buffers do not mirror the parameter blocks");
    // Reject before touching any state, so a failed call is a true no-op.
    for (std::size_t i = 0; i < grads.size(); ++i)
        for (std::size_t j = 0; j < grads[i].size(); ++j)
            if (!std::isfinite(grads[i][j]))
                throw std::runtime_error("adam_step: non-finite gradient in block " +
                                         std::to_string(i) + " at index " + std::to_string(j));

    ++state.t;
    const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
    std::size_t off = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto p = params[i];
        auto g = grads[i];
        for (std::size_t j = 0; j < p.size(); ++j, ++off) {
            const double gj = static_cast<double>(g[j]);
            const double m = b1 * static_cast<double>(state.m[off]) + (1.0 - b1) * gj;
            const double v = b2 * static_cast<double>(state.v[off]) + (1.0 - b2) * gj * gj;
            state.m[off] = static_cast<float>(m);
            state.v[off] = static_cast<float>(v);
            const double update = cfg.lr * (m / bc1) / (std::sqrt(v / bc2) + cfg.adam_eps);
            p[j] = static_cast<float>(static_cast<double>(p[j]) - update);
        }
    }
}

double mse_loss(const std::vector<ProjectionImage>& rendered,
                const std::vector<ProjectionImage>& target,
                std::optional<double> pixel_norm_override) {
    if (rendered.empty() || rendered.size() != target.size())
        throw ConfigError("projections", "need matching non-empty view lists");
    int64_t total_pix = 0;
    for (std::size_t k = 0; k < rendered.size(); ++k) {
        const auto& p = rendered[k];
        const auto& g = target[k];
        if (p.geometry.det_u != g.geometry.det_u || p.geometry.det_v != g.geometry.det_v ||
            p.data.size() != g.data.size())
            throw ConfigError("projections", "view " + std::to_string(k) + " shape mismatch");
        total_pix += static_cast<int64_t>(p.data.size());
    }
    const double denom = pixel_norm_override
                             ? static_cast<double>(rendered.size()) * *pixel_norm_override
                             : static_cast<double>(total_pix);
    if (!(denom > 0.0)) throw ConfigError("projections", "empty detector");
    double loss = 0.0;
    for (std::size_t k = 0; k < rendered.size(); ++k) {
        double s = 0.0;
        const auto& p = rendered[k].data;
        const auto& g = target[k].data;
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double d = static_cast<double>(p[i]) - static_cast<double>(g[i]);
            s += d * d;
        }
        loss += s;
    }
    return loss / denom;
}

VolumeGrid render_volume(const FieldSpec& spec, const FieldParams<float>& params,
                         const VolumeGrid& grid, int64_t chunk_points,
                         const ParallelConfig& par) {
    VolumeGrid out(grid.nx, grid.ny, grid.nz, grid.sx, grid.sy, grid.sz);
    out.data = render_field_values(spec, params, grid, chunk_points, par);
    return out;
}

namespace {

bool all_finite(const std::vector<std::span<const float>>& blocks) {
    for (const auto& b : blocks)
        for (float v : b)
            if (!std::isfinite(v)) return false;
    return true;
}

void check_matches_spec(const FieldSpec& spec, const FieldParams<float>& p) {
    const FieldParams<float> ref = init_field<float>(spec, 0);
    if (p.theta.tables.size() != ref.theta.tables.size())
        throw ConfigError("params.theta", "level count does not match the field spec");
    for (std::size_t i = 0; i < ref.theta.tables.size(); ++i)
        if (p.theta.tables[i].size() != ref.theta.tables[i].size())
            throw ConfigError("params.theta", "table size does not match the field spec");
    if (p.phi.W.size() != ref.phi.W.size() || p.phi.b.size() != ref.phi.b.size())
        throw ConfigError("params.phi", "layer count does not match the field spec");
    for (std::size_t i = 0; i < ref.phi.W.size(); ++i)
        if (p.phi.W[i].rows() != ref.phi.W[i].rows() || p.phi.W[i].cols() != ref.phi.W[i].cols() ||
            p.phi.b[i].size() != ref.phi.b[i].size())
            throw ConfigError("params.phi", "layer shape does not match the field spec");
}

}  // namespace

TrainResult train(const FieldSpec& spec, const VolumeGrid& grid,
                  const std::vector<ProjectionImage>& targets, const TrainConfig& cfg,
                  const VolumeGrid* ground_truth, const FieldParams<float>* warm_start,
                  const AdamState* adam_resume, int64_t start_iteration) {
    spec.validate();
    cfg.validate();
    grid.validate_shape();
    if (cfg.projector.noise_sigma != 0.0)
        throw ConfigError("trainer.projector.noise_sigma",
                          "noise is simulation-only; must be 0 in the optimization loop");
    if (targets.empty()) throw ConfigError("projections", "need at least one view");
    if (start_iteration < 0 || start_iteration > cfg.iterations)
        throw ConfigError("trainer.start_iteration", "must be in [0, iterations]");
    if (ground_truth) {
        ground_truth->validate();
        if (ground_truth->nx != grid.nx || ground_truth->ny != grid.ny ||
            ground_truth->nz != grid.nz)
            throw ConfigError("ground_truth", "shape does not match the reconstruction grid");
    }

    TrainResult res;
    if (warm_start) {
        check_matches_spec(spec, *warm_start);
        res.params = *warm_start;
    } else {
        res.params = init_field<float>(spec, cfg.seed);
    }
    if (adam_resume) res.adam = *adam_resume;

    auto blocks = param_spans(res.params);
    FieldParams<float> grads;
    for (int64_t it = start_iteration + 1; it <= cfg.iterations; ++it) {
        const FieldParams<float> snapshot = res.params;
        const AdamState snap_adam = res.adam;
        std::vector<float> vol;
        double loss = field_loss_and_grads<float>(spec, res.params, grid, targets, cfg.projector,
                                                  cfg.pixel_norm_override, cfg.chunk_points,
                                                  grads, &vol);
        auto grad_blocks = param_spans(std::as_const(grads));
        if (!std::isfinite(loss) || !all_finite(grad_blocks)) {
            res.params = snapshot;
            res.adam = snap_adam;
            res.aborted = true;
            break;
        }
        TrainRecord rec;
        rec.iteration = it;
        rec.loss = loss;
        if (ground_truth && (it % cfg.log_every == 0 || it == cfg.iterations)) {
            VolumeGrid cont(grid.nx, grid.ny, grid.nz, grid.sx, grid.sy, grid.sz);
            cont.data = std::move(vol);
            rec.reports.reserve(cfg.binarize_thresholds.size());
            for (double thr : cfg.binarize_thresholds)
                rec.reports.push_back(evaluate_reconstruction(cont, *ground_truth, thr));
        }
        adam_step(blocks, grad_blocks, res.adam, cfg);
        res.records.push_back(std::move(rec));
    }
    return res;
}

}  // namespace vrec
