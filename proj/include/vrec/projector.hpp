#pragma once

#include <cstdint>
#include <vector>

#include "vrec/common.hpp"
#include "vrec/geometry.hpp"
#include "vrec/parallel.hpp"
#include "vrec/volume.hpp"

namespace vrec {

struct ProjectorConfig {
    /// Ray-marching step in mm; <= 0 selects half the smallest voxel spacing.
    double step_mm = 0.0;
    /// Additive Gaussian pixel noise (simulation-only extension; keep 0 in
    /// the optimization loop). Applied after line integration, seeded.
    double noise_sigma = 0.0;
    uint64_t noise_seed = 0;
    ParallelConfig parallel;

    double effective_step(const GridShape& gs) const {
        return step_mm > 0.0 ? step_mm : 0.5 * gs.min_spacing();
    }

    void validate() const {
        if (noise_sigma < 0.0) throw ConfigError("projector.noise_sigma", "must be >= 0");
    }
};

/// Line integrals on one detector, values u-fastest: index = u + det_u * v.
struct ProjectionImage {
    int view_id = 0;
    ProjectionGeometry geometry;
    std::vector<float> data;

    ProjectionImage() = default;
    ProjectionImage(int id, const ProjectionGeometry& g)
        : view_id(id), geometry(g), data(static_cast<std::size_t>(g.det_u) * g.det_v, 0.0f) {}

    float& at(int u, int v) { return data[static_cast<std::size_t>(u) + static_cast<std::size_t>(geometry.det_u) * v]; }
    float at(int u, int v) const { return data[static_cast<std::size_t>(u) + static_cast<std::size_t>(geometry.det_u) * v]; }
};

/// Cone-beam line integrals of the volume for each geometry: fixed-step
/// trilinear ray marching between the ray's bounding-box intersections,
/// scaled by the step length. Linear in the volume payload.
std::vector<ProjectionImage> forward_project(const VolumeGrid& vol,
                                             const std::vector<ProjectionGeometry>& geoms,
                                             const ProjectorConfig& cfg);

/// Exact adjoint of forward_project under identical sampling: every ray
/// sample scatters pixel * step into its 8 interpolation corners.
VolumeGrid backproject(const std::vector<ProjectionImage>& imgs, const GridShape& shape,
                       const std::vector<ProjectionGeometry>& geoms, const ProjectorConfig& cfg);

namespace detail {

/// One ray's marching schedule through the physical box (+-n*s/2 per axis).
struct RaySpan {
    double t0 = 0.0;
    int64_t n_samples = 0;
};

RaySpan clip_ray(const Ray& ray, const GridShape& gs, double step);

/// Trilinear corners of a physical point, edge-clamped: corner coordinates
/// clamp into [0, n-1] per axis, so every sample inside the box carries full
/// weight onto real voxels. Clamping keeps the map linear in the payload and
/// shared between integrate and scatter, which preserves exact adjointness.
struct SampleCorners {
    int64_t idx[8];
    double w[8];
};

inline void corner_weights(const GridShape& gs, const Vec3& p_mm, SampleCorners& out) {
    double g[3] = {(p_mm.x() + (gs.nx * gs.sx - gs.sx) / 2.0) / gs.sx,
                   (p_mm.y() + (gs.ny * gs.sy - gs.sy) / 2.0) / gs.sy,
                   (p_mm.z() + (gs.nz * gs.sz - gs.sz) / 2.0) / gs.sz};
    const int n[3] = {gs.nx, gs.ny, gs.nz};
    int64_t c[3];
    double f[3];
    for (int i = 0; i < 3; ++i) {
        double v = g[i];
        if (v < 0.0) v = 0.0;
        if (v > n[i] - 1) v = n[i] - 1;
        int64_t lo = static_cast<int64_t>(v);
        if (lo > n[i] - 2) lo = n[i] >= 2 ? n[i] - 2 : 0;
        c[i] = lo;
        f[i] = v - static_cast<double>(lo);
    }
    int k = 0;
    for (int dz = 0; dz < 2; ++dz)
        for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx, ++k) {
                int64_t x = std::min<int64_t>(c[0] + dx, n[0] - 1);
                int64_t y = std::min<int64_t>(c[1] + dy, n[1] - 1);
                int64_t z = std::min<int64_t>(c[2] + dz, n[2] - 1);
                out.idx[k] = x + n[0] * (y + static_cast<int64_t>(n[1]) * z);
                out.w[k] = (dx ? f[0] : 1.0 - f[0]) * (dy ? f[1] : 1.0 - f[1]) * (dz ? f[2] : 1.0 - f[2]);
            }
}

/// Integrate one ray over a T-typed payload. Double accumulation.
template <typename T>
double integrate_ray(const T* vol, const GridShape& gs, const Ray& ray, double step) {
    RaySpan span = clip_ray(ray, gs, step);
    double acc = 0.0;
    SampleCorners sc;
    for (int64_t j = 0; j < span.n_samples; ++j) {
        Vec3 p = ray.origin + (span.t0 + (j + 0.5) * step) * ray.dir;
        corner_weights(gs, p, sc);
        double v = 0.0;
        for (int k = 0; k < 8; ++k) v += sc.w[k] * static_cast<double>(vol[sc.idx[k]]);
        acc += v;
    }
    return acc * step;
}

/// Scatter value * step along one ray with the same samples and weights.
template <typename T>
void scatter_ray(T* vol, const GridShape& gs, const Ray& ray, double step, double value) {
    RaySpan span = clip_ray(ray, gs, step);
    SampleCorners sc;
    double scaled = value * step;
    for (int64_t j = 0; j < span.n_samples; ++j) {
        Vec3 p = ray.origin + (span.t0 + (j + 0.5) * step) * ray.dir;
        corner_weights(gs, p, sc);
        for (int k = 0; k < 8; ++k) vol[sc.idx[k]] += static_cast<T>(sc.w[k] * scaled);
    }
}

template <typename T>
void scatter_ray_atomic(T* vol, const GridShape& gs, const Ray& ray, double step, double value) {
    RaySpan span = clip_ray(ray, gs, step);
    SampleCorners sc;
    double scaled = value * step;
    for (int64_t j = 0; j < span.n_samples; ++j) {
        Vec3 p = ray.origin + (span.t0 + (j + 0.5) * step) * ray.dir;
        corner_weights(gs, p, sc);
        for (int k = 0; k < 8; ++k) atomic_add(&vol[sc.idx[k]], static_cast<T>(sc.w[k] * scaled));
    }
}

}  // namespace detail

/// Span-level forward projection of one view into out (det_u * det_v,
/// u-fastest). T is the volume payload type; used directly by the gradient
/// check path, which runs the whole chain in double.
template <typename T>
void forward_project_span(const T* vol, const GridShape& gs, const ProjectionGeometry& geom,
                          const ProjectorConfig& cfg, T* out) {
    geom.validate();
    cfg.validate();
    Pose pose = build_pose(geom);
    double step = cfg.effective_step(gs);
    int64_t npix = static_cast<int64_t>(geom.det_u) * geom.det_v;
    parallel_for_chunks(npix, 4096, cfg.parallel.threads, [&](int64_t begin, int64_t end) {
        for (int64_t i = begin; i < end; ++i) {
            int u = static_cast<int>(i % geom.det_u);
            int v = static_cast<int>(i / geom.det_u);
            Ray ray = ray_through_pixel(pose, geom, u, v);
            out[i] = static_cast<T>(detail::integrate_ray(vol, gs, ray, step));
        }
    });
}

/// Span-level adjoint of one view: accumulates into vol (+=).
template <typename T>
void backproject_span(const T* img, const GridShape& gs, const ProjectionGeometry& geom,
                      const ProjectorConfig& cfg, T* vol) {
    geom.validate();
    cfg.validate();
    Pose pose = build_pose(geom);
    double step = cfg.effective_step(gs);
    int64_t npix = static_cast<int64_t>(geom.det_u) * geom.det_v;
    int64_t nvox = gs.voxel_count();
    auto scatter_range = [&](int64_t begin, int64_t end, T* target) {
        for (int64_t i = begin; i < end; ++i) {
            if (img[i] == T(0)) continue;
            int u = static_cast<int>(i % geom.det_u);
            int v = static_cast<int>(i / geom.det_u);
            Ray ray = ray_through_pixel(pose, geom, u, v);
            detail::scatter_ray(target, gs, ray, step, static_cast<double>(img[i]));
        }
    };
    if (cfg.parallel.threads <= 1) {
        scatter_range(0, npix, vol);
    } else if (cfg.parallel.deterministic) {
        // Per-chunk private buffers merged in chunk order: identical bytes
        // for any thread count.
        const int slots = std::min(4, cfg.parallel.threads + 1);
        std::vector<std::vector<T>> bufs(static_cast<std::size_t>(slots),
                                         std::vector<T>(static_cast<std::size_t>(nvox)));
        ordered_chunked_run(
            npix, 8192, cfg.parallel.threads, slots,
            [&](int64_t, int64_t begin, int64_t end, int slot) {
                auto& b = bufs[static_cast<std::size_t>(slot)];
                std::fill(b.begin(), b.end(), T(0));
                scatter_range(begin, end, b.data());
            },
            [&](int64_t, int slot) {
                const auto& b = bufs[static_cast<std::size_t>(slot)];
                for (int64_t i = 0; i < nvox; ++i) vol[i] += b[static_cast<std::size_t>(i)];
            });
    } else {
        parallel_for_chunks(npix, 4096, cfg.parallel.threads, [&](int64_t begin, int64_t end) {
            for (int64_t i = begin; i < end; ++i) {
                if (img[i] == T(0)) continue;
                int u = static_cast<int>(i % geom.det_u);
                int v = static_cast<int>(i / geom.det_u);
                Ray ray = ray_through_pixel(pose, geom, u, v);
                detail::scatter_ray_atomic(vol, gs, ray, step, static_cast<double>(img[i]));
            }
        });
    }
}

}  // namespace vrec
