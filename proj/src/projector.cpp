#include "vrec/projector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace vrec {
namespace detail {

RaySpan clip_ray(const Ray& ray, const GridShape& gs, double step) {
    const double half[3] = {gs.nx * gs.sx / 2.0, gs.ny * gs.sy / 2.0, gs.nz * gs.sz / 2.0};
    double t0 = 0.0;
    double t1 = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 3; ++i) {
        double o = ray.origin[i], d = ray.dir[i];
        if (std::abs(d) < 1e-12) {
            if (std::abs(o) > half[i]) return {};  // parallel and outside the slab
            continue;
        }
        double ta = (-half[i] - o) / d;
        double tb = (half[i] - o) / d;
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    if (!(t1 > t0)) return {};
    RaySpan span;
    span.t0 = t0;
    span.n_samples = static_cast<int64_t>(std::floor((t1 - t0) / step));
    return span;
}

}  // namespace detail

std::vector<ProjectionImage> forward_project(const VolumeGrid& vol,
                                             const std::vector<ProjectionGeometry>& geoms,
                                             const ProjectorConfig& cfg) {
    cfg.validate();
    vol.validate();
    GridShape gs(vol);
    std::vector<ProjectionImage> out;
    out.reserve(geoms.size());
    for (std::size_t k = 0; k < geoms.size(); ++k) {
        ProjectionImage img(static_cast<int>(k), geoms[k]);
        forward_project_span(vol.data.data(), gs, geoms[k], cfg, img.data.data());
        if (cfg.noise_sigma > 0.0) {
            Rng rng(cfg.noise_seed + k);
            for (auto& v : img.data) v += static_cast<float>(cfg.noise_sigma * rng.normal());
        }
        out.push_back(std::move(img));
    }
    return out;
}

VolumeGrid backproject(const std::vector<ProjectionImage>& imgs, const GridShape& shape,
                       const std::vector<ProjectionGeometry>& geoms, const ProjectorConfig& cfg) {
    cfg.validate();
    if (imgs.size() != geoms.size())
        throw ConfigError("projections", "image count does not match geometry count");
    VolumeGrid vol(shape.nx, shape.ny, shape.nz, shape.sx, shape.sy, shape.sz);
    for (std::size_t k = 0; k < imgs.size(); ++k) {
        const auto& g = geoms[k];
        if (imgs[k].data.size() != static_cast<std::size_t>(g.det_u) * g.det_v)
            throw ConfigError("projections", "image size does not match its geometry");
        backproject_span(imgs[k].data.data(), shape, g, cfg, vol.data.data());
    }
    return vol;
}

}  // namespace vrec
