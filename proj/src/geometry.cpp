#include "vrec/geometry.hpp"

#include <cmath>

#include <Eigen/Geometry>

namespace vrec {

void ProjectionGeometry::validate() const {
    if (!(dso_mm > 0.0)) throw ConfigError("dso_mm", "must be > 0");
    if (!(dsd_mm > dso_mm)) throw ConfigError("dsd_mm", "must be > dso_mm");
    if (det_u < 1 || det_v < 1) throw ConfigError("det_pixels", "detector pixel counts must be >= 1");
    if (!(du_mm > 0.0) || !(dv_mm > 0.0)) throw ConfigError("det_spacing_mm", "detector spacing must be > 0");
    if (!std::isfinite(primary_deg) || !std::isfinite(secondary_deg))
        throw ConfigError("angle", "angles must be finite");
}

Vec3 normalized_half_extent(const VolumeGrid& grid) {
    return {(grid.nx * grid.sx - grid.sx) / 2.0,
            (grid.ny * grid.sy - grid.sy) / 2.0,
            (grid.nz * grid.sz - grid.sz) / 2.0};
}

Vec3 normalize_coords(int ix, int iy, int iz, const VolumeGrid& grid) {
    if (ix < 1 || ix > grid.nx || iy < 1 || iy > grid.ny || iz < 1 || iz > grid.nz)
        throw std::out_of_range("normalize_coords: index outside [1..n]");
    Vec3 half = normalized_half_extent(grid);
    return {-half.x() + (ix - 1) * grid.sx,
            -half.y() + (iy - 1) * grid.sy,
            -half.z() + (iz - 1) * grid.sz};
}

Pose build_pose(const ProjectionGeometry& g) {
    g.validate();
    const double deg = 3.14159265358979323846 / 180.0;
    Eigen::Matrix3d rz = Eigen::AngleAxisd(g.primary_deg * deg, Vec3::UnitZ()).toRotationMatrix();
    // Secondary rotation is about the primary-rotated +x axis; as a world
    // matrix that composes to Rz * Rx.
    Eigen::Matrix3d r = rz * Eigen::AngleAxisd(g.secondary_deg * deg, Vec3::UnitX()).toRotationMatrix();

    Pose p;
    p.source_pos = r * Vec3(0.0, -g.dso_mm, 0.0);
    p.det_center = r * Vec3(0.0, g.dsd_mm - g.dso_mm, 0.0);
    p.det_u_axis = r * Vec3::UnitX();
    p.det_v_axis = r * Vec3::UnitZ();
    return p;
}

Vec3 pixel_center(const Pose& p, const ProjectionGeometry& g, int u, int v) {
    if (u < 0 || u >= g.det_u || v < 0 || v >= g.det_v)
        throw std::out_of_range("pixel index outside detector");
    double offset_u = (u - (g.det_u - 1) / 2.0) * g.du_mm;
    double offset_v = (v - (g.det_v - 1) / 2.0) * g.dv_mm;
    return p.det_center + offset_u * p.det_u_axis + offset_v * p.det_v_axis;
}

Ray ray_through_pixel(const Pose& p, const ProjectionGeometry& g, int u, int v) {
    Vec3 target = pixel_center(p, g, u, v);
    Ray ray;
    ray.origin = p.source_pos;
    ray.dir = (target - p.source_pos).normalized();
    return ray;
}

}  // namespace vrec
