#pragma once

#include <Eigen/Core>

#include "vrec/volume.hpp"

namespace vrec {

using Vec3 = Eigen::Vector3d;

/// One cone-beam view: C-arm distances, rotation angles, and detector layout.
struct ProjectionGeometry {
    double dsd_mm = 1000.0;      // source to detector
    double dso_mm = 750.0;       // source to rotation origin
    double primary_deg = 0.0;
    double secondary_deg = 0.0;
    int det_u = 512, det_v = 512;
    double du_mm = 0.2779, dv_mm = 0.2779;

    void validate() const;
};

/// Realized pose of one view: source position, detector center, and the
/// orthonormal in-plane detector axes. All in mm, volume-centered frame.
struct Pose {
    Vec3 source_pos;
    Vec3 det_center;
    Vec3 det_u_axis;
    Vec3 det_v_axis;
};

struct Ray {
    Vec3 origin;
    Vec3 dir;  // unit length
};

/// Voxel index triple (1-based, matching the normalization contract) to
/// physical mm coordinates, centered on the volume origin:
///   x' = -n' + (x-1)*s  with  n' = (n*s - s)/2  per axis.
Vec3 normalize_coords(int ix, int iy, int iz, const VolumeGrid& grid);

/// Half-extent n' of the normalized coordinate range per axis.
Vec3 normalized_half_extent(const VolumeGrid& grid);

/// Pose realization of the angle convention: at (0, 0) the source sits at
/// (0, -dso, 0) with the detector at (0, dsd-dso, 0), u-axis +x, v-axis +z.
/// The primary angle rotates the assembly about +z, the secondary angle then
/// rotates about the already-rotated +x.
Pose build_pose(const ProjectionGeometry& g);

/// Physical center of detector pixel (u, v), 0-based. Pixel centers are laid
/// out symmetrically around det_center with spacing du, dv.
Vec3 pixel_center(const Pose& p, const ProjectionGeometry& g, int u, int v);

/// Ray from the source through the center of detector pixel (u, v).
Ray ray_through_pixel(const Pose& p, const ProjectionGeometry& g, int u, int v);

}  // namespace vrec
