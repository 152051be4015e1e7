#pragma once

#include <cstdint>
#include <vector>

#include "vrec/common.hpp"
#include "vrec/geometry.hpp"
#include "vrec/parallel.hpp"
#include "vrec/volume.hpp"

namespace vrec {

/// Recipe for a synthetic branching vessel tree: tapered tubes swept along
/// smooth piecewise-cubic centerlines inside a voxel grid.
struct PhantomSpec {
    uint64_t seed = 0;
    int n_branches = 3;                   // total branches, root included
    double radius_root_mm = 3.0;          // tube radius of the root branch
    double radius_taper = 0.75;           // radius factor per branch level, (0, 1]
    double branch_angle_range_deg = 40.0; // total bend budget per branch; also caps branch-off angles
    int control_points = 5;               // centerline control points per branch
    GridShape grid;                       // target raster

    void validate() const {
        if (n_branches < 1) throw ConfigError("phantom.n_branches", "must be >= 1");
        if (!(radius_root_mm > 0.0)) throw ConfigError("phantom.radius_root_mm", "must be > 0");
        if (!(radius_taper > 0.0) || !(radius_taper <= 1.0))
            throw ConfigError("phantom.radius_taper", "must be in (0, 1]");
        if (branch_angle_range_deg < 0.0 || branch_angle_range_deg > 180.0)
            throw ConfigError("phantom.branch_angle_range_deg", "must be in [0, 180]");
        if (control_points < 2) throw ConfigError("phantom.control_points", "must be >= 2");
        grid.validate();
    }
};

/// Rasterize the branching tree described by `spec` into a binary volume.
///
/// Guarantees: deterministic per seed (independent of thread count); the
/// foreground is exactly one 26-connected component; no foreground voxel lies
/// on a boundary face of the grid (1-voxel margin). With
/// branch_angle_range_deg == 0 every centerline is straight, so a single
/// branch produces a solid flat-capped cylinder.
///
/// Throws ConfigError when any branch radius (root radius tapered by level)
/// falls below the smallest voxel spacing: such a vessel cannot be resolved
/// on the grid.
///
/// When `info` is non-null it receives the generated tree's metadata: the
/// smoothed centerline polyline, radius, tree level, and parent index of
/// every branch (parent -1 for the root).
struct PhantomBranch {
    int level = 0;
    int parent = -1;
    double radius_mm = 0.0;
    std::vector<Vec3> centerline;
};

struct PhantomInfo {
    std::vector<PhantomBranch> branches;
    int attempts = 1;
};

VolumeGrid generate_phantom(const PhantomSpec& spec, const ParallelConfig& par = {},
                            PhantomInfo* info = nullptr);

}  // namespace vrec
