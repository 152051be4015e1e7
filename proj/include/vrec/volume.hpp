#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "vrec/common.hpp"

namespace vrec {

/// Voxel volume with physical spacing. Data is stored x-fastest:
/// data[x + nx*(y + ny*z)]. Values are either continuous occupancy in [0,1]
/// or binary {0,1}; `is_binary()` checks the latter.
struct VolumeGrid {
    int nx = 0, ny = 0, nz = 0;
    double sx = 0.0, sy = 0.0, sz = 0.0;  // voxel spacing, mm
    std::vector<float> data;

    VolumeGrid() = default;
    VolumeGrid(int nx_, int ny_, int nz_, double sx_, double sy_, double sz_)
        : nx(nx_), ny(ny_), nz(nz_), sx(sx_), sy(sy_), sz(sz_) {
        validate_shape();
        data.assign(voxel_count(), 0.0f);
    }

    std::size_t voxel_count() const {
        return static_cast<std::size_t>(nx) * ny * nz;
    }

    std::size_t index(int x, int y, int z) const {
        return static_cast<std::size_t>(x) +
               static_cast<std::size_t>(nx) * (static_cast<std::size_t>(y) + static_cast<std::size_t>(ny) * z);
    }

    float at(int x, int y, int z) const { return data[index(x, y, z)]; }
    float& at(int x, int y, int z) { return data[index(x, y, z)]; }

    bool in_bounds(int x, int y, int z) const {
        return x >= 0 && x < nx && y >= 0 && y < ny && z >= 0 && z < nz;
    }

    bool same_shape(const VolumeGrid& other) const {
        return nx == other.nx && ny == other.ny && nz == other.nz;
    }

    bool is_binary() const {
        for (float v : data)
            if (v != 0.0f && v != 1.0f) return false;
        return true;
    }

    void validate_shape() const {
        if (nx < 1 || ny < 1 || nz < 1) throw ConfigError("volume.size", "all voxel counts must be >= 1");
        if (sx <= 0.0 || sy <= 0.0 || sz <= 0.0) throw ConfigError("volume.spacing_mm", "all spacings must be > 0");
    }

    void validate() const {
        validate_shape();
        if (data.size() != voxel_count()) throw ConfigError("volume.data", "payload length != nx*ny*nz");
    }
};

/// Shape-and-spacing view of a volume, for code that carries its payload in
/// a caller-owned buffer (any scalar type) or needs only the geometry.
struct GridShape {
    int nx = 0, ny = 0, nz = 0;
    double sx = 0, sy = 0, sz = 0;

    GridShape() = default;
    GridShape(int nx_, int ny_, int nz_, double sx_, double sy_, double sz_)
        : nx(nx_), ny(ny_), nz(nz_), sx(sx_), sy(sy_), sz(sz_) {}
    explicit GridShape(const VolumeGrid& g) : nx(g.nx), ny(g.ny), nz(g.nz), sx(g.sx), sy(g.sy), sz(g.sz) {}

    int64_t voxel_count() const { return static_cast<int64_t>(nx) * ny * nz; }
    double min_spacing() const { return std::min(sx, std::min(sy, sz)); }

    void validate() const {
        if (nx < 1 || ny < 1 || nz < 1) throw ConfigError("grid.size", "all voxel counts must be >= 1");
        if (sx <= 0.0 || sy <= 0.0 || sz <= 0.0) throw ConfigError("grid.spacing_mm", "all spacings must be > 0");
    }
};

/// Threshold a continuous occupancy volume: voxel >= threshold -> 1, else 0.
/// The tie at the threshold goes to foreground.
inline VolumeGrid binarize(const VolumeGrid& vol, double threshold) {
    if (!(threshold > 0.0) || !(threshold < 1.0))
        throw ConfigError("threshold", "must be in (0, 1)");
    VolumeGrid out(vol.nx, vol.ny, vol.nz, vol.sx, vol.sy, vol.sz);
    for (std::size_t i = 0; i < vol.data.size(); ++i)
        out.data[i] = vol.data[i] >= static_cast<float>(threshold) ? 1.0f : 0.0f;
    return out;
}

}  // namespace vrec
