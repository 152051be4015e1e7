#include "vrec/phantom.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace vrec {
namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr int kSubdiv = 12;        // dense samples per centerline control segment
constexpr int kMaxAttempts = 16;   // rasterization retries before giving up

struct Branch {
    int level = 0;
    int parent = -1;
    double radius = 0.0;
    std::vector<Vec3> dense;  // smoothed centerline samples
    Vec3 start_tangent = Vec3::Zero();
    Vec3 end_tangent = Vec3::Zero();
};

Vec3 random_unit(Rng& rng) {
    double z = rng.uniform(-1.0, 1.0);
    double az = rng.uniform(0.0, 2.0 * kPi);
    double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    return Vec3(r * std::cos(az), r * std::sin(az), z);
}

/// Rotate `d` by `angle` within the plane spanned by `d` and a random
/// direction perpendicular to it. Leaves `d` untouched for a zero angle, so
/// a zero bend budget yields perfectly straight centerlines.
Vec3 rotate_by(const Vec3& d, Rng& rng, double angle) {
    if (angle == 0.0) return d;
    Vec3 u;
    for (;;) {
        u = d.cross(random_unit(rng));
        double n = u.norm();
        if (n > 1e-6) {
            u /= n;
            break;
        }
    }
    return (d * std::cos(angle) + u * std::sin(angle)).normalized();
}

/// Distance from `p` along `d` (unit) to the boundary of the axis-aligned box
/// |x_i| <= box_i. Zero when already outside.
double chord_to_box(const Vec3& p, const Vec3& d, const Vec3& box) {
    double t = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        if (std::abs(d[a]) < 1e-12) continue;
        double room = d[a] > 0.0 ? box[a] - p[a] : p[a] + box[a];
        t = std::min(t, room / std::abs(d[a]));
    }
    return std::max(0.0, std::isfinite(t) ? t : 0.0);
}

/// Random walk of `k` control points from `p` along `d` with per-step bends
/// bounded by `bend_max`, kept inside the safe box by reflecting at walls.
std::vector<Vec3> walk_control_points(Rng& rng, Vec3 p, Vec3 d, double step, int k,
                                      double bend_max, const Vec3& box) {
    std::vector<Vec3> pts{p};
    pts.reserve(static_cast<std::size_t>(k));
    for (int i = 1; i < k; ++i) {
        if (bend_max > 0.0) d = rotate_by(d, rng, rng.uniform(0.0, bend_max));
        Vec3 q = p + step * d;
        for (int a = 0; a < 3; ++a) {
            if (std::abs(q[a]) > box[a]) {
                d[a] = -d[a];
                q = p + step * d;
            }
        }
        for (int a = 0; a < 3; ++a) q[a] = std::clamp(q[a], -box[a], box[a]);
        pts.push_back(q);
        p = q;
    }
    return pts;
}

/// Catmull-Rom interpolation through the control points (mirrored phantom
/// endpoints), sampled uniformly. Collinear equally spaced control points
/// reproduce their straight line exactly.
std::vector<Vec3> smooth_centerline(const std::vector<Vec3>& c) {
    const std::size_t k = c.size();
    if (k < 2) return c;
    std::vector<Vec3> p(k + 2);
    for (std::size_t i = 0; i < k; ++i) p[i + 1] = c[i];
    p[0] = 2.0 * c[0] - c[1];
    p[k + 1] = 2.0 * c[k - 1] - c[k - 2];

    std::vector<Vec3> out;
    out.reserve((k - 1) * kSubdiv + 1);
    for (std::size_t seg = 0; seg + 1 < k; ++seg) {
        const Vec3 &p0 = p[seg], &p1 = p[seg + 1], &p2 = p[seg + 2], &p3 = p[seg + 3];
        for (int j = 0; j < kSubdiv; ++j) {
            double t = static_cast<double>(j) / kSubdiv;
            double t2 = t * t, t3 = t2 * t;
            out.push_back(0.5 * (2.0 * p1 + (p2 - p0) * t +
                                 (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t2 +
                                 (3.0 * p1 - p0 - 3.0 * p2 + p3) * t3));
        }
    }
    out.push_back(c[k - 1]);
    return out;
}

double polyline_length(const std::vector<Vec3>& pts) {
    double s = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i) s += (pts[i] - pts[i - 1]).norm();
    return s;
}

/// Point and unit tangent at arc-length fraction `f` of a polyline.
void point_at_fraction(const std::vector<Vec3>& pts, double f, Vec3& point, Vec3& tangent) {
    double total = polyline_length(pts);
    double target = f * total;
    double acc = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i) {
        Vec3 d = pts[i] - pts[i - 1];
        double len = d.norm();
        if (acc + len >= target || i + 1 == pts.size()) {
            double t = len > 0.0 ? std::clamp((target - acc) / len, 0.0, 1.0) : 0.0;
            point = pts[i - 1] + t * d;
            tangent = len > 0.0 ? Vec3(d / len) : Vec3(0, 0, 1);
            return;
        }
        acc += len;
    }
    point = pts.back();
    tangent = Vec3(0, 0, 1);
}

std::vector<Branch> build_tree(const PhantomSpec& spec, Rng& rng) {
    const GridShape& g = spec.grid;
    const double min_sp = g.min_spacing();
    const double max_sp = std::max(g.sx, std::max(g.sy, g.sz));
    const Vec3 half_extent((g.nx - 1) * g.sx / 2.0, (g.ny - 1) * g.sy / 2.0, (g.nz - 1) * g.sz / 2.0);
    const double range_rad = spec.branch_angle_range_deg * kPi / 180.0;
    const int k = spec.control_points;
    const double bend_per_step = range_rad / (k - 1);

    auto safe_box = [&](double radius) {
        // Keep centerlines at least one voxel plus the tube radius away from
        // the outermost voxel centers so no foreground reaches a boundary face.
        Vec3 b;
        for (int a = 0; a < 3; ++a) {
            double s = a == 0 ? g.sx : (a == 1 ? g.sy : g.sz);
            b[a] = half_extent[a] - s - radius - max_sp;
        }
        return b;
    };
    auto check_radius = [&](double r, const char* field) {
        if (r < min_sp)
            throw ConfigError(field, "tube radius " + std::to_string(r) +
                                         " mm falls below the smallest voxel spacing " +
                                         std::to_string(min_sp) + " mm: unresolvable vessel");
    };

    std::vector<Branch> tree;
    tree.reserve(static_cast<std::size_t>(spec.n_branches));

    // Root branch: a walk through the volume center.
    {
        double r0 = spec.radius_root_mm;
        check_radius(r0, "phantom.radius_root_mm");
        Vec3 box = safe_box(r0);
        if (box.minCoeff() <= 0.0)
            throw ConfigError("phantom.radius_root_mm",
                              "tube does not fit inside the grid with a 1-voxel margin");
        Vec3 d = random_unit(rng);
        double half_len = 0.8 * std::min(chord_to_box(Vec3::Zero(), d, box),
                                         chord_to_box(Vec3::Zero(), -d, box));
        double step = 2.0 * half_len / (k - 1);
        Branch b;
        b.level = 0;
        b.parent = -1;
        b.radius = r0;
        b.dense = smooth_centerline(walk_control_points(rng, -half_len * d, d, step, k, bend_per_step, box));
        tree.push_back(std::move(b));
    }

    for (int j = 1; j < spec.n_branches; ++j) {
        int parent = -1;
        Vec3 attach = Vec3::Zero(), dir = Vec3::Zero();
        double radius = 0.0, reach = 0.0;
        Vec3 box = Vec3::Zero();
        for (int attempt = 0; attempt < 8; ++attempt) {
            parent = static_cast<int>(rng.index(static_cast<uint64_t>(tree.size())));
            const Branch& p = tree[static_cast<std::size_t>(parent)];
            radius = p.radius * spec.radius_taper;
            check_radius(radius, "phantom.radius_taper");
            box = safe_box(radius);
            Vec3 tangent;
            point_at_fraction(p.dense, rng.uniform(0.2, 0.8), attach, tangent);
            double off_angle = range_rad > 0.0 ? rng.uniform(0.35, 1.0) * range_rad : 0.0;
            dir = rotate_by(tangent, rng, off_angle);
            reach = chord_to_box(attach, dir, box);
            if (reach >= 3.0 * min_sp) break;
        }
        double len = rng.uniform(0.45, 0.8) * reach;
        double step = len / (k - 1);
        Branch b;
        b.level = tree[static_cast<std::size_t>(parent)].level + 1;
        b.parent = parent;
        b.radius = radius;
        b.dense = smooth_centerline(walk_control_points(rng, attach, dir, step, k, bend_per_step, box));
        tree.push_back(std::move(b));
    }

    for (Branch& b : tree) {
        auto tangent_of = [](const Vec3& a, const Vec3& c) {
            Vec3 d = c - a;
            double n = d.norm();
            return n > 1e-9 ? Vec3(d / n) : Vec3::Zero();
        };
        if (b.dense.size() >= 2) {
            b.start_tangent = tangent_of(b.dense.front(), b.dense[1]);
            b.end_tangent = tangent_of(b.dense[b.dense.size() - 2], b.dense.back());
        }
    }
    return tree;
}

/// One swept segment plus the flags telling which branch-end cap planes apply.
struct Seg {
    Vec3 a, b;
    double radius = 0.0;
    int branch = 0;
    bool cap_start = false, cap_end = false;
};

void rasterize(const std::vector<Branch>& tree, const GridShape& g, const ParallelConfig& par,
               VolumeGrid& out) {
    const Vec3 half_extent((g.nx - 1) * g.sx / 2.0, (g.ny - 1) * g.sy / 2.0, (g.nz - 1) * g.sz / 2.0);
    std::vector<Seg> segs;
    for (std::size_t bi = 0; bi < tree.size(); ++bi) {
        const Branch& b = tree[bi];
        if (b.dense.size() < 2) continue;
        const std::size_t n = b.dense.size() - 1;  // dense segment count
        for (std::size_t i = 0; i < n; ++i) {
            Seg s;
            s.a = b.dense[i];
            s.b = b.dense[i + 1];
            s.radius = b.radius;
            s.branch = static_cast<int>(bi);
            // Cap planes trim the first and last control segment's sweep so
            // branch ends are flat instead of hemispherical.
            s.cap_start = i < static_cast<std::size_t>(kSubdiv);
            s.cap_end = i + static_cast<std::size_t>(kSubdiv) >= n;
            segs.push_back(s);
        }
    }

    auto center_of = [&](int ix, int iy, int iz) {
        return Vec3(-half_extent[0] + ix * g.sx, -half_extent[1] + iy * g.sy,
                    -half_extent[2] + iz * g.sz);
    };
    auto idx_lo = [](double coord, double h, double s, int n) {
        return std::clamp(static_cast<int>(std::ceil((coord + h) / s - 1e-9)), 0, n - 1);
    };
    auto idx_hi = [](double coord, double h, double s, int n) {
        return std::clamp(static_cast<int>(std::floor((coord + h) / s + 1e-9)), 0, n - 1);
    };

    parallel_for_chunks(g.nz, 4, par.threads, [&](int64_t z0, int64_t z1) {
        for (const Seg& s : segs) {
            const Branch& br = tree[static_cast<std::size_t>(s.branch)];
            Vec3 lo = s.a.cwiseMin(s.b) - Vec3::Constant(s.radius);
            Vec3 hi = s.a.cwiseMax(s.b) + Vec3::Constant(s.radius);
            int zlo = std::max<int>(static_cast<int>(z0), idx_lo(lo[2], half_extent[2], g.sz, g.nz));
            int zhi = std::min<int>(static_cast<int>(z1) - 1, idx_hi(hi[2], half_extent[2], g.sz, g.nz));
            if (zlo > zhi) continue;
            int ylo = idx_lo(lo[1], half_extent[1], g.sy, g.ny);
            int yhi = idx_hi(hi[1], half_extent[1], g.sy, g.ny);
            int xlo = idx_lo(lo[0], half_extent[0], g.sx, g.nx);
            int xhi = idx_hi(hi[0], half_extent[0], g.sx, g.nx);
            const Vec3 ab = s.b - s.a;
            const double ab2 = ab.squaredNorm();
            const double r2 = s.radius * s.radius;
            for (int z = zlo; z <= zhi; ++z)
                for (int y = ylo; y <= yhi; ++y)
                    for (int x = xlo; x <= xhi; ++x) {
                        Vec3 c = center_of(x, y, z);
                        double t = ab2 > 0.0 ? std::clamp((c - s.a).dot(ab) / ab2, 0.0, 1.0) : 0.0;
                        if ((c - (s.a + t * ab)).squaredNorm() > r2) continue;
                        if (s.cap_start && br.start_tangent.squaredNorm() > 0.0 &&
                            (c - br.dense.front()).dot(br.start_tangent) < 0.0)
                            continue;
                        if (s.cap_end && br.end_tangent.squaredNorm() > 0.0 &&
                            (c - br.dense.back()).dot(br.end_tangent) > 0.0)
                            continue;
                        out.at(x, y, z) = 1.0f;
                    }
        }
    });
}

bool touches_boundary(const VolumeGrid& v) {
    for (int z = 0; z < v.nz; ++z)
        for (int y = 0; y < v.ny; ++y)
            for (int x = 0; x < v.nx; ++x) {
                if (x > 0 && x < v.nx - 1 && y > 0 && y < v.ny - 1 && z > 0 && z < v.nz - 1)
                    continue;
                if (v.at(x, y, z) != 0.0f) return true;
            }
    return false;
}

int count_components26(const VolumeGrid& v) {
    std::vector<uint8_t> seen(v.voxel_count(), 0);
    std::vector<int64_t> stack;
    int comps = 0;
    const int64_t nx = v.nx, ny = v.ny, nz = v.nz;
    for (int64_t start = 0; start < static_cast<int64_t>(v.voxel_count()); ++start) {
        if (v.data[static_cast<std::size_t>(start)] == 0.0f || seen[static_cast<std::size_t>(start)])
            continue;
        ++comps;
        seen[static_cast<std::size_t>(start)] = 1;
        stack.push_back(start);
        while (!stack.empty()) {
            int64_t cur = stack.back();
            stack.pop_back();
            int64_t x = cur % nx, y = (cur / nx) % ny, z = cur / (nx * ny);
            for (int dz = -1; dz <= 1; ++dz)
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        if (dx == 0 && dy == 0 && dz == 0) continue;
                        int64_t X = x + dx, Y = y + dy, Z = z + dz;
                        if (X < 0 || X >= nx || Y < 0 || Y >= ny || Z < 0 || Z >= nz) continue;
                        int64_t f = X + nx * (Y + ny * Z);
                        if (v.data[static_cast<std::size_t>(f)] == 0.0f || seen[static_cast<std::size_t>(f)])
                            continue;
                        seen[static_cast<std::size_t>(f)] = 1;
                        stack.push_back(f);
                    }
        }
    }
    return comps;
}

}  // namespace

VolumeGrid generate_phantom(const PhantomSpec& spec, const ParallelConfig& par, PhantomInfo* info) {
    spec.validate();
    const GridShape& g = spec.grid;

    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        Rng rng(spec.seed ^ (static_cast<uint64_t>(attempt) * 0x9E3779B97F4A7C15ULL));
        std::vector<Branch> tree = build_tree(spec, rng);
        VolumeGrid vol(g.nx, g.ny, g.nz, g.sx, g.sy, g.sz);
        rasterize(tree, g, par, vol);

        bool nonempty = false;
        for (float v : vol.data)
            if (v != 0.0f) {
                nonempty = true;
                break;
            }
        if (!nonempty || touches_boundary(vol) || count_components26(vol) != 1) continue;

        if (info) {
            info->branches.clear();
            for (const Branch& b : tree) {
                PhantomBranch pb;
                pb.level = b.level;
                pb.parent = b.parent;
                pb.radius_mm = b.radius;
                pb.centerline = b.dense;
                info->branches.push_back(std::move(pb));
            }
            info->attempts = attempt + 1;
        }
        return vol;
    }
    throw std::runtime_error("generate_phantom: no attempt produced a clean single-component tree "
                             "inside the margin; try a different seed or a larger grid");
}

}  // namespace vrec
