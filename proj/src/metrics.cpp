#include "vrec/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <vector>

namespace vrec {

namespace {

void require_same_shape(const VolumeGrid& r, const VolumeGrid& g) {
    if (!r.same_shape(g)) throw ConfigError("metrics.shape", "volumes must have identical dimensions");
}

void require_binary(const VolumeGrid& v, const char* which) {
    if (!v.is_binary()) throw ConfigError(which, "volume must be binary");
}

// ---- thinning ------------------------------------------------------------

// 3x3x3 neighborhood occupancy of p with out-of-bounds read as background.
struct Neighborhood {
    bool fg[3][3][3];
};

void load_neighborhood(const std::vector<uint8_t>& v, int nx, int ny, int nz, int x, int y, int z,
                       Neighborhood& nb) {
    for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                int px = x + dx, py = y + dy, pz = z + dz;
                bool in = px >= 0 && px < nx && py >= 0 && py < ny && pz >= 0 && pz < nz;
                nb.fg[dx + 1][dy + 1][dz + 1] =
                    in && v[static_cast<std::size_t>(px) +
                            static_cast<std::size_t>(nx) * (static_cast<std::size_t>(py) +
                                                            static_cast<std::size_t>(ny) * pz)] != 0;
            }
}

int count_fg_neighbors(const Neighborhood& nb) {
    int n = 0;
    for (int dz = 0; dz < 3; ++dz)
        for (int dy = 0; dy < 3; ++dy)
            for (int dx = 0; dx < 3; ++dx)
                if (!(dx == 1 && dy == 1 && dz == 1) && nb.fg[dx][dy][dz]) ++n;
    return n;
}

// Number of 26-connected components of the foreground in the punctured
// neighborhood. Simple for 26-adjacency iff this is exactly 1 together with
// the background condition below (topological-number characterization).
int t26(const Neighborhood& nb) {
    bool seen[3][3][3] = {};
    int components = 0;
    std::array<std::array<int, 3>, 26> stack;
    for (int sz = 0; sz < 3; ++sz)
        for (int sy = 0; sy < 3; ++sy)
            for (int sx = 0; sx < 3; ++sx) {
                if ((sx == 1 && sy == 1 && sz == 1) || !nb.fg[sx][sy][sz] || seen[sx][sy][sz]) continue;
                ++components;
                int top = 0;
                stack[top++] = {sx, sy, sz};
                seen[sx][sy][sz] = true;
                while (top > 0) {
                    auto [cx, cy, cz] = stack[--top];
                    for (int dz = -1; dz <= 1; ++dz)
                        for (int dy = -1; dy <= 1; ++dy)
                            for (int dx = -1; dx <= 1; ++dx) {
                                int qx = cx + dx, qy = cy + dy, qz = cz + dz;
                                if (qx < 0 || qx > 2 || qy < 0 || qy > 2 || qz < 0 || qz > 2) continue;
                                if (qx == 1 && qy == 1 && qz == 1) continue;  // path may not use p
                                if (!nb.fg[qx][qy][qz] || seen[qx][qy][qz]) continue;
                                seen[qx][qy][qz] = true;
                                stack[top++] = {qx, qy, qz};
                            }
                }
            }
    return components;
}

// Number of 6-connected background components of the 18-neighborhood that
// touch a face neighbor of p (paths stay inside the 18-neighborhood).
int t6(const Neighborhood& nb) {
    auto in_n18 = [](int x, int y, int z) {
        int ax = std::abs(x - 1), ay = std::abs(y - 1), az = std::abs(z - 1);
        int sum = ax + ay + az;
        return sum >= 1 && sum <= 2;
    };
    bool seen[3][3][3] = {};
    int components = 0;
    std::array<std::array<int, 3>, 18> stack;
    static const int face[6][3] = {{0, 1, 1}, {2, 1, 1}, {1, 0, 1}, {1, 2, 1}, {1, 1, 0}, {1, 1, 2}};
    for (const auto& f : face) {
        int sx = f[0], sy = f[1], sz = f[2];
        if (nb.fg[sx][sy][sz] || seen[sx][sy][sz]) continue;
        ++components;
        int top = 0;
        stack[top++] = {sx, sy, sz};
        seen[sx][sy][sz] = true;
        while (top > 0) {
            auto [cx, cy, cz] = stack[--top];
            static const int step[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
            for (const auto& s : step) {
                int qx = cx + s[0], qy = cy + s[1], qz = cz + s[2];
                if (qx < 0 || qx > 2 || qy < 0 || qy > 2 || qz < 0 || qz > 2) continue;
                if (!in_n18(qx, qy, qz)) continue;
                if (nb.fg[qx][qy][qz] || seen[qx][qy][qz]) continue;
                seen[qx][qy][qz] = true;
                stack[top++] = {qx, qy, qz};
            }
        }
    }
    return components;
}

bool deletable(const Neighborhood& nb) {
    // Border-ness and direction are checked by the caller; here: keep line
    // endpoints and isolated voxels, then require topological simplicity.
    int n = count_fg_neighbors(nb);
    if (n <= 1) return false;
    return t26(nb) == 1 && t6(nb) == 1;
}

}  // namespace

VolumeGrid skeletonize_3d(const VolumeGrid& v) {
    v.validate();
    require_binary(v, "skeletonize.input");
    const int nx = v.nx, ny = v.ny, nz = v.nz;
    std::vector<uint8_t> buf(v.data.size());
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = v.data[i] != 0.0f ? 1 : 0;

    auto idx = [&](int x, int y, int z) {
        return static_cast<std::size_t>(x) +
               static_cast<std::size_t>(nx) * (static_cast<std::size_t>(y) + static_cast<std::size_t>(ny) * z);
    };
    auto bg_at = [&](int x, int y, int z) {
        if (x < 0 || x >= nx || y < 0 || y >= ny || z < 0 || z >= nz) return true;
        return buf[idx(x, y, z)] == 0;
    };

    static const int dirs[6][3] = {{0, 0, 1}, {0, 0, -1}, {0, 1, 0}, {0, -1, 0}, {1, 0, 0}, {-1, 0, 0}};
    std::vector<std::array<int, 3>> candidates;
    Neighborhood nb;
    bool changed = true;
    while (changed) {
        changed = false;
        for (const auto& d : dirs) {
            candidates.clear();
            for (int z = 0; z < nz; ++z)
                for (int y = 0; y < ny; ++y)
                    for (int x = 0; x < nx; ++x) {
                        if (buf[idx(x, y, z)] == 0) continue;
                        if (!bg_at(x + d[0], y + d[1], z + d[2])) continue;
                        load_neighborhood(buf, nx, ny, nz, x, y, z, nb);
                        if (deletable(nb)) candidates.push_back({x, y, z});
                    }
            // Sequential recheck: earlier deletions in this subiteration may
            // have invalidated later candidates.
            for (const auto& c : candidates) {
                load_neighborhood(buf, nx, ny, nz, c[0], c[1], c[2], nb);
                if (!deletable(nb)) continue;
                buf[idx(c[0], c[1], c[2])] = 0;
                changed = true;
            }
        }
    }

    VolumeGrid out(v.nx, v.ny, v.nz, v.sx, v.sy, v.sz);
    for (std::size_t i = 0; i < buf.size(); ++i) out.data[i] = buf[i] ? 1.0f : 0.0f;
    return out;
}

OverlapResult overlap_metrics(const VolumeGrid& r, const VolumeGrid& g) {
    require_same_shape(r, g);
    require_binary(r, "overlap.r");
    require_binary(g, "overlap.g");
    int64_t nr = 0, ng = 0, ni = 0;
    for (std::size_t i = 0; i < r.data.size(); ++i) {
        bool a = r.data[i] != 0.0f, b = g.data[i] != 0.0f;
        nr += a;
        ng += b;
        ni += a && b;
    }
    OverlapResult out;
    if (nr + ng == 0) {
        out.dice = 1.0;
        out.iou = 1.0;
        return out;
    }
    out.dice = 2.0 * static_cast<double>(ni) / static_cast<double>(nr + ng);
    out.iou = out.dice / (2.0 - out.dice);
    return out;
}

std::optional<double> cl_dice(const VolumeGrid& r, const VolumeGrid& g) {
    require_same_shape(r, g);
    require_binary(r, "cl_dice.r");
    require_binary(g, "cl_dice.g");
    VolumeGrid sr = skeletonize_3d(r);
    VolumeGrid sg = skeletonize_3d(g);
    int64_t n_sr = 0, n_sr_in_g = 0, n_sg = 0, n_sg_in_r = 0;
    for (std::size_t i = 0; i < r.data.size(); ++i) {
        if (sr.data[i] != 0.0f) {
            ++n_sr;
            if (g.data[i] != 0.0f) ++n_sr_in_g;
        }
        if (sg.data[i] != 0.0f) {
            ++n_sg;
            if (r.data[i] != 0.0f) ++n_sg_in_r;
        }
    }
    if (n_sr == 0 || n_sg == 0) return std::nullopt;
    double tprec = static_cast<double>(n_sr_in_g) / static_cast<double>(n_sr);
    double tsens = static_cast<double>(n_sg_in_r) / static_cast<double>(n_sg);
    if (tprec + tsens == 0.0) return 0.0;
    return 2.0 * tprec * tsens / (tprec + tsens);
}

// ---- chamfer -------------------------------------------------------------

namespace {

std::vector<std::array<int, 3>> foreground_points(const VolumeGrid& v) {
    std::vector<std::array<int, 3>> pts;
    for (int z = 0; z < v.nz; ++z)
        for (int y = 0; y < v.ny; ++y)
            for (int x = 0; x < v.nx; ++x)
                if (v.at(x, y, z) != 0.0f) pts.push_back({x, y, z});
    return pts;
}

// Shared between the accelerated and brute-force paths so their minima are
// the same doubles.
inline double sqdist(const std::array<int, 3>& a, const std::array<int, 3>& b, double sx, double sy,
                     double sz) {
    double dx = (a[0] - b[0]) * sx;
    double dy = (a[1] - b[1]) * sy;
    double dz = (a[2] - b[2]) * sz;
    return dx * dx + dy * dy + dz * dz;
}

double directed_mean_bruteforce(const std::vector<std::array<int, 3>>& from,
                                const std::vector<std::array<int, 3>>& to, double sx, double sy, double sz) {
    double acc = 0.0;
    for (const auto& a : from) {
        double best = sqdist(a, to[0], sx, sy, sz);
        for (std::size_t i = 1; i < to.size(); ++i) best = std::min(best, sqdist(a, to[i], sx, sy, sz));
        acc += best;
    }
    return acc / static_cast<double>(from.size());
}

// Expanding Chebyshev shells over the target's occupancy bitmap. The lower
// bound for shell radius q is (q * min_spacing)^2, so the scan can stop as
// soon as that exceeds the best hit; minima are computed with the identical
// sqdist expression, which makes the result equal to brute force exactly.
double directed_mean_grid(const std::vector<std::array<int, 3>>& from, const VolumeGrid& to_vol,
                          const std::vector<std::array<int, 3>>& to_pts, double sx, double sy, double sz) {
    const double min_s = std::min(sx, std::min(sy, sz));
    const int max_extent = std::max(to_vol.nx, std::max(to_vol.ny, to_vol.nz));
    double acc = 0.0;
    for (const auto& a : from) {
        double best = std::numeric_limits<double>::infinity();
        for (int q = 0; q < max_extent + 1; ++q) {
            if (best < std::numeric_limits<double>::infinity()) {
                double lb = q * min_s;
                if (lb * lb > best) break;
            }
            int x0 = a[0] - q, x1 = a[0] + q;
            int y0 = a[1] - q, y1 = a[1] + q;
            int z0 = a[2] - q, z1 = a[2] + q;
            auto visit = [&](int x, int y, int z) {
                if (!to_vol.in_bounds(x, y, z) || to_vol.at(x, y, z) == 0.0f) return;
                best = std::min(best, sqdist(a, {x, y, z}, sx, sy, sz));
            };
            if (q == 0) {
                visit(a[0], a[1], a[2]);
                continue;
            }
            for (int z = z0; z <= z1; ++z)
                for (int y = y0; y <= y1; ++y) {
                    if (z == z0 || z == z1 || y == y0 || y == y1) {
                        for (int x = x0; x <= x1; ++x) visit(x, y, z);
                    } else {
                        visit(x0, y, z);
                        visit(x1, y, z);
                    }
                }
        }
        if (best == std::numeric_limits<double>::infinity())
            best = directed_mean_bruteforce({a}, to_pts, sx, sy, sz);  // unreachable fallback
        acc += best;
    }
    return acc / static_cast<double>(from.size());
}

void require_same_spacing(const VolumeGrid& r, const VolumeGrid& g) {
    if (r.sx != g.sx || r.sy != g.sy || r.sz != g.sz)
        throw ConfigError("metrics.spacing", "volumes must have identical spacing");
}

}  // namespace

std::optional<double> chamfer_l2(const VolumeGrid& r, const VolumeGrid& g) {
    require_same_shape(r, g);
    require_same_spacing(r, g);
    require_binary(r, "chamfer.r");
    require_binary(g, "chamfer.g");
    auto pr = foreground_points(r);
    auto pg = foreground_points(g);
    if (pr.empty() || pg.empty()) return std::nullopt;
    double a = directed_mean_grid(pr, g, pg, r.sx, r.sy, r.sz);
    double b = directed_mean_grid(pg, r, pr, r.sx, r.sy, r.sz);
    return 0.5 * (a + b);
}

std::optional<double> chamfer_l2_bruteforce(const VolumeGrid& r, const VolumeGrid& g) {
    require_same_shape(r, g);
    require_same_spacing(r, g);
    require_binary(r, "chamfer.r");
    require_binary(g, "chamfer.g");
    auto pr = foreground_points(r);
    auto pg = foreground_points(g);
    if (pr.empty() || pg.empty()) return std::nullopt;
    double a = directed_mean_bruteforce(pr, pg, r.sx, r.sy, r.sz);
    double b = directed_mean_bruteforce(pg, pr, r.sx, r.sy, r.sz);
    return 0.5 * (a + b);
}

std::optional<double> re_error(const VolumeGrid& r, const VolumeGrid& g) {
    require_same_shape(r, g);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < r.data.size(); ++i) {
        double d = static_cast<double>(r.data[i]) - g.data[i];
        num += d * d;
        den += static_cast<double>(g.data[i]) * g.data[i];
    }
    if (den == 0.0) return std::nullopt;
    return num / den;
}

double re_mse(const VolumeGrid& r, const VolumeGrid& g) {
    require_same_shape(r, g);
    double num = 0.0;
    for (std::size_t i = 0; i < r.data.size(); ++i) {
        double d = static_cast<double>(r.data[i]) - g.data[i];
        num += d * d;
    }
    return num / static_cast<double>(r.data.size());
}

MetricsReport evaluate_reconstruction(const VolumeGrid& continuous, const VolumeGrid& gt,
                                      double threshold) {
    require_same_shape(continuous, gt);
    require_binary(gt, "metrics.ground_truth");
    MetricsReport m;
    m.threshold = threshold;
    VolumeGrid bin = binarize(continuous, threshold);
    OverlapResult ov = overlap_metrics(bin, gt);
    m.dice = ov.dice;
    m.iou = ov.iou;
    m.cl_dice = cl_dice(bin, gt);
    m.chamfer_l2 = chamfer_l2(bin, gt);
    m.re_error = re_error(bin, gt);
    m.re_mse = re_mse(bin, gt);
    m.re_error_continuous = re_error(continuous, gt);
    m.re_mse_continuous = re_mse(continuous, gt);
    return m;
}

std::string metrics_csv_header() {
    return "iteration,threshold,loss,clDice,Dice,IoU,reError,CD_l2,reMSE,reError_cont,reMSE_cont";
}

namespace {

void append_num(std::string& s, double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    s += buf;
}

void append_opt(std::string& s, const std::optional<double>& v) {
    s += ',';
    if (v) append_num(s, *v);
}

}  // namespace

std::string metrics_csv_row(int64_t iteration, double loss, const MetricsReport& m) {
    std::string s = std::to_string(iteration);
    s += ',';
    append_num(s, m.threshold);
    s += ',';
    append_num(s, loss);
    append_opt(s, m.cl_dice);
    s += ',';
    append_num(s, m.dice);
    s += ',';
    append_num(s, m.iou);
    append_opt(s, m.re_error);
    append_opt(s, m.chamfer_l2);
    s += ',';
    append_num(s, m.re_mse);
    append_opt(s, m.re_error_continuous);
    s += ',';
    append_num(s, m.re_mse_continuous);
    return s;
}

}  // namespace vrec
