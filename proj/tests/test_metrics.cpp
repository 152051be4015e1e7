#include <array>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "vrec/common.hpp"
#include "vrec/metrics.hpp"
#include "vrec/volume.hpp"

using namespace vrec;

namespace {

VolumeGrid cube(int n, double s = 1.0) { return VolumeGrid(n, n, n, s, s, s); }

VolumeGrid box(int nx, int ny, int nz, double sx = 1.0, double sy = 1.0, double sz = 1.0) {
    return VolumeGrid(nx, ny, nz, sx, sy, sz);
}

void setv(VolumeGrid& v, int x, int y, int z, float val = 1.0f) { v.at(x, y, z) = val; }

int fg_count(const VolumeGrid& v) {
    int c = 0;
    for (float f : v.data) c += f != 0.0f;
    return c;
}

std::vector<std::array<int, 3>> fg_points(const VolumeGrid& v) {
    std::vector<std::array<int, 3>> pts;
    for (int z = 0; z < v.nz; ++z)
        for (int y = 0; y < v.ny; ++y)
            for (int x = 0; x < v.nx; ++x)
                if (v.at(x, y, z) != 0.0f) pts.push_back({x, y, z});
    return pts;
}

int components26(const VolumeGrid& v) {
    std::vector<uint8_t> seen(v.data.size(), 0);
    auto idx = [&](int x, int y, int z) {
        return static_cast<std::size_t>(x) +
               static_cast<std::size_t>(v.nx) *
                   (static_cast<std::size_t>(y) + static_cast<std::size_t>(v.ny) * z);
    };
    int comps = 0;
    std::vector<std::array<int, 3>> stack;
    for (int z = 0; z < v.nz; ++z)
        for (int y = 0; y < v.ny; ++y)
            for (int x = 0; x < v.nx; ++x) {
                if (v.at(x, y, z) == 0.0f || seen[idx(x, y, z)]) continue;
                ++comps;
                seen[idx(x, y, z)] = 1;
                stack.push_back({x, y, z});
                while (!stack.empty()) {
                    auto [cx, cy, cz] = stack.back();
                    stack.pop_back();
                    for (int dz = -1; dz <= 1; ++dz)
                        for (int dy = -1; dy <= 1; ++dy)
                            for (int dx = -1; dx <= 1; ++dx) {
                                if (dx == 0 && dy == 0 && dz == 0) continue;
                                int nx = cx + dx, ny = cy + dy, nz = cz + dz;
                                if (nx < 0 || ny < 0 || nz < 0 || nx >= v.nx || ny >= v.ny ||
                                    nz >= v.nz)
                                    continue;
                                if (v.at(nx, ny, nz) == 0.0f || seen[idx(nx, ny, nz)]) continue;
                                seen[idx(nx, ny, nz)] = 1;
                                stack.push_back({nx, ny, nz});
                            }
                }
            }
    return comps;
}

int neighbor_count26(const VolumeGrid& v, int x, int y, int z) {
    int c = 0;
    for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                if (dx == 0 && dy == 0 && dz == 0) continue;
                int nx = x + dx, ny = y + dy, nz = z + dz;
                if (nx < 0 || ny < 0 || nz < 0 || nx >= v.nx || ny >= v.ny || nz >= v.nz) continue;
                c += v.at(nx, ny, nz) != 0.0f;
            }
    return c;
}

bool subset_of(const VolumeGrid& a, const VolumeGrid& b) {
    for (std::size_t i = 0; i < a.data.size(); ++i)
        if (a.data[i] != 0.0f && b.data[i] == 0.0f) return false;
    return true;
}

// Cylinder along x: voxels with (y-cy)^2+(z-cz)^2 <= r^2, x in [x0, x1].
VolumeGrid tube_x(int nx, int ny, int nz, int x0, int x1, int cy, int cz, double r) {
    VolumeGrid v = box(nx, ny, nz);
    for (int z = 0; z < nz; ++z)
        for (int y = 0; y < ny; ++y) {
            double d2 = double(y - cy) * (y - cy) + double(z - cz) * (z - cz);
            if (d2 > r * r) continue;
            for (int x = x0; x <= x1; ++x) setv(v, x, y, z);
        }
    return v;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("overlap: identical non-empty volumes score (1, 1)") {
    VolumeGrid r = cube(6);
    setv(r, 1, 2, 3);
    setv(r, 4, 4, 4);
    auto o = overlap_metrics(r, r);
    CHECK(o.dice == 1.0);
    CHECK(o.iou == 1.0);
}

TEST_CASE("overlap: disjoint volumes score (0, 0)") {
    VolumeGrid r = cube(6), g = cube(6);
    setv(r, 0, 0, 0);
    setv(g, 5, 5, 5);
    auto o = overlap_metrics(r, g);
    CHECK(o.dice == 0.0);
    CHECK(o.iou == 0.0);
}

TEST_CASE("overlap: |R|=2, |G|=2, one shared voxel -> dice 0.5, iou 1/3") {
    VolumeGrid r = cube(4), g = cube(4);
    setv(r, 0, 0, 0);
    setv(r, 1, 0, 0);
    setv(g, 1, 0, 0);
    setv(g, 2, 0, 0);
    auto o = overlap_metrics(r, g);
    CHECK(o.dice == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(o.iou == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("overlap: both empty score (1, 1) by convention") {
    VolumeGrid r = cube(4), g = cube(4);
    auto o = overlap_metrics(r, g);
    CHECK(o.dice == 1.0);
    CHECK(o.iou == 1.0);
}

TEST_CASE("overlap: iou equals dice/(2-dice) exactly on random binary pairs") {
    Rng rng(20240817);
    for (int trial = 0; trial < 1000; ++trial) {
        VolumeGrid r = cube(8), g = cube(8);
        for (std::size_t i = 0; i < r.data.size(); ++i) {
            r.data[i] = rng.uniform() < 0.2 ? 1.0f : 0.0f;
            g.data[i] = rng.uniform() < 0.2 ? 1.0f : 0.0f;
        }
        double inter = 0, nr = 0, ng = 0;
        for (std::size_t i = 0; i < r.data.size(); ++i) {
            nr += r.data[i] != 0.0f;
            ng += g.data[i] != 0.0f;
            inter += r.data[i] != 0.0f && g.data[i] != 0.0f;
        }
        auto o = overlap_metrics(r, g);
        if (nr + ng == 0) {
            CHECK(o.dice == 1.0);
            CHECK(o.iou == 1.0);
            continue;
        }
        CHECK(o.dice == 2.0 * inter / (nr + ng));
        CHECK(o.iou == o.dice / (2.0 - o.dice));  // the identity, bitwise
        double uni = nr + ng - inter;
        if (uni > 0) CHECK(o.iou == doctest::Approx(inter / uni).epsilon(1e-12));
    }
}

TEST_CASE("overlap: shape mismatch and non-binary input are rejected") {
    VolumeGrid r = cube(4), g = cube(5);
    CHECK_THROWS_AS(overlap_metrics(r, g), ConfigError);
    VolumeGrid h = cube(4);
    h.data[0] = 0.5f;
    CHECK_THROWS_AS(overlap_metrics(h, h), ConfigError);
}

TEST_CASE("skeleton: empty volume stays empty") {
    VolumeGrid v = cube(5);
    auto s = skeletonize_3d(v);
    CHECK(fg_count(s) == 0);
}

TEST_CASE("skeleton: single voxel is kept") {
    VolumeGrid v = cube(5);
    setv(v, 2, 2, 2);
    auto s = skeletonize_3d(v);
    CHECK(fg_count(s) == 1);
    CHECK(s.at(2, 2, 2) == 1.0f);
}

TEST_CASE("skeleton: a thin 3-voxel line is already its own skeleton") {
    VolumeGrid v = cube(7);
    for (int x = 2; x <= 4; ++x) setv(v, x, 3, 3);
    auto s = skeletonize_3d(v);
    CHECK(s.data == v.data);
}

TEST_CASE("skeleton: tube thins to a thin connected path spanning its length") {
    // Radius-2 cylinder, 20 voxels long, in a 26x9x9 grid.
    VolumeGrid v = tube_x(26, 9, 9, 3, 22, 4, 4, 2.0);
    REQUIRE(fg_count(v) == 20 * 13);
    auto s = skeletonize_3d(v);

    CHECK(subset_of(s, v));
    CHECK(components26(s) == 1);
    auto pts = fg_points(s);
    REQUIRE(!pts.empty());
    int minx = pts[0][0], maxx = pts[0][0];
    int max_nb = 0;
    for (auto& p : pts) {
        minx = std::min(minx, p[0]);
        maxx = std::max(maxx, p[0]);
        max_nb = std::max(max_nb, neighbor_count26(s, p[0], p[1], p[2]));
    }
    CHECK(maxx - minx >= 13);           // spans most of the 20-voxel extent
    CHECK(max_nb <= 2);                 // a simple path, no junctions
    CHECK(int(pts.size()) <= 2 * 20);   // thin: far below the 260 input voxels

    // Idempotent: thinning the skeleton changes nothing.
    auto s2 = skeletonize_3d(s);
    CHECK(s2.data == s.data);
}

TEST_CASE("skeleton: 26-component count is preserved") {
    VolumeGrid v = box(20, 8, 8);
    for (int z = 2; z <= 4; ++z)
        for (int y = 2; y <= 4; ++y) {
            for (int x = 1; x <= 6; ++x) setv(v, x, y, z);
            for (int x = 12; x <= 18; ++x) setv(v, x, y, z);
        }
    REQUIRE(components26(v) == 2);
    auto s = skeletonize_3d(v);
    CHECK(components26(s) == 2);
    CHECK(subset_of(s, v));
}

TEST_CASE("skeleton: non-binary input is rejected") {
    VolumeGrid v = cube(4);
    v.data[3] = 0.25f;
    CHECK_THROWS_AS(skeletonize_3d(v), ConfigError);
}

TEST_CASE("clDice: identical volumes score 1") {
    VolumeGrid v = tube_x(20, 9, 9, 2, 17, 4, 4, 2.0);
    auto c = cl_dice(v, v);
    REQUIRE(c.has_value());
    CHECK(*c == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("clDice: thick and thin tubes on the same axis score 1") {
    VolumeGrid thick = tube_x(26, 11, 11, 3, 22, 5, 5, 3.0);
    VolumeGrid thin = tube_x(26, 11, 11, 3, 22, 5, 5, 1.0);
    // Premise of the invariant: each skeleton lies inside the other mask.
    auto sr = skeletonize_3d(thick);
    auto sg = skeletonize_3d(thin);
    REQUIRE(subset_of(sr, thin));
    REQUIRE(subset_of(sg, thick));
    auto c = cl_dice(thick, thin);
    REQUIRE(c.has_value());
    CHECK(*c == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("clDice: 5-line vs 3-subline works out to 0.75 by hand") {
    // R: x=0..4 line; G: x=0..2 sub-line. Both are their own skeletons.
    // Tprec = 3/5, Tsens = 3/3 -> harmonic mean 2*(0.6*1)/(0.6+1) = 0.75.
    VolumeGrid r = cube(5), g = cube(5);
    for (int x = 0; x <= 4; ++x) setv(r, x, 2, 2);
    for (int x = 0; x <= 2; ++x) setv(g, x, 2, 2);
    auto c = cl_dice(r, g);
    REQUIRE(c.has_value());
    CHECK(*c == doctest::Approx(0.75).epsilon(1e-15));
}

TEST_CASE("clDice: empty side yields no value") {
    VolumeGrid r = cube(5), g = cube(5);
    setv(g, 2, 2, 2);
    CHECK(!cl_dice(r, g).has_value());
    CHECK(!cl_dice(g, r).has_value());
    CHECK(!cl_dice(r, r).has_value());
}

TEST_CASE("chamfer: identical volumes score 0") {
    VolumeGrid v = cube(8);
    setv(v, 1, 2, 3);
    setv(v, 5, 5, 5);
    setv(v, 7, 0, 2);
    auto c = chamfer_l2(v, v);
    REQUIRE(c.has_value());
    CHECK(*c == 0.0);
}

TEST_CASE("chamfer: single voxels 3 mm apart score 9 mm^2") {
    VolumeGrid r = cube(10), g = cube(10);
    setv(r, 2, 5, 5);
    setv(g, 5, 5, 5);
    auto c = chamfer_l2(r, g);
    REQUIRE(c.has_value());
    CHECK(*c == doctest::Approx(9.0).epsilon(1e-15));
}

TEST_CASE("chamfer: spacing scales squared distances") {
    VolumeGrid r = box(8, 8, 8, 0.5, 2.0, 1.0), g = box(8, 8, 8, 0.5, 2.0, 1.0);
    setv(r, 1, 1, 1);
    setv(g, 3, 2, 1);  // dx=2*0.5=1mm, dy=1*2=2mm -> 1+4 = 5 mm^2
    auto c = chamfer_l2(r, g);
    REQUIRE(c.has_value());
    CHECK(*c == doctest::Approx(5.0).epsilon(1e-15));
}

TEST_CASE("chamfer: accelerated path equals brute force exactly on random sets") {
    Rng rng(77);
    for (int trial = 0; trial < 20; ++trial) {
        VolumeGrid r = box(16, 16, 16, 1.0, 0.7, 1.3);
        VolumeGrid g = box(16, 16, 16, 1.0, 0.7, 1.3);
        for (int i = 0; i < 50; ++i) {
            r.at(int(rng.index(16)), int(rng.index(16)), int(rng.index(16))) = 1.0f;
            g.at(int(rng.index(16)), int(rng.index(16)), int(rng.index(16))) = 1.0f;
        }
        auto fast = chamfer_l2(r, g);
        auto ref = chamfer_l2_bruteforce(r, g);
        REQUIRE(fast.has_value());
        REQUIRE(ref.has_value());
        CHECK(*fast == *ref);  // bitwise: both sides share the distance expression
        auto sym = chamfer_l2(g, r);
        REQUIRE(sym.has_value());
        CHECK(*sym == *fast);
    }
}

TEST_CASE("chamfer: empty side yields no value, spacing mismatch is rejected") {
    VolumeGrid r = cube(6), g = cube(6);
    setv(g, 1, 1, 1);
    CHECK(!chamfer_l2(r, g).has_value());
    CHECK(!chamfer_l2(g, r).has_value());
    CHECK(!chamfer_l2(r, r).has_value());
    VolumeGrid h(6, 6, 6, 2.0, 1.0, 1.0);
    setv(h, 1, 1, 1);
    CHECK_THROWS_AS(chamfer_l2(g, h), ConfigError);
}

TEST_CASE("reError: identical volumes score 0") {
    VolumeGrid g = cube(4);
    setv(g, 1, 1, 1);
    setv(g, 2, 2, 2);
    auto e = re_error(g, g);
    REQUIRE(e.has_value());
    CHECK(*e == 0.0);
}

TEST_CASE("reError: all-zero reconstruction scores 1") {
    VolumeGrid r = cube(4), g = cube(4);
    setv(g, 1, 1, 1);
    setv(g, 3, 0, 2);
    auto e = re_error(r, g);
    REQUIRE(e.has_value());
    CHECK(*e == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("reError: hand-computed continuous example") {
    VolumeGrid r = cube(2), g = cube(2);
    r.data[0] = 0.5f;
    g.data[0] = 1.0f;
    g.data[1] = 1.0f;  // sum((R-G)^2) = 0.25 + 1 = 1.25; sum(G^2) = 2
    auto e = re_error(r, g);
    REQUIRE(e.has_value());
    CHECK(*e == doctest::Approx(0.625).epsilon(1e-15));
}

TEST_CASE("reError: all-zero ground truth yields no value") {
    VolumeGrid r = cube(3), g = cube(3);
    setv(r, 0, 0, 0);
    CHECK(!re_error(r, g).has_value());
}

TEST_CASE("reMSE: identity, and symmetric-difference form on binary volumes") {
    VolumeGrid r = cube(4), g = cube(4);
    setv(r, 0, 0, 0);
    setv(r, 1, 1, 1);
    setv(g, 1, 1, 1);
    setv(g, 2, 2, 2);
    CHECK(re_mse(r, r) == 0.0);
    // Binary volumes: (R-G)^2 is 1 exactly on the symmetric difference.
    CHECK(re_mse(r, g) == doctest::Approx(2.0 / 64.0).epsilon(1e-15));
    VolumeGrid a = cube(2), b = cube(2);
    a.data[0] = 0.25f;
    b.data[0] = 1.0f;  // (0.75^2)/8
    CHECK(re_mse(a, b) == doctest::Approx(0.5625 / 8.0).epsilon(1e-12));
}

TEST_CASE("evaluate_reconstruction: scores the binarized volume plus continuous columns") {
    VolumeGrid cont = cube(6), gt = cube(6);
    for (int x = 0; x < 6; ++x) {
        cont.at(x, 2, 2) = 0.8f;
        setv(gt, x, 2, 2);
    }
    cont.at(0, 0, 0) = 0.3f;  // below threshold, must vanish after binarization
    auto rep = evaluate_reconstruction(cont, gt, 0.5);
    CHECK(rep.threshold == 0.5);
    auto bin = binarize(cont, 0.5);
    auto o = overlap_metrics(bin, gt);
    CHECK(rep.dice == o.dice);
    CHECK(rep.iou == o.iou);
    REQUIRE(rep.re_error.has_value());
    CHECK(*rep.re_error == *re_error(bin, gt));
    CHECK(rep.re_mse == re_mse(bin, gt));
    REQUIRE(rep.re_error_continuous.has_value());
    CHECK(*rep.re_error_continuous == *re_error(cont, gt));
    CHECK(rep.re_mse_continuous == re_mse(cont, gt));
    REQUIRE(rep.chamfer_l2.has_value());
    CHECK(*rep.chamfer_l2 == *chamfer_l2(bin, gt));
    REQUIRE(rep.cl_dice.has_value());
    CHECK(*rep.cl_dice == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("metrics CSV: header and row layout") {
    CHECK(metrics_csv_header() ==
          "iteration,threshold,loss,clDice,Dice,IoU,reError,CD_l2,reMSE,reError_cont,reMSE_cont");

    MetricsReport m;
    m.threshold = 0.5;
    m.cl_dice = 0.75;
    m.dice = 0.5;
    m.iou = 1.0 / 3.0;
    m.re_error = 0.25;
    m.chamfer_l2 = 9.0;
    m.re_mse = 0.125;
    m.re_error_continuous = 0.2;
    m.re_mse_continuous = 0.1;
    auto full = split_csv(metrics_csv_row(120, 0.0625, m));
    REQUIRE(full.size() == 11);
    CHECK(full[0] == "120");
    CHECK(std::stod(full[1]) == 0.5);
    CHECK(std::stod(full[2]) == 0.0625);
    CHECK(std::stod(full[3]) == 0.75);
    CHECK(std::stod(full[7]) == 9.0);
    CHECK(std::stod(full[10]) == 0.1);

    MetricsReport sparse;
    sparse.threshold = 0.25;
    sparse.dice = 1.0;
    sparse.iou = 1.0;
    sparse.re_mse = 0.0;
    sparse.re_mse_continuous = 0.0;
    auto row = split_csv(metrics_csv_row(0, 1.5, sparse));
    REQUIRE(row.size() == 11);
    CHECK(row[3].empty());   // clDice missing
    CHECK(row[6].empty());   // reError missing
    CHECK(row[7].empty());   // CD_l2 missing
    CHECK(row[9].empty());   // reError_cont missing
    CHECK(row[4] == "1");    // dice present
}

}  // TEST_SUITE
