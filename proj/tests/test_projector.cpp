#include <doctest.h>

#include <cmath>
#include <vector>

#include "vrec/common.hpp"
#include "vrec/projector.hpp"

using namespace vrec;

namespace {

ProjectionGeometry desk_geom(double primary = 0.0, double secondary = 0.0) {
    ProjectionGeometry g;
    g.dsd_mm = 1000.0;
    g.dso_mm = 750.0;
    g.primary_deg = primary;
    g.secondary_deg = secondary;
    g.det_u = 64;
    g.det_v = 64;
    g.du_mm = 1.5;
    g.dv_mm = 1.5;
    return g;
}

VolumeGrid gaussian_blob(int n, double s, double sigma_mm, Vec3 center = Vec3::Zero()) {
    VolumeGrid vol(n, n, n, s, s, s);
    for (int z = 0; z < n; ++z)
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                Vec3 p = normalize_coords(x + 1, y + 1, z + 1, vol) - center;
                vol.at(x, y, z) = static_cast<float>(std::exp(-p.squaredNorm() / (2 * sigma_mm * sigma_mm)));
            }
    return vol;
}

// Pinhole image of a 3D point: intersection of the source->p line with the
// detector plane, in pixel coordinates.
void project_point(const Pose& pose, const ProjectionGeometry& g, const Vec3& p, double& u, double& v) {
    Vec3 axis = (pose.det_center - pose.source_pos) / g.dsd_mm;
    Vec3 rel = p - pose.source_pos;
    double depth = rel.dot(axis);
    Vec3 hit = pose.source_pos + rel * (g.dsd_mm / depth);
    u = (hit - pose.det_center).dot(pose.det_u_axis) / g.du_mm + (g.det_u - 1) / 2.0;
    v = (hit - pose.det_center).dot(pose.det_v_axis) / g.dv_mm + (g.det_v - 1) / 2.0;
}

}  // namespace

TEST_SUITE("projector") {

TEST_CASE("zero volume projects to zero") {
    VolumeGrid vol(16, 16, 16, 2.0, 2.0, 2.0);
    auto imgs = forward_project(vol, {desk_geom(0), desk_geom(90)}, ProjectorConfig{});
    REQUIRE(imgs.size() == 2);
    for (const auto& img : imgs)
        for (float p : img.data) CHECK(p == 0.0f);
}

TEST_CASE("central ray through a unit cube of side 45 mm reads the chord length") {
    // 45 voxels at 1 mm, all ones; orthogonal central ray crosses 45 mm.
    VolumeGrid vol(45, 45, 45, 1.0, 1.0, 1.0);
    std::fill(vol.data.begin(), vol.data.end(), 1.0f);
    ProjectionGeometry g = desk_geom();
    g.det_u = 63;
    g.det_v = 63;  // odd: a pixel sits exactly on the central axis
    ProjectorConfig cfg;
    auto imgs = forward_project(vol, {g}, cfg);
    double step = cfg.effective_step(GridShape(vol));
    double center = imgs[0].at(31, 31);
    CHECK(std::abs(center - 45.0) <= step + 1e-9);
}

TEST_CASE("forward projection is linear in the volume") {
    Rng rng(21);
    VolumeGrid v1(12, 12, 12, 2.0, 2.0, 2.0), v2(12, 12, 12, 2.0, 2.0, 2.0),
        sum(12, 12, 12, 2.0, 2.0, 2.0);
    const double a = 2.75;
    for (std::size_t i = 0; i < v1.data.size(); ++i) {
        v1.data[i] = static_cast<float>(rng.uniform());
        v2.data[i] = static_cast<float>(rng.uniform());
        sum.data[i] = static_cast<float>(a * v1.data[i] + v2.data[i]);
    }
    ProjectionGeometry g = desk_geom(30, -15);
    auto p1 = forward_project(v1, {g}, ProjectorConfig{});
    auto p2 = forward_project(v2, {g}, ProjectorConfig{});
    auto ps = forward_project(sum, {g}, ProjectorConfig{});
    for (std::size_t i = 0; i < ps[0].data.size(); ++i) {
        double expect = a * p1[0].data[i] + p2[0].data[i];
        CHECK(ps[0].data[i] == doctest::Approx(expect).epsilon(1e-4));
    }
}

TEST_CASE("nonnegative volume gives nonnegative projections") {
    VolumeGrid vol = gaussian_blob(16, 2.0, 6.0);
    auto imgs = forward_project(vol, {desk_geom(37, 12)}, ProjectorConfig{});
    for (float p : imgs[0].data) CHECK(p >= 0.0f);
}

TEST_CASE("zero images backproject to the zero volume") {
    ProjectionGeometry g = desk_geom();
    ProjectionImage img(0, g);
    GridShape gs(10, 10, 10, 2.0, 2.0, 2.0);
    VolumeGrid vol = backproject({img}, gs, {g}, ProjectorConfig{});
    for (float v : vol.data) CHECK(v == 0.0f);
}

TEST_CASE("a single pixel backprojects onto its ray footprint only") {
    ProjectionGeometry g = desk_geom();
    ProjectionImage img(0, g);
    img.at(40, 25) = 1.0f;
    GridShape gs(24, 24, 24, 2.0, 2.0, 2.0);
    ProjectorConfig cfg;
    VolumeGrid vol = backproject({img}, gs, {g}, cfg);
    Pose pose = build_pose(g);
    Ray ray = ray_through_pixel(pose, g, 40, 25);
    double support = 0.0;
    int nonzero = 0;
    for (int z = 0; z < 24; ++z)
        for (int y = 0; y < 24; ++y)
            for (int x = 0; x < 24; ++x) {
                float v = vol.at(x, y, z);
                if (v == 0.0f) continue;
                ++nonzero;
                support += v;
                // Voxel center must lie within one voxel diagonal of the ray.
                Vec3 c = normalize_coords(x + 1, y + 1, z + 1, VolumeGrid(24, 24, 24, 2, 2, 2));
                Vec3 rel = c - ray.origin;
                double dist = (rel - rel.dot(ray.dir) * ray.dir).norm();
                CHECK(dist < 2.0 * std::sqrt(3.0));
            }
    CHECK(nonzero > 0);
    CHECK(support > 0.0);
}

TEST_CASE("forward and backward are exact adjoints") {
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        ProjectionGeometry g;
        g.dso_mm = rng.uniform(730.0, 770.0);
        g.dsd_mm = rng.uniform(990.0, 1010.0);
        g.primary_deg = rng.uniform(-120.0, 120.0);
        g.secondary_deg = rng.uniform(-40.0, 40.0);
        g.det_u = 64;
        g.det_v = 64;
        g.du_mm = 1.2;
        g.dv_mm = 1.2;
        GridShape gs(32, 32, 32, 1.5, 1.5, 1.5);
        ProjectorConfig cfg;
        // x: random volume payload; y: random image (double precision).
        std::vector<double> x(static_cast<std::size_t>(gs.voxel_count()));
        for (auto& v : x) v = rng.uniform(-1.0, 1.0);
        std::vector<double> px(static_cast<std::size_t>(g.det_u) * g.det_v);
        forward_project_span(x.data(), gs, g, cfg, px.data());
        std::vector<double> y(px.size());
        for (auto& v : y) v = rng.uniform(-1.0, 1.0);
        std::vector<double> bty(x.size(), 0.0);
        backproject_span(y.data(), gs, g, cfg, bty.data());
        double lhs = 0.0, rhs = 0.0;
        for (std::size_t i = 0; i < px.size(); ++i) lhs += px[i] * y[i];
        for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * bty[i];
        CHECK(std::abs(lhs - rhs) / std::max(std::abs(lhs), std::abs(rhs)) < 1e-5);
    }
}

TEST_CASE("halving the step shrinks the discretization error monotonically") {
    VolumeGrid vol = gaussian_blob(24, 2.0, 8.0);
    ProjectionGeometry g = desk_geom(20, 10);
    auto project = [&](double step) {
        ProjectorConfig cfg;
        cfg.step_mm = step;
        return forward_project(vol, {g}, cfg);
    };
    auto p2 = project(2.0), p1 = project(1.0), ph = project(0.5);
    double d21 = 0.0, d10 = 0.0;
    for (std::size_t i = 0; i < p2[0].data.size(); ++i) {
        d21 += std::pow(static_cast<double>(p2[0].data[i]) - p1[0].data[i], 2);
        d10 += std::pow(static_cast<double>(p1[0].data[i]) - ph[0].data[i], 2);
    }
    CHECK(d10 < d21);
    CHECK(d10 > 0.0);
}

TEST_CASE("one-voxel shift moves the projection footprint per the pose math") {
    const int n = 24;
    const double s = 2.0;
    ProjectionGeometry g = desk_geom();
    Pose pose = build_pose(g);
    auto centroid = [&](const ProjectionImage& img, double& cu, double& cv) {
        double m = 0.0;
        cu = cv = 0.0;
        for (int v = 0; v < g.det_v; ++v)
            for (int u = 0; u < g.det_u; ++u) {
                double w = img.at(u, v);
                m += w;
                cu += w * u;
                cv += w * v;
            }
        REQUIRE(m > 0.0);
        cu /= m;
        cv /= m;
    };
    // A small blob at the center, then shifted one voxel along +x.
    VolumeGrid blob0 = gaussian_blob(n, s, 3.0);
    VolumeGrid blob1 = gaussian_blob(n, s, 3.0, Vec3(s, 0, 0));
    auto img0 = forward_project(blob0, {g}, ProjectorConfig{});
    auto img1 = forward_project(blob1, {g}, ProjectorConfig{});
    double cu0, cv0, cu1, cv1;
    centroid(img0[0], cu0, cv0);
    centroid(img1[0], cu1, cv1);
    double eu0, ev0, eu1, ev1;
    project_point(pose, g, Vec3(0, 0, 0), eu0, ev0);
    project_point(pose, g, Vec3(s, 0, 0), eu1, ev1);
    // Footprint centroids sit on the pinhole projections of the blob centers
    // and the shift between them matches the predicted pixel displacement.
    CHECK(std::abs(cu0 - eu0) < 0.3);
    CHECK(std::abs(cv0 - ev0) < 0.3);
    CHECK(std::abs((cu1 - cu0) - (eu1 - eu0)) < 0.1);
    CHECK(std::abs(cv1 - cv0) < 0.1);
}

TEST_CASE("deterministic parallel backprojection matches serial exactly") {
    Rng rng(41);
    ProjectionGeometry g = desk_geom(25, -10);
    ProjectionImage img(0, g);
    for (auto& v : img.data) v = static_cast<float>(rng.uniform());
    GridShape gs(20, 20, 20, 2.0, 2.0, 2.0);
    ProjectorConfig serial;
    ProjectorConfig par;
    par.parallel.threads = 4;
    par.parallel.deterministic = true;
    VolumeGrid a = backproject({img}, gs, {g}, serial);
    VolumeGrid b = backproject({img}, gs, {g}, par);
    for (std::size_t i = 0; i < a.data.size(); ++i) CHECK(a.data[i] == b.data[i]);
}

TEST_CASE("fast-mode backprojection agrees within reduction tolerance") {
    Rng rng(43);
    ProjectionGeometry g = desk_geom(25, -10);
    ProjectionImage img(0, g);
    for (auto& v : img.data) v = static_cast<float>(rng.uniform());
    GridShape gs(20, 20, 20, 2.0, 2.0, 2.0);
    ProjectorConfig serial;
    ProjectorConfig fast;
    fast.parallel.threads = 4;
    fast.parallel.deterministic = false;
    VolumeGrid a = backproject({img}, gs, {g}, serial);
    VolumeGrid b = backproject({img}, gs, {g}, fast);
    for (std::size_t i = 0; i < a.data.size(); ++i)
        CHECK(a.data[i] == doctest::Approx(b.data[i]).epsilon(1e-4));
}

TEST_CASE("seeded noise flag perturbs projections reproducibly") {
    VolumeGrid vol = gaussian_blob(12, 2.0, 5.0);
    ProjectorConfig noisy;
    noisy.noise_sigma = 0.5;
    noisy.noise_seed = 77;
    auto a = forward_project(vol, {desk_geom()}, noisy);
    auto b = forward_project(vol, {desk_geom()}, noisy);
    auto clean = forward_project(vol, {desk_geom()}, ProjectorConfig{});
    CHECK(a[0].data == b[0].data);
    bool differs = false;
    for (std::size_t i = 0; i < a[0].data.size(); ++i)
        differs = differs || a[0].data[i] != clean[0].data[i];
    CHECK(differs);
}

}
