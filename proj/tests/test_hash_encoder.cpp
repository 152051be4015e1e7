#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "vrec/common.hpp"
#include "vrec/hash_encoder.hpp"

using namespace vrec;

namespace {

HashEncoderConfig tiny_cfg() {
    HashEncoderConfig cfg;
    cfg.levels = 2;
    cfg.table_size = 16;
    cfg.features = 2;
    cfg.coarsest_resolution = 2;
    cfg.growth_factor = 2.0;
    return cfg;
}

HashEncoderParams<double> random_params(const HashEncoderConfig& cfg, Rng& rng) {
    auto p = HashEncoderParams<double>::zeros(cfg);
    for (auto& t : p.tables)
        for (auto& v : t) v = rng.uniform(-1.0, 1.0);
    return p;
}

}  // namespace

TEST_SUITE("hash_encoder") {

TEST_CASE("level_resolution follows the geometric schedule") {
    HashEncoderConfig cfg;  // defaults: N_min 16, b 2, L 16
    CHECK(level_resolution(cfg, 0) == 16);
    CHECK(level_resolution(cfg, 1) == 32);
    CHECK(level_resolution(cfg, 3) == 128);
    CHECK_THROWS_AS(level_resolution(cfg, -1), std::out_of_range);
    CHECK_THROWS_AS(level_resolution(cfg, 16), std::out_of_range);
}

TEST_CASE("spatial_hash pinned values") {
    const uint32_t T = 1u << 19;
    CHECK(spatial_hash(0, 0, 0, T) == 0);
    CHECK(spatial_hash(1, 0, 0, T) == 1);
    // 2654435761 mod 2^19, evaluated independently.
    CHECK(spatial_hash(0, 1, 0, T) == 489905);
}

TEST_CASE("vertex_entry_index: dense level is x-fastest and injective") {
    HashEncoderConfig cfg;  // level 0 resolution 16, (17)^3 = 4913 <= 2^19
    CHECK(level_addressing(cfg, 0).dense);
    CHECK(vertex_entry_index(cfg, 0, 0, 0, 0) == 0);
    CHECK(vertex_entry_index(cfg, 0, 1, 0, 0) == 1);
    CHECK(vertex_entry_index(cfg, 0, 0, 1, 0) == 17);
    CHECK(vertex_entry_index(cfg, 0, 0, 0, 1) == 289);
    std::set<uint32_t> seen;
    for (int z = 0; z <= 16; ++z)
        for (int y = 0; y <= 16; ++y)
            for (int x = 0; x <= 16; ++x) seen.insert(vertex_entry_index(cfg, 0, x, y, z));
    CHECK(seen.size() == 4913);
    CHECK_THROWS_AS(vertex_entry_index(cfg, 0, 17, 0, 0), std::out_of_range);
}

TEST_CASE("vertex_entry_index: oversubscribed level takes the hashed path") {
    HashEncoderConfig cfg;  // level 3 resolution 128, 129^3 > 2^19
    CHECK_FALSE(level_addressing(cfg, 3).dense);
    CHECK(vertex_entry_index(cfg, 3, 5, 9, 2) == spatial_hash(5, 9, 2, cfg.table_size));
}

TEST_CASE("encoder config validation") {
    HashEncoderConfig cfg;
    cfg.table_size = 100;  // not a power of two
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = HashEncoderConfig{};
    cfg.levels = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = HashEncoderConfig{};
    cfg.growth_factor = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("encode: zero tables give the zero vector at the default output size") {
    HashEncoderConfig cfg;  // L=16, F=2
    auto params = HashEncoderParams<double>::zeros(cfg);
    VolumeGrid grid(9, 9, 9, 1.0, 1.0, 1.0);
    std::vector<double> out(static_cast<std::size_t>(cfg.out_dim()));
    REQUIRE(cfg.out_dim() == 32);
    encode(cfg, params, Vec3(0.3, -1.2, 2.0), grid, out.data());
    for (double v : out) CHECK(v == 0.0);
}

TEST_CASE("encode: query at a lattice vertex returns the stored entry") {
    HashEncoderConfig cfg;
    cfg.levels = 1;
    cfg.table_size = 32;  // (2+1)^3 = 27 <= 32, dense
    cfg.features = 2;
    cfg.coarsest_resolution = 2;
    auto params = HashEncoderParams<double>::zeros(cfg);
    VolumeGrid grid(5, 5, 5, 1.0, 1.0, 1.0);
    // Unit coordinate 0.5 lands on vertex (1,1,1) of the 2^3 level grid.
    uint32_t row = vertex_entry_index(cfg, 0, 1, 1, 1);
    params.tables[0][row * 2 + 0] = 7.0;
    params.tables[0][row * 2 + 1] = -3.0;
    std::vector<double> out(2);
    encode(cfg, params, Vec3(0.0, 0.0, 0.0), grid, out.data());
    CHECK(out[0] == 7.0);
    CHECK(out[1] == -3.0);
}

TEST_CASE("encode: query at a cell center averages the 8 corners") {
    HashEncoderConfig cfg;
    cfg.levels = 1;
    cfg.table_size = 32;
    cfg.features = 1;
    cfg.coarsest_resolution = 2;
    auto params = HashEncoderParams<double>::zeros(cfg);
    VolumeGrid grid(5, 5, 5, 1.0, 1.0, 1.0);
    double sum = 0.0;
    int k = 1;
    for (int z = 0; z < 2; ++z)
        for (int y = 0; y < 2; ++y)
            for (int x = 0; x < 2; ++x, ++k) {
                params.tables[0][vertex_entry_index(cfg, 0, x, y, z)] = k;
                sum += k;
            }
    // Unit coordinate 0.25 -> level position 0.5: center of cell (0,0,0).
    std::vector<double> out(1);
    encode(cfg, params, Vec3(-1.0, -1.0, -1.0), grid, out.data());
    CHECK(out[0] == doctest::Approx(sum / 8.0).epsilon(1e-15));
}

TEST_CASE("encode: rejects coordinates outside the bounding box") {
    HashEncoderConfig cfg = tiny_cfg();
    auto params = HashEncoderParams<double>::zeros(cfg);
    VolumeGrid grid(5, 5, 5, 1.0, 1.0, 1.0);
    std::vector<double> out(static_cast<std::size_t>(cfg.out_dim()));
    CHECK_THROWS_AS(encode(cfg, params, Vec3(2.5, 0.0, 0.0), grid, out.data()), std::out_of_range);
}

TEST_CASE("encode: continuous across a shared cell face") {
    HashEncoderConfig cfg;
    cfg.levels = 1;
    cfg.table_size = 32;
    cfg.features = 2;
    cfg.coarsest_resolution = 2;
    Rng rng(9);
    auto params = random_params(cfg, rng);
    VolumeGrid grid(5, 5, 5, 1.0, 1.0, 1.0);
    // x_norm.x = 0 sits exactly on the face between cells 0 and 1 along x.
    Vec3 face(0.0, -0.6, 0.3);
    std::vector<double> via_encode(2);
    encode(cfg, params, face, grid, via_encode.data());
    // Hand evaluation through the LOWER cell: fractional x = 1 there.
    Vec3 u = unit_from_normalized(face, grid);
    double fy = u.y() * 2 - std::floor(u.y() * 2), fz = u.z() * 2 - std::floor(u.z() * 2);
    int cy = static_cast<int>(std::floor(u.y() * 2)), cz = static_cast<int>(std::floor(u.z() * 2));
    for (int j = 0; j < 2; ++j) {
        double acc = 0.0;
        for (int dz = 0; dz < 2; ++dz)
            for (int dy = 0; dy < 2; ++dy) {
                // dx = 1 face of cell x=0 (weight 1 in x), i.e. vertex x=1.
                double w = (dy ? fy : 1 - fy) * (dz ? fz : 1 - fz);
                acc += w * params.tables[0][vertex_entry_index(cfg, 0, 1, cy + dy, cz + dz) * 2 + j];
            }
        CHECK(via_encode[static_cast<std::size_t>(j)] == doctest::Approx(acc).epsilon(1e-14));
    }
}

TEST_CASE("encode: trilinear along axis lines inside one cell") {
    HashEncoderConfig cfg = tiny_cfg();
    Rng rng(12);
    auto params = random_params(cfg, rng);
    VolumeGrid grid(9, 9, 9, 0.5, 0.5, 0.5);
    // Three collinear points well inside one level-0 cell: second difference
    // of each feature must vanish (trilinear is linear along axis lines).
    Vec3 base(0.31, -0.42, 0.55);
    double h = 0.02;
    std::vector<double> fm(4), f0(4), fp(4);
    encode(cfg, params, base - Vec3(h, 0, 0), grid, fm.data());
    encode(cfg, params, base, grid, f0.data());
    encode(cfg, params, base + Vec3(h, 0, 0), grid, fp.data());
    for (int j = 0; j < 4; ++j)
        CHECK(std::abs(fp[j] - 2 * f0[j] + fm[j]) < 1e-9);
}

TEST_CASE("encode: linear in the table parameters") {
    HashEncoderConfig cfg = tiny_cfg();
    Rng rng(13);
    auto p1 = random_params(cfg, rng);
    auto p2 = random_params(cfg, rng);
    auto sum = HashEncoderParams<double>::zeros(cfg);
    for (std::size_t l = 0; l < sum.tables.size(); ++l)
        for (std::size_t i = 0; i < sum.tables[l].size(); ++i)
            sum.tables[l][i] = p1.tables[l][i] + p2.tables[l][i];
    VolumeGrid grid(7, 7, 7, 1.0, 1.0, 1.0);
    Vec3 x(0.8, -2.1, 1.4);
    std::vector<double> a(4), b(4), c(4);
    encode(cfg, p1, x, grid, a.data());
    encode(cfg, p2, x, grid, b.data());
    encode(cfg, sum, x, grid, c.data());
    for (int j = 0; j < 4; ++j) CHECK(c[j] == doctest::Approx(a[j] + b[j]).epsilon(1e-12));
}

TEST_CASE("encode_backward: zero upstream gives zero gradient") {
    HashEncoderConfig cfg = tiny_cfg();
    Rng rng(14);
    auto params = random_params(cfg, rng);
    VolumeGrid grid(7, 7, 7, 1.0, 1.0, 1.0);
    std::vector<double> up(4, 0.0);
    auto g = encode_backward(cfg, params, Vec3(0.3, 0.3, 0.3), grid, up.data());
    for (const auto& e : g.entries)
        for (double v : e.grad) CHECK(v == 0.0);
}

TEST_CASE("encode_backward: vertex-aligned query deposits the full slice on one entry") {
    HashEncoderConfig cfg;
    cfg.levels = 1;
    cfg.table_size = 32;
    cfg.features = 2;
    cfg.coarsest_resolution = 2;
    auto params = HashEncoderParams<double>::zeros(cfg);
    VolumeGrid grid(5, 5, 5, 1.0, 1.0, 1.0);
    std::vector<double> up = {3.0, -5.0};
    auto g = encode_backward(cfg, params, Vec3(0.0, 0.0, 0.0), grid, up.data());
    double total0 = 0.0, total1 = 0.0;
    int nonzero = 0;
    for (const auto& e : g.entries) {
        if (e.grad[0] != 0.0 || e.grad[1] != 0.0) {
            ++nonzero;
            CHECK(e.row == vertex_entry_index(cfg, 0, 1, 1, 1));
        }
        total0 += e.grad[0];
        total1 += e.grad[1];
    }
    CHECK(nonzero == 1);
    CHECK(total0 == 3.0);
    CHECK(total1 == -5.0);
}

TEST_CASE("encode_backward: matches central finite differences") {
    HashEncoderConfig cfg = tiny_cfg();
    Rng rng(15);
    auto params = random_params(cfg, rng);
    VolumeGrid grid(7, 7, 7, 1.0, 1.0, 1.0);
    Vec3 x(0.37, -1.21, 0.64);
    std::vector<double> up = {0.7, -1.3, 0.2, 2.1};
    auto g = encode_backward(cfg, params, x, grid, up.data());
    const double step = 1e-4;
    // Dense analytic gradient from the sparse result.
    auto dense = HashEncoderParams<double>::zeros(cfg);
    for (const auto& e : g.entries)
        for (int j = 0; j < cfg.features; ++j)
            dense.tables[static_cast<std::size_t>(e.level)][e.row * cfg.features + j] += e.grad[static_cast<std::size_t>(j)];
    auto loss = [&](const HashEncoderParams<double>& p) {
        std::vector<double> f(4);
        encode(cfg, p, x, grid, f.data());
        double s = 0.0;
        for (int j = 0; j < 4; ++j) s += f[static_cast<std::size_t>(j)] * up[static_cast<std::size_t>(j)];
        return s;
    };
    for (std::size_t l = 0; l < params.tables.size(); ++l)
        for (std::size_t i = 0; i < params.tables[l].size(); ++i) {
            auto pp = params, pm = params;
            pp.tables[l][i] += step;
            pm.tables[l][i] -= step;
            double fd = (loss(pp) - loss(pm)) / (2 * step);
            double an = dense.tables[l][i];
            double denom = std::max(std::abs(fd), std::abs(an));
            if (denom < 1e-12)
                CHECK(std::abs(fd - an) < 1e-9);
            else
                CHECK(std::abs(fd - an) / denom < 1e-6);
        }
}

TEST_CASE("encode_backward is the exact adjoint of the parameter-linear map") {
    HashEncoderConfig cfg = tiny_cfg();
    Rng rng(16);
    VolumeGrid grid(7, 7, 7, 1.0, 1.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        auto params = random_params(cfg, rng);
        Vec3 x(rng.uniform(-2.9, 2.9), rng.uniform(-2.9, 2.9), rng.uniform(-2.9, 2.9));
        std::vector<double> gvec(4);
        for (auto& v : gvec) v = rng.uniform(-1.0, 1.0);
        std::vector<double> f(4);
        encode(cfg, params, x, grid, f.data());
        double lhs = 0.0;
        for (int j = 0; j < 4; ++j) lhs += f[static_cast<std::size_t>(j)] * gvec[static_cast<std::size_t>(j)];
        auto sp = encode_backward(cfg, params, x, grid, gvec.data());
        double rhs = 0.0;
        for (const auto& e : sp.entries)
            for (int j = 0; j < cfg.features; ++j)
                rhs += e.grad[static_cast<std::size_t>(j)] *
                       params.tables[static_cast<std::size_t>(e.level)][e.row * cfg.features + j];
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-11));
    }
}

TEST_CASE("encoder plan gather matches pointwise encode and scatter is its adjoint") {
    HashEncoderConfig cfg = tiny_cfg();
    Rng rng(17);
    auto params = random_params(cfg, rng);
    VolumeGrid grid(7, 7, 7, 1.0, 1.0, 1.0);
    std::vector<Vec3> pts;
    for (int i = 0; i < 33; ++i)
        pts.emplace_back(rng.uniform(-2.9, 2.9), rng.uniform(-2.9, 2.9), rng.uniform(-2.9, 2.9));
    EncoderPlan<double> plan;
    plan.build(cfg, grid, pts);
    Eigen::MatrixXd feats;
    plan.gather(params, 0, 33, feats);
    for (int i = 0; i < 33; ++i) {
        std::vector<double> ref(4);
        encode(cfg, params, pts[static_cast<std::size_t>(i)], grid, ref.data());
        for (int j = 0; j < 4; ++j) CHECK(feats(j, i) == doctest::Approx(ref[static_cast<std::size_t>(j)]).epsilon(1e-13));
    }
    // Adjoint: <gather(theta), U> == <theta, scatter(U)>.
    Eigen::MatrixXd up(4, 33);
    for (int i = 0; i < 33; ++i)
        for (int j = 0; j < 4; ++j) up(j, i) = rng.uniform(-1.0, 1.0);
    double lhs = (feats.array() * up.array()).sum();
    auto grad = HashEncoderParams<double>::zeros(cfg);
    plan.scatter(up, 0, 33, grad);
    double rhs = 0.0;
    for (std::size_t l = 0; l < grad.tables.size(); ++l)
        for (std::size_t i = 0; i < grad.tables[l].size(); ++i)
            rhs += grad.tables[l][i] * params.tables[l][i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
}

}
