#include <doctest.h>

#include <array>
#include <cmath>
#include <vector>

#include "vrec/common.hpp"
#include "vrec/field.hpp"

using namespace vrec;

namespace {

HashEncoderConfig small_enc() {
    HashEncoderConfig cfg;
    cfg.levels = 4;
    cfg.table_size = 1u << 10;
    cfg.features = 2;
    cfg.coarsest_resolution = 4;
    return cfg;
}

MlpConfig small_mlp(int in_dim) {
    MlpConfig cfg;
    cfg.n_layers = 4;
    cfg.hidden_width = 16;
    cfg.in_dim = in_dim;
    return cfg;
}

}  // namespace

TEST_SUITE("field") {

TEST_CASE("frequency_encode: zeros and counting") {
    auto out = frequency_encode(Vec3(0, 0, 0), 10);
    REQUIRE(out.size() == 60);
    for (int i = 0; i < 60; i += 2) {
        CHECK(out[static_cast<std::size_t>(i)] == 0.0);       // sines
        CHECK(out[static_cast<std::size_t>(i) + 1] == 1.0);   // cosines
    }
}

TEST_CASE("frequency_encode: unit x at K=1") {
    auto out = frequency_encode(Vec3(1, 0, 0), 1);
    REQUIRE(out.size() == 6);
    CHECK(std::abs(out[0] - 0.0) < 1e-15);  // sin(pi)
    CHECK(out[1] == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK(out[2] == 0.0);
    CHECK(out[3] == 1.0);
    CHECK(out[4] == 0.0);
    CHECK(out[5] == 1.0);
}

TEST_CASE("init_params: counts, ranges, and seed determinism") {
    HashEncoderConfig enc = small_enc();
    MlpConfig mlp = small_mlp(enc.out_dim());
    auto a = init_params<float>(enc, mlp, 123);
    auto b = init_params<float>(enc, mlp, 123);
    auto c = init_params<float>(enc, mlp, 124);
    CHECK(a.theta.count() == static_cast<std::size_t>(enc.levels) * enc.table_size * enc.features);
    std::size_t phi_expect = 0;
    for (int i = 1; i <= mlp.n_layers; ++i)
        phi_expect += static_cast<std::size_t>(mlp.layer_in(i)) * mlp.layer_out(i) + mlp.layer_out(i);
    CHECK(a.phi.count() == phi_expect);
    bool identical = true, differs = false;
    for (std::size_t l = 0; l < a.theta.tables.size(); ++l)
        for (std::size_t i = 0; i < a.theta.tables[l].size(); ++i) {
            CHECK(std::abs(a.theta.tables[l][i]) <= 1e-4f);
            identical = identical && a.theta.tables[l][i] == b.theta.tables[l][i];
            differs = differs || a.theta.tables[l][i] != c.theta.tables[l][i];
        }
    for (std::size_t l = 0; l < a.phi.W.size(); ++l)
        identical = identical && (a.phi.W[l] - b.phi.W[l]).cwiseAbs().maxCoeff() == 0.0f;
    CHECK(identical);
    CHECK(differs);
}

TEST_CASE("initial field output sits near one half") {
    HashEncoderConfig enc = small_enc();
    MlpConfig mlp = small_mlp(enc.out_dim());
    auto params = init_params<float>(enc, mlp, 7);
    VolumeGrid grid(16, 16, 16, 1.0, 1.0, 1.0);
    Rng rng(8);
    std::vector<std::array<int, 3>> pts;
    for (int i = 0; i < 1000; ++i)
        pts.push_back({1 + static_cast<int>(rng.index(16)), 1 + static_cast<int>(rng.index(16)),
                       1 + static_cast<int>(rng.index(16))});
    auto out = field_evaluate(enc, params.theta, mlp, params.phi, pts, grid);
    double mean = 0.0;
    for (float v : out) mean += v;
    mean /= static_cast<double>(out.size());
    CHECK(std::abs(mean - 0.5) < 0.05);
}

TEST_CASE("field_evaluate equals the explicit composition, pointwise") {
    HashEncoderConfig enc = small_enc();
    MlpConfig mlp = small_mlp(enc.out_dim());
    auto params = init_params<double>(enc, mlp, 21);
    VolumeGrid grid(9, 9, 9, 0.8, 0.8, 0.8);
    std::vector<std::array<int, 3>> pts = {{1, 1, 1}, {5, 5, 5}, {9, 3, 7}, {2, 8, 4}};
    auto batch = field_evaluate(enc, params.theta, mlp, params.phi, pts, grid);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        std::vector<std::array<int, 3>> one = {pts[i]};
        auto single = field_evaluate(enc, params.theta, mlp, params.phi, one, grid);
        CHECK(batch[i] == single[0]);  // bitwise: fixed-shape blocks
        MatX<double> feats(enc.out_dim(), 1);
        std::vector<double> col(static_cast<std::size_t>(enc.out_dim()));
        Vec3 xn = normalize_coords(pts[i][0], pts[i][1], pts[i][2], grid);
        encode(enc, params.theta, xn, grid, col.data());
        for (int j = 0; j < enc.out_dim(); ++j) feats(j, 0) = col[static_cast<std::size_t>(j)];
        MatX<double> y = mlp_forward_blocked(mlp, params.phi, feats);
        CHECK(batch[i] == y(0, 0));
    }
}

TEST_CASE("field outputs stay inside the open unit interval") {
    HashEncoderConfig enc = small_enc();
    MlpConfig mlp = small_mlp(enc.out_dim());
    auto params = init_params<float>(enc, mlp, 31);
    VolumeGrid grid(12, 12, 12, 1.0, 1.0, 1.0);
    Rng rng(32);
    std::vector<std::array<int, 3>> pts;
    for (int i = 0; i < 10000; ++i)
        pts.push_back({1 + static_cast<int>(rng.index(12)), 1 + static_cast<int>(rng.index(12)),
                       1 + static_cast<int>(rng.index(12))});
    auto out = field_evaluate(enc, params.theta, mlp, params.phi, pts, grid);
    for (float v : out) {
        CHECK(v > 0.0f);
        CHECK(v < 1.0f);
    }
}

TEST_CASE("field evaluation is pure and repeatable") {
    HashEncoderConfig enc = small_enc();
    MlpConfig mlp = small_mlp(enc.out_dim());
    auto params = init_params<float>(enc, mlp, 44);
    auto before = params;
    VolumeGrid grid(8, 8, 8, 1.0, 1.0, 1.0);
    std::vector<std::array<int, 3>> pts = {{3, 4, 5}, {8, 8, 8}, {1, 2, 3}};
    auto r1 = field_evaluate(enc, params.theta, mlp, params.phi, pts, grid);
    auto r2 = field_evaluate(enc, params.theta, mlp, params.phi, pts, grid);
    CHECK(r1 == r2);
    for (std::size_t l = 0; l < params.theta.tables.size(); ++l)
        CHECK(params.theta.tables[l] == before.theta.tables[l]);
    for (std::size_t l = 0; l < params.phi.W.size(); ++l)
        CHECK((params.phi.W[l] - before.phi.W[l]).cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("frequency field path matches its composition") {
    FrequencyConfig enc;
    enc.frequencies = 3;
    MlpConfig mlp = small_mlp(enc.out_dim());
    REQUIRE(mlp.in_dim == 18);
    Rng rng(5);
    auto phi = MlpParams<float>::zeros(mlp);
    kaiming_init(mlp, phi, rng);
    VolumeGrid grid(9, 9, 9, 1.0, 1.0, 1.0);
    std::vector<std::array<int, 3>> pts = {{1, 9, 5}, {4, 4, 4}};
    auto out = field_evaluate_frequency(enc, mlp, phi, pts, grid);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        Vec3 xn = normalize_coords(pts[i][0], pts[i][1], pts[i][2], grid);
        Vec3 xu = unit_from_normalized(xn, grid);
        auto col = frequency_encode(xu, enc.frequencies);
        MatX<float> feats(18, 1);
        for (int j = 0; j < 18; ++j) feats(j, 0) = static_cast<float>(col[static_cast<std::size_t>(j)]);
        MatX<float> y = mlp_forward_blocked(mlp, phi, feats);
        CHECK(out[i] == y(0, 0));
    }
}

}
