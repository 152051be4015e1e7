#include <cmath>
#include <vector>

#include "doctest.h"
#include "vrec/aso.hpp"
#include "vrec/common.hpp"

using namespace vrec;

namespace {

std::vector<double> normals(Rng& rng, int n, double shift = 0.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal() + shift;
    return v;
}

}  // namespace

TEST_SUITE("aso") {

TEST_CASE("violation ratio: hand-integrated quantile examples") {
    // a = {0, 2}, b = {1}: violation on (0, 1/2] with diff 1, none after.
    CHECK(quantile_violation_ratio({0.0, 2.0}, {1.0}) == doctest::Approx(0.5).epsilon(1e-12));
    // a = {0, 10}, b = {1, 5, 6}: num = 1/3 + 25/6, den = num + 25/6 + 16/3.
    CHECK(quantile_violation_ratio({0.0, 10.0}, {1.0, 5.0, 6.0}) ==
          doctest::Approx(9.0 / 28.0).epsilon(1e-12));
    // Full dominance and full violation.
    CHECK(quantile_violation_ratio({1.0, 3.0}, {0.0, 2.0}) == 0.0);
    CHECK(quantile_violation_ratio({0.0, 2.0}, {1.0, 3.0}) == 1.0);
    // Identical empirical distributions carry no order information.
    CHECK(quantile_violation_ratio({1.0, 2.0}, {1.0, 2.0}) == 0.5);
}

TEST_CASE("separated samples: A = B + 10 is dominant with epsilon_min < 0.2") {
    Rng rng(123);
    auto b = normals(rng, 200);
    std::vector<double> a(b);
    for (auto& x : a) x += 10.0;
    auto r = aso_test(a, b, 0.05, 0.2, 1000, 7);
    REQUIRE(r.has_value());
    CHECK(r->epsilon_hat == 0.0);  // quantiles of A sit entirely above B's
    CHECK(r->epsilon_min == 0.0);  // every bootstrap resample stays separated
    CHECK(r->epsilon_min < 0.2);
    CHECK(r->dominant);
    CHECK(r->alpha == 0.05);
    CHECK(r->tau == 0.2);
    CHECK(r->n_bootstrap == 1000);

    auto rev = aso_test(b, a, 0.05, 0.2, 1000, 7);
    REQUIRE(rev.has_value());
    CHECK(rev->epsilon_hat == 1.0);
    CHECK(!rev->dominant);
}

TEST_CASE("same distribution: non-dominant in at least 95% of 100 seeded trials") {
    int dominant_count = 0;
    for (uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(9000 + seed);
        auto a = normals(rng, 100);
        auto b = normals(rng, 100);
        auto r = aso_test(a, b, 0.05, 0.2, 300, seed);
        REQUIRE(r.has_value());
        CHECK(r->epsilon_min >= 0.0);
        CHECK(r->epsilon_min <= 1.0);
        dominant_count += r->dominant ? 1 : 0;
    }
    CHECK(dominant_count <= 5);
}

TEST_CASE("monotonicity: shifting A upward never increases epsilon_min") {
    Rng rng(99);
    auto a0 = normals(rng, 50);
    auto b = normals(rng, 60);
    double prev_min = 2.0, prev_hat = 2.0;
    for (int step = 0; step <= 10; ++step) {
        std::vector<double> a(a0);
        for (auto& x : a) x += 0.4 * step;
        auto r = aso_test(a, b, 0.05, 0.2, 400, 42);
        REQUIRE(r.has_value());
        CHECK(r->epsilon_min <= prev_min);
        CHECK(r->epsilon_hat <= prev_hat);
        prev_min = r->epsilon_min;
        prev_hat = r->epsilon_hat;
    }
}

TEST_CASE("deterministic per seed") {
    Rng rng(5);
    auto a = normals(rng, 40, 0.3);
    auto b = normals(rng, 40);
    auto r1 = aso_test(a, b, 0.05, 0.2, 500, 11);
    auto r2 = aso_test(a, b, 0.05, 0.2, 500, 11);
    REQUIRE(r1.has_value());
    REQUIRE(r2.has_value());
    CHECK(r1->epsilon_min == r2->epsilon_min);
    CHECK(r1->epsilon_hat == r2->epsilon_hat);
    CHECK(r1->dominant == r2->dominant);
}

TEST_CASE("degenerate samples yield no value; constant-but-distinct groups do not") {
    CHECK(!aso_test({1.0, 1.0, 1.0}, {1.0, 1.0}, 0.05, 0.2, 100, 0).has_value());
    auto r = aso_test({2.0, 2.0}, {1.0, 1.0}, 0.05, 0.2, 100, 0);
    REQUIRE(r.has_value());
    CHECK(r->epsilon_hat == 0.0);
    CHECK(r->dominant);
    auto rev = aso_test({1.0, 1.0}, {2.0, 2.0}, 0.05, 0.2, 100, 0);
    REQUIRE(rev.has_value());
    CHECK(rev->epsilon_hat == 1.0);
}

TEST_CASE("input validation") {
    std::vector<double> ok{1.0, 2.0};
    CHECK_THROWS_AS(aso_test({}, ok), ConfigError);
    CHECK_THROWS_AS(aso_test(ok, {}), ConfigError);
    CHECK_THROWS_AS(aso_test(ok, ok, 0.0), ConfigError);
    CHECK_THROWS_AS(aso_test(ok, ok, 1.0), ConfigError);
    CHECK_THROWS_AS(aso_test(ok, ok, 0.05, 0.2, 0), ConfigError);
    CHECK_THROWS_AS(aso_test({1.0, std::nan("")}, ok), ConfigError);
}

}  // TEST_SUITE
