#pragma once

#include <cstdint>
#include <optional>
#include <vector>

namespace vrec {

/// Outcome of the stochastic-dominance test "A dominates B" (higher scores
/// better). epsilon_min is an upper (1-alpha) confidence bound on the
/// Wasserstein-2 violation ratio; small values mean near-perfect dominance.
struct AsoResult {
    double epsilon_min = 0.0;  // in [0, 1]
    double epsilon_hat = 0.0;  // point estimate of the violation ratio
    double alpha = 0.05;
    double tau = 0.2;
    int n_bootstrap = 0;
    bool dominant = false;  // epsilon_min < tau
};

/// Exact violation ratio between two empirical quantile functions, given the
/// samples in ascending order. Piecewise-constant integration over the merged
/// i/n, j/m breakpoints; a zero Wasserstein-2 distance (identical empirical
/// distributions) returns the no-information value 0.5.
double quantile_violation_ratio(const std::vector<double>& sorted_a,
                                const std::vector<double>& sorted_b);

/// Almost-stochastic-order test of "A dominates B" for higher-is-better
/// scores (negate both inputs for lower-is-better metrics). epsilon_min is
/// the ceil((1-alpha)*n_bootstrap)-th order statistic of the seeded bootstrap
/// violation ratios. Degenerate input (every value in both groups identical)
/// has no defensible verdict and yields no value.
std::optional<AsoResult> aso_test(const std::vector<double>& scores_a,
                                  const std::vector<double>& scores_b, double alpha = 0.05,
                                  double tau = 0.2, int n_bootstrap = 1000, uint64_t seed = 0);

}  // namespace vrec
