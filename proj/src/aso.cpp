#include "vrec/aso.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "vrec/common.hpp"

namespace vrec {

double quantile_violation_ratio(const std::vector<double>& sorted_a,
                                const std::vector<double>& sorted_b) {
    const std::size_t n = sorted_a.size(), m = sorted_b.size();
    // Both quantile functions are constant between consecutive breakpoints
    // i/n and j/m; walk the merged breakpoint sequence. Breakpoints are
    // compared as exact rationals (i*m vs j*n) so coinciding ones advance
    // both sides in one step.
    double num = 0.0, den = 0.0;
    std::size_t i = 1, j = 1;
    double t_prev = 0.0;
    while (i <= n && j <= m) {
        const unsigned long long lhs = static_cast<unsigned long long>(i) * m;
        const unsigned long long rhs = static_cast<unsigned long long>(j) * n;
        const double t_next = lhs <= rhs ? static_cast<double>(i) / static_cast<double>(n)
                                         : static_cast<double>(j) / static_cast<double>(m);
        const double w = t_next - t_prev;
        const double d = sorted_b[j - 1] - sorted_a[i - 1];
        den += w * d * d;
        if (d > 0.0) num += w * d * d;  // A's quantile below B's: violation
        if (lhs <= rhs) ++i;
        if (rhs <= lhs) ++j;
        t_prev = t_next;
    }
    if (den == 0.0) return 0.5;  // identical empirical distributions: no order information
    return num / den;
}

std::optional<AsoResult> aso_test(const std::vector<double>& scores_a,
                                  const std::vector<double>& scores_b, double alpha, double tau,
                                  int n_bootstrap, uint64_t seed) {
    if (scores_a.empty()) throw ConfigError("scores_a", "must be nonempty");
    if (scores_b.empty()) throw ConfigError("scores_b", "must be nonempty");
    if (!(alpha > 0.0) || !(alpha < 1.0)) throw ConfigError("alpha", "must be in (0, 1)");
    if (n_bootstrap < 1) throw ConfigError("n_bootstrap", "must be positive");
    for (double v : scores_a)
        if (!std::isfinite(v)) throw ConfigError("scores_a", "must be finite");
    for (double v : scores_b)
        if (!std::isfinite(v)) throw ConfigError("scores_b", "must be finite");

    bool degenerate = true;
    for (double v : scores_a) degenerate = degenerate && v == scores_a[0];
    for (double v : scores_b) degenerate = degenerate && v == scores_a[0];
    if (degenerate) return std::nullopt;

    const std::size_t n = scores_a.size(), m = scores_b.size();
    std::vector<double> qa(scores_a), qb(scores_b);
    std::sort(qa.begin(), qa.end());
    std::sort(qb.begin(), qb.end());

    AsoResult res;
    res.alpha = alpha;
    res.tau = tau;
    res.n_bootstrap = n_bootstrap;
    res.epsilon_hat = quantile_violation_ratio(qa, qb);

    // Seeded percentile bootstrap. Resample indices depend only on the seed
    // and the sample sizes, so shifted reruns reuse the same resamples; this
    // makes epsilon_min exactly monotone under constant shifts of A.
    Rng rng(seed);
    std::vector<double> ra(n), rb(m), eps(static_cast<std::size_t>(n_bootstrap));
    for (int k = 0; k < n_bootstrap; ++k) {
        for (std::size_t t = 0; t < n; ++t) ra[t] = scores_a[rng.index(n)];
        for (std::size_t t = 0; t < m; ++t) rb[t] = scores_b[rng.index(m)];
        std::sort(ra.begin(), ra.end());
        std::sort(rb.begin(), rb.end());
        eps[static_cast<std::size_t>(k)] = quantile_violation_ratio(ra, rb);
    }
    std::sort(eps.begin(), eps.end());
    auto idx = static_cast<std::size_t>(
        std::ceil((1.0 - alpha) * static_cast<double>(n_bootstrap)));
    if (idx > 0) --idx;
    if (idx >= eps.size()) idx = eps.size() - 1;
    res.epsilon_min = eps[idx];
    res.dominant = res.epsilon_min < tau;
    return res;
}

}  // namespace vrec
