#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

namespace qhop {

// Regularized upper incomplete gamma Q(a, x): series expansion below the
// a+1 crossover, Lentz continued fraction above it.
inline double gamma_q(double a, double x) {
    if (a <= 0.0 || x < 0.0) throw std::domain_error("gamma_q: a > 0 and x >= 0 required");
    if (x == 0.0) return 1.0;

    const double lg = std::lgamma(a);
    if (x < a + 1.0) {
        // P(a,x) by series, then Q = 1 - P.
        double term = 1.0 / a;
        double sum = term;
        double ap = a;
        for (int i = 0; i < 10000; ++i) {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if (std::fabs(term) < std::fabs(sum) * 1e-16) break;
        }
        const double p = sum * std::exp(-x + a * std::log(x) - lg);
        return 1.0 - p;
    }
    // Q(a,x) by modified Lentz continued fraction.
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 10000; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::fabs(delta - 1.0) < 1e-16) break;
    }
    return std::exp(-x + a * std::log(x) - lg) * h;
}

// Upper-tail p-value of a chi-square statistic.
inline double chi_square_pvalue(double chi2, uint64_t dof) {
    if (dof == 0) throw std::domain_error("chi_square_pvalue: dof must be positive");
    if (chi2 < 0.0) throw std::domain_error("chi_square_pvalue: negative statistic");
    return gamma_q(static_cast<double>(dof) / 2.0, chi2 / 2.0);
}

struct MeanCi {
    double mean = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    double stderr_mean = 0.0;
};

// Normal-approximation 95% interval from per-trial samples.
inline MeanCi mean_ci95(const std::vector<double>& samples) {
    if (samples.empty()) throw std::domain_error("mean_ci95: no samples");
    MeanCi r;
    double sum = 0.0;
    for (double v : samples) sum += v;
    r.mean = sum / static_cast<double>(samples.size());
    if (samples.size() == 1) {
        r.lo = r.hi = r.mean;
        return r;
    }
    double ss = 0.0;
    for (double v : samples) ss += (v - r.mean) * (v - r.mean);
    const double var = ss / static_cast<double>(samples.size() - 1);
    r.stderr_mean = std::sqrt(var / static_cast<double>(samples.size()));
    r.lo = r.mean - 1.96 * r.stderr_mean;
    r.hi = r.mean + 1.96 * r.stderr_mean;
    return r;
}

} // namespace qhop
