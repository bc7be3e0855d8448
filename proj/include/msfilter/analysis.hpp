#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "msfilter/filter.hpp"
#include "msfilter/integrator.hpp"
#include "msfilter/math_util.hpp"

namespace msfilter {

// One row of an error-vs-oracle table.
struct ErrorSeriesRow {
    std::string kernel;
    double epsilon = 0.0;
    std::size_t n_particles = 0;
    std::uint64_t seed = 0;
    std::size_t k = 0;
    double estimate = 0.0;
    double oracle = 0.0;
    double abs_error = 0.0;
    double std_error = 0.0;
    std::int64_t rv_count_step = 0;
    std::int64_t rv_count_cum = 0;
};

// C_k = (2 + 2 alpha) * (r^{k+1} - r) / (r - 1) with r = 8 K^{2T}.
inline double ck_bound(double big_k, int horizon_T, int k, double alpha) {
    if (big_k < 1.0) throw std::invalid_argument("K must be >= 1");
    if (horizon_T < 1) throw std::invalid_argument("T must be >= 1");
    if (k < 0 || k > horizon_T) throw std::invalid_argument("k must lie in [0, T]");
    if (alpha < 0.0) throw std::invalid_argument("alpha must be nonnegative");
    const double r = 8.0 * std::pow(big_k, 2.0 * horizon_T);
    const double value =
        (2.0 + 2.0 * alpha) * (std::pow(r, k + 1) - r) / (r - 1.0);
    if (!std::isfinite(value)) return std::numeric_limits<double>::infinity();
    return value;
}

// Bracket factor of the transition-kernel weak-error bound:
// dT + dt + e^{-lambda n / 2} / (1 - e^{-lambda n / 2}) * (dT + dT^2) + dT / M.
inline double hmm_error_bound(double delta_T, double delta_t, double lambda_mix,
                              double n_burst, int n_replicas) {
    if (!(lambda_mix * n_burst > 0.0))
        throw std::invalid_argument("lambda * n must be positive");
    if (n_replicas < 1) throw std::invalid_argument("M must be >= 1");
    const double decay = std::exp(-0.5 * lambda_mix * n_burst);
    return delta_T + delta_t +
           decay / (1.0 - decay) * (delta_T + delta_T * delta_T) +
           delta_T / static_cast<double>(n_replicas);
}

struct WeakErrorEstimate {
    double diff = 0.0;
    double std_error = 0.0;
};

using VecSampler = std::function<Vec(RngStream&)>;

// Difference of sample means of f under two samplers, using common random
// number streams per sample index so identical samplers give diff == 0
// exactly; SE is the paired standard error.
inline WeakErrorEstimate weak_error_estimate(const VecSampler& sampler_a,
                                             const VecSampler& sampler_b,
                                             const std::function<double(const Vec&)>& f,
                                             std::size_t n_samples, std::uint64_t seed) {
    if (n_samples < 2) throw std::invalid_argument("need at least two samples");
    double sum = 0.0;
    double sum_sq = 0.0;
    for (std::size_t i = 0; i < n_samples; ++i) {
        RngStream sa(seed, i);
        RngStream sb(seed, i);
        const double d = f(sampler_a(sa)) - f(sampler_b(sb));
        sum += d;
        sum_sq += d * d;
    }
    const double n = static_cast<double>(n_samples);
    const double mean = sum / n;
    const double var = std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0));
    return {mean, std::sqrt(var / n)};
}

struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
};

// OLS of log(error) against log(scale).
inline SlopeFit convergence_slope(const std::vector<std::pair<double, double>>& points) {
    if (points.size() < 3)
        throw std::invalid_argument("need at least three points for a rate fit");
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (const auto& [scale, error] : points) {
        if (!(scale > 0.0) || !(error > 0.0))
            throw std::invalid_argument("scales and errors must be positive");
        const double x = std::log(scale);
        const double y = std::log(error);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
    }
    const double n = static_cast<double>(points.size());
    const double denom = n * sxx - sx * sx;
    if (denom == 0.0) throw std::invalid_argument("degenerate abscissae");
    SlopeFit fit;
    fit.slope = (n * sxy - sx * sy) / denom;
    fit.intercept = (sy - fit.slope * sx) / n;
    const double ss_tot = syy - sy * sy / n;
    double ss_res = 0.0;
    for (const auto& [scale, error] : points) {
        const double resid =
            std::log(error) - (fit.intercept + fit.slope * std::log(scale));
        ss_res += resid * resid;
    }
    fit.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
    return fit;
}

struct CostReport {
    std::int64_t measured = 0;  // per-step variate count from the trajectory
    std::int64_t formula = 0;   // closed-form count for the kernel and tuning
    bool match = false;
};

// Compares the measured per-step variate count against the closed-form cost
// formula: N*ceil(sqrt(N))*(p+q) for the full kernel, N*ceil(sqrt(N))*p for
// the exact averaged kernel, and N*(phases*p + M*phases*micro*q) for the HMM
// kernel, with the same ceiling conventions the samplers use.
inline CostReport cost_report(const FilterTrajectory& traj, int p, int q,
                              std::size_t n_particles, const std::string& kernel,
                              double h_step = 0.0,
                              const HmmParams* hmm = nullptr) {
    const double default_h = 1.0 / std::sqrt(static_cast<double>(n_particles));
    const double h = h_step > 0.0 ? h_step : default_h;
    std::int64_t per_particle = 0;
    if (kernel == "full") {
        per_particle = full_kernel_rv_count(p, q, h);
    } else if (kernel == "averaged_exact") {
        per_particle = averaged_kernel_rv_count(p, h);
    } else if (kernel == "hmm") {
        const HmmParams params = hmm ? *hmm : HmmParams{default_h, default_h, 1.0, 1};
        per_particle = hmm_kernel_rv_count(p, q, params);
    } else {
        throw std::invalid_argument("unknown kernel label: " + kernel);
    }
    CostReport report;
    report.formula = static_cast<std::int64_t>(n_particles) * per_particle;
    report.match = traj.steps.size() > 1;
    for (std::size_t k = 1; k < traj.steps.size(); ++k) {
        report.measured = traj.steps[k].rv_count_step;
        if (report.measured != report.formula) report.match = false;
    }
    return report;
}

inline double median(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("median of empty set");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2]
                      : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace msfilter
