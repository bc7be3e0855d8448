#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "msfilter/filter.hpp"
#include "msfilter/math_util.hpp"
#include "msfilter/model.hpp"

namespace msfilter {

struct GaussianBelief {
    Vec mean;
    Mat covariance;
};

struct OuLaw {
    double mean = 0.0;
    double variance = 0.0;
};

// Transition law of dX = -theta X dt + sigma dW over time t:
// mean = x0 e^{-theta t}, variance = sigma^2 (1 - e^{-2 theta t}) / (2 theta).
inline OuLaw ou_transition_law(double theta, double sigma, double x0, double t) {
    if (theta <= 0.0 || sigma <= 0.0 || t <= 0.0)
        throw std::invalid_argument("ou_transition_law: parameters must be positive");
    const double decay = std::exp(-theta * t);
    return {x0 * decay, sigma * sigma * (1.0 - decay * decay) / (2.0 * theta)};
}

// Conjugate Gaussian update for y = x + noise, noise ~ N(0, obs_var).
inline GaussianBelief kalman_update(const GaussianBelief& prior, double y,
                                    double obs_var) {
    if (obs_var <= 0.0)
        throw std::invalid_argument("observation variance must be positive");
    const double v = prior.covariance(0, 0);
    const double gain = v / (v + obs_var);
    GaussianBelief post;
    post.mean = Vec::Constant(1, prior.mean(0) + gain * (y - prior.mean(0)));
    post.covariance = Mat::Constant(1, 1, (1.0 - gain) * v);
    return post;
}

struct LinearGaussianParams {
    double theta = 1.0;       // OU reversion rate of the averaged model
    double sigma = 1.0;       // averaged diffusion
    double prior_mean = 0.0;  // mu1 = N(prior_mean, prior_var)
    double prior_var = 1.0;
};

// Exact filter for the linear-Gaussian benchmark: OU predict over unit
// intervals, conjugate update per observation. Entry 0 is the prior.
inline std::vector<GaussianBelief> kalman_filter(const LinearGaussianParams& params,
                                                 double obs_noise_sd,
                                                 const std::vector<double>& observations) {
    if (obs_noise_sd <= 0.0)
        throw std::invalid_argument("observation noise sd must be positive");
    std::vector<GaussianBelief> beliefs;
    GaussianBelief belief{Vec::Constant(1, params.prior_mean),
                          Mat::Constant(1, 1, params.prior_var)};
    beliefs.push_back(belief);
    const double obs_var = obs_noise_sd * obs_noise_sd;
    for (double y : observations) {
        const OuLaw pred =
            ou_transition_law(params.theta, params.sigma, belief.mean(0), 1.0);
        const double pred_var =
            belief.covariance(0, 0) * std::exp(-2.0 * params.theta) + pred.variance;
        GaussianBelief predicted{Vec::Constant(1, pred.mean),
                                 Mat::Constant(1, 1, pred_var)};
        belief = kalman_update(predicted, y, obs_var);
        beliefs.push_back(belief);
    }
    return beliefs;
}

struct ReferenceFilter {
    FilterTrajectory trajectory;
    std::vector<Vec> means;        // weighted posterior mean per k
    std::vector<Vec> std_errors;   // Monte Carlo SE per coordinate per k
};

// High-N, fine-step particle filter used as ground-truth proxy when no
// closed form exists. For the full kernel the step is capped at epsilon/10.
inline ReferenceFilter reference_filter_bruteforce(const BenchmarkModel& bm,
                                                   KernelChoice kc,
                                                   const std::vector<Vec>& observations,
                                                   std::size_t n_big, std::uint64_t seed,
                                                   FilterOptions opts = {}) {
    const double default_h = 1.0 / std::sqrt(static_cast<double>(n_big));
    if (opts.h_step <= 0.0) opts.h_step = default_h;
    if (kc == KernelChoice::Full)
        opts.h_step = std::min(opts.h_step, bm.multiscale.epsilon / 10.0);

    ReferenceFilter ref;
    ref.trajectory = run_filter(bm, kc, observations, n_big, seed, opts);
    const int p = bm.multiscale.p;
    for (const FilterStepRecord& rec : ref.trajectory.steps) {
        const ParticleEnsemble& ens = rec.resampled;
        Vec mean = Vec::Zero(p);
        for (const Vec& x : ens.positions) mean += x;
        mean /= static_cast<double>(ens.size());
        Vec var = Vec::Zero(p);
        for (const Vec& x : ens.positions) {
            const Vec d = x - mean;
            var += d.cwiseProduct(d);
        }
        var /= static_cast<double>(ens.size() > 1 ? ens.size() - 1 : 1);
        ref.means.push_back(mean);
        ref.std_errors.push_back(
            (var / static_cast<double>(ens.size())).cwiseSqrt());
    }
    return ref;
}

}  // namespace msfilter
