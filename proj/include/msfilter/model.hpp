#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "msfilter/math_util.hpp"
#include "msfilter/rng.hpp"

namespace msfilter {

using DriftFn = std::function<Vec(const Vec& x1, const Vec& x2)>;
using DiffusionFn = std::function<Mat(const Vec& x1, const Vec& x2)>;
using SamplerFn = std::function<Vec(RngStream&)>;

// Slow-fast SDE
//   dX1 = a(X1,X2) dt + sigma1(X1,X2) dW1
//   dX2 = (1/eps) b(X1,X2) dt + (1/sqrt(eps)) sigma2(X1,X2) dW2.
// b and sigma2 are stored UNscaled; integrators inject the epsilon factors,
// so the same coefficients also drive the frozen fast process (no epsilon).
struct MultiscaleModel {
    int p = 1;
    int q = 1;
    double epsilon = 1.0;
    DriftFn slow_drift;
    DiffusionFn slow_diffusion;
    DriftFn fast_drift;
    DiffusionFn fast_diffusion;
    SamplerFn mu1_sampler;
    SamplerFn mu2_sampler;
    double lambda_mix = 1.0;  // user-supplied dissipativity rate
};

// dXbar = abar(Xbar) dt + sigbar(Xbar) dW, Xbar_0 ~ mu1.
struct AveragedModel {
    int p = 1;
    std::function<Vec(const Vec&)> drift;
    std::function<Mat(const Vec&)> diffusion;
    SamplerFn mu1_sampler;
};

// Y_k = h(X1_k, v_k) with i.i.d. noise v_k and known density g(x, y).
struct ObservationModel {
    int obs_dim = 1;
    std::function<Vec(const Vec& x1, const Vec& v)> h;
    SamplerFn noise_sampler;
    std::function<double(const Vec& x1, const Vec& y)> likelihood;
    std::optional<double> bound_K;
};

struct BenchmarkModel {
    std::string name;
    MultiscaleModel multiscale;
    std::optional<AveragedModel> averaged_exact;
    ObservationModel observation;
};

inline ObservationModel make_additive_gaussian_observation(double noise_sd) {
    if (noise_sd <= 0.0)
        throw std::invalid_argument("observation noise sd must be positive");
    ObservationModel obs;
    obs.obs_dim = 1;
    obs.h = [](const Vec& x1, const Vec& v) -> Vec { return x1 + v; };
    obs.noise_sampler = [noise_sd](RngStream& rng) -> Vec {
        Vec v(1);
        v(0) = noise_sd * rng.normal();
        return v;
    };
    obs.likelihood = [noise_sd](const Vec& x1, const Vec& y) {
        return gaussian_pdf(y(0), x1(0), noise_sd);
    };
    return obs;
}

// Linear benchmark: a(x1,x2) = -x2, sigma1 const, b = x1 - x2, sigma2 = sqrt(2).
// Frozen fast process is OU with stationary law N(x1, 1), so abar(x) = -x and
// sigbar = sigma1; mixing holds with lambda = 1.
inline BenchmarkModel make_linear_benchmark(double epsilon, double sigma1,
                                            double obs_noise_sd) {
    if (epsilon <= 0.0 || sigma1 <= 0.0 || obs_noise_sd <= 0.0)
        throw std::invalid_argument("linear benchmark parameters must be positive");

    BenchmarkModel bm;
    bm.name = "linear_ou";

    MultiscaleModel& m = bm.multiscale;
    m.p = 1;
    m.q = 1;
    m.epsilon = epsilon;
    m.lambda_mix = 1.0;
    m.slow_drift = [](const Vec&, const Vec& x2) -> Vec { return -x2; };
    m.slow_diffusion = [sigma1](const Vec&, const Vec&) -> Mat {
        Mat s(1, 1);
        s(0, 0) = sigma1;
        return s;
    };
    m.fast_drift = [](const Vec& x1, const Vec& x2) -> Vec { return x1 - x2; };
    m.fast_diffusion = [](const Vec&, const Vec&) -> Mat {
        Mat s(1, 1);
        s(0, 0) = std::sqrt(2.0);
        return s;
    };
    m.mu1_sampler = [](RngStream& rng) -> Vec {
        Vec x(1);
        x(0) = rng.normal();
        return x;
    };
    m.mu2_sampler = [](RngStream& rng) -> Vec {
        Vec x(1);
        x(0) = rng.normal();
        return x;
    };

    AveragedModel am;
    am.p = 1;
    am.drift = [](const Vec& x) -> Vec { return -x; };
    am.diffusion = [sigma1](const Vec&) -> Mat {
        Mat s(1, 1);
        s(0, 0) = sigma1;
        return s;
    };
    am.mu1_sampler = m.mu1_sampler;
    bm.averaged_exact = am;

    bm.observation = make_additive_gaussian_observation(obs_noise_sd);
    return bm;
}

// Nonlinear benchmark: a(x1,x2) = -x1 + sin(x2), fast OU around 0,
// sigma1(x1,x2) = sqrt(1 + 0.5 x2^2). Stationary fast law is N(0,1), so
// E sin(Z) = exp(-1/2) sin(0) = 0 and sigbar^2 = 1 + 0.5.
inline BenchmarkModel make_nonlinear_benchmark(double epsilon,
                                               double obs_noise_sd = 1.0) {
    if (epsilon <= 0.0)
        throw std::invalid_argument("epsilon must be positive");

    BenchmarkModel bm;
    bm.name = "nonlinear_sin";

    MultiscaleModel& m = bm.multiscale;
    m.p = 1;
    m.q = 1;
    m.epsilon = epsilon;
    m.lambda_mix = 1.0;
    m.slow_drift = [](const Vec& x1, const Vec& x2) -> Vec {
        Vec a(1);
        a(0) = -x1(0) + std::sin(x2(0));
        return a;
    };
    m.slow_diffusion = [](const Vec&, const Vec& x2) -> Mat {
        Mat s(1, 1);
        s(0, 0) = std::sqrt(1.0 + 0.5 * x2(0) * x2(0));
        return s;
    };
    m.fast_drift = [](const Vec&, const Vec& x2) -> Vec { return -x2; };
    m.fast_diffusion = [](const Vec&, const Vec&) -> Mat {
        Mat s(1, 1);
        s(0, 0) = std::sqrt(2.0);
        return s;
    };
    m.mu1_sampler = [](RngStream& rng) -> Vec {
        Vec x(1);
        x(0) = rng.normal();
        return x;
    };
    m.mu2_sampler = m.mu1_sampler;

    const double stationary_var = 1.0;
    AveragedModel am;
    am.p = 1;
    am.drift = [stationary_var](const Vec& x) -> Vec {
        Vec a(1);
        a(0) = -x(0) + std::exp(-0.5 * stationary_var) * std::sin(0.0);
        return a;
    };
    am.diffusion = [stationary_var](const Vec&) -> Mat {
        Mat s(1, 1);
        s(0, 0) = std::sqrt(1.0 + 0.5 * stationary_var);
        return s;
    };
    am.mu1_sampler = m.mu1_sampler;
    bm.averaged_exact = am;

    bm.observation = make_additive_gaussian_observation(obs_noise_sd);
    return bm;
}

struct BenchmarkParams {
    double epsilon = 0.1;
    double sigma1 = 1.0;
    double obs_noise_sd = 1.0;
};

// Registry: configs select models by name; coefficients stay code.
inline BenchmarkModel make_benchmark(const std::string& name,
                                     const BenchmarkParams& params) {
    if (name == "linear_ou")
        return make_linear_benchmark(params.epsilon, params.sigma1,
                                     params.obs_noise_sd);
    if (name == "nonlinear_sin")
        return make_nonlinear_benchmark(params.epsilon, params.obs_noise_sd);
    throw std::invalid_argument("unknown model name: " + name);
}

inline std::vector<std::string> registered_model_names() {
    return {"linear_ou", "nonlinear_sin"};
}

struct MixingReport {
    double max_ratio = 0.0;
    bool pass = false;
};

// Evaluates the dissipativity ratio
//   (<x2 - x2', b - b'> + ||sigma2 - sigma2'||_F^2) / |x2 - x2'|^2
// over sampled pairs and checks max <= -lambda_mix (up to tolerance).
inline MixingReport check_mixing_condition(const MultiscaleModel& m,
                                           std::size_t n_pairs,
                                           std::uint64_t seed) {
    if (n_pairs < 1) throw std::invalid_argument("n_pairs must be >= 1");
    RngStream rng(seed, 0x6d6978);  // dedicated stream tag
    double max_ratio = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n_pairs; ++i) {
        const Vec x1 = m.mu1_sampler(rng);
        Vec x2 = m.mu2_sampler(rng);
        Vec x2p;
        double dist2 = 0.0;
        do {  // degenerate pairs are resampled, never divided by
            x2p = x2 + gaussian_vector(m.q, rng);
            dist2 = (x2 - x2p).squaredNorm();
        } while (dist2 < 1e-14);
        const Vec db = m.fast_drift(x1, x2) - m.fast_drift(x1, x2p);
        const Mat ds = m.fast_diffusion(x1, x2) - m.fast_diffusion(x1, x2p);
        const double ratio =
            ((x2 - x2p).dot(db) + ds.squaredNorm()) / dist2;
        if (ratio > max_ratio) max_ratio = ratio;
    }
    MixingReport report;
    report.max_ratio = max_ratio;
    report.pass = max_ratio <= -m.lambda_mix + 1e-9;
    return report;
}

}  // namespace msfilter
