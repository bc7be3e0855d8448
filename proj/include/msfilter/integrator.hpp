#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "msfilter/errors.hpp"
#include "msfilter/math_util.hpp"
#include "msfilter/model.hpp"
#include "msfilter/rng.hpp"

namespace msfilter {

inline constexpr double kBlowUpNorm = 1e12;

// One slow-state sample over a unit observation interval, plus the exact
// number of scalar Gaussian variates it consumed.
struct KernelSample {
    Vec x_next;
    std::int64_t rv_count = 0;
};

struct FullKernelSample {
    Vec x_next;
    Vec fast_next;
    std::int64_t rv_count = 0;
};

// Macro step delta_T, micro step delta_t, burst horizon n (fast time units),
// M independent burst replicas.
struct HmmParams {
    double delta_T = 0.1;
    double delta_t = 0.1;
    double n_burst = 1.0;
    int n_replicas = 1;

    void validate() const {
        if (!(delta_T > 0.0 && delta_T <= 1.0))
            throw std::invalid_argument("delta_T must lie in (0,1]");
        if (!(delta_t > 0.0 && delta_t <= delta_T))
            throw std::invalid_argument("delta_t must lie in (0, delta_T]");
        if (!(n_burst > 0.0))
            throw std::invalid_argument("burst horizon must be positive");
        if (n_replicas < 1)
            throw std::invalid_argument("M must be >= 1");
    }
};

inline void check_finite(const Vec& x, const char* where) {
    if (!x.allFinite() || x.norm() > kBlowUpNorm)
        throw BlowUpError(where, x.allFinite() ? x.norm()
                                               : std::numeric_limits<double>::quiet_NaN());
}

// x + drift*dt + sigma*sqrt(dt)*z
inline Vec euler_step(const Vec& x, const Vec& drift_val, const Mat& sigma_val,
                      double dt, const Vec& z) {
    if (dt <= 0.0) throw std::invalid_argument("dt must be positive");
    Vec out = x + drift_val * dt + sigma_val * (std::sqrt(dt) * z);
    check_finite(out, "euler_step");
    return out;
}

// --- exact variate-count formulas -------------------------------------------

inline std::int64_t full_kernel_rv_count(int p, int q, double h_step) {
    return step_count(1.0, h_step) * (p + q);
}

inline std::int64_t averaged_kernel_rv_count(int p, double h_step) {
    return step_count(1.0, h_step) * p;
}

inline std::int64_t burst_rv_count(int q, double horizon, double micro_step) {
    return step_count(horizon, micro_step) * q;
}

// Number of macro phases actually executed: k = 0..floor(1/dT)-1, plus the
// remainder phase unless 1 - floor(1/dT)*dT vanishes.
inline std::int64_t hmm_phase_count(double delta_T) {
    const auto k_max = static_cast<std::int64_t>(std::floor(1.0 / delta_T + 1e-9));
    const double remainder = 1.0 - static_cast<double>(k_max) * delta_T;
    return remainder > 1e-12 ? k_max + 1 : k_max;
}

inline std::int64_t hmm_kernel_rv_count(int p, int q, const HmmParams& params) {
    const std::int64_t phases = hmm_phase_count(params.delta_T);
    const std::int64_t micro = step_count(params.n_burst, params.delta_t);
    return params.n_replicas * phases * micro * q + phases * p;
}

// --- unit-interval transition kernels ---------------------------------------

// Forward Euler of the full stiff system over [0,1]: drift a and (1/eps)b,
// diffusions sigma1 and (1/sqrt(eps))sigma2, ceil(1/h) steps with a final
// partial step. rv_count = ceil(1/h)*(p+q).
inline FullKernelSample full_kernel_sample(const MultiscaleModel& m,
                                           const Vec& x1_init, const Vec& x2_init,
                                           double h_step, RngStream& rng) {
    if (!(h_step > 0.0 && h_step <= 1.0))
        throw std::invalid_argument("h_step must lie in (0,1]");
    const std::int64_t n_steps = step_count(1.0, h_step);
    const double inv_eps = 1.0 / m.epsilon;
    const double inv_sqrt_eps = 1.0 / std::sqrt(m.epsilon);

    Vec x1 = x1_init;
    Vec x2 = x2_init;
    std::int64_t rv = 0;
    double t = 0.0;
    for (std::int64_t i = 0; i < n_steps; ++i) {
        const double dt = (i + 1 == n_steps) ? (1.0 - t) : h_step;
        const Vec z1 = gaussian_vector(m.p, rng);
        const Vec z2 = gaussian_vector(m.q, rng);
        rv += m.p + m.q;
        const Vec a = m.slow_drift(x1, x2);
        const Mat s1 = m.slow_diffusion(x1, x2);
        const Vec b = inv_eps * m.fast_drift(x1, x2);
        const Mat s2 = inv_sqrt_eps * m.fast_diffusion(x1, x2);
        const Vec x1n = euler_step(x1, a, s1, dt, z1);
        const Vec x2n = euler_step(x2, b, s2, dt, z2);
        x1 = x1n;
        x2 = x2n;
        t += dt;
    }
    return {x1, x2, rv};
}

// Forward Euler of the averaged SDE over [0,1]; rv_count = ceil(1/h)*p.
inline KernelSample averaged_kernel_sample(const AveragedModel& am, const Vec& x_init,
                                           double h_step, RngStream& rng) {
    if (!(h_step > 0.0 && h_step <= 1.0))
        throw std::invalid_argument("h_step must lie in (0,1]");
    const std::int64_t n_steps = step_count(1.0, h_step);
    Vec x = x_init;
    std::int64_t rv = 0;
    double t = 0.0;
    for (std::int64_t i = 0; i < n_steps; ++i) {
        const double dt = (i + 1 == n_steps) ? (1.0 - t) : h_step;
        const Vec z = gaussian_vector(am.p, rng);
        rv += am.p;
        x = euler_step(x, am.drift(x), am.diffusion(x), dt, z);
        t += dt;
    }
    return {x, rv};
}

struct BurstResult {
    Vec z_end;
    std::int64_t rv_count = 0;
};

// Frozen fast process dZ = b(x, Z) dt + sigma2(x, Z) dV in fast time units
// (no epsilon scaling), run over [0, horizon] with the micro step.
inline BurstResult frozen_fast_burst(const MultiscaleModel& m, const Vec& x1_frozen,
                                     const Vec& z0, double horizon,
                                     double micro_step, RngStream& rng) {
    if (!(horizon > 0.0) || !(micro_step > 0.0))
        throw std::invalid_argument("horizon and micro_step must be positive");
    const std::int64_t n_steps = step_count(horizon, micro_step);
    Vec z = z0;
    std::int64_t rv = 0;
    double t = 0.0;
    for (std::int64_t i = 0; i < n_steps; ++i) {
        const double dt = (i + 1 == n_steps) ? (horizon - t) : micro_step;
        const Vec g = gaussian_vector(m.q, rng);
        rv += m.q;
        z = euler_step(z, m.fast_drift(x1_frozen, z), m.fast_diffusion(x1_frozen, z),
                       dt, g);
        t += dt;
    }
    return {z, rv};
}

struct DriftVarEstimate {
    Vec a_hat;
    Mat var_hat;  // PSD projection of the sigma1*sigma1^T average
};

// Local coefficient estimate from M burst endpoints:
// a_hat = mean a(x1, zeta_i), var_hat = PSD[ mean sigma1 sigma1^T (x1, zeta_i) ].
inline DriftVarEstimate hmm_drift_var_estimate(const MultiscaleModel& m,
                                               const Vec& x1,
                                               const std::vector<Vec>& burst_endpoints) {
    if (burst_endpoints.empty())
        throw std::invalid_argument("need at least one burst endpoint");
    Vec a_hat = Vec::Zero(m.p);
    Mat v_hat = Mat::Zero(m.p, m.p);
    for (const Vec& z : burst_endpoints) {
        a_hat += m.slow_drift(x1, z);
        const Mat s1 = m.slow_diffusion(x1, z);
        v_hat += s1 * s1.transpose();
    }
    const double inv_m = 1.0 / static_cast<double>(burst_endpoints.size());
    a_hat *= inv_m;
    v_hat *= inv_m;
    const Mat root = psd_sqrt(v_hat);
    return {a_hat, root * root.transpose()};
}

// Unit-interval transition sampled by alternating short frozen-fast bursts
// (local drift/variance estimates) with Gaussian macro steps of size dT.
// Bursts chain their endpoints across phases within one invocation and
// re-initialize from mu2 on the next call.
inline KernelSample hmm_kernel_sample(const MultiscaleModel& m, const Vec& x1_init,
                                      const HmmParams& params, RngStream& rng) {
    params.validate();
    const auto k_max =
        static_cast<std::int64_t>(std::floor(1.0 / params.delta_T + 1e-9));
    const double remainder = 1.0 - static_cast<double>(k_max) * params.delta_T;
    const bool run_final = remainder > 1e-12;

    Vec xi = x1_init;
    std::int64_t rv = 0;
    std::vector<Vec> endpoints(params.n_replicas);
    for (int i = 0; i < params.n_replicas; ++i) endpoints[i] = m.mu2_sampler(rng);

    const std::int64_t n_phases = run_final ? k_max + 1 : k_max;
    for (std::int64_t k = 0; k < n_phases; ++k) {
        const double macro_dt =
            (k == k_max) ? remainder : params.delta_T;
        for (int i = 0; i < params.n_replicas; ++i) {
            BurstResult burst = frozen_fast_burst(m, xi, endpoints[i],
                                                  params.n_burst, params.delta_t, rng);
            endpoints[i] = burst.z_end;
            rv += burst.rv_count;
        }
        const DriftVarEstimate est = hmm_drift_var_estimate(m, xi, endpoints);
        const Mat root = psd_sqrt(est.var_hat);
        const Vec z = gaussian_vector(m.p, rng);
        rv += m.p;
        xi = xi + macro_dt * est.a_hat + std::sqrt(macro_dt) * (root * z);
        check_finite(xi, "hmm_kernel_sample");
    }
    return {xi, rv};
}

}  // namespace msfilter
