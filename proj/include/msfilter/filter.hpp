#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "msfilter/errors.hpp"
#include "msfilter/integrator.hpp"
#include "msfilter/model.hpp"

namespace msfilter {

// Weighted empirical measure over slow-state positions.
struct ParticleEnsemble {
    std::vector<Vec> positions;
    std::vector<double> weights;

    std::size_t size() const { return positions.size(); }
};

enum class WeightPolicy { Fail, FallbackUniform };

enum class KernelChoice { Full, AveragedExact, Hmm };

inline std::string kernel_name(KernelChoice kc) {
    switch (kc) {
        case KernelChoice::Full: return "full";
        case KernelChoice::AveragedExact: return "averaged_exact";
        case KernelChoice::Hmm: return "hmm";
    }
    return "?";
}

inline KernelChoice kernel_from_name(const std::string& name) {
    if (name == "full") return KernelChoice::Full;
    if (name == "averaged_exact") return KernelChoice::AveragedExact;
    if (name == "hmm") return KernelChoice::Hmm;
    throw ConfigError("unknown kernel name: " + name);
}

struct FilterStepRecord {
    ParticleEnsemble weighted;   // pre-resampling, normalized weights
    ParticleEnsemble resampled;  // post-resampling, uniform weights
    std::int64_t rv_count_step = 0;
    std::int64_t rv_count_cum = 0;
    double wall_ms = 0.0;
};

struct FilterTrajectory {
    std::vector<FilterStepRecord> steps;  // index k = 0..T; k=0 unconditioned
    std::vector<std::string> warnings;
};

inline void run_partitioned(std::size_t n, int threads,
                            const std::function<void(std::size_t, std::size_t)>& body) {
    if (threads <= 1 || n < 2) {
        body(0, n);
        return;
    }
    const auto t = static_cast<std::size_t>(threads);
    std::vector<std::thread> workers;
    const std::size_t chunk = (n + t - 1) / t;
    for (std::size_t begin = 0; begin < n; begin += chunk) {
        const std::size_t end = std::min(n, begin + chunk);
        workers.emplace_back(body, begin, end);
    }
    for (auto& w : workers) w.join();
}

inline ParticleEnsemble init_particles(const SamplerFn& sampler, std::size_t n,
                                       RngStream& rng) {
    if (n < 1) throw std::invalid_argument("need at least one particle");
    ParticleEnsemble ens;
    ens.positions.reserve(n);
    ens.weights.assign(n, 1.0 / static_cast<double>(n));
    for (std::size_t j = 0; j < n; ++j) ens.positions.push_back(sampler(rng));
    return ens;
}

// Raw (unnormalized) likelihood weights w_j = g(x_j, y).
inline ParticleEnsemble weight_particles(const ParticleEnsemble& ens,
                                         const ObservationModel& obs, const Vec& y,
                                         WeightPolicy policy = WeightPolicy::Fail,
                                         std::size_t step_index = 0) {
    ParticleEnsemble out = ens;
    double sum = 0.0;
    double max_w = 0.0;
    bool finite = true;
    for (std::size_t j = 0; j < out.size(); ++j) {
        const double w = obs.likelihood(out.positions[j], y);
        out.weights[j] = w;
        if (!std::isfinite(w)) finite = false;
        sum += w;
        if (w > max_w) max_w = w;
    }
    if (!finite || sum <= 0.0) {
        if (policy == WeightPolicy::Fail)
            throw DegenerateWeightsError(step_index, sum, max_w);
        const double u = 1.0 / static_cast<double>(out.size());
        for (double& w : out.weights) w = u;
    }
    return out;
}

inline ParticleEnsemble normalize_weights(const ParticleEnsemble& ens,
                                          std::size_t step_index = 0) {
    double sum = 0.0;
    double max_w = 0.0;
    for (double w : ens.weights) {
        sum += w;
        if (w > max_w) max_w = w;
    }
    if (!std::isfinite(sum) || sum <= 0.0)
        throw DegenerateWeightsError(step_index, sum, max_w);
    ParticleEnsemble out = ens;
    for (double& w : out.weights) w /= sum;
    return out;
}

// N i.i.d. categorical draws from normalized weights.
inline std::vector<std::size_t> multinomial_indices(const std::vector<double>& weights,
                                                    std::size_t n, RngStream& rng) {
    std::vector<double> cumulative(weights.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        acc += weights[i];
        cumulative[i] = acc;
    }
    std::vector<std::size_t> idx(n);
    for (std::size_t j = 0; j < n; ++j) {
        const double u = rng.uniform() * acc;
        const auto it = std::lower_bound(cumulative.begin(), cumulative.end(), u);
        idx[j] = std::min<std::size_t>(it - cumulative.begin(), weights.size() - 1);
    }
    return idx;
}

inline ParticleEnsemble multinomial_resample(const ParticleEnsemble& ens,
                                             RngStream& rng) {
    const std::vector<std::size_t> idx =
        multinomial_indices(ens.weights, ens.size(), rng);
    ParticleEnsemble out;
    out.positions.reserve(ens.size());
    for (std::size_t j : idx) out.positions.push_back(ens.positions[j]);
    out.weights.assign(ens.size(), 1.0 / static_cast<double>(ens.size()));
    return out;
}

inline double estimate(const ParticleEnsemble& ens,
                       const std::function<double(const Vec&)>& f) {
    double num = 0.0;
    double den = 0.0;
    for (std::size_t j = 0; j < ens.size(); ++j) {
        const double fv = f(ens.positions[j]);
        if (!std::isfinite(fv))
            throw std::runtime_error("estimate: nonfinite test-function value");
        num += ens.weights[j] * fv;
        den += ens.weights[j];
    }
    return num / den;
}

using KernelFn = std::function<KernelSample(const Vec& x, RngStream& rng)>;

struct FilterStepResult {
    ParticleEnsemble weighted;
    ParticleEnsemble resampled;
    std::vector<std::size_t> ancestry;
    std::int64_t rv_count = 0;
};

// Evolve - weight - normalize - resample, with per-particle RNG streams
// (stream_id mixes step and particle index) so results do not depend on the
// thread count. Resampling draws from a dedicated stream.
inline FilterStepResult filter_step(const ParticleEnsemble& ens, const KernelFn& kernel,
                                    const ObservationModel& obs, const Vec& y,
                                    std::uint64_t seed, std::uint64_t step_index,
                                    WeightPolicy policy = WeightPolicy::Fail,
                                    int threads = 1) {
    const std::size_t n = ens.size();
    ParticleEnsemble moved;
    moved.positions.resize(n);
    moved.weights.assign(n, 0.0);
    std::vector<std::int64_t> rv_per_particle(n, 0);
    std::exception_ptr failure;
    std::mutex failure_mutex;

    run_partitioned(n, threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t j = begin; j < end; ++j) {
            try {
                RngStream stream(seed, (step_index << 32) | static_cast<std::uint32_t>(j));
                KernelSample s = kernel(ens.positions[j], stream);
                moved.positions[j] = std::move(s.x_next);
                rv_per_particle[j] = s.rv_count;
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    });
    if (failure) std::rethrow_exception(failure);

    std::int64_t rv = 0;
    for (std::int64_t c : rv_per_particle) rv += c;

    FilterStepResult result;
    result.weighted = normalize_weights(
        weight_particles(moved, obs, y, policy, step_index), step_index);
    RngStream resample_stream(seed, (step_index << 32) | 0xFFFFFFFFULL);
    result.ancestry =
        multinomial_indices(result.weighted.weights, n, resample_stream);
    result.resampled.positions.reserve(n);
    for (std::size_t j : result.ancestry)
        result.resampled.positions.push_back(result.weighted.positions[j]);
    result.resampled.weights.assign(n, 1.0 / static_cast<double>(n));
    result.rv_count = rv;
    return result;
}

struct FilterOptions {
    double h_step = 0.0;            // 0 -> default 1/sqrt(N)
    std::optional<HmmParams> hmm;   // default dT = dt = 1/sqrt(N), n = M = 1
    WeightPolicy policy = WeightPolicy::Fail;
    int threads = 1;
};

// Bootstrap particle filter over the observation sequence. Step sizes default
// to 1/sqrt(N) for every kernel. Entry k=0 is the unconditioned initial
// ensemble; entry k holds the weighted and resampled ensembles after
// conditioning on Y_k.
inline FilterTrajectory run_filter(const BenchmarkModel& bm, KernelChoice kc,
                                   const std::vector<Vec>& observations,
                                   std::size_t n_particles, std::uint64_t seed,
                                   FilterOptions opts = {}) {
    if (observations.empty())
        throw std::invalid_argument("need at least one observation");
    if (n_particles < 1) throw std::invalid_argument("need at least one particle");
    const MultiscaleModel& m = bm.multiscale;
    const double default_h = 1.0 / std::sqrt(static_cast<double>(n_particles));
    const double h = opts.h_step > 0.0 ? opts.h_step : default_h;
    HmmParams hmm = opts.hmm.value_or(HmmParams{default_h, default_h, 1.0, 1});

    FilterTrajectory traj;
    if (kc == KernelChoice::Full && h > m.epsilon)
        traj.warnings.push_back("full kernel step exceeds epsilon; stiff Euler unreliable");
    if (kc == KernelChoice::AveragedExact && !bm.averaged_exact)
        throw std::invalid_argument("model has no exact averaged form");

    // Initialization: mu1 draws; the full kernel additionally carries a fast
    // state per particle, initialized from mu2.
    RngStream init_stream(seed, 0);
    ParticleEnsemble ens;
    ens.weights.assign(n_particles, 1.0 / static_cast<double>(n_particles));
    std::vector<Vec> fast_states;
    for (std::size_t j = 0; j < n_particles; ++j) {
        ens.positions.push_back(m.mu1_sampler(init_stream));
        if (kc == KernelChoice::Full)
            fast_states.push_back(m.mu2_sampler(init_stream));
    }
    FilterStepRecord initial;
    initial.weighted = ens;
    initial.resampled = ens;
    traj.steps.push_back(initial);

    std::int64_t rv_cum = 0;
    for (std::size_t k = 1; k <= observations.size(); ++k) {
        const auto t0 = std::chrono::steady_clock::now();
        const Vec& y = observations[k - 1];
        FilterStepResult step;
        if (kc == KernelChoice::Full) {
            std::vector<Vec> fast_next(n_particles);
            ParticleEnsemble moved;
            moved.positions.resize(n_particles);
            moved.weights.assign(n_particles, 0.0);
            std::vector<std::int64_t> rv_per(n_particles, 0);
            std::exception_ptr failure;
            std::mutex failure_mutex;
            run_partitioned(n_particles, opts.threads,
                            [&](std::size_t begin, std::size_t end) {
                for (std::size_t j = begin; j < end; ++j) {
                    try {
                        RngStream stream(seed, (static_cast<std::uint64_t>(k) << 32) |
                                                   static_cast<std::uint32_t>(j));
                        FullKernelSample s = full_kernel_sample(
                            m, ens.positions[j], fast_states[j], h, stream);
                        moved.positions[j] = std::move(s.x_next);
                        fast_next[j] = std::move(s.fast_next);
                        rv_per[j] = s.rv_count;
                    } catch (...) {
                        std::lock_guard<std::mutex> lock(failure_mutex);
                        if (!failure) failure = std::current_exception();
                    }
                }
            });
            if (failure) std::rethrow_exception(failure);
            std::int64_t rv = 0;
            for (std::int64_t c : rv_per) rv += c;
            step.weighted = normalize_weights(
                weight_particles(moved, bm.observation, y, opts.policy, k), k);
            RngStream resample_stream(seed, (static_cast<std::uint64_t>(k) << 32) |
                                                0xFFFFFFFFULL);
            step.ancestry = multinomial_indices(step.weighted.weights, n_particles,
                                                resample_stream);
            step.resampled.positions.reserve(n_particles);
            std::vector<Vec> fast_resampled;
            fast_resampled.reserve(n_particles);
            for (std::size_t j : step.ancestry) {
                step.resampled.positions.push_back(step.weighted.positions[j]);
                fast_resampled.push_back(fast_next[j]);
            }
            step.resampled.weights.assign(n_particles,
                                          1.0 / static_cast<double>(n_particles));
            step.rv_count = rv;
            fast_states = std::move(fast_resampled);
        } else {
            KernelFn kernel;
            if (kc == KernelChoice::AveragedExact) {
                const AveragedModel& am = *bm.averaged_exact;
                kernel = [&am, h](const Vec& x, RngStream& rng) {
                    return averaged_kernel_sample(am, x, h, rng);
                };
            } else {
                kernel = [&m, &hmm](const Vec& x, RngStream& rng) {
                    return hmm_kernel_sample(m, x, hmm, rng);
                };
            }
            step = filter_step(ens, kernel, bm.observation, y, seed, k,
                               opts.policy, opts.threads);
        }
        ens = step.resampled;
        rv_cum += step.rv_count;

        FilterStepRecord rec;
        rec.weighted = std::move(step.weighted);
        rec.resampled = ens;
        rec.rv_count_step = step.rv_count;
        rec.rv_count_cum = rv_cum;
        rec.wall_ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
        traj.steps.push_back(std::move(rec));
    }
    return traj;
}

}  // namespace msfilter
