#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "msfilter/analysis.hpp"
#include "msfilter/errors.hpp"
#include "msfilter/filter.hpp"
#include "msfilter/model.hpp"
#include "msfilter/oracle.hpp"

namespace msfilter {

inline constexpr const char* kLibraryVersion = "0.1.0";
inline constexpr int kRunRecordSchemaVersion = 1;

inline constexpr const char* kCsvHeader =
    "experiment_id,model,kernel,epsilon,N,seed,k,estimate_mean,oracle_mean,"
    "abs_error,rv_count_step,rv_count_cum,wall_ms";

// Decimal with 17 significant digits; all numeric CSV output goes through here.
inline std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct ExperimentConfig {
    std::string experiment_id = "experiment";
    std::string model = "linear_ou";
    double epsilon = 0.1;
    double sigma1 = 1.0;
    double obs_noise_sd = 1.0;
    std::vector<std::string> kernels = {"averaged_exact"};
    std::vector<std::size_t> n_particles = {100};
    std::size_t horizon_T = 5;
    std::vector<std::uint64_t> seeds = {1};
    double fine_step = 0.0;  // 0 -> epsilon / 10
    std::optional<double> h_step_override;
    std::optional<HmmParams> hmm_override;
    std::string weight_policy = "fail";
    std::string out_dir = "msfilter_out";
    int threads = 1;
    std::size_t oracle_n = 20000;  // brute-force oracle size for nonlinear models

    void validate() const {
        if (horizon_T < 1) throw ConfigError("T must be >= 1");
        if (kernels.empty()) throw ConfigError("at least one kernel required");
        for (const auto& k : kernels) kernel_from_name(k);
        if (n_particles.empty()) throw ConfigError("N list must be nonempty");
        for (std::size_t n : n_particles)
            if (n < 1) throw ConfigError("all N must be >= 1");
        if (seeds.empty()) throw ConfigError("seed list must be nonempty");
        if (weight_policy != "fail" && weight_policy != "fallback_uniform")
            throw ConfigError("weight_policy must be 'fail' or 'fallback_uniform'");
        bool known = false;
        for (const auto& name : registered_model_names())
            if (name == model) known = true;
        if (!known) throw ConfigError("unknown model name: " + model);
        if (epsilon <= 0.0) throw ConfigError("epsilon must be positive");
        if (fine_step > epsilon / 10.0 + 1e-15)
            throw ConfigError("fine_step must be <= epsilon/10");
    }

    double effective_fine_step() const {
        return fine_step > 0.0 ? fine_step : epsilon / 10.0;
    }

    WeightPolicy policy() const {
        return weight_policy == "fail" ? WeightPolicy::Fail
                                       : WeightPolicy::FallbackUniform;
    }

    BenchmarkModel build_model() const {
        BenchmarkParams params;
        params.epsilon = epsilon;
        params.sigma1 = sigma1;
        params.obs_noise_sd = obs_noise_sd;
        return make_benchmark(model, params);
    }
};

inline ExperimentConfig parse_config(const nlohmann::json& j) {
    ExperimentConfig cfg;
    for (const auto& [key, value] : j.items()) {
        if (key == "experiment_id") cfg.experiment_id = value.get<std::string>();
        else if (key == "model") cfg.model = value.get<std::string>();
        else if (key == "epsilon") cfg.epsilon = value.get<double>();
        else if (key == "sigma1") cfg.sigma1 = value.get<double>();
        else if (key == "obs_noise_sd") cfg.obs_noise_sd = value.get<double>();
        else if (key == "kernel") cfg.kernels = {value.get<std::string>()};
        else if (key == "kernels") cfg.kernels = value.get<std::vector<std::string>>();
        else if (key == "N") cfg.n_particles = value.get<std::vector<std::size_t>>();
        else if (key == "T") cfg.horizon_T = value.get<std::size_t>();
        else if (key == "seeds") cfg.seeds = value.get<std::vector<std::uint64_t>>();
        else if (key == "fine_step") cfg.fine_step = value.get<double>();
        else if (key == "h_step") cfg.h_step_override = value.get<double>();
        else if (key == "hmm") {
            HmmParams p;
            p.delta_T = value.value("delta_T", 0.1);
            p.delta_t = value.value("delta_t", p.delta_T);
            p.n_burst = value.value("n", 1.0);
            p.n_replicas = value.value("M", 1);
            cfg.hmm_override = p;
        } else if (key == "weight_policy") cfg.weight_policy = value.get<std::string>();
        else if (key == "out_dir") cfg.out_dir = value.get<std::string>();
        else if (key == "threads") cfg.threads = value.get<int>();
        else if (key == "oracle_n") cfg.oracle_n = value.get<std::size_t>();
        else throw ConfigError("unknown config key: " + key);
    }
    if (const char* env_out = std::getenv("MSFILTER_OUT"))
        cfg.out_dir = env_out;
    cfg.validate();
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid JSON: ") + e.what());
    }
    return parse_config(j);
}

struct SyntheticData {
    std::vector<Vec> slow_path;     // X1 at k = 0..T
    std::vector<Vec> observations;  // Y_k for k = 1..T
};

// Truth run: fine-step Euler of the full stiff system over [0, T], slow
// states recorded at integer times, observations drawn through h.
inline SyntheticData generate_synthetic_data(const BenchmarkModel& bm, std::size_t T,
                                             double fine_step, std::uint64_t seed) {
    const MultiscaleModel& m = bm.multiscale;
    if (fine_step > m.epsilon / 10.0 + 1e-15)
        throw std::invalid_argument("fine_step must be <= epsilon/10");
    RngStream path_stream(seed, 0xDA7A000000000001ULL);
    RngStream noise_stream(seed, 0xDA7A000000000002ULL);

    SyntheticData data;
    Vec x1 = m.mu1_sampler(path_stream);
    Vec x2 = m.mu2_sampler(path_stream);
    data.slow_path.push_back(x1);
    for (std::size_t k = 1; k <= T; ++k) {
        FullKernelSample s = full_kernel_sample(m, x1, x2, fine_step, path_stream);
        x1 = s.x_next;
        x2 = s.fast_next;
        data.slow_path.push_back(x1);
        const Vec v = bm.observation.noise_sampler(noise_stream);
        data.observations.push_back(bm.observation.h(x1, v));
    }
    return data;
}

inline std::string data_cache_key(const ExperimentConfig& cfg, std::uint64_t seed) {
    std::ostringstream key;
    key << cfg.model << "_eps" << fmt_double(cfg.epsilon) << "_s1"
        << fmt_double(cfg.sigma1) << "_r" << fmt_double(cfg.obs_noise_sd) << "_T"
        << cfg.horizon_T << "_h" << fmt_double(cfg.effective_fine_step()) << "_seed"
        << seed;
    return key.str();
}

inline void write_atomic(const std::filesystem::path& path, const std::string& body) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        out << body;
    }
    std::filesystem::rename(tmp, path);
}

// Truth runs are cached per (model, params, T, fine_step, seed) and reused
// across N sweeps.
inline SyntheticData load_or_generate_data(const ExperimentConfig& cfg,
                                           const BenchmarkModel& bm,
                                           std::uint64_t seed) {
    const std::filesystem::path cache_dir =
        std::filesystem::path(cfg.out_dir) / "cache";
    std::filesystem::create_directories(cache_dir);
    const std::filesystem::path file =
        cache_dir / (data_cache_key(cfg, seed) + ".json");
    if (std::filesystem::exists(file)) {
        std::ifstream in(file);
        nlohmann::json j;
        in >> j;
        SyntheticData data;
        for (const auto& row : j.at("slow_path")) {
            Vec x(row.size());
            for (std::size_t i = 0; i < row.size(); ++i) x(i) = row[i].get<double>();
            data.slow_path.push_back(x);
        }
        for (const auto& row : j.at("observations")) {
            Vec y(row.size());
            for (std::size_t i = 0; i < row.size(); ++i) y(i) = row[i].get<double>();
            data.observations.push_back(y);
        }
        return data;
    }
    SyntheticData data =
        generate_synthetic_data(bm, cfg.horizon_T, cfg.effective_fine_step(), seed);
    nlohmann::json j;
    j["slow_path"] = nlohmann::json::array();
    for (const Vec& x : data.slow_path) {
        nlohmann::json row = nlohmann::json::array();
        for (int i = 0; i < x.size(); ++i) row.push_back(x(i));
        j["slow_path"].push_back(row);
    }
    j["observations"] = nlohmann::json::array();
    for (const Vec& y : data.observations) {
        nlohmann::json row = nlohmann::json::array();
        for (int i = 0; i < y.size(); ++i) row.push_back(y(i));
        j["observations"].push_back(row);
    }
    write_atomic(file, j.dump(2));
    return data;
}

// Oracle posterior means per k: exact Kalman recursion for the linear
// benchmark, brute-force particle filter on the exact averaged model
// otherwise.
inline std::vector<double> oracle_means(const ExperimentConfig& cfg,
                                        const BenchmarkModel& bm,
                                        const std::vector<Vec>& observations,
                                        std::uint64_t seed) {
    std::vector<double> means;
    if (cfg.model == "linear_ou") {
        LinearGaussianParams params{1.0, cfg.sigma1, 0.0, 1.0};
        std::vector<double> obs1d;
        for (const Vec& y : observations) obs1d.push_back(y(0));
        for (const GaussianBelief& b :
             kalman_filter(params, cfg.obs_noise_sd, obs1d))
            means.push_back(b.mean(0));
        return means;
    }
    ReferenceFilter ref = reference_filter_bruteforce(
        bm, KernelChoice::AveragedExact, observations, cfg.oracle_n,
        seed ^ 0x0AC1E0000000000FULL);
    for (const Vec& m : ref.means) means.push_back(m(0));
    return means;
}

struct RunCell {
    std::string kernel;
    std::size_t n_particles = 0;
    std::uint64_t seed = 0;
    std::vector<ErrorSeriesRow> rows;
    std::vector<std::string> warnings;
    double wall_ms_total = 0.0;
};

// One (kernel, N, seed) cell: run the filter against cached data, compare
// against the oracle, produce per-k rows.
inline RunCell run_cell(const ExperimentConfig& cfg, const BenchmarkModel& bm,
                        const SyntheticData& data, const std::string& kernel,
                        std::size_t n, std::uint64_t seed) {
    FilterOptions opts;
    opts.policy = cfg.policy();
    opts.threads = cfg.threads;
    if (cfg.h_step_override) opts.h_step = *cfg.h_step_override;
    if (cfg.hmm_override) opts.hmm = cfg.hmm_override;
    const KernelChoice kc = kernel_from_name(kernel);

    FilterTrajectory traj =
        run_filter(bm, kc, data.observations, n, seed, opts);
    const std::vector<double> oracle =
        oracle_means(cfg, bm, data.observations, seed);

    RunCell cell;
    cell.kernel = kernel;
    cell.n_particles = n;
    cell.seed = seed;
    cell.warnings = traj.warnings;
    for (std::size_t k = 0; k < traj.steps.size(); ++k) {
        const FilterStepRecord& rec = traj.steps[k];
        ErrorSeriesRow row;
        row.kernel = kernel;
        row.epsilon = cfg.epsilon;
        row.n_particles = n;
        row.seed = seed;
        row.k = k;
        row.estimate = estimate(rec.resampled, [](const Vec& x) { return x(0); });
        row.oracle = oracle[k];
        row.abs_error = std::abs(row.estimate - row.oracle);
        row.rv_count_step = rec.rv_count_step;
        row.rv_count_cum = rec.rv_count_cum;
        cell.rows.push_back(row);
        cell.wall_ms_total += rec.wall_ms;
    }
    return cell;
}

inline std::string csv_line(const ExperimentConfig& cfg, const ErrorSeriesRow& row,
                            double wall_ms) {
    std::ostringstream line;
    line << cfg.experiment_id << ',' << cfg.model << ',' << row.kernel << ','
         << fmt_double(row.epsilon) << ',' << row.n_particles << ',' << row.seed
         << ',' << row.k << ',' << fmt_double(row.estimate) << ','
         << fmt_double(row.oracle) << ',' << fmt_double(row.abs_error) << ','
         << row.rv_count_step << ',' << row.rv_count_cum << ','
         << fmt_double(wall_ms);
    return line.str();
}

inline nlohmann::json config_snapshot(const ExperimentConfig& cfg) {
    nlohmann::json j;
    j["experiment_id"] = cfg.experiment_id;
    j["model"] = cfg.model;
    j["epsilon"] = cfg.epsilon;
    j["sigma1"] = cfg.sigma1;
    j["obs_noise_sd"] = cfg.obs_noise_sd;
    j["kernels"] = cfg.kernels;
    j["N"] = cfg.n_particles;
    j["T"] = cfg.horizon_T;
    j["seeds"] = cfg.seeds;
    j["fine_step"] = cfg.effective_fine_step();
    if (cfg.h_step_override) j["h_step"] = *cfg.h_step_override;
    if (cfg.hmm_override) {
        j["hmm"] = {{"delta_T", cfg.hmm_override->delta_T},
                    {"delta_t", cfg.hmm_override->delta_t},
                    {"n", cfg.hmm_override->n_burst},
                    {"M", cfg.hmm_override->n_replicas}};
    }
    j["weight_policy"] = cfg.weight_policy;
    j["threads"] = cfg.threads;
    return j;
}

inline void write_run_record(const ExperimentConfig& cfg, const RunCell& cell) {
    nlohmann::json j;
    j["schema_version"] = kRunRecordSchemaVersion;
    j["library_version"] = kLibraryVersion;
    j["config"] = config_snapshot(cfg);
    j["kernel"] = cell.kernel;
    j["N"] = cell.n_particles;
    j["seed"] = cell.seed;
    j["wall_ms_total"] = cell.wall_ms_total;
    j["warnings"] = cell.warnings;
    nlohmann::json rows = nlohmann::json::array();
    for (const ErrorSeriesRow& row : cell.rows) {
        rows.push_back({{"k", row.k},
                        {"estimate_mean", row.estimate},
                        {"oracle_mean", row.oracle},
                        {"abs_error", row.abs_error},
                        {"rv_count_step", row.rv_count_step},
                        {"rv_count_cum", row.rv_count_cum}});
    }
    j["rows"] = rows;
    std::ostringstream name;
    name << cfg.experiment_id << '_' << cell.kernel << "_N" << cell.n_particles
         << "_seed" << cell.seed << ".json";
    write_atomic(std::filesystem::path(cfg.out_dir) / name.str(), j.dump(2));
}

// Exit codes: 0 success, 2 config error, 3 numerical blow-up,
// 4 degenerate weights under the fail policy.
inline int run_experiment(const ExperimentConfig& cfg) {
    try {
        cfg.validate();
        std::filesystem::create_directories(cfg.out_dir);
        const BenchmarkModel bm = cfg.build_model();
        std::ostringstream csv;
        csv << kCsvHeader << '\n';
        for (const std::string& kernel : cfg.kernels) {
            for (std::size_t n : cfg.n_particles) {
                for (std::uint64_t seed : cfg.seeds) {
                    const SyntheticData data = load_or_generate_data(cfg, bm, seed);
                    const RunCell cell = run_cell(cfg, bm, data, kernel, n, seed);
                    for (std::size_t k = 1; k < cell.rows.size(); ++k)
                        csv << csv_line(cfg, cell.rows[k], cell.wall_ms_total)
                            << '\n';
                    write_run_record(cfg, cell);
                }
            }
        }
        write_atomic(std::filesystem::path(cfg.out_dir) /
                         (cfg.experiment_id + ".csv"),
                     csv.str());
        return 0;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "{\"error\":\"config\",\"message\":\"%s\"}\n", e.what());
        return 2;
    } catch (const BlowUpError& e) {
        std::fprintf(stderr, "{\"error\":\"blow_up\",\"message\":\"%s\"}\n", e.what());
        return 3;
    } catch (const DegenerateWeightsError& e) {
        std::fprintf(stderr, "{\"error\":\"degenerate_weights\",\"message\":\"%s\"}\n",
                     e.what());
        return 4;
    }
}

inline std::int64_t per_step_cost(const std::string& kernel, std::size_t n, int p,
                                  int q) {
    const double h = 1.0 / std::sqrt(static_cast<double>(n));
    if (kernel == "full")
        return static_cast<std::int64_t>(n) * full_kernel_rv_count(p, q, h);
    if (kernel == "averaged_exact")
        return static_cast<std::int64_t>(n) * averaged_kernel_rv_count(p, h);
    const HmmParams params{h, h, 1.0, 1};
    return static_cast<std::int64_t>(n) * hmm_kernel_rv_count(p, q, params);
}

// Largest N whose per-step cost stays within the budget.
inline std::size_t n_for_budget(const std::string& kernel, std::int64_t budget,
                                int p, int q) {
    std::size_t lo = 1, hi = 1;
    while (per_step_cost(kernel, hi, p, q) <= budget && hi < (1u << 24)) hi *= 2;
    while (lo + 1 < hi) {
        const std::size_t mid = lo + (hi - lo) / 2;
        if (per_step_cost(kernel, mid, p, q) <= budget)
            lo = mid;
        else
            hi = mid;
    }
    return lo;
}

struct KernelComparisonRow {
    std::string kernel;
    std::size_t n_equal = 0;
    double median_error_equal_n = 0.0;
    std::int64_t cost_equal_n = 0;
    std::size_t n_budget = 0;
    double median_error_equal_cost = 0.0;
    std::int64_t cost_budget = 0;
};

// Median terminal-step error per kernel, both at the shared N and at a
// matched per-step variate budget (budget = first kernel's cost at that N).
inline std::vector<KernelComparisonRow> compare_kernels(const ExperimentConfig& cfg) {
    if (cfg.kernels.size() < 2)
        throw ConfigError("compare requires at least two kernels");
    const BenchmarkModel bm = cfg.build_model();
    const int p = bm.multiscale.p;
    const int q = bm.multiscale.q;
    const std::size_t n_shared = cfg.n_particles.front();
    const std::int64_t budget = per_step_cost(cfg.kernels.front(), n_shared, p, q);

    auto median_error = [&](const std::string& kernel, std::size_t n) {
        std::vector<double> errors;
        for (std::uint64_t seed : cfg.seeds) {
            const SyntheticData data = load_or_generate_data(cfg, bm, seed);
            const RunCell cell = run_cell(cfg, bm, data, kernel, n, seed);
            errors.push_back(cell.rows.back().abs_error);
        }
        return median(errors);
    };

    std::vector<KernelComparisonRow> table;
    for (const std::string& kernel : cfg.kernels) {
        KernelComparisonRow row;
        row.kernel = kernel;
        row.n_equal = n_shared;
        row.cost_equal_n = per_step_cost(kernel, n_shared, p, q);
        row.median_error_equal_n = median_error(kernel, n_shared);
        row.n_budget = n_for_budget(kernel, budget, p, q);
        row.cost_budget = per_step_cost(kernel, row.n_budget, p, q);
        row.median_error_equal_cost = median_error(kernel, row.n_budget);
        table.push_back(row);
    }
    return table;
}

}  // namespace msfilter
