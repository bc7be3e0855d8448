#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "msfilter/msfilter.hpp"

namespace {

struct CommonFlags {
    std::string config_path;
    std::string out_dir;
    std::string kernel;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::size_t n_particles = 0;
    int threads = 0;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "JSON experiment config")
        ->required();
    cmd->add_option("--out-dir", flags.out_dir, "output directory override");
    cmd->add_option("--kernel", flags.kernel, "kernel override (full|averaged_exact|hmm)");
    cmd->add_option("--seed", flags.seed, "single-seed override")
        ->each([&flags](const std::string&) { flags.seed_set = true; });
    cmd->add_option("--n-particles", flags.n_particles, "particle-count override");
    cmd->add_option("--threads", flags.threads, "worker threads (results unchanged)");
}

int load_with_overrides(const CommonFlags& flags, msfilter::ExperimentConfig& cfg) {
    try {
        cfg = msfilter::load_config(flags.config_path);
        if (!flags.out_dir.empty()) cfg.out_dir = flags.out_dir;
        if (!flags.kernel.empty()) cfg.kernels = {flags.kernel};
        if (flags.seed_set) cfg.seeds = {flags.seed};
        if (flags.n_particles > 0) cfg.n_particles = {flags.n_particles};
        if (flags.threads > 0) cfg.threads = flags.threads;
        cfg.validate();
    } catch (const msfilter::ConfigError& e) {
        std::fprintf(stderr, "{\"error\":\"config\",\"message\":\"%s\"}\n", e.what());
        return 2;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"particle filters for discretely observed multiscale diffusions"};
    app.require_subcommand(1);

    CommonFlags run_flags, compare_flags, gen_flags;
    CLI::App* run_cmd = app.add_subcommand("run", "run an experiment config");
    add_common(run_cmd, run_flags);
    CLI::App* compare_cmd =
        app.add_subcommand("compare", "compare kernels at equal N and equal cost");
    add_common(compare_cmd, compare_flags);
    CLI::App* gen_cmd =
        app.add_subcommand("gen-data", "generate and cache synthetic truth data");
    add_common(gen_cmd, gen_flags);

    int bound_k = 0, bound_T = 1, bound_M = 1;
    double bound_K = 1.0, bound_alpha = 0.0;
    double bound_dT = 0.1, bound_dt = 0.1, bound_lambda = 1.0, bound_n = 1.0;
    CLI::App* bounds_cmd =
        app.add_subcommand("bounds", "print theoretical bound values");
    bounds_cmd->add_option("--k", bound_k)->required();
    bounds_cmd->add_option("--K", bound_K)->required();
    bounds_cmd->add_option("--T", bound_T)->required();
    bounds_cmd->add_option("--alpha", bound_alpha)->required();
    bounds_cmd->add_option("--delta-T", bound_dT);
    bounds_cmd->add_option("--delta-t", bound_dt);
    bounds_cmd->add_option("--lambda", bound_lambda);
    bounds_cmd->add_option("--n", bound_n);
    bounds_cmd->add_option("--M", bound_M);

    CLI11_PARSE(app, argc, argv);

    if (bounds_cmd->parsed()) {
        try {
            const double ck =
                msfilter::ck_bound(bound_K, bound_T, bound_k, bound_alpha);
            const double bracket = msfilter::hmm_error_bound(
                bound_dT, bound_dt, bound_lambda, bound_n, bound_M);
            std::printf("ck_bound=%s\n", msfilter::fmt_double(ck).c_str());
            std::printf("hmm_error_bound=%s\n",
                        msfilter::fmt_double(bracket).c_str());
        } catch (const std::exception& e) {
            std::fprintf(stderr, "{\"error\":\"config\",\"message\":\"%s\"}\n",
                         e.what());
            return 2;
        }
        return 0;
    }

    if (run_cmd->parsed()) {
        msfilter::ExperimentConfig cfg;
        if (int rc = load_with_overrides(run_flags, cfg)) return rc;
        return msfilter::run_experiment(cfg);
    }

    if (gen_cmd->parsed()) {
        msfilter::ExperimentConfig cfg;
        if (int rc = load_with_overrides(gen_flags, cfg)) return rc;
        try {
            const msfilter::BenchmarkModel bm = cfg.build_model();
            for (std::uint64_t seed : cfg.seeds)
                msfilter::load_or_generate_data(cfg, bm, seed);
        } catch (const msfilter::BlowUpError& e) {
            std::fprintf(stderr, "{\"error\":\"blow_up\",\"message\":\"%s\"}\n",
                         e.what());
            return 3;
        }
        return 0;
    }

    if (compare_cmd->parsed()) {
        msfilter::ExperimentConfig cfg;
        if (int rc = load_with_overrides(compare_flags, cfg)) return rc;
        try {
            const auto table = msfilter::compare_kernels(cfg);
            std::printf(
                "kernel,N_equal,median_error_equal_N,cost_equal_N,"
                "N_budget,median_error_equal_cost,cost_budget\n");
            for (const auto& row : table) {
                std::printf("%s,%zu,%s,%lld,%zu,%s,%lld\n", row.kernel.c_str(),
                            row.n_equal,
                            msfilter::fmt_double(row.median_error_equal_n).c_str(),
                            static_cast<long long>(row.cost_equal_n), row.n_budget,
                            msfilter::fmt_double(row.median_error_equal_cost).c_str(),
                            static_cast<long long>(row.cost_budget));
            }
        } catch (const msfilter::ConfigError& e) {
            std::fprintf(stderr, "{\"error\":\"config\",\"message\":\"%s\"}\n",
                         e.what());
            return 2;
        } catch (const msfilter::BlowUpError& e) {
            std::fprintf(stderr, "{\"error\":\"blow_up\",\"message\":\"%s\"}\n",
                         e.what());
            return 3;
        } catch (const msfilter::DegenerateWeightsError& e) {
            std::fprintf(stderr,
                         "{\"error\":\"degenerate_weights\",\"message\":\"%s\"}\n",
                         e.what());
            return 4;
        }
        return 0;
    }

    return 1;
}
