#include "chebmps/runner.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

using namespace chebmps;

namespace {

struct Overrides {
    std::string backend;
    long long dmax = 0;
    long long seed = -1;
    int workers = 0;
    double alpha = 0.0;
};

void apply(const Overrides& o, ExperimentConfig& cfg) {
    if (o.backend == "mps")
        cfg.backend = Backend::mps;
    else if (o.backend == "exact")
        cfg.backend = Backend::exact;
    else if (!o.backend.empty())
        throw ConfigError("--backend must be mps or exact");
    if (o.dmax > 0)
        cfg.d_max = o.dmax;
    if (o.seed >= 0)
        cfg.seed = static_cast<std::uint64_t>(o.seed);
    if (o.workers > 0)
        cfg.workers = o.workers;
    if (o.alpha > 0.0)
        cfg.alpha = o.alpha;
    if (const char* root = std::getenv("CHEBMPS_OUTPUT_ROOT"); root && *root && cfg.output.is_relative())
        cfg.output = std::filesystem::path(root) / cfg.output;
}

void add_overrides(CLI::App* app, Overrides& o) {
    app->add_option("--backend", o.backend, "mps or exact")->check(CLI::IsMember({"mps", "exact"}));
    app->add_option("--dmax", o.dmax, "bond dimension cap")->check(CLI::PositiveNumber);
    app->add_option("--seed", o.seed, "random seed")->check(CLI::NonNegativeNumber);
    app->add_option("--workers", o.workers, "parallel runs")->check(CLI::PositiveNumber);
    app->add_option("--alpha-override", o.alpha, "fixed spectral scale factor")->check(CLI::PositiveNumber);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Chebyshev-filtered matrix product states"};
    app.require_subcommand(1);

    Overrides run_o, val_o;
    std::string run_cfg, val_cfg, dir;
    bool dry_run = false;

    auto* run_cmd = app.add_subcommand("run", "execute an experiment config");
    run_cmd->add_option("config", run_cfg, "config file")->required()->check(CLI::ExistingFile);
    run_cmd->add_flag("--dry-run", dry_run, "validate and write the manifest only");
    add_overrides(run_cmd, run_o);

    auto* analyze_cmd = app.add_subcommand("analyze", "rebuild summary.json of an output directory");
    analyze_cmd->add_option("dir", dir, "output directory")->required()->check(CLI::ExistingDirectory);

    auto* validate_cmd = app.add_subcommand("validate", "check a config and print the resolved schedule");
    validate_cmd->add_option("config", val_cfg, "config file")->required()->check(CLI::ExistingFile);
    add_overrides(validate_cmd, val_o);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run_cmd) {
            ExperimentConfig cfg = load_config(run_cfg);
            apply(run_o, cfg);
            const RunSummary s = run(cfg, {dry_run});
            int failed = 0;
            for (const auto& r : s.runs) {
                if (dry_run)
                    std::cout << "planned N=" << r.N << " M=" << r.M << '\n';
                else if (r.ok)
                    std::cout << "N=" << r.N << " M=" << r.M << " variance=" << r.final_row.variance
                              << " S_half=" << r.final_row.s_half << " D=" << r.final_row.max_bond << '\n';
                else {
                    ++failed;
                    std::cout << "N=" << r.N << " M=" << r.M << " failed: " << r.error << '\n';
                }
            }
            std::cout << "output " << s.dir.string() << (failed ? " (" + std::to_string(failed) + " failed)" : "")
                      << '\n';
        } else if (*analyze_cmd) {
            std::cout << analyze(dir);
        } else if (*validate_cmd) {
            ExperimentConfig cfg = load_config(val_cfg);
            apply(val_o, cfg);
            validate(cfg);
            for (int N : cfg.N) {
                std::cout << "N=" << N << " M=";
                const auto Ms = resolve_schedule(cfg, N);
                for (std::size_t i = 0; i < Ms.size(); ++i)
                    std::cout << (i ? "," : "") << Ms[i];
                std::cout << '\n';
            }
            std::cout << "config ok\n";
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
