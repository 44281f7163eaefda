#pragma once

// Config-driven experiments: initial states, order schedules, filter runs and
// the files they leave behind.

#include "chebmps/analysis.hpp"
#include "chebmps/filter.hpp"
#include "chebmps/hamiltonian.hpp"
#include "chebmps/mps.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace chebmps {

struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

enum class Backend { mps, exact };

/// Flat key = value configuration; see README for the keys.
struct ExperimentConfig {
    std::string model = "ising";
    std::map<std::string, double> params;
    std::vector<int> N;
    std::string schedule = "2*N";
    Index d_max = 64;
    double E0 = 0.0;
    std::string initial_state = "Y+";
    Backend backend = Backend::mps;
    std::filesystem::path output = "out";
    std::uint64_t seed = 0;
    /// "e" or "2", used by N*log(N)
    std::string log_base = "e";
    int record_every = 0;
    std::optional<double> alpha;
    int workers = 1;
    double weight_tol = 0.0;
    bool timing = false;
    int variational_sweeps = 0;
    int block_max = kBlockColumns;
    int L_c = 4;
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Canonical key = value form; parse_config(format_config(c)) reproduces c.
std::string format_config(const ExperimentConfig& cfg);
/// Throws ConfigError on the first problem.
void validate(const ExperimentConfig& cfg);

/// Orders for one chain length, rounded to the nearest integer. Accepts
/// "c*sqrt(N)", "c*N", "c*N*log(N)", "c*N^2" (c optional) or an explicit
/// comma-separated list.
std::vector<int> resolve_schedule(const std::string& schedule, int N, const std::string& log_base = "e");
std::vector<int> resolve_schedule(const ExperimentConfig& cfg, int N);

Model build_model(const ExperimentConfig& cfg, int N);

/// Product states as site vectors.
std::vector<CVector> y_plus_sites(int N);
/// 0011 repeated from the left; for N = 2 mod 4 the last pair is 00.
std::vector<CVector> z_st2_sites(int N);
/// Left half at energy density +e, right half near -e, total energy zero.
std::vector<CVector> step_sites(const Model& m, double e);
/// Product of two-site blocks with <H> = E0.
std::vector<CVector> energy_target_sites(const Model& m, double E0, std::uint64_t seed = 0);

/// "Y+", "Z_st2", "step", "step(e)", "energy_target" or "energy_target(E)"
/// (plain energy_target uses cfg.E0).
std::vector<CVector> build_initial_sites(const std::string& spec, const Model& m, double E0, std::uint64_t seed = 0);
Mps build_initial_state(const std::string& spec, const Model& m, double E0, std::uint64_t seed = 0);

struct RunRecord {
    int N = 0;
    int M = 0;
    bool ok = true;
    std::string error;
    std::filesystem::path dir;
    TraceRow final_row;
    double discarded = 0.0;
    double trace_distance = 0.0;
    std::optional<double> variational_variance;
};

struct RunSummary {
    std::filesystem::path dir;
    std::vector<RunRecord> runs;
};

struct RunOptions {
    bool dry_run = false;
};

/// Executes every (N, M) pair and writes per-run directories, manifest.json
/// and summary.json under cfg.output.
RunSummary run(const ExperimentConfig& cfg, const RunOptions& opts = {});

/// Rebuilds summary.json of an output directory from its trace files and
/// returns its text.
std::string analyze(const std::filesystem::path& dir);

} // namespace chebmps
