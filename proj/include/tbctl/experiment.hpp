#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tbctl/closed_loop.hpp"
#include "tbctl/error.hpp"

namespace tbctl {

/// Zero-order-hold discretization: exp([[A, B], [0, 0]] dt) = [[Ad, Bd], [0, I]].
struct Discretized {
  Matrix A;
  Matrix B;
};
Discretized discretize_zoh(const Matrix& A, const Matrix& B, double dt);

/// Parsed experiment description. All fields are validated on load; the
/// first offending field is reported as a ConfigError naming its key.
struct ExperimentConfig {
  std::filesystem::path source;
  std::string label;
  Matrix A;
  Matrix B;
  std::optional<Box> state_bounds;
  std::optional<Box> input_bounds;
  CostWeights weights;
  int b = 0, c = 0, g = 0, r = 1;
  int N = 0;
  SetupVariant variant = SetupVariant::BucketOnly;
  OverallState initial;
  int duration = 0;
  std::vector<SetPointChange> changes;
  double terminal_tol = kTerminalTol;
  int certification_samples = 1000;
  double tail_fraction = 0.25;
  std::filesystem::path out_dir = "out";
  std::uint64_t seed = 0;

  TokenBucketSpec spec() const { return {b, c, g, r}; }
  PlantModel plant() const { return {A, B, state_bounds, input_bounds}; }
  int M() const { return spec().M(); }
};

ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = ".");

/// Synthesizes the terminal ingredients and assembles the rollout problem.
RolloutProblem build_problem(const ExperimentConfig& cfg);
Scenario build_scenario(const ExperimentConfig& cfg);

// --- traces as CSV --------------------------------------------------------

/// Header: k, x_p[0..n), u_s[0..m), beta, gamma, delta, u_applied[0..m),
/// stage_cost, cum_cost, V_star, V_bar_star, beta_pred_terminal.
void write_trace_csv(std::ostream& os, const Trace& trace);
/// Reads a trace written by write_trace_csv (references are not stored and
/// come back as zero). Throws ConfigError on malformed input.
Trace read_trace_csv(std::istream& is);
/// Row-level invariants of a reloaded trace: valid levels, at most one
/// channel per step, delta on the periodic pattern, u_applied consistent
/// with the held input, cumulative cost the prefix sum of the stage cost.
bool trace_rows_valid(const Trace& trace, const TokenBucketSpec& spec, SetupVariant variant);

std::string format_double(double v);

// --- commands -------------------------------------------------------------

struct CommandResult {
  int exit_code = 0;
  std::string report;
  std::vector<std::filesystem::path> files;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitInfeasible = 3;
inline constexpr int kExitCertification = 4;

CommandResult cmd_check_spec(const ExperimentConfig& cfg);

struct SimulationOutput {
  Trace trace;
  SectorReport sector;
  TrafficReport traffic;
  DecreaseReport decrease;
};

SimulationOutput simulate(const ExperimentConfig& cfg);
CommandResult cmd_simulate(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                           bool emit_plot);
CommandResult cmd_compare(const std::vector<ExperimentConfig>& cfgs,
                          const std::filesystem::path& out_dir, bool emit_plot);
CommandResult cmd_verify_terminal(const ExperimentConfig& cfg);

/// Maps an error to the documented exit code.
int exit_code_for(ErrorCode code);

}  // namespace tbctl
