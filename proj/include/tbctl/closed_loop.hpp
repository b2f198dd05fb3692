#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tbctl/rollout_optimizer.hpp"

namespace tbctl {

/// New regulation target from `step` on. The input reference is solved from
/// (I - A) x_ref = B u_ref when absent; the pair must be an equilibrium.
struct SetPointChange {
  std::int64_t step = 0;
  Vector x_ref;
  std::optional<Vector> u_ref;
};

struct Scenario {
  OverallState initial;  // absolute coordinates
  int duration = 0;      // number of applied steps
  std::vector<SetPointChange> changes;
};

struct TraceRecord {
  std::int64_t k = 0;
  int segment = 0;  // number of set-point changes applied so far
  Vector x_ref;
  Vector u_ref;
  OverallState x;          // absolute coordinates
  ControlInput u_applied;  // absolute coordinates; u_c is zero without a transmission
  double stage_cost = 0.0;  // measured relative to the current reference
  double cumulative_cost = 0.0;
  std::optional<double> V_star;
  std::optional<double> V_bar_star;
  std::optional<int> beta_pred_terminal;

  bool solve_instant() const { return V_star.has_value(); }
};

using Trace = std::vector<TraceRecord>;

using RolloutSolver = std::function<RolloutSolution(const RolloutProblem&, const OverallState&)>;

struct ClosedLoopOptions {
  /// Produces the applied inputs; defaults to solve_rollout. The logged
  /// optimal values always come from solve_rollout.
  RolloutSolver applied_solver;
  bool log_rotated = true;
};

/// Resolves u_ref (least squares when absent) and checks the equilibrium.
Vector equilibrium_input(const PlantModel& plant, const Vector& x_ref,
                         const std::optional<Vector>& u_ref);

/// Receding-horizon loop: solves at k = jM, applies M inputs through
/// overall_step, re-solves. A set-point change translates the plant
/// coordinates; the bucket is untouched. Throws InitialInfeasible when the
/// first problem has no solution and InternalFeasibilityLoss on a later one.
Trace run_closed_loop(const RolloutProblem& problem, const Scenario& scenario,
                      const ClosedLoopOptions& options = {});

/// Replays the logged inputs from the first logged state and compares the
/// states bit for bit.
bool replay_consistent(const RolloutProblem& problem, const Trace& trace);

struct SectorReport {
  int lower_all = 0;    // max{0, b - N g}
  int lower_solve = 0;  // max{0, b - (N - M) g}
  int upper = 0;
  std::int64_t tail_start = 0;
  int min_beta_all = 0;
  int min_beta_solve = 0;
  bool all_in_sector = true;
  bool solve_in_sector = true;

  bool passed() const { return all_in_sector && solve_in_sector; }
};

SectorReport convergence_sector_check(const Trace& trace, const TokenBucketSpec& spec, int N, int M,
                                      double tail_fraction);

struct DecreaseReport {
  int pairs_checked = 0;
  int violations = 0;
  double worst_slack = 0.0;  // min over pairs of (bound + tolerance - lhs)
  std::int64_t worst_k = -1;

  bool passed() const { return violations == 0; }
};

/// Checks V_bar(x((j+1)M)) <= V_bar(x(jM)) - L(x(jM), u(jM)) - alpha(beta_pred)
/// with a tolerance 1e-7 (1 + |V_bar|) at each consecutive pair of solve
/// instants inside one set-point segment.
DecreaseReport decrease_monitor(const Trace& trace, const CostWeights& weights,
                                const TokenBucketSpec& spec, SetupVariant variant);

struct TrafficReport {
  bool levels_valid = true;
  bool cumulative_valid = true;
  std::int64_t first_violation_k = -1;
  int transmissions = 0;
  int steps = 0;
  double achieved_rate = 0.0;
  double rate_bound = 0.0;

  bool passed() const { return levels_valid && cumulative_valid; }
};

/// Checks 0 <= beta(k) <= b and c * #{i < k : gamma(i) = 1} <= beta(0) + k g.
TrafficReport traffic_audit(const Trace& trace, const TokenBucketSpec& spec);

struct LabeledTrace {
  std::string label;
  const Trace* trace = nullptr;
};

struct CostComparison {
  std::vector<std::string> labels;
  std::vector<std::int64_t> steps;
  std::vector<std::vector<double>> cumulative;  // [trace][step]
  std::vector<std::int64_t> change_steps;       // first step of every segment after the first
  /// Label with the lowest cumulative cost at the end of each segment.
  std::vector<std::string> segment_leader;

  /// cumulative[a] - cumulative[b] at every step.
  std::vector<double> difference(std::size_t a, std::size_t b) const;
};

/// Throws LengthMismatch unless the traces cover the same steps.
CostComparison cumulative_cost_compare(const std::vector<LabeledTrace>& traces);

struct StabilityPreconditions {
  bool horizon_multiple = false;  // N = J M
  bool inputs_compact = false;
  bool refill_at_least_two = false;
  bool origin_interior = false;

  bool all() const {
    return horizon_multiple && inputs_compact && refill_at_least_two && origin_interior;
  }
};

StabilityPreconditions stability_preconditions(const RolloutProblem& problem);

struct LadderRung {
  double deflection = 0.0;
  double peak_deviation = 0.0;
};

struct LadderReport {
  std::vector<LadderRung> rungs;
  bool monotone = false;
  double max_gain = 0.0;  // max over rungs of peak / deflection

  bool passed() const { return monotone; }
};

/// Closed-loop runs from (eps * direction, 0, b) for each eps; the peak of
/// |x_p| should grow with eps.
LadderReport perturbation_ladder(const RolloutProblem& problem, const Vector& direction,
                                 const std::vector<double>& deflections, int duration);

}  // namespace tbctl
