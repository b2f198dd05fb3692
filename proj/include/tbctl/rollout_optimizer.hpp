#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "tbctl/cost_model.hpp"
#include "tbctl/ncs_model.hpp"

namespace tbctl {

/// Transmission pattern over the horizon. delta is fixed by the direct-link
/// pattern (all zero in the bucket-only setup); gamma is the decision.
struct Schedule {
  std::vector<std::uint8_t> gamma;
  std::vector<std::uint8_t> delta;

  int transmissions() const;  // instants with gamma or delta set
  int bucket_transmissions() const;
  friend bool operator==(const Schedule&, const Schedule&) = default;
};

enum class CostMode {
  Nominal,  // stage cost l and terminal cost V_f
  Rotated,  // rotated stage cost L and V_f + storage
};

struct RolloutProblem {
  PlantModel plant;
  TokenBucketSpec spec;
  SetupVariant variant = SetupVariant::BucketOnly;
  CostWeights weights;
  TerminalIngredients ingredients;
  int N = 1;
  int M = 1;
  std::int64_t absolute_time = 0;  // time of the measured state, sets the delta phase
  CostMode mode = CostMode::Nominal;
  double terminal_tol = kTerminalTol;

  /// Throws PreconditionViolated / InvalidArgument on inconsistent data.
  void validate() const;
  /// Direct-link flags over the horizon (all false in the bucket-only setup).
  std::vector<std::uint8_t> delta_pattern() const;
};

struct RolloutSolution {
  Schedule schedule;
  std::vector<Vector> inputs;                 // u_c at the transmission instants
  std::vector<ControlInput> controls;         // N inputs, ready for overall_step
  std::vector<OverallState> predicted_states;  // N + 1 states
  double cost = 0.0;
  int transmissions_used = 0;
  // Search bookkeeping.
  long schedules_examined = 0;
  long rejected_by_constraints = 0;  // unconstrained minimizer left X_p, U_p or X_f
};

/// Bucket level after one step, or -1 if the step would drain the bucket.
int bucket_level_after(const TokenBucketSpec& spec, SetupVariant variant, int beta, bool gamma,
                       bool delta);

/// Depth-first enumeration of bucket-feasible schedules in lexicographic
/// order of gamma (gamma(0) most significant, 0 before 1). A prefix that
/// drains the bucket is never extended. Return false from `visit` to stop.
void for_each_feasible_schedule(const RolloutProblem& problem, const OverallState& x0,
                                const std::function<bool(const Schedule&)>& visit);

std::vector<Schedule> enumerate_feasible_schedules(const RolloutProblem& problem,
                                                   const OverallState& x0);

/// Unconstrained minimizer of the quadratic cost for a fixed schedule.
/// Returns nullopt when that minimizer violates a box constraint or misses
/// the terminal region.
std::optional<RolloutSolution> solve_fixed_schedule(const RolloutProblem& problem,
                                                    const OverallState& x0,
                                                    const Schedule& schedule);

/// True when candidate `a` is preferred over `b`: lower cost (relative tie
/// tolerance 1e-12), then fewer transmissions, then lexicographically
/// smaller gamma.
bool preferred(const RolloutSolution& a, const RolloutSolution& b);

/// Optimal solution over all feasible schedules. Throws Infeasible.
RolloutSolution solve_rollout(const RolloutProblem& problem, const OverallState& x0);

/// Cost of a trajectory under the problem's cost mode.
double trajectory_cost(const RolloutProblem& problem, const std::vector<OverallState>& states,
                       const std::vector<ControlInput>& controls);

/// Shift-and-append candidate for the problem measured M steps later: drops
/// the first M steps of `previous` and appends M steps of the terminal
/// control sequence. Throws InternalFeasibilityLoss if the tail fails.
RolloutSolution shifted_candidate(const RolloutProblem& problem, const RolloutSolution& previous);

}  // namespace tbctl
