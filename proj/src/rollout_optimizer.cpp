#include "tbctl/rollout_optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tbctl/error.hpp"

namespace tbctl {

namespace {

constexpr double kTieTol = 1e-12;

// Affine expression v = G z + h in the stacked decision vector z.
struct Affine {
  Matrix G;
  Vector h;
};

void accumulate(Matrix& H, Vector& grad, const Affine& e, const Matrix& W) {
  const Matrix GtW = e.G.transpose() * W;
  H.noalias() += GtW * e.G;
  grad.noalias() += GtW * e.h;
}

bool lex_less(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

}  // namespace

int Schedule::transmissions() const {
  int n = 0;
  for (std::size_t i = 0; i < gamma.size(); ++i) n += (gamma[i] || delta[i]) ? 1 : 0;
  return n;
}

int Schedule::bucket_transmissions() const {
  return static_cast<int>(std::count(gamma.begin(), gamma.end(), std::uint8_t{1}));
}

void RolloutProblem::validate() const {
  const int q = spec.q();
  require(M >= q && M % q == 0, ErrorCode::PreconditionViolated, "M must be a positive multiple of q");
  require(N >= M, ErrorCode::PreconditionViolated, "horizon N must be at least M");
  require(absolute_time >= 0, ErrorCode::PreconditionViolated, "absolute time must be nonnegative");
  if (variant == SetupVariant::DirectLink) {
    require(q >= 2, ErrorCode::PreconditionViolated, "direct-link setup needs q >= 2");
    require(N % q == 0 && absolute_time % q == 0, ErrorCode::PreconditionViolated,
            "direct-link setup needs N and the solve instant on the periodic pattern");
  }
  weights.validate(variant, plant.state_dim(), plant.input_dim());
  require(ingredients.q == q, ErrorCode::PreconditionViolated,
          "terminal ingredients were synthesized for a different q");
  require(ingredients.P.rows() == plant.state_dim() && ingredients.P.cols() == plant.state_dim() &&
              ingredients.K.rows() == plant.input_dim() &&
              ingredients.K.cols() == plant.state_dim(),
          ErrorCode::DimensionMismatch, "terminal ingredients do not match the plant");
}

std::vector<std::uint8_t> RolloutProblem::delta_pattern() const {
  std::vector<std::uint8_t> delta(static_cast<std::size_t>(N), 0);
  if (variant == SetupVariant::DirectLink) {
    for (int i = 0; i < N; ++i) delta[i] = periodic_delta(spec, absolute_time + i) ? 1 : 0;
  }
  return delta;
}

int bucket_level_after(const TokenBucketSpec& spec, SetupVariant variant, int beta, bool gamma,
                       bool delta) {
  if (gamma && delta) return -1;
  const int refill = (variant == SetupVariant::DirectLink && delta) ? 0 : spec.g();
  const int raw = beta + refill - (gamma ? spec.c() : 0);
  return raw < 0 ? -1 : std::min(raw, spec.b());
}

void for_each_feasible_schedule(const RolloutProblem& problem, const OverallState& x0,
                                const std::function<bool(const Schedule&)>& visit) {
  if (!problem.spec.valid_level(x0.beta)) return;
  const int N = problem.N;
  Schedule s;
  s.delta = problem.delta_pattern();
  s.gamma.assign(static_cast<std::size_t>(N), 0);
  std::vector<int> level(static_cast<std::size_t>(N) + 1);
  level[0] = x0.beta;

  bool keep_going = true;
  std::function<void(int)> dfs = [&](int i) {
    if (!keep_going) return;
    if (i == N) {
      keep_going = visit(s);
      return;
    }
    for (std::uint8_t bit : {std::uint8_t{0}, std::uint8_t{1}}) {
      if (bit && s.delta[i]) continue;
      const int next = bucket_level_after(problem.spec, problem.variant, level[i], bit, s.delta[i]);
      if (next < 0) continue;
      s.gamma[i] = bit;
      level[i + 1] = next;
      dfs(i + 1);
      if (!keep_going) return;
    }
    s.gamma[i] = 0;
  };
  dfs(0);
}

std::vector<Schedule> enumerate_feasible_schedules(const RolloutProblem& problem,
                                                   const OverallState& x0) {
  std::vector<Schedule> out;
  for_each_feasible_schedule(problem, x0, [&](const Schedule& s) {
    out.push_back(s);
    return true;
  });
  return out;
}

double trajectory_cost(const RolloutProblem& problem, const std::vector<OverallState>& states,
                       const std::vector<ControlInput>& controls) {
  require(states.size() == controls.size() + 1, ErrorCode::LengthMismatch,
          "trajectory needs one more state than inputs");
  const CostWeights& w = problem.weights;
  double cost = 0.0;
  for (std::size_t i = 0; i < controls.size(); ++i) {
    cost += problem.mode == CostMode::Rotated
                ? rotated_stage_cost_unchecked(w, problem.variant, problem.spec, states[i], controls[i])
                : stage_cost(w, problem.variant, problem.spec, states[i], controls[i]);
  }
  cost += problem.mode == CostMode::Rotated
              ? rotated_terminal_cost(w, problem.ingredients, problem.spec, states.back())
              : terminal_cost(w, problem.ingredients, problem.spec, states.back());
  return cost;
}

std::optional<RolloutSolution> solve_fixed_schedule(const RolloutProblem& problem,
                                                    const OverallState& x0,
                                                    const Schedule& schedule) {
  const int N = problem.N;
  require(static_cast<int>(schedule.gamma.size()) == N &&
              static_cast<int>(schedule.delta.size()) == N,
          ErrorCode::LengthMismatch, "schedule length differs from the horizon");
  const PlantModel& plant = problem.plant;
  const CostWeights& w = problem.weights;
  const int n = plant.state_dim();
  const int m = plant.input_dim();
  const int T = schedule.transmissions();
  const int dim = T * m;
  const bool rotated = problem.mode == CostMode::Rotated;
  const Matrix W_u = rotated ? Matrix(w.R - w.S) : w.R;

  // Condense the trajectory into affine maps of the stacked u_c values.
  Affine x{Matrix::Zero(n, dim), x0.x_p};
  Affine us{Matrix::Zero(m, dim), x0.u_s};
  Matrix H = Matrix::Zero(dim, dim);
  Vector grad = Vector::Zero(dim);
  int t = 0;
  for (int i = 0; i < N; ++i) {
    Affine up;
    if (schedule.gamma[i] || schedule.delta[i]) {
      up.G = Matrix::Zero(m, dim);
      up.G.block(0, t * m, m, m).setIdentity();
      up.h = Vector::Zero(m);
      ++t;
    } else {
      up = us;
    }
    if (dim > 0) {
      accumulate(H, grad, x, w.Q);
      accumulate(H, grad, up, W_u);
      if (rotated) accumulate(H, grad, us, w.S);
    }
    x.G = plant.A() * x.G + plant.B() * up.G;
    x.h = plant.A() * x.h + plant.B() * up.h;
    us = std::move(up);
  }
  if (dim > 0) {
    accumulate(H, grad, x, problem.ingredients.P);
    if (rotated) accumulate(H, grad, us, w.S);
  }

  Vector z = Vector::Zero(dim);
  if (dim > 0) {
    H = symmetrize(H);
    const Eigen::LDLT<Matrix> ldlt(H);
    if (ldlt.info() != Eigen::Success || !(ldlt.rcond() * 1e12 >= 1.0)) {
      fail(ErrorCode::IllConditioned, "normal equations of the fixed-schedule problem are singular");
    }
    z = -ldlt.solve(grad);
  }

  RolloutSolution sol;
  sol.schedule = schedule;
  sol.transmissions_used = T;
  sol.predicted_states.reserve(static_cast<std::size_t>(N) + 1);
  sol.predicted_states.push_back(x0);
  t = 0;
  try {
    for (int i = 0; i < N; ++i) {
      ControlInput u;
      u.gamma = schedule.gamma[i];
      u.delta = schedule.delta[i];
      if (u.transmits()) {
        u.u_c = z.segment(t * m, m);
        sol.inputs.push_back(u.u_c);
        ++t;
      } else {
        u.u_c = Vector::Zero(m);
      }
      sol.predicted_states.push_back(overall_step(plant, problem.spec, problem.variant,
                                                  sol.predicted_states.back(), u,
                                                  problem.absolute_time + i));
      sol.controls.push_back(std::move(u));
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ConstraintViolated) return std::nullopt;
    throw;
  }
  if (!terminal_region_contains(problem.variant, problem.spec, plant, problem.ingredients.region,
                                sol.predicted_states.back(), problem.terminal_tol)) {
    return std::nullopt;
  }
  sol.cost = trajectory_cost(problem, sol.predicted_states, sol.controls);
  return sol;
}

bool preferred(const RolloutSolution& a, const RolloutSolution& b) {
  const double scale = std::max(std::abs(a.cost), std::abs(b.cost));
  if (std::abs(a.cost - b.cost) > kTieTol * scale) return a.cost < b.cost;
  if (a.transmissions_used != b.transmissions_used) return a.transmissions_used < b.transmissions_used;
  return lex_less(a.schedule.gamma, b.schedule.gamma);
}

RolloutSolution solve_rollout(const RolloutProblem& problem, const OverallState& x0) {
  problem.validate();
  std::optional<RolloutSolution> best;
  long examined = 0;
  long rejected = 0;
  for_each_feasible_schedule(problem, x0, [&](const Schedule& s) {
    ++examined;
    auto cand = solve_fixed_schedule(problem, x0, s);
    if (!cand) {
      ++rejected;
    } else if (!best || preferred(*cand, *best)) {
      best = std::move(cand);
    }
    return true;
  });
  if (!best) {
    std::ostringstream os;
    os << "no schedule reaches the terminal region from beta=" << x0.beta << " (" << examined
       << " bucket-feasible schedules, " << rejected << " rejected)";
    fail(ErrorCode::Infeasible, os.str());
  }
  best->schedules_examined = examined;
  best->rejected_by_constraints = rejected;
  return std::move(*best);
}

RolloutSolution shifted_candidate(const RolloutProblem& problem, const RolloutSolution& previous) {
  const int N = problem.N;
  const int M = problem.M;
  const int q = problem.spec.q();
  require(static_cast<int>(previous.controls.size()) == N &&
              static_cast<int>(previous.predicted_states.size()) == N + 1,
          ErrorCode::LengthMismatch, "previous solution does not match the horizon");

  RolloutProblem next = problem;
  next.absolute_time = problem.absolute_time + M;

  RolloutSolution cand;
  cand.predicted_states.assign(previous.predicted_states.begin() + M, previous.predicted_states.end());
  cand.controls.assign(previous.controls.begin() + M, previous.controls.end());
  try {
    for (int i = 0; i < M; ++i) {
      const OverallState& cur = cand.predicted_states.back();
      const int phase = i % q;
      if (phase == 0 && !terminal_region_contains(problem.variant, problem.spec, problem.plant,
                                                  problem.ingredients.region, cur,
                                                  problem.terminal_tol)) {
        fail(ErrorCode::NotInTerminalRegion, "terminal tail left the terminal region");
      }
      ControlInput u = terminal_policy_input(problem.variant, problem.spec, problem.plant,
                                             problem.ingredients, cur, phase);
      cand.predicted_states.push_back(overall_step(problem.plant, problem.spec, problem.variant, cur,
                                                   u, problem.absolute_time + N + i));
      cand.controls.push_back(std::move(u));
    }
  } catch (const Error& e) {
    fail(ErrorCode::InternalFeasibilityLoss,
         std::string("shift-and-append candidate failed: ") + e.what());
  }
  if (!terminal_region_contains(problem.variant, problem.spec, problem.plant,
                                problem.ingredients.region, cand.predicted_states.back(),
                                problem.terminal_tol)) {
    fail(ErrorCode::InternalFeasibilityLoss, "shift-and-append candidate ends outside X_f");
  }

  cand.schedule.gamma.reserve(N);
  cand.schedule.delta.reserve(N);
  for (const ControlInput& u : cand.controls) {
    cand.schedule.gamma.push_back(u.gamma);
    cand.schedule.delta.push_back(u.delta);
    if (u.transmits()) cand.inputs.push_back(u.u_c);
  }
  cand.transmissions_used = cand.schedule.transmissions();
  cand.cost = trajectory_cost(next, cand.predicted_states, cand.controls);
  return cand;
}

}  // namespace tbctl
