#include <cmath>

#include "support.hpp"

using namespace tbctl;
using namespace testing_support;

namespace {

// --- independent fixed-schedule oracle ------------------------------------
//
// The cost of a fixed schedule is an exact quadratic in the stacked u_c
// values. Its Hessian and gradient are recovered from plain cost
// evaluations (simulation through overall_step, costs from cost_model) and
// the minimizer is obtained with a full-pivot LU.

struct OracleResult {
  bool admissible = false;
  double cost = 0.0;
  Vector z;
};

double simulated_cost(const RolloutProblem& p, const PlantModel& plant, const OverallState& x0,
                      const Schedule& s, const Vector& z, OverallState* terminal = nullptr,
                      bool* constraints_ok = nullptr) {
  const int m = plant.input_dim();
  OverallState x = x0;
  double cost = 0.0;
  int t = 0;
  bool ok = true;
  for (int i = 0; i < p.N; ++i) {
    ControlInput u{Vector::Zero(m), s.gamma[i] != 0, s.delta[i] != 0};
    if (u.transmits()) u.u_c = z.segment(m * t++, m);
    const Vector u_p = u.transmits() ? u.u_c : x.u_s;
    if (!p.plant.input_admissible(u_p)) ok = false;
    if (p.mode == CostMode::Rotated) {
      cost += rotated_stage_cost(p.weights, p.variant, plant, p.spec, x, u, p.absolute_time + i);
    } else {
      cost += stage_cost(p.weights, p.variant, p.spec, x, u);
    }
    x = overall_step(plant, p.spec, p.variant, x, u, p.absolute_time + i);
    if (!p.plant.state_admissible(x.x_p)) ok = false;
  }
  cost += p.mode == CostMode::Rotated ? rotated_terminal_cost(p.weights, p.ingredients, p.spec, x)
                                      : terminal_cost(p.weights, p.ingredients, p.spec, x);
  if (terminal) *terminal = x;
  if (constraints_ok) *constraints_ok = ok;
  return cost;
}

OracleResult oracle_fixed_schedule(const RolloutProblem& p, const OverallState& x0, const Schedule& s) {
  const PlantModel free_plant(p.plant.A(), p.plant.B());
  const int dim = s.transmissions() * p.plant.input_dim();
  auto J = [&](const Vector& z) { return simulated_cost(p, free_plant, x0, s, z); };
  const Vector zero = Vector::Zero(dim);
  const double j0 = J(zero);
  Matrix H(dim, dim);
  Vector g(dim);
  std::vector<double> jp(dim), jm(dim);
  for (int i = 0; i < dim; ++i) {
    jp[i] = J(Vector::Unit(dim, i));
    jm[i] = J(-Vector::Unit(dim, i));
    g(i) = 0.5 * (jp[i] - jm[i]);
    H(i, i) = jp[i] + jm[i] - 2.0 * j0;
  }
  for (int i = 0; i < dim; ++i)
    for (int j = i + 1; j < dim; ++j)
      H(i, j) = H(j, i) = J(Vector::Unit(dim, i) + Vector::Unit(dim, j)) - jp[i] - jp[j] + j0;

  OracleResult out;
  out.z = dim > 0 ? Vector(H.fullPivLu().solve(-g)) : zero;
  OverallState terminal;
  bool ok = true;
  out.cost = simulated_cost(p, free_plant, x0, s, out.z, &terminal, &ok);
  out.admissible = ok && terminal_region_contains(p.variant, p.spec, p.plant, p.ingredients.region,
                                                  terminal, p.terminal_tol);
  return out;
}

// Bucket feasibility by stepping the bucket functions, errors mean infeasible.
bool bucket_feasible(const RolloutProblem& p, int beta, const Schedule& s) {
  try {
    for (int i = 0; i < p.N; ++i) {
      beta = p.variant == SetupVariant::DirectLink
                 ? bucket_step_direct_link(p.spec, beta, s.gamma[i], s.delta[i])
                 : bucket_step(p.spec, beta, s.gamma[i]);
    }
    return true;
  } catch (const Error&) {
    return false;
  }
}

std::vector<Schedule> all_schedules(const RolloutProblem& p) {
  std::vector<Schedule> out;
  for (long mask = 0; mask < (1L << p.N); ++mask) {
    Schedule s;
    s.delta = p.delta_pattern();
    for (int i = 0; i < p.N; ++i) s.gamma.push_back((mask >> (p.N - 1 - i)) & 1);
    out.push_back(s);
  }
  return out;
}

struct OracleChoice {
  bool feasible = false;
  Schedule schedule;
  double cost = 0.0;
};

// Minimum over all 2^N gamma sequences, filtered after the fact. Costs within
// `tie` (relative) are treated as equal and resolved by the documented order.
OracleChoice exhaustive_oracle(const RolloutProblem& p, const OverallState& x0, double tie) {
  struct Entry {
    Schedule s;
    double cost;
  };
  std::vector<Entry> ok;
  for (const Schedule& s : all_schedules(p)) {
    bool clash = false;
    for (int i = 0; i < p.N; ++i) clash = clash || (s.gamma[i] && s.delta[i]);
    if (clash || !bucket_feasible(p, x0.beta, s)) continue;
    const OracleResult r = oracle_fixed_schedule(p, x0, s);
    if (r.admissible) ok.push_back({s, r.cost});
  }
  OracleChoice out;
  if (ok.empty()) return out;
  double best = ok.front().cost;
  for (const Entry& e : ok) best = std::min(best, e.cost);
  const Entry* pick = nullptr;
  for (const Entry& e : ok) {
    if (e.cost > best + tie * std::abs(best)) continue;
    if (!pick || e.s.transmissions() < pick->s.transmissions() ||
        (e.s.transmissions() == pick->s.transmissions() && e.s.gamma < pick->s.gamma)) {
      pick = &e;
    }
  }
  out.feasible = true;
  out.schedule = pick->s;
  out.cost = pick->cost;
  return out;
}

RolloutProblem scalar_desk(double sigma = 1e-6) {
  const PlantModel plant(scalar(2), scalar(1));
  const TokenBucketSpec spec(4, 3, 2);
  return {plant, spec, SetupVariant::BucketOnly,
          CostWeights::with_default_storage(scalar(1), scalar(1), sigma),
          synthesize_terminal(plant, scalar(1), scalar(1), 2), 2, 2};
}

double golden_section_min(const std::function<double(double)>& f, double lo, double hi) {
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - r * (b - a), d = a + r * (b - a);
  while (b - a > 1e-12) {
    if (f(c) < f(d)) {
      b = d;
    } else {
      a = c;
    }
    c = b - r * (b - a);
    d = a + r * (b - a);
  }
  return f(0.5 * (a + b));
}

Schedule bucket_schedule(std::vector<std::uint8_t> gamma) {
  Schedule s;
  s.delta.assign(gamma.size(), 0);
  s.gamma = std::move(gamma);
  return s;
}

}  // namespace

TEST(EnumerateSchedules, Examples) {
  RolloutProblem p = di_problem(1e-6);
  p.N = 1;
  const Vector z4 = Vector::Zero(4), z2 = Vector::Zero(2);
  auto one = enumerate_feasible_schedules(p, state(z4, z2, 0));
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].gamma, std::vector<std::uint8_t>{0});

  p.N = 2;
  auto full = enumerate_feasible_schedules(p, state(z4, z2, 22));
  ASSERT_EQ(full.size(), 4u);
  EXPECT_EQ(full[0].gamma, (std::vector<std::uint8_t>{0, 0}));
  EXPECT_EQ(full[1].gamma, (std::vector<std::uint8_t>{0, 1}));
  EXPECT_EQ(full[2].gamma, (std::vector<std::uint8_t>{1, 0}));
  EXPECT_EQ(full[3].gamma, (std::vector<std::uint8_t>{1, 1}));

  auto pruned = enumerate_feasible_schedules(p, state(z4, z2, 5));
  ASSERT_EQ(pruned.size(), 3u);
  EXPECT_EQ(pruned[2].gamma, (std::vector<std::uint8_t>{1, 0}));
}

TEST(EnumerateSchedules, MatchesFilteredPowerSet) {
  std::mt19937_64 rng(43);
  for (int t = 0; t < 300; ++t) {
    const SetupVariant v = t % 2 ? SetupVariant::DirectLink : SetupVariant::BucketOnly;
    const Instance inst = random_instance(rng, v);
    std::vector<Schedule> expected;
    for (const Schedule& s : all_schedules(inst.problem)) {
      bool clash = false;
      for (int i = 0; i < inst.problem.N; ++i) clash = clash || (s.gamma[i] && s.delta[i]);
      if (!clash && bucket_feasible(inst.problem, inst.x0.beta, s)) expected.push_back(s);
    }
    ASSERT_EQ(enumerate_feasible_schedules(inst.problem, inst.x0), expected) << "instance " << t;
  }
}

TEST(EnumerateSchedules, VisitorCanStop) {
  const RolloutProblem p = di_problem(1e-6);
  int visited = 0;
  for_each_feasible_schedule(p, state(Vector::Zero(4), Vector::Zero(2), 22), [&](const Schedule&) {
    return ++visited < 3;
  });
  EXPECT_EQ(visited, 3);
}

TEST(SolveFixedSchedule, EquilibriumHasZeroCost) {
  const RolloutProblem p = di_problem(1e-6);
  const auto sol = solve_fixed_schedule(p, state(Vector::Zero(4), Vector::Zero(2), 22),
                                        bucket_schedule({0, 0, 0}));
  ASSERT_TRUE(sol);
  EXPECT_TRUE(sol->inputs.empty());
  EXPECT_EQ(sol->cost, 0.0);
}

TEST(SolveFixedSchedule, ScalarDeskInstance) {
  const RolloutProblem p = scalar_desk();
  const double P = (42.0 + std::sqrt(2160.0)) / 18.0;
  ASSERT_NEAR(p.ingredients.P(0, 0), P, 1e-9 * P);
  const OverallState x0 = state(vec({1}), vec({0}), 3);

  // gamma = (1, 0): one decision u, level 3 -> 2 -> 4 ends at the brim.
  auto f10 = [&](double u) { return 1 + u * u + (2 + u) * (2 + u) + u * u + P * (4 + 3 * u) * (4 + 3 * u); };
  const double c10 = golden_section_min(f10, -10, 10);
  const auto s10 = solve_fixed_schedule(p, x0, bucket_schedule({1, 0}));
  ASSERT_TRUE(s10);
  EXPECT_NEAR(s10->cost, c10, 1e-9 * c10);
  EXPECT_NEAR(s10->inputs[0](0), -(4 + 24 * P) / (6 + 18 * P), 1e-9);
  EXPECT_EQ(s10->predicted_states.back().beta, 4);

  // gamma = (0, 0): no decisions, level 3 -> 4 -> 4.
  const auto s00 = solve_fixed_schedule(p, x0, bucket_schedule({0, 0}));
  ASSERT_TRUE(s00);
  EXPECT_NEAR(s00->cost, 5 + 16 * P, 1e-12 * (5 + 16 * P));
  EXPECT_LT(s10->cost, s00->cost);

  // gamma = (0, 1): level 3 -> 4 -> 3.
  auto f01 = [&](double u) { return 5 + u * u + P * (4 + u) * (4 + u) + 1e-6 * (16 - 9); };
  const auto s01 = solve_fixed_schedule(p, x0, bucket_schedule({0, 1}));
  ASSERT_TRUE(s01);
  EXPECT_NEAR(s01->cost, golden_section_min(f01, -10, 10), 1e-9 * s01->cost);

  // gamma = (1, 1): level 3 -> 2 -> 1, two decisions. Oracle by nested search.
  auto f11 = [&](double u0) {
    return golden_section_min(
        [&](double u1) {
          const double x2 = 2 * (2 + u0) + u1;
          return 1 + u0 * u0 + (2 + u0) * (2 + u0) + u1 * u1 + P * x2 * x2 + 1e-6 * (16 - 1);
        },
        -10, 10);
  };
  const auto s11 = solve_fixed_schedule(p, x0, bucket_schedule({1, 1}));
  ASSERT_TRUE(s11);
  EXPECT_NEAR(s11->cost, golden_section_min(f11, -10, 10), 1e-8 * s11->cost);

  // Two transmissions win overall on this instance.
  const RolloutSolution best = solve_rollout(p, x0);
  const double costs[] = {s00->cost, s01->cost, s10->cost, s11->cost};
  EXPECT_EQ(best.cost, *std::min_element(std::begin(costs), std::end(costs)));
  EXPECT_EQ(best.schedule.gamma, (std::vector<std::uint8_t>{1, 1}));
}

TEST(SolveFixedSchedule, LowerBranchMissIsAbsent) {
  const RolloutProblem p = di_problem(1e-6);
  // Level 3 -> 6 -> 1 -> 4 ends below c - g with the plant away from zero.
  EXPECT_FALSE(solve_fixed_schedule(p, state(vec({1, 0, 1, 0}), Vector::Zero(2), 3),
                                    bucket_schedule({0, 1, 0})));
  EXPECT_ERROR_CODE(solve_fixed_schedule(p, state(vec({1, 0, 1, 0}), Vector::Zero(2), 3),
                                         bucket_schedule({0, 1})),
                    ErrorCode::LengthMismatch);
}

TEST(SolveFixedSchedule, MatchesIndependentQuadraticOracle) {
  std::mt19937_64 rng(47);
  int compared = 0;
  for (int t = 0; t < 200; ++t) {
    const SetupVariant v = t % 2 ? SetupVariant::DirectLink : SetupVariant::BucketOnly;
    const Instance inst = random_instance(rng, v);
    for (const Schedule& s : enumerate_feasible_schedules(inst.problem, inst.x0)) {
      const auto sol = solve_fixed_schedule(inst.problem, inst.x0, s);
      const OracleResult o = oracle_fixed_schedule(inst.problem, inst.x0, s);
      ASSERT_EQ(sol.has_value(), o.admissible) << "instance " << t;
      if (!sol) continue;
      ASSERT_NEAR(sol->cost, o.cost, 1e-8 * (1.0 + std::abs(o.cost))) << "instance " << t;
      ASSERT_EQ(static_cast<int>(sol->inputs.size()), s.transmissions());
      ++compared;
    }
  }
  EXPECT_GT(compared, 1000);
}

TEST(SolveRollout, MatchesExhaustiveOracle) {
  std::mt19937_64 rng(53);
  int feasible = 0;
  for (int t = 0; t < 200; ++t) {
    const SetupVariant v = t % 2 ? SetupVariant::DirectLink : SetupVariant::BucketOnly;
    const Instance inst = random_instance(rng, v);
    const OracleChoice o = exhaustive_oracle(inst.problem, inst.x0, 1e-12);
    if (!o.feasible) {
      EXPECT_ERROR_CODE(solve_rollout(inst.problem, inst.x0), ErrorCode::Infeasible);
      continue;
    }
    const RolloutSolution sol = solve_rollout(inst.problem, inst.x0);
    EXPECT_NEAR(sol.cost, o.cost, 1e-8 * (1.0 + std::abs(o.cost))) << "instance " << t;
    EXPECT_EQ(sol.schedule, o.schedule) << "instance " << t;
    ++feasible;
  }
  EXPECT_GT(feasible, 150);
}

TEST(SolveRollout, SolutionInvariants) {
  std::mt19937_64 rng(59);
  for (int t = 0; t < 100; ++t) {
    const SetupVariant v = t % 2 ? SetupVariant::DirectLink : SetupVariant::BucketOnly;
    const Instance inst = random_instance(rng, v);
    RolloutSolution sol;
    try {
      sol = solve_rollout(inst.problem, inst.x0);
    } catch (const Error&) {
      continue;
    }
    const RolloutProblem& p = inst.problem;
    ASSERT_EQ(static_cast<int>(sol.predicted_states.size()), p.N + 1);
    ASSERT_EQ(static_cast<int>(sol.controls.size()), p.N);
    OverallState x = inst.x0;
    for (int i = 0; i < p.N; ++i) {
      x = overall_step(p.plant, p.spec, p.variant, x, sol.controls[i], p.absolute_time + i);
      ASSERT_EQ(x.x_p, sol.predicted_states[i + 1].x_p);
      ASSERT_EQ(x.beta, sol.predicted_states[i + 1].beta);
    }
    EXPECT_TRUE(terminal_region_contains(p.variant, p.spec, p.plant, p.ingredients.region, x,
                                         p.terminal_tol));
    EXPECT_NEAR(trajectory_cost(p, sol.predicted_states, sol.controls), sol.cost,
                1e-9 * std::abs(sol.cost));
    EXPECT_EQ(sol.transmissions_used, sol.schedule.transmissions());
    EXPECT_EQ(static_cast<int>(sol.inputs.size()), sol.transmissions_used);
    EXPECT_GE(sol.schedules_examined, 1);
    if (p.mode == CostMode::Nominal) {
      EXPECT_GE(sol.cost, 0.0);
      if (inst.x0.x_p.norm() > 0) EXPECT_GT(sol.cost, 0.0);
    }
  }
}

TEST(SolveRollout, Examples) {
  for (const SetupVariant v : {SetupVariant::BucketOnly, SetupVariant::DirectLink}) {
    const RolloutProblem p = di_problem(1e-6, 3, v, v == SetupVariant::DirectLink ? 1e-9 : 0.0);
    const RolloutSolution eq = solve_rollout(p, state(Vector::Zero(4), Vector::Zero(2), 22));
    EXPECT_EQ(eq.cost, 0.0);
    EXPECT_EQ(eq.schedule.bucket_transmissions(), 0);
    if (v == SetupVariant::BucketOnly) EXPECT_EQ(eq.transmissions_used, 0);
  }
  const RolloutProblem p = di_problem(1e-6);
  const RolloutSolution first = solve_rollout(p, state(vec({1, 0, 1, 0}), Vector::Zero(2), 22));
  EXPECT_EQ(first.schedule.gamma[0], 1);
  EXPECT_EQ(first.predicted_states[1].beta, 17);
}

TEST(SolveRollout, InfeasibleAndValidation) {
  const PlantModel plant(scalar(2), scalar(1), Box{vec({-1}), vec({1})}, Box{vec({-0.1}), vec({0.1})});
  const TokenBucketSpec spec(22, 8, 3);
  RolloutProblem p{plant, spec, SetupVariant::BucketOnly,
                   CostWeights::with_default_storage(scalar(1), scalar(1), 1e-6),
                   synthesize_terminal(plant, scalar(1), scalar(1), 3), 3, 3};
  EXPECT_ERROR_CODE(solve_rollout(p, state(vec({0.9}), vec({0}), 22)), ErrorCode::Infeasible);

  RolloutProblem bad = di_problem(1e-6);
  bad.M = 2;
  EXPECT_ERROR_CODE(bad.validate(), ErrorCode::PreconditionViolated);
  bad = di_problem(1e-6);
  bad.N = 2;
  EXPECT_ERROR_CODE(bad.validate(), ErrorCode::PreconditionViolated);
  bad = di_problem(1e-6, 4, SetupVariant::DirectLink);
  EXPECT_ERROR_CODE(bad.validate(), ErrorCode::PreconditionViolated);
  bad = di_problem(1e-6, 3, SetupVariant::DirectLink);
  bad.absolute_time = 1;
  EXPECT_ERROR_CODE(bad.validate(), ErrorCode::PreconditionViolated);
  bad = di_problem(1e-6);
  bad.ingredients.q = 2;
  EXPECT_ERROR_CODE(bad.validate(), ErrorCode::PreconditionViolated);
}

TEST(Preferred, TieBreaks) {
  RolloutSolution a, b;
  a.schedule = bucket_schedule({0, 1, 0});
  b.schedule = bucket_schedule({1, 0, 0});
  a.cost = 1.0;
  b.cost = 1.0 + 1e-13;
  a.transmissions_used = b.transmissions_used = 1;
  EXPECT_TRUE(preferred(a, b));
  EXPECT_FALSE(preferred(b, a));
  b.transmissions_used = 0;
  EXPECT_TRUE(preferred(b, a));
  b.cost = 1.0 + 1e-9;
  EXPECT_TRUE(preferred(a, b));
  // The tolerance is relative: tiny costs are not lumped together.
  a.cost = 1e-9;
  b.cost = 2e-9;
  b.transmissions_used = 0;
  EXPECT_TRUE(preferred(a, b));
}

TEST(ShiftedCandidate, Examples) {
  const RolloutProblem p = di_problem(1e-6);
  const RolloutSolution eq = solve_rollout(p, state(Vector::Zero(4), Vector::Zero(2), 22));
  // At the brim the upper branch still sends K*0 = 0 at each cycle start,
  // so the level dips and is back at b after every cycle.
  const RolloutSolution c = shifted_candidate(p, eq);
  for (std::size_t i = 0; i < c.predicted_states.size(); ++i) {
    EXPECT_EQ(c.predicted_states[i].x_p.norm(), 0.0);
    EXPECT_EQ(c.predicted_states[i].u_s.norm(), 0.0);
    if (i % 3 == 0) EXPECT_EQ(c.predicted_states[i].beta, 22);
  }
  for (const Vector& u : c.inputs) EXPECT_EQ(u.norm(), 0.0);

  // Previous solution ending in the upper branch at beta = c - g.
  RolloutSolution prev = eq;
  prev.predicted_states.back() = state(vec({0.1, 0, 0, 0}), Vector::Zero(2), 5);
  const RolloutSolution d = shifted_candidate(p, prev);
  EXPECT_EQ(d.controls.front().gamma, 1);
  EXPECT_EQ(d.predicted_states[1].beta, 0);
  EXPECT_EQ(d.predicted_states[3].beta, 6);

  prev.predicted_states.back() = state(vec({0.1, 0, 0, 0}), Vector::Zero(2), 2);
  EXPECT_ERROR_CODE(shifted_candidate(p, prev), ErrorCode::InternalFeasibilityLoss);
}

TEST(ShiftedCandidate, UpperBoundsSuccessorOptimum) {
  std::mt19937_64 rng(61);
  int checked = 0;
  for (int t = 0; checked < 100 && t < 1000; ++t) {
    const SetupVariant v = t % 2 ? SetupVariant::DirectLink : SetupVariant::BucketOnly;
    const Instance inst = random_instance(rng, v);
    if (inst.problem.N < inst.problem.M) continue;
    RolloutSolution sol;
    try {
      sol = solve_rollout(inst.problem, inst.x0);
    } catch (const Error&) {
      continue;
    }
    RolloutProblem next = inst.problem;
    next.absolute_time += next.M;
    const RolloutSolution cand = shifted_candidate(inst.problem, sol);
    const RolloutSolution succ = solve_rollout(next, sol.predicted_states[next.M]);
    EXPECT_GE(cand.cost, succ.cost - 1e-9 * (1.0 + std::abs(succ.cost))) << "instance " << t;
    EXPECT_NEAR(cand.cost, trajectory_cost(next, cand.predicted_states, cand.controls), 1e-12);
    ++checked;
  }
  EXPECT_EQ(checked, 100);
}
