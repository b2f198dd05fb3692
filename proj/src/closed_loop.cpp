#include "tbctl/closed_loop.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "tbctl/error.hpp"
#include "tbctl/terminal_synthesis.hpp"

namespace tbctl {

namespace {

constexpr double kMonitorTol = 1e-7;
constexpr double kEquilibriumTol = 1e-9;

RolloutProblem segment_problem(const RolloutProblem& base, const Vector& x_ref, const Vector& u_ref) {
  RolloutProblem seg = base;
  seg.plant = base.plant.translated(x_ref, u_ref);
  if (seg.plant.constrained()) {
    const double rho =
        terminal_region_level(seg.plant, seg.ingredients.P, seg.ingredients.K, seg.ingredients.q);
    seg.ingredients.region = std::isinf(rho) ? TerminalRegion::full_space()
                                             : TerminalRegion::ellipsoid(seg.ingredients.P, rho);
  }
  return seg;
}

OverallState deviation(const OverallState& x, const Vector& x_ref, const Vector& u_ref) {
  return {x.x_p - x_ref, x.u_s - u_ref, x.beta};
}

ControlInput deviation(const ControlInput& u, const Vector& u_ref) {
  ControlInput d = u;
  d.u_c = u.transmits() ? Vector(u.u_c - u_ref) : Vector(Vector::Zero(u_ref.size()));
  return d;
}

void validate_scenario(const RolloutProblem& problem, const Scenario& s) {
  const int n = problem.plant.state_dim();
  const int m = problem.plant.input_dim();
  require(s.initial.x_p.size() == n && s.initial.u_s.size() == m, ErrorCode::DimensionMismatch,
          "initial state dimensions do not match the plant");
  require(problem.spec.valid_level(s.initial.beta), ErrorCode::OutOfRange,
          "initial bucket level outside [0, b]");
  require(s.duration > 0, ErrorCode::InvalidArgument, "scenario duration must be positive");
  std::int64_t last = 0;
  for (const SetPointChange& c : s.changes) {
    require(c.step > last && c.step < s.duration, ErrorCode::InvalidArgument,
            "set-point changes must be increasing and inside the run");
    require(c.step % problem.M == 0, ErrorCode::InvalidArgument,
            "set-point changes must fall on solve instants (multiples of M)");
    require(c.x_ref.size() == n, ErrorCode::DimensionMismatch, "set-point dimension");
    last = c.step;
  }
}

}  // namespace

Vector equilibrium_input(const PlantModel& plant, const Vector& x_ref,
                         const std::optional<Vector>& u_ref) {
  const int n = plant.state_dim();
  require(x_ref.size() == n, ErrorCode::DimensionMismatch, "set-point dimension");
  const Vector rhs = (Matrix::Identity(n, n) - plant.A()) * x_ref;
  Vector u;
  if (u_ref) {
    require(u_ref->size() == plant.input_dim(), ErrorCode::DimensionMismatch,
            "input reference dimension");
    u = *u_ref;
  } else {
    u = plant.B().completeOrthogonalDecomposition().solve(rhs);
  }
  const double residual = (plant.B() * u - rhs).lpNorm<Eigen::Infinity>();
  if (!(residual <= kEquilibriumTol * (1.0 + x_ref.lpNorm<Eigen::Infinity>()))) {
    std::ostringstream os;
    os << "set point [" << x_ref.transpose() << "] is not an equilibrium (residual " << residual
       << ")";
    fail(ErrorCode::InvalidArgument, os.str());
  }
  return u;
}

Trace run_closed_loop(const RolloutProblem& problem, const Scenario& scenario,
                      const ClosedLoopOptions& options) {
  problem.validate();
  validate_scenario(problem, scenario);
  const int n = problem.plant.state_dim();
  const int m = problem.plant.input_dim();

  Vector x_ref = Vector::Zero(n);
  Vector u_ref = Vector::Zero(m);
  int segment = 0;
  std::size_t next_change = 0;
  RolloutProblem seg = problem;

  Trace trace;
  trace.reserve(static_cast<std::size_t>(scenario.duration));
  OverallState x = scenario.initial;
  double cumulative = 0.0;

  for (std::int64_t k = 0; k < scenario.duration;) {
    if (next_change < scenario.changes.size() && scenario.changes[next_change].step == k) {
      const SetPointChange& c = scenario.changes[next_change++];
      x_ref = c.x_ref;
      u_ref = equilibrium_input(problem.plant, x_ref, c.u_ref);
      ++segment;
      seg = segment_problem(problem, x_ref, u_ref);
    }
    seg.absolute_time = k;
    const OverallState dev = deviation(x, x_ref, u_ref);

    RolloutSolution nominal;
    std::optional<double> rotated_value;
    try {
      nominal = solve_rollout(seg, dev);
      if (options.log_rotated) {
        RolloutProblem rot = seg;
        rot.mode = CostMode::Rotated;
        rotated_value = solve_rollout(rot, dev).cost;
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::Infeasible) throw;
      std::ostringstream os;
      os << "k=" << k << ": " << e.what();
      fail(k == 0 ? ErrorCode::InitialInfeasible : ErrorCode::InternalFeasibilityLoss, os.str());
    }
    const RolloutSolution applied = options.applied_solver ? options.applied_solver(seg, dev) : nominal;
    require(static_cast<int>(applied.controls.size()) >= seg.M, ErrorCode::LengthMismatch,
            "applied solution shorter than M");

    for (int i = 0; i < seg.M && k < scenario.duration; ++i, ++k) {
      const ControlInput& du = applied.controls[i];
      ControlInput u = du;
      u.u_c = du.transmits() ? Vector(du.u_c + u_ref) : Vector(Vector::Zero(m));

      TraceRecord rec;
      rec.k = k;
      rec.segment = segment;
      rec.x_ref = x_ref;
      rec.u_ref = u_ref;
      rec.x = x;
      rec.u_applied = u;
      rec.stage_cost = stage_cost(seg.weights, seg.variant, seg.spec, deviation(x, x_ref, u_ref),
                                  deviation(u, u_ref));
      cumulative += rec.stage_cost;
      rec.cumulative_cost = cumulative;
      if (i == 0) {
        rec.V_star = nominal.cost;
        rec.V_bar_star = rotated_value;
        rec.beta_pred_terminal = applied.predicted_states.back().beta;
      }
      try {
        x = overall_step(problem.plant, problem.spec, problem.variant, x, u, k);
      } catch (const Error& e) {
        std::ostringstream os;
        os << "k=" << k << ": applied input failed: " << e.what();
        fail(ErrorCode::InternalFeasibilityLoss, os.str());
      }
      trace.push_back(std::move(rec));
    }
  }
  return trace;
}

bool replay_consistent(const RolloutProblem& problem, const Trace& trace) {
  if (trace.empty()) return true;
  OverallState x = trace.front().x;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const OverallState& logged = trace[i].x;
    if (x.beta != logged.beta || x.x_p != logged.x_p || x.u_s != logged.u_s) return false;
    x = overall_step(problem.plant, problem.spec, problem.variant, x, trace[i].u_applied, trace[i].k);
  }
  return true;
}

SectorReport convergence_sector_check(const Trace& trace, const TokenBucketSpec& spec, int N, int M,
                                      double tail_fraction) {
  require(!trace.empty(), ErrorCode::PreconditionViolated, "empty trace");
  require(tail_fraction > 0.0 && tail_fraction <= 1.0, ErrorCode::InvalidArgument,
          "tail fraction must lie in (0, 1]");
  SectorReport rep;
  rep.upper = spec.b();
  rep.lower_all = std::max(0, spec.b() - N * spec.g());
  rep.lower_solve = std::max(0, spec.b() - (N - M) * spec.g());
  const auto size = static_cast<std::int64_t>(trace.size());
  const auto tail_len = static_cast<std::int64_t>(std::ceil(tail_fraction * static_cast<double>(size)));
  const std::int64_t first = size - std::max<std::int64_t>(1, tail_len);
  rep.tail_start = trace[first].k;
  rep.min_beta_all = spec.b();
  rep.min_beta_solve = spec.b();
  for (std::int64_t i = first; i < size; ++i) {
    const TraceRecord& r = trace[i];
    const int beta = r.x.beta;
    rep.min_beta_all = std::min(rep.min_beta_all, beta);
    if (beta < rep.lower_all || beta > rep.upper) rep.all_in_sector = false;
    if (r.k % M == 0) {
      rep.min_beta_solve = std::min(rep.min_beta_solve, beta);
      if (beta < rep.lower_solve || beta > rep.upper) rep.solve_in_sector = false;
    }
  }
  return rep;
}

DecreaseReport decrease_monitor(const Trace& trace, const CostWeights& weights,
                                const TokenBucketSpec& spec, SetupVariant variant) {
  DecreaseReport rep;
  rep.worst_slack = std::numeric_limits<double>::infinity();
  const TraceRecord* prev = nullptr;
  for (const TraceRecord& r : trace) {
    if (!r.solve_instant() || !r.V_bar_star) continue;
    if (prev && prev->segment == r.segment) {
      const double L = rotated_stage_cost_unchecked(weights, variant, spec,
                                                    deviation(prev->x, prev->x_ref, prev->u_ref),
                                                    deviation(prev->u_applied, prev->u_ref));
      // The bucket part of the decrease is only guaranteed with a bucket
      // terminal cost in the bucket-only setup.
      const double a = (variant == SetupVariant::BucketOnly && weights.sigma > 0.0 &&
                        prev->beta_pred_terminal)
                           ? alpha(weights.sigma, *prev->beta_pred_terminal, spec.b())
                           : 0.0;
      const double bound = *prev->V_bar_star - L - a;
      const double tol =
          kMonitorTol * (1.0 + std::max(std::abs(*prev->V_bar_star), std::abs(*r.V_bar_star)));
      const double slack = bound + tol - *r.V_bar_star;
      ++rep.pairs_checked;
      if (slack < 0.0) ++rep.violations;
      if (slack < rep.worst_slack) {
        rep.worst_slack = slack;
        rep.worst_k = r.k;
      }
    }
    prev = &r;
  }
  if (rep.pairs_checked == 0) rep.worst_slack = 0.0;
  return rep;
}

TrafficReport traffic_audit(const Trace& trace, const TokenBucketSpec& spec) {
  require(!trace.empty(), ErrorCode::PreconditionViolated, "empty trace");
  TrafficReport rep;
  rep.rate_bound = spec.rate_bound();
  const std::int64_t beta0 = trace.front().x.beta;
  std::int64_t sent = 0;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const TraceRecord& r = trace[i];
    if (!spec.valid_level(r.x.beta)) {
      rep.levels_valid = false;
      if (rep.first_violation_k < 0) rep.first_violation_k = r.k;
    }
    if (r.u_applied.gamma) ++sent;
    const auto k = static_cast<std::int64_t>(i) + 1;
    if (spec.c() * sent > beta0 + k * spec.g()) {
      rep.cumulative_valid = false;
      if (rep.first_violation_k < 0) rep.first_violation_k = r.k + 1;
    }
  }
  rep.transmissions = static_cast<int>(sent);
  rep.steps = static_cast<int>(trace.size());
  rep.achieved_rate = static_cast<double>(sent) / static_cast<double>(trace.size());
  return rep;
}

std::vector<double> CostComparison::difference(std::size_t a, std::size_t b) const {
  require(a < cumulative.size() && b < cumulative.size(), ErrorCode::OutOfRange, "trace index");
  std::vector<double> d(steps.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = cumulative[a][i] - cumulative[b][i];
  return d;
}

CostComparison cumulative_cost_compare(const std::vector<LabeledTrace>& traces) {
  require(!traces.empty(), ErrorCode::PreconditionViolated, "no traces to compare");
  const Trace& ref = *traces.front().trace;
  CostComparison out;
  for (const LabeledTrace& lt : traces) {
    require(lt.trace != nullptr, ErrorCode::InvalidArgument, "null trace");
    const Trace& t = *lt.trace;
    if (t.size() != ref.size()) fail(ErrorCode::LengthMismatch, "traces differ in length");
    std::vector<double> cum(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (t[i].k != ref[i].k || t[i].segment != ref[i].segment) {
        fail(ErrorCode::LengthMismatch, "traces do not share the scenario");
      }
      cum[i] = t[i].cumulative_cost;
    }
    out.labels.push_back(lt.label);
    out.cumulative.push_back(std::move(cum));
  }
  for (std::size_t i = 0; i < ref.size(); ++i) {
    out.steps.push_back(ref[i].k);
    if (i > 0 && ref[i].segment != ref[i - 1].segment) out.change_steps.push_back(ref[i].k);
    const bool segment_end = i + 1 == ref.size() || ref[i + 1].segment != ref[i].segment;
    if (segment_end) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < out.cumulative.size(); ++j) {
        if (out.cumulative[j][i] < out.cumulative[best][i]) best = j;
      }
      out.segment_leader.push_back(out.labels[best]);
    }
  }
  return out;
}

StabilityPreconditions stability_preconditions(const RolloutProblem& problem) {
  StabilityPreconditions pre;
  pre.horizon_multiple = problem.M > 0 && problem.N % problem.M == 0;
  const auto& ub = problem.plant.input_bounds();
  pre.inputs_compact = ub.has_value() && ub->all_finite();
  pre.refill_at_least_two = problem.spec.g() >= 2;
  const auto& xb = problem.plant.state_bounds();
  pre.origin_interior = (!ub || ub->origin_interior()) && (!xb || xb->origin_interior());
  return pre;
}

LadderReport perturbation_ladder(const RolloutProblem& problem, const Vector& direction,
                                 const std::vector<double>& deflections, int duration) {
  LadderReport rep;
  for (double eps : deflections) {
    Scenario s;
    s.initial.x_p = eps * direction;
    s.initial.u_s = Vector::Zero(problem.plant.input_dim());
    s.initial.beta = problem.spec.b();
    s.duration = duration;
    const Trace trace = run_closed_loop(problem, s, {RolloutSolver{}, false});
    double peak = 0.0;
    for (const TraceRecord& r : trace) peak = std::max(peak, r.x.x_p.norm());
    rep.rungs.push_back({eps, peak});
    if (eps > 0.0) rep.max_gain = std::max(rep.max_gain, peak / eps);
  }
  rep.monotone = true;
  for (std::size_t i = 1; i < rep.rungs.size(); ++i) {
    if (!(rep.rungs[i].peak_deviation > rep.rungs[i - 1].peak_deviation)) rep.monotone = false;
  }
  return rep;
}

}  // namespace tbctl
