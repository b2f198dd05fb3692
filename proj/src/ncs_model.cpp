#include "tbctl/ncs_model.hpp"

#include <sstream>

#include "tbctl/error.hpp"

namespace tbctl {

namespace {

void check_box(const Box& box, Eigen::Index dim, const char* what) {
  require(box.lower.size() == dim && box.upper.size() == dim, ErrorCode::DimensionMismatch,
          std::string(what) + " bounds have the wrong dimension");
  for (Eigen::Index i = 0; i < dim; ++i) {
    require(box.lower(i) <= box.upper(i), ErrorCode::InvalidArgument,
            std::string(what) + " bounds: lower > upper");
    require(box.lower(i) <= 0.0 && box.upper(i) >= 0.0, ErrorCode::InvalidArgument,
            std::string(what) + " bounds must contain the origin");
  }
}

bool near_zero(const Vector& v, double tol) { return v.size() == 0 || v.cwiseAbs().maxCoeff() <= tol; }

}  // namespace

bool Box::contains(const Vector& v) const {
  if (v.size() != lower.size()) return false;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (!(v(i) >= lower(i) && v(i) <= upper(i))) return false;
  return true;
}

bool Box::origin_interior() const {
  for (Eigen::Index i = 0; i < lower.size(); ++i)
    if (!(lower(i) < 0.0 && upper(i) > 0.0)) return false;
  return true;
}

PlantModel::PlantModel(Matrix A, Matrix B, std::optional<Box> state_bounds,
                       std::optional<Box> input_bounds)
    : A_(std::move(A)),
      B_(std::move(B)),
      state_bounds_(std::move(state_bounds)),
      input_bounds_(std::move(input_bounds)) {
  require(A_.rows() > 0 && A_.rows() == A_.cols(), ErrorCode::DimensionMismatch,
          "plant A must be square and non-empty");
  require(B_.rows() == A_.rows() && B_.cols() > 0, ErrorCode::DimensionMismatch,
          "plant B must have as many rows as A");
  require(A_.allFinite() && B_.allFinite(), ErrorCode::InvalidArgument,
          "plant matrices must be finite");
  if (state_bounds_) check_box(*state_bounds_, A_.rows(), "state");
  if (input_bounds_) check_box(*input_bounds_, B_.cols(), "input");
}

bool PlantModel::state_admissible(const Vector& x_p) const {
  if (x_p.size() != state_dim() || !x_p.allFinite()) return false;
  return !state_bounds_ || state_bounds_->contains(x_p);
}

bool PlantModel::input_admissible(const Vector& u_p) const {
  if (u_p.size() != input_dim() || !u_p.allFinite()) return false;
  return !input_bounds_ || input_bounds_->contains(u_p);
}

PlantModel PlantModel::translated(const Vector& x_offset, const Vector& u_offset) const {
  auto shift = [](const std::optional<Box>& box, const Vector& off) -> std::optional<Box> {
    if (!box) return std::nullopt;
    return Box{box->lower - off, box->upper - off};
  };
  return PlantModel(A_, B_, shift(state_bounds_, x_offset), shift(input_bounds_, u_offset));
}

std::string to_string(SetupVariant v) {
  return v == SetupVariant::BucketOnly ? "bucket_only" : "direct_link";
}

Vector applied_input(const OverallState& x, const ControlInput& u) {
  return u.transmits() ? u.u_c : x.u_s;
}

bool periodic_delta(const TokenBucketSpec& spec, std::int64_t k) {
  require(k >= 0, ErrorCode::InvalidArgument, "step index must be nonnegative");
  return k % spec.q() == 0;
}

OverallState overall_step(const PlantModel& plant, const TokenBucketSpec& spec, SetupVariant variant,
                          const OverallState& x, const ControlInput& u, std::int64_t k) {
  require(x.x_p.size() == plant.state_dim() && x.u_s.size() == plant.input_dim(),
          ErrorCode::DimensionMismatch, "overall state does not match the plant");
  if (u.transmits()) {
    require(u.u_c.size() == plant.input_dim(), ErrorCode::DimensionMismatch,
            "transmitted input does not match the plant");
  }
  int beta_next = 0;
  if (variant == SetupVariant::BucketOnly) {
    require(!u.delta, ErrorCode::InvalidCombination, "delta must be 0 in the bucket-only setup");
    beta_next = bucket_step(spec, x.beta, u.gamma);
  } else {
    require(!(u.gamma && u.delta), ErrorCode::InvalidCombination,
            "gamma and delta cannot both be set");
    if (u.delta != periodic_delta(spec, k)) {
      std::ostringstream os;
      os << "delta=" << u.delta << " at k=" << k << " breaks the periodic direct-link pattern";
      fail(ErrorCode::InvalidCombination, os.str());
    }
    beta_next = bucket_step_direct_link(spec, x.beta, u.gamma, u.delta);
  }

  OverallState next;
  next.u_s = applied_input(x, u);
  if (!plant.input_admissible(next.u_s)) {
    fail(ErrorCode::ConstraintViolated, "applied input outside U_p");
  }
  next.x_p = plant.A() * x.x_p + plant.B() * next.u_s;
  if (!plant.state_admissible(next.x_p)) {
    fail(ErrorCode::ConstraintViolated, "successor plant state outside X_p");
  }
  next.beta = beta_next;
  return next;
}

bool TerminalRegion::contains(const Vector& x_p) const {
  if (!x_p.allFinite()) return false;
  if (kind == Kind::FullSpace) return true;
  return quad_form(x_p, P) <= rho;
}

bool terminal_region_contains(SetupVariant variant, const TokenBucketSpec& spec,
                              const PlantModel& plant, const TerminalRegion& region,
                              const OverallState& x, double tol) {
  if (!spec.valid_level(x.beta)) return false;
  const bool upper_member = region.contains(x.x_p) && plant.state_admissible(x.x_p) &&
                            plant.input_admissible(x.u_s);
  if (variant == SetupVariant::DirectLink) return upper_member;
  const int threshold = spec.c() - spec.g();
  if (x.beta >= threshold) return upper_member;
  return near_zero(x.x_p, tol) && near_zero(x.u_s, tol);
}

ControlInput terminal_policy_input(SetupVariant variant, const TokenBucketSpec& spec,
                                   const PlantModel& plant, const TerminalIngredients& ingredients,
                                   const OverallState& x, int phase) {
  ControlInput u;
  u.u_c = Vector::Zero(plant.input_dim());
  if (phase != 0) return u;
  if (variant == SetupVariant::DirectLink) {
    u.u_c = ingredients.K * x.x_p;
    u.delta = true;
    return u;
  }
  // Upper branch: transmit the held-input feedback over the bucket.
  // Lower branch ({0}x{0}x[0, c-g-1]): keep quiet and let tokens accumulate.
  if (x.beta >= spec.c() - spec.g()) {
    u.u_c = ingredients.K * x.x_p;
    u.gamma = true;
  }
  return u;
}

std::vector<OverallState> terminal_policy_rollout(SetupVariant variant, const PlantModel& plant,
                                                  const TokenBucketSpec& spec,
                                                  const TerminalIngredients& ingredients,
                                                  const OverallState& x, int steps,
                                                  std::int64_t start_k, double tol) {
  const int q = spec.q();
  require(steps >= 0 && steps % q == 0, ErrorCode::PreconditionViolated,
          "terminal rollout length must be a multiple of q");
  if (variant == SetupVariant::DirectLink) {
    require(start_k % q == 0, ErrorCode::PreconditionViolated,
            "direct-link terminal rollout must start on the periodic pattern");
  }

  std::vector<OverallState> states;
  states.reserve(static_cast<std::size_t>(steps) + 1);
  states.push_back(x);
  for (int i = 0; i < steps; ++i) {
    const OverallState& cur = states.back();
    const int phase = i % q;
    if (phase == 0 && !terminal_region_contains(variant, spec, plant, ingredients.region, cur, tol)) {
      std::ostringstream os;
      os << "state at terminal-rollout step " << i << " (beta=" << cur.beta
         << ") is not in the terminal region";
      fail(ErrorCode::NotInTerminalRegion, os.str());
    }
    const ControlInput u = terminal_policy_input(variant, spec, plant, ingredients, cur, phase);
    states.push_back(overall_step(plant, spec, variant, cur, u, start_k + i));
  }
  return states;
}

}  // namespace tbctl
