#include "tbctl/cost_model.hpp"

#include "tbctl/error.hpp"

namespace tbctl {

namespace {

bool positive_definite(const Matrix& M) {
  return is_symmetric(M) && min_eigenvalue_symmetric(M) > 0.0;
}

double bucket_deficit(const TokenBucketSpec& spec, int beta) {
  const double b = spec.b();
  return b * b - static_cast<double>(beta) * beta;
}

}  // namespace

CostWeights CostWeights::with_default_storage(Matrix Q, Matrix R, double sigma, double psi) {
  CostWeights w;
  w.S = 0.5 * R;
  w.Q = std::move(Q);
  w.R = std::move(R);
  w.sigma = sigma;
  w.psi = psi;
  return w;
}

void CostWeights::validate(SetupVariant variant, int state_dim, int input_dim) const {
  require(Q.rows() == state_dim && Q.cols() == state_dim, ErrorCode::DimensionMismatch,
          "Q must be n_p x n_p");
  require(R.rows() == input_dim && R.cols() == input_dim, ErrorCode::DimensionMismatch,
          "R must be m_p x m_p");
  require(S.rows() == input_dim && S.cols() == input_dim, ErrorCode::DimensionMismatch,
          "S must be m_p x m_p");
  require(positive_definite(Q), ErrorCode::InvalidArgument, "Q must be symmetric positive definite");
  require(positive_definite(R), ErrorCode::InvalidArgument, "R must be symmetric positive definite");
  require(positive_definite(S), ErrorCode::InvalidArgument, "S must be symmetric positive definite");
  const Matrix gap = symmetrize(R - S);
  require(min_eigenvalue_symmetric(gap) >= -1e-12 * (1.0 + max_abs(R)), ErrorCode::InvalidArgument,
          "R - S must be positive semidefinite");
  require(sigma >= 0.0, ErrorCode::InvalidArgument, "sigma must be nonnegative");
  require(psi >= 0.0, ErrorCode::InvalidArgument, "psi must be nonnegative");
  require(variant == SetupVariant::DirectLink || psi == 0.0, ErrorCode::InvalidArgument,
          "psi must be 0 in the bucket-only setup");
}

double bucket_stage_cost(const CostWeights& w, const TokenBucketSpec& spec, int beta) {
  return w.psi == 0.0 ? 0.0 : w.psi * bucket_deficit(spec, beta);
}

double stage_cost(const CostWeights& w, SetupVariant variant, const TokenBucketSpec& spec,
                  const OverallState& x, const ControlInput& u) {
  const Vector u_p = applied_input(x, u);
  double cost = quad_form(x.x_p, w.Q) + quad_form(u_p, w.R);
  if (variant == SetupVariant::DirectLink) cost += bucket_stage_cost(w, spec, x.beta);
  return cost;
}

double terminal_cost(const CostWeights& w, const TerminalIngredients& ingredients,
                     const TokenBucketSpec& spec, const OverallState& x) {
  double cost = quad_form(x.x_p, ingredients.P);
  if (w.sigma != 0.0) cost += w.sigma * bucket_deficit(spec, x.beta);
  return cost;
}

double storage(const CostWeights& w, const OverallState& x) { return quad_form(x.u_s, w.S); }

double rotated_stage_cost_unchecked(const CostWeights& w, SetupVariant variant,
                                    const TokenBucketSpec& spec, const OverallState& x,
                                    const ControlInput& u) {
  const Vector u_p = applied_input(x, u);
  return stage_cost(w, variant, spec, x, u) + storage(w, x) - quad_form(u_p, w.S);
}

double rotated_stage_cost(const CostWeights& w, SetupVariant variant, const PlantModel& plant,
                          const TokenBucketSpec& spec, const OverallState& x,
                          const ControlInput& u, std::int64_t k) {
  const OverallState next = overall_step(plant, spec, variant, x, u, k);
  return stage_cost(w, variant, spec, x, u) + storage(w, x) - storage(w, next);
}

double rotated_terminal_cost(const CostWeights& w, const TerminalIngredients& ingredients,
                             const TokenBucketSpec& spec, const OverallState& x) {
  return terminal_cost(w, ingredients, spec, x) + storage(w, x);
}

}  // namespace tbctl
