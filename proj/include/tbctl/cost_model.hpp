#pragma once

#include <cstdint>

#include "tbctl/ncs_model.hpp"

namespace tbctl {

/// Stage weights Q, R, storage weight S (R >= S > 0), bucket terminal
/// weight sigma and bucket stage weight psi (direct-link setup only).
struct CostWeights {
  Matrix Q;
  Matrix R;
  Matrix S;
  double sigma = 0.0;
  double psi = 0.0;

  /// Weights with the default storage S = R/2.
  static CostWeights with_default_storage(Matrix Q, Matrix R, double sigma = 0.0,
                                          double psi = 0.0);

  /// Throws InvalidArgument on Q, R, S not positive definite, R - S not
  /// positive semidefinite, negative scalars, or psi != 0 outside the
  /// direct-link setup.
  void validate(SetupVariant variant, int state_dim, int input_dim) const;
};

/// psi (b^2 - beta^2); zero when psi == 0.
double bucket_stage_cost(const CostWeights& w, const TokenBucketSpec& spec, int beta);

/// |x_p|_Q^2 + |u_p|_R^2 with u_p the applied input, plus the bucket stage
/// cost in the direct-link setup.
double stage_cost(const CostWeights& w, SetupVariant variant, const TokenBucketSpec& spec,
                  const OverallState& x, const ControlInput& u);

/// |x_p|_P^2 + sigma (b^2 - beta^2).
double terminal_cost(const CostWeights& w, const TerminalIngredients& ingredients,
                     const TokenBucketSpec& spec, const OverallState& x);

/// Storage function |u_s|_S^2.
double storage(const CostWeights& w, const OverallState& x);

/// L(x, u) = l(x, u) + storage(x) - storage(f(x, u)), with zero optimal
/// average cost. Only the held input of the successor enters the storage,
/// so the plant matrices are not needed; `plant`, `k` are used to validate
/// the step through overall_step.
double rotated_stage_cost(const CostWeights& w, SetupVariant variant, const PlantModel& plant,
                          const TokenBucketSpec& spec, const OverallState& x,
                          const ControlInput& u, std::int64_t k);

/// Rotated stage cost evaluated without stepping the plant (used by the
/// trace monitors, which only see logged states and inputs).
double rotated_stage_cost_unchecked(const CostWeights& w, SetupVariant variant,
                                    const TokenBucketSpec& spec, const OverallState& x,
                                    const ControlInput& u);

/// Rotated terminal cost V_f + storage.
double rotated_terminal_cost(const CostWeights& w, const TerminalIngredients& ingredients,
                             const TokenBucketSpec& spec, const OverallState& x);

}  // namespace tbctl
