#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tbctl/numerics.hpp"
#include "tbctl/token_bucket.hpp"

namespace tbctl {

/// Coordinate-wise bounds; entries may be +/- infinity.
struct Box {
  Vector lower;
  Vector upper;

  bool contains(const Vector& v) const;
  bool all_finite() const { return lower.allFinite() && upper.allFinite(); }
  /// Strict containment of the origin in every coordinate.
  bool origin_interior() const;
};

/// Linear time-invariant plant x+ = A x + B u with optional box constraints
/// on the state and the input.
class PlantModel {
 public:
  PlantModel(Matrix A, Matrix B, std::optional<Box> state_bounds = std::nullopt,
             std::optional<Box> input_bounds = std::nullopt);

  const Matrix& A() const noexcept { return A_; }
  const Matrix& B() const noexcept { return B_; }
  int state_dim() const noexcept { return static_cast<int>(A_.rows()); }
  int input_dim() const noexcept { return static_cast<int>(B_.cols()); }
  const std::optional<Box>& state_bounds() const noexcept { return state_bounds_; }
  const std::optional<Box>& input_bounds() const noexcept { return input_bounds_; }
  bool constrained() const noexcept { return state_bounds_ || input_bounds_; }

  bool state_admissible(const Vector& x_p) const;
  bool input_admissible(const Vector& u_p) const;

  /// Same dynamics with every bound shifted by (-x_offset, -u_offset).
  PlantModel translated(const Vector& x_offset, const Vector& u_offset) const;

 private:
  Matrix A_;
  Matrix B_;
  std::optional<Box> state_bounds_;
  std::optional<Box> input_bounds_;
};

enum class SetupVariant {
  BucketOnly,  // every transmission goes through the token bucket
  DirectLink,  // additional toll-free link used periodically every q steps
};

std::string to_string(SetupVariant v);

/// x = [x_p, u_s, beta]: plant state, input held at the actuator, bucket level.
struct OverallState {
  Vector x_p;
  Vector u_s;
  int beta = 0;
};

struct ControlInput {
  Vector u_c;  // ignored unless a transmission happens
  bool gamma = false;
  bool delta = false;

  bool transmits() const noexcept { return gamma || delta; }
};

/// Input seen by the plant: u_c on a transmission, the held u_s otherwise.
Vector applied_input(const OverallState& x, const ControlInput& u);

/// Direct-link pattern anchored at absolute time 0: 1 iff k mod q == 0.
bool periodic_delta(const TokenBucketSpec& spec, std::int64_t k);

/// One step of the overall dynamics at absolute time k. In the direct-link
/// setup delta must follow periodic_delta(k); in the bucket-only setup it
/// must be zero.
OverallState overall_step(const PlantModel& plant, const TokenBucketSpec& spec, SetupVariant variant,
                          const OverallState& x, const ControlInput& u, std::int64_t k);

/// Plant part of the terminal region: either the whole space or the
/// sublevel set {x : x' P x <= rho}.
struct TerminalRegion {
  enum class Kind { FullSpace, Ellipsoid };
  Kind kind = Kind::FullSpace;
  Matrix P;
  double rho = 0.0;

  static TerminalRegion full_space() { return {}; }
  static TerminalRegion ellipsoid(Matrix P, double rho) {
    return {Kind::Ellipsoid, std::move(P), rho};
  }
  bool contains(const Vector& x_p) const;
};

/// Terminal cost weight P, held-input feedback k_p(x_p) = K x_p and the
/// plant terminal region, certified for the q-step held-input system.
struct TerminalIngredients {
  Matrix P;
  Matrix K;
  int q = 1;
  double residual_eig = 0.0;
  TerminalRegion region;
};

inline constexpr double kTerminalTol = 1e-6;

/// Membership in the overall terminal region. Bucket-only: the union of
/// {0}x{0}x[0, c-g-1] (zero tested as an infinity-norm ball of radius tol)
/// and X_fp x U_p x [c-g, b]. Direct link: X_fp x U_p x [0, b].
bool terminal_region_contains(SetupVariant variant, const TokenBucketSpec& spec,
                              const PlantModel& plant, const TerminalRegion& region,
                              const OverallState& x, double tol = kTerminalTol);

/// Input of the terminal control sequence at position `phase` of a q-cycle.
/// Phase 0 transmits K x_p (over the bucket when x is in the upper branch,
/// over the direct link in the direct-link setup); every other phase holds.
ControlInput terminal_policy_input(SetupVariant variant, const TokenBucketSpec& spec,
                                   const PlantModel& plant, const TerminalIngredients& ingredients,
                                   const OverallState& x, int phase);

/// States f_0(x) ... f_steps(x) under the terminal control sequence, which
/// restarts every q steps. `start_k` is the absolute time of x, used for the
/// direct-link pattern. Throws NotInTerminalRegion if x (or any cycle start)
/// leaves the terminal region.
std::vector<OverallState> terminal_policy_rollout(SetupVariant variant, const PlantModel& plant,
                                                  const TokenBucketSpec& spec,
                                                  const TerminalIngredients& ingredients,
                                                  const OverallState& x, int steps,
                                                  std::int64_t start_k = 0,
                                                  double tol = kTerminalTol);

}  // namespace tbctl
