#pragma once

#include <cstdint>

#include "tbctl/error.hpp"
#include "tbctl/ncs_model.hpp"

namespace tbctl {

/// q-step map of the plant when the input is held constant for q steps,
/// together with the aggregated stage cost of those q steps:
///   sum_{i<q} |A_i x + B_i u|_Q^2 + q |u|_R^2 = x'Qbar x + 2 x'Nbar u + u'Rbar u
/// with A_i = A^i and B_i = (sum_{j<i} A^j) B.
struct LiftedSystem {
  Matrix A_q;
  Matrix B_q;
  Matrix Q_bar;
  Matrix N_bar;
  Matrix R_bar;
};

LiftedSystem lift_held_input(const PlantModel& plant, const Matrix& Q, const Matrix& R, int q);

inline constexpr double kCertificationTol = 1e-8;

/// LQR on the lifted held-input system. The resulting (P, K) satisfy the
/// q-step decrease condition with equality. With box constraints the plant
/// terminal region is the largest P-ellipsoid whose held-input trajectory
/// stays admissible for q steps; otherwise it is the whole space.
TerminalIngredients synthesize_terminal(const PlantModel& plant, const Matrix& Q, const Matrix& R,
                                        int q, double tol = kRiccatiTol);

/// Largest rho such that {x' P x <= rho} keeps x, the q-1 intermediate
/// held-input states and K x inside the plant bounds. Infinity when the
/// plant is unconstrained.
double terminal_region_level(const PlantModel& plant, const Matrix& P, const Matrix& K, int q);

struct TerminalCertificate {
  bool matrix_certified = false;
  bool samples_certified = false;
  double residual_eig = 0.0;
  double residual_bound = 0.0;  // 1e-8 (1 + |P|)
  double worst_margin = 0.0;    // max over samples of decrease / (1 + |x|^2)
  Vector worst_sample;
  int samples = 0;

  bool passed() const { return matrix_certified && samples_certified; }
};

/// Thrown by certify_terminal_decrease; carries the full report.
class CertificationError : public Error {
 public:
  CertificationError(const std::string& what, TerminalCertificate report)
      : Error(ErrorCode::CertificationFailed, what), report_(std::move(report)) {}
  const TerminalCertificate& report() const noexcept { return report_; }

 private:
  TerminalCertificate report_;
};

/// Checks the q-step decrease
///   V(f_q(x, Kx)) - V(x) + q |Kx|_R^2 + sum_{i<q} |f_i(x, Kx)|_Q^2 <= 0
/// once through the matrix residual and once on `sample_count` random plant
/// states drawn inside the terminal region. Throws CertificationError.
TerminalCertificate certify_terminal_decrease(const PlantModel& plant, const Matrix& Q,
                                              const Matrix& R,
                                              const TerminalIngredients& ingredients,
                                              int sample_count, std::uint64_t seed = 0);

}  // namespace tbctl
