#include "tbctl/terminal_synthesis.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace tbctl {

namespace {

Matrix lifted_weight(const LiftedSystem& lifted, const Matrix& K) {
  return lifted.Q_bar + lifted.N_bar * K + K.transpose() * lifted.N_bar.transpose() +
         K.transpose() * lifted.R_bar * K;
}

double lifted_residual_eig(const LiftedSystem& lifted, const Matrix& P, const Matrix& K) {
  const Matrix Acl = lifted.A_q + lifted.B_q * K;
  return max_eigenvalue_symmetric(lyapunov_residual(Acl, P, symmetrize(lifted_weight(lifted, K))));
}

// Tightens rho against one linear functional row'x within [lo, hi].
void tighten(double& rho, const Matrix& P_inv, const Vector& row, double lo, double hi) {
  const double spread = row.dot(P_inv * row);
  if (spread <= 0.0) return;
  if (std::isfinite(hi)) rho = std::min(rho, hi * hi / spread);
  if (std::isfinite(lo)) rho = std::min(rho, lo * lo / spread);
}

}  // namespace

LiftedSystem lift_held_input(const PlantModel& plant, const Matrix& Q, const Matrix& R, int q) {
  const int n = plant.state_dim();
  const int m = plant.input_dim();
  require(q >= 1, ErrorCode::InvalidArgument, "lift_held_input needs q >= 1");
  require(Q.rows() == n && Q.cols() == n && R.rows() == m && R.cols() == m,
          ErrorCode::DimensionMismatch, "lift_held_input: weight dimensions");

  LiftedSystem out;
  out.Q_bar = Matrix::Zero(n, n);
  out.N_bar = Matrix::Zero(n, m);
  out.R_bar = static_cast<double>(q) * R;
  Matrix A_i = Matrix::Identity(n, n);
  Matrix B_i = Matrix::Zero(n, m);
  for (int i = 0; i < q; ++i) {
    out.Q_bar += A_i.transpose() * Q * A_i;
    out.N_bar += A_i.transpose() * Q * B_i;
    out.R_bar += B_i.transpose() * Q * B_i;
    B_i = plant.A() * B_i + plant.B();
    A_i = plant.A() * A_i;
  }
  out.Q_bar = symmetrize(out.Q_bar);
  out.R_bar = symmetrize(out.R_bar);
  out.A_q = A_i;
  out.B_q = B_i;
  return out;
}

double terminal_region_level(const PlantModel& plant, const Matrix& P, const Matrix& K, int q) {
  double rho = std::numeric_limits<double>::infinity();
  if (!plant.constrained()) return rho;
  const int n = plant.state_dim();
  const Matrix P_inv = P.ldlt().solve(Matrix::Identity(n, n));

  if (const auto& ub = plant.input_bounds()) {
    for (int j = 0; j < plant.input_dim(); ++j)
      tighten(rho, P_inv, K.row(j).transpose(), ub->lower(j), ub->upper(j));
  }
  if (const auto& xb = plant.state_bounds()) {
    // Map from x to the i-th held-input state: A^i + (sum_{j<i} A^j) B K.
    Matrix A_i = Matrix::Identity(n, n);
    Matrix S_i = Matrix::Zero(n, plant.input_dim());
    for (int i = 0; i < q; ++i) {
      const Matrix map = A_i + S_i * K;
      for (int j = 0; j < n; ++j)
        tighten(rho, P_inv, map.row(j).transpose(), xb->lower(j), xb->upper(j));
      S_i = plant.A() * S_i + plant.B();
      A_i = plant.A() * A_i;
    }
  }
  return rho;
}

TerminalIngredients synthesize_terminal(const PlantModel& plant, const Matrix& Q, const Matrix& R,
                                        int q, double tol) {
  const LiftedSystem lifted = lift_held_input(plant, Q, R, q);
  const RiccatiSolution sol =
      solve_riccati({lifted.A_q, lifted.B_q, lifted.Q_bar, lifted.R_bar, lifted.N_bar}, tol);

  TerminalIngredients out;
  out.P = sol.P;
  out.K = sol.K;
  out.q = q;
  out.residual_eig = lifted_residual_eig(lifted, sol.P, sol.K);
  if (out.residual_eig > 10.0 * tol) {
    std::ostringstream os;
    os << "lifted Lyapunov residual " << out.residual_eig << " exceeds " << 10.0 * tol;
    fail(ErrorCode::NonConvergent, os.str());
  }
  const double rho = terminal_region_level(plant, out.P, out.K, q);
  out.region = std::isinf(rho) ? TerminalRegion::full_space() : TerminalRegion::ellipsoid(out.P, rho);
  return out;
}

TerminalCertificate certify_terminal_decrease(const PlantModel& plant, const Matrix& Q,
                                              const Matrix& R,
                                              const TerminalIngredients& ingredients,
                                              int sample_count, std::uint64_t seed) {
  require(sample_count >= 0, ErrorCode::InvalidArgument, "sample_count must be nonnegative");
  const int n = plant.state_dim();
  const Matrix& P = ingredients.P;
  const Matrix& K = ingredients.K;
  require(P.rows() == n && P.cols() == n && K.rows() == plant.input_dim() && K.cols() == n,
          ErrorCode::DimensionMismatch, "terminal ingredients do not match the plant");
  const int q = ingredients.q;
  const LiftedSystem lifted = lift_held_input(plant, Q, R, q);

  TerminalCertificate rep;
  rep.residual_eig = lifted_residual_eig(lifted, P, K);
  const double p_norm = is_symmetric(P) ? std::abs(max_eigenvalue_symmetric(P)) : max_abs(P);
  rep.residual_bound = kCertificationTol * (1.0 + p_norm);
  rep.matrix_certified = is_symmetric(P) && min_eigenvalue_symmetric(P) > 0.0 &&
                         rep.residual_eig <= rep.residual_bound;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  rep.samples_certified = true;
  rep.worst_margin = -std::numeric_limits<double>::infinity();
  for (int s = 0; s < sample_count; ++s) {
    Vector x(n);
    for (int i = 0; i < n; ++i) x(i) = normal(rng);
    if (ingredients.region.kind == TerminalRegion::Kind::Ellipsoid) {
      const double level = quad_form(x, ingredients.region.P);
      if (level > 0.0) x *= std::sqrt(ingredients.region.rho * unit(rng) / level);
    }
    // Simulate the held input directly rather than through the lifted maps.
    const Vector u = K * x;
    Vector xi = x;
    double decrease = -quad_form(x, P) + q * quad_form(u, R);
    for (int i = 0; i < q; ++i) {
      decrease += quad_form(xi, Q);
      xi = plant.A() * xi + plant.B() * u;
    }
    decrease += quad_form(xi, P);
    const double scale = 1.0 + x.squaredNorm();
    const double margin = decrease / scale;
    ++rep.samples;
    if (margin > rep.worst_margin) {
      rep.worst_margin = margin;
      rep.worst_sample = x;
    }
    if (decrease > kCertificationTol * scale) rep.samples_certified = false;
  }
  if (sample_count == 0) rep.worst_margin = 0.0;

  if (!rep.passed()) {
    std::ostringstream os;
    if (!rep.matrix_certified) {
      os << "matrix residual eigenvalue " << rep.residual_eig << " > " << rep.residual_bound;
    } else {
      os << "sampled decrease margin " << rep.worst_margin << " > " << kCertificationTol
         << " at x_p = [" << rep.worst_sample.transpose() << "]";
    }
    throw CertificationError(os.str(), rep);
  }
  return rep;
}

}  // namespace tbctl
