#include "tbctl/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tbctl/error.hpp"

namespace tbctl {

namespace {

constexpr double kMaxCondition = 1e12;
constexpr double kDivergence = 1e150;

void check_riccati_dims(const RiccatiProblem& p) {
  const auto n = p.A.rows();
  const auto m = p.B.cols();
  require(p.A.cols() == n && p.B.rows() == n, ErrorCode::DimensionMismatch,
          "Riccati: A must be n x n and B n x m");
  require(p.Qw.rows() == n && p.Qw.cols() == n, ErrorCode::DimensionMismatch,
          "Riccati: Qw must be n x n");
  require(p.Rw.rows() == m && p.Rw.cols() == m, ErrorCode::DimensionMismatch,
          "Riccati: Rw must be m x m");
  require(p.Nw.rows() == n && p.Nw.cols() == m, ErrorCode::DimensionMismatch,
          "Riccati: Nw must be n x m");
}

// Solves (Rw + B'PB) X = rhs, guarding against numerical singularity.
Matrix solve_gain_system(const RiccatiProblem& p, const Matrix& P, const Matrix& rhs) {
  const Matrix S = symmetrize(p.Rw + p.B.transpose() * P * p.B);
  Eigen::LDLT<Matrix> ldlt(S);
  if (ldlt.info() != Eigen::Success || !(ldlt.rcond() * kMaxCondition >= 1.0)) {
    std::ostringstream os;
    os << "Rw + B'PB is numerically singular (rcond " << ldlt.rcond() << ")";
    fail(ErrorCode::IllConditioned, os.str());
  }
  return ldlt.solve(rhs);
}

}  // namespace

double max_abs(const Matrix& M) { return M.size() == 0 ? 0.0 : M.cwiseAbs().maxCoeff(); }

bool is_symmetric(const Matrix& M) {
  if (M.rows() != M.cols()) return false;
  return max_abs(M - M.transpose()) <= 1e-12 * max_abs(M);
}

Matrix symmetrize(const Matrix& M) { return 0.5 * (M + M.transpose()); }

Matrix riccati_gain(const RiccatiProblem& p, const Matrix& P) {
  check_riccati_dims(p);
  const Matrix rhs = p.Nw.transpose() + p.B.transpose() * P * p.A;
  return -solve_gain_system(p, P, rhs);
}

RiccatiSolution solve_riccati(const RiccatiProblem& p, double tol, int max_iter) {
  check_riccati_dims(p);
  require(tol > 0.0, ErrorCode::InvalidArgument, "Riccati tolerance must be positive");
  require(max_iter > 0, ErrorCode::InvalidArgument, "Riccati max_iter must be positive");

  RiccatiSolution sol;
  Matrix P = p.Qw;
  double residual = 0.0;
  for (int it = 1; it <= max_iter; ++it) {
    const Matrix G = p.Nw.transpose() + p.B.transpose() * P * p.A;
    const Matrix X = solve_gain_system(p, P, G);
    Matrix next = symmetrize(p.Qw + p.A.transpose() * P * p.A - G.transpose() * X);
    if (!next.allFinite() || max_abs(next) > kDivergence) {
      std::ostringstream os;
      os << "Riccati iteration diverged after " << it
         << " iterations (unstabilizable pair or undetectable weight)";
      fail(ErrorCode::NonConvergent, os.str());
    }
    residual = max_abs(next - P);
    P = std::move(next);
    sol.iterations = it;
    if (residual <= tol) break;
  }
  if (residual > tol) {
    std::ostringstream os;
    os << "Riccati residual " << residual << " > " << tol << " after " << max_iter
       << " iterations";
    fail(ErrorCode::NonConvergent, os.str());
  }
  if (min_eigenvalue_symmetric(P) <= 0.0) {
    fail(ErrorCode::NonConvergent, "Riccati fixed point is not positive definite");
  }
  sol.P = P;
  sol.K = riccati_gain(p, P);
  sol.residual = residual;
  return sol;
}

Matrix lyapunov_residual(const Matrix& Acl, const Matrix& P, const Matrix& W) {
  const auto n = Acl.rows();
  require(Acl.cols() == n && P.rows() == n && P.cols() == n && W.rows() == n && W.cols() == n,
          ErrorCode::DimensionMismatch, "lyapunov_residual: incompatible dimensions");
  return symmetrize(Acl.transpose() * P * Acl - P + W);
}

std::vector<double> symmetric_eigenvalues(const Matrix& M) {
  require(M.rows() == M.cols(), ErrorCode::NotSymmetric, "matrix is not square");
  require(is_symmetric(M), ErrorCode::NotSymmetric, "matrix is not symmetric");
  if (M.size() == 0) return {};
  const Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(M), Eigen::EigenvaluesOnly);
  require(es.info() == Eigen::Success, ErrorCode::NonConvergent, "eigenvalue iteration did not converge");
  const Vector& ev = es.eigenvalues();  // ascending
  return {ev.data(), ev.data() + ev.size()};
}

double max_eigenvalue_symmetric(const Matrix& M) {
  const auto eig = symmetric_eigenvalues(M);
  require(!eig.empty(), ErrorCode::InvalidArgument, "empty matrix");
  return eig.back();
}

double min_eigenvalue_symmetric(const Matrix& M) {
  const auto eig = symmetric_eigenvalues(M);
  require(!eig.empty(), ErrorCode::InvalidArgument, "empty matrix");
  return eig.front();
}

}  // namespace tbctl
