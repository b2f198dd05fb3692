#pragma once

#include <Eigen/Dense>

#include <vector>

namespace tbctl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Discrete-time LQR data with a state/input cross weight:
/// minimize sum x'Qw x + 2 x'Nw u + u'Rw u subject to x+ = A x + B u.
struct RiccatiProblem {
  Matrix A;
  Matrix B;
  Matrix Qw;
  Matrix Rw;
  Matrix Nw;
};

struct RiccatiSolution {
  Matrix P;
  Matrix K;  // u = K x
  int iterations = 0;
  double residual = 0.0;  // max |P_{k+1} - P_k| at termination
};

inline constexpr double kRiccatiTol = 1e-10;
inline constexpr int kRiccatiMaxIter = 10'000;

/// Value iteration on the Riccati recursion starting from P0 = Qw.
/// Throws NonConvergent when the iteration diverges or stalls and
/// IllConditioned when Rw + B'PB cannot be inverted reliably.
RiccatiSolution solve_riccati(const RiccatiProblem& p, double tol = kRiccatiTol,
                              int max_iter = kRiccatiMaxIter);

/// Feedback associated with a given P: K = -(Rw + B'PB)^{-1} (Nw' + B'PA).
Matrix riccati_gain(const RiccatiProblem& p, const Matrix& P);

/// Acl' P Acl - P + W, symmetrized.
Matrix lyapunov_residual(const Matrix& Acl, const Matrix& P, const Matrix& W);

/// All eigenvalues of a symmetric matrix, ascending.
std::vector<double> symmetric_eigenvalues(const Matrix& M);

double max_eigenvalue_symmetric(const Matrix& M);
double min_eigenvalue_symmetric(const Matrix& M);

/// max|M - M'| <= 1e-12 * max|M|.
bool is_symmetric(const Matrix& M);
Matrix symmetrize(const Matrix& M);

double max_abs(const Matrix& M);

/// x' W x
inline double quad_form(const Vector& x, const Matrix& W) { return x.dot(W * x); }

}  // namespace tbctl
