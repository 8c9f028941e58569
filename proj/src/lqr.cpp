#include "robustcbf/sim.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <stdexcept>
#include <vector>

namespace robustcbf {

MatrixXd care_solution(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q, const MatrixXd& R) {
  const Index n = A.rows();
  if (A.cols() != n || B.rows() != n || Q.rows() != n || Q.cols() != n || R.rows() != B.cols() ||
      R.cols() != B.cols())
    throw std::invalid_argument("care_solution: inconsistent dimensions");
  Eigen::LLT<MatrixXd> rllt(R);
  if (rllt.info() != Eigen::Success) throw std::invalid_argument("care_solution: R must be positive definite");

  MatrixXd H(2 * n, 2 * n);
  H << A, -B * rllt.solve(B.transpose()), -Q, -A.transpose();
  Eigen::EigenSolver<MatrixXd> es(H);
  if (es.info() != Eigen::Success) throw std::runtime_error("care_solution: eigen decomposition failed");

  // the stable invariant subspace [X1; X2] gives X = X2 X1^{-1}
  Eigen::MatrixXcd V(2 * n, n);
  Index k = 0;
  for (Index i = 0; i < 2 * n; ++i) {
    if (es.eigenvalues()(i).real() < 0.0) {
      if (k == n) throw std::runtime_error("care_solution: Hamiltonian has too many stable eigenvalues");
      V.col(k++) = es.eigenvectors().col(i);
    }
  }
  if (k != n) throw std::runtime_error("care_solution: no stabilizing solution");
  const Eigen::MatrixXcd X1 = V.topRows(n);
  const Eigen::MatrixXcd X2 = V.bottomRows(n);
  Eigen::FullPivLU<Eigen::MatrixXcd> lu(X1);
  if (!lu.isInvertible()) throw std::runtime_error("care_solution: no stabilizing solution");
  const Eigen::MatrixXcd Xc = X1.transpose().fullPivLu().solve(X2.transpose()).transpose();
  MatrixXd X = Xc.real();
  X = 0.5 * (X + X.transpose());
  return X;
}

MatrixXd lqr_gain(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q, const MatrixXd& R) {
  const MatrixXd X = care_solution(A, B, Q, R);
  return R.llt().solve(B.transpose() * X);
}

void linearize(const ControlAffineSystem& system, const VectorXd& x, const VectorXd& u, MatrixXd& A, MatrixXd& B) {
  const Index n = system.n;
  A.resize(n, n);
  for (Index j = 0; j < n; ++j) {
    const double step = 1e-6 * std::max(1.0, std::abs(x(j)));
    VectorXd xp = x, xm = x;
    xp(j) += step;
    xm(j) -= step;
    A.col(j) = (system.dynamics(xp, u) - system.dynamics(xm, u)) / (2.0 * step);
  }
  B = system.g(x);
}

}  // namespace robustcbf
