#pragma once

// Jordan-algebra operations and Nesterov-Todd scalings on a product cone.
// Internal to the interior-point solver.

#include "robustcbf/conic.hpp"

#include <vector>

namespace robustcbf::conic::detail {

/// Nesterov-Todd scaling W with W z = W^{-T} s = lambda.
///
/// Orthant rows: W = diag(d).
/// Second-order cones: W = beta * [w0 w1'; w1 I + w1 w1'/(1 + w0)], with
/// w'Jw = 1 (symmetric).
/// PSD blocks: W: V -> R'VR, so W^T: V -> RVR'.
struct NtScaling {
  Eigen::VectorXd d;
  std::vector<double> beta;
  std::vector<Eigen::VectorXd> w;
  std::vector<Eigen::MatrixXd> R;
  std::vector<Eigen::MatrixXd> Rinv;
  Eigen::VectorXd lambda;
  std::vector<Eigen::VectorXd> lambda_psd;  // eigenvalues of the diagonal PSD lambda blocks
};

enum class ScalingOp { W, Wt, Winv, Winvt };

NtScaling identity_scaling(const ConeDims& cones);
NtScaling nt_scaling(const ConeDims& cones, const Eigen::VectorXd& s, const Eigen::VectorXd& z);

void apply_scaling(const ConeDims& cones, const NtScaling& W, ScalingOp op, Eigen::Ref<Eigen::VectorXd> v);
void apply_scaling(const ConeDims& cones, const NtScaling& W, ScalingOp op, Eigen::MatrixXd& columns);

Eigen::VectorXd identity_element(const ConeDims& cones);
Eigen::VectorXd jordan_product(const ConeDims& cones, const Eigen::VectorXd& u, const Eigen::VectorXd& v);
/// Solves lambda o x = v for the scaled point held in W.
Eigen::VectorXd jordan_divide(const ConeDims& cones, const NtScaling& W, const Eigen::VectorXd& v);

/// Largest alpha >= 0 with x + alpha dx in K, for x in the interior. Infinity if unbounded.
double max_step(const ConeDims& cones, const Eigen::VectorXd& x, const Eigen::VectorXd& dx);

}  // namespace robustcbf::conic::detail
