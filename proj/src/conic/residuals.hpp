#pragma once

#include "robustcbf/conic.hpp"

namespace robustcbf::conic::detail {

struct OptimalityMeasures {
  double primal_residual = 0.0;  // max(||Ax - b|| / max(1,||b||), ||Gx + s - h|| / max(1,||h||))
  double dual_residual = 0.0;    // ||Px + c + A'y + G'z|| / max(1,||c||)
  double primal_objective = 0.0;
  double dual_objective = 0.0;
  double complementarity = 0.0;  // s'z
};

OptimalityMeasures evaluate_point(const StandardForm& sf, const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                                  const Eigen::VectorXd& z, const Eigen::VectorXd& s);

}  // namespace robustcbf::conic::detail
