#include "conic/residuals.hpp"

#include <algorithm>
#include <cmath>

namespace robustcbf::conic {

namespace detail {

OptimalityMeasures evaluate_point(const StandardForm& sf, const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                                  const Eigen::VectorXd& z, const Eigen::VectorXd& s) {
  OptimalityMeasures m;
  const double b0 = std::max(1.0, sf.b.size() ? sf.b.norm() : 0.0);
  const double h0 = std::max(1.0, sf.h.size() ? sf.h.norm() : 0.0);
  const double c0 = std::max(1.0, sf.c.norm());
  const double eq = sf.b.size() ? (sf.A * x - sf.b).norm() : 0.0;
  const double in = sf.h.size() ? (sf.G * x + s - sf.h).norm() : 0.0;
  m.primal_residual = std::max(eq / b0, in / h0);
  Eigen::VectorXd grad = sf.P * x + sf.c;
  if (sf.b.size()) grad += sf.A.transpose() * y;
  if (sf.h.size()) grad += sf.G.transpose() * z;
  m.dual_residual = grad.norm() / c0;
  const double quad = 0.5 * x.dot(sf.P * x);
  m.primal_objective = quad + sf.c.dot(x) + sf.c0;
  m.dual_objective = -quad + sf.c0;
  if (sf.b.size()) m.dual_objective -= sf.b.dot(y);
  if (sf.h.size()) m.dual_objective -= sf.h.dot(z);
  m.complementarity = sf.h.size() ? s.dot(z) : 0.0;
  return m;
}

}  // namespace detail

bool check_certificate(const ConicProblem& problem, const SolveReport& report) {
  const StandardForm sf = problem.standard_form();
  const Tolerances& tol = report.tolerances;
  const double feas = 10.0 * tol.feasibility;
  const Index n = sf.c.size();
  const Index p = sf.b.size();
  const Index rows = sf.h.size();
  const double c_scale = std::max(1.0, sf.c.norm());

  auto in_cone = [&](const Eigen::VectorXd& v) {
    if (v.size() != rows) return false;
    if (rows == 0) return true;
    if (!v.allFinite()) return false;
    return cone_margin(sf.cones, v) >= -feas * std::max(1.0, v.norm());
  };

  switch (report.status) {
    case SolveStatus::Optimal: {
      if (report.x.size() != n || report.y.size() != p || !report.x.allFinite() || !report.y.allFinite()) return false;
      if (!in_cone(report.s) || !in_cone(report.z)) return false;
      const auto m = detail::evaluate_point(sf, report.x, report.y, report.z, report.s);
      if (m.primal_residual > feas || m.dual_residual > feas) return false;
      const double scale = std::max(1.0, std::abs(m.primal_objective));
      const double allowed = 10.0 * std::max(tol.absolute_gap, tol.relative_gap * scale);
      if (std::abs(m.complementarity) > allowed) return false;
      return std::abs(m.primal_objective - m.dual_objective) <= allowed + feas * scale;
    }
    case SolveStatus::Infeasible: {
      if (report.y.size() != p || !report.y.allFinite() || !in_cone(report.z)) return false;
      double hz_by = rows ? sf.h.dot(report.z) : 0.0;
      Eigen::VectorXd ray = Eigen::VectorXd::Zero(n);
      if (p) {
        hz_by += sf.b.dot(report.y);
        ray += sf.A.transpose() * report.y;
      }
      if (rows) ray += sf.G.transpose() * report.z;
      if (!(hz_by < 0.0)) return false;
      return ray.norm() / c_scale <= feas * -hz_by;
    }
    case SolveStatus::Unbounded: {
      if (report.x.size() != n || !report.x.allFinite() || !in_cone(report.s)) return false;
      const double cx = sf.c.dot(report.x);
      if (!(cx < 0.0)) return false;
      const double bound = feas * -cx;
      if (p && (sf.A * report.x).norm() / std::max(1.0, sf.b.norm()) > bound) return false;
      if (rows && (sf.G * report.x + report.s).norm() / std::max(1.0, sf.h.norm()) > bound) return false;
      return (sf.P * report.x).norm() / c_scale <= bound;
    }
    default:
      return false;
  }
}

}  // namespace robustcbf::conic
