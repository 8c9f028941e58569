#pragma once

// Safety filters: the nominal CBF-QP, the R-CBF and MR-CBF baselines, and the
// robust filters that replace  min_{(a,b) in P} a'u + b >= 0  by the dual of
// the inner minimization (an LP for polytopes, an SDP for ellipsoids).
//
// All filters minimize ||u - k_d||^2 over u in U.

#include "robustcbf/conic.hpp"
#include "robustcbf/systems.hpp"
#include "robustcbf/uncertainty.hpp"

#include <limits>
#include <string>

namespace robustcbf {

enum class FilterStatus { Feasible, Infeasible, SolverFailure };

std::string to_string(FilterStatus status);

struct FilterResult {
  FilterStatus status = FilterStatus::SolverFailure;
  VectorXd u;            // empty unless Feasible
  VectorXd multipliers;  // dual variables of the robust constraint (polytope rows, sample rows)
  // Ellipsoid SDP only.
  double lambda = std::numeric_limits<double>::quiet_NaN();
  double s = std::numeric_limits<double>::quiet_NaN();
  double t = std::numeric_limits<double>::quiet_NaN();
  /// Worst-case value of the filter's own constraint at u (>= 0 when safe).
  double constraint_value = std::numeric_limits<double>::quiet_NaN();

  conic::SolveStatus solver_status = conic::SolveStatus::NumericalFailure;
  double objective = 0.0;
  double gap = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  int iterations = 0;
  /// check_certificate passed on the underlying solve.
  bool certified = false;

  bool feasible() const { return status == FilterStatus::Feasible; }
};

struct RCbfParams {
  double gamma1 = 0.05;
  double gamma2 = 0.5;
};

struct MrCbfParams {
  double epsilon = 0.0;  // sup ||x - xhat||
  double L_lfh = 0.0;    // Lipschitz constant of L_f h
  double L_alpha_h = 0.0;
  double L_lgh = 0.0;
};

/// Lipschitz constants of L_f h, alpha(h) and L_g h over {xhat} + B from
/// lipschitz_estimate, with epsilon the largest norm in B.
MrCbfParams mr_cbf_params(const ControlAffineSystem& system, const Cbf& cbf, const VectorXd& xhat, const ErrorSet& B,
                          int per_axis = 0);

/// a'u + b >= 0
FilterResult standard_cbf_qp(const CbfCoefficients& c, const VectorXd& k_d, const Boxd& U);
FilterResult standard_cbf_qp(const ControlAffineSystem& system, const Cbf& cbf, const VectorXd& xhat,
                             const VectorXd& k_d);

/// a'u + b >= gamma1 ||a|| + gamma2 ||a||^2
FilterResult r_cbf_qp(const CbfCoefficients& c, const VectorXd& k_d, const Boxd& U, const RCbfParams& params);
FilterResult r_cbf_qp(const ControlAffineSystem& system, const Cbf& cbf, const VectorXd& xhat, const VectorXd& k_d,
                      const RCbfParams& params);

/// a'u + b >= eps (L_lfh + L_alpha_h + L_lgh ||u||), a second-order cone.
FilterResult mr_cbf_qp(const CbfCoefficients& c, const VectorXd& k_d, const Boxd& U, const MrCbfParams& params);
FilterResult mr_cbf_qp(const ControlAffineSystem& system, const Cbf& cbf, const VectorXd& xhat, const VectorXd& k_d,
                       const MrCbfParams& params);

struct InnerMin {
  double value = std::numeric_limits<double>::quiet_NaN();
  conic::SolveStatus status = conic::SolveStatus::NumericalFailure;
  bool certified = false;
};

/// m(u) = min { a'u + b : (a, b) in set }.
/// Polytope: the LP over the set (throws std::invalid_argument if unbounded).
/// Ellipsoid: closed form c'eta0 - sqrt(kappa c'P^{-1}c), c = (u, 1).
InnerMin inner_min_primal(const VectorXd& u, const UncertaintyPolytope& set);
InnerMin inner_min_primal(const VectorXd& u, const UncertaintyEllipsoid& set);

/// Dual of the inner problem. Polytope: max -d'lam s.t. C'lam + c = 0, lam >= 0;
/// an Infeasible status means the primal is unbounded below. Ellipsoid:
///   max r lam - t  s.t.  [4t, (c + lam q)'; c + lam q, lam P] PSD, lam >= 0.
InnerMin inner_min_dual(const VectorXd& u, const UncertaintyPolytope& set);
InnerMin inner_min_dual(const VectorXd& u, const UncertaintyEllipsoid& set);

/// min ||u - k_d||^2 over (u, lam): d'lam <= 0, C'lam + (u, 1) = 0, lam >= 0, u in U.
FilterResult robust_dual_qp(const VectorXd& k_d, const UncertaintyPolytope& set, const Boxd& U);

/// min s over (u, lam, s, t):
///   [4t, (c + lam q)'; c + lam q, lam P] PSD,  [s, (u - k_d)'; u - k_d, I] PSD,
///   r lam - t >= 0,  lam >= 0,  u in U.
FilterResult robust_dual_sdp(const VectorXd& k_d, const UncertaintyEllipsoid& set, const Boxd& U);

/// One constraint a_j'u + b_j >= 0 per column of points ((m + 1) x N).
FilterResult scenario_oracle(const VectorXd& k_d, const MatrixXd& points, const Boxd& U);

/// The decoupled approach: a and b range independently over the intervals
/// spanned by the points, and the robust QP is solved over that box.
FilterResult decoupled_box_qp(const VectorXd& k_d, const MatrixXd& points, const Boxd& U);

/// Axis-aligned box {lower <= eta <= upper} as a polytope.
UncertaintyPolytope box_polytope(const VectorXd& lower, const VectorXd& upper);

}  // namespace robustcbf
