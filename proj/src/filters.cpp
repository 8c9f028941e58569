#include "robustcbf/filters.hpp"

#include <cmath>
#include <stdexcept>

namespace robustcbf {

namespace {

using conic::ConicProblem;
using conic::SolveStatus;

void require_dims(const VectorXd& k_d, const Boxd& U, Index m) {
  if (k_d.size() != m) throw std::invalid_argument("desired input has the wrong dimension");
  if (U.dim() != m) throw std::invalid_argument("input bounds have the wrong dimension");
  if (!k_d.allFinite()) throw std::invalid_argument("desired input is not finite");
  if ((U.lower.array() > U.upper.array()).any()) throw std::invalid_argument("input bounds are empty");
}

// ||u - k_d||^2 on the first m of n variables.
void distance_objective(ConicProblem& prob, const VectorXd& k_d) {
  const Index n = prob.num_vars();
  const Index m = k_d.size();
  MatrixXd P = MatrixXd::Zero(n, n);
  P.topLeftCorner(m, m).diagonal().setConstant(2.0);
  VectorXd c = VectorXd::Zero(n);
  c.head(m) = -2.0 * k_d;
  prob.set_objective(P, c, k_d.squaredNorm());
}

// lower <= u <= upper for the finite entries, u being the first m variables.
void input_bounds(ConicProblem& prob, const Boxd& U) {
  const Index n = prob.num_vars();
  for (Index i = 0; i < U.dim(); ++i) {
    if (std::isfinite(U.upper(i))) {
      MatrixXd G = MatrixXd::Zero(1, n);
      G(0, i) = 1.0;
      prob.add_inequalities(G, VectorXd::Constant(1, U.upper(i)));
    }
    if (std::isfinite(U.lower(i))) {
      MatrixXd G = MatrixXd::Zero(1, n);
      G(0, i) = -1.0;
      prob.add_inequalities(G, VectorXd::Constant(1, -U.lower(i)));
    }
  }
}

FilterResult finish(const ConicProblem& prob, const conic::SolveReport& rep, const Boxd& U) {
  FilterResult out;
  out.solver_status = rep.status;
  out.objective = rep.primal_objective;
  out.gap = rep.gap;
  out.primal_residual = rep.primal_residual;
  out.dual_residual = rep.dual_residual;
  out.iterations = rep.iterations;
  const Index m = U.dim();
  switch (rep.status) {
    case SolveStatus::Optimal:
      out.certified = conic::check_certificate(prob, rep);
      out.status = FilterStatus::Feasible;
      // interior-point iterates sit within the tolerance of the box
      out.u = U.clamp(rep.x.head(m));
      break;
    case SolveStatus::Infeasible:
      out.certified = conic::check_certificate(prob, rep);
      out.status = out.certified ? FilterStatus::Infeasible : FilterStatus::SolverFailure;
      break;
    default:
      out.status = FilterStatus::SolverFailure;
      break;
  }
  return out;
}

// Single linear constraint a'u + b >= rhs.
FilterResult halfspace_qp(const VectorXd& a, double b, double rhs, const VectorXd& k_d, const Boxd& U) {
  const Index m = a.size();
  require_dims(k_d, U, m);
  ConicProblem prob(m);
  distance_objective(prob, k_d);
  prob.add_inequalities(-a.transpose(), VectorXd::Constant(1, b - rhs));
  input_bounds(prob, U);
  FilterResult out = finish(prob, conic::solve(prob), U);
  if (out.feasible()) {
    out.constraint_value = a.dot(out.u) + b - rhs;
    out.multipliers = VectorXd::Zero(0);
  }
  return out;
}

double max_norm(const ErrorSet& B) { return B.kind == ErrorSet::Kind::Box ? B.half_widths.norm() : B.radius; }

}  // namespace

std::string to_string(FilterStatus status) {
  switch (status) {
    case FilterStatus::Feasible: return "Feasible";
    case FilterStatus::Infeasible: return "Infeasible";
    case FilterStatus::SolverFailure: return "SolverFailure";
  }
  return "Unknown";
}

UncertaintyPolytope box_polytope(const VectorXd& lower, const VectorXd& upper) {
  if (lower.size() != upper.size() || lower.size() == 0) throw std::invalid_argument("box bounds have inconsistent sizes");
  const Index k = lower.size();
  UncertaintyPolytope P;
  P.C.resize(2 * k, k);
  P.C << MatrixXd::Identity(k, k), -MatrixXd::Identity(k, k);
  P.d.resize(2 * k);
  P.d << upper, -lower;
  return P;
}

MrCbfParams mr_cbf_params(const ControlAffineSystem& system, const Cbf& cbf, const VectorXd& xhat, const ErrorSet& B,
                          int per_axis) {
  const int k = per_axis > 0 ? per_axis : grid_resolution(system.n, 4000);
  MrCbfParams p;
  p.epsilon = max_norm(B);
  if (B.is_point()) return p;
  p.L_lfh = lipschitz_estimate(
      [&](const VectorXd& x) { return VectorXd::Constant(1, cbf.grad(x).dot(system.f(x))); }, xhat, B, k);
  p.L_alpha_h = lipschitz_estimate([&](const VectorXd& x) { return VectorXd::Constant(1, cbf.alpha(cbf.h(x))); },
                                   xhat, B, k);
  p.L_lgh = lipschitz_estimate([&](const VectorXd& x) { return VectorXd(system.g(x).transpose() * cbf.grad(x)); },
                               xhat, B, k);
  return p;
}

FilterResult standard_cbf_qp(const CbfCoefficients& c, const VectorXd& k_d, const Boxd& U) {
  return halfspace_qp(c.a, c.b, 0.0, k_d, U);
}

FilterResult standard_cbf_qp(const ControlAffineSystem& system, const Cbf& cbf, const VectorXd& xhat,
                             const VectorXd& k_d) {
  return standard_cbf_qp(coefficients(system, cbf, xhat), k_d, system.input_bounds);
}

FilterResult r_cbf_qp(const CbfCoefficients& c, const VectorXd& k_d, const Boxd& U, const RCbfParams& params) {
  if (!(params.gamma1 >= 0.0) || !(params.gamma2 >= 0.0)) throw std::invalid_argument("R-CBF gains must be non-negative");
  const double na = c.a.norm();
  return halfspace_qp(c.a, c.b, params.gamma1 * na + params.gamma2 * na * na, k_d, U);
}

FilterResult r_cbf_qp(const ControlAffineSystem& system, const Cbf& cbf, const VectorXd& xhat, const VectorXd& k_d,
                      const RCbfParams& params) {
  return r_cbf_qp(coefficients(system, cbf, xhat), k_d, system.input_bounds, params);
}

FilterResult mr_cbf_qp(const CbfCoefficients& c, const VectorXd& k_d, const Boxd& U, const MrCbfParams& params) {
  const double vals[] = {params.epsilon, params.L_lfh, params.L_alpha_h, params.L_lgh};
  for (double v : vals) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("MR-CBF parameters must be finite and non-negative");
  }
  const Index m = c.a.size();
  require_dims(k_d, U, m);
  const double shift = params.epsilon * (params.L_lfh + params.L_alpha_h);
  const double w = params.epsilon * params.L_lgh;
  ConicProblem prob(m);
  distance_objective(prob, k_d);
  // (a'u + b - shift, w u) in Q
  MatrixXd G(m + 1, m);
  G.row(0) = -c.a.transpose();
  G.bottomRows(m) = -w * MatrixXd::Identity(m, m);
  VectorXd h = VectorXd::Zero(m + 1);
  h(0) = c.b - shift;
  prob.add_second_order_cone(G, h);
  input_bounds(prob, U);
  FilterResult out = finish(prob, conic::solve(prob), U);
  if (out.feasible()) out.constraint_value = c.a.dot(out.u) + c.b - shift - w * out.u.norm();
  return out;
}

FilterResult mr_cbf_qp(const ControlAffineSystem& system, const Cbf& cbf, const VectorXd& xhat, const VectorXd& k_d,
                       const MrCbfParams& params) {
  return mr_cbf_qp(coefficients(system, cbf, xhat), k_d, system.input_bounds, params);
}

InnerMin inner_min_primal(const VectorXd& u, const UncertaintyPolytope& set) {
  if (u.size() + 1 != set.dim()) throw std::invalid_argument("input and set dimensions differ");
  VectorXd c(set.dim());
  c << u, 1.0;
  ConicProblem lp(set.dim());
  lp.set_objective(c);
  lp.add_inequalities(set.C, set.d);
  const auto rep = conic::solve(lp);
  if (rep.status == SolveStatus::Unbounded) throw std::invalid_argument("inner minimization is unbounded; the set is not bounded");
  if (rep.status == SolveStatus::Infeasible) throw std::invalid_argument("inner minimization over an empty set");
  InnerMin out;
  out.status = rep.status;
  out.value = rep.primal_objective;
  out.certified = rep.status == SolveStatus::Optimal && conic::check_certificate(lp, rep);
  return out;
}

InnerMin inner_min_primal(const VectorXd& u, const UncertaintyEllipsoid& set) {
  if (u.size() + 1 != set.dim()) throw std::invalid_argument("input and set dimensions differ");
  const Eigen::LLT<MatrixXd> llt(set.P);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("ellipsoid P is not positive definite");
  VectorXd c(set.dim());
  c << u, 1.0;
  const VectorXd eta0 = -llt.solve(set.q) / 2.0;
  const double kappa = set.q.dot(llt.solve(set.q)) / 4.0 - set.r;
  if (kappa < 0.0) throw std::invalid_argument("ellipsoid is empty");
  InnerMin out;
  out.value = c.dot(eta0) - std::sqrt(kappa * c.dot(llt.solve(c)));
  out.status = SolveStatus::Optimal;
  out.certified = true;
  return out;
}

InnerMin inner_min_dual(const VectorXd& u, const UncertaintyPolytope& set) {
  if (u.size() + 1 != set.dim()) throw std::invalid_argument("input and set dimensions differ");
  const Index p = set.facets();
  VectorXd c(set.dim());
  c << u, 1.0;
  // min d'lam  s.t.  C'lam = -c, lam >= 0;   m* = -optimum
  ConicProblem lp(p);
  lp.set_objective(set.d);
  lp.add_equalities(set.C.transpose(), -c);
  lp.add_inequalities(-MatrixXd::Identity(p, p), VectorXd::Zero(p));
  const auto rep = conic::solve(lp);
  InnerMin out;
  out.status = rep.status;
  if (rep.status == SolveStatus::Optimal) out.value = -rep.primal_objective;
  else if (rep.status == SolveStatus::Infeasible) out.value = -std::numeric_limits<double>::infinity();
  out.certified = (rep.status == SolveStatus::Optimal || rep.status == SolveStatus::Infeasible) &&
                  conic::check_certificate(lp, rep);
  return out;
}

namespace {

// LMI coefficient of [4t, (c + lam q)'; c + lam q, lam P] for variable
// vectors laid out as (u_1..u_m, lam, ...). Returns F0 and fills F for u and lam.
MatrixXd schur_lmi_constant(Index k) {
  MatrixXd F0 = MatrixXd::Zero(k + 1, k + 1);
  F0(k, 0) = F0(0, k) = 1.0;  // last entry of c = (u, 1)
  return F0;
}

MatrixXd unit_sym(Index side, Index i, Index j, double v = 1.0) {
  MatrixXd F = MatrixXd::Zero(side, side);
  F(i, j) = v;
  F(j, i) = v;
  return F;
}

// Same set with P scaled to unit spectral norm. A tight ellipsoid has P of
// order 1/radius^2, which would otherwise push lam towards zero and the LMI
// data towards 1e12. Returns the scale so lam can be mapped back.
double unit_scaled(const UncertaintyEllipsoid& set, UncertaintyEllipsoid& out) {
  const double sigma = Eigen::SelfAdjointEigenSolver<MatrixXd>(set.P, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("ellipsoid matrix must be positive definite");
  out = {set.P / sigma, set.q / sigma, set.r / sigma};
  return sigma;
}

MatrixXd lambda_block(const UncertaintyEllipsoid& set) {
  const Index k = set.dim();
  MatrixXd F = MatrixXd::Zero(k + 1, k + 1);
  F.block(1, 0, k, 1) = set.q;
  F.block(0, 1, 1, k) = set.q.transpose();
  F.bottomRightCorner(k, k) = set.P;
  return F;
}

}  // namespace

InnerMin inner_min_dual(const VectorXd& u, const UncertaintyEllipsoid& original) {
  const Index k = original.dim();
  if (u.size() + 1 != k) throw std::invalid_argument("input and set dimensions differ");
  UncertaintyEllipsoid set;
  unit_scaled(original, set);
  // variables (lam, t): min t - r lam
  ConicProblem sdp(2);
  sdp.set_objective(VectorXd{{-set.r, 1.0}});
  MatrixXd F0 = schur_lmi_constant(k);
  for (Index i = 0; i < u.size(); ++i) F0 += unit_sym(k + 1, 1 + i, 0, u(i));
  sdp.add_lmi(F0, {lambda_block(set), unit_sym(k + 1, 0, 0, 4.0)});
  sdp.add_inequalities(MatrixXd{{-1.0, 0.0}}, VectorXd::Zero(1));
  const auto rep = conic::solve(sdp);
  InnerMin out;
  out.status = rep.status;
  if (rep.status == SolveStatus::Optimal) out.value = -rep.primal_objective;
  out.certified = rep.status == SolveStatus::Optimal && conic::check_certificate(sdp, rep);
  return out;
}

FilterResult robust_dual_qp(const VectorXd& k_d, const UncertaintyPolytope& set, const Boxd& U) {
  const Index k = set.dim();
  const Index m = k - 1;
  const Index p = set.facets();
  require_dims(k_d, U, m);
  if (set.d.size() != p || p == 0) throw std::invalid_argument("polytope has inconsistent data");
  // variables (u, lam)
  ConicProblem prob(m + p);
  distance_objective(prob, k_d);
  MatrixXd Aeq = MatrixXd::Zero(k, m + p);
  Aeq.topLeftCorner(m, m).setIdentity();
  Aeq.rightCols(p) = set.C.transpose();
  VectorXd beq = VectorXd::Zero(k);
  beq(m) = -1.0;
  prob.add_equalities(Aeq, beq);
  MatrixXd G = MatrixXd::Zero(p + 1, m + p);
  G.row(0).tail(p) = set.d.transpose();
  G.bottomRightCorner(p, p) = -MatrixXd::Identity(p, p);
  prob.add_inequalities(G, VectorXd::Zero(p + 1));
  input_bounds(prob, U);
  const auto rep = conic::solve(prob);
  FilterResult out = finish(prob, rep, U);
  if (out.feasible()) {
    out.multipliers = rep.x.tail(p);
    out.constraint_value = inner_min_primal(out.u, set).value;
  }
  return out;
}

FilterResult robust_dual_sdp(const VectorXd& k_d, const UncertaintyEllipsoid& original, const Boxd& U) {
  const Index k = original.dim();
  const Index m = k - 1;
  require_dims(k_d, U, m);
  if (original.P.cols() != k || original.q.size() != k) throw std::invalid_argument("ellipsoid has inconsistent data");
  UncertaintyEllipsoid set;
  const double sigma = unit_scaled(original, set);
  // variables (u_1..u_m, lam, s, t)
  const Index n = m + 3;
  const Index il = m, is = m + 1, it = m + 2;
  ConicProblem prob(n);
  VectorXd cost = VectorXd::Zero(n);
  cost(is) = 1.0;
  prob.set_objective(cost);

  std::vector<MatrixXd> F1(n, MatrixXd::Zero(k + 1, k + 1));
  for (Index i = 0; i < m; ++i) F1[i] = unit_sym(k + 1, 1 + i, 0);
  F1[il] = lambda_block(set);
  F1[it] = unit_sym(k + 1, 0, 0, 4.0);
  prob.add_lmi(schur_lmi_constant(k), F1);

  // [s, (u - k_d)'; u - k_d, I]
  MatrixXd C0 = MatrixXd::Identity(m + 1, m + 1);
  C0(0, 0) = 0.0;
  C0.block(1, 0, m, 1) = -k_d;
  C0.block(0, 1, 1, m) = -k_d.transpose();
  std::vector<MatrixXd> F2(n, MatrixXd::Zero(m + 1, m + 1));
  for (Index i = 0; i < m; ++i) F2[i] = unit_sym(m + 1, 1 + i, 0);
  F2[is] = unit_sym(m + 1, 0, 0);
  prob.add_lmi(C0, F2);

  // t - r lam <= 0,  -lam <= 0
  MatrixXd G = MatrixXd::Zero(2, n);
  G(0, il) = -set.r;
  G(0, it) = 1.0;
  G(1, il) = -1.0;
  prob.add_inequalities(G, VectorXd::Zero(2));
  input_bounds(prob, U);

  const auto rep = conic::solve(prob);
  FilterResult out = finish(prob, rep, U);
  if (out.feasible()) {
    out.lambda = rep.x(il) / sigma;
    out.s = rep.x(is);
    out.t = rep.x(it);
    out.multipliers = VectorXd::Constant(1, out.lambda);
    out.constraint_value = inner_min_primal(out.u, original).value;
  }
  return out;
}

FilterResult scenario_oracle(const VectorXd& k_d, const MatrixXd& points, const Boxd& U) {
  const Index m = points.rows() - 1;
  if (points.cols() == 0 || m < 1) throw std::invalid_argument("scenario oracle needs a non-empty point list");
  require_dims(k_d, U, m);
  ConicProblem prob(m);
  distance_objective(prob, k_d);
  // -a_j'u <= b_j
  prob.add_inequalities(-points.topRows(m).transpose(), points.row(m).transpose());
  input_bounds(prob, U);
  const auto rep = conic::solve(prob);
  FilterResult out = finish(prob, rep, U);
  if (out.feasible()) {
    VectorXd c(m + 1);
    c << out.u, 1.0;
    out.constraint_value = (c.transpose() * points).minCoeff();
    out.multipliers = rep.z.head(points.cols());
  }
  return out;
}

FilterResult decoupled_box_qp(const VectorXd& k_d, const MatrixXd& points, const Boxd& U) {
  if (points.cols() == 0) throw std::invalid_argument("decoupled filter needs points");
  return robust_dual_qp(k_d, box_polytope(points.rowwise().minCoeff(), points.rowwise().maxCoeff()), U);
}

}  // namespace robustcbf
