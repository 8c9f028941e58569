#include "conic/cones.hpp"
#include "conic/residuals.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace robustcbf::conic {

namespace {

using detail::NtScaling;
using detail::ScalingOp;

// Scaled KKT system, with G~ = W^{-T} G and wdz = W dz:
//   [ P   A'  G~' ] [dx ]   [ r1          ]
//   [ A   0   0   ] [dy ] = [ r2          ]
//   [ G~  0   -I  ] [wdz]   [ W^{-T} r3   ]
// Small problems factor this augmented matrix directly. Problems with many
// more cone rows than variables eliminate wdz and factor the reduced
//   [ P + G~'G~  A' ; A  0 ]
// instead, which squares the conditioning of G~ but stays cheap.
class KktSystem {
 public:
  explicit KktSystem(const StandardForm& lp) : lp_(lp) {
    const Index n = lp_.c.size();
    const Index p = lp_.b.size();
    augmented_ = n + p + lp_.h.size() <= 400;
  }

  void factor(const NtScaling& W) {
    W_ = &W;
    Gt_ = lp_.G;
    detail::apply_scaling(lp_.cones, W, ScalingOp::Winvt, Gt_);
    const Index n = lp_.c.size();
    const Index p = lp_.b.size();
    const Index r = augmented_ ? lp_.h.size() : 0;
    K_.setZero(n + p + r, n + p + r);
    K_.topLeftCorner(n, n) = lp_.P;
    if (augmented_) {
      K_.block(0, n + p, n, r) = Gt_.transpose();
      K_.block(n + p, 0, r, n) = Gt_;
      K_.bottomRightCorner(r, r).diagonal().setConstant(-1.0);
    } else {
      K_.topLeftCorner(n, n) += Gt_.transpose() * Gt_;
    }
    K_.block(0, n, n, p) = lp_.A.transpose();
    K_.block(n, 0, p, n) = lp_.A;
    Eigen::MatrixXd Kreg = K_;
    const double diag = std::max(1.0, K_.diagonal().head(n).cwiseAbs().maxCoeff());
    const double delta = 1e-14 * diag;
    Kreg.diagonal().head(n).array() += delta;
    Kreg.diagonal().segment(n, p).array() -= delta;
    lu_.compute(Kreg);
  }

  void solve(const Eigen::VectorXd& r1, const Eigen::VectorXd& r2, const Eigen::VectorXd& r3, Eigen::VectorXd& dx,
             Eigen::VectorXd& dy, Eigen::VectorXd& wdz) const {
    const Index n = lp_.c.size();
    const Index p = lp_.b.size();
    const Index r = augmented_ ? lp_.h.size() : 0;
    Eigen::VectorXd rt3 = r3;
    detail::apply_scaling(lp_.cones, *W_, ScalingOp::Winvt, rt3);
    Eigen::VectorXd rhs(n + p + r);
    if (augmented_) {
      rhs << r1, r2, rt3;
    } else {
      rhs << r1 + Gt_.transpose() * rt3, r2;
    }
    Eigen::VectorXd sol = lu_.solve(rhs);
    for (int i = 0; i < 3; ++i) sol += lu_.solve(rhs - K_ * sol);
    dx = sol.head(n);
    dy = sol.segment(n, p);
    wdz = augmented_ ? Eigen::VectorXd(sol.tail(r)) : Eigen::VectorXd(Gt_ * dx - rt3);
  }

 private:
  const StandardForm& lp_;
  bool augmented_ = true;
  const NtScaling* W_ = nullptr;
  Eigen::MatrixXd Gt_;
  Eigen::MatrixXd K_;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
};

struct Direction {
  Eigen::VectorXd dx, dy, dz, ds, wdz, wds;  // wds = W^{-T} ds, wdz = W dz
  double dtau = 0.0;
  double dkappa = 0.0;
};

struct Iterate {
  Eigen::VectorXd x, y, z, s;
  double tau = 1.0;
  double kappa = 1.0;
};

double norm_or_zero(const Eigen::VectorXd& v) { return v.size() ? v.norm() : 0.0; }

}  // namespace

SolveReport solve(const ConicProblem& problem, const Tolerances& tol) {
  const StandardForm sf = problem.standard_form();
  const StandardForm& lp = sf;
  const ConeDims& K = lp.cones;
  const Index n = lp.c.size();
  const Index p = lp.b.size();
  const double nu = static_cast<double>(K.degree());

  SolveReport report;
  report.tolerances = tol;

  const double resx0 = std::max(1.0, norm_or_zero(lp.c));
  const double resy0 = std::max(1.0, norm_or_zero(lp.b));
  const double resz0 = std::max(1.0, norm_or_zero(lp.h));
  const Eigen::VectorXd e = detail::identity_element(K);

  KktSystem kkt(lp);
  Iterate it;

  // Starting point: least-norm primal and dual points shifted into the cone.
  {
    NtScaling I = detail::identity_scaling(K);
    kkt.factor(I);
    Eigen::VectorXd dx, dy, wdz;
    kkt.solve(Eigen::VectorXd::Zero(n), lp.b, lp.h, dx, dy, wdz);
    it.x = dx;
    it.s = -wdz;
    kkt.solve(-lp.c, Eigen::VectorXd::Zero(p), Eigen::VectorXd::Zero(lp.h.size()), dx, dy, wdz);
    it.y = dy;
    it.z = wdz;
    if (K.size() > 0) {
      const double ts = -cone_margin(K, it.s);
      if (ts >= -1e-8 * std::max(1.0, it.s.norm())) it.s += (1.0 + ts) * e;
      const double tz = -cone_margin(K, it.z);
      if (tz >= -1e-8 * std::max(1.0, it.z.norm())) it.z += (1.0 + tz) * e;
    }
  }

  auto finish_optimal = [&](const Iterate& pt) {
    report.status = SolveStatus::Optimal;
    report.x = pt.x / pt.tau;
    report.y = pt.y / pt.tau;
    report.z = pt.z / pt.tau;
    report.s = pt.s / pt.tau;
    const auto m = detail::evaluate_point(sf, report.x, report.y, report.z, report.s);
    report.primal_objective = m.primal_objective;
    report.dual_objective = m.dual_objective;
    report.gap = m.complementarity;
    report.primal_residual = m.primal_residual;
    report.dual_residual = m.dual_residual;
  };

  auto finish_infeasible = [&](const Iterate& pt) {
    report.status = SolveStatus::Infeasible;
    const Eigen::VectorXd& z = pt.z;
    const double scale = -(sf.h.dot(z) + (p ? sf.b.dot(pt.y) : 0.0));
    report.y = pt.y / scale;
    report.z = z / scale;
    report.x.resize(0);
    report.s.resize(0);
    report.dual_residual = norm_or_zero(sf.A.transpose() * report.y + sf.G.transpose() * report.z) / resx0;
  };

  auto finish_unbounded = [&](const Iterate& pt) {
    report.status = SolveStatus::Unbounded;
    const double scale = -sf.c.dot(pt.x);
    report.x = pt.x / scale;
    report.s = pt.s / scale;
    report.y.resize(0);
    report.z.resize(0);
    report.primal_residual = std::max(norm_or_zero(sf.A * report.x) / resy0,
                                      norm_or_zero(sf.G * report.x + report.s) / resz0);
  };

  struct Measures {
    double pres, dres, gap, relgap, objgap, pinfres, dinfres, hz_by, cx;
  };
  auto measure = [&](const Iterate& pt, const Eigen::VectorXd& rx, const Eigen::VectorXd& ry,
                     const Eigen::VectorXd& rz) {
    Measures m{};
    m.pres = std::max(norm_or_zero(ry) / resy0, norm_or_zero(rz) / resz0) / pt.tau;
    m.dres = norm_or_zero(rx) / resx0 / pt.tau;
    const double quad = 0.5 * pt.x.dot(lp.P * pt.x) / (pt.tau * pt.tau);
    const double pcost = quad + lp.c.dot(pt.x) / pt.tau;
    m.hz_by = lp.h.dot(pt.z) + (p ? lp.b.dot(pt.y) : 0.0);
    const double dcost = -quad - m.hz_by / pt.tau;
    // relative measures use the objective as posed, constant included, so
    // they agree with check_certificate
    const double scale = std::max(1.0, std::abs(pcost + lp.c0));
    m.objgap = std::abs(pcost - dcost) / scale;
    m.gap = pt.s.dot(pt.z) / (pt.tau * pt.tau);
    m.relgap = m.gap / scale;
    m.cx = lp.c.dot(pt.x);
    m.pinfres = std::numeric_limits<double>::infinity();
    if (m.hz_by < 0.0) {
      m.pinfres = norm_or_zero((p ? Eigen::VectorXd(lp.A.transpose() * pt.y) : Eigen::VectorXd::Zero(n)) +
                               lp.G.transpose() * pt.z) / resx0 / -m.hz_by;
    }
    m.dinfres = std::numeric_limits<double>::infinity();
    if (m.cx < 0.0) {
      m.dinfres = std::max({norm_or_zero(lp.A * pt.x) / resy0, norm_or_zero(lp.G * pt.x + pt.s) / resz0,
                            norm_or_zero(lp.P * pt.x) / resx0}) / -m.cx;
    }
    return m;
  };

  auto converged = [&](const Measures& m, double factor) {
    return m.pres <= factor * tol.feasibility && m.dres <= factor * tol.feasibility &&
           (m.gap <= factor * tol.absolute_gap || m.relgap <= factor * tol.relative_gap) &&
           m.objgap <= factor * std::max(tol.absolute_gap, tol.relative_gap);
  };

  Measures last{};
  for (int iter = 0; iter <= tol.max_iterations; ++iter) {
    report.iterations = iter;
    const Eigen::VectorXd rx =
        (p ? Eigen::VectorXd(lp.A.transpose() * it.y) : Eigen::VectorXd::Zero(n)) + lp.G.transpose() * it.z +
        lp.P * it.x + lp.c * it.tau;
    const Eigen::VectorXd ry = lp.b * it.tau - lp.A * it.x;
    const Eigen::VectorXd rz = it.s + lp.G * it.x - lp.h * it.tau;
    const double xpx = it.x.dot(lp.P * it.x) / it.tau;
    const double rtau = it.kappa + lp.c.dot(it.x) + (p ? lp.b.dot(it.y) : 0.0) + lp.h.dot(it.z) + xpx;

    const Measures m = measure(it, rx, ry, rz);
    last = m;
    if (!std::isfinite(m.pres) || !std::isfinite(m.dres) || !std::isfinite(m.gap)) break;
    if (converged(m, 1.0)) {
      finish_optimal(it);
      return report;
    }
    if (m.pinfres <= tol.feasibility) {
      finish_infeasible(it);
      return report;
    }
    if (m.dinfres <= tol.feasibility) {
      finish_unbounded(it);
      return report;
    }
    if (iter == tol.max_iterations) {
      finish_optimal(it);
      report.status = SolveStatus::MaxIterations;
      return report;
    }

    NtScaling W;
    try {
      W = detail::nt_scaling(K, it.s, it.z);
    } catch (...) {
      break;
    }
    if (!W.lambda.allFinite()) break;
    kkt.factor(W);

    const double mu = (it.s.dot(it.z) + it.tau * it.kappa) / (nu + 1.0);

    Eigen::VectorXd xc, yc, wzc;
    kkt.solve(-lp.c, lp.b, lp.h, xc, yc, wzc);
    Eigen::VectorXd zc = wzc;
    detail::apply_scaling(K, W, ScalingOp::Winv, zc);
    // Linearizing x'Px / tau in the tau equation turns c into c + 2P x / tau.
    const Eigen::VectorXd c_tau = lp.c + 2.0 * (lp.P * it.x) / it.tau;
    const double denom =
        c_tau.dot(xc) + (p ? lp.b.dot(yc) : 0.0) + lp.h.dot(zc) - xpx / it.tau - it.kappa / it.tau;

    auto direction = [&](double gamma, const Eigen::VectorXd& d_s, double d_kappa) {
      Direction d;
      const Eigen::VectorXd ds_div = detail::jordan_divide(K, W, d_s);
      Eigen::VectorXd wt_ds = ds_div;
      detail::apply_scaling(K, W, ScalingOp::Wt, wt_ds);
      const double keep = 1.0 - gamma;
      Eigen::VectorXd xa, ya, wza;
      kkt.solve(-keep * rx, keep * ry, -keep * rz - wt_ds, xa, ya, wza);
      Eigen::VectorXd za = wza;
      detail::apply_scaling(K, W, ScalingOp::Winv, za);
      d.dtau = (-keep * rtau - d_kappa / it.tau - (c_tau.dot(xa) + (p ? lp.b.dot(ya) : 0.0) + lp.h.dot(za))) / denom;
      d.dx = xa + d.dtau * xc;
      d.dy = ya + d.dtau * yc;
      d.wdz = wza + d.dtau * wzc;
      d.dz = za + d.dtau * zc;
      // ds from the linear equation keeps the primal residual exactly on track.
      d.ds = -keep * rz - lp.G * d.dx + lp.h * d.dtau;
      d.wds = d.ds;
      detail::apply_scaling(K, W, ScalingOp::Winvt, d.wds);
      d.dkappa = (d_kappa - it.kappa * d.dtau) / it.tau;
      return d;
    };

    auto step_to_boundary = [&](const Direction& d) {
      double a = std::min(detail::max_step(K, W.lambda, d.wds), detail::max_step(K, W.lambda, d.wdz));
      if (d.dtau < 0.0) a = std::min(a, -it.tau / d.dtau);
      if (d.dkappa < 0.0) a = std::min(a, -it.kappa / d.dkappa);
      return a;
    };

    const Eigen::VectorXd lam_sq = detail::jordan_product(K, W.lambda, W.lambda);
    const Direction aff = direction(0.0, -lam_sq, -it.tau * it.kappa);
    const double alpha_aff = std::min(1.0, step_to_boundary(aff));
    const double sigma = std::pow(1.0 - alpha_aff, 3);

    const Eigen::VectorXd d_s = -lam_sq + sigma * mu * e - detail::jordan_product(K, aff.wds, aff.wdz);
    const double d_k = -it.tau * it.kappa + sigma * mu - aff.dtau * aff.dkappa;
    const Direction dir = direction(sigma, d_s, d_k);
    const double alpha = std::min(1.0, 0.99 * step_to_boundary(dir));
    if (!(alpha > 1e-14) || !dir.dx.allFinite() || !std::isfinite(dir.dtau)) break;

    it.x += alpha * dir.dx;
    it.y += alpha * dir.dy;
    it.z += alpha * dir.dz;
    it.s += alpha * dir.ds;
    it.tau += alpha * dir.dtau;
    it.kappa += alpha * dir.dkappa;
  }

  // Stalled before reaching the tolerances: accept only what a certificate check would.
  if (std::isfinite(last.pres) && converged(last, 10.0)) {
    finish_optimal(it);
    if (check_certificate(problem, report)) return report;
  }
  if (last.pinfres <= 10.0 * tol.feasibility) {
    finish_infeasible(it);
    return report;
  }
  finish_optimal(it);
  report.status = SolveStatus::NumericalFailure;
  return report;
}

}  // namespace robustcbf::conic
