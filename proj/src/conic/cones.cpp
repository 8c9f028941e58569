#include "conic/cones.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace robustcbf::conic {

Index ConeDims::size() const {
  Index total = nonneg;
  for (Index k : soc) total += k;
  for (Index k : psd) total += k * (k + 1) / 2;
  return total;
}

Index ConeDims::degree() const {
  Index total = nonneg + static_cast<Index>(soc.size());
  for (Index k : psd) total += k;
  return total;
}

Eigen::VectorXd svec(const Eigen::MatrixXd& S) {
  const Index k = S.rows();
  Eigen::VectorXd v(k * (k + 1) / 2);
  Index idx = 0;
  for (Index j = 0; j < k; ++j) {
    for (Index i = j; i < k; ++i) {
      v(idx++) = (i == j) ? S(i, j) : M_SQRT2 * S(i, j);
    }
  }
  return v;
}

Eigen::MatrixXd smat(const Eigen::VectorXd& v, Index side) {
  Eigen::MatrixXd S(side, side);
  Index idx = 0;
  for (Index j = 0; j < side; ++j) {
    for (Index i = j; i < side; ++i) {
      const double value = (i == j) ? v(idx) : v(idx) / M_SQRT2;
      S(i, j) = value;
      S(j, i) = value;
      ++idx;
    }
  }
  return S;
}

double cone_margin(const ConeDims& cones, const Eigen::VectorXd& v) {
  double margin = std::numeric_limits<double>::infinity();
  Index off = 0;
  if (cones.nonneg > 0) margin = std::min(margin, v.head(cones.nonneg).minCoeff());
  off += cones.nonneg;
  for (Index k : cones.soc) {
    const double t = v(off);
    const double w = (k > 1) ? v.segment(off + 1, k - 1).norm() : 0.0;
    margin = std::min(margin, t - w);
    off += k;
  }
  for (Index k : cones.psd) {
    const Index len = k * (k + 1) / 2;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(smat(v.segment(off, len), k), Eigen::EigenvaluesOnly);
    margin = std::min(margin, es.eigenvalues().minCoeff());
    off += len;
  }
  return margin;
}

namespace detail {

namespace {

// (t - ||w||)(t + ||w||), computed without cancellation.
double soc_det(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const double w = v.size() > 1 ? v.tail(v.size() - 1).norm() : 0.0;
  return (v(0) - w) * (v(0) + w);
}

// W-bar u for the hyperbolic NT point w, written into out.
void soc_apply(const Eigen::VectorXd& w, bool inverse, Eigen::Ref<Eigen::VectorXd> u) {
  const Index k = u.size();
  if (k == 1) return;  // w = (1) in a one-dimensional cone
  const double w0 = w(0);
  const auto w1 = w.tail(k - 1);
  const double u0 = u(0);
  const double w1u1 = w1.dot(u.tail(k - 1));
  const double sign = inverse ? -1.0 : 1.0;
  u(0) = w0 * u0 + sign * w1u1;
  u.tail(k - 1) += (sign * u0 + w1u1 / (1.0 + w0)) * w1;
}

}  // namespace

NtScaling identity_scaling(const ConeDims& cones) {
  NtScaling W;
  W.d = Eigen::VectorXd::Ones(cones.nonneg);
  for (Index k : cones.soc) {
    W.beta.push_back(1.0);
    Eigen::VectorXd w = Eigen::VectorXd::Zero(k);
    w(0) = 1.0;
    W.w.push_back(w);
  }
  for (Index k : cones.psd) {
    W.R.push_back(Eigen::MatrixXd::Identity(k, k));
    W.Rinv.push_back(Eigen::MatrixXd::Identity(k, k));
    W.lambda_psd.push_back(Eigen::VectorXd::Ones(k));
  }
  W.lambda = identity_element(cones);
  return W;
}

NtScaling nt_scaling(const ConeDims& cones, const Eigen::VectorXd& s, const Eigen::VectorXd& z) {
  NtScaling W;
  W.lambda.resize(cones.size());
  Index off = 0;

  const Index l = cones.nonneg;
  W.d = (s.head(l).array() / z.head(l).array()).sqrt();
  W.lambda.head(l) = (s.head(l).array() * z.head(l).array()).sqrt();
  off += l;

  for (Index k : cones.soc) {
    const auto sk = s.segment(off, k);
    const auto zk = z.segment(off, k);
    const double sn = std::sqrt(soc_det(sk));
    const double zn = std::sqrt(soc_det(zk));
    const Eigen::VectorXd sbar = sk / sn;
    const Eigen::VectorXd zbar = zk / zn;
    const double gamma = std::sqrt(0.5 * (1.0 + sbar.dot(zbar)));
    Eigen::VectorXd w(k);
    w(0) = (sbar(0) + zbar(0)) / (2.0 * gamma);
    if (k > 1) w.tail(k - 1) = (sbar.tail(k - 1) - zbar.tail(k - 1)) / (2.0 * gamma);
    const double beta = std::sqrt(sn / zn);
    W.beta.push_back(beta);
    W.w.push_back(w);

    Eigen::VectorXd lam = zk;
    soc_apply(w, false, lam);
    W.lambda.segment(off, k) = beta * lam;
    off += k;
  }

  for (Index k : cones.psd) {
    const Index len = k * (k + 1) / 2;
    const Eigen::MatrixXd S = smat(s.segment(off, len), k);
    const Eigen::MatrixXd Z = smat(z.segment(off, len), k);
    const Eigen::MatrixXd Ls = S.llt().matrixL();
    const Eigen::MatrixXd Lz = Z.llt().matrixL();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(Lz.transpose() * Ls, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::VectorXd lam = svd.singularValues();
    const Eigen::VectorXd isq = lam.cwiseSqrt().cwiseInverse();
    W.R.push_back(Ls * svd.matrixV() * isq.asDiagonal());
    W.Rinv.push_back(isq.asDiagonal() * svd.matrixU().transpose() * Lz.transpose());
    W.lambda_psd.push_back(lam);
    W.lambda.segment(off, len) = svec(Eigen::MatrixXd(lam.asDiagonal()));
    off += len;
  }
  return W;
}

void apply_scaling(const ConeDims& cones, const NtScaling& W, ScalingOp op, Eigen::Ref<Eigen::VectorXd> v) {
  Index off = 0;
  const Index l = cones.nonneg;
  if (op == ScalingOp::W || op == ScalingOp::Wt) {
    v.head(l).array() *= W.d.array();
  } else {
    v.head(l).array() /= W.d.array();
  }
  off += l;

  const bool inverse = (op == ScalingOp::Winv || op == ScalingOp::Winvt);
  for (std::size_t i = 0; i < cones.soc.size(); ++i) {
    const Index k = cones.soc[i];
    auto block = v.segment(off, k);
    soc_apply(W.w[i], inverse, block);
    block *= inverse ? 1.0 / W.beta[i] : W.beta[i];
    off += k;
  }

  for (std::size_t i = 0; i < cones.psd.size(); ++i) {
    const Index k = cones.psd[i];
    const Index len = k * (k + 1) / 2;
    const Eigen::MatrixXd V = smat(v.segment(off, len), k);
    Eigen::MatrixXd out;
    switch (op) {
      case ScalingOp::W: out = W.R[i].transpose() * V * W.R[i]; break;
      case ScalingOp::Wt: out = W.R[i] * V * W.R[i].transpose(); break;
      case ScalingOp::Winv: out = W.Rinv[i].transpose() * V * W.Rinv[i]; break;
      case ScalingOp::Winvt: out = W.Rinv[i] * V * W.Rinv[i].transpose(); break;
    }
    v.segment(off, len) = svec(out);
    off += len;
  }
}

void apply_scaling(const ConeDims& cones, const NtScaling& W, ScalingOp op, Eigen::MatrixXd& columns) {
  for (Index j = 0; j < columns.cols(); ++j) apply_scaling(cones, W, op, columns.col(j));
}

Eigen::VectorXd identity_element(const ConeDims& cones) {
  Eigen::VectorXd e = Eigen::VectorXd::Zero(cones.size());
  Index off = 0;
  e.head(cones.nonneg).setOnes();
  off += cones.nonneg;
  for (Index k : cones.soc) {
    e(off) = 1.0;
    off += k;
  }
  for (Index k : cones.psd) {
    const Index len = k * (k + 1) / 2;
    e.segment(off, len) = svec(Eigen::MatrixXd::Identity(k, k));
    off += len;
  }
  return e;
}

Eigen::VectorXd jordan_product(const ConeDims& cones, const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
  Eigen::VectorXd out(u.size());
  Index off = 0;
  const Index l = cones.nonneg;
  out.head(l) = u.head(l).cwiseProduct(v.head(l));
  off += l;
  for (Index k : cones.soc) {
    out(off) = u.segment(off, k).dot(v.segment(off, k));
    if (k > 1) {
      out.segment(off + 1, k - 1) = u(off) * v.segment(off + 1, k - 1) + v(off) * u.segment(off + 1, k - 1);
    }
    off += k;
  }
  for (Index k : cones.psd) {
    const Index len = k * (k + 1) / 2;
    const Eigen::MatrixXd U = smat(u.segment(off, len), k);
    const Eigen::MatrixXd V = smat(v.segment(off, len), k);
    out.segment(off, len) = svec(0.5 * (U * V + V * U));
    off += len;
  }
  return out;
}

Eigen::VectorXd jordan_divide(const ConeDims& cones, const NtScaling& W, const Eigen::VectorXd& v) {
  const Eigen::VectorXd& lam = W.lambda;
  Eigen::VectorXd out(v.size());
  Index off = 0;
  const Index l = cones.nonneg;
  out.head(l) = v.head(l).cwiseQuotient(lam.head(l));
  off += l;
  for (Index k : cones.soc) {
    const auto lk = lam.segment(off, k);
    const auto vk = v.segment(off, k);
    if (k == 1) {
      out(off) = vk(0) / lk(0);
    } else {
      const double det = soc_det(lk);
      const double x0 = (lk(0) * vk(0) - lk.tail(k - 1).dot(vk.tail(k - 1))) / det;
      out(off) = x0;
      out.segment(off + 1, k - 1) = (vk.tail(k - 1) - x0 * lk.tail(k - 1)) / lk(0);
    }
    off += k;
  }
  for (std::size_t i = 0; i < cones.psd.size(); ++i) {
    const Index k = cones.psd[i];
    const Eigen::VectorXd& ev = W.lambda_psd[i];
    Index idx = off;
    for (Index c = 0; c < k; ++c) {
      for (Index r = c; r < k; ++r) {
        out(idx) = 2.0 * v(idx) / (ev(r) + ev(c));
        ++idx;
      }
    }
    off += k * (k + 1) / 2;
  }
  return out;
}

double max_step(const ConeDims& cones, const Eigen::VectorXd& x, const Eigen::VectorXd& dx) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  double alpha = inf;
  Index off = 0;
  for (Index i = 0; i < cones.nonneg; ++i) {
    if (dx(i) < 0.0) alpha = std::min(alpha, -x(i) / dx(i));
  }
  off += cones.nonneg;

  for (Index k : cones.soc) {
    const auto xk = x.segment(off, k);
    const auto dk = dx.segment(off, k);
    off += k;
    if (k == 1) {
      if (dk(0) < 0.0) alpha = std::min(alpha, -xk(0) / dk(0));
      continue;
    }
    // f(a) = (x0 + a d0)^2 - ||x1 + a d1||^2 = qa a^2 + qb a + qc
    const double qc = soc_det(xk);
    const double qb = 2.0 * (xk(0) * dk(0) - xk.tail(k - 1).dot(dk.tail(k - 1)));
    const double qa = dk(0) * dk(0) - dk.tail(k - 1).squaredNorm();
    // the leading entry must stay non-negative as well; this also catches the
    // double root of a direction along the axis, where disc rounds below zero
    double root = dk(0) < 0.0 ? -xk(0) / dk(0) : inf;
    if (std::abs(qa) <= 1e-300) {
      if (qb < 0.0) root = -qc / qb;
    } else {
      const double disc = qb * qb - 4.0 * qa * qc;
      if (disc >= 0.0) {
        const double q = -0.5 * (qb + std::copysign(std::sqrt(disc), qb));
        const double r1 = q / qa;
        const double r2 = (q != 0.0) ? qc / q : inf;
        if (r1 > 0.0) root = std::min(root, r1);
        if (r2 > 0.0) root = std::min(root, r2);
      }
    }
    alpha = std::min(alpha, root);
  }

  for (Index k : cones.psd) {
    const Index len = k * (k + 1) / 2;
    const Eigen::MatrixXd X = smat(x.segment(off, len), k);
    const Eigen::MatrixXd D = smat(dx.segment(off, len), k);
    off += len;
    Eigen::LLT<Eigen::MatrixXd> llt(X);
    if (llt.info() != Eigen::Success) return 0.0;
    const Eigen::MatrixXd L = llt.matrixL();
    Eigen::MatrixXd M = L.triangularView<Eigen::Lower>().solve(D);
    M = L.triangularView<Eigen::Lower>().solve(M.transpose()).transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (M + M.transpose()), Eigen::EigenvaluesOnly);
    const double emin = es.eigenvalues().minCoeff();
    if (emin < 0.0) alpha = std::min(alpha, -1.0 / emin);
  }
  return alpha;
}

}  // namespace detail
}  // namespace robustcbf::conic
