#include "robustcbf/uncertainty.hpp"

#include "robustcbf/conic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace robustcbf {

namespace {

void check_nonneg_finite(double v, const char* what) {
  if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string(what) + " must be finite and >= 0");
}

// Values of a uniform grid on [-e, e]; a single 0 when e == 0.
VectorXd axis_values(double e, int k) {
  if (e == 0.0 || k <= 1) return VectorXd::Zero(1);
  return VectorXd::LinSpaced(k, -e, e);
}

MatrixXd tensor_grid(const std::vector<VectorXd>& axes) {
  Index total = 1;
  for (const auto& ax : axes) total *= ax.size();
  const Index n = static_cast<Index>(axes.size());
  MatrixXd out(n, total);
  std::vector<Index> idx(n, 0);
  for (Index c = 0; c < total; ++c) {
    for (Index i = 0; i < n; ++i) out(i, c) = axes[i](idx[i]);
    for (Index i = 0; i < n; ++i) {
      if (++idx[i] < axes[i].size()) break;
      idx[i] = 0;
    }
  }
  return out;
}

// Evenly spread unit vectors: circle for dim 2, Fibonacci sphere for dim 3,
// seeded Gaussian directions otherwise. dim 1 gives +-1.
MatrixXd spread_directions(Index dim, int count, std::uint64_t seed) {
  MatrixXd V(dim, count);
  if (dim == 1) {
    V.resize(1, 2);
    V << 1.0, -1.0;
    return V;
  }
  if (dim == 2) {
    for (int i = 0; i < count; ++i) {
      const double th = 2.0 * M_PI * i / count;
      V.col(i) << std::cos(th), std::sin(th);
    }
    return V;
  }
  if (dim == 3) {
    const double golden = M_PI * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < count; ++i) {
      const double z = 1.0 - 2.0 * (i + 0.5) / count;
      const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
      V.col(i) << rho * std::cos(golden * i), rho * std::sin(golden * i), z;
    }
    return V;
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  for (int i = 0; i < count; ++i) {
    VectorXd g(dim);
    do {
      for (Index j = 0; j < dim; ++j) g(j) = normal(rng);
    } while (g.norm() < 1e-12);
    V.col(i) = g.normalized();
  }
  return V;
}

void require_in_domain(const ControlAffineSystem& system, const VectorXd& xhat, const ErrorSet& B) {
  if (xhat.size() != system.n || B.n != system.n) throw std::invalid_argument("state and error set dimensions differ from the system");
  const VectorXd ext = B.extent();
  if (!system.domain.contains(xhat - ext) || !system.domain.contains(xhat + ext)) {
    std::ostringstream msg;
    msg << "uncertainty box around (" << xhat.transpose() << ") leaves the domain of '" << system.id << "'";
    throw DomainError(msg.str());
  }
}

MatrixXd image_of(const ControlAffineSystem& system, const Cbf& cbf, const MatrixXd& states) {
  MatrixXd pts(system.m + 1, states.cols());
  for (Index j = 0; j < states.cols(); ++j) pts.col(j) = coefficients(system, cbf, states.col(j)).stacked();
  return pts;
}

// Maximum of a quadratic in one variable over [lo, hi], recovered exactly
// from three samples.
double max_quadratic_on_interval(const std::function<double(double)>& phi, double lo, double hi) {
  const double f0 = phi(lo), f1 = phi(hi);
  if (hi - lo <= 0.0) return f0;
  const double mid = 0.5 * (lo + hi);
  const double fm = phi(mid);
  double best = std::max(f0, f1);
  // phi(lo + s (hi - lo)) = f0 + beta s + gamma s^2 on s in [0, 1]
  const double gamma = 2.0 * (f0 + f1 - 2.0 * fm);
  const double beta = f1 - f0 - gamma;
  if (gamma < 0.0) {
    const double s = -beta / (2.0 * gamma);
    if (s > 0.0 && s < 1.0) best = std::max(best, phi(lo + s * (hi - lo)));
  }
  return best;
}

// The coefficient map of the double integrator is quadratic in the state, so
// phi_v is quadratic along each edge and, being indefinite or linear, attains
// its maximum over the box on an edge.
double double_integrator_support(const ControlAffineSystem& system, const Cbf& cbf, const VectorXd& xhat,
                                 const VectorXd& eps, const VectorXd& v) {
  auto phi = [&](double x1, double x2) { return v.dot(coefficients(system, cbf, VectorXd{{x1, x2}}).stacked()); };
  const double lo1 = xhat(0) - eps(0), hi1 = xhat(0) + eps(0);
  const double lo2 = xhat(1) - eps(1), hi2 = xhat(1) + eps(1);
  auto gamma1 = [&](double z) { return max_quadratic_on_interval([&](double t) { return phi(z, t); }, lo2, hi2); };
  auto gamma2 = [&](double z) { return max_quadratic_on_interval([&](double t) { return phi(t, z); }, lo1, hi1); };
  return std::max({gamma1(lo1), gamma1(hi1), gamma2(lo2), gamma2(hi2)});
}

// Grid image plus the slack that turns the grid maximum into an upper bound.
struct GridSupport {
  MatrixXd image;
  double slack = 0.0;

  double operator()(const VectorXd& v) const { return (v.transpose() * image).maxCoeff() + slack; }
};

GridSupport make_grid_support(const ControlAffineSystem& system, const Cbf& cbf, const VectorXd& xhat,
                              const ErrorSet& B, const SamplingSpec& grid) {
  const int k = grid.per_axis > 0 ? grid.per_axis : grid_resolution(system.n, grid.grid_budget);
  GridSupport out;
  out.image = image_of(system, cbf, state_grid(xhat, B, k));
  if (!B.is_point()) {
    auto zeta = [&](const VectorXd& xi) { return coefficients(system, cbf, xi).stacked(); };
    const int kl = std::min(k, grid_resolution(system.n, 4000));
    const double L = lipschitz_estimate(zeta, xhat, B, kl);
    out.slack = L * 2.0 * grid_cell_radius(B, k);
  }
  return out;
}

bool use_edge_support(const ControlAffineSystem& system, const ErrorSet& B) {
  return system.id == "double_integrator" && B.kind == ErrorSet::Kind::Box;
}

}  // namespace

ErrorSet ErrorSet::box(const VectorXd& half_widths) {
  if (half_widths.size() == 0) throw std::invalid_argument("error box needs at least one axis");
  for (Index i = 0; i < half_widths.size(); ++i) check_nonneg_finite(half_widths(i), "error box half-width");
  ErrorSet B;
  B.kind = Kind::Box;
  B.half_widths = half_widths;
  B.n = half_widths.size();
  return B;
}

ErrorSet ErrorSet::ball(Index dim, double radius) {
  if (dim <= 0) throw std::invalid_argument("error ball needs a positive dimension");
  check_nonneg_finite(radius, "error ball radius");
  ErrorSet B;
  B.kind = Kind::Ball;
  B.radius = radius;
  B.n = dim;
  return B;
}

bool ErrorSet::contains(const VectorXd& e, double tol) const {
  if (e.size() != n) return false;
  if (kind == Kind::Box) return (e.cwiseAbs() - half_widths).maxCoeff() <= tol;
  return e.norm() <= radius + tol;
}

ErrorSet ErrorSet::scaled(double factor) const {
  check_nonneg_finite(factor, "error set scale");
  return kind == Kind::Box ? box(half_widths * factor) : ball(n, radius * factor);
}

VectorXd ErrorSet::extent() const { return kind == Kind::Box ? half_widths : VectorXd::Constant(n, radius); }

int grid_resolution(Index dim, int budget) {
  const double k = std::floor(std::pow(static_cast<double>(std::max(budget, 2)), 1.0 / static_cast<double>(dim)) + 1e-9);
  return std::max(2, static_cast<int>(k));
}

double grid_cell_radius(const ErrorSet& B, int per_axis) {
  if (per_axis <= 1 || B.is_point()) return B.is_point() ? 0.0 : B.extent().norm();
  const VectorXd cell = 2.0 * B.extent() / static_cast<double>(per_axis - 1);
  return 0.5 * cell.norm();
}

MatrixXd state_grid(const VectorXd& xhat, const ErrorSet& B, int per_axis) {
  if (xhat.size() != B.n) throw std::invalid_argument("state and error set dimensions differ");
  const VectorXd ext = B.extent();
  std::vector<VectorXd> axes;
  for (Index i = 0; i < B.n; ++i) axes.push_back(axis_values(ext(i), per_axis));
  MatrixXd E = tensor_grid(axes);
  if (B.kind == ErrorSet::Kind::Ball) {
    for (Index j = 0; j < E.cols(); ++j) {
      const double nrm = E.col(j).norm();
      if (nrm > B.radius) E.col(j) *= B.radius / nrm;
    }
  }
  return E.colwise() + xhat;
}

MatrixXd error_boundary(const ErrorSet& B, int per_axis) {
  if (B.is_point()) return MatrixXd::Zero(B.n, 1);
  if (B.kind == ErrorSet::Kind::Box) {
    const MatrixXd E = state_grid(VectorXd::Zero(B.n), B, std::max(per_axis, 2));
    std::vector<Index> keep;
    for (Index j = 0; j < E.cols(); ++j) {
      bool on_face = false;
      for (Index i = 0; i < B.n; ++i) {
        if (B.half_widths(i) > 0.0 && std::abs(std::abs(E(i, j)) - B.half_widths(i)) <= 1e-12 * B.half_widths(i)) on_face = true;
      }
      if (on_face) keep.push_back(j);
    }
    MatrixXd out(B.n, static_cast<Index>(keep.size()));
    for (Index c = 0; c < out.cols(); ++c) out.col(c) = E.col(keep[c]);
    return out;
  }
  const int count = B.n == 2 ? 4 * std::max(per_axis, 2) : std::max<int>(2 * B.n, per_axis * per_axis);
  return B.radius * spread_directions(B.n, count, 7);
}

MatrixXd random_states(const VectorXd& xhat, const ErrorSet& B, int count, std::uint64_t seed) {
  if (count <= 0) throw std::invalid_argument("random sampling needs a positive count");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::normal_distribution<double> normal;
  MatrixXd X(B.n, count);
  for (int j = 0; j < count; ++j) {
    VectorXd e(B.n);
    if (B.kind == ErrorSet::Kind::Box) {
      for (Index i = 0; i < B.n; ++i) e(i) = B.half_widths(i) * unit(rng);
    } else {
      for (Index i = 0; i < B.n; ++i) e(i) = normal(rng);
      const double nrm = e.norm();
      const double rad = B.radius * std::pow(0.5 * (unit(rng) + 1.0), 1.0 / static_cast<double>(B.n));
      e = nrm > 0.0 ? VectorXd(e * (rad / nrm)) : VectorXd::Zero(B.n);
    }
    X.col(j) = xhat + e;
  }
  return X;
}

ImageSamples sample_image(const ControlAffineSystem& system, const Cbf& cbf, const VectorXd& xhat, const ErrorSet& B,
                          const SamplingSpec& spec) {
  require_in_domain(system, xhat, B);
  ImageSamples out;
  if (spec.mode == SamplingSpec::Mode::Grid) {
    if (spec.per_axis <= 0 && spec.grid_budget <= 0) throw std::invalid_argument("empty sampling density");
    const int k = spec.per_axis > 0 ? spec.per_axis : grid_resolution(system.n, spec.grid_budget);
    out.states = state_grid(xhat, B, k);
    out.provenance = "grid " + std::to_string(k) + " per axis";
  } else {
    if (spec.count <= 0) throw std::invalid_argument("empty sampling density");
    out.states = B.is_point() ? MatrixXd(xhat) : random_states(xhat, B, spec.count, spec.seed);
    out.provenance = "random N=" + std::to_string(spec.count) + " seed=" + std::to_string(spec.seed);
  }
  out.points = image_of(system, cbf, out.states);
  return out;
}

double lipschitz_estimate(const std::function<VectorXd(const VectorXd&)>& fn, const VectorXd& xhat, const ErrorSet& B,
                          int per_axis) {
  const MatrixXd X = state_grid(xhat, B, per_axis);
  const Index n = X.rows();
  double best = 0.0;
  for (Index j = 0; j < X.cols(); ++j) {
    const VectorXd x = X.col(j);
    MatrixXd J;
    for (Index i = 0; i < n; ++i) {
      const double step = 1e-6 * std::max(1.0, std::abs(x(i)));
      VectorXd xp = x, xm = x;
      xp(i) += step;
      xm(i) -= step;
      const VectorXd col = (fn(xp) - fn(xm)) / (2.0 * step);
      if (J.size() == 0) J.resize(col.size(), n);
      J.col(i) = col;
    }
    const double s = J.rows() == 1 || n == 1 ? J.norm() : Eigen::JacobiSVD<MatrixXd>(J).singularValues()(0);
    best = std::max(best, s);
  }
  return 1.1 * best;
}

double support_value(const ControlAffineSystem& system, const Cbf& cbf, const VectorXd& xhat, const ErrorSet& B,
                     const VectorXd& v, const SamplingSpec& grid) {
  if (v.size() != system.m + 1) throw std::invalid_argument("support direction has the wrong dimension");
  if (std::abs(v.norm() - 1.0) > 1e-9) throw std::invalid_argument("support direction is not normalized");
  require_in_domain(system, xhat, B);
  if (use_edge_support(system, B)) return double_integrator_support(system, cbf, xhat, B.half_widths, v);
  return make_grid_support(system, cbf, xhat, B, grid)(v);
}

MatrixXd default_directions(Index dim, int p, std::uint64_t seed) {
  if (dim < 1) throw std::invalid_argument("direction dimension must be positive");
  if (p < dim + 1) throw std::invalid_argument("need at least dim + 1 directions");
  if (dim <= 3) return spread_directions(dim, p, seed).transpose();
  const int axes = static_cast<int>(2 * dim);
  MatrixXd V(std::max(p, axes), dim);
  V.topRows(dim) = MatrixXd::Identity(dim, dim);
  V.middleRows(dim, dim) = -MatrixXd::Identity(dim, dim);
  if (V.rows() > axes) V.bottomRows(V.rows() - axes) = spread_directions(dim, static_cast<int>(V.rows()) - axes, seed).transpose();
  return V;
}

bool is_bounded(const UncertaintyPolytope& set) {
  const Index k = set.dim();
  for (Index j = 0; j < k; ++j) {
    for (double sign : {1.0, -1.0}) {
      conic::ConicProblem lp(k);
      lp.set_objective(VectorXd::Unit(k, j) * -sign);
      lp.add_inequalities(set.C, set.d);
      const auto rep = conic::solve(lp);
      if (rep.status == conic::SolveStatus::Unbounded) return false;
      if (rep.status != conic::SolveStatus::Optimal && rep.status != conic::SolveStatus::Infeasible) return false;
    }
  }
  return true;
}

UncertaintyPolytope polytopic_overapprox(const ControlAffineSystem& system, const Cbf& cbf, const VectorXd& xhat,
                                         const ErrorSet& B, const MatrixXd& directions, const SamplingSpec& grid) {
  const Index k = system.m + 1;
  if (directions.cols() != k) throw std::invalid_argument("directions must have m + 1 columns");
  if (directions.rows() < k + 1) throw std::invalid_argument("need at least m + 2 directions");
  require_in_domain(system, xhat, B);
  UncertaintyPolytope out;
  out.C = directions;
  for (Index i = 0; i < out.C.rows(); ++i) out.C.row(i).normalize();
  out.d.resize(out.C.rows());
  if (use_edge_support(system, B)) {
    for (Index i = 0; i < out.C.rows(); ++i)
      out.d(i) = double_integrator_support(system, cbf, xhat, B.half_widths, out.C.row(i).transpose());
  } else {
    const GridSupport sup = make_grid_support(system, cbf, xhat, B, grid);
    for (Index i = 0; i < out.C.rows(); ++i) out.d(i) = sup(out.C.row(i).transpose());
  }
  if (!is_bounded(out)) throw std::invalid_argument("directions do not positively span; polytope is unbounded");
  return out;
}

UncertaintyEllipsoid ellipsoid_fit(const MatrixXd& Z, double margin, bool regularize) {
  check_nonneg_finite(margin, "ellipsoid margin");
  const Index k = Z.rows();
  const Index N = Z.cols();
  if (N == 0 || k == 0) throw std::invalid_argument("ellipsoid fit needs samples");
  const VectorXd mu = Z.rowwise().mean();
  const MatrixXd D = Z.colwise() - mu;
  MatrixXd S = N > 1 ? MatrixXd(D * D.transpose() / static_cast<double>(N - 1)) : MatrixXd::Zero(k, k);
  if (regularize) {
    S.diagonal().array() += 1e-9 * S.trace() / static_cast<double>(k) + 1e-12;
  } else {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(S);
    if (N < k + 1 || es.eigenvalues()(0) <= 1e-12 * std::max(1.0, S.trace()))
      throw std::invalid_argument("degenerate sample cloud; enable regularization");
  }
  const Eigen::LLT<MatrixXd> llt(S);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("sample covariance is not positive definite");
  double s = 0.0;
  for (Index j = 0; j < N; ++j) s = std::max(s, D.col(j).dot(llt.solve(D.col(j))));
  s = std::max(s, 1.0);
  UncertaintyEllipsoid E;
  MatrixXd Sinv = llt.solve(MatrixXd::Identity(k, k));
  E.P = 0.5 * (Sinv + Sinv.transpose()) / (s * (1.0 + margin));
  E.q = -2.0 * E.P * mu;
  E.r = mu.dot(E.P * mu) - 1.0;
  return E;
}

UncertaintyEllipsoid ellipsoid_fit(const ImageSamples& samples, double margin, bool regularize) {
  return ellipsoid_fit(samples.points, margin, regularize);
}

bool feasibility_check(const UncertaintyPolytope& set) {
  // {C (0, t) <= d, t <= 0} is an interval of t.
  const Index m = set.dim() - 1;
  double lo = -std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (Index i = 0; i < set.facets(); ++i) {
    const double c = set.C(i, m);
    const double d = set.d(i);
    if (c > 0.0) hi = std::min(hi, d / c);
    else if (c < 0.0) lo = std::max(lo, d / c);
    else if (d < 0.0) return true;
  }
  return lo > hi;
}

bool feasibility_check(const UncertaintyEllipsoid& set) {
  const Index m = set.dim() - 1;
  const double p = set.P(m, m);
  const double q = set.q(m);
  const double t = std::min(-q / (2.0 * p), 0.0);
  return p * t * t + q * t + set.r > 0.0;
}

UncertaintyPolytope convex_hull_2d(const MatrixXd& points) {
  if (points.rows() != 2) throw std::invalid_argument("convex_hull_2d expects 2 x N points");
  std::vector<Eigen::Vector2d> pts;
  for (Index j = 0; j < points.cols(); ++j) pts.emplace_back(points.col(j));
  std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a(0) < b(0) || (a(0) == b(0) && a(1) < b(1)); });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  auto cross = [](const Eigen::Vector2d& o, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    return (a(0) - o(0)) * (b(1) - o(1)) - (a(1) - o(1)) * (b(0) - o(0));
  };
  std::vector<Eigen::Vector2d> hull(2 * pts.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0.0) --k;
    hull[k++] = pts[i];
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0.0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k > 0 ? k - 1 : 0);
  if (hull.size() < 3) throw std::invalid_argument("point cloud is collinear; hull has no interior");
  UncertaintyPolytope out;
  const Index f = static_cast<Index>(hull.size());
  out.C.resize(f, 2);
  out.d.resize(f);
  for (Index i = 0; i < f; ++i) {
    const Eigen::Vector2d e = hull[(i + 1) % f] - hull[i];
    const Eigen::Vector2d nrm = Eigen::Vector2d(e(1), -e(0)).normalized();
    out.C.row(i) = nrm.transpose();
    out.d(i) = nrm.dot(hull[i]);
  }
  return out;
}

MatrixXd polytope_vertices_2d(const UncertaintyPolytope& set, double tol) {
  if (set.dim() != 2) throw std::invalid_argument("polytope_vertices_2d expects a 2-D polytope");
  std::vector<Eigen::Vector2d> verts;
  for (Index i = 0; i < set.facets(); ++i) {
    for (Index j = i + 1; j < set.facets(); ++j) {
      Eigen::Matrix2d M;
      M << set.C.row(i), set.C.row(j);
      if (std::abs(M.determinant()) < 1e-12) continue;
      const Eigen::Vector2d v = M.partialPivLu().solve(Eigen::Vector2d(set.d(i), set.d(j)));
      if (((set.C * v - set.d).array() <= tol * (1.0 + set.d.cwiseAbs().array())).all()) verts.push_back(v);
    }
  }
  if (verts.empty()) return MatrixXd(2, 0);
  Eigen::Vector2d c = Eigen::Vector2d::Zero();
  for (const auto& v : verts) c += v;
  c /= static_cast<double>(verts.size());
  std::sort(verts.begin(), verts.end(), [&](const auto& a, const auto& b) {
    return std::atan2(a(1) - c(1), a(0) - c(0)) < std::atan2(b(1) - c(1), b(0) - c(0));
  });
  std::vector<Eigen::Vector2d> uniq;
  for (const auto& v : verts) {
    if (uniq.empty() || (v - uniq.back()).norm() > 1e-9 * (1.0 + v.norm())) uniq.push_back(v);
  }
  if (uniq.size() > 1 && (uniq.front() - uniq.back()).norm() <= 1e-9 * (1.0 + uniq.front().norm())) uniq.pop_back();
  MatrixXd out(2, static_cast<Index>(uniq.size()));
  for (Index j = 0; j < out.cols(); ++j) out.col(j) = uniq[j];
  return out;
}

MatrixXd ellipsoid_boundary(const UncertaintyEllipsoid& set, int count) {
  if (count <= 0) throw std::invalid_argument("boundary sampling needs a positive count");
  const Index k = set.dim();
  const Eigen::LLT<MatrixXd> llt(set.P);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("ellipsoid P is not positive definite");
  const double kap = set.kappa();
  if (!(kap > 0.0)) throw std::invalid_argument("ellipsoid has empty interior");
  const MatrixXd W = spread_directions(k, count, 11);
  // (eta - c)' L L' (eta - c) = kappa  for  eta = c + sqrt(kappa) L^{-T} w
  const MatrixXd Y = llt.matrixU().solve(W) * std::sqrt(kap);
  return Y.colwise() + set.center();
}

}  // namespace robustcbf
