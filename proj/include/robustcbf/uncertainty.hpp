#pragma once

// Estimation-error sets, the image of {xhat} + B under the coefficient map,
// and convex over-approximations of that image in (zeta_a, zeta_b) space.

#include "robustcbf/systems.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace robustcbf {

/// Error set B centred at the origin: a box |e_i| <= half_widths_i or a
/// Euclidean ball ||e|| <= radius. Zero extents are allowed and give the
/// degenerate single-point set.
struct ErrorSet {
  enum class Kind { Box, Ball };
  Kind kind = Kind::Box;
  VectorXd half_widths;  // Box only
  double radius = 0.0;   // Ball only
  Index n = 0;

  static ErrorSet box(const VectorXd& half_widths);
  static ErrorSet ball(Index dim, double radius);

  bool contains(const VectorXd& e, double tol = 1e-12) const;
  ErrorSet scaled(double factor) const;
  /// Smallest box containing the set.
  VectorXd extent() const;
  bool is_point() const { return extent().maxCoeff() == 0.0; }
};

/// Points of the image set, one (a, b) column per state.
struct ImageSamples {
  MatrixXd points;  // (m + 1) x N
  MatrixXd states;  // n x N, the xi that generated each column
  std::string provenance;

  Index size() const { return points.cols(); }
};

struct SamplingSpec {
  enum class Mode { Grid, Random };
  Mode mode = Mode::Grid;
  /// Grid points per axis; 0 picks one from grid_budget.
  int per_axis = 0;
  int grid_budget = 20001;
  /// Random mode.
  int count = 1000;
  std::uint64_t seed = 42;
};

/// Deterministic grid over {xhat} + B, n x K. A box gets a tensor grid; a ball
/// gets the grid of its bounding cube pushed radially onto the ball, which
/// keeps every ball point within one cube cell radius of a grid point.
MatrixXd state_grid(const VectorXd& xhat, const ErrorSet& B, int per_axis);

/// Per-axis resolution used for a grid with at most `budget` points.
int grid_resolution(Index dim, int budget);

/// Radius of a grid cell: every point of {xhat} + B lies within this distance
/// of some grid point.
double grid_cell_radius(const ErrorSet& B, int per_axis);

/// Points on the boundary of B (not shifted). Box: faces gridded with
/// per_axis points per axis; ball: evenly spread directions.
MatrixXd error_boundary(const ErrorSet& B, int per_axis);

/// Seeded uniform samples of {xhat} + B, n x count.
MatrixXd random_states(const VectorXd& xhat, const ErrorSet& B, int count, std::uint64_t seed);

ImageSamples sample_image(const ControlAffineSystem& system, const Cbf& cbf, const VectorXd& xhat,
                          const ErrorSet& B, const SamplingSpec& spec = {});

/// Largest Jacobian spectral norm of fn over the grid of {xhat} + B, by central
/// differences, inflated by 10 %.
double lipschitz_estimate(const std::function<VectorXd(const VectorXd&)>& fn, const VectorXd& xhat,
                          const ErrorSet& B, int per_axis);

template <typename Scalar>
struct Polytope {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  Matrix C;  // {eta : C eta <= d}
  Vector d;

  Index dim() const { return C.cols(); }
  Index facets() const { return C.rows(); }
  bool contains(const Vector& eta, Scalar tol = Scalar(1e-9)) const {
    return ((C * eta - d).array() <= tol).all();
  }
};

/// {eta : eta' P eta + q' eta + r <= 0}
template <typename Scalar>
struct Ellipsoid {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  Matrix P;
  Vector q;
  Scalar r = Scalar(0);

  Index dim() const { return P.rows(); }
  Scalar value(const Vector& eta) const { return eta.dot(P * eta) + q.dot(eta) + r; }
  bool contains(const Vector& eta, Scalar tol = Scalar(1e-9)) const { return value(eta) <= tol; }
  /// eta0 = -P^{-1} q / 2
  Vector center() const { return -P.ldlt().solve(q) / Scalar(2); }
  /// q' P^{-1} q / 4 - r; the set is (eta - eta0)' P (eta - eta0) <= kappa.
  Scalar kappa() const { return q.dot(P.ldlt().solve(q)) / Scalar(4) - r; }
};

using UncertaintyPolytope = Polytope<double>;
using UncertaintyEllipsoid = Ellipsoid<double>;

/// Upper bound on sup { v' zeta : zeta in Conv(P) } for a unit direction v.
/// The double integrator with a box uses the exact edge maximization; every
/// other case maximizes over state_grid and adds lipschitz * 2 * cell radius.
double support_value(const ControlAffineSystem& system, const Cbf& cbf, const VectorXd& xhat, const ErrorSet& B,
                     const VectorXd& v, const SamplingSpec& grid = {});

/// p unit directions in R^dim: evenly spaced on the circle for dim 2, a
/// Fibonacci sphere for dim 3, and the coordinate axes plus seeded Gaussian
/// directions beyond that.
MatrixXd default_directions(Index dim, int p = 16, std::uint64_t seed = 42);

/// Rows of `directions` (p x (m + 1)) become facet normals with
/// supporting offsets. Throws std::invalid_argument when the result is
/// unbounded.
UncertaintyPolytope polytopic_overapprox(const ControlAffineSystem& system, const Cbf& cbf, const VectorXd& xhat,
                                         const ErrorSet& B, const MatrixXd& directions,
                                         const SamplingSpec& grid = {});

/// True iff the polytope is bounded, probed with LPs along +-axes.
bool is_bounded(const UncertaintyPolytope& set);

/// Mean/covariance ellipsoid scaled to contain every sample, enlarged by
/// (1 + margin). Without regularization a rank-deficient cloud throws.
UncertaintyEllipsoid ellipsoid_fit(const ImageSamples& samples, double margin = 0.01, bool regularize = true);
UncertaintyEllipsoid ellipsoid_fit(const MatrixXd& points, double margin = 0.01, bool regularize = true);

/// True iff the set misses N = {0}^m x (-inf, 0], i.e. some input satisfies
/// a'u + b > 0 for every (a, b) in the set.
bool feasibility_check(const UncertaintyPolytope& set);
bool feasibility_check(const UncertaintyEllipsoid& set);

/// Convex hull of 2-D points (2 x N) as {C eta <= d} with unit normals.
/// Throws std::invalid_argument for collinear clouds.
UncertaintyPolytope convex_hull_2d(const MatrixXd& points);

/// Counter-clockwise vertices (2 x V) of a bounded 2-D polytope.
MatrixXd polytope_vertices_2d(const UncertaintyPolytope& set, double tol = 1e-9);

/// Evenly spread boundary points of an ellipsoid, dim x count.
MatrixXd ellipsoid_boundary(const UncertaintyEllipsoid& set, int count);

/// JSON documents {"type":"polytope","C":[[..]],"d":[..]} and
/// {"type":"ellipsoid","P":[[..]],"q":[..],"r":..}.
std::string to_json(const UncertaintyPolytope& set);
std::string to_json(const UncertaintyEllipsoid& set);
UncertaintyPolytope polytope_from_json(const std::string& text);
UncertaintyEllipsoid ellipsoid_from_json(const std::string& text);

}  // namespace robustcbf
