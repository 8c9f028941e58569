#pragma once

// Control-affine plants xdot = f(x) + g(x) u with a barrier function h and the
// coefficient map xi -> (a(xi), b(xi)) = (L_g h(xi), L_f h(xi) + alpha(h(xi))).

#include <Eigen/Dense>

#include <functional>
#include <stdexcept>
#include <string>

namespace robustcbf {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Axis-aligned box [lower, upper]; entries may be infinite.
template <typename Scalar>
struct Box {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  Vector lower;
  Vector upper;

  static Box uniform(Index dim, Scalar lo, Scalar hi) {
    return {Vector::Constant(dim, lo), Vector::Constant(dim, hi)};
  }
  Index dim() const { return lower.size(); }
  bool contains(const Vector& x, Scalar tol = Scalar(0)) const {
    return x.size() == lower.size() && (x.array() >= lower.array() - tol).all() &&
           (x.array() <= upper.array() + tol).all();
  }
  bool bounded() const { return lower.allFinite() && upper.allFinite(); }
  Vector clamp(const Vector& x) const { return x.cwiseMax(lower).cwiseMin(upper); }
};

using Boxd = Box<double>;

struct ControlAffineSystem {
  std::string id;
  Index n = 0;
  Index m = 0;
  std::function<VectorXd(const VectorXd&)> f;
  std::function<MatrixXd(const VectorXd&)> g;
  Boxd input_bounds;  // U
  Boxd domain;        // evaluators are total on this box

  VectorXd dynamics(const VectorXd& x, const VectorXd& u) const { return f(x) + g(x) * u; }
};

struct Cbf {
  std::function<double(const VectorXd&)> h;
  std::function<VectorXd(const VectorXd&)> grad;
  std::function<double(double)> alpha;
};

/// alpha(s) = c s, c > 0.
std::function<double(double)> linear_alpha(double c = 1.0);

struct CbfCoefficients {
  VectorXd a;  // L_g h, length m
  double b = 0.0;

  /// (a, b) as one point of R^{m+1}.
  VectorXd stacked() const {
    VectorXd z(a.size() + 1);
    z << a, b;
    return z;
  }
};

/// Throws DomainError if xi is outside the system's domain box.
CbfCoefficients coefficients(const ControlAffineSystem& system, const Cbf& cbf, const VectorXd& xi);

struct Benchmark {
  ControlAffineSystem system;
  Cbf cbf;
};

/// xdot = x(x - 1.05)(x + 1.05) + (1 - x^2) u,  h = 1 - x^2.
Benchmark scalar_benchmark();

/// xdot1 = x2, xdot2 = u,  h = 1 - x1^2 - x2^2 - x1 x2.
Benchmark double_integrator_benchmark();

// Planar Segway: a wheel of radius R rolling without slip and an inverted
// pendulum body pivoting on the axle, driven by a DC motor between the two.
// With q = (p, phi), the Lagrangian gives
//
//   [ m0          mb L cos(phi) ] [ vdot ]   [ mb L sin(phi) w^2 + tau / R ]
//   [ mb L cos(phi)  J0         ] [ wdot ] = [ mb g L sin(phi) - tau       ]
//
// where m0 and J0 collect wheel/body mass and inertia about the axle and the
// motor torque is tau = km u - bt (v / R - w) for input voltage u.
struct SegwayParams {
  double m0 = 52.71;   // kg, total translational inertia
  double mb = 44.798;  // kg, body mass
  double L = 0.169;    // m, axle to body centre of mass
  double J0 = 5.108;   // kg m^2, body inertia about the axle
  double R = 0.195;    // m, wheel radius
  double g = 9.81;
  double km = 2.524;   // N m / V
  double bt = 2.45;    // N m s, back-EMF and viscous losses

  /// Throws std::invalid_argument on non-physical values, including a mass
  /// matrix that is not positive definite.
  void validate() const;
};

/// State (p, phi, v, w), input motor voltage, h = 1 - (3 phi^2 + 2 phi w + w^2).
Benchmark segway_benchmark(const SegwayParams& params = {});

/// "scalar", "double_integrator" or "segway"; throws std::invalid_argument otherwise.
Benchmark benchmark_by_id(const std::string& id, const SegwayParams& segway = {});

}  // namespace robustcbf
