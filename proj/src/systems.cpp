#include "robustcbf/systems.hpp"

#include <cmath>
#include <sstream>

namespace robustcbf {

namespace {

constexpr double kDefaultInputBound = 100.0;

Boxd default_inputs(Index m) { return Boxd::uniform(m, -kDefaultInputBound, kDefaultInputBound); }

}  // namespace

std::function<double(double)> linear_alpha(double c) {
  if (!(c > 0.0) || !std::isfinite(c)) throw std::invalid_argument("linear alpha needs a positive finite slope");
  return [c](double s) { return c * s; };
}

CbfCoefficients coefficients(const ControlAffineSystem& system, const Cbf& cbf, const VectorXd& xi) {
  if (!system.domain.contains(xi)) {
    std::ostringstream msg;
    msg << "state (" << xi.transpose() << ") is outside the domain of '" << system.id << "'";
    throw DomainError(msg.str());
  }
  const VectorXd grad = cbf.grad(xi);
  CbfCoefficients out;
  out.a = system.g(xi).transpose() * grad;
  out.b = grad.dot(system.f(xi)) + cbf.alpha(cbf.h(xi));
  return out;
}

Benchmark scalar_benchmark() {
  Benchmark bm;
  auto& sys = bm.system;
  sys.id = "scalar";
  sys.n = 1;
  sys.m = 1;
  sys.f = [](const VectorXd& x) {
    const double s = x(0);
    return VectorXd::Constant(1, s * (s - 1.05) * (s + 1.05));
  };
  sys.g = [](const VectorXd& x) { return MatrixXd::Constant(1, 1, 1.0 - x(0) * x(0)); };
  sys.input_bounds = default_inputs(1);
  sys.domain = Boxd::uniform(1, -2.0, 2.0);
  bm.cbf.h = [](const VectorXd& x) { return 1.0 - x(0) * x(0); };
  bm.cbf.grad = [](const VectorXd& x) { return VectorXd::Constant(1, -2.0 * x(0)); };
  bm.cbf.alpha = linear_alpha(1.0);
  return bm;
}

Benchmark double_integrator_benchmark() {
  Benchmark bm;
  auto& sys = bm.system;
  sys.id = "double_integrator";
  sys.n = 2;
  sys.m = 1;
  sys.f = [](const VectorXd& x) { return VectorXd{{x(1), 0.0}}; };
  sys.g = [](const VectorXd&) { return MatrixXd{{0.0}, {1.0}}; };
  sys.input_bounds = default_inputs(1);
  sys.domain = Boxd::uniform(2, -2.0, 2.0);
  bm.cbf.h = [](const VectorXd& x) { return 1.0 - x(0) * x(0) - x(1) * x(1) - x(0) * x(1); };
  bm.cbf.grad = [](const VectorXd& x) { return VectorXd{{-2.0 * x(0) - x(1), -2.0 * x(1) - x(0)}}; };
  bm.cbf.alpha = linear_alpha(1.0);
  return bm;
}

void SegwayParams::validate() const {
  const double vals[] = {m0, mb, L, J0, R, g, km};
  for (double v : vals) {
    if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument("Segway parameters must be positive and finite");
  }
  if (!(bt >= 0.0) || !std::isfinite(bt)) throw std::invalid_argument("Segway loss coefficient must be non-negative");
  // det D(phi) >= m0 J0 - (mb L)^2 over all pitch angles
  if (!(m0 * J0 > mb * L * mb * L)) throw std::invalid_argument("Segway mass matrix is not positive definite");
}

Benchmark segway_benchmark(const SegwayParams& params) {
  params.validate();
  const SegwayParams p = params;
  Benchmark bm;
  auto& sys = bm.system;
  sys.id = "segway";
  sys.n = 4;
  sys.m = 1;

  // Inverse mass matrix applied to a right-hand side.
  auto accel = [p](double phi, double r1, double r2) {
    const double c = p.mb * p.L * std::cos(phi);
    const double det = p.m0 * p.J0 - c * c;
    return Eigen::Vector2d((p.J0 * r1 - c * r2) / det, (p.m0 * r2 - c * r1) / det);
  };

  sys.f = [p, accel](const VectorXd& x) {
    const double phi = x(1), v = x(2), w = x(3);
    const double loss = -p.bt * (v / p.R - w);  // torque at zero voltage
    const double r1 = p.mb * p.L * std::sin(phi) * w * w + loss / p.R;
    const double r2 = p.mb * p.g * p.L * std::sin(phi) - loss;
    const Eigen::Vector2d acc = accel(phi, r1, r2);
    return VectorXd{{v, w, acc(0), acc(1)}};
  };
  sys.g = [p, accel](const VectorXd& x) {
    const Eigen::Vector2d acc = accel(x(1), p.km / p.R, -p.km);
    MatrixXd G = MatrixXd::Zero(4, 1);
    G(2, 0) = acc(0);
    G(3, 0) = acc(1);
    return G;
  };
  sys.input_bounds = default_inputs(1);
  sys.domain.lower = VectorXd{{-10.0, -M_PI / 2, -5.0, -5.0}};
  sys.domain.upper = VectorXd{{10.0, M_PI / 2, 5.0, 5.0}};

  bm.cbf.h = [](const VectorXd& x) {
    const double phi = x(1), w = x(3);
    return 1.0 - (3.0 * phi * phi + 2.0 * phi * w + w * w);
  };
  bm.cbf.grad = [](const VectorXd& x) {
    const double phi = x(1), w = x(3);
    return VectorXd{{0.0, -(6.0 * phi + 2.0 * w), 0.0, -(2.0 * phi + 2.0 * w)}};
  };
  bm.cbf.alpha = linear_alpha(1.0);
  return bm;
}

Benchmark benchmark_by_id(const std::string& id, const SegwayParams& segway) {
  if (id == "scalar") return scalar_benchmark();
  if (id == "double_integrator") return double_integrator_benchmark();
  if (id == "segway") return segway_benchmark(segway);
  throw std::invalid_argument("unknown benchmark '" + id + "'");
}

}  // namespace robustcbf
