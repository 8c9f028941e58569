#pragma once

// Closed-loop simulation: estimate corruption, per-step safety filtering with a
// zero-order hold, RK4 integration and safety metrics.

#include "robustcbf/filters.hpp"
#include "robustcbf/systems.hpp"
#include "robustcbf/uncertainty.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace robustcbf {

struct Rk4Result {
  VectorXd x;
  bool in_domain = true;
};

/// One classical RK4 step of xdot = f(x) + g(x) u with u held over dt.
/// Throws std::invalid_argument if dt <= 0 or x is outside the domain.
Rk4Result rk4_step(const ControlAffineSystem& system, const VectorXd& x, const VectorXd& u, double dt);

enum class FilterKind { StandardCbf, RCbf, MrCbf, DualityQp, DualitySdp, Decoupled };

std::string to_string(FilterKind kind);
/// "standard_cbf", "r_cbf", "mr_cbf", "duality_qp", "duality_sdp", "decoupled".
FilterKind filter_kind_from_string(const std::string& name);

struct FilterSpec {
  FilterKind kind = FilterKind::StandardCbf;
  RCbfParams rcbf;
  /// MR-CBF: grid points per axis for the Lipschitz estimates.
  int lipschitz_per_axis = 9;
  /// MR-CBF: region for the Lipschitz constants. Empty means local estimates
  /// over {xhat} + B at every step; otherwise the constants are computed once
  /// over this box and only epsilon follows B.
  Boxd lipschitz_region;
  /// MR-CBF: given Lipschitz constants (epsilon is ignored); overrides the region.
  std::optional<MrCbfParams> lipschitz_constants;
  /// Duality QP: number of supporting directions and the support grid. The
  /// decoupled baseline takes its intervals from the same grid.
  int directions = 16;
  SamplingSpec support_grid;
  /// Duality SDP: random samples of {xhat} + B and the enlargement margin.
  int samples = 1000;
  std::uint64_t sample_seed = 42;
  double margin = 0.01;
};

/// Lipschitz constants of L_f h, alpha(h) and L_g h over a box (epsilon = 0).
MrCbfParams lipschitz_over_region(const Benchmark& bench, const Boxd& region, int per_axis);

/// Applies one filter at the estimate xhat with error set B. `mr_fixed`
/// supplies precomputed MR-CBF constants when the spec has a region.
FilterResult apply_filter(const Benchmark& bench, const FilterSpec& spec, const VectorXd& xhat, const ErrorSet& B,
                          const VectorXd& k_d, const MrCbfParams* mr_fixed = nullptr);

/// How the estimate is produced from the true state. Every variant keeps
/// x - xhat in B.
struct CorruptionModel {
  enum class Kind { None, RandomInB, Adversarial, FixedOffset };
  Kind kind = Kind::None;
  std::uint64_t seed = 42;  // RandomInB
  VectorXd offset;          // FixedOffset: e0 = x - xhat, must lie in B
  /// Adversarial: boundary grid resolution of B.
  int boundary_per_axis = 21;
};

std::string to_string(CorruptionModel::Kind kind);
CorruptionModel::Kind corruption_kind_from_string(const std::string& name);

/// Estimate at step `step`. Adversarial picks, among x - e for e = 0 and e on
/// the boundary grid of B, the point in the domain with the largest h.
VectorXd corrupt(const Benchmark& bench, const CorruptionModel& model, const ErrorSet& B, const VectorXd& x,
                 std::uint64_t step);

/// Desired input k_d(xhat) = K xhat + u0, clipped to U by the filters.
struct KdPolicy {
  MatrixXd K;  // m x n, empty for the constant policy
  VectorXd u0;

  static KdPolicy constant(const VectorXd& u0);
  static KdPolicy linear(const MatrixXd& K);
  VectorXd operator()(const VectorXd& xhat) const;
};

struct SimConfig {
  FilterSpec filter;
  CorruptionModel corruption;
  ErrorSet B;
  VectorXd x0;
  KdPolicy k_d;
  double dt = 1e-3;
  double horizon = 5.0;
  /// Wall-clock solve times make the output non-reproducible, so they are
  /// recorded only on request.
  bool record_solve_time = false;
};

enum class StepStatus { Feasible, Infeasible, SolverFailure };

std::string to_string(StepStatus status);

struct Trajectory {
  std::vector<double> t;
  std::vector<VectorXd> x;
  std::vector<VectorXd> xhat;
  std::vector<VectorXd> u;
  std::vector<double> h;
  std::vector<StepStatus> status;
  std::vector<double> solve_ms;

  /// Left the domain; the trajectory stops at the last state inside.
  bool domain_exit = false;
  int infeasible_steps = 0;
  int failed_steps = 0;
  /// Optimal solves whose certificate check failed.
  int uncertified_solves = 0;
  /// Largest gap / (1 + |objective|) over Optimal solves.
  double max_relative_gap = 0.0;
  /// Every recorded x - xhat was in B.
  bool estimates_valid = true;
  /// Wall-clock filter time, measured whether or not solve_ms is recorded.
  double total_solve_ms = 0.0;
  double max_solve_ms = 0.0;

  std::size_t size() const { return t.size(); }
  double min_h() const;
  bool flagged() const { return infeasible_steps > 0 || failed_steps > 0 || domain_exit; }
};

/// Runs the closed loop from x0 over [0, horizon]. At every step the filter is
/// evaluated at the corrupted estimate; if it is not feasible, the previous
/// input is held (k_d clipped to U on the first step) and the step is flagged.
Trajectory simulate(const Benchmark& bench, const SimConfig& config);

/// Header t,x1..xn,xhat1..xhatn,u1..um,h,status,solve_ms; shortest round-trip
/// decimal formatting, independent of the locale.
void write_csv(const Trajectory& traj, std::ostream& out);
std::string format_double(double v);

struct SweepCell {
  FilterKind filter = FilterKind::StandardCbf;
  double delta = 0.0;
  double min_h = std::numeric_limits<double>::quiet_NaN();
  int infeasible_steps = 0;
  int failed_steps = 0;
  bool domain_exit = false;
  int uncertified_solves = 0;
  double max_relative_gap = 0.0;
};

struct SweepTable {
  std::vector<double> deltas;
  std::vector<FilterKind> filters;
  std::vector<SweepCell> cells;  // filter-major: cells[f * deltas.size() + d]

  const SweepCell& at(std::size_t filter, std::size_t delta) const { return cells[filter * deltas.size() + delta]; }
  /// Smallest delta at which the filter hit an infeasible step, NaN if none.
  double first_infeasible_delta(FilterKind kind) const;
};

/// Runs `base` for every (filter, delta) pair with B scaled to delta (box half
/// widths or ball radius set to delta). Cells run on up to `threads` threads
/// and the result does not depend on the thread count.
SweepTable min_h_sweep(const Benchmark& bench, const SimConfig& base, const std::vector<FilterSpec>& filters,
                       const std::vector<double>& deltas, int threads = 1);

/// Calls fn(i) for every i < count on up to `threads` threads and rethrows the
/// first exception once all workers have stopped.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn);

/// Error set of the same kind and dimension as `like` with every extent delta.
ErrorSet error_set_with_extent(const ErrorSet& like, double delta);

/// Stabilizing state feedback u = -K x for xdot = A x + B u minimizing
/// integral x'Qx + u'Ru, from the stable invariant subspace of the Hamiltonian.
/// Returns K (m x n); throws std::runtime_error if the CARE has no stabilizing
/// solution.
MatrixXd lqr_gain(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q, const MatrixXd& R);

/// Stabilizing solution X of A'X + XA - XBR^{-1}B'X + Q = 0.
MatrixXd care_solution(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q, const MatrixXd& R);

/// Jacobians of f and g at (x, u) by central differences: A = d(f + g u)/dx, B = g(x).
void linearize(const ControlAffineSystem& system, const VectorXd& x, const VectorXd& u, MatrixXd& A, MatrixXd& B);

}  // namespace robustcbf
