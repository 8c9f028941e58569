#include "robustcbf/sim.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <thread>

namespace robustcbf {

Rk4Result rk4_step(const ControlAffineSystem& system, const VectorXd& x, const VectorXd& u, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("rk4_step needs dt > 0");
  if (!system.domain.contains(x)) throw std::invalid_argument("rk4_step: state outside the domain");
  const VectorXd k1 = system.dynamics(x, u);
  const VectorXd k2 = system.dynamics(x + 0.5 * dt * k1, u);
  const VectorXd k3 = system.dynamics(x + 0.5 * dt * k2, u);
  const VectorXd k4 = system.dynamics(x + dt * k3, u);
  Rk4Result out;
  out.x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  out.in_domain = out.x.allFinite() && system.domain.contains(out.x);
  return out;
}

std::string to_string(FilterKind kind) {
  switch (kind) {
    case FilterKind::StandardCbf: return "standard_cbf";
    case FilterKind::RCbf: return "r_cbf";
    case FilterKind::MrCbf: return "mr_cbf";
    case FilterKind::DualityQp: return "duality_qp";
    case FilterKind::DualitySdp: return "duality_sdp";
    case FilterKind::Decoupled: return "decoupled";
  }
  return "unknown";
}

FilterKind filter_kind_from_string(const std::string& name) {
  for (FilterKind k : {FilterKind::StandardCbf, FilterKind::RCbf, FilterKind::MrCbf, FilterKind::DualityQp,
                       FilterKind::DualitySdp, FilterKind::Decoupled}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown filter '" + name + "'");
}

MrCbfParams lipschitz_over_region(const Benchmark& bench, const Boxd& region, int per_axis) {
  if (!region.bounded() || region.dim() != bench.system.n)
    throw std::invalid_argument("Lipschitz region must be a bounded box in state space");
  const VectorXd centre = 0.5 * (region.lower + region.upper);
  const ErrorSet half = ErrorSet::box(0.5 * (region.upper - region.lower));
  MrCbfParams p = mr_cbf_params(bench.system, bench.cbf, centre, half, per_axis);
  p.epsilon = 0.0;
  return p;
}

FilterResult apply_filter(const Benchmark& bench, const FilterSpec& spec, const VectorXd& xhat, const ErrorSet& B,
                          const VectorXd& k_d, const MrCbfParams* mr_fixed) {
  const ControlAffineSystem& sys = bench.system;
  switch (spec.kind) {
    case FilterKind::StandardCbf:
      return standard_cbf_qp(sys, bench.cbf, xhat, k_d);
    case FilterKind::RCbf:
      return r_cbf_qp(sys, bench.cbf, xhat, k_d, spec.rcbf);
    case FilterKind::MrCbf: {
      if (spec.lipschitz_region.dim() == 0 && !spec.lipschitz_constants)
        return mr_cbf_qp(sys, bench.cbf, xhat, k_d, mr_cbf_params(sys, bench.cbf, xhat, B, spec.lipschitz_per_axis));
      MrCbfParams p = spec.lipschitz_constants ? *spec.lipschitz_constants
                      : mr_fixed                 ? *mr_fixed
                                                 : lipschitz_over_region(bench, spec.lipschitz_region, spec.lipschitz_per_axis);
      p.epsilon = B.kind == ErrorSet::Kind::Ball ? B.radius : B.half_widths.norm();
      return mr_cbf_qp(sys, bench.cbf, xhat, k_d, p);
    }
    case FilterKind::DualityQp: {
      const MatrixXd V = default_directions(sys.m + 1, spec.directions);
      return robust_dual_qp(k_d, polytopic_overapprox(sys, bench.cbf, xhat, B, V, spec.support_grid), sys.input_bounds);
    }
    case FilterKind::DualitySdp: {
      SamplingSpec s;
      s.mode = SamplingSpec::Mode::Random;
      s.count = spec.samples;
      s.seed = spec.sample_seed;
      return robust_dual_sdp(k_d, ellipsoid_fit(sample_image(sys, bench.cbf, xhat, B, s), spec.margin),
                             sys.input_bounds);
    }
    case FilterKind::Decoupled:
      return decoupled_box_qp(k_d, sample_image(sys, bench.cbf, xhat, B, spec.support_grid).points, sys.input_bounds);
  }
  throw std::invalid_argument("unknown filter kind");
}

std::string to_string(CorruptionModel::Kind kind) {
  switch (kind) {
    case CorruptionModel::Kind::None: return "none";
    case CorruptionModel::Kind::RandomInB: return "random";
    case CorruptionModel::Kind::Adversarial: return "adversarial";
    case CorruptionModel::Kind::FixedOffset: return "fixed_offset";
  }
  return "unknown";
}

CorruptionModel::Kind corruption_kind_from_string(const std::string& name) {
  for (auto k : {CorruptionModel::Kind::None, CorruptionModel::Kind::RandomInB, CorruptionModel::Kind::Adversarial,
                 CorruptionModel::Kind::FixedOffset}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown corruption model '" + name + "'");
}

VectorXd corrupt(const Benchmark& bench, const CorruptionModel& model, const ErrorSet& B, const VectorXd& x,
                 std::uint64_t step) {
  switch (model.kind) {
    case CorruptionModel::Kind::None:
      return x;
    case CorruptionModel::Kind::RandomInB: {
      // one fresh stream per step keeps runs reproducible regardless of history
      const std::uint64_t seed = model.seed ^ (0x9E3779B97F4A7C15ULL * (step + 1));
      const VectorXd e = random_states(VectorXd::Zero(B.n), B, 1, seed).col(0);
      return x - e;
    }
    case CorruptionModel::Kind::FixedOffset:
      if (model.offset.size() != B.n || !B.contains(model.offset, 1e-12))
        throw std::invalid_argument("fixed corruption offset must lie in B");
      return x - model.offset;
    case CorruptionModel::Kind::Adversarial: {
      const MatrixXd E = error_boundary(B, model.boundary_per_axis);
      VectorXd best = x;
      double best_h = bench.cbf.h(x);
      for (Index j = 0; j < E.cols(); ++j) {
        const VectorXd cand = x - E.col(j);
        if (!bench.system.domain.contains(cand)) continue;
        const double hv = bench.cbf.h(cand);
        if (hv > best_h) {
          best_h = hv;
          best = cand;
        }
      }
      return best;
    }
  }
  throw std::invalid_argument("unknown corruption model");
}

KdPolicy KdPolicy::constant(const VectorXd& u0) { return {MatrixXd(), u0}; }

KdPolicy KdPolicy::linear(const MatrixXd& K) { return {K, VectorXd::Zero(K.rows())}; }

VectorXd KdPolicy::operator()(const VectorXd& xhat) const {
  if (K.size() == 0) return u0;
  return K * xhat + u0;
}

std::string to_string(StepStatus status) {
  switch (status) {
    case StepStatus::Feasible: return "feasible";
    case StepStatus::Infeasible: return "infeasible";
    case StepStatus::SolverFailure: return "solver_failure";
  }
  return "unknown";
}

double Trajectory::min_h() const {
  if (h.empty()) return std::numeric_limits<double>::quiet_NaN();
  return *std::min_element(h.begin(), h.end());
}

Trajectory simulate(const Benchmark& bench, const SimConfig& config) {
  const ControlAffineSystem& sys = bench.system;
  if (!(config.horizon > 0.0)) throw std::invalid_argument("simulate needs a positive horizon");
  if (!(config.dt > 0.0)) throw std::invalid_argument("simulate needs dt > 0");
  if (config.x0.size() != sys.n || !sys.domain.contains(config.x0))
    throw std::invalid_argument("initial state is outside the domain");
  if (config.B.n != sys.n) throw std::invalid_argument("error set dimension differs from the state dimension");

  MrCbfParams mr_fixed;
  const bool fixed = config.filter.kind == FilterKind::MrCbf && config.filter.lipschitz_region.dim() > 0 &&
                     !config.filter.lipschitz_constants;
  if (fixed) mr_fixed = lipschitz_over_region(bench, config.filter.lipschitz_region, config.filter.lipschitz_per_axis);

  const auto steps = static_cast<std::uint64_t>(std::llround(config.horizon / config.dt));
  Trajectory tr;
  tr.t.reserve(steps + 1);
  VectorXd x = config.x0;
  VectorXd u_prev;
  for (std::uint64_t k = 0; k <= steps; ++k) {
    const VectorXd xhat = corrupt(bench, config.corruption, config.B, x, k);
    if (!config.B.contains(x - xhat, 1e-9)) tr.estimates_valid = false;
    const VectorXd kd = config.k_d(xhat);

    const auto start = std::chrono::steady_clock::now();
    FilterResult r;
    try {
      r = apply_filter(bench, config.filter, xhat, config.B, kd, fixed ? &mr_fixed : nullptr);
    } catch (const DomainError&) {
      // the set {xhat} + B reaches outside the evaluators' domain
      r.status = FilterStatus::SolverFailure;
    }
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

    StepStatus st = StepStatus::Feasible;
    VectorXd u;
    if (r.feasible()) {
      u = r.u;
      if (!r.certified) ++tr.uncertified_solves;
      tr.max_relative_gap = std::max(tr.max_relative_gap, std::abs(r.gap) / (1.0 + std::abs(r.objective)));
    } else {
      st = r.status == FilterStatus::Infeasible ? StepStatus::Infeasible : StepStatus::SolverFailure;
      if (st == StepStatus::Infeasible) ++tr.infeasible_steps;
      else ++tr.failed_steps;
      u = u_prev.size() ? u_prev : sys.input_bounds.clamp(kd);
    }

    tr.t.push_back(static_cast<double>(k) * config.dt);
    tr.x.push_back(x);
    tr.xhat.push_back(xhat);
    tr.u.push_back(u);
    tr.h.push_back(bench.cbf.h(x));
    tr.status.push_back(st);
    tr.solve_ms.push_back(config.record_solve_time ? ms : 0.0);
    tr.total_solve_ms += ms;
    tr.max_solve_ms = std::max(tr.max_solve_ms, ms);
    u_prev = u;

    if (k == steps) break;
    const Rk4Result next = rk4_step(sys, x, u, config.dt);
    if (!next.in_domain) {
      tr.domain_exit = true;
      break;
    }
    x = next.x;
  }
  return tr;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_csv(const Trajectory& tr, std::ostream& out) {
  const Index n = tr.x.empty() ? 0 : tr.x.front().size();
  const Index m = tr.u.empty() ? 0 : tr.u.front().size();
  out << "t";
  for (Index i = 1; i <= n; ++i) out << ",x" << i;
  for (Index i = 1; i <= n; ++i) out << ",xhat" << i;
  for (Index i = 1; i <= m; ++i) out << ",u" << i;
  out << ",h,status,solve_ms\n";
  for (std::size_t k = 0; k < tr.size(); ++k) {
    out << format_double(tr.t[k]);
    for (Index i = 0; i < n; ++i) out << ',' << format_double(tr.x[k](i));
    for (Index i = 0; i < n; ++i) out << ',' << format_double(tr.xhat[k](i));
    for (Index i = 0; i < m; ++i) out << ',' << format_double(tr.u[k](i));
    out << ',' << format_double(tr.h[k]) << ',' << to_string(tr.status[k]) << ',' << format_double(tr.solve_ms[k])
        << '\n';
  }
}

double SweepTable::first_infeasible_delta(FilterKind kind) const {
  for (std::size_t f = 0; f < filters.size(); ++f) {
    if (filters[f] != kind) continue;
    for (std::size_t d = 0; d < deltas.size(); ++d) {
      if (at(f, d).infeasible_steps > 0) return deltas[d];
    }
  }
  return std::numeric_limits<double>::quiet_NaN();
}

ErrorSet error_set_with_extent(const ErrorSet& like, double delta) {
  if (like.kind == ErrorSet::Kind::Ball) return ErrorSet::ball(like.n, delta);
  return ErrorSet::box(VectorXd::Constant(like.n, delta));
}

SweepTable min_h_sweep(const Benchmark& bench, const SimConfig& base, const std::vector<FilterSpec>& filters,
                       const std::vector<double>& deltas, int threads) {
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    if (!(deltas[i] >= 0.0) || (i > 0 && deltas[i] < deltas[i - 1]))
      throw std::invalid_argument("sweep magnitudes must be non-negative and ascending");
  }
  SweepTable table;
  table.deltas = deltas;
  for (const auto& f : filters) table.filters.push_back(f.kind);
  const std::size_t total = filters.size() * deltas.size();
  table.cells.resize(total);

  auto run_cell = [&](std::size_t idx) {
    const std::size_t f = idx / deltas.size();
    const std::size_t d = idx % deltas.size();
    SimConfig cfg = base;
    cfg.filter = filters[f];
    cfg.B = error_set_with_extent(base.B, deltas[d]);
    const Trajectory tr = simulate(bench, cfg);
    SweepCell& c = table.cells[idx];
    c.filter = filters[f].kind;
    c.delta = deltas[d];
    c.min_h = tr.min_h();
    c.infeasible_steps = tr.infeasible_steps;
    c.failed_steps = tr.failed_steps;
    c.domain_exit = tr.domain_exit;
    c.uncertified_solves = tr.uncertified_solves;
    c.max_relative_gap = tr.max_relative_gap;
  };

  parallel_for(total, threads, run_cell);
  return table;
}

void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn) {
  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(std::min<std::size_t>(count, 1024))));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count && !failed; i = next++) {
        try {
          fn(i);
        } catch (...) {
          if (!failed.exchange(true)) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace robustcbf
