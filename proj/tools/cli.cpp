#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <random>
#include <set>
#include <sstream>

namespace robustcbf::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------- logging

enum class LogLevel { Quiet = 0, Error = 1, Warn = 2, Info = 3, Debug = 4 };

LogLevel log_level() {
  const char* env = std::getenv("ROBUSTCBF_LOG");
  if (!env) return LogLevel::Info;
  const std::string v = env;
  if (v == "quiet" || v == "0") return LogLevel::Quiet;
  if (v == "error" || v == "1") return LogLevel::Error;
  if (v == "warn" || v == "2") return LogLevel::Warn;
  if (v == "debug" || v == "4") return LogLevel::Debug;
  return LogLevel::Info;
}

void log(LogLevel level, const std::string& msg) {
  static const LogLevel threshold = log_level();
  if (level > threshold || level == LogLevel::Quiet) return;
  static const char* names[] = {"", "error", "warn", "info", "debug"};
  std::cerr << "[robustcbf " << names[static_cast<int>(level)] << "] " << msg << '\n';
}

// ---------------------------------------------------------------- strict JSON reading

// Object reader that remembers which keys were consumed, so that leftovers can
// be reported as unknown.
class Obj {
 public:
  Obj(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail("must be an object");
  }

  const json& get(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) fail("missing key '" + key + "'");
    return *it;
  }
  const json* find(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }
  void done() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw ConfigError(path_ + ": unknown key '" + item.key() + "'");
    }
  }
  std::string at(const std::string& key) const { return path_ + "." + key; }
  [[noreturn]] void fail(const std::string& msg) const { throw ConfigError(path_ + ": " + msg); }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

double number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path + ": expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError(path + ": must be finite");
  return v;
}

double non_negative(const json& j, const std::string& path) {
  const double v = number(j, path);
  if (v < 0.0) throw ConfigError(path + ": must be non-negative");
  return v;
}

double positive(const json& j, const std::string& path) {
  const double v = number(j, path);
  if (!(v > 0.0)) throw ConfigError(path + ": must be positive");
  return v;
}

long long integer(const json& j, const std::string& path, long long lo, long long hi) {
  if (!j.is_number_integer()) throw ConfigError(path + ": expected an integer");
  const long long v = j.get<long long>();
  if (v < lo || v > hi)
    throw ConfigError(path + ": must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  return v;
}

std::string text(const json& j, const std::string& path) {
  if (!j.is_string()) throw ConfigError(path + ": expected a string");
  return j.get<std::string>();
}

VectorXd vector(const json& j, const std::string& path, Index size) {
  if (!j.is_array()) throw ConfigError(path + ": expected an array of numbers");
  if (size >= 0 && static_cast<Index>(j.size()) != size)
    throw ConfigError(path + ": expected " + std::to_string(size) + " entries, got " + std::to_string(j.size()));
  VectorXd v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Index>(i)) = number(j[i], path + "[" + std::to_string(i) + "]");
  return v;
}

MatrixXd matrix(const json& j, const std::string& path, Index rows, Index cols) {
  if (!j.is_array() || static_cast<Index>(j.size()) != rows)
    throw ConfigError(path + ": expected " + std::to_string(rows) + " rows");
  MatrixXd M(rows, cols);
  for (Index r = 0; r < rows; ++r) M.row(r) = vector(j[r], path + "[" + std::to_string(r) + "]", cols).transpose();
  return M;
}

json to_json(const VectorXd& v) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

json to_json(const MatrixXd& M) {
  json a = json::array();
  for (Index r = 0; r < M.rows(); ++r) a.push_back(to_json(VectorXd(M.row(r).transpose())));
  return a;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

// ---------------------------------------------------------------- config parsing

SegwayParams parse_segway(const json& j, const std::string& path) {
  Obj o(j, path);
  SegwayParams p;
  const std::pair<const char*, double*> fields[] = {{"m0", &p.m0}, {"mb", &p.mb}, {"L", &p.L},   {"J0", &p.J0},
                                                    {"R", &p.R},   {"g", &p.g},   {"km", &p.km}, {"bt", &p.bt}};
  for (const auto& [key, dst] : fields) {
    if (const json* v = o.find(key)) *dst = number(*v, o.at(key));
  }
  o.done();
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return p;
}

NamedFilter parse_filter(const json& j, const std::string& path, const Benchmark& bench) {
  Obj o(j, path);
  NamedFilter nf;
  const std::string kind = text(o.get("kind"), o.at("kind"));
  try {
    nf.spec.kind = filter_kind_from_string(kind);
  } catch (const std::invalid_argument&) {
    throw ConfigError(o.at("kind") + ": unknown filter '" + kind + "'");
  }
  nf.label = kind;
  if (const json* v = o.find("label")) nf.label = text(*v, o.at("label"));
  if (nf.label.empty() || nf.label.find_first_not_of("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_-") !=
                              std::string::npos)
    throw ConfigError(o.at("label") + ": labels use letters, digits, '_' and '-'");

  const Index n = bench.system.n;
  const Index m = bench.system.m;
  FilterSpec& s = nf.spec;
  switch (s.kind) {
    case FilterKind::StandardCbf:
      break;
    case FilterKind::RCbf:
      if (const json* v = o.find("gamma1")) s.rcbf.gamma1 = non_negative(*v, o.at("gamma1"));
      if (const json* v = o.find("gamma2")) s.rcbf.gamma2 = non_negative(*v, o.at("gamma2"));
      break;
    case FilterKind::MrCbf:
      if (const json* v = o.find("lipschitz_per_axis"))
        s.lipschitz_per_axis = static_cast<int>(integer(*v, o.at("lipschitz_per_axis"), 2, 1001));
      if (const json* v = o.find("lipschitz_region")) {
        Obj r(*v, o.at("lipschitz_region"));
        s.lipschitz_region.lower = vector(r.get("lower"), r.at("lower"), n);
        s.lipschitz_region.upper = vector(r.get("upper"), r.at("upper"), n);
        r.done();
        if ((s.lipschitz_region.lower.array() > s.lipschitz_region.upper.array()).any())
          r.fail("lower exceeds upper");
        if (!bench.system.domain.contains(s.lipschitz_region.lower) ||
            !bench.system.domain.contains(s.lipschitz_region.upper))
          r.fail("region leaves the benchmark domain");
      }
      if (const json* v = o.find("lipschitz_constants")) {
        Obj c(*v, o.at("lipschitz_constants"));
        MrCbfParams p;
        p.L_lfh = non_negative(c.get("L_lfh"), c.at("L_lfh"));
        p.L_alpha_h = non_negative(c.get("L_alpha_h"), c.at("L_alpha_h"));
        p.L_lgh = non_negative(c.get("L_lgh"), c.at("L_lgh"));
        c.done();
        s.lipschitz_constants = p;
      }
      break;
    case FilterKind::DualityQp:
      if (const json* v = o.find("directions"))
        s.directions = static_cast<int>(integer(*v, o.at("directions"), m + 2, 100000));
      [[fallthrough]];
    case FilterKind::Decoupled:
      if (const json* v = o.find("support_per_axis"))
        s.support_grid.per_axis = static_cast<int>(integer(*v, o.at("support_per_axis"), 2, 100001));
      break;
    case FilterKind::DualitySdp:
      if (const json* v = o.find("samples")) s.samples = static_cast<int>(integer(*v, o.at("samples"), m + 2, 10000000));
      if (const json* v = o.find("margin")) s.margin = non_negative(*v, o.at("margin"));
      break;
  }
  o.done();
  return nf;
}

ErrorSet parse_error_set(const json& j, const std::string& path, Index n) {
  Obj o(j, path);
  const std::string type = text(o.get("type"), o.at("type"));
  ErrorSet B;
  if (type == "box") {
    const VectorXd w = vector(o.get("half_widths"), o.at("half_widths"), n);
    if ((w.array() < 0.0).any()) o.fail("half widths must be non-negative");
    B = ErrorSet::box(w);
  } else if (type == "ball") {
    B = ErrorSet::ball(n, non_negative(o.get("radius"), o.at("radius")));
  } else {
    o.fail("type must be \"box\" or \"ball\"");
  }
  o.done();
  return B;
}

KdConfig parse_kd(const json& j, const std::string& path, Index n, Index m) {
  Obj o(j, path);
  KdConfig k;
  const std::string type = text(o.get("type"), o.at("type"));
  if (type == "constant") {
    k.type = KdConfig::Type::Constant;
    k.u0 = vector(o.get("u"), o.at("u"), m);
  } else if (type == "linear") {
    k.type = KdConfig::Type::Linear;
    k.K = matrix(o.get("K"), o.at("K"), m, n);
    k.u0 = VectorXd::Zero(m);
    if (const json* v = o.find("u0")) k.u0 = vector(*v, o.at("u0"), m);
  } else if (type == "lqr") {
    k.type = KdConfig::Type::Lqr;
    k.q_diag = vector(o.get("Q_diag"), o.at("Q_diag"), n);
    k.r_diag = vector(o.get("R_diag"), o.at("R_diag"), m);
    if ((k.q_diag.array() < 0.0).any()) o.fail("Q_diag must be non-negative");
    if ((k.r_diag.array() <= 0.0).any()) o.fail("R_diag must be positive");
  } else {
    o.fail("type must be \"constant\", \"linear\" or \"lqr\"");
  }
  o.done();
  return k;
}

CorruptionModel parse_corruption(const json& j, const std::string& path, Index n) {
  Obj o(j, path);
  CorruptionModel c;
  const std::string model = text(o.get("model"), o.at("model"));
  try {
    c.kind = corruption_kind_from_string(model);
  } catch (const std::invalid_argument&) {
    o.fail("unknown model '" + model + "'");
  }
  if (c.kind == CorruptionModel::Kind::Adversarial) {
    if (const json* v = o.find("boundary_per_axis"))
      c.boundary_per_axis = static_cast<int>(integer(*v, o.at("boundary_per_axis"), 2, 1001));
  }
  if (c.kind == CorruptionModel::Kind::FixedOffset) c.offset = vector(o.get("offset"), o.at("offset"), n);
  o.done();
  return c;
}

std::vector<double> ascending_levels(const json& j, const std::string& path) {
  const VectorXd v = vector(j, path, -1);
  if (v.size() == 0) throw ConfigError(path + ": needs at least one level");
  std::vector<double> out(v.data(), v.data() + v.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i] < 0.0) throw ConfigError(path + ": levels must be non-negative");
    if (i > 0 && !(out[i] > out[i - 1])) throw ConfigError(path + ": levels must be strictly ascending");
  }
  return out;
}

void require_inside(const Benchmark& bench, const VectorXd& centre, const ErrorSet& B, const std::string& path) {
  const VectorXd ext = B.extent();
  if (!bench.system.domain.contains(centre - ext) || !bench.system.domain.contains(centre + ext))
    throw ConfigError(path + ": {state} + B must stay inside the benchmark domain");
}

std::vector<ErrorSet> error_sets(const ExperimentConfig& c) {
  if (c.levels.empty()) return {c.error_set};
  std::vector<ErrorSet> out;
  for (double lv : c.levels) out.push_back(error_set_with_extent(c.error_set, lv));
  return out;
}

std::string format_level(double v) { return format_double(v); }

}  // namespace

// ---------------------------------------------------------------- public parsing

ExperimentConfig parse_config(const json& doc) {
  Obj o(doc, "config");
  ExperimentConfig c;
  c.name = text(o.get("name"), o.at("name"));
  if (c.name.empty() ||
      c.name.find_first_not_of("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_-") != std::string::npos)
    throw ConfigError("config.name: use letters, digits, '_' and '-'");

  const std::string kind = text(o.get("experiment"), o.at("experiment"));
  if (kind == "static") c.kind = ExperimentConfig::Kind::Static;
  else if (kind == "closed_loop") c.kind = ExperimentConfig::Kind::ClosedLoop;
  else throw ConfigError("config.experiment: must be \"static\" or \"closed_loop\"");

  c.benchmark = text(o.get("benchmark"), o.at("benchmark"));
  if (c.benchmark != "scalar" && c.benchmark != "double_integrator" && c.benchmark != "segway")
    throw ConfigError("config.benchmark: unknown benchmark '" + c.benchmark + "'");
  if (const json* v = o.find("segway_params")) {
    if (c.benchmark != "segway") throw ConfigError("config.segway_params: only valid for the segway benchmark");
    c.segway = parse_segway(*v, o.at("segway_params"));
  }
  const Benchmark bench = make_benchmark(c);
  const Index n = bench.system.n;
  const Index m = bench.system.m;

  const json& filters = o.get("filters");
  if (!filters.is_array() || filters.empty()) throw ConfigError("config.filters: expected a non-empty array");
  std::set<std::string> labels;
  for (std::size_t i = 0; i < filters.size(); ++i) {
    NamedFilter f = parse_filter(filters[i], "config.filters[" + std::to_string(i) + "]", bench);
    if (!labels.insert(f.label).second) throw ConfigError("config.filters: duplicate label '" + f.label + "'");
    c.filters.push_back(std::move(f));
  }

  c.error_set = parse_error_set(o.get("error_set"), o.at("error_set"), n);
  c.k_d = parse_kd(o.get("k_d"), o.at("k_d"), n, m);
  if (const json* v = o.find("seed")) {
    if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<long long>() >= 0))
      throw ConfigError("config.seed: expected a non-negative integer");
    c.seed = v->get<std::uint64_t>();
  }

  if (c.kind == ExperimentConfig::Kind::Static) {
    c.xhat = vector(o.get("xhat"), o.at("xhat"), n);
    require_inside(bench, c.xhat, c.error_set, "config.xhat");
    if (const json* v = o.find("check_points"))
      c.check_points = static_cast<int>(integer(*v, o.at("check_points"), 2, 10000000));
  } else {
    c.x0 = vector(o.get("x0"), o.at("x0"), n);
    if (!bench.system.domain.contains(c.x0)) throw ConfigError("config.x0: outside the benchmark domain");
    if (const json* v = o.find("dt")) c.dt = positive(*v, o.at("dt"));
    if (const json* v = o.find("horizon")) c.horizon = positive(*v, o.at("horizon"));
    if (c.horizon / c.dt > 1e7) throw ConfigError("config.horizon: more than 1e7 steps");
    if (c.horizon / c.dt < 0.5) throw ConfigError("config.horizon: shorter than one step");
    if (const json* v = o.find("levels")) c.levels = ascending_levels(*v, o.at("levels"));
    if (const json* v = o.find("corruption")) c.corruption = parse_corruption(*v, o.at("corruption"), n);
    if (c.corruption.kind == CorruptionModel::Kind::FixedOffset) {
      for (const ErrorSet& B : error_sets(c)) {
        if (!B.contains(c.corruption.offset, 1e-12))
          throw ConfigError("config.corruption.offset: must lie in B at every level");
      }
    }
    if (const json* v = o.find("trajectories")) {
      if (v->is_string()) {
        const std::string mode = v->get<std::string>();
        if (mode == "none") c.trajectory_levels = std::vector<double>{};
        else if (mode != "all") throw ConfigError("config.trajectories: expected \"all\", \"none\" or a list of levels");
      } else {
        if (c.levels.empty()) throw ConfigError("config.trajectories: a list of levels needs config.levels");
        const VectorXd t = vector(*v, o.at("trajectories"), -1);
        std::vector<double> keep;
        for (Index i = 0; i < t.size(); ++i) {
          if (std::find(c.levels.begin(), c.levels.end(), t(i)) == c.levels.end())
            throw ConfigError("config.trajectories: " + format_level(t(i)) + " is not one of the levels");
          keep.push_back(t(i));
        }
        c.trajectory_levels = keep;
      }
    }
  }
  o.done();
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_config(doc);
}

// ---------------------------------------------------------------- built-in examples

const std::vector<std::string>& builtin_names() {
  static const std::vector<std::string> names = {"example1", "example2", "example3"};
  return names;
}

json builtin_config(const std::string& name) {
  if (name == "example1") {
    // Scalar system at xhat = 1 with |e| <= 0.05: the decoupled interval
    // approach and MR-CBF have no solution, the coupled polytope does.
    return json::parse(R"({
      "name": "example1",
      "experiment": "static",
      "benchmark": "scalar",
      "xhat": [1.0],
      "error_set": {"type": "box", "half_widths": [0.05]},
      "k_d": {"type": "constant", "u": [0.0]},
      "filters": [
        {"kind": "decoupled"},
        {"kind": "mr_cbf"},
        {"kind": "duality_qp", "directions": 16}
      ],
      "check_points": 10001,
      "seed": 42
    })");
  }
  if (name == "example2") {
    // Double integrator sweep over box errors |e_i| <= delta. MR-CBF uses the
    // exact Lipschitz constants over the safe set 1 - x'Mx >= 0,
    // M = [1 .5; .5 1]: 2 sqrt 2, sqrt 6 and sqrt 5.
    return json::parse(R"({
      "name": "example2",
      "experiment": "closed_loop",
      "benchmark": "double_integrator",
      "x0": [0.4, 0.6],
      "dt": 0.001,
      "horizon": 5.0,
      "error_set": {"type": "box", "half_widths": [0.01, 0.01]},
      "levels": [0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08, 0.09, 0.1,
                 0.11, 0.12, 0.13, 0.14, 0.15, 0.16, 0.17, 0.18, 0.19, 0.2],
      "corruption": {"model": "adversarial", "boundary_per_axis": 21},
      "k_d": {"type": "constant", "u": [0.0]},
      "filters": [
        {"kind": "standard_cbf"},
        {"kind": "r_cbf", "gamma1": 0.05, "gamma2": 0.5},
        {"kind": "mr_cbf", "lipschitz_constants":
          {"L_lfh": 2.8284271247461903, "L_alpha_h": 2.449489742783178, "L_lgh": 2.23606797749979}},
        {"kind": "duality_qp", "directions": 16}
      ],
      "trajectories": [0.05, 0.1],
      "seed": 42
    })");
  }
  if (name == "example3") {
    // Segway from (-4, -0.5, 0, 1) under an LQR reference that leaves the safe
    // set, with estimates pushed towards larger h.
    return json::parse(R"({
      "name": "example3",
      "experiment": "closed_loop",
      "benchmark": "segway",
      "x0": [-4.0, -0.5, 0.0, 1.0],
      "dt": 0.001,
      "horizon": 3.0,
      "error_set": {"type": "ball", "radius": 0.05},
      "levels": [0.02, 0.05, 0.1],
      "corruption": {"model": "adversarial", "boundary_per_axis": 21},
      "k_d": {"type": "lqr", "Q_diag": [1.0, 1.0, 1.0, 1.0], "R_diag": [1.0]},
      "filters": [
        {"kind": "standard_cbf"},
        {"kind": "r_cbf", "gamma1": 0.05, "gamma2": 0.5},
        {"kind": "duality_sdp", "samples": 1000, "margin": 0.01}
      ],
      "trajectories": "all",
      "seed": 42
    })");
  }
  throw ConfigError("unknown example '" + name + "' (expected example1, example2 or example3)");
}

// ---------------------------------------------------------------- running

Benchmark make_benchmark(const ExperimentConfig& config) { return benchmark_by_id(config.benchmark, config.segway); }

KdPolicy make_policy(const ExperimentConfig& config, const Benchmark& bench) {
  const KdConfig& k = config.k_d;
  switch (k.type) {
    case KdConfig::Type::Constant:
      return KdPolicy::constant(k.u0);
    case KdConfig::Type::Linear: {
      KdPolicy p = KdPolicy::linear(k.K);
      p.u0 = k.u0;
      return p;
    }
    case KdConfig::Type::Lqr: {
      const Index n = bench.system.n;
      const Index m = bench.system.m;
      const VectorXd x0 = VectorXd::Zero(n);
      const VectorXd u0 = VectorXd::Zero(m);
      if (!bench.system.domain.contains(x0) || bench.system.dynamics(x0, u0).norm() > 1e-9)
        throw ConfigError("config.k_d: LQR needs the origin to be an equilibrium");
      MatrixXd A, B;
      linearize(bench.system, x0, u0, A, B);
      try {
        return KdPolicy::linear(-lqr_gain(A, B, k.q_diag.asDiagonal(), k.r_diag.asDiagonal()));
      } catch (const std::runtime_error& e) {
        throw ConfigError(std::string("config.k_d: ") + e.what());
      }
    }
  }
  throw ConfigError("config.k_d: unknown type");
}

namespace {

json error_set_json(const ErrorSet& B) {
  if (B.kind == ErrorSet::Kind::Ball) return {{"type", "ball"}, {"radius", B.radius}};
  return {{"type", "box"}, {"half_widths", to_json(B.half_widths)}};
}

json solver_json(const FilterResult& r) {
  return {{"solver_status", conic::to_string(r.solver_status)},
          {"certified", r.certified},
          {"objective", r.objective},
          {"gap", r.gap},
          {"iterations", r.iterations}};
}

std::string csv_header_join(const std::vector<std::string>& cols) {
  std::string s;
  for (std::size_t i = 0; i < cols.size(); ++i) s += (i ? "," : "") + cols[i];
  return s + "\n";
}

Artifacts run_static(const ExperimentConfig& c, const Benchmark& bench, const KdPolicy& policy) {
  const ControlAffineSystem& sys = bench.system;
  const Index n = sys.n;
  const Index m = sys.m;
  const ErrorSet& B = c.error_set;
  const VectorXd kd = policy(c.xhat);

  const MatrixXd S = state_grid(c.xhat, B, grid_resolution(n, c.check_points));
  MatrixXd A(m, S.cols());
  VectorXd b(S.cols());
  for (Index j = 0; j < S.cols(); ++j) {
    const CbfCoefficients cf = coefficients(sys, bench.cbf, S.col(j));
    A.col(j) = cf.a;
    b(j) = cf.b;
  }

  Artifacts art;
  {
    std::ostringstream out;
    std::vector<std::string> cols;
    for (Index i = 1; i <= n; ++i) cols.push_back("x" + std::to_string(i));
    for (Index i = 1; i <= m; ++i) cols.push_back("a" + std::to_string(i));
    cols.push_back("b");
    out << csv_header_join(cols);
    for (Index j = 0; j < S.cols(); ++j) {
      for (Index i = 0; i < n; ++i) out << format_double(S(i, j)) << ',';
      for (Index i = 0; i < m; ++i) out << format_double(A(i, j)) << ',';
      out << format_double(b(j)) << '\n';
    }
    art.files["coefficients.csv"] = out.str();
  }

  json& s = art.summary;
  s["coefficient_ranges"] = {{"a_min", to_json(VectorXd(A.rowwise().minCoeff()))},
                             {"a_max", to_json(VectorXd(A.rowwise().maxCoeff()))},
                             {"b_min", b.minCoeff()},
                             {"b_max", b.maxCoeff()},
                             {"grid_points", S.cols()}};
  s["xhat"] = to_json(c.xhat);
  s["k_d"] = to_json(kd);

  std::ostringstream table;
  std::vector<std::string> cols = {"filter", "status"};
  for (Index i = 1; i <= m; ++i) cols.push_back("u" + std::to_string(i));
  cols.insert(cols.end(), {"min_constraint", "u_feasible", "certified"});
  table << csv_header_join(cols);

  json filters = json::object();
  for (const NamedFilter& nf : c.filters) {
    log(LogLevel::Info, "evaluating " + nf.label);
    const FilterResult r = apply_filter(bench, nf.spec, c.xhat, B, kd);
    double worst = std::numeric_limits<double>::quiet_NaN();
    if (r.feasible()) worst = (A.transpose() * r.u + b).minCoeff();
    // interior-point inputs may sit on the robust boundary up to the solver tolerance
    const bool ok = r.feasible() && worst >= -1e-9;
    json f = {{"kind", to_string(nf.spec.kind)},
              {"status", to_string(r.status)},
              {"u", r.feasible() ? to_json(r.u) : json(nullptr)},
              {"min_constraint", number_or_null(worst)},
              {"u_feasible", ok}};
    f.update(solver_json(r));
    filters[nf.label] = f;

    table << nf.label << ',' << to_string(r.status);
    for (Index i = 0; i < m; ++i) table << ',' << (r.feasible() ? format_double(r.u(i)) : "");
    table << ',' << (r.feasible() ? format_double(worst) : "") << ',' << (ok ? "true" : "false") << ','
          << (r.certified ? "true" : "false") << '\n';
  }
  s["filters"] = filters;
  art.files["feasibility.csv"] = table.str();
  return art;
}

struct CellOut {
  json run;
  std::string csv;
  std::string file;
  double min_h = 0.0;
  std::string status;
};

std::string cell_status(const Trajectory& tr) {
  if (tr.infeasible_steps > 0) return "infeasible";
  if (tr.failed_steps > 0) return "solver_failure";
  if (tr.domain_exit) return "domain_exit";
  return "feasible";
}

Artifacts run_closed_loop(const ExperimentConfig& c, const Benchmark& bench, const KdPolicy& policy,
                          const RunOptions& options) {
  const std::vector<ErrorSet> sets = error_sets(c);
  const bool leveled = !c.levels.empty();
  const std::size_t F = c.filters.size();
  const std::size_t L = sets.size();
  std::vector<CellOut> cells(F * L);

  auto wanted = [&](std::size_t l) {
    if (!c.trajectory_levels) return true;
    return leveled && std::find(c.trajectory_levels->begin(), c.trajectory_levels->end(), c.levels[l]) !=
                          c.trajectory_levels->end();
  };

  parallel_for(F * L, options.threads, [&](std::size_t idx) {
    const std::size_t f = idx / L;
    const std::size_t l = idx % L;
    const NamedFilter& nf = c.filters[f];
    SimConfig sc;
    sc.filter = nf.spec;
    sc.corruption = c.corruption;
    sc.B = sets[l];
    sc.x0 = c.x0;
    sc.k_d = policy;
    sc.dt = c.dt;
    sc.horizon = c.horizon;
    sc.record_solve_time = options.timing;
    const Trajectory tr = simulate(bench, sc);

    CellOut& out = cells[idx];
    out.min_h = tr.min_h();
    out.status = cell_status(tr);
    if (wanted(l)) {
      out.file = "traj_" + nf.label + (leveled ? "_" + format_level(c.levels[l]) : "") + ".csv";
      std::ostringstream csv;
      write_csv(tr, csv);
      out.csv = csv.str();
    }
    const double steps = static_cast<double>(tr.size());
    out.run = {{"level", leveled ? json(c.levels[l]) : json(nullptr)},
               {"min_h", out.min_h},
               {"final_h", tr.h.back()},
               {"steps", tr.size()},
               {"status", out.status},
               {"infeasible_steps", tr.infeasible_steps},
               {"failed_steps", tr.failed_steps},
               {"domain_exit", tr.domain_exit},
               {"uncertified_solves", tr.uncertified_solves},
               {"max_relative_gap", tr.max_relative_gap},
               {"estimates_valid", tr.estimates_valid},
               {"trajectory", out.file.empty() ? json(nullptr) : json(out.file)},
               {"solve_ms", {{"total", tr.total_solve_ms}, {"mean", tr.total_solve_ms / steps}, {"max", tr.max_solve_ms}}}};
    log(LogLevel::Debug, nf.label + (leveled ? " level " + format_level(c.levels[l]) : "") +
                             ": min_h " + format_double(out.min_h) + ", " + out.status);
  });

  Artifacts art;
  json filters = json::object();
  for (std::size_t f = 0; f < F; ++f) {
    const NamedFilter& nf = c.filters[f];
    json runs = json::array();
    double first_infeasible = std::numeric_limits<double>::quiet_NaN();
    double worst = std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < L; ++l) {
      CellOut& cell = cells[f * L + l];
      runs.push_back(cell.run);
      worst = std::min(worst, cell.min_h);
      if (leveled && std::isnan(first_infeasible) && cell.status == "infeasible") first_infeasible = c.levels[l];
      if (!cell.file.empty()) art.files[cell.file] = std::move(cell.csv);
    }
    filters[nf.label] = {{"kind", to_string(nf.spec.kind)},
                         {"min_h", worst},
                         {"first_infeasible_level", number_or_null(first_infeasible)},
                         {"runs", runs}};
  }
  art.summary["filters"] = filters;
  art.summary["x0"] = to_json(c.x0);
  art.summary["error_set"] = error_set_json(c.error_set);
  art.summary["levels"] = c.levels;
  art.summary["corruption"] = to_string(c.corruption.kind);
  if (policy.K.size() > 0) art.summary["k_d"] = {{"K", to_json(policy.K)}, {"u0", to_json(policy.u0)}};
  else art.summary["k_d"] = {{"u", to_json(policy.u0)}};

  if (leveled) {
    std::ostringstream out;
    std::vector<std::string> cols = {"level"};
    for (const auto& nf : c.filters) cols.push_back(nf.label + "_min_h");
    for (const auto& nf : c.filters) cols.push_back(nf.label + "_status");
    out << csv_header_join(cols);
    for (std::size_t l = 0; l < L; ++l) {
      out << format_level(c.levels[l]);
      for (std::size_t f = 0; f < F; ++f) out << ',' << format_double(cells[f * L + l].min_h);
      for (std::size_t f = 0; f < F; ++f) out << ',' << cells[f * L + l].status;
      out << '\n';
    }
    art.files["sweep.csv"] = out.str();
  }
  return art;
}

}  // namespace

Artifacts run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  ExperimentConfig c = config;
  if (options.seed) c.seed = *options.seed;
  c.corruption.seed = c.seed;
  for (NamedFilter& f : c.filters) f.spec.sample_seed = c.seed;

  const Benchmark bench = make_benchmark(c);
  const KdPolicy policy = make_policy(c, bench);
  Artifacts art = c.kind == ExperimentConfig::Kind::Static ? run_static(c, bench, policy)
                                                           : run_closed_loop(c, bench, policy, options);
  art.summary["name"] = c.name;
  art.summary["experiment"] = c.kind == ExperimentConfig::Kind::Static ? "static" : "closed_loop";
  art.summary["benchmark"] = c.benchmark;
  art.summary["seed"] = c.seed;
  art.files["summary.json"] = art.summary.dump(2) + "\n";
  return art;
}

void write_artifacts(const Artifacts& artifacts, const fs::path& dir) {
  fs::create_directories(dir);
  std::random_device rd;
  const fs::path staging = dir / (".staging-" + std::to_string(rd()));
  try {
    fs::create_directory(staging);
    for (const auto& [name, content] : artifacts.files) {
      std::ofstream out(staging / name, std::ios::binary);
      out << content;
      out.close();
      if (!out) throw std::runtime_error("failed to write " + (staging / name).string());
    }
    for (const auto& [name, content] : artifacts.files) fs::rename(staging / name, dir / name);
    fs::remove(staging);
  } catch (...) {
    std::error_code ec;
    fs::remove_all(staging, ec);
    throw;
  }
}

// ---------------------------------------------------------------- command line

namespace {

void print_report(const Artifacts& art, std::ostream& out) {
  const json& s = art.summary;
  out << s["name"].get<std::string>() << " (" << s["benchmark"].get<std::string>() << ")\n";
  for (const auto& [label, f] : s["filters"].items()) {
    if (f.contains("runs")) {
      out << "  " << label << ": min_h " << format_double(f["min_h"].get<double>());
      if (!f["first_infeasible_level"].is_null())
        out << ", first infeasible at level " << format_double(f["first_infeasible_level"].get<double>());
      out << '\n';
    } else {
      out << "  " << label << ": " << f["status"].get<std::string>();
      if (!f["u"].is_null()) out << ", u = " << f["u"].dump() << (f["u_feasible"].get<bool>() ? " (robustly safe)" : "");
      out << '\n';
    }
  }
}

int execute(const json& doc, const std::string& out_dir, const RunOptions& options) {
  ExperimentConfig config;
  try {
    config = parse_config(doc);
  } catch (const ConfigError& e) {
    log(LogLevel::Error, e.what());
    return 2;
  }
  const fs::path dir = out_dir.empty() ? fs::path("out") / config.name : fs::path(out_dir);
  Artifacts art;
  try {
    log(LogLevel::Info, "running " + config.name);
    art = run_experiment(config, options);
  } catch (const ConfigError& e) {
    log(LogLevel::Error, e.what());
    return 2;
  } catch (const std::exception& e) {
    log(LogLevel::Error, std::string("simulation fault: ") + e.what());
    return 1;
  }
  json echo = doc;
  echo["seed"] = options.seed ? *options.seed : config.seed;
  art.files["config.json"] = echo.dump(2) + "\n";
  try {
    write_artifacts(art, dir);
  } catch (const std::exception& e) {
    log(LogLevel::Error, std::string("cannot write outputs: ") + e.what());
    return 1;
  }
  print_report(art, std::cout);
  log(LogLevel::Info, "wrote " + std::to_string(art.files.size()) + " files to " + dir.string());
  return 0;
}

}  // namespace

int main_entry(int argc, char** argv) {
  CLI::App app{"Robust CBF safety filters under bounded state-estimation error"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string out_dir;
  std::uint64_t seed = 0;
  int threads = 1;
  bool timing = false;
  auto* seed_opt = app.add_option("--seed", seed, "Override the config seed");
  app.add_option("--out-dir", out_dir, "Output directory (default out/<name>)");
  app.add_option("--threads", threads, "Worker threads for closed-loop cells")->check(CLI::Range(1, 256));
  app.add_flag("--timing", timing, "Record per-step solve times in the trajectory CSVs");

  std::string config_path;
  std::string example;
  auto* run = app.add_subcommand("run", "Run an experiment config");
  run->add_option("config", config_path, "Config JSON")->required();
  auto* reproduce = app.add_subcommand("reproduce", "Run a built-in example");
  reproduce->add_option("name", example, "example1, example2 or example3")->required();
  auto* validate = app.add_subcommand("validate", "Check a config without running it");
  validate->add_option("config", config_path, "Config JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  RunOptions options;
  if (seed_opt->count() > 0) options.seed = seed;
  options.threads = threads;
  options.timing = timing;

  if (*reproduce) {
    json doc;
    try {
      doc = builtin_config(example);
    } catch (const ConfigError& e) {
      log(LogLevel::Error, e.what());
      return 2;
    }
    return execute(doc, out_dir, options);
  }

  json doc;
  {
    std::ifstream in(config_path);
    if (!in) {
      log(LogLevel::Error, "cannot read config file '" + config_path + "'");
      return 2;
    }
    try {
      doc = json::parse(in);
    } catch (const json::parse_error& e) {
      log(LogLevel::Error, "'" + config_path + "' is not valid JSON: " + e.what());
      return 2;
    }
  }
  if (*validate) {
    try {
      const ExperimentConfig config = parse_config(doc);
      make_policy(config, make_benchmark(config));
    } catch (const ConfigError& e) {
      log(LogLevel::Error, e.what());
      return 2;
    }
    std::cout << "valid\n";
    return 0;
  }
  return execute(doc, out_dir, options);
}

}  // namespace robustcbf::cli
