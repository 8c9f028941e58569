// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include "cli.hpp"
#include "robustcbf/filters.hpp"
#include "robustcbf/sim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace robustcbf;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Tolerances and budgets, one place.
constexpr double kRangeTol = 1e-3;          // criterion 1
constexpr double kFormulaTol = 1e-9;        // criterion 1, min a against the formula
constexpr double kDualityTol = 1e-6;        // criterion 3
constexpr double kOracleTol = 1e-4;         // criterion 4
constexpr double kHullTol = 1e-6;           // criterion 5
constexpr double kSafeDi = -1e-6;           // criterion 7
constexpr double kSafeSegway = -1e-4;       // criterion 8
constexpr double kGapTol = 1e-7;            // criterion 9, relative to 1 + |objective|
constexpr double kMrThreshold = 0.11;       // criterion 7: first infeasible delta above 0.1
constexpr double kSweepStep = 0.01;         // criterion 7 grid resolution
const Boxd kU1 = Boxd::uniform(1, -100.0, 100.0);

struct Verdict {
  bool pass = false;
  std::string detail;
};

// Every solve of criteria 1-8 is recorded here for criterion 9.
struct CertificateLedger {
  long optimal = 0;
  long uncertified = 0;
  double worst_gap = 0.0;
  long infeasible = 0;
  long infeasible_uncertified = 0;

  void add(const FilterResult& r) {
    if (r.solver_status == conic::SolveStatus::Optimal) {
      ++optimal;
      if (!r.certified) ++uncertified;
      worst_gap = std::max(worst_gap, std::abs(r.gap) / (1.0 + std::abs(r.objective)));
    } else if (r.status == FilterStatus::Infeasible) {
      ++infeasible;
      if (!r.certified) ++infeasible_uncertified;
    }
  }
  void add(const InnerMin& m) {
    if (m.status != conic::SolveStatus::Optimal) return;
    ++optimal;
    if (!m.certified) ++uncertified;
  }
  // Closed-loop runs report aggregated counts in the summary.
  void add_run(const json& run) {
    const long steps = run["steps"].get<long>() - run["infeasible_steps"].get<long>() - run["failed_steps"].get<long>();
    optimal += steps;
    uncertified += run["uncertified_solves"].get<long>();
    worst_gap = std::max(worst_gap, run["max_relative_gap"].get<double>());
  }
};

CertificateLedger ledger;

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[1024];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof(buf), f, ap);
  va_end(ap);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ------------------------------------------------------------------ oracles

// Scalar example written out by hand: xdot = x(x - 1.05)(x + 1.05) + (1 - x^2) u,
// h = 1 - x^2, alpha = id.
double oracle_a(double x) { return -2.0 * x * (1.0 - x * x); }
double oracle_b(double x) { return -2.0 * x * (x * (x - 1.05) * (x + 1.05)) + 1.0 - x * x; }

// Vertices of {C eta <= d} in 2 or 3 dimensions by brute force over all
// facet pairs / triples.
MatrixXd brute_vertices(const UncertaintyPolytope& P) {
  const Index k = P.dim();
  const Index rows = P.facets();
  std::vector<VectorXd> out;
  std::vector<Index> idx(static_cast<std::size_t>(k));
  std::function<void(Index, Index)> rec = [&](Index start, Index depth) {
    if (depth == k) {
      MatrixXd M(k, k);
      VectorXd rhs(k);
      for (Index i = 0; i < k; ++i) {
        M.row(i) = P.C.row(idx[static_cast<std::size_t>(i)]);
        rhs(i) = P.d(idx[static_cast<std::size_t>(i)]);
      }
      Eigen::FullPivLU<MatrixXd> lu(M);
      if (!lu.isInvertible()) return;
      const VectorXd v = lu.solve(rhs);
      if (P.contains(v, 1e-9)) out.push_back(v);
      return;
    }
    for (Index r = start; r < rows; ++r) {
      idx[static_cast<std::size_t>(depth)] = r;
      rec(r + 1, depth + 1);
    }
  };
  rec(0, 0);
  MatrixXd V(k, static_cast<Index>(out.size()));
  for (std::size_t j = 0; j < out.size(); ++j) V.col(static_cast<Index>(j)) = out[j];
  return V;
}

// Random bounded polytope around `centre` with `rows` facets.
UncertaintyPolytope random_polytope(std::mt19937_64& rng, const VectorXd& centre, int rows, double lo, double hi) {
  const Index k = centre.size();
  std::normal_distribution<double> N;
  std::uniform_real_distribution<double> off(lo, hi);
  UncertaintyPolytope P;
  P.C.resize(rows + 2 * k, k);
  P.d.resize(rows + 2 * k);
  for (int i = 0; i < rows; ++i) {
    VectorXd v(k);
    for (Index j = 0; j < k; ++j) v(j) = N(rng);
    v.normalize();
    P.C.row(i) = v.transpose();
    P.d(i) = v.dot(centre) + off(rng);
  }
  // a loose bounding box keeps every instance bounded
  for (Index j = 0; j < k; ++j) {
    P.C.row(rows + 2 * j) = VectorXd::Unit(k, j).transpose();
    P.d(rows + 2 * j) = centre(j) + 2.0 * hi;
    P.C.row(rows + 2 * j + 1) = -VectorXd::Unit(k, j).transpose();
    P.d(rows + 2 * j + 1) = -centre(j) + 2.0 * hi;
  }
  return P;
}

UncertaintyEllipsoid random_ellipsoid(std::mt19937_64& rng, const VectorXd& centre, double lo, double hi) {
  const Index k = centre.size();
  std::normal_distribution<double> N;
  std::uniform_real_distribution<double> ax(lo, hi);
  MatrixXd G(k, k);
  for (Index i = 0; i < k; ++i)
    for (Index j = 0; j < k; ++j) G(i, j) = N(rng);
  const MatrixXd Q = Eigen::HouseholderQR<MatrixXd>(G).householderQ();
  VectorXd semi(k);
  for (Index i = 0; i < k; ++i) semi(i) = ax(rng);
  // (eta - c)' P (eta - c) <= 1 with semi-axes `semi`
  const MatrixXd P = Q * semi.array().inverse().square().matrix().asDiagonal() * Q.transpose();
  UncertaintyEllipsoid E;
  E.P = P;
  E.q = -2.0 * P * centre;
  E.r = centre.dot(P * centre) - 1.0;
  return E;
}

VectorXd random_vector(std::mt19937_64& rng, Index n, double lo, double hi) {
  std::uniform_real_distribution<double> U(lo, hi);
  VectorXd v(n);
  for (Index i = 0; i < n; ++i) v(i) = U(rng);
  return v;
}

// ------------------------------------------------------------------ criteria

Verdict criterion1() {
  const auto t0 = std::chrono::steady_clock::now();
  const Benchmark bm = scalar_benchmark();
  double amin = 1e9, amax = -1e9, bmin = 1e9, bmax = -1e9, route = 0.0;
  const int N = 10001;
  for (int i = 0; i < N; ++i) {
    const double x = 0.95 + 0.1 * i / (N - 1);
    const CbfCoefficients c = coefficients(bm.system, bm.cbf, VectorXd::Constant(1, x));
    const double a = oracle_a(x), b = oracle_b(x);
    route = std::max({route, std::abs(a - c.a(0)), std::abs(b - c.b)});
    amin = std::min(amin, c.a(0));
    amax = std::max(amax, c.a(0));
    bmin = std::min(bmin, c.b);
    bmax = std::max(bmax, c.b);
  }
  const double secs = seconds_since(t0);
  const bool ok = std::abs(amax - 0.2152) <= kRangeTol && std::abs(bmin + 0.1025) <= kRangeTol &&
                  std::abs(bmax - 0.4585) <= kRangeTol && std::abs(amin - oracle_a(0.95)) <= kFormulaTol &&
                  std::abs(amax - oracle_a(1.05)) <= kFormulaTol &&
                  route <= 1e-12 && secs < 1.0;
  return {ok, fmt("a in [%.5f, %.5f] (formula %.5f, %.5f), b in [%.5f, %.5f], library vs hand formula %.1e, %.3f s",
                  amin, amax, oracle_a(0.95), oracle_a(1.05), bmin, bmax, route, secs)};
}

Verdict criterion2() {
  const auto t0 = std::chrono::steady_clock::now();
  const Benchmark bm = scalar_benchmark();
  const VectorXd xhat = VectorXd::Constant(1, 1.0);
  const ErrorSet B = ErrorSet::box(VectorXd::Constant(1, 0.05));
  const VectorXd kd = VectorXd::Zero(1);

  FilterSpec dec;
  dec.kind = FilterKind::Decoupled;
  const FilterResult r_dec = apply_filter(bm, dec, xhat, B, kd);
  const FilterResult r_mr = mr_cbf_qp(bm.system, bm.cbf, xhat, kd, mr_cbf_params(bm.system, bm.cbf, xhat, B));
  const auto P = polytopic_overapprox(bm.system, bm.cbf, xhat, B, default_directions(2, 16));
  const FilterResult r_dual = robust_dual_qp(kd, P, bm.system.input_bounds);
  for (const auto* r : {&r_dec, &r_mr, &r_dual}) ledger.add(*r);

  double worst_u2 = 1e9, worst_dual = 1e9;
  for (int i = 0; i < 10000; ++i) {
    const double x = 0.95 + 0.1 * i / 9999.0;
    worst_u2 = std::min(worst_u2, oracle_a(x) * 2.0 + oracle_b(x));
    if (r_dual.feasible()) worst_dual = std::min(worst_dual, oracle_a(x) * r_dual.u(0) + oracle_b(x));
  }
  const double secs = seconds_since(t0);
  const bool ok = r_dec.status == FilterStatus::Infeasible && r_mr.status == FilterStatus::Infeasible &&
                  r_dual.feasible() && worst_dual >= 0.0 && worst_u2 >= 0.0 && secs < 5.0;
  return {ok, fmt("decoupled %s, MR-CBF %s, duality QP %s (u = %.4f, grid min %.2e), u = 2 grid min %.4f, %.3f s",
                  to_string(r_dec.status).c_str(), to_string(r_mr.status).c_str(), to_string(r_dual.status).c_str(),
                  r_dual.feasible() ? r_dual.u(0) : NAN, worst_dual, worst_u2, secs)};
}

Verdict criterion3() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(3);
  double worst = 0.0;
  int count = 0, bad_status = 0;
  for (int k = 0; k < 200; ++k) {
    const Index m = 1 + k % 2;
    const VectorXd centre = random_vector(rng, m + 1, -1.0, 1.0);
    const VectorXd u = random_vector(rng, m, -3.0, 3.0);
    const auto P = random_polytope(rng, centre, 6 + k % 5, 0.1, 1.0);
    const auto E = random_ellipsoid(rng, centre, 0.05, 1.0);
    const InnerMin pp = inner_min_primal(u, P), pd = inner_min_dual(u, P);
    const InnerMin ep = inner_min_primal(u, E), ed = inner_min_dual(u, E);
    for (const auto* r : {&pp, &pd, &ep, &ed}) {
      ledger.add(*r);
      if (r->status != conic::SolveStatus::Optimal) ++bad_status;
    }
    worst = std::max({worst, std::abs(pp.value - pd.value), std::abs(ep.value - ed.value)});
    count += 2;
  }
  const double secs = seconds_since(t0);
  return {worst <= kDualityTol && bad_status == 0 && secs < 10.0,
          fmt("%d instances, max |primal - dual| = %.2e, non-optimal solves %d, %.2f s", count, worst, bad_status, secs)};
}

Verdict criterion4() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(4);
  double worst_poly = 0.0, worst_ell = 0.0;
  int mismatched = 0, feasible = 0;
  for (int k = 0; k < 50; ++k) {
    const Index m = 1 + k % 2;
    VectorXd centre = random_vector(rng, m + 1, -1.0, 1.0);
    centre(m) = std::abs(centre(m)) + 0.3;
    const auto P = random_polytope(rng, centre, 6 + k % 5, 0.1, 0.6);
    const VectorXd kd = random_vector(rng, m, -5.0, 5.0);
    const Boxd U = Boxd::uniform(m, -10.0, 10.0);
    const FilterResult dual = robust_dual_qp(kd, P, U);
    const FilterResult scen = scenario_oracle(kd, brute_vertices(P), U);
    ledger.add(dual);
    ledger.add(scen);
    if (dual.status != scen.status) ++mismatched;
    else if (dual.feasible()) {
      ++feasible;
      worst_poly = std::max(worst_poly, (dual.u - scen.u).norm());
    }
  }
  for (int k = 0; k < 50; ++k) {
    // 2-D image sets: 1e4 boundary samples resolve a planar ellipse to ~1e-7
    VectorXd centre = random_vector(rng, 2, -1.0, 1.0);
    centre(1) = std::abs(centre(1)) + 0.3;
    const auto E = random_ellipsoid(rng, centre, 0.05, 0.6);
    const VectorXd kd = random_vector(rng, 1, -5.0, 5.0);
    const Boxd U = Boxd::uniform(1, -10.0, 10.0);
    const FilterResult dual = robust_dual_sdp(kd, E, U);
    const FilterResult scen = scenario_oracle(kd, ellipsoid_boundary(E, 10000), U);
    ledger.add(dual);
    ledger.add(scen);
    if (dual.status != scen.status) ++mismatched;
    else if (dual.feasible()) {
      ++feasible;
      worst_ell = std::max(worst_ell, (dual.u - scen.u).norm());
    }
  }
  const double secs = seconds_since(t0);
  return {mismatched == 0 && worst_poly <= kOracleTol && worst_ell <= kOracleTol && feasible >= 50 && secs < 60.0,
          fmt("polytopes max |du| = %.2e, ellipsoids max |du| = %.2e, status mismatches %d, feasible %d/100, %.1f s",
              worst_poly, worst_ell, mismatched, feasible, secs)};
}

Verdict criterion5() {
  double worst = 0.0;
  int mismatched = 0, feasible = 0;
  for (int seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(500 + seed);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    const int N = 20 + 10 * (seed % 10);
    const double shift = 0.2 + 0.04 * seed;
    MatrixXd cloud(2, N);
    for (int j = 0; j < N; ++j) cloud.col(j) << U(rng), 0.6 * U(rng) + shift;
    const VectorXd kd = VectorXd::Constant(1, 4.0 * U(rng));
    const FilterResult scen = scenario_oracle(kd, cloud, kU1);
    const FilterResult hull = robust_dual_qp(kd, convex_hull_2d(cloud), kU1);
    ledger.add(scen);
    ledger.add(hull);
    if (scen.status != hull.status) ++mismatched;
    else if (scen.feasible()) {
      ++feasible;
      worst = std::max(worst, (scen.u - hull.u).norm());
    }
  }
  return {mismatched == 0 && worst <= kHullTol,
          fmt("50 seeds, max |u_scenario - u_hull| = %.2e, status mismatches %d, feasible %d", worst, mismatched,
              feasible)};
}

Verdict criterion6() {
  std::mt19937_64 rng(6);
  int agree = 0, feasible = 0;
  for (int k = 0; k < 100; ++k) {
    const Index m = 1 + k % 2;
    const VectorXd centre = random_vector(rng, m + 1, -1.0, 1.0);
    const Boxd U = Boxd::uniform(m, -100.0, 100.0);
    const VectorXd kd = VectorXd::Zero(m);
    bool check = false;
    FilterResult r;
    if (k % 2 == 0) {
      const auto P = random_polytope(rng, centre, 6, 0.1, 0.8);
      check = feasibility_check(P);
      r = robust_dual_qp(kd, P, U);
    } else {
      const auto E = random_ellipsoid(rng, centre, 0.05, 0.8);
      check = feasibility_check(E);
      r = robust_dual_sdp(kd, E, U);
    }
    ledger.add(r);
    if (check == r.feasible() && r.status != FilterStatus::SolverFailure) ++agree;
    if (check) ++feasible;
  }
  return {agree == 100 && feasible > 10 && feasible < 90,
          fmt("agreement on %d/100 sets (%d separable)", agree, feasible)};
}

struct Bundle {
  fs::path dir;
  double seconds = 0.0;
  int exit_code = -1;
};

Bundle reproduce(const std::string& name, const fs::path& dir) {
  Bundle b;
  b.dir = dir;
  std::vector<std::string> args = {"robustcbf", "reproduce", name, "--out-dir", dir.string()};
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  const auto t0 = std::chrono::steady_clock::now();
  b.exit_code = cli::main_entry(static_cast<int>(argv.size()), argv.data());
  b.seconds = seconds_since(t0);
  return b;
}

json summary_of(const Bundle& b) { return json::parse(slurp(b.dir / "summary.json")); }

Verdict criterion7(const Bundle& run) {
  if (run.exit_code != 0) return {false, fmt("reproduce example2 exited with %d", run.exit_code)};
  const json s = summary_of(run);
  const json& f = s["filters"];
  for (const char* label : {"standard_cbf", "mr_cbf", "duality_qp"}) {
    for (const json& r : f[label]["runs"]) ledger.add_run(r);
  }

  double duality_min = 1e9;
  bool duality_flagged = false;
  for (const json& r : f["duality_qp"]["runs"]) {
    duality_min = std::min(duality_min, r["min_h"].get<double>());
    duality_flagged = duality_flagged || r["status"] != "feasible";
  }
  double standard_max = -1e9;
  int standard_pos = 0;
  for (const json& r : f["standard_cbf"]["runs"]) {
    if (r["level"].get<double>() > 0.0) {
      standard_max = std::max(standard_max, r["min_h"].get<double>());
      if (r["min_h"].get<double>() >= 0.0) ++standard_pos;
    }
  }
  const json& first = f["mr_cbf"]["first_infeasible_level"];
  const double mr_first = first.is_null() ? NAN : first.get<double>();
  bool mr_monotone = !first.is_null();
  for (const json& r : f["mr_cbf"]["runs"]) {
    const bool inf = r["status"] == "infeasible";
    if (r["level"].get<double>() >= mr_first && !inf) mr_monotone = false;
  }
  const bool mr_ok = mr_monotone && std::abs(mr_first - kMrThreshold) <= kSweepStep + 1e-12;
  const bool ok = duality_min >= kSafeDi && !duality_flagged && standard_pos == 0 && mr_ok && run.seconds < 300.0;
  return {ok, fmt("duality min_h %.3e (flags: %s), standard CBF max min_h %.3f over delta > 0, MR-CBF first "
                  "infeasible at %.2f (target 0.11 +- 0.01, infeasible beyond: %s), %.0f s",
                  duality_min, duality_flagged ? "yes" : "no", standard_max, mr_first, mr_monotone ? "yes" : "no",
                  run.seconds)};
}

Verdict criterion8(const Bundle& run) {
  if (run.exit_code != 0) return {false, fmt("reproduce example3 exited with %d", run.exit_code)};
  const json s = summary_of(run);
  const json& f = s["filters"];
  for (const char* label : {"standard_cbf", "duality_sdp"}) {
    for (const json& r : f[label]["runs"]) ledger.add_run(r);
  }
  const json& dual = f["duality_sdp"]["runs"];
  const json& std_runs = f["standard_cbf"]["runs"];
  bool ok = dual.size() == 3 && std_runs.size() == 3 && run.seconds < 600.0;
  std::string detail;
  for (std::size_t l = 0; l < dual.size() && l < std_runs.size(); ++l) {
    const double hd = dual[l]["min_h"].get<double>();
    const double hs = std_runs[l]["min_h"].get<double>();
    ok = ok && hd >= kSafeSegway && dual[l]["status"] == "feasible" && hs < hd;
    detail += fmt("eps %.2f: duality %.4f vs standard %.4f; ", dual[l]["level"].get<double>(), hd, hs);
  }
  return {ok, detail + fmt("%.0f s", run.seconds)};
}

Verdict criterion9() {
  const bool ok = ledger.uncertified == 0 && ledger.worst_gap <= kGapTol && ledger.infeasible_uncertified == 0;
  return {ok, fmt("%ld optimal solves, %ld uncertified, worst gap/(1+|obj|) %.2e; %ld infeasibility "
                  "certificates, %ld rejected",
                  ledger.optimal, ledger.uncertified, ledger.worst_gap, ledger.infeasible, ledger.infeasible_uncertified)};
}

Verdict criterion10(const std::vector<std::pair<Bundle, Bundle>>& pairs) {
  int compared = 0, differing = 0;
  for (const auto& [a, b] : pairs) {
    if (a.exit_code != 0 || b.exit_code != 0) return {false, "a reproduce run failed"};
    for (const auto& entry : fs::directory_iterator(a.dir)) {
      if (entry.path().extension() != ".csv") continue;
      ++compared;
      const fs::path other = b.dir / entry.path().filename();
      if (!fs::exists(other) || slurp(entry.path()) != slurp(other)) ++differing;
    }
  }
  return {compared > 0 && differing == 0, fmt("%d CSV files compared, %d differ", compared, differing)};
}

void report(int id, const char* title, const Verdict& v, int& failures) {
  std::printf("%s %2d %s: %s\n", v.pass ? "PASS" : "FAIL", id, title, v.detail.c_str());
  std::fflush(stdout);
  if (!v.pass) ++failures;
}

}  // namespace

int main() {
  setenv("ROBUSTCBF_LOG", "warn", 0);
  std::random_device rd;
  const fs::path root = fs::temp_directory_path() / ("robustcbf_acceptance_" + std::to_string(rd()));
  int failures = 0;

  report(1, "Example 1 coefficient ranges", criterion1(), failures);
  report(2, "Example 1 infeasibility triple", criterion2(), failures);
  report(3, "Strong duality", criterion3(), failures);
  report(4, "Oracle equivalence", criterion4(), failures);
  report(5, "Hull exactness", criterion5(), failures);
  report(6, "Feasibility check consistency", criterion6(), failures);

  std::vector<std::pair<Bundle, Bundle>> pairs;
  for (const char* name : {"example1", "example2", "example3"}) {
    const Bundle a = reproduce(name, root / "first" / name);
    const Bundle b = reproduce(name, root / "second" / name);
    pairs.emplace_back(a, b);
  }
  report(7, "Double-integrator sweep", criterion7(pairs[1].first), failures);
  report(8, "Segway", criterion8(pairs[2].first), failures);
  report(9, "Solver certificates", criterion9(), failures);
  report(10, "Determinism", criterion10(pairs), failures);

  std::error_code ec;
  fs::remove_all(root, ec);
  std::printf("%d of 10 criteria passed\n", 10 - failures);
  return failures;
}
