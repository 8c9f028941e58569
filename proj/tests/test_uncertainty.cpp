#include "robustcbf/conic.hpp"
#include "robustcbf/uncertainty.hpp"

#include "doctest.h"

#include <cmath>
#include <random>

using namespace robustcbf;

namespace {

UncertaintyPolytope box_polytope(double alo, double ahi, double blo, double bhi) {
  UncertaintyPolytope P;
  P.C = MatrixXd{{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
  P.d = VectorXd{{ahi, -alo, bhi, -blo}};
  return P;
}

// Brute-force support of the image: a very fine grid with no slack.
double fine_support(const Benchmark& bm, const VectorXd& xhat, const ErrorSet& B, const VectorXd& v, int k) {
  const MatrixXd X = state_grid(xhat, B, k);
  double best = -1e300;
  for (Index j = 0; j < X.cols(); ++j) best = std::max(best, v.dot(coefficients(bm.system, bm.cbf, X.col(j)).stacked()));
  return best;
}

}  // namespace

TEST_CASE("scalar image samples on a three-point grid") {
  const auto bm = scalar_benchmark();
  SamplingSpec spec;
  spec.per_axis = 3;
  const auto s = sample_image(bm.system, bm.cbf, VectorXd::Constant(1, 1.0), ErrorSet::box(VectorXd::Constant(1, 0.05)), spec);
  REQUIRE(s.size() == 3);
  CHECK(s.points(0, 0) == doctest::Approx(-0.18525).epsilon(1e-12));
  CHECK(s.points(1, 0) == doctest::Approx(0.4585).epsilon(1e-4));
  CHECK(s.points(0, 1) == doctest::Approx(0.0));
  CHECK(s.points(1, 1) == doctest::Approx(0.205));
  CHECK(s.points(0, 2) == doctest::Approx(0.21525).epsilon(1e-12));
  CHECK(s.points(1, 2) == doctest::Approx(-0.10249).epsilon(1e-3));
}

TEST_CASE("degenerate error sets collapse to a single image point") {
  const auto bm = double_integrator_benchmark();
  const VectorXd xhat{{0.3, -0.2}};
  const auto exact = coefficients(bm.system, bm.cbf, xhat).stacked();
  for (const ErrorSet& B : {ErrorSet::box(VectorXd::Zero(2)), ErrorSet::ball(2, 0.0)}) {
    const auto s = sample_image(bm.system, bm.cbf, xhat, B);
    REQUIRE(s.size() == 1);
    CHECK((s.points.col(0) - exact).norm() == 0.0);
    const VectorXd v = VectorXd{{0.6, 0.8}};
    CHECK(support_value(bm.system, bm.cbf, xhat, B, v) == doctest::Approx(v.dot(exact)).epsilon(1e-15));
  }
  const auto sc = scalar_benchmark();
  const VectorXd x1 = VectorXd::Constant(1, 0.7);
  const auto B0 = ErrorSet::box(VectorXd::Zero(1));
  const VectorXd e1 = coefficients(sc.system, sc.cbf, x1).stacked();
  CHECK(support_value(sc.system, sc.cbf, x1, B0, VectorXd{{0.0, 1.0}}) == e1(1));
}

TEST_CASE("double integrator samples follow the closed-form map") {
  const auto bm = double_integrator_benchmark();
  const auto s = sample_image(bm.system, bm.cbf, VectorXd{{0.5, 0.5}}, ErrorSet::box(VectorXd{{0.1, 0.1}}));
  REQUIRE(s.size() > 1000);
  for (Index j = 0; j < s.size(); ++j) {
    const double x1 = s.states(0, j), x2 = s.states(1, j);
    CHECK(std::abs(x1 - 0.5) <= 0.1 + 1e-15);
    CHECK(std::abs(s.points(0, j) - (-x1 - 2 * x2)) <= 1e-12);
    CHECK(std::abs(s.points(1, j) - (1 - x1 * x1 - 2 * x2 * x2 - 3 * x1 * x2)) <= 1e-12);
  }
}

TEST_CASE("random samples stay in the ball and are reproducible") {
  const auto B = ErrorSet::ball(4, 0.2);
  const VectorXd xhat{{-4, -0.5, 0, 1}};
  const MatrixXd X = random_states(xhat, B, 1000, 42);
  const MatrixXd Y = random_states(xhat, B, 1000, 42);
  CHECK((X - Y).norm() == 0.0);
  for (Index j = 0; j < X.cols(); ++j) CHECK(B.contains(X.col(j) - xhat));
}

TEST_CASE("support values of the scalar image") {
  const auto bm = scalar_benchmark();
  const VectorXd xhat = VectorXd::Constant(1, 1.0);
  const auto B = ErrorSet::box(VectorXd::Constant(1, 0.05));
  const double bmax = support_value(bm.system, bm.cbf, xhat, B, VectorXd{{0.0, 1.0}});
  const double amax = support_value(bm.system, bm.cbf, xhat, B, VectorXd{{1.0, 0.0}});
  CHECK(bmax == doctest::Approx(0.4585).epsilon(1e-3));
  CHECK(amax == doctest::Approx(0.2152).epsilon(1e-3));
  CHECK(bmax >= 0.4585);
  CHECK(amax >= 0.21525);
  CHECK_THROWS_AS(support_value(bm.system, bm.cbf, xhat, B, VectorXd{{1.0, 1.0}}), std::invalid_argument);
}

TEST_CASE("double integrator edge support is an upper bound and tight") {
  const auto bm = double_integrator_benchmark();
  const VectorXd xhat{{0.5, 0.5}};
  const auto B = ErrorSet::box(VectorXd{{0.1, 0.1}});
  const MatrixXd V = default_directions(2, 16);
  for (Index i = 0; i < V.rows(); ++i) {
    const VectorXd v = V.row(i).transpose();
    const double s = support_value(bm.system, bm.cbf, xhat, B, v);
    const double brute = fine_support(bm, xhat, B, v, 401);
    CHECK(s >= brute - 1e-12);
    CHECK(s - brute <= 1e-6);
  }
}

TEST_CASE("support values are monotone in the error set") {
  std::mt19937 rng(9);
  const auto bm = double_integrator_benchmark();
  const auto sc = scalar_benchmark();
  for (int k = 0; k < 30; ++k) {
    const double th = std::uniform_real_distribution<double>(0, 2 * M_PI)(rng);
    const VectorXd v{{std::cos(th), std::sin(th)}};
    const VectorXd xhat{{0.2, -0.3}};
    const auto B = ErrorSet::box(VectorXd{{0.05, 0.08}});
    CHECK(support_value(bm.system, bm.cbf, xhat, B.scaled(1.5), v) >= support_value(bm.system, bm.cbf, xhat, B, v));
    const VectorXd xs = VectorXd::Constant(1, 0.9);
    const auto Bs = ErrorSet::box(VectorXd::Constant(1, 0.04));
    CHECK(support_value(sc.system, sc.cbf, xs, Bs.scaled(1.5), v) >= support_value(sc.system, sc.cbf, xs, Bs, v));
  }
}

TEST_CASE("polytopic over-approximation contains the image") {
  const auto bm = double_integrator_benchmark();
  const VectorXd xhat{{0.5, 0.5}};
  const auto B = ErrorSet::box(VectorXd{{0.1, 0.1}});
  const auto P16 = polytopic_overapprox(bm.system, bm.cbf, xhat, B, default_directions(2, 16));
  const auto P64 = polytopic_overapprox(bm.system, bm.cbf, xhat, B, default_directions(2, 64));
  SamplingSpec dense;
  dense.per_axis = 100;
  const auto cloud = sample_image(bm.system, bm.cbf, xhat, B, dense);
  CHECK(cloud.size() == 10000);
  for (Index j = 0; j < cloud.size(); ++j) {
    CHECK(P16.contains(cloud.points.col(j)));
    CHECK(P64.contains(cloud.points.col(j)));
  }
  const MatrixXd V64 = polytope_vertices_2d(P64);
  REQUIRE(V64.cols() >= 3);
  for (Index j = 0; j < V64.cols(); ++j) CHECK(P16.contains(V64.col(j)));
}

TEST_CASE("point polytope stays within the slack of the point") {
  const auto bm = scalar_benchmark();
  const VectorXd xhat = VectorXd::Constant(1, 0.8);
  const auto P = polytopic_overapprox(bm.system, bm.cbf, xhat, ErrorSet::box(VectorXd::Zero(1)), default_directions(2, 4));
  const VectorXd z = coefficients(bm.system, bm.cbf, xhat).stacked();
  CHECK(P.contains(z));
  const MatrixXd V = polytope_vertices_2d(P);
  for (Index j = 0; j < V.cols(); ++j) CHECK((V.col(j) - z).norm() <= 1e-12);
}

TEST_CASE("non-spanning directions are rejected") {
  const auto bm = scalar_benchmark();
  const MatrixXd dirs{{1, 0}, {0, 1}, {std::sqrt(0.5), std::sqrt(0.5)}};
  CHECK_THROWS_AS(polytopic_overapprox(bm.system, bm.cbf, VectorXd::Constant(1, 1.0),
                                       ErrorSet::box(VectorXd::Constant(1, 0.05)), dirs),
                  std::invalid_argument);
  CHECK_FALSE(is_bounded(UncertaintyPolytope{MatrixXd{{1, 0}, {0, 1}, {-1, 0}}, VectorXd{{1, 1, 1}}}));
  CHECK(is_bounded(box_polytope(-1, 1, 0, 2)));
}

TEST_CASE("ellipsoid fit of a symmetric cloud") {
  const MatrixXd Z{{1, -1, 0, 0}, {0, 0, 1, -1}};
  const auto E = ellipsoid_fit(Z, 0.0);
  CHECK(E.center().norm() <= 1e-12);
  for (Index j = 0; j < 4; ++j) CHECK(E.value(Z.col(j)) <= 1e-12);
  CHECK(E.kappa() == doctest::Approx(1.0));
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(E.P);
  CHECK(es.eigenvalues().minCoeff() > 0.0);
  CHECK((E.P - E.P.transpose()).norm() == 0.0);
}

TEST_CASE("ellipsoid fit of a repeated point is a tiny ball") {
  const MatrixXd Z = VectorXd{{0.3, 2.0}}.replicate(1, 5);
  const auto E = ellipsoid_fit(Z);
  CHECK(E.contains(Z.col(0)));
  CHECK((E.center() - Z.col(0)).norm() <= 1e-9);
  const MatrixXd bd = ellipsoid_boundary(E, 8);
  for (Index j = 0; j < bd.cols(); ++j) CHECK((bd.col(j) - Z.col(0)).norm() <= 1e-5);
  CHECK_THROWS_AS(ellipsoid_fit(Z, 0.01, false), std::invalid_argument);
}

TEST_CASE("segway sample ellipsoid contains all samples") {
  const auto bm = segway_benchmark();
  SamplingSpec spec;
  spec.mode = SamplingSpec::Mode::Random;
  spec.count = 1000;
  const VectorXd xhat{{-4, -0.5, 0, 1}};
  const auto s = sample_image(bm.system, bm.cbf, xhat, ErrorSet::ball(4, 0.1), spec);
  REQUIRE(s.size() == 1000);
  const auto E = ellipsoid_fit(s);
  const VectorXd mu = s.points.rowwise().mean();
  MatrixXd Sig = (s.points.colwise() - mu) * (s.points.colwise() - mu).transpose() / 999.0;
  double smax = 0.0;
  for (Index j = 0; j < s.size(); ++j) {
    CHECK(E.contains(s.points.col(j), 1e-12));
    smax = std::max(smax, (s.points.col(j) - mu).dot(Sig.ldlt().solve(s.points.col(j) - mu)));
  }
  // the fitted level set is the largest sample distance, enlarged by the margin
  CHECK(E.kappa() == doctest::Approx(1.0).epsilon(1e-9));
  const VectorXd c = E.center();
  CHECK((c - mu).norm() <= 1e-9 * (1 + mu.norm()));
}

TEST_CASE("feasibility check on boxes") {
  CHECK(feasibility_check(box_polytope(-1, 1, 1, 2)));
  CHECK_FALSE(feasibility_check(box_polytope(-1, 1, -1, 1)));
  CHECK_FALSE(feasibility_check(box_polytope(-0.1825, 0.2152, -0.1025, 0.4585)));
  UncertaintyEllipsoid unit{MatrixXd::Identity(2, 2), VectorXd::Zero(2), -1.0};
  CHECK_FALSE(feasibility_check(unit));
  UncertaintyEllipsoid shifted{MatrixXd::Identity(2, 2), VectorXd{{0.0, -4.0}}, 3.0};  // centre (0, 2)
  CHECK(feasibility_check(shifted));
}

TEST_CASE("feasibility check agrees with an LP on random polygons") {
  std::mt19937 rng(21);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  int both = 0;
  for (int k = 0; k < 200; ++k) {
    MatrixXd pts(2, 6);
    for (Index j = 0; j < 6; ++j) pts.col(j) << U(rng), U(rng) + 0.5;
    const auto P = convex_hull_2d(pts);
    // LP oracle: minimize |zeta_a| style slack via  min t  s.t.  C(0, zb) <= d + t, zb <= t
    conic::ConicProblem lp(2);
    lp.set_objective(VectorXd{{0.0, 1.0}});
    MatrixXd G(P.facets() + 1, 2);
    G.topRows(P.facets()) << P.C.col(1), -VectorXd::Ones(P.facets());
    G.bottomRows(1) << 1.0, -1.0;
    VectorXd h(P.facets() + 1);
    h << P.d, 0.0;
    lp.add_inequalities(G, h);
    lp.add_inequalities(MatrixXd{{0.0, -1.0}}, VectorXd::Constant(1, 10.0));
    const auto rep = conic::solve(lp);
    REQUIRE(rep.status == conic::SolveStatus::Optimal);
    const double t = rep.x(1);
    if (std::abs(t) < 1e-6) continue;  // touching; skip borderline instances
    CHECK(feasibility_check(P) == (t > 0.0));
    both += feasibility_check(P) ? 1 : 0;
  }
  CHECK(both > 10);
  CHECK(both < 190);
}

TEST_CASE("convex hull and vertices round trip") {
  std::mt19937 rng(4);
  std::normal_distribution<double> N;
  for (int k = 0; k < 50; ++k) {
    MatrixXd pts(2, 30);
    for (Index j = 0; j < 30; ++j) pts.col(j) << N(rng), N(rng);
    const auto H = convex_hull_2d(pts);
    for (Index j = 0; j < 30; ++j) CHECK(H.contains(pts.col(j), 1e-12));
    const MatrixXd V = polytope_vertices_2d(H);
    CHECK(V.cols() == H.facets());
    for (Index j = 0; j < V.cols(); ++j) {
      double nearest = 1e300;
      for (Index i = 0; i < 30; ++i) nearest = std::min(nearest, (pts.col(i) - V.col(j)).norm());
      CHECK(nearest <= 1e-9);
    }
  }
  CHECK_THROWS_AS(convex_hull_2d(MatrixXd{{0, 1, 2}, {0, 1, 2}}), std::invalid_argument);
}

TEST_CASE("hull exactness surrogate on sample pairs") {
  const auto bm = double_integrator_benchmark();
  SamplingSpec spec;
  spec.per_axis = 30;
  const auto s = sample_image(bm.system, bm.cbf, VectorXd{{0.4, 0.6}}, ErrorSet::box(VectorXd{{0.1, 0.1}}), spec);
  std::mt19937 rng(8);
  std::uniform_real_distribution<double> U(-3.0, 3.0), L(0.0, 1.0);
  std::uniform_int_distribution<Index> pick(0, s.size() - 1);
  for (int k = 0; k < 50; ++k) {
    const double u = U(rng);
    const VectorXd c{{u, 1.0}};
    const bool all_points = (c.transpose() * s.points).minCoeff() >= 0.0;
    bool all_pairs = true;
    for (int t = 0; t < 10000; ++t) {
      const double lam = L(rng);
      const VectorXd z = lam * s.points.col(pick(rng)) + (1 - lam) * s.points.col(pick(rng));
      if (c.dot(z) < -1e-12) all_pairs = false;
    }
    CHECK(all_points == all_pairs);
  }
}

TEST_CASE("ellipsoid boundary points lie on the boundary") {
  std::mt19937 rng(2);
  std::normal_distribution<double> N;
  for (int k = 0; k < 20; ++k) {
    MatrixXd A(3, 3);
    for (Index i = 0; i < 9; ++i) A(i) = N(rng);
    UncertaintyEllipsoid E{A * A.transpose() + MatrixXd::Identity(3, 3), VectorXd{{N(rng), N(rng), N(rng)}}, -2.0};
    const MatrixXd bd = ellipsoid_boundary(E, 200);
    for (Index j = 0; j < bd.cols(); ++j) CHECK(std::abs(E.value(bd.col(j))) <= 1e-9);
  }
}

TEST_CASE("JSON round trip") {
  const auto P = box_polytope(-1, 1, 0.5, 2);
  const auto P2 = polytope_from_json(to_json(P));
  CHECK((P2.C - P.C).norm() == 0.0);
  CHECK((P2.d - P.d).norm() == 0.0);
  UncertaintyEllipsoid E{MatrixXd{{2, 0.5}, {0.5, 1}}, VectorXd{{0.1, -0.3}}, -1.5};
  const auto E2 = ellipsoid_from_json(to_json(E));
  CHECK((E2.P - E.P).norm() == 0.0);
  CHECK(E2.r == E.r);
  CHECK_THROWS_AS(polytope_from_json(R"({"type":"ellipsoid"})"), std::invalid_argument);
  CHECK_THROWS_AS(polytope_from_json(R"({"type":"polytope","C":[[1,0],[1]],"d":[1,2]})"), std::invalid_argument);
  CHECK_THROWS_AS(ellipsoid_from_json("{not json"), std::invalid_argument);
}

TEST_CASE("error sets validate their extents") {
  CHECK_THROWS_AS(ErrorSet::box(VectorXd{{0.1, -0.1}}), std::invalid_argument);
  CHECK_THROWS_AS(ErrorSet::ball(2, std::nan("")), std::invalid_argument);
  const auto B = ErrorSet::ball(2, 0.5);
  CHECK(B.contains(VectorXd{{0.3, 0.4}}));
  CHECK_FALSE(B.contains(VectorXd{{0.4, 0.4}}));
  const MatrixXd bd = error_boundary(ErrorSet::box(VectorXd{{0.1, 0.2}}), 5);
  for (Index j = 0; j < bd.cols(); ++j) {
    const bool on_face = std::abs(std::abs(bd(0, j)) - 0.1) < 1e-15 || std::abs(std::abs(bd(1, j)) - 0.2) < 1e-15;
    CHECK(on_face);
  }
  CHECK(bd.cols() == 16);
}
