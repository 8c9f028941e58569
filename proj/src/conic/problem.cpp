#include "robustcbf/conic.hpp"

#include <cmath>
#include <string>

namespace robustcbf::conic {

namespace {

void append_rows(Eigen::MatrixXd& M, Eigen::VectorXd& v, const Eigen::MatrixXd& rows, const Eigen::VectorXd& rhs) {
  const Index r = M.rows();
  M.conservativeResize(r + rows.rows(), Eigen::NoChange);
  M.bottomRows(rows.rows()) = rows;
  v.conservativeResize(r + rhs.size());
  v.tail(rhs.size()) = rhs;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ProblemError(what);
}

bool is_symmetric(const Eigen::MatrixXd& S) {
  return S.rows() == S.cols() && (S - S.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + S.cwiseAbs().maxCoeff());
}

}  // namespace

std::string to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::Optimal: return "Optimal";
    case SolveStatus::Infeasible: return "Infeasible";
    case SolveStatus::Unbounded: return "Unbounded";
    case SolveStatus::MaxIterations: return "MaxIterations";
    case SolveStatus::NumericalFailure: return "NumericalFailure";
  }
  return "Unknown";
}

ConicProblem::ConicProblem(Index num_vars)
    : n_(num_vars),
      P_(Eigen::MatrixXd::Zero(num_vars, num_vars)),
      c_(Eigen::VectorXd::Zero(num_vars)),
      A_(0, num_vars),
      b_(0) {
  require(num_vars > 0, "conic problem needs at least one variable");
  nonneg_.G.resize(0, num_vars);
  nonneg_.h.resize(0);
}

void ConicProblem::set_objective(const Eigen::MatrixXd& P, const Eigen::VectorXd& c, double constant) {
  require(P.rows() == n_ && P.cols() == n_, "objective P has wrong shape");
  require(c.size() == n_, "objective c has wrong size");
  require(P.allFinite() && c.allFinite() && std::isfinite(constant), "objective has non-finite entries");
  require(is_symmetric(P), "objective P is not symmetric");
  P_ = 0.5 * (P + P.transpose());
  c_ = c;
  c0_ = constant;
  has_quadratic_ = P_.cwiseAbs().maxCoeff() > 0.0;
}

void ConicProblem::set_objective(const Eigen::VectorXd& c, double constant) {
  set_objective(Eigen::MatrixXd::Zero(n_, n_), c, constant);
}

void ConicProblem::add_equalities(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
  require(A.cols() == n_ && A.rows() == b.size(), "equality block has inconsistent dimensions");
  require(A.allFinite() && b.allFinite(), "equality block has non-finite entries");
  append_rows(A_, b_, A, b);
}

void ConicProblem::add_inequalities(const Eigen::MatrixXd& G, const Eigen::VectorXd& h) {
  require(G.cols() == n_ && G.rows() == h.size(), "inequality block has inconsistent dimensions");
  require(G.allFinite() && h.allFinite(), "inequality block has non-finite entries");
  append_rows(nonneg_.G, nonneg_.h, G, h);
}

void ConicProblem::add_second_order_cone(const Eigen::MatrixXd& G, const Eigen::VectorXd& h) {
  require(G.cols() == n_ && G.rows() == h.size() && h.size() >= 1, "second-order cone block has inconsistent dimensions");
  require(G.allFinite() && h.allFinite(), "second-order cone block has non-finite entries");
  soc_.push_back({G, h, 0});
}

void ConicProblem::add_lmi(const Eigen::MatrixXd& F0, const std::vector<Eigen::MatrixXd>& F) {
  require(static_cast<Index>(F.size()) == n_, "LMI needs one coefficient matrix per variable");
  require(F0.rows() >= 1 && is_symmetric(F0), "LMI constant term is not symmetric");
  const Index k = F0.rows();
  const Index len = k * (k + 1) / 2;
  Block block;
  block.side = k;
  block.h = svec(F0);
  block.G.resize(len, n_);
  for (Index i = 0; i < n_; ++i) {
    require(F[i].rows() == k && F[i].cols() == k, "LMI coefficient matrix has wrong shape");
    require(is_symmetric(F[i]), "LMI coefficient matrix is not symmetric");
    block.G.col(i) = -svec(F[i]);
  }
  require(block.G.allFinite() && block.h.allFinite(), "LMI has non-finite entries");
  psd_.push_back(std::move(block));
}

StandardForm ConicProblem::standard_form() const {
  StandardForm sf;
  sf.P = P_;
  sf.c = c_;
  sf.c0 = c0_;
  sf.A = A_;
  sf.b = b_;
  sf.G = nonneg_.G;
  sf.h = nonneg_.h;
  sf.cones.nonneg = nonneg_.h.size();
  for (const auto& blk : soc_) {
    append_rows(sf.G, sf.h, blk.G, blk.h);
    sf.cones.soc.push_back(blk.h.size());
  }
  for (const auto& blk : psd_) {
    append_rows(sf.G, sf.h, blk.G, blk.h);
    sf.cones.psd.push_back(blk.side);
  }
  return sf;
}

}  // namespace robustcbf::conic
