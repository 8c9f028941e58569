#pragma once

// Small dense conic optimization layer.
//
// Problems are posed as
//
//     minimize    1/2 x'Px + c'x + c0
//     subject to  Ax = b
//                 h - Gx in K
//
// where K is a product of the non-negative orthant, second-order cones and
// positive semidefinite cones. PSD blocks are stored in svec form (lower
// triangle, column by column, off-diagonal entries scaled by sqrt(2)), so the
// Euclidean inner product of two svec vectors equals the trace inner product
// of the matrices.
//
// The solver is a homogeneous self-dual interior-point method with
// Nesterov-Todd scaling and Mehrotra predictor-corrector steps. A quadratic
// objective enters the embedding directly (P in the KKT system and an
// x'Px/tau term in the tau equation), so QPs keep infeasibility and
// unboundedness certificates.

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace robustcbf::conic {

using Eigen::Index;

struct ConeDims {
  Index nonneg = 0;
  std::vector<Index> soc;  // cone dimensions (>= 1)
  std::vector<Index> psd;  // matrix side lengths

  /// Number of rows of G spanned by the cone product.
  Index size() const;
  /// Barrier degree: one per orthant row, one per SOC, side length per PSD block.
  Index degree() const;
};

/// Data of a problem after all constraint blocks are stacked in cone order.
struct StandardForm {
  Eigen::MatrixXd P;
  Eigen::VectorXd c;
  double c0 = 0.0;
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  Eigen::MatrixXd G;
  Eigen::VectorXd h;
  ConeDims cones;
};

class ProblemError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Incrementally assembled conic program. Constraint blocks may be added in
/// any order; standard_form() groups them by cone type.
class ConicProblem {
 public:
  explicit ConicProblem(Index num_vars);

  Index num_vars() const { return n_; }

  /// Quadratic objective 1/2 x'Px + c'x + constant. P must be symmetric PSD.
  void set_objective(const Eigen::MatrixXd& P, const Eigen::VectorXd& c, double constant = 0.0);
  void set_objective(const Eigen::VectorXd& c, double constant = 0.0);

  /// Ax = b
  void add_equalities(const Eigen::MatrixXd& A, const Eigen::VectorXd& b);
  /// Gx <= h
  void add_inequalities(const Eigen::MatrixXd& G, const Eigen::VectorXd& h);
  /// h - Gx in Q = {(t, w): ||w|| <= t}
  void add_second_order_cone(const Eigen::MatrixXd& G, const Eigen::VectorXd& h);
  /// F0 + sum_i x_i F_i is PSD. All matrices must be symmetric and the same size.
  void add_lmi(const Eigen::MatrixXd& F0, const std::vector<Eigen::MatrixXd>& F);

  bool has_quadratic_objective() const { return has_quadratic_; }

  StandardForm standard_form() const;

 private:
  struct Block {
    Eigen::MatrixXd G;
    Eigen::VectorXd h;
    Index side = 0;  // PSD side length, 0 otherwise
  };

  Index n_;
  Eigen::MatrixXd P_;
  Eigen::VectorXd c_;
  double c0_ = 0.0;
  bool has_quadratic_ = false;
  Eigen::MatrixXd A_;
  Eigen::VectorXd b_;
  Block nonneg_;
  std::vector<Block> soc_;
  std::vector<Block> psd_;
};

enum class SolveStatus { Optimal, Infeasible, Unbounded, MaxIterations, NumericalFailure };

std::string to_string(SolveStatus status);

struct Tolerances {
  double feasibility = 1e-9;
  double absolute_gap = 1e-9;
  double relative_gap = 1e-9;
  int max_iterations = 200;
};

/// Outcome of a solve.
///
/// Optimal: (x, s) primal and (y, z) dual solutions of the problem as posed.
/// Infeasible: (y, z) is a Farkas certificate normalized so that h'z + b'y = -1,
///   with z in K and A'y + G'z ~ 0.
/// Unbounded: (x, s) is a primal ray normalized so that c'x = -1, with s in K,
///   Px ~ 0, Ax ~ 0 and Gx + s ~ 0.
struct SolveReport {
  SolveStatus status = SolveStatus::NumericalFailure;
  Eigen::VectorXd x;
  Eigen::VectorXd y;
  Eigen::VectorXd z;
  Eigen::VectorXd s;
  double primal_objective = 0.0;
  double dual_objective = 0.0;
  double gap = 0.0;  // s'z at the returned point
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  int iterations = 0;
  Tolerances tolerances;
};

SolveReport solve(const ConicProblem& problem, const Tolerances& tolerances = {});

/// Re-evaluates residuals, gap and cone membership of a report against the
/// problem data. True iff everything is within 10x the report's tolerances.
/// Only Optimal, Infeasible and Unbounded reports carry certificates.
bool check_certificate(const ConicProblem& problem, const SolveReport& report);

Eigen::VectorXd svec(const Eigen::MatrixXd& S);
Eigen::MatrixXd smat(const Eigen::VectorXd& v, Index side);

/// Distance-to-boundary style membership measure: the smallest "eigenvalue"
/// of v over all blocks (min entry, t - ||w||, lambda_min). Non-negative iff v in K.
double cone_margin(const ConeDims& cones, const Eigen::VectorXd& v);

}  // namespace robustcbf::conic
