#pragma once

#include "mshoot/ode.hpp"

#include <Eigen/SparseCore>

#include <functional>
#include <string>
#include <vector>

namespace mshoot {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Curvature model of one constraint restricted to the variables in `support`.
struct CurvatureBlock {
  std::vector<int> support;
  Matrix block; // symmetric positive semidefinite
};

/// min f(q) subject to c(q) = 0, with c equality constraints.
struct NlpProblem {
  int n = 0;
  int c = 0;
  std::function<double(const Vector &)> objective;
  std::function<Vector(const Vector &)> objective_grad;
  std::function<Vector(const Vector &)> constraints;
  /// c x n Jacobian, one sparse row per constraint.
  std::function<SparseMatrix(const Vector &)> constraint_grads;
  /// Diagonal of the initial Hessian approximation; empty means identity.
  /// Entries <= 0 are replaced by the mean of the positive entries.
  Vector hessian_seed;

  /// Optional structured Hessian: a constant exact diagonal Hessian of f plus
  /// one curvature block per constraint. With both set the solver uses
  /// B(mu) = diag + sum_j max(mu_j, 0) H_j in place of BFGS.
  Vector objective_hessian;
  std::function<std::vector<CurvatureBlock>(const Vector &)>
      constraint_curvature;
  /// Every c_j >= 0 with equality only when satisfied (squared norms).
  /// Enables the penalty refinement phase.
  bool nonnegative_constraints = false;

  bool structured() const {
    return objective_hessian.size() == n && bool(constraint_curvature);
  }
};

/// Everything the solver needs at one point.
struct IterateEval {
  double f = 0.0;
  Vector g;
  Vector h;
  SparseMatrix A;
};

struct SqpState {
  Vector q;
  Vector multipliers;
  Matrix hessian_approx;
  int iteration = 0;
  double kkt_residual = 0.0;
  IterateEval eval;
};

struct KktStep {
  Vector step;
  Vector multipliers;
};

struct LineSearchResult {
  double alpha = 1.0;
  double merit_before = 0.0;
  double merit_after = 0.0;
  double directional_derivative = 0.0;
  int evaluations = 0;
  double f = 0.0; // objective at the accepted point
  Vector h;       // constraints at the accepted point
};

struct SqpOptions {
  int max_iter = 100;
  double kkt_tol = 1e-8;
  /// Penalty rule: rho = max(penalty_floor, penalty_factor * |mu|_inf).
  double penalty_floor = 1.0;
  double penalty_factor = 1.5;
  double armijo = 1e-4;
  int max_halvings = 30;
  double rank_tol = 1e-10;
  double curvature_skip = 1e-12;
  /// Smallest eigenvalue kept in the structured Hessian.
  double pd_floor = 1e-10;
  /// Fixed-point sweeps matching the structured Hessian to its multipliers.
  int multiplier_sweeps = 30;
  double multiplier_tol = 1e-8;
  /// Nonnegative constraints: once |c|_inf <= refine_switch the solver
  /// minimizes the merit f + rho * sum c_j directly, with rho sized so that
  /// |c|_inf ends near refine_target * kkt_tol.
  double refine_switch = 1e-6;
  double refine_target = 0.01;
};

enum class SqpStatus { Converged, MaxIterations, LineSearchFailure, SingularKkt };

std::string to_string(SqpStatus status);

struct SqpIterationRecord {
  int iteration = 0;
  double objective = 0.0;
  double constraint_norm = 0.0; // |h|_inf
  double kkt_residual = 0.0;
  double penalty = 0.0;
  double alpha = 0.0;
  double merit_before = 0.0;
  double merit_after = 0.0;
  bool refinement = false;
};

struct SqpReport {
  int iterations = 0;
  double kkt_residual = 0.0;
  double stationarity = 0.0;
  double feasibility = 0.0;
  bool converged = false;
  SqpStatus status = SqpStatus::MaxIterations;
  std::string message;
  std::vector<SqpIterationRecord> history;
};

struct SqpResult {
  Vector q;
  Vector multipliers;
  double objective = 0.0;
  Vector constraints;
  SqpReport report;
};

/// Evaluates f, grad f, c and the constraint Jacobian at q.
IterateEval evaluate(const NlpProblem &prob, const Vector &q);

/// Solves [[B, A^T], [A, 0]] [dq; mu] = [-grad f; -c]. Constraint rows are
/// normalized before the rank test; throws SingularKkt when the smallest
/// singular value of the normalized Jacobian is below `rank_tol`.
KktStep kkt_step(const SqpState &state, const NlpProblem &prob,
                 double rank_tol = 1e-10);

/// Backtracking on the l1 merit f + penalty * |c|_1 with alpha = 1, 1/2, ...
/// Trial points whose evaluation blows up count as merit +inf. Throws
/// LineSearchFailure when `step` is not a descent direction or after
/// `max_halvings` halvings.
LineSearchResult merit_line_search(const SqpState &state,
                                   const NlpProblem &prob, const Vector &step,
                                   double penalty, double armijo = 1e-4,
                                   int max_halvings = 30);

/// Same backtracking with a caller-supplied directional derivative of the
/// merit along `step`.
LineSearchResult backtrack_merit(const SqpState &state, const NlpProblem &prob,
                                 const Vector &step, double penalty,
                                 double directional_derivative,
                                 double armijo = 1e-4, int max_halvings = 30);

/// diag + pd_floor * I + sum_j max(weights_j, 0) * blocks_j.
Matrix structured_hessian(const Vector &diag,
                          const std::vector<CurvatureBlock> &blocks,
                          const Vector &weights, double pd_floor);

/// Least-squares multipliers argmin |g + A^T mu|_2 at the current point.
Vector least_squares_multipliers(const IterateEval &eval);

/// max(|g + A^T mu|_inf, |c|_inf) with least-squares multipliers.
double kkt_residual(const IterateEval &eval);

/// Powell-damped BFGS update of B in place. Returns false (B unchanged) when
/// the curvature is below `curvature_skip` or the update would push the
/// smallest eigenvalue under `min_eigenvalue`.
bool damped_bfgs_update(Matrix &B, const Vector &s, const Vector &y,
                        double curvature_skip = 1e-12,
                        double min_eigenvalue = 1e-10);

/// Equality-constrained SQP: KKT step, l1-merit backtracking and damped BFGS
/// (or the structured Hessian when the problem provides one). Never throws
/// for non-convergence; the report carries the status.
SqpResult sqp_solve(const NlpProblem &prob, const Vector &q0,
                    const SqpOptions &opts = {});

} // namespace mshoot
