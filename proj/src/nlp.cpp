#include "mshoot/nlp.hpp"

#include "mshoot/errors.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>

namespace mshoot {

std::string to_string(SqpStatus status) {
  switch (status) {
  case SqpStatus::Converged:
    return "converged";
  case SqpStatus::MaxIterations:
    return "max_iterations";
  case SqpStatus::LineSearchFailure:
    return "line_search_failure";
  case SqpStatus::SingularKkt:
    return "singular_kkt";
  }
  return "unknown";
}

IterateEval evaluate(const NlpProblem &prob, const Vector &q) {
  IterateEval e;
  e.f = prob.objective(q);
  e.g = prob.objective_grad(q);
  e.h = prob.constraints(q);
  e.A = prob.constraint_grads(q);
  if (e.g.size() != prob.n || e.h.size() != prob.c || e.A.rows() != prob.c ||
      e.A.cols() != prob.n)
    throw DimensionError("NLP callbacks returned inconsistent dimensions");
  return e;
}

KktStep kkt_step(const SqpState &state, const NlpProblem &prob,
                 double rank_tol) {
  const int n = prob.n;
  const int c = prob.c;
  const IterateEval &e = state.eval;

  if (c == 0) {
    Eigen::LLT<Matrix> llt(state.hessian_approx);
    if (llt.info() != Eigen::Success)
      throw SingularKkt(0.0);
    return KktStep{llt.solve(-e.g), Vector()};
  }

  // Rows and right-hand sides scaled to unit row norm.
  Matrix A = Matrix(e.A);
  Vector row_norm = A.rowwise().norm();
  for (int j = 0; j < c; ++j)
    if (!(row_norm[j] > 0.0))
      throw SingularKkt(0.0);
  Matrix An = row_norm.cwiseInverse().asDiagonal() * A;
  Vector hn = e.h.cwiseQuotient(row_norm);

  Eigen::JacobiSVD<Matrix> svd(An);
  const double smallest = svd.singularValues().minCoeff();
  if (c > n || smallest < rank_tol)
    throw SingularKkt(smallest);

  Matrix K = Matrix::Zero(n + c, n + c);
  K.topLeftCorner(n, n) = state.hessian_approx;
  K.topRightCorner(n, c) = An.transpose();
  K.bottomLeftCorner(c, n) = An;
  Vector rhs(n + c);
  rhs.head(n) = -e.g;
  rhs.tail(c) = -hn;

  Eigen::PartialPivLU<Matrix> lu(K);
  Vector sol = lu.solve(rhs);
  if (!sol.allFinite())
    throw SingularKkt(smallest);

  KktStep out;
  out.step = sol.head(n);
  out.multipliers = sol.tail(c).cwiseQuotient(row_norm);
  return out;
}

namespace {

double merit(double f, const Vector &h, double penalty) {
  return f + penalty * h.lpNorm<1>();
}

} // namespace

LineSearchResult merit_line_search(const SqpState &state,
                                   const NlpProblem &prob, const Vector &step,
                                   double penalty, double armijo,
                                   int max_halvings) {
  // Derivative of the l1 merit along a step that satisfies the linearized
  // constraints h + A step = 0.
  const double dphi =
      state.eval.g.dot(step) - penalty * state.eval.h.lpNorm<1>();
  return backtrack_merit(state, prob, step, penalty, dphi, armijo,
                         max_halvings);
}

LineSearchResult backtrack_merit(const SqpState &state, const NlpProblem &prob,
                                 const Vector &step, double penalty,
                                 double directional_derivative, double armijo,
                                 int max_halvings) {
  const IterateEval &e = state.eval;
  LineSearchResult r;
  r.merit_before = merit(e.f, e.h, penalty);
  r.directional_derivative = directional_derivative;
  if (!(r.directional_derivative < 0.0))
    throw LineSearchFailure("step is not a descent direction for the merit");

  double alpha = 1.0;
  for (int k = 0; k <= max_halvings; ++k, alpha *= 0.5) {
    const Vector trial = state.q + alpha * step;
    double f = std::numeric_limits<double>::infinity();
    Vector h;
    double phi = std::numeric_limits<double>::infinity();
    ++r.evaluations;
    try {
      f = prob.objective(trial);
      h = prob.constraints(trial);
      phi = merit(f, h, penalty);
    } catch (const BlowUp &) {
      continue;
    }
    if (!std::isfinite(phi))
      continue;
    if (phi <= r.merit_before + armijo * alpha * r.directional_derivative &&
        phi < r.merit_before) {
      r.alpha = alpha;
      r.merit_after = phi;
      r.f = f;
      r.h = std::move(h);
      return r;
    }
  }
  throw LineSearchFailure("no acceptable step after " +
                          std::to_string(max_halvings) + " halvings");
}

Matrix structured_hessian(const Vector &diag,
                          const std::vector<CurvatureBlock> &blocks,
                          const Vector &weights, double pd_floor) {
  const Eigen::Index n = diag.size();
  if (weights.size() != static_cast<Eigen::Index>(blocks.size()))
    throw DimensionError("one weight per curvature block expected");
  Matrix B = diag.asDiagonal();
  B.diagonal().array() += pd_floor;
  for (std::size_t j = 0; j < blocks.size(); ++j) {
    const double w = std::max(weights[j], 0.0);
    if (w == 0.0)
      continue;
    const auto &sup = blocks[j].support;
    const Eigen::Index k = static_cast<Eigen::Index>(sup.size());
    if (blocks[j].block.rows() != k || blocks[j].block.cols() != k)
      throw DimensionError("curvature block does not match its support");
    for (Eigen::Index a = 0; a < k; ++a) {
      if (sup[a] < 0 || sup[a] >= n)
        throw DimensionError("curvature support index out of range");
      for (Eigen::Index b = 0; b < k; ++b)
        B(sup[a], sup[b]) += w * blocks[j].block(a, b);
    }
  }
  return B;
}

Vector least_squares_multipliers(const IterateEval &eval) {
  if (eval.h.size() == 0)
    return Vector();
  Matrix At = Matrix(eval.A).transpose();
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(At);
  return cod.solve(-eval.g);
}

namespace {

double stationarity(const IterateEval &eval, const Vector &mu) {
  if (mu.size() == 0)
    return eval.g.lpNorm<Eigen::Infinity>();
  return (eval.g + eval.A.transpose() * mu).lpNorm<Eigen::Infinity>();
}

double feasibility(const IterateEval &eval) {
  return eval.h.size() == 0 ? 0.0 : eval.h.lpNorm<Eigen::Infinity>();
}

} // namespace

double kkt_residual(const IterateEval &eval) {
  return std::max(stationarity(eval, least_squares_multipliers(eval)),
                  feasibility(eval));
}

bool damped_bfgs_update(Matrix &B, const Vector &s, const Vector &y,
                        double curvature_skip, double min_eigenvalue) {
  const Vector Bs = B * s;
  const double sBs = s.dot(Bs);
  if (!(sBs > curvature_skip))
    return false;
  const double sy = s.dot(y);
  double theta = 1.0;
  if (sy < 0.2 * sBs)
    theta = 0.8 * sBs / (sBs - sy);
  const Vector r = theta * y + (1.0 - theta) * Bs;
  const double sr = s.dot(r);
  if (!(sr > curvature_skip) || !r.allFinite())
    return false;
  Matrix next = B + r * r.transpose() / sr - Bs * Bs.transpose() / sBs;
  next = 0.5 * (next + next.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(next, Eigen::EigenvaluesOnly);
  if (!(eig.eigenvalues().minCoeff() >= min_eigenvalue))
    return false;
  B = std::move(next);
  return true;
}

namespace {

Matrix initial_hessian(const NlpProblem &prob) {
  if (prob.hessian_seed.size() == 0)
    return Matrix::Identity(prob.n, prob.n);
  if (prob.hessian_seed.size() != prob.n)
    throw DimensionError("hessian_seed has wrong length");
  double sum = 0.0;
  int count = 0;
  for (int k = 0; k < prob.n; ++k)
    if (prob.hessian_seed[k] > 0.0) {
      sum += prob.hessian_seed[k];
      ++count;
    }
  const double fill = count > 0 ? sum / count : 1.0;
  Vector diag = prob.hessian_seed;
  for (int k = 0; k < prob.n; ++k)
    if (!(diag[k] > 0.0))
      diag[k] = fill;
  return diag.asDiagonal();
}

} // namespace

namespace {

/// Structured Hessian whose multipliers agree with the KKT solve it feeds.
KktStep structured_kkt_step(SqpState &state, const NlpProblem &prob,
                            const std::vector<CurvatureBlock> &blocks,
                            const SqpOptions &opts) {
  Vector mu = state.multipliers.cwiseMax(0.0);
  KktStep step;
  for (int sweep = 0; sweep < std::max(1, opts.multiplier_sweeps); ++sweep) {
    state.hessian_approx =
        structured_hessian(prob.objective_hessian, blocks, mu, opts.pd_floor);
    step = kkt_step(state, prob, opts.rank_tol);
    const double change =
        (step.multipliers - mu).lpNorm<Eigen::Infinity>() /
        std::max(1.0, step.multipliers.lpNorm<Eigen::Infinity>());
    mu = step.multipliers;
    if (change < opts.multiplier_tol)
      break;
  }
  return step;
}

/// Penalty at which the quadratic-penalty minimizer should have
/// h_j ~ target, from h_j ~ (mu_j / rho)^2 h_j(current).
double refinement_penalty(const IterateEval &eval, const Vector &mu,
                          double target, double floor) {
  double rho = floor;
  for (Eigen::Index j = 0; j < eval.h.size(); ++j)
    rho = std::max(rho, std::abs(mu[j]) * std::sqrt(eval.h[j] / target));
  return rho;
}

} // namespace

SqpResult sqp_solve(const NlpProblem &prob, const Vector &q0,
                    const SqpOptions &opts) {
  if (q0.size() != prob.n || !q0.allFinite())
    throw DimensionError("sqp_solve: bad initial point");
  const bool structured = prob.structured();

  SqpState state;
  state.q = q0;
  state.eval = evaluate(prob, state.q);
  state.multipliers = least_squares_multipliers(state.eval);
  state.hessian_approx =
      structured ? Matrix(prob.objective_hessian.asDiagonal())
                 : initial_hessian(prob);

  bool refining = false;
  double refine_penalty = 0.0;

  SqpReport report;
  auto finish = [&](SqpStatus status, std::string message) {
    const Vector mu = least_squares_multipliers(state.eval);
    report.status = status;
    report.converged = status == SqpStatus::Converged;
    report.message = std::move(message);
    report.iterations = state.iteration;
    report.stationarity = stationarity(state.eval, mu);
    report.feasibility = feasibility(state.eval);
    report.kkt_residual = std::max(report.stationarity, report.feasibility);
    SqpResult out;
    out.q = state.q;
    out.multipliers = mu;
    out.objective = state.eval.f;
    out.constraints = state.eval.h;
    out.report = std::move(report);
    return out;
  };

  for (;;) {
    state.kkt_residual = kkt_residual(state.eval);
    if (state.kkt_residual <= opts.kkt_tol)
      return finish(SqpStatus::Converged, "");
    if (state.iteration >= opts.max_iter)
      return finish(SqpStatus::MaxIterations, "iteration limit reached");

    std::vector<CurvatureBlock> blocks;
    if (structured) {
      blocks = prob.constraint_curvature(state.q);
      if (static_cast<int>(blocks.size()) != prob.c)
        throw DimensionError("one curvature block per constraint expected");
    }

    if (structured && prob.nonnegative_constraints && !refining && prob.c > 0 &&
        feasibility(state.eval) <= opts.refine_switch) {
      refining = true;
      refine_penalty = refinement_penalty(
          state.eval, state.multipliers, opts.refine_target * opts.kkt_tol,
          opts.penalty_floor);
    }

    Vector step;
    double penalty = 0.0;
    LineSearchResult ls;
    try {
      if (refining) {
        // Newton step on f + rho * sum_j h_j; for h >= 0 this is the l1
        // merit itself.
        penalty = refine_penalty;
        Vector grad = state.eval.g +
                      penalty * (state.eval.A.transpose() *
                                 Vector::Ones(prob.c));
        if (grad.lpNorm<Eigen::Infinity>() <= 0.1 * opts.kkt_tol &&
            feasibility(state.eval) > opts.kkt_tol) {
          refine_penalty *= 10.0;
          penalty = refine_penalty;
          grad = state.eval.g + penalty * (state.eval.A.transpose() *
                                           Vector::Ones(prob.c));
        }
        state.hessian_approx = structured_hessian(
            prob.objective_hessian, blocks, Vector::Constant(prob.c, penalty),
            opts.pd_floor);
        Eigen::LLT<Matrix> llt(state.hessian_approx);
        if (llt.info() != Eigen::Success)
          throw SingularKkt(0.0);
        step = llt.solve(-grad);
        ls = backtrack_merit(state, prob, step, penalty, grad.dot(step),
                             opts.armijo, opts.max_halvings);
        state.multipliers = Vector::Constant(prob.c, penalty);
      } else {
        const KktStep kkt =
            structured ? structured_kkt_step(state, prob, blocks, opts)
                       : kkt_step(state, prob, opts.rank_tol);
        step = kkt.step;
        const double mu_norm =
            kkt.multipliers.size() == 0
                ? 0.0
                : kkt.multipliers.lpNorm<Eigen::Infinity>();
        penalty = std::max(opts.penalty_floor, opts.penalty_factor * mu_norm);
        ls = merit_line_search(state, prob, step, penalty, opts.armijo,
                               opts.max_halvings);
        state.multipliers = kkt.multipliers;
      }
    } catch (const SingularKkt &e) {
      return finish(SqpStatus::SingularKkt, e.what());
    } catch (const LineSearchFailure &e) {
      return finish(SqpStatus::LineSearchFailure, e.what());
    }

    const Vector q_new = state.q + ls.alpha * step;
    IterateEval eval_new;
    try {
      eval_new = evaluate(prob, q_new);
    } catch (const BlowUp &e) {
      return finish(SqpStatus::LineSearchFailure, e.what());
    }

    if (!structured) {
      Vector grad_lag_old = state.eval.g;
      Vector grad_lag_new = eval_new.g;
      if (prob.c > 0) {
        grad_lag_old += state.eval.A.transpose() * state.multipliers;
        grad_lag_new += eval_new.A.transpose() * state.multipliers;
      }
      damped_bfgs_update(state.hessian_approx, q_new - state.q,
                         grad_lag_new - grad_lag_old, opts.curvature_skip, opts.pd_floor);
    }

    SqpIterationRecord rec;
    rec.iteration = state.iteration + 1;
    rec.alpha = ls.alpha;
    rec.penalty = penalty;
    rec.merit_before = ls.merit_before;
    rec.merit_after = ls.merit_after;
    rec.refinement = refining;

    state.q = q_new;
    state.eval = std::move(eval_new);
    ++state.iteration;

    rec.objective = state.eval.f;
    rec.constraint_norm = feasibility(state.eval);
    rec.kkt_residual = kkt_residual(state.eval);
    report.history.push_back(rec);
  }
}

} // namespace mshoot
