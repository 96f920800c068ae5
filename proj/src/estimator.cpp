#include "mshoot/estimator.hpp"

#include "mshoot/data_io.hpp"
#include "mshoot/errors.hpp"
#include "mshoot/models.hpp"
#include "mshoot/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <future>
#include <limits>
#include <thread>

namespace mshoot {

void EstimationConfig::validate() const {
  const Model m = make_model(model);
  if (nodes.size() < 2)
    throw ConfigError("need at least two nodes");
  for (std::size_t k = 1; k < nodes.size(); ++k)
    if (!(nodes[k] > nodes[k - 1]))
      throw ConfigError("nodes must be strictly increasing");
  if (steps_per_interval < 1)
    throw ConfigError("steps_per_interval must be >= 1");
  if (p0.size() != m.dim_params)
    throw ConfigError("p0 must have " + std::to_string(m.dim_params) +
                      " entries for model " + model);
  if (p_true.size() != 0 && p_true.size() != m.dim_params)
    throw ConfigError("p_true has wrong length for model " + model);
  if (x0.size() != 0 && x0.size() != m.dim_state)
    throw ConfigError("x0 has wrong length for model " + model);
  if (!(noise_sigma >= 0.0))
    throw ConfigError("sigma must be >= 0");
  if (solver.max_iter < 0 || !(solver.kkt_tol > 0.0))
    throw ConfigError("invalid solver options");
}

ShootingGrid EstimationConfig::grid() const {
  return ShootingGrid(nodes, steps_per_interval);
}

MeasurementSet attach_to_grid(MeasurementSet meas, const ShootingGrid &grid) {
  if (meas.times.size() != meas.node_indices.size())
    throw ConfigError("measurements carry no times to match against nodes");
  for (std::size_t c = 0; c < meas.times.size(); ++c) {
    const int k = grid.find_node(meas.times[c]);
    if (k < 0)
      throw ConfigError("measurement time " + format_double(meas.times[c]) +
                        " is not a shooting node");
    meas.node_indices[c] = k;
  }
  meas.validate();
  return meas;
}

ExtendedParams initialize_q(const MeasurementSet &meas, const ShootingGrid &grid,
                            int dim_state, const Vector &p0) {
  meas.validate();
  const int nodes = grid.node_count();
  ExtendedParams q(nodes, dim_state, static_cast<int>(p0.size()));
  q.p() = p0;

  for (int i = 0; i < dim_state; ++i) {
    // Known (node, value) pairs for component i, ordered by node.
    std::vector<std::pair<int, double>> known;
    for (int r = 0; r < meas.obs_count(); ++r) {
      if (meas.obs_indices[r] != i)
        continue;
      for (int c = 0; c < meas.node_count(); ++c)
        if (meas.measured(r, c))
          known.emplace_back(meas.node_indices[c], meas.values(r, c));
    }
    if (known.empty())
      throw UninitializableState(i);
    std::sort(known.begin(), known.end());

    for (int j = 0; j < nodes; ++j) {
      auto hi = std::lower_bound(
          known.begin(), known.end(), j,
          [](const std::pair<int, double> &a, int b) { return a.first < b; });
      double value;
      if (hi != known.end() && hi->first == j) {
        value = hi->second;
      } else if (hi == known.begin()) {
        value = hi->second;
      } else if (hi == known.end()) {
        value = known.back().second;
      } else {
        const auto lo = std::prev(hi);
        const double t0 = grid.nodes[lo->first];
        const double t1 = grid.nodes[hi->first];
        const double w = (grid.nodes[j] - t0) / (t1 - t0);
        value = (1.0 - w) * lo->second + w * hi->second;
      }
      q.s(j, i) = value;
    }
  }
  return q;
}

namespace {

/// Runs fn(j) for j in [0, count), spread over hardware threads. The
/// exception from the lowest failing j is rethrown.
template <class Fn> void for_each_interval(int count, Fn &&fn) {
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const int workers = std::min<int>(static_cast<int>(hw), count);
  std::vector<std::exception_ptr> errors(count);
  auto run = [&](int start) {
    for (int j = start; j < count; j += workers) {
      try {
        fn(j);
      } catch (...) {
        errors[j] = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    run(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back(run, w);
    for (auto &t : pool)
      t.join();
  }
  for (auto &e : errors)
    if (e)
      std::rethrow_exception(e);
}

} // namespace

NlpProblem make_shooting_nlp(const Model &model, const ShootingGrid &grid,
                             const MeasurementSet &meas,
                             const ExtendedParams &shape, WorkCounts *work) {
  grid.validate();
  const int K = grid.intervals();

  NlpProblem prob;
  prob.n = shape.size();
  prob.c = K;
  prob.objective = [shape, meas](const Vector &flat) {
    return objective_value(shape.with_values(flat), meas);
  };
  prob.objective_grad = [shape, meas](const Vector &flat) {
    return objective_gradient(shape.with_values(flat), meas);
  };
  prob.constraints = [=](const Vector &flat) {
    const ExtendedParams q = shape.with_values(flat);
    Vector h(K);
    IntegrationStats stats;
    IntegratorOptions opts;
    opts.stats = &stats;
    for_each_interval(K, [&](int j) {
      h[j] = constraint_value(j, q, model, grid, opts).h;
    });
    if (work) {
      work->value_sweeps += stats.forward_sweeps;
      work->value_dims += stats.total_dims();
    }
    return h;
  };
  prob.constraint_grads = [=](const Vector &flat) {
    const ExtendedParams q = shape.with_values(flat);
    std::vector<ConstraintGradient> grads(K);
    IntegrationStats stats;
    IntegratorOptions opts;
    opts.stats = &stats;
    for_each_interval(K, [&](int j) {
      const ConstraintValue cv = constraint_value(j, q, model, grid, opts);
      grads[j] = constraint_gradient(j, q, model, grid, cv.traj, opts);
    });
    if (work) {
      work->gradient_passes += stats.adjoint_sweeps;
      work->gradient_dims += stats.total_dims();
    }
    std::vector<Eigen::Triplet<double>> entries;
    for (const auto &g : grads) {
      const Vector dense = g.dense(q);
      for (int idx : g.support(q))
        entries.emplace_back(g.j, idx, dense[idx]);
    }
    SparseMatrix A(K, q.size());
    A.setFromTriplets(entries.begin(), entries.end());
    return A;
  };
  prob.constraint_curvature = [=](const Vector &flat) {
    const ExtendedParams q = shape.with_values(flat);
    const int d = model.dim_state;
    const int m = model.dim_params;
    std::vector<CurvatureBlock> blocks(K);
    IntegrationStats stats;
    IntegratorOptions opts;
    opts.stats = &stats;
    for_each_interval(K, [&](int j) {
      const ForwardSensitivities sens = forward_sensitivities(
          model, q.s(j), q.p(), grid.nodes[j], grid.nodes[j + 1],
          grid.steps_per_interval, opts);
      Matrix J(d, 2 * d + m);
      J << sens.dx_ds, -Matrix::Identity(d, d), sens.dx_dp;
      CurvatureBlock &b = blocks[j];
      for (int i = 0; i < d; ++i)
        b.support.push_back(q.s_index(j, i));
      for (int i = 0; i < d; ++i)
        b.support.push_back(q.s_index(j + 1, i));
      for (int i = 0; i < m; ++i)
        b.support.push_back(q.p_offset() + i);
      b.block = 2.0 * J.transpose() * J;
    });
    if (work) {
      work->curvature_sweeps += stats.sensitivity_sweeps;
      work->curvature_dims += stats.total_dims();
    }
    return blocks;
  };
  prob.hessian_seed = objective_hessian_diagonal(shape, meas);
  prob.objective_hessian = prob.hessian_seed;
  prob.nonnegative_constraints = true;
  return prob;
}

EstimationResult estimate(const EstimationConfig &config,
                          const MeasurementSet &meas_in) {
  config.validate();
  const Model model = make_model(config.model);
  const ShootingGrid grid = config.grid();
  MeasurementSet meas = attach_to_grid(meas_in, grid);
  if (!config.sigma_weighted)
    meas.weights.setOnes();
  const ExtendedParams q0 =
      initialize_q(meas, grid, model.dim_state, config.p0);

  EstimationResult result;
  const NlpProblem prob = make_shooting_nlp(model, grid, meas, q0, &result.work);
  const SqpResult sol = sqp_solve(prob, q0.flatten(), config.solver);

  const ExtendedParams q_hat = q0.with_values(sol.q);
  result.p_hat = q_hat.p();
  result.s_hat = q_hat.s_blocks();
  result.iterations = sol.report.iterations;
  result.converged = sol.report.converged;
  result.status = to_string(sol.report.status);
  result.message = sol.report.message;
  result.final_objective = sol.objective;
  result.final_constraint_norm =
      sol.constraints.size() ? sol.constraints.lpNorm<Eigen::Infinity>() : 0.0;
  result.kkt_residual = sol.report.kkt_residual;
  result.history = sol.report.history;
  return result;
}

StudyResult replicate_study(const EstimationConfig &config, int n_runs) {
  config.validate();
  if (n_runs < 2)
    throw ConfigError("a study needs at least 2 runs");
  if (config.x0.size() == 0 || config.p_true.size() == 0)
    throw ConfigError("a study needs x0 and p_true for synthetic data");
  const Model model = make_model(config.model);

  auto run_one = [&](int k) {
    const MeasurementSet data =
        generate_synthetic(model, config.x0, config.p_true, config.nodes,
                           config.noise_sigma, config.seed + k);
    try {
      return estimate(config, data);
    } catch (const BlowUp &e) {
      EstimationResult failed;
      failed.status = "blowup";
      failed.message = e.what();
      return failed;
    }
  };

  StudyResult study;
  study.runs.resize(n_runs);
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (hw <= 1) {
    for (int k = 0; k < n_runs; ++k)
      study.runs[k] = run_one(k);
  } else {
    std::vector<std::future<EstimationResult>> futures;
    for (int k = 0; k < n_runs; ++k)
      futures.push_back(std::async(std::launch::async, run_one, k));
    for (int k = 0; k < n_runs; ++k)
      study.runs[k] = futures[k].get();
  }

  std::vector<const EstimationResult *> ok;
  for (const auto &r : study.runs)
    if (r.converged)
      ok.push_back(&r);
  study.converged_runs = static_cast<int>(ok.size());
  study.excluded_runs = n_runs - study.converged_runs;
  if (ok.size() < 2)
    throw StudyDegenerate(static_cast<int>(ok.size()));

  const int m = model.dim_params;
  study.means = Vector::Zero(m);
  for (const auto *r : ok)
    study.means += r->p_hat;
  study.means /= static_cast<double>(ok.size());
  study.stds = Vector::Zero(m);
  for (const auto *r : ok)
    study.stds += (r->p_hat - study.means).cwiseAbs2();
  study.stds = (study.stds / static_cast<double>(ok.size() - 1)).cwiseSqrt();
  return study;
}

SingleShootReport single_shooting_demo(const EstimationConfig &config) {
  config.validate();
  if (config.x0.size() == 0)
    throw ConfigError("single shooting needs x0");
  const Model model = make_model(config.model);
  SingleShootReport report;
  report.steps = config.steps_per_interval *
                 static_cast<int>(config.nodes.size() - 1);
  try {
    const Trajectory traj =
        integrate_forward(model, config.x0, config.p0, config.nodes.front(),
                          config.nodes.back(), report.steps);
    report.final_state = traj.final_state();
  } catch (const BlowUp &e) {
    report.blowup_time = e.time();
  }
  return report;
}

GradCheckReport gradcheck_at(const Model &model, const ShootingGrid &grid,
                             const ExtendedParams &q, double fd_step) {
  const int K = grid.intervals();
  const int d = model.dim_state;
  const int m = model.dim_params;
  GradCheckReport report;
  report.points = 1;
  report.intervals.resize(K);

  for (int j = 0; j < K; ++j) {
    const ConstraintValue cv = constraint_value(j, q, model, grid);
    const ConstraintGradient g = constraint_gradient(j, q, model, grid, cv.traj);

    const Vector fd = finite_diff_gradient(
        [&](const Vector &flat) {
          return constraint_value(j, q.with_values(flat), model, grid).h;
        },
        q.flatten(), fd_step);

    const ForwardSensitivities sens = forward_sensitivities(
        model, q.s(j), q.p(), grid.nodes[j], grid.nodes[j + 1],
        grid.steps_per_interval);
    const Vector chain_s_j = 2.0 * sens.dx_ds.transpose() * cv.defect;
    const Vector chain_p = 2.0 * sens.dx_dp.transpose() * cv.defect;
    const Vector chain_s_j1 = -2.0 * cv.defect;

    IntervalGradCheck &rec = report.intervals[j];
    rec.interval = j;
    rec.fd_s_j = max_relative_error(g.grad_s_j, fd.segment(q.s_offset(j), d));
    rec.fd_s_j1 =
        max_relative_error(g.grad_s_j1, fd.segment(q.s_offset(j + 1), d));
    rec.fd_p = max_relative_error(g.grad_p, fd.segment(q.p_offset(), m));
    Vector off = fd;
    for (int idx : g.support(q))
      off[idx] = 0.0;
    rec.fd_off_support = off.lpNorm<Eigen::Infinity>();
    rec.sens_s_j = max_relative_error(g.grad_s_j, chain_s_j);
    rec.sens_s_j1 = max_relative_error(g.grad_s_j1, chain_s_j1);
    rec.sens_p = max_relative_error(g.grad_p, chain_p);

    report.max_fd_error =
        std::max({report.max_fd_error, rec.fd_s_j, rec.fd_s_j1, rec.fd_p,
                  rec.fd_off_support});
    report.max_sens_error = std::max(
        {report.max_sens_error, rec.sens_s_j, rec.sens_s_j1, rec.sens_p});
  }
  return report;
}

namespace {

void merge_worst(GradCheckReport &into, const GradCheckReport &from) {
  into.points += from.points;
  into.max_fd_error = std::max(into.max_fd_error, from.max_fd_error);
  into.max_sens_error = std::max(into.max_sens_error, from.max_sens_error);
  for (std::size_t j = 0; j < into.intervals.size(); ++j) {
    auto &a = into.intervals[j];
    const auto &b = from.intervals[j];
    a.fd_s_j = std::max(a.fd_s_j, b.fd_s_j);
    a.fd_s_j1 = std::max(a.fd_s_j1, b.fd_s_j1);
    a.fd_p = std::max(a.fd_p, b.fd_p);
    a.fd_off_support = std::max(a.fd_off_support, b.fd_off_support);
    a.sens_s_j = std::max(a.sens_s_j, b.sens_s_j);
    a.sens_s_j1 = std::max(a.sens_s_j1, b.sens_s_j1);
    a.sens_p = std::max(a.sens_p, b.sens_p);
  }
}

} // namespace

GradCheckReport gradcheck(const EstimationConfig &config,
                          const MeasurementSet &meas_in, int perturbed_points,
                          double tolerance) {
  config.validate();
  const Model model = make_model(config.model);
  const ShootingGrid grid = config.grid();
  const MeasurementSet meas = attach_to_grid(meas_in, grid);
  const ExtendedParams q0 = initialize_q(meas, grid, model.dim_state, config.p0);

  GradCheckReport report = gradcheck_at(model, grid, q0);
  Rng rng(config.seed);
  const Vector base = q0.flatten();
  for (int k = 0; k < perturbed_points; ++k) {
    Vector flat = base;
    for (Eigen::Index i = 0; i < flat.size(); ++i)
      flat[i] += 0.05 * (1.0 + std::abs(base[i])) * rng.normal();
    merge_worst(report, gradcheck_at(model, grid, q0.with_values(flat)));
  }

  const double worst = std::max(report.max_fd_error, report.max_sens_error);
  if (worst > tolerance) {
    int where = 0;
    double w = -1.0;
    for (const auto &r : report.intervals) {
      const double e = std::max({r.fd_s_j, r.fd_s_j1, r.fd_p, r.fd_off_support,
                                 r.sens_s_j, r.sens_s_j1, r.sens_p});
      if (e > w) {
        w = e;
        where = r.interval;
      }
    }
    throw GradMismatch(worst, "interval " + std::to_string(where));
  }
  return report;
}

} // namespace mshoot
