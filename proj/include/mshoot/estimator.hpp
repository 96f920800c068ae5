#pragma once

#include "mshoot/nlp.hpp"
#include "mshoot/ode.hpp"
#include "mshoot/shooting.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mshoot {

/// Everything needed to set up an estimation run. `x0` and `p_true` drive
/// synthetic data generation and the single-shooting demo; the estimator
/// itself only sees measurements.
struct EstimationConfig {
  std::string model = "lotka_volterra";
  std::vector<double> nodes;
  int steps_per_interval = 100;
  Vector p0;
  Vector p_true;
  Vector x0;
  double noise_sigma = 0.05;
  /// false: every residual has weight 1; true: use the recorded sigmas.
  bool sigma_weighted = false;
  std::uint64_t seed = 1;
  SqpOptions solver;

  /// Throws ConfigError when inconsistent with the model dimensions.
  void validate() const;
  ShootingGrid grid() const;
};

/// Scalar ODE dimensions integrated by one estimation run, split by purpose.
/// Gradient passes pair one forward sweep (d) with one adjoint sweep (d + m);
/// curvature sweeps integrate the forward sensitivities for the Hessian model.
struct WorkCounts {
  long gradient_passes = 0;
  long gradient_dims = 0;
  long value_sweeps = 0;
  long value_dims = 0;
  long curvature_sweeps = 0;
  long curvature_dims = 0;
};

struct EstimationResult {
  Vector p_hat;
  Matrix s_hat; // (K+1) x d
  int iterations = 0;
  bool converged = false;
  std::string status;
  std::string message;
  double final_objective = 0.0;
  double final_constraint_norm = 0.0; // max_j h_j
  double kkt_residual = 0.0;
  std::vector<SqpIterationRecord> history;
  WorkCounts work;
};

/// Shooting node of every measurement column, matched by time. Throws
/// ConfigError if a measurement time is not a shooting node.
MeasurementSet attach_to_grid(MeasurementSet meas, const ShootingGrid &grid);

/// s_j[i] = eta_ij where measured; other entries linearly interpolated in time
/// between the nearest measured nodes (constant beyond the ends); p = p0.
ExtendedParams initialize_q(const MeasurementSet &meas, const ShootingGrid &grid,
                            int dim_state, const Vector &p0);

/// Multiple-shooting NLP: objective over s-blocks, one scalarized continuity
/// constraint per interval with adjoint gradients. The Hessian model is the
/// exact objective diagonal plus Gauss-Newton blocks 2 J_j^T J_j of the
/// defects on their s_j, s_{j+1}, p support. `work` may be null.
NlpProblem make_shooting_nlp(const Model &model, const ShootingGrid &grid,
                             const MeasurementSet &meas,
                             const ExtendedParams &shape,
                             WorkCounts *work = nullptr);

/// Runs sqp_solve from initialize_q. `meas` times must lie on config nodes.
/// Unless config.sigma_weighted, all weights are reset to 1.
EstimationResult estimate(const EstimationConfig &config,
                          const MeasurementSet &meas);

struct StudyResult {
  Vector means;
  Vector stds; // sample standard deviation, n - 1 denominator
  int converged_runs = 0;
  int excluded_runs = 0;
  std::vector<EstimationResult> runs;
};

/// n_runs estimations on synthetic data with seeds config.seed + k.
/// Non-converged runs are excluded from the statistics but kept in `runs`.
/// Throws StudyDegenerate if fewer than two runs converge.
StudyResult replicate_study(const EstimationConfig &config, int n_runs);

struct SingleShootReport {
  std::optional<double> blowup_time;
  Vector final_state; // empty on blow-up
  int steps = 0;
};

/// One integration over the whole horizon from x0 with p0.
SingleShootReport single_shooting_demo(const EstimationConfig &config);

struct IntervalGradCheck {
  int interval = 0;
  double fd_s_j = 0.0;
  double fd_s_j1 = 0.0;
  double fd_p = 0.0;
  double fd_off_support = 0.0; // largest |FD| outside the 2d+m support
  double sens_s_j = 0.0;
  double sens_s_j1 = 0.0;
  double sens_p = 0.0;
};

struct GradCheckReport {
  int points = 0;
  double max_fd_error = 0.0;
  double max_sens_error = 0.0;
  std::vector<IntervalGradCheck> intervals; // worst over points, per interval
};

/// Checks every constraint gradient against central differences and the
/// forward-sensitivity chain rule at `q` only.
GradCheckReport gradcheck_at(const Model &model, const ShootingGrid &grid,
                             const ExtendedParams &q, double fd_step = 1e-6);

/// gradcheck_at at initialize_q and at `perturbed_points` random
/// perturbations of it. Throws GradMismatch above `tolerance`.
GradCheckReport gradcheck(const EstimationConfig &config,
                          const MeasurementSet &meas,
                          int perturbed_points = 5, double tolerance = 1e-4);

} // namespace mshoot
