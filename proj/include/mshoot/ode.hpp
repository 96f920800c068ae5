#pragma once

#include <Eigen/Dense>

#include <atomic>
#include <functional>
#include <string>

namespace mshoot {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Right-hand side of x' = f(x, t, p) together with its analytic Jacobians.
struct Model {
  using Rhs = std::function<Vector(const Vector &x, double t, const Vector &p)>;
  using Jacobian =
      std::function<Matrix(const Vector &x, double t, const Vector &p)>;

  std::string name;
  int dim_state = 0;
  int dim_params = 0;
  Rhs rhs;
  Jacobian jac_state;  // d x d, df/dx
  Jacobian jac_params; // d x m, df/dp
};

/// Scalar-ODE-dimension counters. One forward sweep of a d-dimensional system
/// adds d to `forward_dims`; one adjoint sweep adds d + m (adjoint plus
/// quadrature components) to `adjoint_dims`.
struct IntegrationStats {
  std::atomic<long> forward_sweeps{0};
  std::atomic<long> forward_dims{0};
  std::atomic<long> adjoint_sweeps{0};
  std::atomic<long> adjoint_dims{0};
  std::atomic<long> sensitivity_sweeps{0};
  std::atomic<long> sensitivity_dims{0};

  long total_dims() const {
    return forward_dims + adjoint_dims + sensitivity_dims;
  }
  void reset();
};

struct IntegratorOptions {
  /// A state or stage with any |component| above this bound is a blow-up.
  double blowup_bound = 1e12;
  /// Optional work counters; not owned.
  IntegrationStats *stats = nullptr;
};

/// Fixed-step RK4 solution of one IVP on a uniform grid. Immutable; the
/// derivative at every node is stored for Hermite dense output.
class Trajectory {
public:
  Trajectory(double t_start, double t_end, Matrix states, Matrix derivs);

  double t_start() const { return t_start_; }
  double t_end() const { return t_end_; }
  int step_count() const { return static_cast<int>(states_.rows()) - 1; }
  double step_size() const { return (t_end_ - t_start_) / step_count(); }
  int dim() const { return static_cast<int>(states_.cols()); }
  double node_time(int k) const;

  /// (step_count+1) x d; row k is x(t_k).
  const Matrix &states() const { return states_; }
  /// (step_count+1) x d; row k is f(x(t_k), t_k, p).
  const Matrix &derivs() const { return derivs_; }

  Vector initial_state() const { return states_.row(0).transpose(); }
  Vector final_state() const { return states_.row(states_.rows() - 1).transpose(); }

private:
  double t_start_;
  double t_end_;
  Matrix states_;
  Matrix derivs_;
};

/// Adjoint value at the left end of the interval and the accumulated
/// quadrature of lambda^T f_p over the interval.
struct AdjointResult {
  Vector lambda_at_start;
  Vector quad_params;
};

/// Classical RK4 from x(t_start) = s with `step_count` uniform steps.
/// Throws BlowUp with the first offending time on divergence.
Trajectory integrate_forward(const Model &model, const Vector &s,
                             const Vector &p, double t_start, double t_end,
                             int step_count,
                             const IntegratorOptions &opts = {});

/// Cubic Hermite interpolation of a trajectory. Exact at grid nodes.
/// Throws OutOfRange outside [t_start, t_end] (with a h*1e-9 slack).
Vector dense_eval(const Trajectory &traj, double t);

/// Integrates lambda' = -f_x^T lambda backward from traj.t_end() to
/// traj.t_start() with RK4 on the trajectory's grid, starting from
/// `lambda_terminal`, while accumulating int lambda^T f_p dt as m extra
/// components of the same sweep. The stage Jacobians are evaluated at the
/// forward RK4 stage states (recomputed from `traj`, which must come from
/// integrate_forward with the same `p`), which makes the result the exact
/// transpose of the forward step's linearization.
AdjointResult integrate_adjoint(const Model &model, const Trajectory &traj,
                                const Vector &p, const Vector &lambda_terminal,
                                const IntegratorOptions &opts = {});

namespace detail {
/// True if any entry is non-finite or exceeds `bound` in magnitude.
bool exceeds(const Vector &v, double bound);
} // namespace detail

} // namespace mshoot
