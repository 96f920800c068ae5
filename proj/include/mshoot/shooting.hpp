#pragma once

#include "mshoot/ode.hpp"

#include <vector>

namespace mshoot {

/// Shooting nodes tau_0 < ... < tau_K; interval j is [tau_j, tau_{j+1}].
struct ShootingGrid {
  std::vector<double> nodes;
  int steps_per_interval = 100;

  ShootingGrid() = default;
  ShootingGrid(std::vector<double> nodes, int steps_per_interval);

  int intervals() const { return static_cast<int>(nodes.size()) - 1; }
  int node_count() const { return static_cast<int>(nodes.size()); }
  /// Throws DimensionError unless K >= 1 and nodes strictly increase.
  void validate() const;
  /// Index of the node equal to t (within 1e-9 relative), or -1.
  int find_node(double t) const;
};

/// Extended parameter vector q = (s_0, ..., s_K, p). Block accessors are the
/// only way in; flat offsets are computed here and nowhere else.
class ExtendedParams {
public:
  ExtendedParams(int node_count, int dim_state, int dim_params);
  ExtendedParams(Matrix s_blocks, Vector p);

  int node_count() const { return static_cast<int>(s_.rows()); }
  int dim_state() const { return static_cast<int>(s_.cols()); }
  int dim_params() const { return static_cast<int>(p_.size()); }
  /// n_q = d (K+1) + m
  int size() const { return node_count() * dim_state() + dim_params(); }

  Vector s(int j) const { return s_.row(j).transpose(); }
  void set_s(int j, const Vector &value);
  double s(int j, int i) const { return s_(j, i); }
  double &s(int j, int i) { return s_(j, i); }

  const Vector &p() const { return p_; }
  Vector &p() { return p_; }

  /// (K+1) x d matrix of node states.
  const Matrix &s_blocks() const { return s_; }

  int s_offset(int j) const { return j * dim_state(); }
  int s_index(int j, int i) const { return s_offset(j) + i; }
  int p_offset() const { return node_count() * dim_state(); }

  Vector flatten() const;
  /// Same block shape as `this`, values from a flat n_q-vector.
  ExtendedParams with_values(const Vector &flat) const;

private:
  Matrix s_;
  Vector p_;
};

/// Weighted observations eta_ij of state components obs_indices[i] at shooting
/// nodes node_indices[j]. Observation is coordinate projection. Missing
/// entries are NaN in `values`.
struct MeasurementSet {
  std::vector<double> times;     // one per measured node
  std::vector<int> node_indices; // shooting node of each column
  std::vector<int> obs_indices;  // 0-based state components
  Matrix values;                 // obs x |M|
  Matrix weights;                // obs x |M|, all > 0

  int obs_count() const { return static_cast<int>(obs_indices.size()); }
  int node_count() const { return static_cast<int>(node_indices.size()); }
  bool measured(int i, int j) const;
  /// Throws DimensionError on inconsistent shapes or non-positive weights.
  void validate() const;
};

/// Value of the scalarized continuity constraint h_j = |x_j(tau_{j+1}) -
/// s_{j+1}|^2 with the trajectory that produced it.
struct ConstraintValue {
  double h = 0.0;
  Vector defect; // x_j(tau_{j+1}) - s_{j+1}
  Trajectory traj;
};

/// Gradient of h_j over q. Only the s_j, s_{j+1} and p blocks can be nonzero.
struct ConstraintGradient {
  int j = 0;
  Vector grad_s_j;
  Vector grad_s_j1;
  Vector grad_p;

  /// Dense n_q-vector laid out like `shape`.
  Vector dense(const ExtendedParams &shape) const;
  /// Flat positions of the 2d + m designated entries, in block order.
  std::vector<int> support(const ExtendedParams &shape) const;
};

/// L(q) = sum over measured (i, j) of ((eta_ij - s_j[i]) / sigma_ij)^2.
double objective_value(const ExtendedParams &q, const MeasurementSet &meas);

/// Analytic gradient of objective_value; the p-block is always zero.
Vector objective_gradient(const ExtendedParams &q, const MeasurementSet &meas);

/// Diagonal Gauss-Newton Hessian of the objective: 2 / sigma^2 on measured
/// s entries, zero elsewhere.
Vector objective_hessian_diagonal(const ExtendedParams &q,
                                  const MeasurementSet &meas);

/// Integrates interval j from s_j and returns h_j with its trajectory.
/// BlowUp is rethrown with the interval index attached.
ConstraintValue constraint_value(int j, const ExtendedParams &q,
                                 const Model &model, const ShootingGrid &grid,
                                 const IntegratorOptions &opts = {});

/// Adjoint gradient of h_j from one backward sweep over `traj`, which must
/// come from constraint_value for the same (j, q).
ConstraintGradient constraint_gradient(int j, const ExtendedParams &q,
                                       const Model &model,
                                       const ShootingGrid &grid,
                                       const Trajectory &traj,
                                       const IntegratorOptions &opts = {});

} // namespace mshoot
