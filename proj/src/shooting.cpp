#include "mshoot/shooting.hpp"

#include "mshoot/errors.hpp"

#include <cmath>
#include <limits>

namespace mshoot {

ShootingGrid::ShootingGrid(std::vector<double> nodes_, int steps)
    : nodes(std::move(nodes_)), steps_per_interval(steps) {
  validate();
}

void ShootingGrid::validate() const {
  if (nodes.size() < 2)
    throw DimensionError("shooting grid needs at least two nodes");
  for (std::size_t k = 1; k < nodes.size(); ++k)
    if (!(nodes[k] > nodes[k - 1]))
      throw DimensionError("shooting nodes must be strictly increasing");
  if (steps_per_interval < 1)
    throw DimensionError("steps_per_interval must be >= 1");
}

int ShootingGrid::find_node(double t) const {
  for (int k = 0; k < node_count(); ++k) {
    const double tol = 1e-9 * std::max(1.0, std::abs(nodes[k]));
    if (std::abs(nodes[k] - t) <= tol)
      return k;
  }
  return -1;
}

ExtendedParams::ExtendedParams(int node_count, int dim_state, int dim_params)
    : s_(Matrix::Zero(node_count, dim_state)), p_(Vector::Zero(dim_params)) {}

ExtendedParams::ExtendedParams(Matrix s_blocks, Vector p)
    : s_(std::move(s_blocks)), p_(std::move(p)) {}

void ExtendedParams::set_s(int j, const Vector &value) {
  if (value.size() != dim_state())
    throw DimensionError("set_s: state size mismatch");
  s_.row(j) = value.transpose();
}

Vector ExtendedParams::flatten() const {
  Vector flat(size());
  for (int j = 0; j < node_count(); ++j)
    flat.segment(s_offset(j), dim_state()) = s_.row(j).transpose();
  flat.segment(p_offset(), dim_params()) = p_;
  return flat;
}

ExtendedParams ExtendedParams::with_values(const Vector &flat) const {
  if (flat.size() != size())
    throw DimensionError("with_values: flat vector has wrong length");
  ExtendedParams out(node_count(), dim_state(), dim_params());
  for (int j = 0; j < node_count(); ++j)
    out.s_.row(j) = flat.segment(s_offset(j), dim_state()).transpose();
  out.p_ = flat.segment(p_offset(), dim_params());
  return out;
}

bool MeasurementSet::measured(int i, int j) const {
  return std::isfinite(values(i, j));
}

void MeasurementSet::validate() const {
  const auto obs = static_cast<Eigen::Index>(obs_indices.size());
  const auto cols = static_cast<Eigen::Index>(node_indices.size());
  if (values.rows() != obs || values.cols() != cols ||
      weights.rows() != obs || weights.cols() != cols)
    throw DimensionError("measurement matrices do not match index sets");
  if (!times.empty() && static_cast<Eigen::Index>(times.size()) != cols)
    throw DimensionError("measurement times do not match node indices");
  for (Eigen::Index i = 0; i < obs; ++i)
    for (Eigen::Index j = 0; j < cols; ++j)
      if (measured(static_cast<int>(i), static_cast<int>(j)) &&
          !(weights(i, j) > 0.0))
        throw DimensionError("measurement weights must be positive");
}

namespace {

void check_compatible(const ExtendedParams &q, const MeasurementSet &meas) {
  for (int j : meas.node_indices)
    if (j < 0 || j >= q.node_count())
      throw DimensionError("measurement node outside shooting grid");
  for (int i : meas.obs_indices)
    if (i < 0 || i >= q.dim_state())
      throw DimensionError("observed component outside state dimension");
}

} // namespace

double objective_value(const ExtendedParams &q, const MeasurementSet &meas) {
  check_compatible(q, meas);
  double sum = 0.0;
  for (int c = 0; c < meas.node_count(); ++c) {
    const int j = meas.node_indices[c];
    for (int r = 0; r < meas.obs_count(); ++r) {
      if (!meas.measured(r, c))
        continue;
      const double res =
          (meas.values(r, c) - q.s(j, meas.obs_indices[r])) / meas.weights(r, c);
      sum += res * res;
    }
  }
  return sum;
}

Vector objective_gradient(const ExtendedParams &q, const MeasurementSet &meas) {
  check_compatible(q, meas);
  Vector grad = Vector::Zero(q.size());
  for (int c = 0; c < meas.node_count(); ++c) {
    const int j = meas.node_indices[c];
    for (int r = 0; r < meas.obs_count(); ++r) {
      if (!meas.measured(r, c))
        continue;
      const int i = meas.obs_indices[r];
      const double w = meas.weights(r, c);
      grad[q.s_index(j, i)] += -2.0 * (meas.values(r, c) - q.s(j, i)) / (w * w);
    }
  }
  return grad;
}

Vector objective_hessian_diagonal(const ExtendedParams &q,
                                  const MeasurementSet &meas) {
  check_compatible(q, meas);
  Vector diag = Vector::Zero(q.size());
  for (int c = 0; c < meas.node_count(); ++c) {
    const int j = meas.node_indices[c];
    for (int r = 0; r < meas.obs_count(); ++r) {
      if (!meas.measured(r, c))
        continue;
      const double w = meas.weights(r, c);
      diag[q.s_index(j, meas.obs_indices[r])] += 2.0 / (w * w);
    }
  }
  return diag;
}

namespace {

void check_interval(int j, const ExtendedParams &q, const Model &model,
                    const ShootingGrid &grid) {
  if (j < 0 || j >= grid.intervals())
    throw DimensionError("interval index out of range");
  if (q.node_count() != grid.node_count() ||
      q.dim_state() != model.dim_state || q.dim_params() != model.dim_params)
    throw DimensionError("extended parameters do not match grid/model");
}

} // namespace

ConstraintValue constraint_value(int j, const ExtendedParams &q,
                                 const Model &model, const ShootingGrid &grid,
                                 const IntegratorOptions &opts) {
  check_interval(j, q, model, grid);
  try {
    Trajectory traj =
        integrate_forward(model, q.s(j), q.p(), grid.nodes[j],
                          grid.nodes[j + 1], grid.steps_per_interval, opts);
    Vector defect = traj.final_state() - q.s(j + 1);
    const double h = defect.squaredNorm();
    return ConstraintValue{h, std::move(defect), std::move(traj)};
  } catch (const BlowUp &e) {
    throw e.with_interval(j);
  }
}

ConstraintGradient constraint_gradient(int j, const ExtendedParams &q,
                                       const Model &model,
                                       const ShootingGrid &grid,
                                       const Trajectory &traj,
                                       const IntegratorOptions &opts) {
  check_interval(j, q, model, grid);
  if (traj.dim() != model.dim_state)
    throw DimensionError("trajectory dimension mismatch");

  // Terminal adjoint is -dh/dx at tau_{j+1}.
  const Vector terminal = -2.0 * (traj.final_state() - q.s(j + 1));
  AdjointResult adj;
  try {
    adj = integrate_adjoint(model, traj, q.p(), terminal, opts);
  } catch (const BlowUp &e) {
    throw e.with_interval(j);
  }

  ConstraintGradient g;
  g.j = j;
  g.grad_s_j1 = terminal;
  g.grad_s_j = -adj.lambda_at_start;
  g.grad_p = -adj.quad_params;
  return g;
}

Vector ConstraintGradient::dense(const ExtendedParams &shape) const {
  const int d = shape.dim_state();
  Vector out = Vector::Zero(shape.size());
  out.segment(shape.s_offset(j), d) = grad_s_j;
  out.segment(shape.s_offset(j + 1), d) = grad_s_j1;
  out.segment(shape.p_offset(), shape.dim_params()) = grad_p;
  return out;
}

std::vector<int> ConstraintGradient::support(const ExtendedParams &shape) const {
  std::vector<int> idx;
  const int d = shape.dim_state();
  for (int i = 0; i < d; ++i)
    idx.push_back(shape.s_index(j, i));
  for (int i = 0; i < d; ++i)
    idx.push_back(shape.s_index(j + 1, i));
  for (int k = 0; k < shape.dim_params(); ++k)
    idx.push_back(shape.p_offset() + k);
  return idx;
}

} // namespace mshoot
