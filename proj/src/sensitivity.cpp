#include "mshoot/sensitivity.hpp"

#include "mshoot/errors.hpp"

#include <algorithm>
#include <cmath>

namespace mshoot {

ForwardSensitivities forward_sensitivities(const Model &model, const Vector &s,
                                           const Vector &p, double t_start,
                                           double t_end, int step_count,
                                           const IntegratorOptions &opts) {
  const int d = model.dim_state;
  const int m = model.dim_params;
  if (s.size() != d || p.size() != m)
    throw DimensionError("forward_sensitivities: size mismatch");
  if (!(t_end > t_start) || step_count < 1)
    throw DimensionError("forward_sensitivities: bad interval");

  // Augmented state: x (d) followed by S (d x (d+m)), stored column-major.
  const int cols = d + m;
  const double h = (t_end - t_start) / step_count;
  const double bound = opts.blowup_bound;

  auto field = [&](const Vector &x, const Matrix &S, double t, Vector &dx,
                   Matrix &dS) {
    dx = model.rhs(x, t, p);
    dS.noalias() = model.jac_state(x, t, p) * S;
    dS.rightCols(m) += model.jac_params(x, t, p);
  };
  auto check = [bound](const Vector &x, const Matrix &S, double t) {
    if (detail::exceeds(x, bound) ||
        detail::exceeds(Eigen::Map<const Vector>(S.data(), S.size()), bound))
      throw BlowUp(t);
  };

  Vector x = s;
  Matrix S = Matrix::Zero(d, cols);
  S.leftCols(d).setIdentity();

  Vector k1, k2, k3, k4;
  Matrix K1(d, cols), K2(d, cols), K3(d, cols), K4(d, cols);
  for (int k = 0; k < step_count; ++k) {
    const double t = t_start + k * h;
    const double t_mid = t + 0.5 * h;
    const double t_next = (k + 1 == step_count) ? t_end : t_start + (k + 1) * h;
    field(x, S, t, k1, K1);
    check(k1, K1, t);
    field(x + 0.5 * h * k1, S + 0.5 * h * K1, t_mid, k2, K2);
    check(k2, K2, t_mid);
    field(x + 0.5 * h * k2, S + 0.5 * h * K2, t_mid, k3, K3);
    check(k3, K3, t_mid);
    field(x + h * k3, S + h * K3, t_next, k4, K4);
    check(k4, K4, t_next);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    S += (h / 6.0) * (K1 + 2.0 * K2 + 2.0 * K3 + K4);
    check(x, S, t_next);
  }

  if (opts.stats) {
    opts.stats->sensitivity_sweeps += 1;
    opts.stats->sensitivity_dims += d + d * cols;
  }
  return ForwardSensitivities{S.leftCols(d), S.rightCols(m)};
}

Vector finite_diff_gradient(const std::function<double(const Vector &)> &fn,
                            const Vector &point, double step) {
  if (!(step > 0.0))
    throw DimensionError("finite_diff_gradient: step must be positive");
  Vector grad(point.size());
  Vector x = point;
  for (Eigen::Index k = 0; k < point.size(); ++k) {
    x[k] = point[k] + step;
    const double up = fn(x);
    x[k] = point[k] - step;
    const double down = fn(x);
    x[k] = point[k];
    grad[k] = (up - down) / (2.0 * step);
  }
  return grad;
}

CostReport cost_report(int dim_state, int dim_params) {
  if (dim_state < 1 || dim_params < 1)
    throw DimensionError("cost_report: dimensions must be >= 1");
  const long d = dim_state;
  const long m = dim_params;
  return CostReport{d * (d + m) + d, 2 * d + m};
}

double relative_error(double value, double reference) {
  return std::abs(value - reference) / std::max(1.0, std::abs(reference));
}

double max_relative_error(const Vector &value, const Vector &reference) {
  if (value.size() != reference.size())
    throw DimensionError("max_relative_error: size mismatch");
  double worst = 0.0;
  for (Eigen::Index k = 0; k < value.size(); ++k)
    worst = std::max(worst, relative_error(value[k], reference[k]));
  return worst;
}

} // namespace mshoot
