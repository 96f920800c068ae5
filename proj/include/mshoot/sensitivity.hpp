#pragma once

#include "mshoot/ode.hpp"

#include <functional>

namespace mshoot {

/// End-of-interval variational matrices dx(t_end)/ds and dx(t_end)/dp.
struct ForwardSensitivities {
  Matrix dx_ds; // d x d
  Matrix dx_dp; // d x m
};

/// Per-interval work in integrated scalar ODE components.
struct CostReport {
  long ode_dimensions_forward_sens = 0; // d + d (d + m)
  long ode_dimensions_adjoint = 0;      // d + d + m
};

/// Integrates x' = f together with S' = f_x S + [0 | f_p], S(t_start) =
/// [I | 0], on the same RK4 grid that integrate_forward uses.
ForwardSensitivities forward_sensitivities(const Model &model, const Vector &s,
                                           const Vector &p, double t_start,
                                           double t_end, int step_count,
                                           const IntegratorOptions &opts = {});

/// Central differences (f(x + h e_k) - f(x - h e_k)) / 2h per coordinate.
Vector finite_diff_gradient(const std::function<double(const Vector &)> &fn,
                            const Vector &point, double step = 1e-6);

CostReport cost_report(int dim_state, int dim_params);

/// |a - b| / max(1, |b|), the comparison used by every gradient check.
double relative_error(double value, double reference);
double max_relative_error(const Vector &value, const Vector &reference);

} // namespace mshoot
