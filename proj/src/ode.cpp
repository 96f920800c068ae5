#include "mshoot/ode.hpp"

#include "mshoot/errors.hpp"

#include <algorithm>
#include <cmath>

namespace mshoot {

void IntegrationStats::reset() {
  forward_sweeps = 0;
  forward_dims = 0;
  adjoint_sweeps = 0;
  adjoint_dims = 0;
  sensitivity_sweeps = 0;
  sensitivity_dims = 0;
}

namespace detail {

bool exceeds(const Vector &v, double bound) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double a = v[i];
    if (!std::isfinite(a) || std::abs(a) > bound)
      return true;
  }
  return false;
}

} // namespace detail

Trajectory::Trajectory(double t_start, double t_end, Matrix states,
                       Matrix derivs)
    : t_start_(t_start), t_end_(t_end), states_(std::move(states)),
      derivs_(std::move(derivs)) {
  if (!(t_end_ > t_start_))
    throw DimensionError("trajectory requires t_end > t_start");
  if (states_.rows() < 2 || states_.rows() != derivs_.rows() ||
      states_.cols() != derivs_.cols())
    throw DimensionError("trajectory grid shape mismatch");
}

double Trajectory::node_time(int k) const {
  // Last node is pinned to t_end.
  if (k == step_count())
    return t_end_;
  return t_start_ + k * step_size();
}

Trajectory integrate_forward(const Model &model, const Vector &s,
                             const Vector &p, double t_start, double t_end,
                             int step_count, const IntegratorOptions &opts) {
  const int d = model.dim_state;
  if (s.size() != d || p.size() != model.dim_params)
    throw DimensionError("integrate_forward: state/parameter size mismatch");
  if (!(t_end > t_start))
    throw DimensionError("integrate_forward: requires t_end > t_start");
  if (step_count < 1)
    throw DimensionError("integrate_forward: step_count must be >= 1");
  if (!s.allFinite() || !p.allFinite())
    throw DimensionError("integrate_forward: non-finite input");

  const double h = (t_end - t_start) / step_count;
  const double bound = opts.blowup_bound;
  Matrix states(step_count + 1, d);
  Matrix derivs(step_count + 1, d);

  auto check = [bound](const Vector &v, double t) {
    if (detail::exceeds(v, bound))
      throw BlowUp(t);
  };

  Vector x = s;
  check(x, t_start);
  Vector k1 = model.rhs(x, t_start, p);
  check(k1, t_start);

  for (int k = 0; k < step_count; ++k) {
    const double t = t_start + k * h;
    states.row(k) = x.transpose();
    derivs.row(k) = k1.transpose();

    const double t_mid = t + 0.5 * h;
    const double t_next =
        (k + 1 == step_count) ? t_end : t_start + (k + 1) * h;

    Vector k2 = model.rhs(x + 0.5 * h * k1, t_mid, p);
    check(k2, t_mid);
    Vector k3 = model.rhs(x + 0.5 * h * k2, t_mid, p);
    check(k3, t_mid);
    Vector k4 = model.rhs(x + h * k3, t_next, p);
    check(k4, t_next);

    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    check(x, t_next);
    k1 = model.rhs(x, t_next, p);
    check(k1, t_next);
  }
  states.row(step_count) = x.transpose();
  derivs.row(step_count) = k1.transpose();

  if (opts.stats) {
    opts.stats->forward_sweeps += 1;
    opts.stats->forward_dims += d;
  }
  return Trajectory(t_start, t_end, std::move(states), std::move(derivs));
}

Vector dense_eval(const Trajectory &traj, double t) {
  const int n = traj.step_count();
  const double h = traj.step_size();
  const double slack = h * 1e-9;
  if (t < traj.t_start() - slack || t > traj.t_end() + slack)
    throw OutOfRange("dense_eval: t outside trajectory range");

  const double u = (t - traj.t_start()) / h;
  const double nearest = std::round(u);
  if (std::abs(u - nearest) <= 1e-12 * std::max(1.0, std::abs(u))) {
    const int k = std::clamp(static_cast<int>(nearest), 0, n);
    return traj.states().row(k).transpose();
  }

  const int k = std::clamp(static_cast<int>(std::floor(u)), 0, n - 1);
  const double theta = u - k;
  const double t2 = theta * theta;
  const double t3 = t2 * theta;
  const double h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
  const double h10 = t3 - 2.0 * t2 + theta;
  const double h01 = -2.0 * t3 + 3.0 * t2;
  const double h11 = t3 - t2;

  return (h00 * traj.states().row(k) + h * h10 * traj.derivs().row(k) +
          h01 * traj.states().row(k + 1) + h * h11 * traj.derivs().row(k + 1))
      .transpose();
}

AdjointResult integrate_adjoint(const Model &model, const Trajectory &traj,
                                const Vector &p, const Vector &lambda_terminal,
                                const IntegratorOptions &opts) {
  const int d = model.dim_state;
  const int m = model.dim_params;
  if (traj.dim() != d || lambda_terminal.size() != d || p.size() != m)
    throw DimensionError("integrate_adjoint: dimension mismatch");
  if (!lambda_terminal.allFinite())
    throw DimensionError("integrate_adjoint: non-finite terminal value");

  const int n = traj.step_count();
  const double h = traj.step_size();
  const double bound = opts.blowup_bound;

  // Reversed time sigma = t_end - t turns the backward sweep into a forward
  // one: dlambda/dsigma = f_x^T lambda, dQ/dsigma = f_p^T lambda.
  auto field = [&](const Vector &x, double t, const Vector &lambda,
                   Vector &dlambda, Vector &dquad) {
    dlambda.noalias() = model.jac_state(x, t, p).transpose() * lambda;
    dquad.noalias() = model.jac_params(x, t, p).transpose() * lambda;
  };
  auto check = [bound](const Vector &a, const Vector &b, double t) {
    if (detail::exceeds(a, bound) || detail::exceeds(b, bound))
      throw BlowUp(t);
  };

  Vector lambda = lambda_terminal;
  Vector quad = Vector::Zero(m);
  Vector l1(d), l2(d), l3(d), l4(d), q1(m), q2(m), q3(m), q4(m);

  // Jacobians at the forward RK4 stage states, last stage first.
  for (int k = n; k > 0; --k) {
    const double t_lo = traj.t_start() + (k - 1) * h;
    const double t_mid = t_lo + 0.5 * h;
    const double t_hi = (k == n) ? traj.t_end() : traj.t_start() + k * h;
    const Vector x_lo = traj.states().row(k - 1).transpose();
    const Vector f_lo = traj.derivs().row(k - 1).transpose();
    const Vector x_s2 = x_lo + 0.5 * h * f_lo;
    const Vector x_s3 = x_lo + 0.5 * h * model.rhs(x_s2, t_mid, p);
    const Vector x_s4 = x_lo + h * model.rhs(x_s3, t_mid, p);

    field(x_s4, t_hi, lambda, l1, q1);
    check(l1, q1, t_hi);
    field(x_s3, t_mid, lambda + 0.5 * h * l1, l2, q2);
    check(l2, q2, t_mid);
    field(x_s2, t_mid, lambda + 0.5 * h * l2, l3, q3);
    check(l3, q3, t_mid);
    field(x_lo, t_lo, lambda + h * l3, l4, q4);
    check(l4, q4, t_lo);

    lambda += (h / 6.0) * (l1 + 2.0 * l2 + 2.0 * l3 + l4);
    quad += (h / 6.0) * (q1 + 2.0 * q2 + 2.0 * q3 + q4);
    check(lambda, quad, t_lo);
  }

  if (opts.stats) {
    opts.stats->adjoint_sweeps += 1;
    opts.stats->adjoint_dims += d + m;
  }
  return AdjointResult{std::move(lambda), std::move(quad)};
}

} // namespace mshoot
