#pragma once

#include "mshoot/estimator.hpp"
#include "mshoot/models.hpp"
#include "mshoot/ode.hpp"

#include <cmath>
#include <random>
#include <vector>

namespace mshoot::testing {

/// x' = A x for a fixed matrix A (no parameters used, m = 1 dummy).
inline Model matrix_model(const Matrix &A) {
  Model m;
  m.name = "matrix";
  m.dim_state = static_cast<int>(A.rows());
  m.dim_params = 1;
  m.rhs = [A](const Vector &x, double, const Vector &) -> Vector {
    return A * x;
  };
  m.jac_state = [A](const Vector &, double, const Vector &) -> Matrix {
    return A;
  };
  m.jac_params = [A](const Vector &, double, const Vector &) -> Matrix {
    return Matrix::Zero(A.rows(), 1);
  };
  return m;
}

/// Scalar x' = p, so f_x = 0 and f_p = 1.
inline Model drift_model() {
  Model m;
  m.name = "drift";
  m.dim_state = 1;
  m.dim_params = 1;
  m.rhs = [](const Vector &, double, const Vector &p) -> Vector { return p; };
  m.jac_state = [](const Vector &, double, const Vector &) -> Matrix {
    return Matrix::Zero(1, 1);
  };
  m.jac_params = [](const Vector &, double, const Vector &) -> Matrix {
    return Matrix::Ones(1, 1);
  };
  return m;
}

inline Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index k = 0;
  for (double x : v)
    out[k++] = x;
  return out;
}

inline std::vector<double> unit_nodes(int K) {
  std::vector<double> nodes;
  for (int j = 0; j <= K; ++j)
    nodes.push_back(j);
  return nodes;
}

/// The LV benchmark setup: nodes 0..10, x0 = (0.4, 1), p_true = 1,
/// p0 = (0.5, 0.5, 0.5, -0.2), sigma = 0.05.
inline EstimationConfig lv_benchmark(double sigma = 0.05,
                                     std::uint64_t seed = 1) {
  EstimationConfig cfg;
  cfg.model = "lotka_volterra";
  cfg.nodes = unit_nodes(10);
  cfg.steps_per_interval = 100;
  cfg.x0 = vec({0.4, 1.0});
  cfg.p_true = vec({1.0, 1.0, 1.0, 1.0});
  cfg.p0 = vec({0.5, 0.5, 0.5, -0.2});
  cfg.noise_sigma = sigma;
  cfg.seed = seed;
  return cfg;
}

inline Vector uniform_vector(std::mt19937_64 &gen, int n, double lo,
                             double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Vector v(n);
  for (int k = 0; k < n; ++k)
    v[k] = dist(gen);
  return v;
}

} // namespace mshoot::testing
