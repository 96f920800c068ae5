#include "mshoot/models.hpp"

#include "mshoot/errors.hpp"

namespace mshoot {

Model lv_model() {
  Model m;
  m.name = "lotka_volterra";
  m.dim_state = 2;
  m.dim_params = 4;
  m.rhs = [](const Vector &x, double, const Vector &p) {
    Vector f(2);
    f[0] = -p[0] * x[0] + p[1] * x[0] * x[1];
    f[1] = p[2] * x[1] - p[3] * x[0] * x[1];
    return f;
  };
  m.jac_state = [](const Vector &x, double, const Vector &p) {
    Matrix J(2, 2);
    J << -p[0] + p[1] * x[1], p[1] * x[0],
         -p[3] * x[1], p[2] - p[3] * x[0];
    return J;
  };
  m.jac_params = [](const Vector &x, double, const Vector &) {
    Matrix J(2, 4);
    J << -x[0], x[0] * x[1], 0.0, 0.0,
         0.0, 0.0, x[1], -x[0] * x[1];
    return J;
  };
  return m;
}

Model linear_model() {
  Model m;
  m.name = "linear";
  m.dim_state = 1;
  m.dim_params = 1;
  m.rhs = [](const Vector &x, double, const Vector &p) -> Vector {
    return p[0] * x;
  };
  m.jac_state = [](const Vector &, double, const Vector &p) {
    return Matrix::Constant(1, 1, p[0]);
  };
  m.jac_params = [](const Vector &x, double, const Vector &) {
    return Matrix::Constant(1, 1, x[0]);
  };
  return m;
}

Model zero_model(int dim_state, int dim_params) {
  Model m;
  m.name = "zero";
  m.dim_state = dim_state;
  m.dim_params = dim_params;
  m.rhs = [dim_state](const Vector &, double, const Vector &) -> Vector {
    return Vector::Zero(dim_state);
  };
  m.jac_state = [dim_state](const Vector &, double, const Vector &) -> Matrix {
    return Matrix::Zero(dim_state, dim_state);
  };
  m.jac_params = [dim_state, dim_params](const Vector &, double,
                                         const Vector &) -> Matrix {
    return Matrix::Zero(dim_state, dim_params);
  };
  return m;
}

Model make_model(const std::string &name) {
  if (name == "lotka_volterra")
    return lv_model();
  if (name == "linear")
    return linear_model();
  throw ConfigError("unknown model '" + name + "'");
}

std::vector<std::string> model_names() { return {"lotka_volterra", "linear"}; }

} // namespace mshoot
