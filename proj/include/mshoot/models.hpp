#pragma once

#include "mshoot/ode.hpp"

#include <string>
#include <vector>

namespace mshoot {

/// Lotka-Volterra predator-prey system, d = 2, m = 4:
///   x1' = -p1 x1 + p2 x1 x2
///   x2' =  p3 x2 - p4 x1 x2
Model lv_model();

/// Scalar linear growth x' = a x (d = 1, m = 1). Closed form
/// x(t) = s exp(a (t - t0)); used as a verification oracle.
Model linear_model();

/// x' = 0 with the given dimensions. Test fixture for frozen flows.
Model zero_model(int dim_state, int dim_params);

/// Registry lookup: "lotka_volterra" or "linear". Throws ConfigError.
Model make_model(const std::string &name);
std::vector<std::string> model_names();

} // namespace mshoot
