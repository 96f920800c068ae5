#pragma once

#include "mshoot/estimator.hpp"
#include "mshoot/ode.hpp"
#include "mshoot/shooting.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mshoot {

/// xoshiro256** seeded through splitmix64; normals by Box-Muller on
/// (0, 1] uniforms. The stream depends only on the seed.
class Rng {
public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double normal();

private:
  std::array<std::uint64_t, 4> state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Integrates the true system at 1000 steps per unit time, samples it at
/// `times` and adds N(0, sigma^2) noise to every observed entry. The weights
/// are sigma, or 1 when sigma = 0. `obs` defaults to all components.
MeasurementSet generate_synthetic(const Model &model, const Vector &x0,
                                  const Vector &p_true,
                                  const std::vector<double> &times,
                                  double sigma, std::uint64_t seed,
                                  std::vector<int> obs = {});

/// CSV with header `t,x1,...[,sigma1,...]`; blank cells are unobserved.
/// Missing sigma columns take `default_sigma`. Node indices are 0..n-1.
MeasurementSet read_measurements(const std::filesystem::path &path,
                                 double default_sigma = 1.0);
MeasurementSet parse_measurements(const std::string &text,
                                  double default_sigma = 1.0);
void write_measurements(const std::filesystem::path &path,
                        const MeasurementSet &meas);
std::string format_measurements(const MeasurementSet &meas);

/// `key = value` lines, '#' comments. Unknown keys are a ConfigError.
EstimationConfig parse_config(const std::string &text);
EstimationConfig read_config(const std::filesystem::path &path);

/// Writes summary.txt, history.csv and estimate.csv into `dir`.
void write_result(const std::filesystem::path &dir,
                  const EstimationResult &result);

/// One block per interval with columns interval,t,x1,...; the states at every
/// integrator node of x_j(t; tau_j, s_j, p). An interval that blows up is
/// replaced by a `# interval j blew up at t=...` comment line.
void write_trajectories(const std::filesystem::path &path, const Model &model,
                        const ShootingGrid &grid, const ExtendedParams &q);

/// 17 significant digits.
std::string format_double(double value);

} // namespace mshoot
