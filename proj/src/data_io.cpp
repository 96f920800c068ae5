#include "mshoot/data_io.hpp"

#include "mshoot/errors.hpp"
#include "mshoot/models.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

namespace mshoot {

namespace {

std::uint64_t splitmix64(std::uint64_t &x) {
  std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

} // namespace

Rng::Rng(std::uint64_t seed) {
  std::uint64_t sm = seed;
  for (auto &s : state_)
    s = splitmix64(sm);
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = 1.0 - uniform(); // (0, 1]
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

MeasurementSet generate_synthetic(const Model &model, const Vector &x0,
                                  const Vector &p_true,
                                  const std::vector<double> &times,
                                  double sigma, std::uint64_t seed,
                                  std::vector<int> obs) {
  if (times.empty())
    throw DimensionError("generate_synthetic: no sample times");
  for (std::size_t k = 1; k < times.size(); ++k)
    if (!(times[k] > times[k - 1]))
      throw DimensionError("generate_synthetic: times must increase");
  if (!(sigma >= 0.0))
    throw DimensionError("generate_synthetic: sigma must be >= 0");
  if (obs.empty())
    for (int i = 0; i < model.dim_state; ++i)
      obs.push_back(i);

  const int n = static_cast<int>(times.size());
  Matrix clean(model.dim_state, n);
  Vector x = x0;
  clean.col(0) = x;
  for (int k = 1; k < n; ++k) {
    const double dt = times[k] - times[k - 1];
    const int steps = std::max(1, static_cast<int>(std::ceil(1000.0 * dt - 1e-9)));
    x = integrate_forward(model, x, p_true, times[k - 1], times[k], steps)
            .final_state();
    clean.col(k) = x;
  }

  MeasurementSet meas;
  meas.times = times;
  meas.obs_indices = obs;
  meas.node_indices.resize(n);
  for (int k = 0; k < n; ++k)
    meas.node_indices[k] = k;
  meas.values.resize(static_cast<Eigen::Index>(obs.size()), n);
  meas.weights = Matrix::Constant(static_cast<Eigen::Index>(obs.size()), n,
                                  sigma > 0.0 ? sigma : 1.0);

  Rng rng(seed);
  for (int k = 0; k < n; ++k)
    for (std::size_t r = 0; r < obs.size(); ++r) {
      const double noise = sigma > 0.0 ? sigma * rng.normal() : 0.0;
      meas.values(static_cast<Eigen::Index>(r), k) = clean(obs[r], k) + noise;
    }
  return meas;
}

std::string format_double(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value,
                           std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

namespace {

std::string trim(const std::string &s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos)
    return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string &line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, sep))
    out.push_back(trim(cell));
  if (!line.empty() && line.back() == sep)
    out.emplace_back();
  return out;
}

bool parse_number(const std::string &text, double &out) {
  if (text.empty())
    return false;
  const char *first = text.data();
  const char *last = text.data() + text.size();
  if (*first == '+')
    ++first;
  auto res = std::from_chars(first, last, out);
  return res.ec == std::errc() && res.ptr == last && std::isfinite(out);
}

/// Component index from "x3" / "sigma3" style names, 0-based; -1 if absent.
int suffix_index(const std::string &name, const std::string &prefix) {
  if (name.rfind(prefix, 0) != 0 || name.size() == prefix.size())
    return -1;
  int k = 0;
  auto res = std::from_chars(name.data() + prefix.size(),
                             name.data() + name.size(), k);
  if (res.ec != std::errc() || res.ptr != name.data() + name.size() || k < 1)
    return -1;
  return k - 1;
}

} // namespace

MeasurementSet parse_measurements(const std::string &text,
                                  double default_sigma) {
  std::istringstream is(text);
  std::string line;
  int line_no = 0;

  std::vector<std::string> header;
  while (std::getline(is, line)) {
    ++line_no;
    if (trim(line).empty() || trim(line)[0] == '#')
      continue;
    header = split(line, ',');
    break;
  }
  if (header.empty() || header[0] != "t")
    throw ParseError(line_no, "expected header starting with 't'");

  std::vector<int> obs;              // component of each x column
  std::vector<int> value_col, sigma_col;
  for (std::size_t c = 1; c < header.size(); ++c) {
    if (int k = suffix_index(header[c], "x"); k >= 0) {
      obs.push_back(k);
      value_col.push_back(static_cast<int>(c));
    } else if (suffix_index(header[c], "sigma") < 0) {
      throw ParseError(line_no, "unknown column '" + header[c] + "'");
    }
  }
  if (obs.empty())
    throw ParseError(line_no, "no state columns in header");
  for (std::size_t r = 0; r < obs.size(); ++r) {
    int found = -1;
    for (std::size_t c = 1; c < header.size(); ++c)
      if (suffix_index(header[c], "sigma") == obs[r])
        found = static_cast<int>(c);
    sigma_col.push_back(found);
  }

  std::vector<double> times;
  std::vector<std::vector<double>> vals, sigs;
  while (std::getline(is, line)) {
    ++line_no;
    if (trim(line).empty() || trim(line)[0] == '#')
      continue;
    const auto cells = split(line, ',');
    if (cells.size() != header.size())
      throw ParseError(line_no, "expected " + std::to_string(header.size()) +
                                    " columns, got " +
                                    std::to_string(cells.size()));
    double t;
    if (!parse_number(cells[0], t))
      throw ParseError(line_no, "bad time '" + cells[0] + "'");
    if (!times.empty() && !(t > times.back()))
      throw ParseError(line_no, "times must be strictly increasing");
    std::vector<double> v(obs.size()), s(obs.size());
    for (std::size_t r = 0; r < obs.size(); ++r) {
      const std::string &cell = cells[value_col[r]];
      if (cell.empty()) {
        v[r] = std::numeric_limits<double>::quiet_NaN();
      } else if (!parse_number(cell, v[r])) {
        throw ParseError(line_no, "bad value '" + cell + "'");
      }
      s[r] = default_sigma;
      if (sigma_col[r] >= 0 && !cells[sigma_col[r]].empty()) {
        if (!parse_number(cells[sigma_col[r]], s[r]) || !(s[r] > 0.0))
          throw ParseError(line_no, "bad sigma '" + cells[sigma_col[r]] + "'");
      }
    }
    times.push_back(t);
    vals.push_back(std::move(v));
    sigs.push_back(std::move(s));
  }
  if (times.empty())
    throw ParseError(line_no, "file contains no measurements");

  MeasurementSet meas;
  meas.times = times;
  meas.obs_indices = obs;
  const auto n = static_cast<Eigen::Index>(times.size());
  meas.values.resize(static_cast<Eigen::Index>(obs.size()), n);
  meas.weights.resize(static_cast<Eigen::Index>(obs.size()), n);
  for (Eigen::Index c = 0; c < n; ++c) {
    meas.node_indices.push_back(static_cast<int>(c));
    for (std::size_t r = 0; r < obs.size(); ++r) {
      meas.values(static_cast<Eigen::Index>(r), c) = vals[c][r];
      meas.weights(static_cast<Eigen::Index>(r), c) = sigs[c][r];
    }
  }
  return meas;
}

MeasurementSet read_measurements(const std::filesystem::path &path,
                                 double default_sigma) {
  std::ifstream in(path);
  if (!in)
    throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_measurements(ss.str(), default_sigma);
}

std::string format_measurements(const MeasurementSet &meas) {
  meas.validate();
  if (meas.times.size() != meas.node_indices.size())
    throw DimensionError("measurement set has no times to write");
  std::ostringstream os;
  os << "t";
  for (int i : meas.obs_indices)
    os << ",x" << i + 1;
  for (int i : meas.obs_indices)
    os << ",sigma" << i + 1;
  os << '\n';
  for (int c = 0; c < meas.node_count(); ++c) {
    os << format_double(meas.times[c]);
    for (int r = 0; r < meas.obs_count(); ++r) {
      os << ',';
      if (meas.measured(r, c))
        os << format_double(meas.values(r, c));
    }
    for (int r = 0; r < meas.obs_count(); ++r)
      os << ',' << format_double(meas.weights(r, c));
    os << '\n';
  }
  return os.str();
}

void write_measurements(const std::filesystem::path &path,
                        const MeasurementSet &meas) {
  const std::string text = format_measurements(meas);
  std::ofstream out(path);
  if (!out)
    throw IoError("cannot write " + path.string());
  out << text;
  if (!out)
    throw IoError("write failed for " + path.string());
}

namespace {

std::vector<double> parse_list(const std::string &key, const std::string &value,
                               int line_no) {
  // "a:h:b" is an inclusive range with step h.
  if (value.find(':') != std::string::npos) {
    const auto parts = split(value, ':');
    double a, h, b;
    if (parts.size() != 3 || !parse_number(parts[0], a) ||
        !parse_number(parts[1], h) || !parse_number(parts[2], b) || !(h > 0.0) ||
        !(b >= a))
      throw ParseError(line_no, "bad range for " + key + ": '" + value + "'");
    std::vector<double> out;
    const long count = std::lround(std::floor((b - a) / h + 1e-9));
    for (long k = 0; k <= count; ++k)
      out.push_back(a + static_cast<double>(k) * h);
    return out;
  }
  std::string normalized = value;
  for (char &ch : normalized)
    if (ch == ' ' || ch == '\t')
      ch = ',';
  std::vector<double> out;
  for (const auto &cell : split(normalized, ',')) {
    if (cell.empty())
      continue;
    double x;
    if (!parse_number(cell, x))
      throw ParseError(line_no, "bad number '" + cell + "' for " + key);
    out.push_back(x);
  }
  return out;
}

Vector to_vector(const std::vector<double> &v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

double parse_scalar(const std::string &key, const std::string &value,
                    int line_no) {
  double x;
  if (!parse_number(value, x))
    throw ParseError(line_no, "bad number for " + key + ": '" + value + "'");
  return x;
}

long parse_integer(const std::string &key, const std::string &value,
                   int line_no) {
  long x = 0;
  auto res = std::from_chars(value.data(), value.data() + value.size(), x);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size())
    throw ParseError(line_no, "bad integer for " + key + ": '" + value + "'");
  return x;
}

} // namespace

EstimationConfig parse_config(const std::string &text) {
  EstimationConfig cfg;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos)
      line.erase(hash);
    if (trim(line).empty())
      continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError(line_no, "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "model") {
      cfg.model = value;
    } else if (key == "nodes") {
      cfg.nodes = parse_list(key, value, line_no);
    } else if (key == "steps_per_interval") {
      cfg.steps_per_interval = static_cast<int>(parse_integer(key, value, line_no));
    } else if (key == "p0") {
      cfg.p0 = to_vector(parse_list(key, value, line_no));
    } else if (key == "p_true") {
      cfg.p_true = to_vector(parse_list(key, value, line_no));
    } else if (key == "x0") {
      cfg.x0 = to_vector(parse_list(key, value, line_no));
    } else if (key == "sigma") {
      cfg.noise_sigma = parse_scalar(key, value, line_no);
    } else if (key == "weighting") {
      if (value == "unit")
        cfg.sigma_weighted = false;
      else if (value == "sigma")
        cfg.sigma_weighted = true;
      else
        throw ParseError(line_no, "weighting must be 'unit' or 'sigma'");
    } else if (key == "seed") {
      const long s = parse_integer(key, value, line_no);
      if (s < 0)
        throw ParseError(line_no, "seed must be non-negative");
      cfg.seed = static_cast<std::uint64_t>(s);
    } else if (key == "max_iter") {
      cfg.solver.max_iter = static_cast<int>(parse_integer(key, value, line_no));
    } else if (key == "kkt_tol") {
      cfg.solver.kkt_tol = parse_scalar(key, value, line_no);
    } else {
      throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" +
                        key + "'");
    }
  }
  make_model(cfg.model);
  return cfg;
}

EstimationConfig read_config(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in)
    throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

namespace {

void write_text(const std::filesystem::path &path, const std::string &text) {
  std::ofstream out(path);
  if (!out)
    throw IoError("cannot write " + path.string());
  out << text;
  if (!out)
    throw IoError("write failed for " + path.string());
}

} // namespace

void write_result(const std::filesystem::path &dir,
                  const EstimationResult &result) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec)
    throw IoError("cannot create " + dir.string() + ": " + ec.message());

  std::ostringstream summary;
  summary << "converged = " << (result.converged ? "true" : "false") << '\n'
          << "status = " << result.status << '\n'
          << "iterations = " << result.iterations << '\n'
          << "final_objective = " << format_double(result.final_objective)
          << '\n'
          << "final_constraint_norm = "
          << format_double(result.final_constraint_norm) << '\n'
          << "kkt_residual = " << format_double(result.kkt_residual) << '\n'
          << "ode_dims_gradient = " << result.work.gradient_dims << '\n'
          << "ode_dims_values = " << result.work.value_dims << '\n'
          << "ode_dims_curvature = " << result.work.curvature_dims << '\n';
  summary << "p_hat =";
  for (Eigen::Index k = 0; k < result.p_hat.size(); ++k)
    summary << (k ? ", " : " ") << format_double(result.p_hat[k]);
  summary << '\n';
  if (!result.message.empty())
    summary << "message = " << result.message << '\n';
  write_text(dir / "summary.txt", summary.str());

  std::ostringstream history;
  history << "iteration,phase,objective,constraint_norm,kkt_residual,penalty,"
             "alpha,merit_before,merit_after\n";
  for (const auto &h : result.history)
    history << h.iteration << ',' << (h.refinement ? "refine" : "sqp") << ','
            << format_double(h.objective) << ','
            << format_double(h.constraint_norm) << ','
            << format_double(h.kkt_residual) << ',' << format_double(h.penalty)
            << ',' << format_double(h.alpha) << ','
            << format_double(h.merit_before) << ','
            << format_double(h.merit_after) << '\n';
  write_text(dir / "history.csv", history.str());

  std::ostringstream est;
  est << "block,index,component,value\n";
  for (Eigen::Index k = 0; k < result.p_hat.size(); ++k)
    est << "p,," << k + 1 << ',' << format_double(result.p_hat[k]) << '\n';
  for (Eigen::Index j = 0; j < result.s_hat.rows(); ++j)
    for (Eigen::Index i = 0; i < result.s_hat.cols(); ++i)
      est << "s," << j << ',' << i + 1 << ','
          << format_double(result.s_hat(j, i)) << '\n';
  write_text(dir / "estimate.csv", est.str());
}

void write_trajectories(const std::filesystem::path &path, const Model &model,
                        const ShootingGrid &grid, const ExtendedParams &q) {
  std::ostringstream os;
  os << "interval,t";
  for (int i = 0; i < model.dim_state; ++i)
    os << ",x" << i + 1;
  os << '\n';
  for (int j = 0; j < grid.intervals(); ++j) {
    try {
      const ConstraintValue cv = constraint_value(j, q, model, grid);
      for (int k = 0; k <= cv.traj.step_count(); ++k) {
        os << j << ',' << format_double(cv.traj.node_time(k));
        for (int i = 0; i < model.dim_state; ++i)
          os << ',' << format_double(cv.traj.states()(k, i));
        os << '\n';
      }
    } catch (const BlowUp &e) {
      os << "# interval " << j << " blew up at t=" << format_double(e.time())
         << '\n';
    }
  }
  write_text(path, os.str());
}

} // namespace mshoot
