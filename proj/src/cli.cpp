#include "mshoot/cli.hpp"

#include "mshoot/data_io.hpp"
#include "mshoot/errors.hpp"
#include "mshoot/estimator.hpp"
#include "mshoot/models.hpp"
#include "mshoot/sensitivity.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>

namespace mshoot {

namespace {

namespace fs = std::filesystem;

struct Flags {
  std::string config;
  std::string data;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  int runs = 10;
  int d = 0;
  int m = 0;
};

EstimationConfig load_config(const Flags &f) {
  EstimationConfig cfg = read_config(f.config);
  if (f.seed)
    cfg.seed = *f.seed;
  cfg.validate();
  return cfg;
}

/// --data if given, otherwise synthetic data from the config.
MeasurementSet load_or_simulate(const Flags &f, const EstimationConfig &cfg) {
  if (!f.data.empty())
    return read_measurements(f.data,
                             cfg.noise_sigma > 0.0 ? cfg.noise_sigma : 1.0);
  if (cfg.x0.size() == 0 || cfg.p_true.size() == 0)
    throw ConfigError("no --data given and config lacks x0/p_true");
  return generate_synthetic(make_model(cfg.model), cfg.x0, cfg.p_true,
                            cfg.nodes, cfg.noise_sigma, cfg.seed);
}

std::string join(const Vector &v) {
  std::string s;
  for (Eigen::Index k = 0; k < v.size(); ++k)
    s += (k ? ", " : "") + format_double(v[k]);
  return s;
}

int cmd_simulate(const Flags &f, std::ostream &out) {
  const EstimationConfig cfg = load_config(f);
  if (cfg.x0.size() == 0 || cfg.p_true.size() == 0)
    throw ConfigError("simulate needs x0 and p_true in the config");
  const MeasurementSet meas =
      generate_synthetic(make_model(cfg.model), cfg.x0, cfg.p_true, cfg.nodes,
                         cfg.noise_sigma, cfg.seed);
  fs::path path = f.data;
  if (path.empty()) {
    fs::create_directories(f.out);
    path = fs::path(f.out) / "data.csv";
  }
  write_measurements(path, meas);
  out << "wrote " << meas.node_count() << " measurements to " << path.string()
      << '\n';
  return 0;
}

int cmd_estimate(const Flags &f, std::ostream &out) {
  const EstimationConfig cfg = load_config(f);
  const MeasurementSet meas = load_or_simulate(f, cfg);
  const Model model = make_model(cfg.model);
  const ShootingGrid grid = cfg.grid();

  const ExtendedParams q0 = initialize_q(attach_to_grid(meas, grid), grid,
                                         model.dim_state, cfg.p0);
  const EstimationResult result = estimate(cfg, meas);

  const fs::path dir(f.out);
  write_result(dir, result);
  write_trajectories(dir / "trajectories_initial.csv", model, grid, q0);
  write_trajectories(dir / "trajectories_final.csv", model, grid,
                     ExtendedParams(result.s_hat, result.p_hat));

  out << "converged = " << (result.converged ? "true" : "false") << '\n'
      << "status = " << result.status << '\n'
      << "iterations = " << result.iterations << '\n'
      << "kkt_residual = " << format_double(result.kkt_residual) << '\n'
      << "p_hat = " << join(result.p_hat) << '\n';
  return result.converged ? 0 : 1;
}

int cmd_gradcheck(const Flags &f, std::ostream &out) {
  const EstimationConfig cfg = load_config(f);
  const MeasurementSet meas = load_or_simulate(f, cfg);
  const GradCheckReport report = gradcheck(cfg, meas);
  out << "points = " << report.points << '\n'
      << "interval,fd_s_j,fd_s_j1,fd_p,fd_off_support,sens_s_j,sens_s_j1,"
         "sens_p\n";
  for (const auto &r : report.intervals)
    out << r.interval << ',' << format_double(r.fd_s_j) << ','
        << format_double(r.fd_s_j1) << ',' << format_double(r.fd_p) << ','
        << format_double(r.fd_off_support) << ',' << format_double(r.sens_s_j)
        << ',' << format_double(r.sens_s_j1) << ','
        << format_double(r.sens_p) << '\n';
  out << "max_rel_error_fd = " << format_double(report.max_fd_error) << '\n'
      << "max_rel_error_sens = " << format_double(report.max_sens_error)
      << '\n';
  return 0;
}

int cmd_study(const Flags &f, std::ostream &out) {
  const EstimationConfig cfg = load_config(f);
  const StudyResult study = replicate_study(cfg, f.runs);
  out << "runs = " << f.runs << '\n'
      << "converged = " << study.converged_runs << '\n'
      << "excluded = " << study.excluded_runs << '\n'
      << "parameter,mean,std\n";
  for (Eigen::Index k = 0; k < study.means.size(); ++k)
    out << 'p' << k + 1 << ',' << format_double(study.means[k]) << ','
        << format_double(study.stds[k]) << '\n';
  if (f.out != ".") {
    fs::create_directories(f.out);
    std::ofstream csv(fs::path(f.out) / "study.csv");
    csv << "run,seed,converged,iterations";
    for (Eigen::Index k = 0; k < study.means.size(); ++k)
      csv << ",p" << k + 1;
    csv << '\n';
    for (std::size_t r = 0; r < study.runs.size(); ++r) {
      const auto &run = study.runs[r];
      csv << r << ',' << cfg.seed + r << ','
          << (run.converged ? "true" : "false") << ',' << run.iterations;
      for (Eigen::Index k = 0; k < run.p_hat.size(); ++k)
        csv << ',' << format_double(run.p_hat[k]);
      csv << '\n';
    }
  }
  return 0;
}

int cmd_single_shoot(const Flags &f, std::ostream &out) {
  const EstimationConfig cfg = load_config(f);
  const SingleShootReport r = single_shooting_demo(cfg);
  if (r.blowup_time)
    out << "blowup_time = " << format_double(*r.blowup_time) << '\n';
  else
    out << "blowup_time = none\nfinal_state = " << join(r.final_state) << '\n';
  return 0;
}

int cmd_cost(const Flags &f, std::ostream &out) {
  int d = f.d, m = f.m;
  if (!f.config.empty()) {
    const Model model = make_model(load_config(f).model);
    if (d == 0)
      d = model.dim_state;
    if (m == 0)
      m = model.dim_params;
  }
  const CostReport c = cost_report(d, m);
  out << "d = " << d << "\nm = " << m
      << "\nadjoint = " << c.ode_dimensions_adjoint
      << "\nforward_sensitivity = " << c.ode_dimensions_forward_sens << '\n';
  return 0;
}

} // namespace

int dispatch(int argc, const char *const *argv, std::ostream &out,
             std::ostream &err) {
  CLI::App app{"Multiple-shooting parameter estimation with adjoint "
               "constraint gradients",
               "mshoot"};
  app.require_subcommand(1);
  Flags f;

  auto add_config = [&](CLI::App *sub, bool required) {
    auto *opt = sub->add_option("--config", f.config, "config file")
                    ->check(CLI::ExistingFile);
    if (required)
      opt->required();
  };
  auto add_seed = [&](CLI::App *sub) {
    sub->add_option_function<std::uint64_t>(
        "--seed", [&](const std::uint64_t &s) { f.seed = s; },
        "override the config seed");
  };

  auto *simulate = app.add_subcommand("simulate", "write a synthetic dataset");
  add_config(simulate, true);
  add_seed(simulate);
  simulate->add_option("--data", f.data, "output CSV path");
  simulate->add_option("--out", f.out, "output directory (data.csv)");

  auto *est = app.add_subcommand("estimate", "run one estimation");
  add_config(est, true);
  add_seed(est);
  est->add_option("--data", f.data, "measurement CSV")->check(CLI::ExistingFile);
  est->add_option("--out", f.out, "output directory");

  auto *grad = app.add_subcommand("gradcheck", "compare gradient oracles");
  add_config(grad, true);
  add_seed(grad);
  grad->add_option("--data", f.data, "measurement CSV")->check(CLI::ExistingFile);

  auto *study = app.add_subcommand("study", "repeat estimation over seeds");
  add_config(study, true);
  add_seed(study);
  study->add_option("--runs", f.runs, "number of runs")
      ->check(CLI::Range(2, 100000));
  study->add_option("--out", f.out, "directory for study.csv");

  auto *single = app.add_subcommand("single-shoot", "full-horizon integration");
  add_config(single, true);
  add_seed(single);

  auto *cost = app.add_subcommand("cost", "ODE dimensions per interval");
  add_config(cost, false);
  cost->add_option("--d", f.d, "state dimension")->check(CLI::PositiveNumber);
  cost->add_option("--m", f.m, "parameter count")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp &) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError &e) {
    err << "error: usage: " << e.what() << '\n';
    return 2;
  }

  try {
    if (simulate->parsed())
      return cmd_simulate(f, out);
    if (est->parsed())
      return cmd_estimate(f, out);
    if (grad->parsed())
      return cmd_gradcheck(f, out);
    if (study->parsed())
      return cmd_study(f, out);
    if (single->parsed())
      return cmd_single_shoot(f, out);
    if (cost->parsed()) {
      if (f.config.empty() && (f.d == 0 || f.m == 0)) {
        err << "error: usage: cost needs --d and --m or --config\n";
        return 2;
      }
      return cmd_cost(f, out);
    }
  } catch (const Error &e) {
    err << "error: " << e.kind() << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception &e) {
    err << "error: Runtime: " << e.what() << '\n';
    return 1;
  }
  err << "error: usage: no command\n";
  return 2;
}

} // namespace mshoot
