#include "lfinode/commands.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include "lfinode/json_io.hpp"
#include "lfinode/stability.hpp"

namespace lfi {

namespace {

void write_json_file(const nlohmann::json& j, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot open for writing: " + file.string());
  out << j.dump(2) << "\n";
  if (!out) throw std::runtime_error("failed writing: " + file.string());
}

std::string fmt6(double v) {
  std::ostringstream ss;
  ss << std::setprecision(6) << v;
  return ss.str();
}

/// Normalized per-entry RMSE between two state series over their common rows.
double normalized_rmse(const Matrix& a, const Matrix& b, const NormStats& norm) {
  const auto rows = std::min(a.rows(), b.rows());
  if (rows == 0) return std::numeric_limits<double>::quiet_NaN();
  const auto an = (a.topRows(rows).rowwise() - norm.state_mean.transpose()).array().rowwise() /
                  norm.state_std.transpose().array();
  const auto bn = (b.topRows(rows).rowwise() - norm.state_mean.transpose()).array().rowwise() /
                  norm.state_std.transpose().array();
  return std::sqrt((an - bn).square().sum() / static_cast<double>(rows * a.cols()));
}

/// Fixed point of the discrete map and its continuous-equivalent eigenvalues.
struct NarxLinearization {
  bool found = false;
  Vector x_ss;
  ComplexList eigs_continuous;
};

NarxLinearization narx_linearize(const NarxModel& model, const Vector& u, const Vector& x_guess) {
  const auto& norm = model.params.norm;
  const Vector u_n = (u - norm.input_mean).cwiseQuotient(norm.input_std);
  Vector x_n = (x_guess - norm.state_mean).cwiseQuotient(norm.state_std);
  const int dx = model.params.state_dim();

  NarxLinearization lin;
  for (int step = 0; step < 50; ++step) {
    const Vector g = mlp_forward(model.params, x_n, u_n) - x_n;
    if (!all_finite(g)) return lin;
    if (g.norm() <= 1e-10) {
      lin.found = true;
      break;
    }
    const Matrix j = mlp_state_jacobian(model.params, x_n, u_n) - Matrix::Identity(dx, dx);
    Eigen::FullPivLU<Matrix> lu(j);
    if (!lu.isInvertible()) return lin;
    x_n -= lu.solve(g);
    if (!all_finite(x_n) || x_n.norm() > 1e6) return lin;
  }
  if (!lin.found) return lin;

  lin.x_ss = norm.state_mean + x_n.cwiseProduct(norm.state_std);
  const Matrix j_d = mlp_state_jacobian(model.params, x_n, u_n);
  for (const auto& mu : eigvals(j_d))
    lin.eigs_continuous.push_back(std::log(mu) / model.dt);
  return lin;
}

}  // namespace

int cmd_generate(const RunConfig& config, std::ostream& out, std::ostream& err) {
  try {
    config.validate();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  const PlantModel plant = config.build_plant();
  const auto grid = config.build_grid(plant);
  Dataset ds = generate_dataset(plant, grid, config.generation);

  int truncated = 0;
  for (const auto& traj : ds.trajectories)
    if (traj.meta.count("truncated")) ++truncated;

  try {
    write_dataset(ds, config.resolved_dataset_dir());
  } catch (const std::exception& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitIo;
  }

  out << "wrote " << ds.trajectories.size() << " trajectories to "
      << config.resolved_dataset_dir().string() << "\n";
  if (truncated > 0) out << truncated << " trajectories truncated by integration failure\n";
  return kExitOk;
}

int cmd_train(const RunConfig& config, std::ostream& out, std::ostream& err) {
  try {
    config.validate();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  Dataset raw;
  try {
    raw = read_dataset(config.resolved_dataset_dir());
  } catch (const std::exception& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitIo;
  }

  const NormStats stats = fit_normalization(raw);
  const Dataset ds = apply_normalization(raw, stats, NormDirection::Forward);

  const TrainMode mode = config.train.mode;
  nlohmann::json echo = config.to_json();
  echo["mode"] = to_string(mode);

  try {
    ModelFile model_file;
    TrainLog log;
    if (mode == TrainMode::Narx) {
      NarxTrainResult res = train_narx(ds, config.train);
      model_file.kind = ModelFile::Kind::Narx;
      model_file.narx_dt = res.model.dt;
      model_file.params = res.model.params;
      log = std::move(res.log);
    } else {
      TrainConfig tc = config.train;
      if (mode == TrainMode::Vanilla) tc.lambda2 = 0.0;
      TrainResult res = train(ds, tc);
      model_file.kind = ModelFile::Kind::Node;
      model_file.params = res.model;
      log = std::move(res.log);
      echo["latent_features"] = res.latent.features.size();
      if (mode == TrainMode::Vanilla) echo["lambda2"] = 0.0;
    }
    model_file.train_config_echo = echo;

    std::filesystem::create_directories(config.resolved_model_file(mode).parent_path());
    save_model(model_file, config.resolved_model_file(mode));
    write_train_log(log, config.resolved_log_file(mode));

    for (const auto& w : log.warnings) err << "warning: " << w << "\n";
    if (log.skipped_windows > 0)
      err << "warning: " << log.skipped_windows << " non-finite rollout windows skipped\n";
    const auto& last = log.records.back();
    out << "mode " << to_string(mode) << ": " << log.records.size() << " iterations, final L_data "
        << fmt6(last.l_data) << ", L_jac " << fmt6(last.l_jac) << ", L_total "
        << fmt6(last.l_total) << "\n";
    out << "model written to " << config.resolved_model_file(mode).string() << "\n";
    return kExitOk;
  } catch (const NonConvergenceError& e) {
    err << "training failed: " << e.what() << "\n";
    return kExitTraining;
  } catch (const std::ios_base::failure& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::runtime_error& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitIo;
  }
}

int cmd_eval(const RunConfig& config, const std::optional<std::filesystem::path>& model_override,
             std::ostream& out, std::ostream& err) {
  try {
    config.validate();
    if (config.eval_inputs.empty())
      throw ConfigError("eval.inputs", "need at least one test input");
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  const std::filesystem::path model_path =
      model_override ? *model_override : config.resolved_model_file(config.train.mode);
  ModelFile model;
  try {
    model = load_model(model_path);
  } catch (const std::exception& e) {
    err << "i/o error: cannot load model " << model_path.string() << ": " << e.what() << "\n";
    return kExitIo;
  }

  const PlantModel plant = config.build_plant();
  const Vector x0 = config.initial_state(plant);
  const double dt = config.generation.dt * config.generation.downsample_factor;
  const double duration =
      config.eval_duration > 0.0 ? config.eval_duration : config.generation.duration;
  const std::string mode = model.train_config_echo.contains("mode")
                               ? model.train_config_echo.at("mode").get<std::string>()
                               : (model.kind == ModelFile::Kind::Narx ? "narx" : "node");

  const auto report_dir = config.resolved_report_dir();
  try {
    std::filesystem::create_directories(report_dir);
  } catch (const std::exception& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitIo;
  }

  nlohmann::json report;
  report["mode"] = mode;
  report["model_file"] = model_path.string();
  report["config"] = config.to_json();
  nlohmann::json entries = nlohmann::json::array();

  double rmse_sum = 0.0;
  int rmse_count = 0;
  double mae_sum = 0.0;
  int mae_count = 0;

  for (std::size_t i = 0; i < config.eval_inputs.size(); ++i) {
    const Vector& u_test = config.eval_inputs[i];
    nlohmann::json entry;
    entry["u"] = vector_to_json(u_test);

    const Trajectory truth =
        simulate(plant, x0, PiecewiseConstantInput::constant(u_test), dt, duration,
                 config.generation.integrator);
    Trajectory pred;
    if (model.kind == ModelFile::Kind::Narx) {
      const NarxModel narx{model.params, model.narx_dt};
      pred = predict(narx, x0, PiecewiseConstantInput::constant(u_test), dt, duration);
    } else {
      pred = predict(model.params, x0, PiecewiseConstantInput::constant(u_test), dt, duration,
                     config.generation.integrator);
    }

    const std::string truth_name = "truth_" + std::to_string(i) + ".csv";
    const std::string pred_name = "pred_" + mode + "_" + std::to_string(i) + ".csv";
    try {
      write_trajectory_csv(truth, report_dir / truth_name);
      write_trajectory_csv(pred, report_dir / pred_name);
    } catch (const std::exception& e) {
      err << "i/o error: " << e.what() << "\n";
      return kExitIo;
    }
    entry["truth_csv"] = truth_name;
    entry["pred_csv"] = pred_name;
    entry["truth_truncated"] = truth.meta.count("truncated") > 0;
    entry["pred_truncated"] = pred.meta.count("truncated") > 0;

    const double rmse = normalized_rmse(pred.states, truth.states, model.params.norm);
    entry["rmse_normalized"] = rmse;
    if (std::isfinite(rmse)) {
      rmse_sum += rmse;
      ++rmse_count;
    }

    // Reference small-signal picture from the analytic plant.
    const auto plant_eq = plant.find_equilibrium(u_test, x0);
    std::optional<EigenReport> analytic;
    if (plant_eq) {
      analytic = make_eigen_report(plant.state_jacobian(*plant_eq, u_test),
                                   EigenSource::AnalyticPlant, config.eval_margin);
      entry["analytic"] = eigen_report_to_json(*analytic);
      entry["analytic"]["x_ss"] = vector_to_json(*plant_eq);
    } else {
      entry["analytic"] = "no_equilibrium";
    }

    // Learned-model picture.
    const Vector guess = plant_eq ? *plant_eq : x0;
    std::optional<EigenReport> learned;
    if (model.kind == ModelFile::Kind::Narx) {
      const NarxModel narx{model.params, model.narx_dt};
      const auto lin = narx_linearize(narx, u_test, guess);
      if (lin.found) {
        EigenReport rep;
        rep.eigenvalues = lin.eigs_continuous;
        rep.max_real = -std::numeric_limits<double>::infinity();
        for (const auto& e : rep.eigenvalues) rep.max_real = std::max(rep.max_real, e.real());
        rep.verdict = classify(rep.eigenvalues, config.eval_margin);
        rep.source = EigenSource::ModelJnn;
        learned = rep;
        entry["model"] = eigen_report_to_json(rep);
        entry["model"]["x_ss"] = vector_to_json(lin.x_ss);
      } else {
        entry["model"] = "no_equilibrium";
      }
    } else {
      const auto lin = model_linearize(model.params, u_test, guess);
      if (lin.found) {
        EigenReport rep = make_eigen_report(lin.j_physical, EigenSource::ModelJnn, config.eval_margin);
        learned = rep;
        entry["model"] = eigen_report_to_json(rep);
        entry["model"]["x_ss"] = vector_to_json(lin.x_ss);
      } else {
        entry["model"] = "no_equilibrium";
      }
    }

    if (analytic && learned) {
      const EigError ee = eig_error(learned->eigenvalues, analytic->eigenvalues);
      entry["eig_error"] = eig_error_to_json(ee);
      mae_sum += ee.mae;
      ++mae_count;
    } else {
      entry["eig_error"] = nullptr;
    }
    entries.push_back(std::move(entry));
  }

  report["inputs"] = std::move(entries);
  report["summary"]["mean_rmse_normalized"] =
      rmse_count > 0 ? nlohmann::json(rmse_sum / rmse_count) : nlohmann::json();
  report["summary"]["mean_eig_mae"] =
      mae_count > 0 ? nlohmann::json(mae_sum / mae_count) : nlohmann::json();

  const auto report_file = report_dir / ("eval_" + mode + ".json");
  try {
    write_json_file(report, report_file);
  } catch (const std::exception& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitIo;
  }

  out << "evaluated " << config.eval_inputs.size() << " inputs; report " << report_file.string()
      << "\n";
  if (rmse_count > 0) out << "mean normalized RMSE " << fmt6(rmse_sum / rmse_count) << "\n";
  if (mae_count > 0) out << "mean eigenvalue MAE " << fmt6(mae_sum / mae_count) << " 1/s\n";
  return kExitOk;
}

namespace {

struct JacobianRun {
  Trajectory traj;
  EquilibriumEstimate eq;
  JacobianEstimate est;
};

JacobianRun run_jacobian_pipeline(const std::filesystem::path& csv, const JacobianCmdOptions& options) {
  JacobianRun run;
  run.traj = read_trajectory_csv(csv);
  if (options.filter) {
    const double cutoff = options.cutoff_hz ? *options.cutoff_hz : 0.5 / run.traj.dt / 50.0;
    run.traj = zero_phase_lowpass(run.traj, cutoff);
  }
  const int window = std::max(2, run.traj.n_samples() / options.eq_window_divisor);
  run.eq = detect_equilibrium(run.traj, window);
  const auto idx = select_neighbors(run.traj, run.eq, options.neighbors);
  run.est = estimate_jacobian(run.traj, run.eq, idx);
  return run;
}

}  // namespace

int cmd_jacobian(const std::filesystem::path& trajectory_csv, const JacobianCmdOptions& options,
                 std::ostream& out, std::ostream& err) {
  try {
    const JacobianRun run = run_jacobian_pipeline(trajectory_csv, options);
    nlohmann::json j = jacobian_estimate_to_json(run.est);
    j["x_ss"] = vector_to_json(run.eq.x_ss);
    j["eq_residual"] = run.eq.residual;
    j["eq_window"] = {run.eq.window_begin, run.eq.window_end};
    out << j.dump(2) << "\n";
    return kExitOk;
  } catch (const InsufficientSamplesError& e) {
    err << "estimation failed: " << e.what() << "\n";
    return kExitEstimation;
  } catch (const RankDeficientError& e) {
    err << "estimation failed: " << e.what() << "\n";
    return kExitEstimation;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::runtime_error& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitIo;
  }
}

int cmd_bound(const std::filesystem::path& trajectory_csv, double sigma_x,
              std::optional<double> jstar_norm, const JacobianCmdOptions& options,
              std::ostream& out, std::ostream& err) {
  if (sigma_x < 0.0) {
    err << "config error: sigma_x must be >= 0\n";
    return kExitConfig;
  }
  try {
    const JacobianRun run = run_jacobian_pipeline(trajectory_csv, options);
    const double sigma_xdot = derivative_noise_level(sigma_x, run.traj.dt);
    const double jstar = jstar_norm ? *jstar_norm
                                    : run.est.j_ref.jacobiSvd().singularValues()(0);
    const NoiseBound nb = error_bound(run.est, sigma_x, sigma_xdot, jstar);
    nlohmann::json j = noise_bound_to_json(nb);
    j["jstar_source"] = jstar_norm ? "user" : "proxy_jref_spectral_norm";
    j["cond"] = run.est.cond;
    j["delta_x_norm"] = run.est.delta_x_norm;
    j["n_samples"] = run.est.n_samples;
    j["dt"] = run.traj.dt;
    out << j.dump(2) << "\n";
    return kExitOk;
  } catch (const InsufficientSamplesError& e) {
    err << "estimation failed: " << e.what() << "\n";
    return kExitEstimation;
  } catch (const RankDeficientError& e) {
    err << "estimation failed: " << e.what() << "\n";
    return kExitEstimation;
  } catch (const UnboundedError& e) {
    err << "estimation failed: " << e.what() << "\n";
    return kExitEstimation;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::runtime_error& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitIo;
  }
}

int cmd_report(const std::filesystem::path& run_dir, std::ostream& out, std::ostream& err) {
  const auto report_dir = run_dir / "report";
  struct Row {
    std::string mode;
    double rmse = std::numeric_limits<double>::quiet_NaN();
    double eig_mae = std::numeric_limits<double>::quiet_NaN();
    double final_loss = std::numeric_limits<double>::quiet_NaN();
    double wall_ms = std::numeric_limits<double>::quiet_NaN();
  };
  std::vector<Row> rows;

  for (const std::string mode : {"lfi", "vanilla", "narx"}) {
    const auto eval_file = report_dir / ("eval_" + mode + ".json");
    if (!std::filesystem::exists(eval_file)) continue;
    Row row;
    row.mode = mode;
    try {
      std::ifstream in(eval_file);
      nlohmann::json j;
      in >> j;
      if (j.contains("summary")) {
        const auto& s = j.at("summary");
        if (s.contains("mean_rmse_normalized") && s.at("mean_rmse_normalized").is_number())
          row.rmse = s.at("mean_rmse_normalized").get<double>();
        if (s.contains("mean_eig_mae") && s.at("mean_eig_mae").is_number())
          row.eig_mae = s.at("mean_eig_mae").get<double>();
      }
    } catch (const std::exception& e) {
      err << "warning: cannot parse " << eval_file.string() << ": " << e.what() << "\n";
    }
    const auto log_file = run_dir / ("train_log_" + mode + ".csv");
    if (std::filesystem::exists(log_file)) {
      std::ifstream in(log_file);
      std::string line, last;
      std::getline(in, line);  // header
      while (std::getline(in, line))
        if (!line.empty()) last = line;
      if (!last.empty()) {
        std::stringstream ss(last);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() >= 6) {
          row.final_loss = std::stod(cells[3]);
          row.wall_ms = std::stod(cells[5]);
        }
      }
    }
    rows.push_back(std::move(row));
  }

  if (rows.empty()) {
    err << "config error: no eval results found under " << report_dir.string() << "\n";
    return kExitConfig;
  }

  nlohmann::json jrows = nlohmann::json::array();
  std::ostringstream csv;
  csv << "mode,trajectory_rmse,eigenvalue_mae,final_train_loss,wall_ms\n";
  for (const auto& r : rows) {
    csv << r.mode << ',' << format_double(r.rmse) << ',' << format_double(r.eig_mae) << ','
        << format_double(r.final_loss) << ',' << format_double(r.wall_ms) << '\n';
    jrows.push_back(nlohmann::json{{"mode", r.mode},
                                   {"trajectory_rmse", r.rmse},
                                   {"eigenvalue_mae", r.eig_mae},
                                   {"final_train_loss", r.final_loss},
                                   {"wall_ms", r.wall_ms}});
  }

  try {
    std::ofstream csv_out(report_dir / "comparison.csv");
    if (!csv_out) throw std::runtime_error("cannot write comparison.csv");
    csv_out << csv.str();
    write_json_file(nlohmann::json{{"rows", jrows}}, report_dir / "comparison.json");
  } catch (const std::exception& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitIo;
  }

  out << csv.str();
  return kExitOk;
}

}  // namespace lfi
