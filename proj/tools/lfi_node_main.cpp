#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "lfinode/commands.hpp"

namespace {

lfi::RunConfig load_config(const std::string& path) { return lfi::RunConfig::from_file(path); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lfi-node: neural-ODE system identification and small-signal stability evaluation"};
  app.require_subcommand(1);

  std::string config_path;
  bool print_config = false;

  auto* gen = app.add_subcommand("generate", "simulate the plant over the input grid and write a dataset");
  gen->add_option("--config", config_path, "JSON run config")->required();
  gen->add_flag("--print-config", print_config, "print the fully-resolved config and exit");

  std::string train_mode;
  auto* train = app.add_subcommand("train", "train a model on an existing dataset");
  train->add_option("--config", config_path, "JSON run config")->required();
  train->add_option("--mode", train_mode, "lfi | vanilla | narx (overrides config)");
  train->add_flag("--print-config", print_config, "print the fully-resolved config and exit");

  std::string eval_model;
  std::string eval_mode;
  auto* eval = app.add_subcommand("eval", "evaluate a trained model against the plant oracle");
  eval->add_option("--config", config_path, "JSON run config")->required();
  eval->add_option("--model", eval_model, "model file (default: paths + train mode)");
  eval->add_option("--mode", eval_mode, "which trained mode to evaluate");
  eval->add_flag("--print-config", print_config, "print the fully-resolved config and exit");

  std::string traj_csv;
  bool jac_filter = false;
  double jac_cutoff = 0.0;
  double neighbor_eps_min = lfi::NeighborParams{}.eps_min;
  double neighbor_r_max = lfi::NeighborParams{}.r_max;
  int neighbor_n_max = lfi::NeighborParams{}.n_max;
  auto* jac = app.add_subcommand("jacobian", "estimate the Jacobian at the settled operating point of a trajectory CSV");
  jac->add_option("trajectory", traj_csv, "trajectory CSV file")->required();
  jac->add_flag("--filter", jac_filter, "apply the zero-phase low-pass before differencing");
  jac->add_option("--cutoff", jac_cutoff, "filter cutoff in Hz (default Nyquist/50)");
  jac->add_option("--eps-min", neighbor_eps_min, "minimum deviation radius");
  jac->add_option("--r-max", neighbor_r_max, "maximum deviation radius");
  jac->add_option("--n-max", neighbor_n_max, "maximum number of samples");

  double sigma_x = 0.0;
  double jstar = -1.0;
  auto* bound = app.add_subcommand("bound", "evaluate the noise-induced Jacobian error bound");
  bound->add_option("trajectory", traj_csv, "trajectory CSV file")->required();
  bound->add_option("--sigma-x", sigma_x, "per-sample state noise magnitude")->required();
  bound->add_option("--jstar", jstar, "spectral norm of the true Jacobian (default: |J_ref|_2 proxy)");
  bound->add_flag("--filter", jac_filter, "apply the zero-phase low-pass before differencing");
  bound->add_option("--cutoff", jac_cutoff, "filter cutoff in Hz (default Nyquist/50)");

  std::string run_dir;
  auto* report = app.add_subcommand("report", "aggregate eval results into a comparison table");
  report->add_option("run_dir", run_dir, "run directory with report/eval_*.json")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed() || train->parsed() || eval->parsed()) {
      lfi::RunConfig config = load_config(config_path);
      if (train->parsed() && !train_mode.empty())
        config.train.mode = lfi::train_mode_from_string(train_mode);
      if (eval->parsed() && !eval_mode.empty())
        config.train.mode = lfi::train_mode_from_string(eval_mode);
      if (print_config) {
        config.validate();
        std::cout << config.to_json().dump(2) << "\n";
        return lfi::kExitOk;
      }
      if (gen->parsed()) return lfi::cmd_generate(config, std::cout, std::cerr);
      if (train->parsed()) return lfi::cmd_train(config, std::cout, std::cerr);
      std::optional<std::filesystem::path> model_override;
      if (!eval_model.empty()) model_override = eval_model;
      return lfi::cmd_eval(config, model_override, std::cout, std::cerr);
    }
    if (jac->parsed() || bound->parsed()) {
      lfi::JacobianCmdOptions options;
      options.filter = jac_filter;
      if (jac_cutoff > 0.0) options.cutoff_hz = jac_cutoff;
      options.neighbors.eps_min = neighbor_eps_min;
      options.neighbors.r_max = neighbor_r_max;
      options.neighbors.n_max = neighbor_n_max;
      if (jac->parsed()) return lfi::cmd_jacobian(traj_csv, options, std::cout, std::cerr);
      std::optional<double> jstar_opt;
      if (jstar >= 0.0) jstar_opt = jstar;
      return lfi::cmd_bound(traj_csv, sigma_x, jstar_opt, options, std::cout, std::cerr);
    }
    if (report->parsed()) return lfi::cmd_report(run_dir, std::cout, std::cerr);
  } catch (const lfi::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return lfi::kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return lfi::kExitIo;
  }
  return lfi::kExitConfig;
}
