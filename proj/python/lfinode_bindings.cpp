#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "lfinode/commands.hpp"
#include "lfinode/config.hpp"
#include "lfinode/jacest.hpp"
#include "lfinode/json_io.hpp"
#include "lfinode/plants.hpp"
#include "lfinode/signals.hpp"
#include "lfinode/stability.hpp"
#include "lfinode/training.hpp"

namespace py = pybind11;
using namespace lfi;

namespace {

ModelFile make_model_file(const MlpParams& params, const std::string& kind, double narx_dt,
                          const std::string& echo_json) {
  ModelFile m;
  m.kind = kind == "narx" ? ModelFile::Kind::Narx : ModelFile::Kind::Node;
  m.params = params;
  m.narx_dt = narx_dt;
  m.train_config_echo = echo_json.empty() ? nlohmann::json::object()
                                          : nlohmann::json::parse(echo_json);
  return m;
}

}  // namespace

PYBIND11_MODULE(_lfinode, m) {
  m.doc() = "Neural-ODE system identification with Jacobian-informed training "
            "and small-signal stability evaluation";

  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<InsufficientSamplesError>(m, "InsufficientSamplesError", PyExc_RuntimeError);
  py::register_exception<RankDeficientError>(m, "RankDeficientError", PyExc_RuntimeError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<DtMismatchError>(m, "DtMismatchError", PyExc_ValueError);
  py::register_exception<NonConvergenceError>(m, "NonConvergenceError", PyExc_RuntimeError);

  // --- plants ---------------------------------------------------------------
  py::class_<GfmDroopParams>(m, "GfmDroopParams")
      .def(py::init<>())
      .def_readwrite("E", &GfmDroopParams::E)
      .def_readwrite("X", &GfmDroopParams::X)
      .def_readwrite("m", &GfmDroopParams::m)
      .def_readwrite("T", &GfmDroopParams::T)
      .def_readwrite("omega_set", &GfmDroopParams::omega_set)
      .def_readwrite("P_ref", &GfmDroopParams::P_ref);

  py::class_<PlantModel>(m, "PlantModel")
      .def_static("linear", &PlantModel::linear, py::arg("A"), py::arg("B"))
      .def_static("van_der_pol", &PlantModel::van_der_pol, py::arg("mu") = 1.0)
      .def_static("gfm_droop", &PlantModel::gfm_droop, py::arg("params") = GfmDroopParams{})
      .def_property_readonly("state_dim", &PlantModel::state_dim)
      .def_property_readonly("input_dim", &PlantModel::input_dim)
      .def("derivative", &PlantModel::derivative, py::arg("x"), py::arg("u"))
      .def("state_jacobian", &PlantModel::state_jacobian, py::arg("x"), py::arg("u"))
      .def("input_jacobian", &PlantModel::input_jacobian, py::arg("x"), py::arg("u"))
      .def("find_equilibrium", &PlantModel::find_equilibrium, py::arg("u"), py::arg("x_guess"));

  // --- trajectories and the data pipeline -----------------------------------
  py::class_<Trajectory>(m, "Trajectory")
      .def(py::init<>())
      .def_readwrite("dt", &Trajectory::dt)
      .def_readwrite("t0", &Trajectory::t0)
      .def_readwrite("states", &Trajectory::states)
      .def_readwrite("inputs", &Trajectory::inputs)
      .def_readwrite("meta", &Trajectory::meta)
      .def_property_readonly("n_samples", &Trajectory::n_samples);

  py::class_<NormStats>(m, "NormStats")
      .def(py::init<>())
      .def_readwrite("state_mean", &NormStats::state_mean)
      .def_readwrite("state_std", &NormStats::state_std)
      .def_readwrite("input_mean", &NormStats::input_mean)
      .def_readwrite("input_std", &NormStats::input_std);

  py::class_<Dataset>(m, "Dataset")
      .def(py::init<>())
      .def_readwrite("trajectories", &Dataset::trajectories)
      .def_readwrite("norm", &Dataset::norm)
      .def_readwrite("manifest", &Dataset::manifest);

  py::class_<PiecewiseConstantInput>(m, "PiecewiseConstantInput")
      .def(py::init<>())
      .def_static("constant", &PiecewiseConstantInput::constant, py::arg("u"))
      .def_readwrite("times", &PiecewiseConstantInput::times)
      .def_readwrite("values", &PiecewiseConstantInput::values)
      .def("at", &PiecewiseConstantInput::at, py::arg("t"));

  py::class_<IntegratorConfig>(m, "IntegratorConfig")
      .def(py::init<>())
      .def_readwrite("rtol", &IntegratorConfig::rtol)
      .def_readwrite("atol", &IntegratorConfig::atol)
      .def_readwrite("max_steps", &IntegratorConfig::max_steps);

  m.def("simulate", &simulate, py::arg("plant"), py::arg("x0"), py::arg("input"), py::arg("dt"),
        py::arg("duration"), py::arg("config") = IntegratorConfig{});
  m.def("add_noise", &add_noise, py::arg("trajectory"), py::arg("sigma_x"), py::arg("seed"));
  m.def("zero_phase_lowpass", &zero_phase_lowpass, py::arg("trajectory"), py::arg("cutoff_hz"));
  m.def(
      "finite_diff",
      [](const Trajectory& t, const std::string& scheme) {
        return finite_diff(t, scheme == "forward" ? DiffScheme::Forward : DiffScheme::Central);
      },
      py::arg("trajectory"), py::arg("scheme") = "central");
  m.def("downsample", &downsample, py::arg("trajectory"), py::arg("factor"));
  m.def("fit_normalization", &fit_normalization, py::arg("dataset"));
  m.def(
      "normalize",
      [](const Dataset& ds, const NormStats& stats) {
        return apply_normalization(ds, stats, NormDirection::Forward);
      },
      py::arg("dataset"), py::arg("stats"));
  m.def(
      "denormalize",
      [](const Dataset& ds, const NormStats& stats) {
        return apply_normalization(ds, stats, NormDirection::Inverse);
      },
      py::arg("dataset"), py::arg("stats"));

  py::class_<GridPoint>(m, "GridPoint")
      .def(py::init([](Vector u, Vector x0) {
             return GridPoint{std::move(u), std::move(x0)};
           }),
           py::arg("u"), py::arg("x0"))
      .def_readwrite("u", &GridPoint::u)
      .def_readwrite("x0", &GridPoint::x0);

  py::class_<GenerationConfig>(m, "GenerationConfig")
      .def(py::init<>())
      .def_readwrite("dt", &GenerationConfig::dt)
      .def_readwrite("duration", &GenerationConfig::duration)
      .def_readwrite("sigma_x", &GenerationConfig::sigma_x)
      .def_readwrite("cutoff_hz", &GenerationConfig::cutoff_hz)
      .def_readwrite("downsample_factor", &GenerationConfig::downsample_factor)
      .def_readwrite("seed", &GenerationConfig::seed);

  m.def("generate_dataset", &generate_dataset, py::arg("plant"), py::arg("grid"),
        py::arg("config"));
  m.def("write_dataset", &write_dataset, py::arg("dataset"), py::arg("dir"));
  m.def("read_dataset", &read_dataset, py::arg("dir"));
  m.def("write_trajectory_csv", &write_trajectory_csv, py::arg("trajectory"), py::arg("file"));
  m.def("read_trajectory_csv", &read_trajectory_csv, py::arg("file"));

  // --- jacobian estimation ---------------------------------------------------
  py::class_<EquilibriumEstimate>(m, "EquilibriumEstimate")
      .def_readonly("x_ss", &EquilibriumEstimate::x_ss)
      .def_readonly("window_begin", &EquilibriumEstimate::window_begin)
      .def_readonly("window_end", &EquilibriumEstimate::window_end)
      .def_readonly("residual", &EquilibriumEstimate::residual);

  py::class_<NeighborParams>(m, "NeighborParams")
      .def(py::init<>())
      .def_readwrite("eps_min", &NeighborParams::eps_min)
      .def_readwrite("r_max", &NeighborParams::r_max)
      .def_readwrite("n_max", &NeighborParams::n_max);

  py::class_<JacobianEstimate>(m, "JacobianEstimate")
      .def_readonly("j_ref", &JacobianEstimate::j_ref)
      .def_readonly("n_samples", &JacobianEstimate::n_samples)
      .def_readonly("cond", &JacobianEstimate::cond)
      .def_readonly("delta_x_norm", &JacobianEstimate::delta_x_norm)
      .def_readonly("lsq_residual", &JacobianEstimate::lsq_residual);

  py::class_<NoiseBound>(m, "NoiseBound")
      .def_readonly("sigma_x", &NoiseBound::sigma_x)
      .def_readonly("sigma_xdot", &NoiseBound::sigma_xdot)
      .def_readonly("jstar_norm", &NoiseBound::jstar_norm)
      .def_readonly("bound", &NoiseBound::bound);

  m.def(
      "detect_equilibrium",
      [](const Trajectory& t, int window_len) { return detect_equilibrium(t, window_len); },
      py::arg("trajectory"), py::arg("window_len"));
  m.def("select_neighbors", &select_neighbors, py::arg("trajectory"), py::arg("equilibrium"),
        py::arg("params") = NeighborParams{});
  m.def("pseudo_inverse", &pseudo_inverse, py::arg("matrix"), py::arg("rel_tol") = 1e-10);
  m.def(
      "estimate_jacobian",
      [](const Trajectory& t, const EquilibriumEstimate& eq, const std::vector<int>& idx,
         std::optional<Matrix> derivatives) {
        return estimate_jacobian(t, eq, idx, derivatives ? &*derivatives : nullptr);
      },
      py::arg("trajectory"), py::arg("equilibrium"), py::arg("indices"),
      py::arg("derivatives") = std::nullopt);
  m.def("error_bound", &error_bound, py::arg("estimate"), py::arg("sigma_x"),
        py::arg("sigma_xdot"), py::arg("jstar_norm"));
  m.def("derivative_noise_level", &derivative_noise_level, py::arg("sigma_x"), py::arg("dt"));

  // --- neural field -----------------------------------------------------------
  py::class_<MlpParams>(m, "MlpParams")
      .def_readwrite("layer_dims", &MlpParams::layer_dims)
      .def_readwrite("weights", &MlpParams::weights)
      .def_readwrite("biases", &MlpParams::biases)
      .def_readwrite("norm", &MlpParams::norm)
      .def_property_readonly("state_dim", &MlpParams::state_dim);

  m.def(
      "init_mlp",
      [](const std::vector<int>& dims, const std::string& act, std::uint64_t seed) {
        return init_mlp(dims, activation_from_string(act), seed);
      },
      py::arg("layer_dims"), py::arg("activation") = "tanh", py::arg("seed") = 0);
  m.def(
      "mlp_forward",
      [](const MlpParams& p, const Vector& x, const Vector& u) { return mlp_forward(p, x, u); },
      py::arg("params"), py::arg("x"), py::arg("u"));
  m.def("mlp_state_jacobian", &mlp_state_jacobian, py::arg("params"), py::arg("x"), py::arg("u"));
  m.def(
      "save_model",
      [](const MlpParams& params, const std::filesystem::path& file, const std::string& kind,
         double narx_dt, const std::string& echo_json) {
        save_model(make_model_file(params, kind, narx_dt, echo_json), file);
      },
      py::arg("params"), py::arg("file"), py::arg("kind") = "node", py::arg("narx_dt") = 0.0,
      py::arg("echo_json") = "");
  m.def(
      "load_model",
      [](const std::filesystem::path& file) {
        const ModelFile mf = load_model(file);
        return py::make_tuple(mf.params, mf.kind == ModelFile::Kind::Narx ? "narx" : "node",
                              mf.narx_dt, mf.train_config_echo.dump());
      },
      py::arg("file"));

  // --- integration ------------------------------------------------------------
  m.def("step_rk4", &step_rk4, py::arg("field"), py::arg("x"), py::arg("u"), py::arg("h"));
  m.def("solve_adaptive",
        [](const OdeField& field, const Vector& x0, const PiecewiseConstantInput& input,
           double t_begin, double t_end, double dt, const IntegratorConfig& cfg) {
          const SolveResult res = solve_adaptive(field, x0, input, t_begin, t_end, dt, cfg);
          return py::make_tuple(res.trajectory, res.complete, res.t_reached);
        },
        py::arg("field"), py::arg("x0"), py::arg("input"), py::arg("t_begin"), py::arg("t_end"),
        py::arg("dt"), py::arg("config") = IntegratorConfig{});

  // --- training ---------------------------------------------------------------
  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("lambda1", &TrainConfig::lambda1)
      .def_readwrite("lambda2", &TrainConfig::lambda2)
      .def_readwrite("window_len", &TrainConfig::window_len)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("iterations", &TrainConfig::iterations)
      .def_readwrite("lr", &TrainConfig::lr)
      .def_readwrite("adam_beta1", &TrainConfig::adam_beta1)
      .def_readwrite("adam_beta2", &TrainConfig::adam_beta2)
      .def_readwrite("adam_eps", &TrainConfig::adam_eps)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("hidden", &TrainConfig::hidden)
      .def_readwrite("eq_window_divisor", &TrainConfig::eq_window_divisor)
      .def_readwrite("eq_residual_max", &TrainConfig::eq_residual_max)
      .def_readwrite("neighbors", &TrainConfig::neighbors)
      .def_property(
          "mode", [](const TrainConfig& c) { return to_string(c.mode); },
          [](TrainConfig& c, const std::string& mode) { c.mode = train_mode_from_string(mode); })
      .def_property(
          "activation", [](const TrainConfig& c) { return to_string(c.activation); },
          [](TrainConfig& c, const std::string& a) { c.activation = activation_from_string(a); });

  py::class_<TrainRecord>(m, "TrainRecord")
      .def_readonly("iteration", &TrainRecord::iteration)
      .def_readonly("l_data", &TrainRecord::l_data)
      .def_readonly("l_jac", &TrainRecord::l_jac)
      .def_readonly("l_total", &TrainRecord::l_total)
      .def_readonly("grad_norm", &TrainRecord::grad_norm)
      .def_readonly("wall_ms", &TrainRecord::wall_ms);

  py::class_<TrainLog>(m, "TrainLog")
      .def_readonly("records", &TrainLog::records)
      .def_readonly("skipped_windows", &TrainLog::skipped_windows)
      .def_readonly("warnings", &TrainLog::warnings);

  py::class_<LatentFeature>(m, "LatentFeature")
      .def_readonly("trajectory", &LatentFeature::trajectory)
      .def_readonly("x_ss", &LatentFeature::x_ss)
      .def_readonly("u_ss", &LatentFeature::u_ss)
      .def_readonly("j_ref", &LatentFeature::j_ref)
      .def_readonly("cond", &LatentFeature::cond)
      .def_readonly("eq_residual", &LatentFeature::eq_residual);

  py::class_<LatentFeatureSet>(m, "LatentFeatureSet")
      .def_readonly("features", &LatentFeatureSet::features)
      .def_readonly("skipped", &LatentFeatureSet::skipped);

  py::class_<TrainResult>(m, "TrainResult")
      .def_readonly("model", &TrainResult::model)
      .def_readonly("log", &TrainResult::log)
      .def_readonly("latent", &TrainResult::latent);

  py::class_<NarxModel>(m, "NarxModel")
      .def_readonly("params", &NarxModel::params)
      .def_readonly("dt", &NarxModel::dt);

  py::class_<NarxTrainResult>(m, "NarxTrainResult")
      .def_readonly("model", &NarxTrainResult::model)
      .def_readonly("log", &NarxTrainResult::log);

  m.def("precompute_latent_features", &precompute_latent_features, py::arg("dataset"),
        py::arg("config"));
  m.def("train", &train, py::arg("dataset"), py::arg("config"),
        py::call_guard<py::gil_scoped_release>());
  m.def("train_narx", &train_narx, py::arg("dataset"), py::arg("config"),
        py::call_guard<py::gil_scoped_release>());
  m.def(
      "predict",
      [](const MlpParams& model, const Vector& x0, const PiecewiseConstantInput& input, double dt,
         double duration) { return predict(model, x0, input, dt, duration); },
      py::arg("model"), py::arg("x0"), py::arg("input"), py::arg("dt"), py::arg("duration"));
  m.def(
      "predict_narx",
      [](const NarxModel& model, const Vector& x0, const PiecewiseConstantInput& input, double dt,
         double duration) { return predict(model, x0, input, dt, duration); },
      py::arg("model"), py::arg("x0"), py::arg("input"), py::arg("dt"), py::arg("duration"));

  // --- stability ----------------------------------------------------------------
  py::class_<Linearization>(m, "Linearization")
      .def_readonly("found", &Linearization::found)
      .def_readonly("x_ss", &Linearization::x_ss)
      .def_readonly("x_ss_normalized", &Linearization::x_ss_normalized)
      .def_readonly("j_normalized", &Linearization::j_normalized)
      .def_readonly("j_physical", &Linearization::j_physical);

  m.def("eigvals", &eigvals, py::arg("matrix"));
  m.def(
      "classify",
      [](const ComplexList& eigs, double margin) { return to_string(classify(eigs, margin)); },
      py::arg("eigenvalues"), py::arg("margin") = 1e-6);
  m.def(
      "eig_error",
      [](const ComplexList& estimated, const ComplexList& reference) {
        const EigError err = eig_error(estimated, reference);
        return py::make_tuple(err.mae, err.pairs);
      },
      py::arg("estimated"), py::arg("reference"));
  m.def("denormalize_jacobian", &denormalize_jacobian, py::arg("j_norm"), py::arg("stats"),
        py::arg("t_scale") = 1.0);
  m.def("model_linearize", &model_linearize, py::arg("model"), py::arg("u"), py::arg("x_guess"));
}
