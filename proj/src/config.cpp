#include "lfinode/config.hpp"

#include <fstream>

#include "lfinode/json_io.hpp"

namespace lfi {

namespace {

double get_num(const nlohmann::json& j, const char* key, double fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number()) throw ConfigError(where + "." + key, "must be a number");
  return j.at(key).get<double>();
}

long get_int(const nlohmann::json& j, const char* key, long fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number_integer()) throw ConfigError(where + "." + key, "must be an integer");
  return j.at(key).get<long>();
}

Vector get_vec(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw ConfigError(where, "must be a non-empty array");
  Vector v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError(where, "entries must be numbers");
    v(i) = j[i].get<double>();
  }
  return v;
}

}  // namespace

PlantModel RunConfig::build_plant() const {
  const auto& p = plant_params;
  switch (plant_kind) {
    case PlantKind::Linear: {
      if (!p.contains("A")) throw ConfigError("plant.params.A", "linear plant requires matrix A");
      Matrix a = matrix_from_json(p.at("A"), "plant.params.A");
      Matrix b;
      if (p.contains("B")) {
        b = matrix_from_json(p.at("B"), "plant.params.B");
      } else {
        b = Matrix::Zero(a.rows(), 1);
      }
      return PlantModel::linear(std::move(a), std::move(b));
    }
    case PlantKind::VanDerPol:
      return PlantModel::van_der_pol(get_num(p, "mu", 1.0, "plant.params"));
    case PlantKind::GfmDroop: {
      GfmDroopParams gp;
      gp.E = get_num(p, "E", gp.E, "plant.params");
      gp.X = get_num(p, "X", gp.X, "plant.params");
      gp.m = get_num(p, "m", gp.m, "plant.params");
      gp.T = get_num(p, "T", gp.T, "plant.params");
      gp.omega_set = get_num(p, "omega_set", gp.omega_set, "plant.params");
      gp.P_ref = get_num(p, "P_ref", gp.P_ref, "plant.params");
      return PlantModel::gfm_droop(gp);
    }
  }
  throw ConfigError("plant.kind", "unreachable");
}

Vector RunConfig::nominal_input(const PlantModel& plant) const {
  if (nominal_u) {
    if (nominal_u->size() != plant.input_dim())
      throw ConfigError("data.nominal_u", "dimension does not match the plant");
    return *nominal_u;
  }
  return Vector::Ones(plant.input_dim());
}

Vector RunConfig::initial_state(const PlantModel& plant) const {
  if (default_x0) {
    if (default_x0->size() != plant.state_dim())
      throw ConfigError("data.x0", "dimension does not match the plant");
    return *default_x0;
  }
  const Vector u0 = nominal_input(plant);
  Vector guess = Vector::Zero(plant.state_dim());
  if (plant.kind() == PlantKind::GfmDroop) guess << 0.1, 0.5;
  const auto eq = plant.find_equilibrium(u0, guess);
  if (!eq)
    throw ConfigError("data.x0",
                      "no equilibrium at the nominal input; set data.x0 explicitly");
  return *eq;
}

std::vector<GridPoint> RunConfig::build_grid(const PlantModel& plant) const {
  std::vector<GridPoint> grid = explicit_points;
  for (auto& gp : grid) {
    if (gp.u.size() != plant.input_dim())
      throw ConfigError("data.grid.points", "input dimension does not match the plant");
    if (gp.x0.size() == 0) gp.x0 = initial_state(plant);
    if (gp.x0.size() != plant.state_dim())
      throw ConfigError("data.grid.points", "x0 dimension does not match the plant");
  }
  if (sweep) {
    if (sweep->u_min.size() != plant.input_dim() || sweep->u_max.size() != plant.input_dim() ||
        static_cast<int>(sweep->counts.size()) != plant.input_dim())
      throw ConfigError("data.grid.sweep", "sweep dimensions must match the plant input");
    for (int c : sweep->counts)
      if (c < 1) throw ConfigError("data.grid.sweep.counts", "counts must be >= 1");

    const Vector x0 = initial_state(plant);
    // Row-major lattice over the input box, axis 0 slowest.
    std::vector<int> idx(sweep->counts.size(), 0);
    while (true) {
      GridPoint gp;
      gp.u.resize(plant.input_dim());
      for (int d = 0; d < plant.input_dim(); ++d) {
        const int n = sweep->counts[d];
        const double frac = n == 1 ? 0.0 : static_cast<double>(idx[d]) / (n - 1);
        gp.u(d) = sweep->u_min(d) + frac * (sweep->u_max(d) - sweep->u_min(d));
      }
      gp.x0 = x0;
      grid.push_back(std::move(gp));
      int d = static_cast<int>(idx.size()) - 1;
      while (d >= 0 && ++idx[d] == sweep->counts[d]) idx[d--] = 0;
      if (d < 0) break;
    }
  }
  if (grid.empty()) throw ConfigError("data.grid", "grid resolved to zero points");
  return grid;
}

std::filesystem::path RunConfig::resolved_dataset_dir() const {
  return dataset_dir ? *dataset_dir : run_dir / "dataset";
}

std::filesystem::path RunConfig::resolved_model_file(TrainMode mode) const {
  return model_file ? *model_file : run_dir / ("model_" + to_string(mode) + ".json");
}

std::filesystem::path RunConfig::resolved_log_file(TrainMode mode) const {
  return log_file ? *log_file : run_dir / ("train_log_" + to_string(mode) + ".csv");
}

std::filesystem::path RunConfig::resolved_report_dir() const {
  return report_dir ? *report_dir : run_dir / "report";
}

void RunConfig::validate() const {
  // Building the plant and grid exercises every cross-field constraint
  // without touching the filesystem.
  const PlantModel plant = build_plant();
  (void)build_grid(plant);
  if (!(generation.dt > 0.0)) throw ConfigError("data.dt", "dt must be positive");
  if (!(generation.duration >= 2.0 * generation.dt))
    throw ConfigError("data.duration", "duration must be at least 2*dt");
  if (generation.sigma_x < 0.0) throw ConfigError("data.sigma_x", "sigma_x must be >= 0");
  if (generation.downsample_factor < 1)
    throw ConfigError("data.downsample", "downsample factor must be >= 1");
  if (generation.cutoff_hz &&
      !(*generation.cutoff_hz > 0.0 && *generation.cutoff_hz < 0.5 / generation.dt))
    throw ConfigError("data.cutoff_hz", "cutoff must lie in (0, Nyquist)");
  generation.integrator.validate();
  train.validate();
  for (const auto& u : eval_inputs) {
    if (u.size() != plant.input_dim())
      throw ConfigError("eval.inputs", "input dimension does not match the plant");
  }
  if (eval_margin < 0.0) throw ConfigError("eval.margin", "margin must be >= 0");
  if (run_dir.empty()) throw ConfigError("paths.run_dir", "run_dir must not be empty");
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  if (j.contains("plant")) {
    const auto& p = j.at("plant");
    if (p.contains("kind")) c.plant_kind = plant_kind_from_string(p.at("kind").get<std::string>());
    if (p.contains("params")) c.plant_params = p.at("params");
  }

  if (j.contains("data")) {
    const auto& d = j.at("data");
    c.generation.dt = get_num(d, "dt", c.generation.dt, "data");
    c.generation.duration = get_num(d, "duration", c.generation.duration, "data");
    c.generation.sigma_x = get_num(d, "sigma_x", c.generation.sigma_x, "data");
    if (d.contains("cutoff_hz") && !d.at("cutoff_hz").is_null())
      c.generation.cutoff_hz = d.at("cutoff_hz").get<double>();
    c.generation.downsample_factor =
        static_cast<int>(get_int(d, "downsample", c.generation.downsample_factor, "data"));
    c.generation.seed = static_cast<std::uint64_t>(get_int(d, "seed", 0, "data"));
    c.generation.integrator.rtol =
        get_num(d, "rtol", c.generation.integrator.rtol, "data");
    c.generation.integrator.atol =
        get_num(d, "atol", c.generation.integrator.atol, "data");
    if (d.contains("nominal_u")) c.nominal_u = get_vec(d.at("nominal_u"), "data.nominal_u");
    if (d.contains("x0")) c.default_x0 = get_vec(d.at("x0"), "data.x0");
    if (d.contains("grid")) {
      const auto& g = d.at("grid");
      if (g.contains("points")) {
        if (!g.at("points").is_array() || g.at("points").empty())
          throw ConfigError("data.grid", "points must be a non-empty array");
        for (const auto& pt : g.at("points")) {
          GridPoint gp;
          gp.u = get_vec(pt.at("u"), "data.grid.points.u");
          if (pt.contains("x0")) gp.x0 = get_vec(pt.at("x0"), "data.grid.points.x0");
          c.explicit_points.push_back(std::move(gp));
        }
      }
      if (g.contains("sweep")) {
        const auto& s = g.at("sweep");
        GridSweep sweep;
        sweep.u_min = get_vec(s.at("min"), "data.grid.sweep.min");
        sweep.u_max = get_vec(s.at("max"), "data.grid.sweep.max");
        for (const auto& n : s.at("counts")) sweep.counts.push_back(n.get<int>());
        c.sweep = std::move(sweep);
      }
      if (!g.contains("points") && !g.contains("sweep"))
        throw ConfigError("data.grid", "grid needs 'points' or 'sweep'");
    }
  }

  if (j.contains("train")) {
    const auto& t = j.at("train");
    c.train.lambda1 = get_num(t, "lambda1", c.train.lambda1, "train");
    c.train.lambda2 = get_num(t, "lambda2", c.train.lambda2, "train");
    c.train.window_len = static_cast<int>(get_int(t, "window_len", c.train.window_len, "train"));
    c.train.batch_size = static_cast<int>(get_int(t, "batch_size", c.train.batch_size, "train"));
    c.train.iterations = static_cast<int>(get_int(t, "iterations", c.train.iterations, "train"));
    c.train.lr = get_num(t, "lr", c.train.lr, "train");
    c.train.adam_beta1 = get_num(t, "adam_beta1", c.train.adam_beta1, "train");
    c.train.adam_beta2 = get_num(t, "adam_beta2", c.train.adam_beta2, "train");
    c.train.adam_eps = get_num(t, "adam_eps", c.train.adam_eps, "train");
    c.train.seed = static_cast<std::uint64_t>(get_int(t, "seed", 0, "train"));
    if (t.contains("mode")) c.train.mode = train_mode_from_string(t.at("mode").get<std::string>());
    if (t.contains("hidden")) {
      c.train.hidden.clear();
      for (const auto& n : t.at("hidden")) c.train.hidden.push_back(n.get<int>());
    }
    if (t.contains("activation"))
      c.train.activation = activation_from_string(t.at("activation").get<std::string>());
    c.train.eq_window_divisor =
        static_cast<int>(get_int(t, "eq_window_divisor", c.train.eq_window_divisor, "train"));
    c.train.eq_residual_max = get_num(t, "eq_residual_max", c.train.eq_residual_max, "train");
    c.train.neighbors.eps_min = get_num(t, "neighbor_eps_min", c.train.neighbors.eps_min, "train");
    c.train.neighbors.r_max = get_num(t, "neighbor_r_max", c.train.neighbors.r_max, "train");
    c.train.neighbors.n_max =
        static_cast<int>(get_int(t, "neighbor_n_max", c.train.neighbors.n_max, "train"));
    c.train.jac_subset = static_cast<int>(get_int(t, "jac_subset", c.train.jac_subset, "train"));
  }

  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    if (e.contains("inputs"))
      for (const auto& u : e.at("inputs")) c.eval_inputs.push_back(get_vec(u, "eval.inputs"));
    c.eval_margin = get_num(e, "margin", c.eval_margin, "eval");
    c.eval_duration = get_num(e, "duration", c.eval_duration, "eval");
  }

  if (j.contains("paths")) {
    const auto& p = j.at("paths");
    if (p.contains("run_dir")) c.run_dir = p.at("run_dir").get<std::string>();
    if (p.contains("dataset_dir")) c.dataset_dir = p.at("dataset_dir").get<std::string>();
    if (p.contains("model_file")) c.model_file = p.at("model_file").get<std::string>();
    if (p.contains("log_file")) c.log_file = p.at("log_file").get<std::string>();
    if (p.contains("report_dir")) c.report_dir = p.at("report_dir").get<std::string>();
  }
  return c;
}

RunConfig RunConfig::from_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open config file: " + file.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config", "invalid JSON in " + file.string() + ": " + e.what());
  }
  return from_json(j);
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["plant"]["kind"] = to_string(plant_kind);
  j["plant"]["params"] = plant_params.is_null() ? nlohmann::json::object() : plant_params;

  nlohmann::json d;
  d["dt"] = generation.dt;
  d["duration"] = generation.duration;
  d["sigma_x"] = generation.sigma_x;
  d["cutoff_hz"] = generation.cutoff_hz ? nlohmann::json(*generation.cutoff_hz) : nlohmann::json();
  d["downsample"] = generation.downsample_factor;
  d["seed"] = generation.seed;
  d["rtol"] = generation.integrator.rtol;
  d["atol"] = generation.integrator.atol;
  if (nominal_u) d["nominal_u"] = vector_to_json(*nominal_u);
  if (default_x0) d["x0"] = vector_to_json(*default_x0);
  if (sweep) {
    d["grid"]["sweep"]["min"] = vector_to_json(sweep->u_min);
    d["grid"]["sweep"]["max"] = vector_to_json(sweep->u_max);
    d["grid"]["sweep"]["counts"] = sweep->counts;
  }
  if (!explicit_points.empty()) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& gp : explicit_points) {
      nlohmann::json pt;
      pt["u"] = vector_to_json(gp.u);
      if (gp.x0.size() > 0) pt["x0"] = vector_to_json(gp.x0);
      pts.push_back(std::move(pt));
    }
    d["grid"]["points"] = std::move(pts);
  }
  j["data"] = std::move(d);

  nlohmann::json t;
  t["lambda1"] = train.lambda1;
  t["lambda2"] = train.lambda2;
  t["window_len"] = train.window_len;
  t["batch_size"] = train.batch_size;
  t["iterations"] = train.iterations;
  t["lr"] = train.lr;
  t["adam_beta1"] = train.adam_beta1;
  t["adam_beta2"] = train.adam_beta2;
  t["adam_eps"] = train.adam_eps;
  t["seed"] = train.seed;
  t["mode"] = to_string(train.mode);
  t["hidden"] = train.hidden;
  t["activation"] = to_string(train.activation);
  t["eq_window_divisor"] = train.eq_window_divisor;
  t["eq_residual_max"] = train.eq_residual_max;
  t["neighbor_eps_min"] = train.neighbors.eps_min;
  t["neighbor_r_max"] = train.neighbors.r_max;
  t["neighbor_n_max"] = train.neighbors.n_max;
  t["jac_subset"] = train.jac_subset;
  j["train"] = std::move(t);

  nlohmann::json e;
  nlohmann::json inputs = nlohmann::json::array();
  for (const auto& u : eval_inputs) inputs.push_back(vector_to_json(u));
  e["inputs"] = std::move(inputs);
  e["margin"] = eval_margin;
  e["duration"] = eval_duration;
  j["eval"] = std::move(e);

  nlohmann::json p;
  p["run_dir"] = run_dir.string();
  p["dataset_dir"] = resolved_dataset_dir().string();
  p["report_dir"] = resolved_report_dir().string();
  if (model_file) p["model_file"] = model_file->string();
  if (log_file) p["log_file"] = log_file->string();
  j["paths"] = std::move(p);
  return j;
}

}  // namespace lfi
