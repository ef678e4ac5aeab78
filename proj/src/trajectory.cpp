#include "lfinode/trajectory.hpp"

#include <charconv>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace lfi {

void Trajectory::validate() const {
  if (states.rows() < 2) throw DimensionError("trajectory: need at least 2 samples");
  if (inputs.rows() != states.rows())
    throw DimensionError("trajectory: states and inputs must have the same row count");
  if (!(dt > 0.0)) throw DimensionError("trajectory: dt must be positive");
  if (!all_finite(states) || !all_finite(inputs) || !std::isfinite(t0))
    throw DimensionError("trajectory: values must be finite");
}

std::string format_double(double v) {
  char buf[40];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    double back = 0.0;
    std::sscanf(buf, "%lf", &back);
    if (back == v) return buf;
  }
  return buf;
}

namespace {

double parse_double(const std::string& s, const std::string& where) {
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end)
    throw FormatError("trajectory csv: bad number '" + s + "' at " + where);
  return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::stringstream ss(line);
  while (std::getline(ss, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

void write_trajectory_csv(const Trajectory& traj, const std::filesystem::path& file) {
  traj.validate();
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot open for writing: " + file.string());
  const int dx = traj.state_dim(), du = traj.input_dim();
  out << "t";
  for (int c = 0; c < dx; ++c) out << ",x" << (c + 1);
  for (int c = 0; c < du; ++c) out << ",u" << (c + 1);
  out << "\n";
  for (int k = 0; k < traj.n_samples(); ++k) {
    out << format_double(traj.time_at(k));
    for (int c = 0; c < dx; ++c) out << "," << format_double(traj.states(k, c));
    for (int c = 0; c < du; ++c) out << "," << format_double(traj.inputs(k, c));
    out << "\n";
  }
  if (!out) throw std::runtime_error("failed while writing: " + file.string());
}

Trajectory read_trajectory_csv(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open trajectory csv: " + file.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError("trajectory csv: empty file " + file.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();

  const auto header = split_csv_line(line);
  if (header.empty() || header[0] != "t")
    throw FormatError("trajectory csv: header must start with 't' in " + file.string());
  int dx = 0, du = 0;
  std::size_t col = 1;
  while (col < header.size() && header[col] == "x" + std::to_string(dx + 1)) {
    ++dx;
    ++col;
  }
  while (col < header.size() && header[col] == "u" + std::to_string(du + 1)) {
    ++du;
    ++col;
  }
  if (dx == 0 || col != header.size())
    throw FormatError("trajectory csv: malformed header in " + file.string());

  std::vector<double> times;
  std::vector<std::vector<double>> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (static_cast<int>(cells.size()) != 1 + dx + du)
      throw FormatError("trajectory csv: row " + std::to_string(line_no) + " has " +
                        std::to_string(cells.size()) + " columns, expected " +
                        std::to_string(1 + dx + du) + " in " + file.string());
    std::vector<double> row(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i)
      row[i] = parse_double(cells[i], "row " + std::to_string(line_no));
    times.push_back(row[0]);
    rows.push_back(std::move(row));
  }
  if (rows.size() < 2) throw FormatError("trajectory csv: need at least 2 samples in " + file.string());

  Trajectory traj;
  traj.t0 = times.front();
  traj.dt = (times.back() - times.front()) / static_cast<double>(rows.size() - 1);
  if (!(traj.dt > 0.0)) throw FormatError("trajectory csv: non-increasing time column in " + file.string());
  // Uniform-grid check, tolerant to print/parse rounding only.
  for (std::size_t k = 0; k < times.size(); ++k) {
    const double expect = traj.t0 + static_cast<double>(k) * traj.dt;
    if (std::abs(times[k] - expect) > 1e-6 * std::max(1.0, std::abs(expect)) + 1e-12)
      throw FormatError("trajectory csv: non-uniform sampling at row " + std::to_string(k + 2) +
                        " in " + file.string());
  }
  traj.states.resize(rows.size(), dx);
  traj.inputs.resize(rows.size(), du);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    for (int c = 0; c < dx; ++c) traj.states(k, c) = rows[k][1 + c];
    for (int c = 0; c < du; ++c) traj.inputs(k, c) = rows[k][1 + dx + c];
  }
  traj.validate();
  return traj;
}

nlohmann::json norm_stats_to_json(const NormStats& stats) {
  const auto vec = [](const Vector& v) {
    nlohmann::json arr = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
    return arr;
  };
  return nlohmann::json{{"state_mean", vec(stats.state_mean)},
                        {"state_std", vec(stats.state_std)},
                        {"input_mean", vec(stats.input_mean)},
                        {"input_std", vec(stats.input_std)}};
}

NormStats norm_stats_from_json(const nlohmann::json& j) {
  const auto vec = [&](const char* key) {
    if (!j.contains(key)) throw FormatError(std::string("norm stats: missing '") + key + "'");
    const auto& arr = j.at(key);
    Vector v(arr.size());
    for (std::size_t i = 0; i < arr.size(); ++i) v(i) = arr[i].get<double>();
    return v;
  };
  NormStats s;
  s.state_mean = vec("state_mean");
  s.state_std = vec("state_std");
  s.input_mean = vec("input_mean");
  s.input_std = vec("input_std");
  for (Eigen::Index i = 0; i < s.state_std.size(); ++i)
    if (!(s.state_std(i) > 0.0)) throw FormatError("norm stats: state_std entries must be > 0");
  for (Eigen::Index i = 0; i < s.input_std.size(); ++i)
    if (!(s.input_std(i) > 0.0)) throw FormatError("norm stats: input_std entries must be > 0");
  return s;
}

void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["config"] = nlohmann::json::object();
  for (const auto& [k, v] : ds.manifest) manifest["config"][k] = v;
  manifest["norm"] = ds.norm ? norm_stats_to_json(*ds.norm) : nlohmann::json();
  nlohmann::json list = nlohmann::json::array();
  for (std::size_t i = 0; i < ds.trajectories.size(); ++i) {
    const auto& traj = ds.trajectories[i];
    char name[32];
    std::snprintf(name, sizeof(name), "traj_%04zu.csv", i);
    write_trajectory_csv(traj, dir / name);
    nlohmann::json entry;
    entry["file"] = name;
    entry["n_samples"] = traj.n_samples();
    entry["dt"] = traj.dt;
    entry["t0"] = traj.t0;
    entry["meta"] = nlohmann::json::object();
    for (const auto& [k, v] : traj.meta) entry["meta"][k] = v;
    list.push_back(std::move(entry));
  }
  manifest["trajectories"] = std::move(list);

  std::ofstream out(dir / "manifest.json");
  if (!out) throw std::runtime_error("cannot write manifest in " + dir.string());
  out << manifest.dump(2) << "\n";
  if (!out) throw std::runtime_error("failed writing manifest in " + dir.string());
}

Dataset read_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw FormatError("dataset: missing manifest file " + manifest_path.string());
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("dataset: invalid manifest JSON: " + std::string(e.what()));
  }

  Dataset ds;
  if (manifest.contains("config"))
    for (const auto& [k, v] : manifest.at("config").items())
      ds.manifest[k] = v.is_string() ? v.get<std::string>() : v.dump();
  if (manifest.contains("norm") && !manifest.at("norm").is_null())
    ds.norm = norm_stats_from_json(manifest.at("norm"));
  if (!manifest.contains("trajectories"))
    throw FormatError("dataset: manifest missing 'trajectories' list");
  for (const auto& entry : manifest.at("trajectories")) {
    Trajectory traj = read_trajectory_csv(dir / entry.at("file").get<std::string>());
    // The manifest carries dt/t0 exactly; the CSV time column is derived.
    if (entry.contains("dt")) traj.dt = entry.at("dt").get<double>();
    if (entry.contains("t0")) traj.t0 = entry.at("t0").get<double>();
    if (entry.contains("meta"))
      for (const auto& [k, v] : entry.at("meta").items()) traj.meta[k] = v.get<std::string>();
    ds.trajectories.push_back(std::move(traj));
  }
  for (const auto& traj : ds.trajectories) {
    if (traj.state_dim() != ds.state_dim() || traj.input_dim() != ds.input_dim())
      throw FormatError("dataset: trajectories disagree on state/input dims");
  }
  return ds;
}

}  // namespace lfi
