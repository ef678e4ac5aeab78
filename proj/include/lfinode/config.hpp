#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lfinode/plants.hpp"
#include "lfinode/signals.hpp"
#include "lfinode/training.hpp"

namespace lfi {

/// Declarative run description: plant, data pipeline, training, evaluation
/// and file layout. Parsed from a JSON file with sections plant/data/train/
/// eval/paths; every field has a documented default and validation happens
/// before any filesystem side effect.
struct RunConfig {
  // plant
  PlantKind plant_kind = PlantKind::GfmDroop;
  nlohmann::json plant_params;  // kind-specific parameter map

  // data
  struct GridSweep {
    Vector u_min, u_max;
    std::vector<int> counts;
  };
  std::optional<GridSweep> sweep;                // sweep over step inputs
  std::vector<GridPoint> explicit_points;        // fully explicit grid
  std::optional<Vector> nominal_u;               // pre-step input (default: all ones)
  std::optional<Vector> default_x0;              // overrides equilibrium-at-nominal
  GenerationConfig generation;

  // train
  TrainConfig train;

  // eval
  std::vector<Vector> eval_inputs;
  double eval_margin = 1e-6;
  double eval_duration = 0.0;  // 0 = data duration
  std::uint64_t eval_seeds = 1;

  // paths
  std::filesystem::path run_dir = "runs/run";
  std::optional<std::filesystem::path> dataset_dir;
  std::optional<std::filesystem::path> model_file;
  std::optional<std::filesystem::path> log_file;
  std::optional<std::filesystem::path> report_dir;

  PlantModel build_plant() const;
  std::vector<GridPoint> build_grid(const PlantModel& plant) const;
  Vector nominal_input(const PlantModel& plant) const;
  Vector initial_state(const PlantModel& plant) const;

  std::filesystem::path resolved_dataset_dir() const;
  std::filesystem::path resolved_model_file(TrainMode mode) const;
  std::filesystem::path resolved_log_file(TrainMode mode) const;
  std::filesystem::path resolved_report_dir() const;

  /// Fully-resolved config (defaults filled in), suitable for re-running.
  nlohmann::json to_json() const;

  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig from_file(const std::filesystem::path& file);

  /// Cross-field checks; throws ConfigError naming the offending field.
  void validate() const;
};

}  // namespace lfi
