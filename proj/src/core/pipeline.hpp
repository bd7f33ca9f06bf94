#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "core/energy.hpp"
#include "core/mgn.hpp"
#include "core/scenes.hpp"

namespace cisskip {

// One experiment's knobs, loaded from a single JSON document with defaults
// for every field. Paths are resolved under out_dir unless given.
struct RunConfig {
  uint64_t seed = 7;
  std::filesystem::path out_dir = "out";

  SceneSpec scene;
  std::filesystem::path dataset;  // defaults to out_dir/dataset

  MgnConfig mgn;
  TrainOptions train;
  double holdout_frac = 0.2;

  double t_reg = 0.5;
  double t_row = 0.25;
  int period = 4;

  SensorConfig sensor;

  EnergyParams energy;
  std::filesystem::path energy_params_path;  // optional, overrides `energy`

  std::vector<double> sweep_s = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::vector<int> sweep_p = {4, 24, 160};
  std::vector<SensorMode> sweep_modes = {SensorMode::row_skip, SensorMode::region_skip};

  std::vector<CalibrationTarget> calib_targets;  // defaults to the reported reductions
  std::vector<FreeParam> calib_free = {FreeParam::alpha_row, FreeParam::alpha_reg,
                                       FreeParam::e_mgn};

  std::filesystem::path weights_path() const { return out_dir / "mgn_weights.csk"; }
  std::filesystem::path masks_dir() const { return out_dir / "masks"; }
  std::filesystem::path frames_dir() const { return out_dir / "frames"; }
  std::filesystem::path ledgers_dir() const { return out_dir / "ledgers"; }

  static RunConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

// Executes one CLI verb (gen, train, mask, simulate, energy, sweep,
// calibrate) and returns the JSON summary the CLI prints. Throws
// cisskip::Error subclasses on failure.
nlohmann::json run_command(const std::string& verb, const nlohmann::json& config_json);

}  // namespace cisskip
