#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>

#include "core/io.hpp"
#include "core/pipeline.hpp"

using namespace cisskip;
using nlohmann::json;

namespace {

// A fast desk-scale configuration: 32x32 frames, 2x2 patch grid.
json tiny_config(const std::filesystem::path& out_dir) {
  return {
      {"seed", 11},
      {"out_dir", out_dir.string()},
      {"scene",
       {{"rows", 32}, {"cols", 32}, {"objects", 2}, {"min_size", 6}, {"max_size", 12},
        {"frames", 24}}},
      {"mgn",
       {{"input_h", 32}, {"input_w", 32}, {"channels", 1}, {"patch", 16}, {"embed_dim", 16},
        {"heads", 2}, {"ffn_dim", 32}}},
      {"train", {{"epochs", 3}, {"batch", 4}, {"holdout_frac", 0.25}}},
      {"masking", {{"t_reg", 0.5}, {"t_row", 0.25}, {"period", 4}}},
      {"sensor",
       {{"rows", 32}, {"cols", 32}, {"bit_depth", 10}, {"patch", 16}, {"mode", "region"}}},
  };
}

}  // namespace

TEST_CASE("config defaults and round trip") {
  RunConfig cfg = RunConfig::from_json(json::object());
  CHECK(cfg.mgn.input_h == 64);
  CHECK(cfg.sensor.mode == SensorMode::region_skip);
  CHECK(cfg.period == 4);
  CHECK(cfg.calib_targets.size() == 3);

  RunConfig back = RunConfig::from_json(cfg.to_json());
  CHECK(back.mgn == cfg.mgn);
  CHECK(back.t_reg == cfg.t_reg);
  CHECK(back.sweep_s == cfg.sweep_s);
}

TEST_CASE("config validation failures are usage errors") {
  CHECK_THROWS_AS(RunConfig::from_json({{"masking", {{"period", 0}}}}), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json({{"mgn", {{"embed_dim", 7}, {"heads", 2}}}}), ConfigError);
  CHECK_THROWS_AS(run_command("frobnicate", json::object()), ConfigError);
}

TEST_CASE("full pipeline: gen, train, mask, simulate, energy, sweep, calibrate") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "cisskip_pipeline_smoke";
  fs::remove_all(dir);
  json cfg = tiny_config(dir);

  json gen = run_command("gen", cfg);
  CHECK(gen.at("status") == "ok");
  CHECK(gen.at("frames") == 24);
  CHECK(fs::exists(dir / "dataset" / "frame_000000.pgm"));
  CHECK(fs::exists(dir / "dataset" / "boxes.json"));

  json train = run_command("train", cfg);
  CHECK(train.at("status") == "ok");
  CHECK(train.at("train_frames") == 18);
  CHECK(train.at("holdout_frames") == 6);
  CHECK(fs::exists(dir / "mgn_weights.csk"));
  CHECK(fs::exists(dir / "train_loss.csv"));

  json mask = run_command("mask", cfg);
  CHECK(mask.at("status") == "ok");
  CHECK(mask.at("frames") == 24);
  CHECK(mask.at("masked_frames") == 18);  // 24 frames, P=4 -> 6 full reads
  CHECK(fs::exists(dir / "masks" / "mask_000023.json"));
  CHECK(fs::exists(dir / "mask_metrics.csv"));

  json sim = run_command("simulate", cfg);
  CHECK(sim.at("status") == "ok");
  CHECK(fs::exists(dir / "frames" / "read_000023.pgm"));
  CHECK(fs::exists(dir / "ledgers" / "ledger_000023.json"));

  json energy = run_command("energy", cfg);
  CHECK(energy.at("status") == "ok");
  CHECK(fs::exists(dir / "energy.csv"));
  CHECK(fs::exists(dir / "energy_frames.csv"));
  double normalized = energy.at("normalized_energy").get<double>();
  CHECK(normalized > 0.0);
  CHECK(normalized <= 1.0 + 1e-9);

  json sweep = run_command("sweep", cfg);
  CHECK(sweep.at("status") == "ok");
  CHECK(fs::exists(dir / "sweep.csv"));
  CHECK(sweep.at("rows") == 9 * 3 * 2);

  json calib = run_command("calibrate", cfg);
  CHECK(calib.at("status") == "ok");
  CHECK(fs::exists(dir / "energy_params.json"));
  CHECK(std::abs(calib.at("alpha_reg").get<double>() - 0.346) < 0.02);

  // the calibrated params file feeds back through energy
  json cfg2 = cfg;
  cfg2["energy"]["params_path"] = (dir / "energy_params.json").string();
  json energy2 = run_command("energy", cfg2);
  CHECK(energy2.at("status") == "ok");

  fs::remove_all(dir);
}

TEST_CASE("energy with P=1 reduces to the baseline") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "cisskip_pipeline_p1";
  fs::remove_all(dir);
  json cfg = tiny_config(dir);
  cfg["masking"]["period"] = 1;

  run_command("gen", cfg);
  run_command("train", cfg);
  run_command("mask", cfg);
  run_command("simulate", cfg);
  json energy = run_command("energy", cfg);
  // every frame is a full read: E_F = E_base + E_mem + E_M exactly
  CHECK(energy.at("normalized_energy").get<double>() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(energy.at("reduction_pct").get<double>() == doctest::Approx(0.0));
  fs::remove_all(dir);
}

TEST_CASE("weights built for a different mgn config are rejected") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "cisskip_pipeline_mismatch";
  fs::remove_all(dir);
  json cfg = tiny_config(dir);
  run_command("gen", cfg);
  run_command("train", cfg);
  json other = cfg;
  other["mgn"]["embed_dim"] = 8;
  other["mgn"]["ffn_dim"] = 16;
  CHECK_THROWS_AS(run_command("mask", other), FormatError);
  fs::remove_all(dir);
}

TEST_CASE("mask before train is a usage error (missing weights)") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "cisskip_pipeline_missing";
  fs::remove_all(dir);
  json cfg = tiny_config(dir);
  run_command("gen", cfg);
  CHECK_THROWS_AS(run_command("mask", cfg), IoError);
  fs::remove_all(dir);
}

TEST_CASE("command summaries carry the verb and elapsed time") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "cisskip_pipeline_summary";
  fs::remove_all(dir);
  json cfg = tiny_config(dir);
  json summary = run_command("sweep", cfg);
  CHECK(summary.at("command") == "sweep");
  CHECK(summary.contains("elapsed_s"));
  fs::remove_all(dir);
}
