#include "core/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>

#include "core/io.hpp"
#include "core/masking.hpp"

namespace cisskip {

namespace {

using nlohmann::json;

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw FormatError("config field '" + std::string(key) + "': " + e.what());
  }
}

SceneSpec scene_from_json(const json& j, uint64_t default_seed) {
  SceneSpec s;
  s.rows = get_or(j, "rows", s.rows);
  s.cols = get_or(j, "cols", s.cols);
  s.n_objects = get_or(j, "objects", s.n_objects);
  s.min_size = get_or(j, "min_size", s.min_size);
  s.max_size = get_or(j, "max_size", s.max_size);
  s.min_speed = get_or(j, "min_speed", s.min_speed);
  s.max_speed = get_or(j, "max_speed", s.max_speed);
  s.background = get_or(j, "background", s.background);
  s.texture_amp = get_or(j, "texture_amp", s.texture_amp);
  s.frames = get_or(j, "frames", s.frames);
  s.seed = get_or(j, "seed", default_seed);
  return s;
}

json scene_to_json(const SceneSpec& s) {
  return {{"rows", s.rows},           {"cols", s.cols},
          {"objects", s.n_objects},   {"min_size", s.min_size},
          {"max_size", s.max_size},   {"min_speed", s.min_speed},
          {"max_speed", s.max_speed}, {"background", s.background},
          {"texture_amp", s.texture_amp}, {"frames", s.frames},
          {"seed", s.seed}};
}

double elapsed_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string format_double(double v, const char* fmt = "%.9g") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

std::string frame_file(const char* prefix, size_t index, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%06zu.%s", prefix, index, ext);
  return buf;
}

}  // namespace

RunConfig RunConfig::from_json(const json& j) {
  if (!j.is_object()) throw FormatError("config must be a JSON object");
  RunConfig c;
  c.seed = get_or(j, "seed", c.seed);
  c.out_dir = get_or<std::string>(j, "out_dir", c.out_dir.string());

  c.scene = scene_from_json(j.contains("scene") ? j.at("scene") : json::object(), c.seed);
  c.dataset = get_or<std::string>(j, "dataset", (c.out_dir / "dataset").string());

  {
    json m = j.contains("mgn") ? j.at("mgn") : json::object();
    c.mgn.input_h = get_or(m, "input_h", 64);
    c.mgn.input_w = get_or(m, "input_w", 64);
    c.mgn.channels = get_or(m, "channels", 1);
    c.mgn.patch = get_or(m, "patch", 16);
    c.mgn.embed_dim = get_or(m, "embed_dim", 64);
    c.mgn.heads = get_or(m, "heads", 2);
    c.mgn.ffn_dim = get_or(m, "ffn_dim", 256);
    c.mgn.validate();
  }
  {
    json t = j.contains("train") ? j.at("train") : json::object();
    c.train.epochs = get_or(t, "epochs", c.train.epochs);
    c.train.lr = get_or(t, "lr", c.train.lr);
    c.train.beta1 = get_or(t, "beta1", c.train.beta1);
    c.train.beta2 = get_or(t, "beta2", c.train.beta2);
    c.train.eps = get_or(t, "eps", c.train.eps);
    c.train.batch = get_or(t, "batch", c.train.batch);
    c.train.seed = get_or(t, "seed", c.seed);
    c.holdout_frac = get_or(t, "holdout_frac", c.holdout_frac);
    if (c.holdout_frac < 0.0 || c.holdout_frac >= 1.0) {
      throw ConfigError("config: holdout_frac must be in [0, 1)");
    }
  }
  {
    json m = j.contains("masking") ? j.at("masking") : json::object();
    c.t_reg = get_or(m, "t_reg", c.t_reg);
    c.t_row = get_or(m, "t_row", c.t_row);
    c.period = get_or(m, "period", c.period);
    if (c.period < 1) throw ConfigError("config: period must be >= 1");
  }
  {
    json s = j.contains("sensor") ? j.at("sensor") : json::object();
    c.sensor.rows = get_or(s, "rows", 64);
    c.sensor.cols = get_or(s, "cols", 64);
    c.sensor.bit_depth = get_or(s, "bit_depth", 10);
    c.sensor.patch = get_or(s, "patch", 16);
    c.sensor.mode = sensor_mode_from_string(get_or<std::string>(s, "mode", "region"));
    c.sensor.validate();
  }
  {
    json e = j.contains("energy") ? j.at("energy") : json::object();
    c.energy.e_sense_r = get_or(e, "e_sense_r", c.energy.e_sense_r);
    c.energy.e_adc_r = get_or(e, "e_adc_r", c.energy.e_adc_r);
    c.energy.e_sense_s_row = get_or(e, "e_sense_s_row", c.energy.e_sense_s_row);
    c.energy.e_adc_s_row = get_or(e, "e_adc_s_row", c.energy.e_adc_s_row);
    c.energy.e_sense_s_reg = get_or(e, "e_sense_s_reg", c.energy.e_sense_s_reg);
    c.energy.e_adc_s_reg = get_or(e, "e_adc_s_reg", c.energy.e_adc_s_reg);
    c.energy.e_mem_frac = get_or(e, "e_mem_frac", c.energy.e_mem_frac);
    c.energy.e_com_frac = get_or(e, "e_com_frac", c.energy.e_com_frac);
    c.energy.e_mgn_frac = get_or(e, "e_mgn_frac", c.energy.e_mgn_frac);
    c.energy.validate();
    c.energy_params_path = get_or<std::string>(e, "params_path", "");
    if (e.contains("sweep_s")) c.sweep_s = e.at("sweep_s").get<std::vector<double>>();
    if (e.contains("sweep_p")) c.sweep_p = e.at("sweep_p").get<std::vector<int>>();
    if (e.contains("sweep_modes")) {
      c.sweep_modes.clear();
      for (const auto& m : e.at("sweep_modes")) {
        c.sweep_modes.push_back(sensor_mode_from_string(m.get<std::string>()));
      }
    }
    if (e.contains("calib_targets")) {
      for (const auto& t : e.at("calib_targets")) {
        CalibrationTarget target;
        target.label = get_or<std::string>(t, "label", "target");
        target.mode = sensor_mode_from_string(t.at("mode").get<std::string>());
        target.skip_ratio = t.at("s").get<double>();
        target.period = t.at("P").get<int>();
        target.target_reduction = t.at("reduction").get<double>();
        c.calib_targets.push_back(target);
      }
    }
    if (e.contains("calib_free")) {
      c.calib_free.clear();
      for (const auto& f : e.at("calib_free")) {
        c.calib_free.push_back(free_param_from_string(f.get<std::string>()));
      }
    }
  }
  if (c.calib_targets.empty()) c.calib_targets = reported_reduction_targets();
  return c;
}

json RunConfig::to_json() const {
  json e = energy.to_json();
  e["params_path"] = energy_params_path.string();
  e["sweep_s"] = sweep_s;
  e["sweep_p"] = sweep_p;
  json sweep_modes_json = json::array();
  for (SensorMode m : sweep_modes) sweep_modes_json.push_back(to_string(m));
  e["sweep_modes"] = sweep_modes_json;
  return {
      {"seed", seed},
      {"out_dir", out_dir.string()},
      {"scene", scene_to_json(scene)},
      {"dataset", dataset.string()},
      {"mgn",
       {{"input_h", mgn.input_h},
        {"input_w", mgn.input_w},
        {"channels", mgn.channels},
        {"patch", mgn.patch},
        {"embed_dim", mgn.embed_dim},
        {"heads", mgn.heads},
        {"ffn_dim", mgn.ffn_dim}}},
      {"train",
       {{"epochs", train.epochs},
        {"lr", train.lr},
        {"beta1", train.beta1},
        {"beta2", train.beta2},
        {"eps", train.eps},
        {"batch", train.batch},
        {"seed", train.seed},
        {"holdout_frac", holdout_frac}}},
      {"masking", {{"t_reg", t_reg}, {"t_row", t_row}, {"period", period}}},
      {"sensor",
       {{"rows", sensor.rows},
        {"cols", sensor.cols},
        {"bit_depth", sensor.bit_depth},
        {"patch", sensor.patch},
        {"mode", to_string(sensor.mode)}}},
      {"energy", e},
  };
}

namespace {

// Dataset frames and their label grids on the MGN patch grid.
struct LabeledDataset {
  AnnotatedSequence seq;
  std::vector<BinaryGrid> labels;
};

LabeledDataset load_labeled(const RunConfig& cfg) {
  if (cfg.mgn.channels != 1) {
    throw ConfigError("pipeline: dataset frames are single-channel, mgn.channels must be 1");
  }
  LabeledDataset d;
  d.seq = read_sequence(cfg.dataset);
  for (size_t i = 0; i < d.seq.frames.size(); ++i) {
    const Frame& f = d.seq.frames[i];
    if (f.rows != cfg.mgn.input_h || f.cols != cfg.mgn.input_w) {
      throw ConfigError("pipeline: frame " + std::to_string(i) + " is " + std::to_string(f.rows) +
                        "x" + std::to_string(f.cols) + ", mgn expects " +
                        std::to_string(cfg.mgn.input_h) + "x" + std::to_string(cfg.mgn.input_w));
    }
    d.labels.push_back(labels_from_boxes(d.seq.boxes[i], cfg.mgn.grid_h(), cfg.mgn.grid_w(),
                                         f.rows, f.cols));
  }
  return d;
}

MgnWeights load_weights_checked(const RunConfig& cfg) {
  MgnWeights w = load_weights(cfg.weights_path());
  if (!(w.config == cfg.mgn)) {
    throw FormatError("weights at " + cfg.weights_path().string() +
                      " were built for a different mgn config");
  }
  return w;
}

EnergyParams effective_energy_params(const RunConfig& cfg) {
  if (!cfg.energy_params_path.empty()) {
    json j;
    try {
      j = json::parse(read_file(cfg.energy_params_path));
    } catch (const json::exception& e) {
      throw FormatError(cfg.energy_params_path.string() + ": " + e.what());
    }
    return EnergyParams::from_json(j);
  }
  return cfg.energy;
}

json cmd_gen(const RunConfig& cfg) {
  AnnotatedSequence seq = generate(cfg.scene);
  write_sequence(seq, cfg.dataset);
  return {{"frames", seq.frames.size()},
          {"dataset", cfg.dataset.string()},
          {"rows", cfg.scene.rows},
          {"cols", cfg.scene.cols}};
}

json cmd_train(const RunConfig& cfg) {
  LabeledDataset d = load_labeled(cfg);
  const size_t n = d.seq.frames.size();
  const size_t holdout = static_cast<size_t>(cfg.holdout_frac * static_cast<double>(n));
  const size_t n_train = n - holdout;
  if (n_train == 0) throw ConfigError("train: holdout leaves no training frames");

  std::vector<TrainSample> samples;
  samples.reserve(n_train);
  for (size_t i = 0; i < n_train; ++i) {
    samples.push_back({{frame_to_matrix(d.seq.frames[i])}, d.labels[i]});
  }

  MgnWeights weights = init_weights(cfg.mgn, cfg.seed);
  std::vector<double> history = mgn_train(weights, samples, cfg.train);
  save_weights(weights, cfg.weights_path());

  std::string csv = "epoch,loss\n";
  for (size_t e = 0; e < history.size(); ++e) {
    csv += std::to_string(e) + "," + format_double(history[e]) + "\n";
  }
  atomic_write_file(cfg.out_dir / "train_loss.csv", csv);

  double holdout_miou = 0.0;
  for (size_t i = n_train; i < n; ++i) {
    MgnOutput out = mgn_forward(weights, {frame_to_matrix(d.seq.frames[i])});
    holdout_miou += miou(region_mask(out.scores, cfg.t_reg), d.labels[i]);
  }
  if (holdout > 0) holdout_miou /= static_cast<double>(holdout);

  return {{"weights", cfg.weights_path().string()},
          {"loss_csv", (cfg.out_dir / "train_loss.csv").string()},
          {"epochs", history.size()},
          {"final_loss", history.empty() ? 0.0 : history.back()},
          {"train_frames", n_train},
          {"holdout_frames", holdout},
          {"holdout_miou", holdout_miou},
          {"param_count", count_params(cfg.mgn)},
          {"flops", estimate_flops(cfg.mgn)}};
}

// Masks for one scheduled frame, on both the MGN grid and the sensor grid.
struct FrameMasks {
  RegionMask mgn_region;
  RegionMask sensor_region;
  RowMask sensor_rows;
};

FrameMasks masks_from_scores(const ScoreGrid& scores, const RunConfig& cfg) {
  FrameMasks m;
  m.mgn_region = region_mask(scores, cfg.t_reg);
  m.sensor_region = map_to_sensor(m.mgn_region, cfg.sensor.rows, cfg.sensor.cols,
                                  cfg.sensor.patch);
  switch (cfg.sensor.mode) {
    case SensorMode::row_skip:
      m.sensor_rows = row_mask(m.sensor_region, cfg.t_row, cfg.sensor.patch);
      // Row-skip hardware only consults the row memory.
      m.sensor_region = RegionMask(cfg.sensor.region_rows(), cfg.sensor.region_cols(), 1);
      break;
    case SensorMode::region_skip: {
      // The row memory holds the any-active row bits the region mode implies.
      std::vector<uint8_t> any_active(m.sensor_region.gh, 0);
      for (int i = 0; i < m.sensor_region.gh; ++i) {
        for (int j = 0; j < m.sensor_region.gw; ++j) {
          if (m.sensor_region.at(i, j)) {
            any_active[i] = 1;
            break;
          }
        }
      }
      m.sensor_rows = expand_region_rows(any_active, cfg.sensor.patch);
      break;
    }
    case SensorMode::standard:
      m.sensor_region = RegionMask(cfg.sensor.region_rows(), cfg.sensor.region_cols(), 1);
      m.sensor_rows = RowMask(cfg.sensor.rows, 1);
      break;
  }
  return m;
}

json cmd_mask(const RunConfig& cfg) {
  LabeledDataset d = load_labeled(cfg);
  MgnWeights weights = load_weights_checked(cfg);

  Schedule schedule(cfg.period);
  FrameMasks current;
  std::string csv = "frame,decision,miou,pixel_skip,row_skip\n";
  double miou_sum = 0.0, masked_pixel_skip_sum = 0.0;
  size_t masked_frames = 0;

  for (size_t i = 0; i < d.seq.frames.size(); ++i) {
    ReadDecision decision = schedule.next();
    if (decision == ReadDecision::full_read) {
      MgnOutput out = mgn_forward(weights, {frame_to_matrix(d.seq.frames[i])});
      current = masks_from_scores(out.scores, cfg);
    }
    double frame_miou = miou(current.mgn_region, d.labels[i]);
    SkipRatios ratios = skip_ratios(current.sensor_region, current.sensor_rows, cfg.sensor.rows,
                                    cfg.sensor.cols, cfg.sensor.patch);
    miou_sum += frame_miou;
    const bool masked = decision == ReadDecision::masked_read;
    if (masked) {
      masked_pixel_skip_sum += ratios.pixel_skip;
      ++masked_frames;
    }

    json mask_doc = {{"frame", i},
                     {"decision", masked ? "masked" : "full"},
                     {"region_mgn", mask_to_json(current.mgn_region)},
                     {"region", mask_to_json(current.sensor_region)},
                     {"row", row_mask_to_json(current.sensor_rows)}};
    atomic_write_file(cfg.masks_dir() / frame_file("mask", i, "json"), mask_doc.dump(2) + "\n");

    csv += std::to_string(i) + "," + (masked ? "masked" : "full") + "," +
           format_double(frame_miou) + "," + format_double(ratios.pixel_skip) + "," +
           format_double(ratios.row_skip) + "\n";
  }
  atomic_write_file(cfg.out_dir / "mask_metrics.csv", csv);

  const double n = static_cast<double>(d.seq.frames.size());
  return {{"masks_dir", cfg.masks_dir().string()},
          {"metrics_csv", (cfg.out_dir / "mask_metrics.csv").string()},
          {"frames", d.seq.frames.size()},
          {"mean_miou", miou_sum / n},
          {"masked_frames", masked_frames},
          {"mean_masked_pixel_skip",
           masked_frames ? masked_pixel_skip_sum / static_cast<double>(masked_frames) : 0.0}};
}

json cmd_simulate(const RunConfig& cfg) {
  AnnotatedSequence seq = read_sequence(cfg.dataset);
  if (!seq.frames.empty() &&
      (seq.frames[0].rows != cfg.sensor.rows || seq.frames[0].cols != cfg.sensor.cols)) {
    throw ConfigError("simulate: dataset frames are " + std::to_string(seq.frames[0].rows) + "x" +
                      std::to_string(seq.frames[0].cols) + ", sensor is " +
                      std::to_string(cfg.sensor.rows) + "x" + std::to_string(cfg.sensor.cols));
  }

  const MaskMemories ones = MaskMemories::all_ones(cfg.sensor);
  int64_t px_read_total = 0;
  double masked_skip_sum = 0.0;
  size_t masked_frames = 0;

  for (size_t i = 0; i < seq.frames.size(); ++i) {
    json mask_doc;
    try {
      mask_doc = json::parse(read_file(cfg.masks_dir() / frame_file("mask", i, "json")));
    } catch (const json::exception& e) {
      throw FormatError("mask file for frame " + std::to_string(i) + ": " + e.what());
    }
    const bool masked = mask_doc.at("decision").get<std::string>() == "masked";

    MaskMemories mem = ones;
    SensorConfig frame_cfg = cfg.sensor;
    if (!masked || cfg.sensor.mode == SensorMode::standard) {
      frame_cfg.mode = SensorMode::standard;  // full reads convert every pixel
    } else {
      mem = load_masks(row_mask_from_json(mask_doc.at("row")),
                       mask_from_json(mask_doc.at("region")), cfg.sensor);
    }
    ReadResult result = read_frame(seq.frames[i], frame_cfg, mem);
    write_digital_frame(cfg.frames_dir() / frame_file("read", i, "pgm"), result.frame);
    atomic_write_file(cfg.ledgers_dir() / frame_file("ledger", i, "json"),
                      ledger_to_json(result.ledger).dump(2) + "\n");

    px_read_total += result.ledger.px_read;
    if (masked) {
      masked_skip_sum += 1.0 - static_cast<double>(result.ledger.px_read) /
                                   static_cast<double>(result.ledger.px_total());
      ++masked_frames;
    }
  }
  return {{"frames_dir", cfg.frames_dir().string()},
          {"ledgers_dir", cfg.ledgers_dir().string()},
          {"frames", seq.frames.size()},
          {"px_read_total", px_read_total},
          {"masked_frames", masked_frames},
          {"mean_masked_pixel_skip",
           masked_frames ? masked_skip_sum / static_cast<double>(masked_frames) : 0.0}};
}

json cmd_energy(const RunConfig& cfg) {
  const EnergyParams params = effective_energy_params(cfg);
  params.validate();

  std::vector<ReadoutLedger> ledgers;
  for (size_t i = 0;; ++i) {
    const std::filesystem::path path = cfg.ledgers_dir() / frame_file("ledger", i, "json");
    if (!std::filesystem::exists(path)) break;
    try {
      ledgers.push_back(ledger_from_json(json::parse(read_file(path))));
    } catch (const json::exception& e) {
      throw FormatError(path.string() + ": " + e.what());
    }
  }
  if (ledgers.empty()) {
    throw IoError("energy: no ledgers under " + cfg.ledgers_dir().string() + "; run simulate first");
  }

  const double e_base = static_cast<double>(ledgers[0].px_total()) * params.read_px();
  const double e_mem = params.e_mem_frac * e_base;
  const double e_mgn = params.e_mgn_frac * e_base;

  std::string frames_csv = "frame,decision,pixel_skip,E_F_mode\n";
  double mode_sum = 0.0, skip_sum = 0.0;
  size_t masked = 0;
  for (size_t i = 0; i < ledgers.size(); ++i) {
    const ReadoutLedger& led = ledgers[i];
    led.validate(led.rows_driven + led.rows_fully_gated, led.px_total());
    const bool is_full = (i % static_cast<size_t>(cfg.period)) == 0;
    const double e_mode = mode_energy(led, params, cfg.sensor.mode);
    const double skip =
        1.0 - static_cast<double>(led.px_read) / static_cast<double>(led.px_total());
    if (!is_full) {
      mode_sum += e_mode;
      skip_sum += skip;
      ++masked;
    }
    frames_csv += std::to_string(i) + "," + (is_full ? "full" : "masked") + "," +
                  format_double(skip) + "," + format_double(e_mode / e_base) + "\n";
  }
  atomic_write_file(cfg.out_dir / "energy_frames.csv", frames_csv);

  const double mean_mode = masked ? mode_sum / static_cast<double>(masked) : 0.0;
  const double mean_skip = masked ? skip_sum / static_cast<double>(masked) : 0.0;
  const double e_avg = average_energy(e_base, e_mem, mean_mode, cfg.period, e_mgn);
  const double baseline = e_base + e_mem + e_mgn;
  const double normalized = e_avg / baseline;

  std::string csv = "mode,s,P,E_F_mode,E_F,normalized,reduction_pct\n";
  csv += to_string(cfg.sensor.mode) + "," + format_double(mean_skip, "%.6g") + "," +
         std::to_string(cfg.period) + "," + format_double(mean_mode / e_base) + "," +
         format_double(e_avg / e_base) + "," + format_double(normalized) + "," +
         format_double((1.0 - normalized) * 100.0, "%.6g") + "\n";
  atomic_write_file(cfg.out_dir / "energy.csv", csv);

  return {{"report_csv", (cfg.out_dir / "energy.csv").string()},
          {"frames_csv", (cfg.out_dir / "energy_frames.csv").string()},
          {"frames", ledgers.size()},
          {"mode", to_string(cfg.sensor.mode)},
          {"P", cfg.period},
          {"mean_masked_pixel_skip", mean_skip},
          {"normalized_energy", normalized},
          {"reduction_pct", (1.0 - normalized) * 100.0}};
}

json cmd_sweep(const RunConfig& cfg) {
  const EnergyParams params = effective_energy_params(cfg);
  std::vector<SweepRow> rows = sweep(cfg.sweep_s, cfg.sweep_p, cfg.sweep_modes, params);
  atomic_write_file(cfg.out_dir / "sweep.csv", sweep_to_csv(rows));
  return {{"sweep_csv", (cfg.out_dir / "sweep.csv").string()}, {"rows", rows.size()}};
}

json cmd_calibrate(const RunConfig& cfg) {
  CalibrationResult result = calibrate(cfg.calib_targets, cfg.calib_free, cfg.energy);
  atomic_write_file(cfg.out_dir / "energy_params.json", result.params.to_json().dump(2) + "\n");

  json residuals = json::array();
  for (size_t i = 0; i < cfg.calib_targets.size(); ++i) {
    residuals.push_back({{"label", cfg.calib_targets[i].label},
                         {"target", cfg.calib_targets[i].target_reduction},
                         {"residual", result.residuals[i]}});
  }
  return {{"params_json", (cfg.out_dir / "energy_params.json").string()},
          {"alpha_row", result.params.alpha_row()},
          {"alpha_reg", result.params.alpha_reg()},
          {"e_mgn_frac", result.params.e_mgn_frac},
          {"rss", result.rss},
          {"iterations", result.iterations},
          {"targets", residuals}};
}

}  // namespace

json run_command(const std::string& verb, const json& config_json) {
  const auto t0 = std::chrono::steady_clock::now();
  RunConfig cfg = RunConfig::from_json(config_json);

  json body;
  if (verb == "gen") {
    body = cmd_gen(cfg);
  } else if (verb == "train") {
    body = cmd_train(cfg);
  } else if (verb == "mask") {
    body = cmd_mask(cfg);
  } else if (verb == "simulate") {
    body = cmd_simulate(cfg);
  } else if (verb == "energy") {
    body = cmd_energy(cfg);
  } else if (verb == "sweep") {
    body = cmd_sweep(cfg);
  } else if (verb == "calibrate") {
    body = cmd_calibrate(cfg);
  } else {
    throw ConfigError("unknown command '" + verb +
                      "' (expected gen, train, mask, simulate, energy, sweep or calibrate)");
  }

  json summary = {{"command", verb}, {"status", "ok"}, {"elapsed_s", elapsed_since(t0)}};
  summary.update(body);
  return summary;
}

}  // namespace cisskip
