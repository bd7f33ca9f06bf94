#include "cisskip.h"

#include <cstdlib>
#include <cstring>
#include <string>

#include "core/energy.hpp"
#include "core/masking.hpp"
#include "core/mgn.hpp"
#include "core/pipeline.hpp"
#include "core/sensor.hpp"

namespace {

thread_local std::string g_last_error;

csk_status status_from(const cisskip::Error& e) {
  g_last_error = e.what();
  switch (e.category()) {
    case cisskip::ErrorCategory::format: return CSK_ERR_FORMAT;
    case cisskip::ErrorCategory::numeric: return CSK_ERR_NUMERIC;
    default: return CSK_ERR_USAGE;
  }
}

// Runs fn, translating exceptions into status codes.
template <typename Fn>
csk_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return CSK_OK;
  } catch (const cisskip::Error& e) {
    return status_from(e);
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return CSK_ERR_USAGE;
  }
}

cisskip::MgnConfig to_core(const csk_mgn_config& c) {
  cisskip::MgnConfig out;
  out.input_h = c.input_h;
  out.input_w = c.input_w;
  out.channels = c.channels;
  out.patch = c.patch;
  out.embed_dim = c.embed_dim;
  out.heads = c.heads;
  out.ffn_dim = c.ffn_dim;
  return out;
}

cisskip::SensorMode mode_from(int32_t mode) {
  switch (mode) {
    case CSK_MODE_STANDARD: return cisskip::SensorMode::standard;
    case CSK_MODE_ROW_SKIP: return cisskip::SensorMode::row_skip;
    case CSK_MODE_REGION_SKIP: return cisskip::SensorMode::region_skip;
    default: throw cisskip::ConfigError("unknown mode " + std::to_string(mode));
  }
}

cisskip::EnergyParams params_from(const csk_energy_params& p) {
  cisskip::EnergyParams out;
  out.e_sense_r = p.e_sense_r;
  out.e_adc_r = p.e_adc_r;
  out.e_sense_s_row = p.e_sense_s_row;
  out.e_adc_s_row = p.e_adc_s_row;
  out.e_sense_s_reg = p.e_sense_s_reg;
  out.e_adc_s_reg = p.e_adc_s_reg;
  out.e_mem_frac = p.e_mem_frac;
  out.e_com_frac = p.e_com_frac;
  out.e_mgn_frac = p.e_mgn_frac;
  out.validate();
  return out;
}

cisskip::ReadoutLedger ledger_from(const csk_ledger& l) {
  cisskip::ReadoutLedger out;
  out.rows_driven = l.n_rows_driven;
  out.rows_ramp_active = l.n_rows_ramp_active;
  out.rows_fully_gated = l.n_rows_fully_gated;
  out.px_read = l.n_px_read;
  out.px_skip_in_active_row = l.n_px_skip_in_active_row;
  out.px_skip_in_gated_row = l.n_px_skip_in_gated_row;
  out.adc_clock_cycles = l.n_adc_clock_cycles;
  return out;
}

void require(bool ok, const char* msg) {
  if (!ok) throw cisskip::ConfigError(msg);
}

}  // namespace

struct csk_mgn {
  cisskip::MgnWeights weights;
};

extern "C" {

const char* csk_version(void) { return "cisskip 1.0.0"; }

const char* csk_last_error(void) { return g_last_error.c_str(); }

csk_status csk_run(const char* verb, const char* config_json, char** summary_json) {
  return guarded([&] {
    require(verb != nullptr, "csk_run: verb is null");
    nlohmann::json config;
    if (config_json == nullptr || config_json[0] == '\0') {
      config = nlohmann::json::object();
    } else {
      try {
        config = nlohmann::json::parse(config_json);
      } catch (const nlohmann::json::exception& e) {
        throw cisskip::FormatError(std::string("config json: ") + e.what());
      }
    }
    nlohmann::json summary = cisskip::run_command(verb, config);
    if (summary_json) {
      std::string text = summary.dump();
      *summary_json = static_cast<char*>(std::malloc(text.size() + 1));
      if (!*summary_json) throw std::bad_alloc();
      std::memcpy(*summary_json, text.c_str(), text.size() + 1);
    }
  });
}

void csk_string_free(char* s) { std::free(s); }

csk_status csk_mgn_create(const csk_mgn_config* config, uint64_t seed, csk_mgn** out) {
  return guarded([&] {
    require(config && out, "csk_mgn_create: null argument");
    auto core = to_core(*config);
    core.validate();
    *out = new csk_mgn{cisskip::init_weights(core, seed)};
  });
}

csk_status csk_mgn_load(const char* path, csk_mgn** out) {
  return guarded([&] {
    require(path && out, "csk_mgn_load: null argument");
    *out = new csk_mgn{cisskip::load_weights(path)};
  });
}

csk_status csk_mgn_save(const csk_mgn* mgn, const char* path) {
  return guarded([&] {
    require(mgn && path, "csk_mgn_save: null argument");
    cisskip::save_weights(mgn->weights, path);
  });
}

void csk_mgn_free(csk_mgn* mgn) { delete mgn; }

csk_status csk_mgn_get_config(const csk_mgn* mgn, csk_mgn_config* out) {
  return guarded([&] {
    require(mgn && out, "csk_mgn_get_config: null argument");
    const cisskip::MgnConfig& c = mgn->weights.config;
    *out = {c.input_h, c.input_w, c.channels, c.patch, c.embed_dim, c.heads, c.ffn_dim};
  });
}

int64_t csk_mgn_param_count(const csk_mgn* mgn) {
  return mgn ? cisskip::count_params(mgn->weights.config) : 0;
}

int64_t csk_mgn_flop_estimate(const csk_mgn* mgn) {
  return mgn ? cisskip::estimate_flops(mgn->weights.config) : 0;
}

csk_status csk_mgn_score(const csk_mgn* mgn, const double* image, int64_t image_len,
                         double* scores, int64_t scores_len) {
  return guarded([&] {
    require(mgn && image && scores, "csk_mgn_score: null argument");
    const cisskip::MgnConfig& cfg = mgn->weights.config;
    const int64_t plane = static_cast<int64_t>(cfg.input_h) * cfg.input_w;
    if (image_len != plane * cfg.channels) {
      throw cisskip::ShapeError("csk_mgn_score: image length " + std::to_string(image_len) +
                                ", expected " + std::to_string(plane * cfg.channels));
    }
    if (scores_len != cfg.n_patches()) {
      throw cisskip::ShapeError("csk_mgn_score: scores length " + std::to_string(scores_len) +
                                ", expected " + std::to_string(cfg.n_patches()));
    }
    std::vector<cisskip::Matrix> channels;
    for (int c = 0; c < cfg.channels; ++c) {
      channels.emplace_back(cfg.input_h, cfg.input_w,
                            std::vector<double>(image + c * plane, image + (c + 1) * plane));
    }
    cisskip::MgnOutput out = cisskip::mgn_forward(mgn->weights, channels);
    std::memcpy(scores, out.scores.values.data(), sizeof(double) * out.scores.values.size());
  });
}

csk_status csk_region_mask(const double* scores, int32_t gh, int32_t gw, double t_reg,
                           uint8_t* bits) {
  return guarded([&] {
    require(scores && bits && gh > 0 && gw > 0, "csk_region_mask: bad arguments");
    cisskip::ScoreGrid grid(gh, gw);
    grid.values.assign(scores, scores + static_cast<size_t>(gh) * gw);
    cisskip::RegionMask mask = cisskip::region_mask(grid, t_reg);
    std::memcpy(bits, mask.bits.data(), mask.bits.size());
  });
}

csk_status csk_row_activity(const uint8_t* region_bits, int32_t gh, int32_t gw, double t_row,
                            uint8_t* row_bits) {
  return guarded([&] {
    require(region_bits && row_bits && gh > 0 && gw > 0, "csk_row_activity: bad arguments");
    cisskip::RegionMask mask(gh, gw);
    mask.bits.assign(region_bits, region_bits + static_cast<size_t>(gh) * gw);
    std::vector<uint8_t> rows = cisskip::region_row_activity(mask, t_row);
    std::memcpy(row_bits, rows.data(), rows.size());
  });
}

csk_status csk_map_to_sensor(const uint8_t* bits, int32_t gh, int32_t gw, int32_t sensor_rows,
                             int32_t sensor_cols, int32_t p_s, uint8_t* out_bits) {
  return guarded([&] {
    require(bits && out_bits, "csk_map_to_sensor: null argument");
    cisskip::RegionMask mask(gh, gw);
    mask.bits.assign(bits, bits + static_cast<size_t>(gh) * gw);
    cisskip::RegionMask mapped = cisskip::map_to_sensor(mask, sensor_rows, sensor_cols, p_s);
    std::memcpy(out_bits, mapped.bits.data(), mapped.bits.size());
  });
}

csk_status csk_miou(const uint8_t* pred, const uint8_t* gt, int64_t n, double* out) {
  return guarded([&] {
    require(pred && gt && out && n > 0, "csk_miou: bad arguments");
    cisskip::BinaryGrid a(1, static_cast<int>(n)), b(1, static_cast<int>(n));
    a.bits.assign(pred, pred + n);
    b.bits.assign(gt, gt + n);
    *out = cisskip::miou(a, b);
  });
}

csk_status csk_sensor_read(const csk_sensor_config* config, const double* frame,
                           const uint8_t* row_mask, const uint8_t* region_mask, uint16_t* codes,
                           csk_ledger* ledger) {
  return guarded([&] {
    require(config && frame && codes, "csk_sensor_read: null argument");
    cisskip::SensorConfig cfg;
    cfg.rows = config->rows;
    cfg.cols = config->cols;
    cfg.bit_depth = config->bit_depth;
    cfg.patch = config->patch;
    cfg.mode = mode_from(config->mode);
    cfg.validate();

    cisskip::Frame f(cfg.rows, cfg.cols);
    f.px.assign(frame, frame + cfg.px_total());

    cisskip::MaskMemories mem = cisskip::MaskMemories::all_ones(cfg);
    if (row_mask) mem.row_mem.assign(row_mask, row_mask + cfg.rows);
    if (region_mask) {
      mem.region_mem.bits.assign(
          region_mask, region_mask + static_cast<size_t>(cfg.region_rows()) * cfg.region_cols());
    }

    cisskip::ReadResult result = cisskip::read_frame(f, cfg, mem);
    std::memcpy(codes, result.frame.codes.data(),
                sizeof(uint16_t) * result.frame.codes.size());
    if (ledger) {
      *ledger = {result.ledger.rows_driven,      result.ledger.rows_ramp_active,
                 result.ledger.rows_fully_gated, result.ledger.px_read,
                 result.ledger.px_skip_in_active_row, result.ledger.px_skip_in_gated_row,
                 result.ledger.adc_clock_cycles};
    }
  });
}

void csk_energy_params_default(csk_energy_params* out) {
  if (!out) return;
  cisskip::EnergyParams p;
  *out = {p.e_sense_r,     p.e_adc_r,      p.e_sense_s_row, p.e_adc_s_row, p.e_sense_s_reg,
          p.e_adc_s_reg,   p.e_mem_frac,   p.e_com_frac,    p.e_mgn_frac};
}

csk_status csk_mode_energy(const csk_ledger* ledger, const csk_energy_params* params,
                           int32_t mode, double* out) {
  return guarded([&] {
    require(ledger && params && out, "csk_mode_energy: null argument");
    *out = cisskip::mode_energy(ledger_from(*ledger), params_from(*params), mode_from(mode));
  });
}

csk_status csk_average_energy(double e_base, double e_mem, double e_mode, int32_t period,
                              double e_mgn, double* out) {
  return guarded([&] {
    require(out != nullptr, "csk_average_energy: null output");
    *out = cisskip::average_energy(e_base, e_mem, e_mode, period, e_mgn);
  });
}

csk_status csk_normalized_energy(double skip_ratio, int32_t mode, int32_t period,
                                 const csk_energy_params* params, double* out) {
  return guarded([&] {
    require(params && out, "csk_normalized_energy: null argument");
    *out = cisskip::normalized_energy(skip_ratio, mode_from(mode), period, params_from(*params));
  });
}

}  // extern "C"
