#include "core/sensor.hpp"

#include <cmath>

#include "core/pgm.hpp"

namespace cisskip {

std::string to_string(SensorMode mode) {
  switch (mode) {
    case SensorMode::standard: return "standard";
    case SensorMode::row_skip: return "row";
    case SensorMode::region_skip: return "region";
  }
  return "?";
}

SensorMode sensor_mode_from_string(const std::string& s) {
  if (s == "standard") return SensorMode::standard;
  if (s == "row" || s == "row_skip") return SensorMode::row_skip;
  if (s == "region" || s == "region_skip") return SensorMode::region_skip;
  throw ConfigError("unknown sensor mode '" + s + "'");
}

void SensorConfig::validate() const {
  if (rows < 1 || cols < 1) throw ConfigError("sensor: non-positive dimensions");
  if (patch < 1 || rows % patch != 0 || cols % patch != 0) {
    throw ConfigError("sensor: " + std::to_string(rows) + "x" + std::to_string(cols) +
                      " not divisible by patch " + std::to_string(patch));
  }
  if (bit_depth != 8 && bit_depth != 10) {
    throw ConfigError("sensor: bit depth must be 8 or 10, got " + std::to_string(bit_depth));
  }
}

void ReadoutLedger::validate(int64_t rows, int64_t px) const {
  if (px_read + px_skip_in_active_row + px_skip_in_gated_row != px) {
    throw StateError("ledger: pixel counters do not partition the frame");
  }
  if (rows_driven + rows_fully_gated != rows) {
    throw StateError("ledger: row counters do not partition the rows");
  }
}

MaskMemories MaskMemories::all_ones(const SensorConfig& config) {
  config.validate();
  MaskMemories mem;
  mem.row_mem.assign(static_cast<size_t>(config.rows), 1);
  mem.region_mem = BinaryGrid(config.region_rows(), config.region_cols(), 1);
  return mem;
}

bool MaskMemories::is_all_ones() const {
  for (uint8_t b : row_mem)
    if (!b) return false;
  for (uint8_t b : region_mem.bits)
    if (!b) return false;
  return true;
}

MaskMemories load_masks(const RowMask& rows, const RegionMask& regions,
                        const SensorConfig& config) {
  config.validate();
  if (rows.rows != config.rows) {
    throw ShapeError("load_masks: row mask has " + std::to_string(rows.rows) +
                     " rows, sensor has " + std::to_string(config.rows));
  }
  if (regions.gh != config.region_rows() || regions.gw != config.region_cols()) {
    throw ShapeError("load_masks: region mask " + regions.shape_str() +
                     " does not match sensor grid [" + std::to_string(config.region_rows()) +
                     "x" + std::to_string(config.region_cols()) + "]");
  }
  MaskMemories mem;
  mem.row_mem = rows.bits;
  mem.region_mem = regions;
  return mem;
}

uint16_t adc_convert(double v, int bit_depth, ReadoutLedger* ledger) {
  if (!(v >= 0.0 && v < 1.0)) {
    throw RangeError("adc_convert: value " + std::to_string(v) + " outside [0,1)");
  }
  auto code = static_cast<uint16_t>(std::floor(v * static_cast<double>(1 << bit_depth)));
  if (ledger) ledger->adc_clock_cycles += code;
  return code;
}

namespace {

// Reads every column of one row through the column-parallel ADCs.
void read_full_row(const Frame& frame, int row, int bit_depth, DigitalFrame& out,
                   ReadoutLedger& ledger) {
  ledger.rows_driven += 1;
  ledger.rows_ramp_active += 1;
  for (int col = 0; col < frame.cols; ++col) {
    out.at(row, col) = adc_convert(frame.at(row, col), bit_depth, &ledger);
    ledger.px_read += 1;
  }
}

// Row driver, ramp, comparators and latches all gated; latches reset so the
// whole row transmits zeros.
void gate_full_row(int cols, ReadoutLedger& ledger) {
  ledger.rows_fully_gated += 1;
  ledger.px_skip_in_gated_row += cols;
}

}  // namespace

ReadResult read_frame(const Frame& frame, const SensorConfig& config, const MaskMemories& masks) {
  config.validate();
  if (frame.rows != config.rows || frame.cols != config.cols) {
    throw ShapeError("read_frame: frame " + std::to_string(frame.rows) + "x" +
                     std::to_string(frame.cols) + " does not match sensor " +
                     std::to_string(config.rows) + "x" + std::to_string(config.cols));
  }
  if (masks.row_mem.size() != static_cast<size_t>(config.rows) ||
      masks.region_mem.gh != config.region_rows() ||
      masks.region_mem.gw != config.region_cols()) {
    throw ShapeError("read_frame: mask memories do not match sensor dimensions");
  }

  ReadResult result;
  result.frame = DigitalFrame(config.rows, config.cols, config.bit_depth);
  ReadoutLedger& ledger = result.ledger;

  switch (config.mode) {
    case SensorMode::standard: {
      if (!masks.is_all_ones()) {
        throw ConfigError("standard mode requires both mask memories all-ones");
      }
      for (int row = 0; row < config.rows; ++row) {
        read_full_row(frame, row, config.bit_depth, result.frame, ledger);
      }
      break;
    }
    case SensorMode::row_skip: {
      for (int row = 0; row < config.rows; ++row) {
        if (masks.row_mem[row]) {
          read_full_row(frame, row, config.bit_depth, result.frame, ledger);
        } else {
          gate_full_row(config.cols, ledger);
        }
      }
      break;
    }
    case SensorMode::region_skip: {
      for (int row = 0; row < config.rows; ++row) {
        const int region_row = row / config.patch;
        // A sensor row is active iff any region overlapping it is active;
        // inactive rows are gated exactly like row-skip rows.
        bool row_active = false;
        for (int j = 0; j < masks.region_mem.gw && !row_active; ++j) {
          row_active = masks.region_mem.at(region_row, j) != 0;
        }
        if (!row_active) {
          gate_full_row(config.cols, ledger);
          continue;
        }
        ledger.rows_driven += 1;
        ledger.rows_ramp_active += 1;  // ramp and counter stay on for the row
        for (int col = 0; col < config.cols; ++col) {
          if (masks.region_mem.at(region_row, col / config.patch)) {
            result.frame.at(row, col) = adc_convert(frame.at(row, col), config.bit_depth, &ledger);
            ledger.px_read += 1;
          } else {
            ledger.px_skip_in_active_row += 1;  // comparator+latch gated, 0 transmitted
          }
        }
      }
      break;
    }
  }

  ledger.validate(config.rows, config.px_total());
  return result;
}

nlohmann::json ledger_to_json(const ReadoutLedger& ledger) {
  return {{"n_rows_driven", ledger.rows_driven},
          {"n_rows_ramp_active", ledger.rows_ramp_active},
          {"n_rows_fully_gated", ledger.rows_fully_gated},
          {"n_px_read", ledger.px_read},
          {"n_px_skip_in_active_row", ledger.px_skip_in_active_row},
          {"n_px_skip_in_gated_row", ledger.px_skip_in_gated_row},
          {"n_adc_clock_cycles", ledger.adc_clock_cycles}};
}

ReadoutLedger ledger_from_json(const nlohmann::json& j) {
  try {
    ReadoutLedger ledger;
    ledger.rows_driven = j.at("n_rows_driven").get<int64_t>();
    ledger.rows_ramp_active = j.at("n_rows_ramp_active").get<int64_t>();
    ledger.rows_fully_gated = j.at("n_rows_fully_gated").get<int64_t>();
    ledger.px_read = j.at("n_px_read").get<int64_t>();
    ledger.px_skip_in_active_row = j.at("n_px_skip_in_active_row").get<int64_t>();
    ledger.px_skip_in_gated_row = j.at("n_px_skip_in_gated_row").get<int64_t>();
    ledger.adc_clock_cycles = j.at("n_adc_clock_cycles").get<int64_t>();
    return ledger;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("ledger json: ") + e.what());
  }
}

void write_digital_frame(const std::filesystem::path& path, const DigitalFrame& frame) {
  PgmImage img;
  img.rows = frame.rows;
  img.cols = frame.cols;
  img.maxval = (1 << frame.bit_depth) - 1;
  img.samples = frame.codes;
  pgm_write(path, img);
}

DigitalFrame read_digital_frame(const std::filesystem::path& path) {
  PgmImage img = pgm_read(path);
  DigitalFrame frame(img.rows, img.cols, img.maxval == 255 ? 8 : 10);
  if (img.maxval != 255 && img.maxval != 1023) {
    throw FormatError(path.filename().string() + ": maxval " + std::to_string(img.maxval) +
                      " is not an 8- or 10-bit frame");
  }
  frame.codes = img.samples;
  return frame;
}

}  // namespace cisskip
