#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "core/grids.hpp"

namespace cisskip {

enum class SensorMode { standard, row_skip, region_skip };

std::string to_string(SensorMode mode);
SensorMode sensor_mode_from_string(const std::string& s);

struct SensorConfig {
  int rows = 400;
  int cols = 640;
  int bit_depth = 10;  // ADC precision N; 8 or 10
  int patch = 16;      // region patch side p_s
  SensorMode mode = SensorMode::standard;

  int region_rows() const { return rows / patch; }
  int region_cols() const { return cols / patch; }
  int64_t px_total() const { return static_cast<int64_t>(rows) * cols; }
  void validate() const;
};

// Analog pixel grid, values in [0, 1) normalized full-scale.
struct Frame {
  int rows = 0, cols = 0;
  std::vector<double> px;

  Frame() = default;
  Frame(int rows_, int cols_, double fill = 0.0)
      : rows(rows_), cols(cols_), px(static_cast<size_t>(rows_) * cols_, fill) {}

  double at(int r, int c) const { return px[static_cast<size_t>(r) * cols + c]; }
  double& at(int r, int c) { return px[static_cast<size_t>(r) * cols + c]; }
};

// N-bit conversion results; skipped pixels hold exactly 0.
struct DigitalFrame {
  int rows = 0, cols = 0;
  int bit_depth = 10;
  std::vector<uint16_t> codes;

  DigitalFrame() = default;
  DigitalFrame(int rows_, int cols_, int bit_depth_)
      : rows(rows_),
        cols(cols_),
        bit_depth(bit_depth_),
        codes(static_cast<size_t>(rows_) * cols_, 0) {}

  uint16_t at(int r, int c) const { return codes[static_cast<size_t>(r) * cols + c]; }
  uint16_t& at(int r, int c) { return codes[static_cast<size_t>(r) * cols + c]; }
  bool operator==(const DigitalFrame&) const = default;
};

// Per-frame activation counts feeding the energy model.
struct ReadoutLedger {
  int64_t rows_driven = 0;
  int64_t rows_ramp_active = 0;
  int64_t rows_fully_gated = 0;
  int64_t px_read = 0;
  int64_t px_skip_in_active_row = 0;
  int64_t px_skip_in_gated_row = 0;
  int64_t adc_clock_cycles = 0;

  int64_t px_total() const { return px_read + px_skip_in_active_row + px_skip_in_gated_row; }
  // Partition invariants: pixel classes sum to r*c, row classes sum to r.
  void validate(int64_t rows, int64_t px) const;
};

// Row and region mask memories as embedded next to the pixel array.
// Total footprint is r + (r/p_s)*(c/p_s) bits.
struct MaskMemories {
  std::vector<uint8_t> row_mem;  // 1 x r
  BinaryGrid region_mem;         // (r/p_s) x (c/p_s)

  static MaskMemories all_ones(const SensorConfig& config);
  size_t footprint_bits() const { return row_mem.size() + region_mem.bits.size(); }
  size_t footprint_bytes() const { return (footprint_bits() + 7) / 8; }
  bool is_all_ones() const;
};

// Validates dimensions and stores the masks; masks must already live on the
// sensor grid (use map_to_sensor first).
MaskMemories load_masks(const RowMask& rows, const RegionMask& regions,
                        const SensorConfig& config);

// Single-slope conversion: code = floor(v * 2^N); the ramp crosses after
// `code` counter cycles, which are charged to the ledger when given.
uint16_t adc_convert(double v, int bit_depth, ReadoutLedger* ledger = nullptr);

struct ReadResult {
  DigitalFrame frame;
  ReadoutLedger ledger;
};

// One frame readout under the configured mode. Pure given its arguments.
ReadResult read_frame(const Frame& frame, const SensorConfig& config, const MaskMemories& masks);

nlohmann::json ledger_to_json(const ReadoutLedger& ledger);
ReadoutLedger ledger_from_json(const nlohmann::json& j);

// PGM export with maxval 2^N - 1 (two-byte big-endian samples for N = 10).
void write_digital_frame(const std::filesystem::path& path, const DigitalFrame& frame);
DigitalFrame read_digital_frame(const std::filesystem::path& path);

}  // namespace cisskip
