#pragma once

#include <vector>

#include "json.hpp"

#include "core/grids.hpp"

namespace cisskip {

// Region bit = 1 iff score strictly exceeds t_reg. t_reg must lie in (0, 1).
RegionMask region_mask(const ScoreGrid& scores, double t_reg);

// Region-grid row activity: a region row is active iff the fraction of
// active regions in it strictly exceeds t_row (in [0, 1)).
std::vector<uint8_t> region_row_activity(const RegionMask& mask, double t_row);

// Expands region-row bits to sensor rows: each active region row turns on
// p_s consecutive sensor rows.
RowMask expand_region_rows(const std::vector<uint8_t>& region_rows, int p_s);

// region_row_activity followed by expand_region_rows.
RowMask row_mask(const RegionMask& mask, double t_row, int p_s);

// Nearest-neighbor upsampling of a mask grid onto the sensor's region grid
// (sensor_rows/p_s x sensor_cols/p_s): a sensor region is active iff its
// center falls in an active source cell.
RegionMask map_to_sensor(const RegionMask& mask, int sensor_rows, int sensor_cols, int p_s);

// Cell = 1 iff its pixel footprint overlaps any box with nonzero area.
// Grid cells tile the image exactly, so img_h % gh == 0 and img_w % gw == 0.
// Zero-area boxes are ignored.
BinaryGrid labels_from_boxes(const std::vector<Box>& boxes, int gh, int gw, int img_h, int img_w);

// Two-class mean IoU over {active, inactive}; a class with empty union
// contributes IoU 1.
double miou(const BinaryGrid& pred, const BinaryGrid& gt);

struct SkipRatios {
  double pixel_skip = 0.0;  // skipped pixels / (r * c)
  double row_skip = 0.0;    // skipped sensor rows / r
};

// A pixel is read iff its row bit is 1 AND its region bit is 1. Pass an
// all-ones region mask for row-skip mode.
SkipRatios skip_ratios(const RegionMask& sensor_regions, const RowMask& rows, int r, int c,
                       int p_s);

enum class ReadDecision { full_read, masked_read };

// Frame scheduler: frame indices congruent to 0 mod P are full reads (the
// mask is recomputed there); the following P-1 frames reuse the stored mask.
class Schedule {
 public:
  explicit Schedule(int period, long start_frame = 0);

  // Decision for the current frame index; advances the counter.
  ReadDecision next();

  long frame_index() const { return frame_; }
  int period() const { return period_; }

 private:
  int period_;
  long frame_;
  bool mask_ready_ = false;
};

// JSON form: {"rows": gh, "cols": gw, "bits": [...]} with row-major 0/1.
nlohmann::json mask_to_json(const BinaryGrid& mask);
BinaryGrid mask_from_json(const nlohmann::json& j);
nlohmann::json row_mask_to_json(const RowMask& mask);
RowMask row_mask_from_json(const nlohmann::json& j);

}  // namespace cisskip
