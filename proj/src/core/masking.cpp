#include "core/masking.hpp"

#include <algorithm>

namespace cisskip {

RegionMask region_mask(const ScoreGrid& scores, double t_reg) {
  if (!(t_reg > 0.0 && t_reg < 1.0)) {
    throw RangeError("region_mask: t_reg " + std::to_string(t_reg) + " outside (0,1)");
  }
  RegionMask mask(scores.gh, scores.gw);
  for (size_t i = 0; i < scores.values.size(); ++i) {
    mask.bits[i] = scores.values[i] > t_reg ? 1 : 0;
  }
  return mask;
}

std::vector<uint8_t> region_row_activity(const RegionMask& mask, double t_row) {
  if (!(t_row >= 0.0 && t_row < 1.0)) {
    throw RangeError("region_row_activity: t_row " + std::to_string(t_row) + " outside [0,1)");
  }
  std::vector<uint8_t> rows(mask.gh, 0);
  for (int i = 0; i < mask.gh; ++i) {
    int active = 0;
    for (int j = 0; j < mask.gw; ++j) active += mask.at(i, j);
    double fraction = static_cast<double>(active) / mask.gw;
    rows[i] = fraction > t_row ? 1 : 0;  // strict: a row exactly at t_row is skipped
  }
  return rows;
}

RowMask expand_region_rows(const std::vector<uint8_t>& region_rows, int p_s) {
  if (p_s < 1) throw RangeError("expand_region_rows: p_s must be >= 1");
  RowMask out(static_cast<int>(region_rows.size()) * p_s);
  for (size_t i = 0; i < region_rows.size(); ++i) {
    for (int k = 0; k < p_s; ++k) out.bits[i * p_s + k] = region_rows[i];
  }
  return out;
}

RowMask row_mask(const RegionMask& mask, double t_row, int p_s) {
  return expand_region_rows(region_row_activity(mask, t_row), p_s);
}

RegionMask map_to_sensor(const RegionMask& mask, int sensor_rows, int sensor_cols, int p_s) {
  if (p_s < 1 || sensor_rows % p_s != 0 || sensor_cols % p_s != 0) {
    throw ShapeError("map_to_sensor: sensor " + std::to_string(sensor_rows) + "x" +
                     std::to_string(sensor_cols) + " not divisible by patch " +
                     std::to_string(p_s));
  }
  if (mask.gh < 1 || mask.gw < 1) throw ShapeError("map_to_sensor: empty source mask");
  const int sgh = sensor_rows / p_s;
  const int sgw = sensor_cols / p_s;
  RegionMask out(sgh, sgw);
  for (int i = 0; i < sgh; ++i) {
    int src_i = std::min(static_cast<int>((i + 0.5) / sgh * mask.gh), mask.gh - 1);
    for (int j = 0; j < sgw; ++j) {
      int src_j = std::min(static_cast<int>((j + 0.5) / sgw * mask.gw), mask.gw - 1);
      out.at(i, j) = mask.at(src_i, src_j);
    }
  }
  return out;
}

BinaryGrid labels_from_boxes(const std::vector<Box>& boxes, int gh, int gw, int img_h,
                             int img_w) {
  if (gh < 1 || gw < 1 || img_h % gh != 0 || img_w % gw != 0) {
    throw ShapeError("labels_from_boxes: image " + std::to_string(img_h) + "x" +
                     std::to_string(img_w) + " is not tiled by grid " + std::to_string(gh) + "x" +
                     std::to_string(gw));
  }
  const int ph = img_h / gh;
  const int pw = img_w / gw;
  BinaryGrid grid(gh, gw);
  for (const Box& b : boxes) {
    if (b.w <= 0 || b.h <= 0) continue;  // degenerate boxes are ignored
    if (b.x < 0 || b.y < 0 || b.x + b.w > img_w || b.y + b.h > img_h) {
      throw RangeError("labels_from_boxes: box exceeds image bounds");
    }
    int ci0 = b.y / ph;
    int ci1 = (b.y + b.h - 1) / ph;
    int cj0 = b.x / pw;
    int cj1 = (b.x + b.w - 1) / pw;
    for (int i = ci0; i <= ci1; ++i)
      for (int j = cj0; j <= cj1; ++j) grid.at(i, j) = 1;
  }
  return grid;
}

double miou(const BinaryGrid& pred, const BinaryGrid& gt) {
  if (pred.gh != gt.gh || pred.gw != gt.gw) {
    throw ShapeError("miou: shapes differ, " + pred.shape_str() + " vs " + gt.shape_str());
  }
  size_t inter1 = 0, union1 = 0, inter0 = 0, union0 = 0;
  for (size_t i = 0; i < pred.bits.size(); ++i) {
    bool p = pred.bits[i] != 0;
    bool g = gt.bits[i] != 0;
    inter1 += p && g;
    union1 += p || g;
    inter0 += !p && !g;
    union0 += !p || !g;
  }
  double iou1 = union1 == 0 ? 1.0 : static_cast<double>(inter1) / union1;
  double iou0 = union0 == 0 ? 1.0 : static_cast<double>(inter0) / union0;
  return 0.5 * (iou1 + iou0);
}

SkipRatios skip_ratios(const RegionMask& sensor_regions, const RowMask& rows, int r, int c,
                       int p_s) {
  if (rows.rows != r || sensor_regions.gh != r / p_s || sensor_regions.gw != c / p_s ||
      r % p_s != 0 || c % p_s != 0) {
    throw ShapeError("skip_ratios: masks do not match sensor " + std::to_string(r) + "x" +
                     std::to_string(c) + " with patch " + std::to_string(p_s));
  }
  int64_t read_px = 0;
  int64_t active_rows = 0;
  for (int row = 0; row < r; ++row) {
    if (!rows.bits[row]) continue;
    ++active_rows;
    for (int col = 0; col < c; ++col) {
      if (sensor_regions.at(row / p_s, col / p_s)) ++read_px;
    }
  }
  SkipRatios out;
  out.pixel_skip = 1.0 - static_cast<double>(read_px) / (static_cast<double>(r) * c);
  out.row_skip = 1.0 - static_cast<double>(active_rows) / r;
  return out;
}

Schedule::Schedule(int period, long start_frame) : period_(period), frame_(start_frame) {
  if (period < 1) throw RangeError("schedule: period must be >= 1");
  if (start_frame < 0) throw RangeError("schedule: start frame must be >= 0");
}

ReadDecision Schedule::next() {
  ReadDecision d;
  if (frame_ % period_ == 0) {
    d = ReadDecision::full_read;
    mask_ready_ = true;
  } else {
    if (!mask_ready_) {
      throw StateError("schedule: masked read at frame " + std::to_string(frame_) +
                       " before any full read");
    }
    d = ReadDecision::masked_read;
  }
  ++frame_;
  return d;
}

nlohmann::json mask_to_json(const BinaryGrid& mask) {
  return {{"rows", mask.gh}, {"cols", mask.gw}, {"bits", mask.bits}};
}

BinaryGrid mask_from_json(const nlohmann::json& j) {
  try {
    BinaryGrid mask(j.at("rows").get<int>(), j.at("cols").get<int>());
    auto bits = j.at("bits").get<std::vector<int>>();
    if (bits.size() != mask.bits.size()) {
      throw FormatError("mask json: bit count does not match dimensions");
    }
    for (size_t i = 0; i < bits.size(); ++i) {
      if (bits[i] != 0 && bits[i] != 1) throw FormatError("mask json: bits must be 0/1");
      mask.bits[i] = static_cast<uint8_t>(bits[i]);
    }
    return mask;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("mask json: ") + e.what());
  }
}

nlohmann::json row_mask_to_json(const RowMask& mask) {
  return {{"rows", mask.rows}, {"bits", mask.bits}};
}

RowMask row_mask_from_json(const nlohmann::json& j) {
  try {
    RowMask mask(j.at("rows").get<int>());
    auto bits = j.at("bits").get<std::vector<int>>();
    if (bits.size() != mask.bits.size()) {
      throw FormatError("row mask json: bit count does not match rows");
    }
    for (size_t i = 0; i < bits.size(); ++i) {
      if (bits[i] != 0 && bits[i] != 1) throw FormatError("row mask json: bits must be 0/1");
      mask.bits[i] = static_cast<uint8_t>(bits[i]);
    }
    return mask;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("row mask json: ") + e.what());
  }
}

}  // namespace cisskip
