#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/error.hpp"

namespace cisskip {

// Axis-aligned pixel rectangle: covers columns [x, x+w) and rows [y, y+h).
struct Box {
  int x = 0, y = 0, w = 0, h = 0;
  bool operator==(const Box&) const = default;
};

// Per-cell sigmoid scores in [0, 1] on the patch grid.
struct ScoreGrid {
  int gh = 0, gw = 0;
  std::vector<double> values;  // row-major, gh * gw

  ScoreGrid() = default;
  ScoreGrid(int gh_, int gw_) : gh(gh_), gw(gw_), values(static_cast<size_t>(gh_) * gw_, 0.0) {}

  double at(int i, int j) const { return values[static_cast<size_t>(i) * gw + j]; }
  double& at(int i, int j) { return values[static_cast<size_t>(i) * gw + j]; }
};

// Row-major binary grid; used for region masks and ground-truth label grids.
struct BinaryGrid {
  int gh = 0, gw = 0;
  std::vector<uint8_t> bits;  // 0 or 1

  BinaryGrid() = default;
  BinaryGrid(int gh_, int gw_, uint8_t fill = 0)
      : gh(gh_), gw(gw_), bits(static_cast<size_t>(gh_) * gw_, fill) {}

  uint8_t at(int i, int j) const { return bits[static_cast<size_t>(i) * gw + j]; }
  uint8_t& at(int i, int j) { return bits[static_cast<size_t>(i) * gw + j]; }
  size_t count_ones() const {
    size_t n = 0;
    for (uint8_t b : bits) n += b;
    return n;
  }
  std::string shape_str() const {
    return "[" + std::to_string(gh) + "x" + std::to_string(gw) + "]";
  }
  bool operator==(const BinaryGrid&) const = default;
};

using RegionMask = BinaryGrid;

// One bit per sensor row; 1 = drive and read the row.
struct RowMask {
  int rows = 0;
  std::vector<uint8_t> bits;

  RowMask() = default;
  explicit RowMask(int rows_, uint8_t fill = 0)
      : rows(rows_), bits(static_cast<size_t>(rows_), fill) {}

  size_t count_ones() const {
    size_t n = 0;
    for (uint8_t b : bits) n += b;
    return n;
  }
  bool operator==(const RowMask&) const = default;
};

}  // namespace cisskip
