#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "core/grids.hpp"
#include "core/sensor.hpp"

namespace cisskip {

// Synthetic moving-rectangle scenes with exact bounding-box ground truth.
struct SceneSpec {
  int rows = 64;
  int cols = 64;
  int n_objects = 2;
  int min_size = 10;       // object side, pixels
  int max_size = 22;
  double min_speed = 0.5;  // pixels per frame
  double max_speed = 2.5;
  double background = 0.15;     // base level, normalized
  double texture_amp = 0.05;    // static per-pixel texture amplitude
  int frames = 200;
  uint64_t seed = 1;

  void validate() const;
};

struct AnnotatedSequence {
  std::vector<Frame> frames;
  std::vector<std::vector<Box>> boxes;  // per frame, one box per object
};

// Rectangles of elevated intensity (in [0.6, 0.95]) over a low-amplitude
// textured background, moving linearly with boundary reflection. The
// reported boxes are the exact rendered extents.
AnnotatedSequence generate(const SceneSpec& spec);

// Frames as frame_%06d.pgm (P5, maxval 65535, sample = round(v * 65535));
// boxes as boxes.json keyed by frame index.
void write_sequence(const AnnotatedSequence& seq, const std::filesystem::path& dir);
AnnotatedSequence read_sequence(const std::filesystem::path& dir);

}  // namespace cisskip
