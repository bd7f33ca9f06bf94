#include "core/scenes.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "json.hpp"

#include "core/io.hpp"
#include "core/pgm.hpp"
#include "core/rng.hpp"

namespace cisskip {

void SceneSpec::validate() const {
  if (rows < 1 || cols < 1) throw ConfigError("scene: non-positive dimensions");
  if (frames < 1) throw ConfigError("scene: need at least one frame");
  if (n_objects < 0) throw ConfigError("scene: negative object count");
  if (min_size < 1 || max_size < min_size) throw ConfigError("scene: bad object size range");
  if (max_size > rows || max_size > cols) {
    throw ConfigError("scene: object size " + std::to_string(max_size) +
                      " exceeds frame " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  if (min_speed < 0.0 || max_speed < min_speed) throw ConfigError("scene: bad speed range");
  if (background < 0.0 || texture_amp < 0.0 || background + texture_amp > 0.5) {
    throw ConfigError("scene: background + texture must stay in [0, 0.5] so objects remain brighter");
  }
}

namespace {

struct MovingObject {
  int w, h;
  double x, y;    // top-left, continuous
  double vx, vy;
  double intensity;
};

// Reflects pos into [0, limit], flipping the velocity on each bounce.
void reflect(double& pos, double& vel, double limit) {
  if (limit <= 0.0) {
    pos = 0.0;
    return;
  }
  while (pos < 0.0 || pos > limit) {
    if (pos < 0.0) {
      pos = -pos;
    } else {
      pos = 2.0 * limit - pos;
    }
    vel = -vel;
  }
}

}  // namespace

AnnotatedSequence generate(const SceneSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);

  Frame background(spec.rows, spec.cols);
  for (double& v : background.px) {
    v = spec.background + spec.texture_amp * rng.uniform(-1.0, 1.0);
    v = std::clamp(v, 0.0, 0.55);
  }

  std::vector<MovingObject> objects;
  for (int i = 0; i < spec.n_objects; ++i) {
    MovingObject o;
    o.w = static_cast<int>(rng.between(spec.min_size, spec.max_size));
    o.h = static_cast<int>(rng.between(spec.min_size, spec.max_size));
    o.x = rng.uniform(0.0, static_cast<double>(spec.cols - o.w));
    o.y = rng.uniform(0.0, static_cast<double>(spec.rows - o.h));
    double speed = rng.uniform(spec.min_speed, spec.max_speed);
    double angle = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
    o.vx = speed * std::cos(angle);
    o.vy = speed * std::sin(angle);
    o.intensity = rng.uniform(0.6, 0.95);
    objects.push_back(o);
  }

  AnnotatedSequence seq;
  seq.frames.reserve(spec.frames);
  seq.boxes.reserve(spec.frames);
  for (int f = 0; f < spec.frames; ++f) {
    Frame frame = background;
    std::vector<Box> frame_boxes;
    for (MovingObject& o : objects) {
      int ix = std::clamp(static_cast<int>(std::lround(o.x)), 0, spec.cols - o.w);
      int iy = std::clamp(static_cast<int>(std::lround(o.y)), 0, spec.rows - o.h);
      for (int r = iy; r < iy + o.h; ++r)
        for (int c = ix; c < ix + o.w; ++c) frame.at(r, c) = o.intensity;
      frame_boxes.push_back({ix, iy, o.w, o.h});

      o.x += o.vx;
      o.y += o.vy;
      reflect(o.x, o.vx, static_cast<double>(spec.cols - o.w));
      reflect(o.y, o.vy, static_cast<double>(spec.rows - o.h));
    }
    seq.frames.push_back(std::move(frame));
    seq.boxes.push_back(std::move(frame_boxes));
  }
  return seq;
}

void write_sequence(const AnnotatedSequence& seq, const std::filesystem::path& dir) {
  if (seq.frames.size() != seq.boxes.size()) {
    throw ShapeError("write_sequence: frame and box counts differ");
  }
  char name[32];
  for (size_t i = 0; i < seq.frames.size(); ++i) {
    const Frame& f = seq.frames[i];
    PgmImage img;
    img.rows = f.rows;
    img.cols = f.cols;
    img.maxval = 65535;
    img.samples.resize(f.px.size());
    for (size_t k = 0; k < f.px.size(); ++k) {
      img.samples[k] = static_cast<uint16_t>(std::lround(f.px[k] * 65535.0));
    }
    std::snprintf(name, sizeof(name), "frame_%06zu.pgm", i);
    pgm_write(dir / name, img);
  }

  nlohmann::json frames_json = nlohmann::json::object();
  for (size_t i = 0; i < seq.boxes.size(); ++i) {
    nlohmann::json list = nlohmann::json::array();
    for (const Box& b : seq.boxes[i]) {
      list.push_back({{"x", b.x}, {"y", b.y}, {"w", b.w}, {"h", b.h}});
    }
    frames_json[std::to_string(i)] = list;
  }
  nlohmann::json doc = {{"frames", frames_json}};
  atomic_write_file(dir / "boxes.json", doc.dump(2) + "\n");
}

AnnotatedSequence read_sequence(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("read_sequence: " + dir.string() + " is not a directory");
  const fs::path annot = dir / "boxes.json";
  if (!fs::exists(annot)) {
    throw IoError("read_sequence: missing annotation file " + annot.string());
  }
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(annot));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(annot.string() + ": " + e.what());
  }

  std::vector<fs::path> frame_files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string fname = entry.path().filename().string();
    if (fname.starts_with("frame_") && fname.ends_with(".pgm")) {
      frame_files.push_back(entry.path());
    }
  }
  std::sort(frame_files.begin(), frame_files.end());
  if (frame_files.empty()) throw IoError("read_sequence: no frame_*.pgm files in " + dir.string());

  AnnotatedSequence seq;
  try {
    const nlohmann::json& frames_json = doc.at("frames");
    for (size_t i = 0; i < frame_files.size(); ++i) {
      PgmImage img = pgm_read(frame_files[i]);
      if (img.maxval != 65535) {
        throw FormatError(frame_files[i].filename().string() + ": maxval " +
                          std::to_string(img.maxval) + ", sequence frames use 65535");
      }
      Frame f(img.rows, img.cols);
      for (size_t k = 0; k < img.samples.size(); ++k) f.px[k] = img.samples[k] / 65535.0;
      seq.frames.push_back(std::move(f));

      const std::string key = std::to_string(i);
      if (!frames_json.contains(key)) {
        throw FormatError(annot.string() + ": missing boxes for frame " + key);
      }
      std::vector<Box> boxes;
      for (const auto& jb : frames_json.at(key)) {
        boxes.push_back({jb.at("x").get<int>(), jb.at("y").get<int>(), jb.at("w").get<int>(),
                         jb.at("h").get<int>()});
      }
      seq.boxes.push_back(std::move(boxes));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(annot.string() + ": " + e.what());
  }
  return seq;
}

}  // namespace cisskip
