#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace cisskip {

// Binary (P5) portable graymap. Samples are stored big-endian, two bytes
// per sample when maxval > 255 and one byte otherwise, per the netpbm spec.
struct PgmImage {
  int rows = 0, cols = 0;
  int maxval = 65535;
  std::vector<uint16_t> samples;  // row-major

  uint16_t at(int r, int c) const { return samples[static_cast<size_t>(r) * cols + c]; }
};

std::string pgm_encode(const PgmImage& img);
// Throws FormatError (naming `name` and the byte offset) on malformed input.
PgmImage pgm_decode(const std::string& bytes, const std::string& name);

void pgm_write(const std::filesystem::path& path, const PgmImage& img);
PgmImage pgm_read(const std::filesystem::path& path);

}  // namespace cisskip
