#include "core/pgm.hpp"

#include "core/error.hpp"
#include "core/io.hpp"

namespace cisskip {

namespace {

// Skips whitespace and '#' comments; returns the offset of the next token.
size_t skip_separators(const std::string& s, size_t pos) {
  while (pos < s.size()) {
    char c = s[pos];
    if (c == '#') {
      while (pos < s.size() && s[pos] != '\n') ++pos;
    } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
      ++pos;
    } else {
      break;
    }
  }
  return pos;
}

int parse_header_int(const std::string& s, size_t& pos, const std::string& name,
                     const char* field) {
  pos = skip_separators(s, pos);
  if (pos >= s.size() || s[pos] < '0' || s[pos] > '9') {
    throw FormatError(name + ": expected " + std::string(field) + " at byte offset " +
                      std::to_string(pos));
  }
  long v = 0;
  while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') {
    v = v * 10 + (s[pos] - '0');
    if (v > 1'000'000'000) throw FormatError(name + ": oversized " + std::string(field));
    ++pos;
  }
  return static_cast<int>(v);
}

}  // namespace

std::string pgm_encode(const PgmImage& img) {
  if (img.rows <= 0 || img.cols <= 0 || img.maxval <= 0 || img.maxval > 65535) {
    throw FormatError("pgm_encode: bad dimensions or maxval");
  }
  if (img.samples.size() != static_cast<size_t>(img.rows) * img.cols) {
    throw FormatError("pgm_encode: sample count does not match dimensions");
  }
  std::string out = "P5\n" + std::to_string(img.cols) + " " + std::to_string(img.rows) + "\n" +
                    std::to_string(img.maxval) + "\n";
  const bool wide = img.maxval > 255;
  out.reserve(out.size() + img.samples.size() * (wide ? 2 : 1));
  for (uint16_t v : img.samples) {
    if (v > img.maxval) throw FormatError("pgm_encode: sample exceeds maxval");
    if (wide) out.push_back(static_cast<char>(v >> 8));
    out.push_back(static_cast<char>(v & 0xff));
  }
  return out;
}

PgmImage pgm_decode(const std::string& bytes, const std::string& name) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    throw FormatError(name + ": not a P5 graymap (bad magic at byte offset 0)");
  }
  size_t pos = 2;
  PgmImage img;
  img.cols = parse_header_int(bytes, pos, name, "width");
  img.rows = parse_header_int(bytes, pos, name, "height");
  img.maxval = parse_header_int(bytes, pos, name, "maxval");
  if (img.cols <= 0 || img.rows <= 0) throw FormatError(name + ": non-positive dimensions");
  if (img.maxval <= 0 || img.maxval > 65535) {
    throw FormatError(name + ": maxval " + std::to_string(img.maxval) + " out of range");
  }
  if (pos >= bytes.size() ||
      !(bytes[pos] == ' ' || bytes[pos] == '\t' || bytes[pos] == '\r' || bytes[pos] == '\n')) {
    throw FormatError(name + ": missing whitespace after maxval at byte offset " +
                      std::to_string(pos));
  }
  ++pos;  // exactly one separator byte before the raster
  const bool wide = img.maxval > 255;
  const size_t n = static_cast<size_t>(img.rows) * img.cols;
  const size_t need = n * (wide ? 2 : 1);
  if (bytes.size() - pos < need) {
    throw FormatError(name + ": raster truncated at byte offset " + std::to_string(bytes.size()) +
                      " (need " + std::to_string(pos + need) + " bytes)");
  }
  img.samples.resize(n);
  for (size_t i = 0; i < n; ++i) {
    uint16_t v;
    if (wide) {
      v = static_cast<uint16_t>((static_cast<uint8_t>(bytes[pos]) << 8) |
                                static_cast<uint8_t>(bytes[pos + 1]));
      pos += 2;
    } else {
      v = static_cast<uint8_t>(bytes[pos]);
      pos += 1;
    }
    if (v > img.maxval) {
      throw FormatError(name + ": sample above maxval at byte offset " + std::to_string(pos));
    }
    img.samples[i] = v;
  }
  return img;
}

void pgm_write(const std::filesystem::path& path, const PgmImage& img) {
  atomic_write_file(path, pgm_encode(img));
}

PgmImage pgm_read(const std::filesystem::path& path) {
  return pgm_decode(read_file(path), path.filename().string());
}

}  // namespace cisskip
