#pragma once

#include <filesystem>
#include <string>

namespace cisskip {

// Writes `bytes` to `path` atomically (temp file in the same directory,
// then rename). Creates parent directories. Throws IoError on failure.
void atomic_write_file(const std::filesystem::path& path, const std::string& bytes);

// Reads a whole file; throws IoError if it cannot be opened.
std::string read_file(const std::filesystem::path& path);

}  // namespace cisskip
