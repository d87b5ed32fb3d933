#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace memenc {

// Raw little-endian float64 blobs. Datasets and checkpoints store tensors as
// flat .bin files with shapes recorded in a JSON manifest next to them.

void write_f64_blob(const std::filesystem::path& path, const std::vector<double>& values);
std::vector<double> read_f64_blob(const std::filesystem::path& path);

// Reads exactly `expect` values; throws IoError on size mismatch.
std::vector<double> read_f64_blob(const std::filesystem::path& path, std::int64_t expect);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace memenc
