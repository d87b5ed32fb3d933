#include "memenc/blob.hpp"

#include <bit>
#include <fstream>
#include <sstream>

#include "memenc/error.hpp"

namespace memenc {

static_assert(std::endian::native == std::endian::little,
              "blob IO assumes a little-endian host");

void write_f64_blob(const std::filesystem::path& path, const std::vector<double>& values) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(values.data()),
          static_cast<std::streamsize>(values.size() * sizeof(double)));
  if (!f) throw IoError("short write to " + path.string());
}

std::vector<double> read_f64_blob(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw IoError("cannot open " + path.string());
  const std::streamsize bytes = f.tellg();
  if (bytes % sizeof(double) != 0) {
    throw IoError(path.string() + ": size " + std::to_string(bytes) +
                  " is not a multiple of 8");
  }
  std::vector<double> out(static_cast<std::size_t>(bytes) / sizeof(double));
  f.seekg(0);
  f.read(reinterpret_cast<char*>(out.data()), bytes);
  if (!f) throw IoError("short read from " + path.string());
  return out;
}

std::vector<double> read_f64_blob(const std::filesystem::path& path, std::int64_t expect) {
  std::vector<double> out = read_f64_blob(path);
  if (static_cast<std::int64_t>(out.size()) != expect) {
    throw IoError(path.string() + ": expected " + std::to_string(expect) + " values, found " +
                  std::to_string(out.size()));
  }
  return out;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f << text;
  if (!f) throw IoError("short write to " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace memenc
