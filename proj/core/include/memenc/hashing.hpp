#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace memenc {

// Lowercase hex SHA-256 of a byte buffer.
std::string sha256_hex(const void* data, std::size_t len);
std::string sha256_hex(const std::string& s);

// Hash of a float64 buffer, used for weight/image fingerprints. The bytes are
// serialized little-endian so the digest is stable across hosts.
std::string sha256_hex_f64(const std::vector<double>& values);

// Incremental digest for multi-part fingerprints (parameter stores, datasets).
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const void* data, std::size_t len);
  void update(const std::string& s);
  void update_f64(const std::vector<double>& values);
  std::string hex();  // finalizes; the object cannot be reused afterwards

 private:
  void* ctx_;
};

}  // namespace memenc
