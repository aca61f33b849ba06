#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace dermamap {

// Minimal SHA-256 (FIPS 180-4). Used for content hashes in manifests,
// frozen-parameter integrity checks and golden-image tests.
class Sha256 {
 public:
  Sha256();
  void update(const void* data, size_t len);
  // Finalizes and returns the lowercase hex digest; the object must not be
  // updated afterwards.
  std::string hex_digest();

  static std::string of_bytes(const void* data, size_t len);
  static std::string of_string(const std::string& s);
  static std::string of_file(const std::string& path);

 private:
  void process_block(const uint8_t* block);

  uint32_t state_[8];
  uint64_t bit_count_ = 0;
  uint8_t buffer_[64];
  size_t buffer_len_ = 0;
};

}  // namespace dermamap
