#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace prunekit {

using Digest = std::array<std::uint8_t, 32>;

// Incremental SHA-256. Strings are fed length-prefixed by add_field so that
// distinct unit sequences never share a byte stream.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  Sha256& add_bytes(std::string_view bytes);
  Sha256& add_u64(std::uint64_t v);
  Sha256& add_field(std::string_view s) { return add_u64(s.size()).add_bytes(s); }
  Digest finish();

 private:
  void* ctx_;
};

std::string to_hex(const Digest& d);
std::string sha256_hex(std::string_view bytes);

}  // namespace prunekit
