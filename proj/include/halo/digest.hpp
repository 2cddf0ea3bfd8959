#pragma once

#include <array>
#include <cstdio>
#include <string>
#include <string_view>

#include <openssl/sha.h>

namespace halo {

/// Lowercase hex SHA-256 of a byte string.
inline std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, SHA256_DIGEST_LENGTH> md{};
  SHA256(reinterpret_cast<const unsigned char*>(data.data()), data.size(), md.data());
  std::string hex;
  hex.reserve(md.size() * 2);
  char buf[3];
  for (auto b : md) {
    std::snprintf(buf, sizeof buf, "%02x", b);
    hex.append(buf, 2);
  }
  return hex;
}

}  // namespace halo
