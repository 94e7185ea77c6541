#pragma once

#include <cstdint>
#include <string_view>

#include "modpipe/features.hpp"

namespace modpipe::detail {

// Independent stream seed for (seed, purpose).
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose) {
  std::string key(purpose);
  key.push_back(':');
  for (int i = 0; i < 8; ++i) key.push_back(static_cast<char>((seed >> (8 * i)) & 0xFF));
  return fnv1a64(key);
}

}  // namespace modpipe::detail
