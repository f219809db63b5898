#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace oaxe {

// Independent generator for a named purpose ("data.train", "init", ...)
// derived from one root seed.
inline std::mt19937_64 substream(std::uint64_t root_seed, std::string_view name) {
  std::uint64_t h = 14695981039346656037ull;  // FNV-1a
  for (unsigned char ch : name) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  std::seed_seq seq{static_cast<std::uint32_t>(root_seed), static_cast<std::uint32_t>(root_seed >> 32),
                    static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
  return std::mt19937_64(seq);
}

inline std::uint64_t substream_seed(std::uint64_t root_seed, std::string_view name) {
  auto rng = substream(root_seed, name);
  return rng();
}

}  // namespace oaxe
