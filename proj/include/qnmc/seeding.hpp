#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace qnmc {

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t hash_tag(std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Child seed for a named stream under `parent`, further keyed by indices.
/// Every stochastic component of a run gets its seed from here, so a single
/// master seed fixes the whole experiment.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag,
                                    std::initializer_list<std::uint64_t> keys = {}) {
  std::uint64_t s = mix64(parent ^ hash_tag(tag));
  for (auto k : keys) s = mix64(s ^ mix64(k));
  return s;
}

}  // namespace qnmc
