#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace bevloc {

// FNV-1a, used for dataset reproducibility checks and checkpoint auditing.
inline uint64_t Fnv1a(const void* data, size_t n, uint64_t h = 14695981039346656037ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline uint64_t Fnv1a(const std::string& s, uint64_t h = 14695981039346656037ull) {
  return Fnv1a(s.data(), s.size(), h);
}

// SplitMix64. Stable across platforms, used to derive per-item seeds.
inline uint64_t SplitMix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline uint64_t MixSeed(uint64_t seed, uint64_t salt) {
  uint64_t s = seed ^ (0x9e3779b97f4a7c15ull * (salt + 1));
  return SplitMix64(s);
}

uint64_t HashFile(const std::filesystem::path& path);

// Hash of every regular file under root: stable ordering by relative path.
uint64_t HashDirectoryTree(const std::filesystem::path& root);

std::string ReadTextFile(const std::filesystem::path& path);
void WriteTextFile(const std::filesystem::path& path, const std::string& text);

}  // namespace bevloc
