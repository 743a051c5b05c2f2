#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace cmcforge {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent, counter-based seeds.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives a stream seed from a base seed and a tuple of integer tags, e.g.
// derive_seed(seed, {kTagView, view_id}). Identical tags give identical
// streams regardless of the order in which streams are created.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags) noexcept {
  std::uint64_t h = mix64(base);
  for (std::uint64_t t : tags) h = mix64(h ^ mix64(t + 0x632be59bd9b4e019ULL));
  return h;
}

inline Rng make_rng(std::uint64_t base, std::initializer_list<std::uint64_t> tags) {
  return Rng(derive_seed(base, tags));
}

// Stream tags. Values are part of the reproducibility contract; do not reorder.
namespace tag {
inline constexpr std::uint64_t kScene = 1;
inline constexpr std::uint64_t kViewNoise = 2;
inline constexpr std::uint64_t kRecon = 3;
inline constexpr std::uint64_t kPointLabels = 4;
inline constexpr std::uint64_t kScribble = 5;
inline constexpr std::uint64_t kSampling = 6;
inline constexpr std::uint64_t kAugment2d = 7;
inline constexpr std::uint64_t kAugment3d = 8;
inline constexpr std::uint64_t kInit = 9;
inline constexpr std::uint64_t kShuffle = 10;
inline constexpr std::uint64_t kPalette = 11;
inline constexpr std::uint64_t kCameras = 12;
}  // namespace tag

}  // namespace cmcforge
