#pragma once

#include <cstdint>

namespace tvs {

// splitmix64 finalizer, used to whiten seed material.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Hierarchical seed derivation. Children of one base never collide across
// tags or indices in practice, and streams for run i do not move when more
// runs are added. All randomness in the simulator flows through this, so a
// scenario seed pins every byte of output.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag,
                                    std::uint64_t index = 0) {
  return mix64(base ^ mix64(tag) ^ mix64(mix64(index) + 0x632be59bd9b4e019ULL));
}

namespace seed_tag {
// Values are arbitrary but fixed; changing them changes every derived stream.
inline constexpr std::uint64_t run = 0x72756e;
inline constexpr std::uint64_t lobe = 0x6c6f6265;
inline constexpr std::uint64_t frame = 0x6672616d;
inline constexpr std::uint64_t perturb = 0x70657274;
}  // namespace seed_tag

}  // namespace tvs
