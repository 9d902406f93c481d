#pragma once

#include <cstdint>
#include <random>

namespace toaopt {

using Rng = std::mt19937_64;

/// Named random streams split off a single master seed.
enum class Stream : std::uint64_t {
  anchors = 0x616e63686f727321ull,
  motion = 0x6d6f74696f6e2121ull,
  fading = 0x666164696e672121ull,
  measurement = 0x6d65617375726521ull,
};

/// Counter-based stream derivation: the seed for (stream, a, b) does not depend on
/// how many other streams exist, so adding trajectories never perturbs earlier ones.
std::uint64_t derive_seed(std::uint64_t master, Stream stream, std::uint64_t a = 0,
                          std::uint64_t b = 0);

inline Rng make_rng(std::uint64_t master, Stream stream, std::uint64_t a = 0, std::uint64_t b = 0) {
  return Rng(derive_seed(master, stream, a, b));
}

}  // namespace toaopt
