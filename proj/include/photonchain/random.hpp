#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace photonchain {

using Rng = std::mt19937_64;

/// Deterministic seed for substream `name`, element `index`, of a master seed.
/// Counter-based: any element can be derived without touching the others.
std::uint64_t substream_seed(std::uint64_t master, std::string_view name, std::uint64_t index = 0);

inline Rng substream(std::uint64_t master, std::string_view name, std::uint64_t index = 0) {
  return Rng(substream_seed(master, name, index));
}

std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace photonchain
