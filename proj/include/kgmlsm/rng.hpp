#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace kgmlsm {

using Rng = std::mt19937_64;

/// Rng seeded from a base seed and a tuple of stream identifiers, so that
/// independent consumers never share a sequence.
Rng derive_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream);

}  // namespace kgmlsm
