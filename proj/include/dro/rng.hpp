#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "dro/linalg.hpp"

namespace dro {

using Rng = std::mt19937_64;

/// One SplitMix64 step; advances `state`.
std::uint64_t splitmix64(std::uint64_t& state);

/// Seed of an independent substream of `master`. Distinct stream ids give unrelated seeds.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

/// Appends `count` indices drawn uniformly with replacement from [lo, hi).
void sample_indices(Rng& rng, Index count, Index lo, Index hi, std::vector<Index>& out);

}  // namespace dro
