#include "dro/rng.hpp"

#include <stdexcept>

namespace dro {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t s = master;
  const std::uint64_t a = splitmix64(s);
  std::uint64_t t = a ^ (stream * 0xD1B54A32D192ED03ULL);
  return splitmix64(t);
}

void sample_indices(Rng& rng, Index count, Index lo, Index hi, std::vector<Index>& out) {
  if (hi <= lo) throw std::invalid_argument("sample_indices: empty range");
  std::uniform_int_distribution<Index> dist(lo, hi - 1);
  out.reserve(out.size() + count);
  for (Index k = 0; k < count; ++k) out.push_back(dist(rng));
}

}  // namespace dro
