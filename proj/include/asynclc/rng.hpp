#pragma once

#include <cstdint>
#include <random>

namespace asynclc {

using Rng = std::mt19937_64;

// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

// Substream seed for (base seed, stream index, tag). Distinct tags separate
// independent uses of the same replicate index (data vs. bootstrap, ...).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t tag = 0);

inline Rng make_rng(std::uint64_t base, std::uint64_t stream, std::uint64_t tag = 0) {
  return Rng(derive_seed(base, stream, tag));
}

}  // namespace asynclc
