#pragma once

// Seed derivation. Every random stream in the project is an
// std::mt19937_64 seeded from one of these functions, so runs are
// reproducible from a single global seed.
//
//   derive_seed(global, purpose) = splitmix64(global ^ fnv1a64(purpose))
//   split_seed(seed, index)      = splitmix64(seed + 0x9E3779B97F4A7C15 * (index + 1))

#include <cstdint>
#include <string_view>

namespace uwmmse {

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view bytes);
std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view purpose);
std::uint64_t split_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace uwmmse
