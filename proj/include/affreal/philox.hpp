#pragma once

#include <array>
#include <cstdint>

namespace affreal {

using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

/// Philox4x32 with 10 rounds (Salmon et al. counter-based generator).
PhiloxCounter philox4x32_10(PhiloxCounter ctr, PhiloxKey key);

/// Standard normal draw addressed by (seed, path, step). The value depends only on
/// these coordinates, so results do not depend on thread scheduling.
double normal_draw(std::uint64_t seed, std::uint64_t path, std::uint32_t step, std::uint32_t stream = 0);

}  // namespace affreal
