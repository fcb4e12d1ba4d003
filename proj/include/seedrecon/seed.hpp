#pragma once

#include <compare>
#include <cstdint>

namespace seedrecon {

// A user-facing generator seed. The CPU generator only consumes the low
// 32 bits, so every raw value shares its noise stream with raw + k * 2^32.
struct Seed {
  std::uint64_t raw = 0;

  constexpr Seed() = default;
  constexpr explicit Seed(std::uint64_t value) : raw(value) {}

  constexpr std::uint32_t effective() const noexcept {
    return static_cast<std::uint32_t>(raw & 0xffffffffULL);
  }

  friend constexpr auto operator<=>(const Seed&, const Seed&) = default;
};

inline constexpr std::uint64_t kSeedSpace32 = 1ULL << 32;

}  // namespace seedrecon
