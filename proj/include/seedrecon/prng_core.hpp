#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>

#include "seedrecon/seed.hpp"
#include "seedrecon/tensor.hpp"

namespace seedrecon {

// MT19937 exactly as the reference CPU generator runs it: the 32-bit
// linear seeding recurrence applied to the truncated seed, then the
// canonical twist and tempering.
class Mt19937 {
 public:
  static constexpr std::size_t kStateWords = 624;

  explicit Mt19937(Seed seed) noexcept;

  std::uint32_t next_u32() noexcept;

  // Skips `count` outputs. Skipped words are still twisted, just not tempered.
  void discard(std::uint64_t count) noexcept;

  const std::array<std::uint32_t, kStateWords>& state() const noexcept { return state_; }
  // Number of words consumed from the current pass; 624 means the next
  // draw twists.
  std::size_t index() const noexcept { return index_; }

 private:
  void twist() noexcept;

  std::array<std::uint32_t, kStateWords> state_;
  std::size_t index_ = kStateWords;
};

// The engine plus the spare value of the double-precision Box-Muller path.
class CpuGenerator {
 public:
  explicit CpuGenerator(Seed seed) noexcept : engine_(seed) {}

  // (word & 0xffffff) * 2^-24
  float uniform_float() noexcept;
  // 53 bits of (first_word << 32 | second_word), times 2^-53
  double uniform_double() noexcept;
  // Box-Muller over two doubles; the sine half is cached for the next call.
  double normal_double() noexcept;

  const Mt19937& engine() const noexcept { return engine_; }
  Mt19937& engine() noexcept { return engine_; }
  std::optional<double> cached_normal() const noexcept { return cached_normal_; }

 private:
  Mt19937 engine_;
  std::optional<double> cached_normal_;
};

// Tensors with at least this many elements take the vectorised fill path.
inline constexpr std::size_t kVectorFillThreshold = 16;

// Standard-normal float32 tensor, bit-identical to the reference framework's
// CPU randn for the same seed and element count. Throws std::invalid_argument
// for a zero-element shape.
NoiseVector randn(Seed seed, const Shape& shape);

// Fills `out` with randn(seed, [out.size()]).
void fill_randn(Seed seed, std::span<float> out);

// Writes the first out.size() values of a randn tensor holding `numel`
// elements. Only the uniforms those values depend on are drawn.
void randn_prefix(Seed seed, std::size_t numel, std::span<float> out);

// The 16-wide Box-Muller step of the vectorised fill, in place: element j and
// j + 8 become a (cos, sin) pair built from uniforms data[j] and data[j + 8].
void box_muller16(std::span<float, 16> data) noexcept;

}  // namespace seedrecon
