#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

#include "seedrecon/tensor.hpp"

namespace seedrecon {

// 256-bit key plus an 8-byte nonce prefix. The ChaCha20 nonce is
// nonce_prefix followed by four zero bytes; the block counter starts at 0.
struct SecureSeed {
  std::array<std::uint8_t, 32> key{};
  std::array<std::uint8_t, 8> nonce_prefix{};

  // Exactly 32 bytes, else std::invalid_argument.
  static SecureSeed from_bytes(std::span<const std::uint8_t> key);
  // 64 hex digits, else std::invalid_argument.
  static SecureSeed from_hex(const std::string& hex);
  std::string key_hex() const;
};

// RFC 7539 block function: the 16 output words (state after the rounds plus
// the input state).
std::array<std::uint32_t, 16> chacha20_block(std::span<const std::uint8_t, 32> key, std::uint32_t counter,
                                             std::span<const std::uint8_t, 12> nonce) noexcept;

// Keystream bytes of the block, little-endian words.
std::array<std::uint8_t, 64> chacha20_block_bytes(std::span<const std::uint8_t, 32> key, std::uint32_t counter,
                                                  std::span<const std::uint8_t, 12> nonce) noexcept;

// Standard normals from the keystream: each uniform takes the next 8
// keystream bytes as a little-endian u64 and keeps its top 53 bits; pairs
// (u1, u2) become r cos(t), r sin(t) with r = sqrt(-2 log(1 - u1)) and
// t = 2 pi u2, computed in double and rounded to float. An odd count drops
// the last sine.
NoiseVector chacha_randn(const SecureSeed& seed, const Shape& shape);
void chacha_fill_randn(const SecureSeed& seed, std::span<float> out);

struct OverheadReport {
  std::size_t n = 0;
  double mt_seconds = 0.0;
  double chacha_seconds = 0.0;
  double ratio = 0.0;  // chacha / mt
};

// Best-of-`repeats` wall time of randn and chacha_randn at n elements.
// Throws std::invalid_argument for n < 2^16.
OverheadReport bench_overhead(std::size_t n, int repeats = 5);

}  // namespace seedrecon
