#include "seedrecon/secure_noise.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "seedrecon/prng_core.hpp"

namespace seedrecon {

SecureSeed SecureSeed::from_bytes(std::span<const std::uint8_t> key) {
  if (key.size() != 32)
    throw std::invalid_argument("secure seed key must be 32 bytes, got " + std::to_string(key.size()));
  SecureSeed s;
  std::copy(key.begin(), key.end(), s.key.begin());
  return s;
}

SecureSeed SecureSeed::from_hex(const std::string& hex) {
  if (hex.size() != 64)
    throw std::invalid_argument("secure seed key must be 64 hex digits, got " + std::to_string(hex.size()));
  auto nibble = [&](char c) -> std::uint8_t {
    if (c >= '0' && c <= '9') return static_cast<std::uint8_t>(c - '0');
    if (c >= 'a' && c <= 'f') return static_cast<std::uint8_t>(c - 'a' + 10);
    if (c >= 'A' && c <= 'F') return static_cast<std::uint8_t>(c - 'A' + 10);
    throw std::invalid_argument(std::string("secure seed key has non-hex character '") + c + "'");
  };
  SecureSeed s;
  for (std::size_t i = 0; i < 32; ++i)
    s.key[i] = static_cast<std::uint8_t>(nibble(hex[2 * i]) << 4 | nibble(hex[2 * i + 1]));
  return s;
}

std::string SecureSeed::key_hex() const {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out;
  for (auto b : key) {
    out += digits[b >> 4];
    out += digits[b & 15];
  }
  return out;
}

namespace {

inline std::uint32_t load_le32(const std::uint8_t* p) noexcept {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

inline void quarter_round(std::array<std::uint32_t, 16>& x, int a, int b, int c, int d) noexcept {
  x[a] += x[b]; x[d] ^= x[a]; x[d] = std::rotl(x[d], 16);
  x[c] += x[d]; x[b] ^= x[c]; x[b] = std::rotl(x[b], 12);
  x[a] += x[b]; x[d] ^= x[a]; x[d] = std::rotl(x[d], 8);
  x[c] += x[d]; x[b] ^= x[c]; x[b] = std::rotl(x[b], 7);
}

}  // namespace

std::array<std::uint32_t, 16> chacha20_block(std::span<const std::uint8_t, 32> key, std::uint32_t counter,
                                             std::span<const std::uint8_t, 12> nonce) noexcept {
  std::array<std::uint32_t, 16> in{0x61707865U, 0x3320646eU, 0x79622d32U, 0x6b206574U};
  for (int i = 0; i < 8; ++i) in[4 + i] = load_le32(key.data() + 4 * i);
  in[12] = counter;
  for (int i = 0; i < 3; ++i) in[13 + i] = load_le32(nonce.data() + 4 * i);

  auto x = in;
  for (int round = 0; round < 10; ++round) {
    quarter_round(x, 0, 4, 8, 12);
    quarter_round(x, 1, 5, 9, 13);
    quarter_round(x, 2, 6, 10, 14);
    quarter_round(x, 3, 7, 11, 15);
    quarter_round(x, 0, 5, 10, 15);
    quarter_round(x, 1, 6, 11, 12);
    quarter_round(x, 2, 7, 8, 13);
    quarter_round(x, 3, 4, 9, 14);
  }
  for (int i = 0; i < 16; ++i) x[i] += in[i];
  return x;
}

std::array<std::uint8_t, 64> chacha20_block_bytes(std::span<const std::uint8_t, 32> key, std::uint32_t counter,
                                                  std::span<const std::uint8_t, 12> nonce) noexcept {
  const auto words = chacha20_block(key, counter, nonce);
  std::array<std::uint8_t, 64> out;
  for (int i = 0; i < 16; ++i)
    for (int b = 0; b < 4; ++b) out[4 * i + b] = static_cast<std::uint8_t>(words[i] >> (8 * b));
  return out;
}

namespace {

class KeystreamUniforms {
 public:
  explicit KeystreamUniforms(const SecureSeed& seed) : key_(seed.key) {
    std::copy(seed.nonce_prefix.begin(), seed.nonce_prefix.end(), nonce_.begin());
  }

  double next() {
    if (pos_ == 16) refill();
    const std::uint64_t x = static_cast<std::uint64_t>(block_[pos_]) | static_cast<std::uint64_t>(block_[pos_ + 1]) << 32;
    pos_ += 2;
    return static_cast<double>(x >> 11) * 0x1.0p-53;
  }

 private:
  void refill() {
    if (exhausted_) throw std::length_error("chacha_randn: keystream counter exhausted");
    block_ = chacha20_block(key_, counter_, nonce_);
    if (++counter_ == 0) exhausted_ = true;
    pos_ = 0;
  }

  std::array<std::uint8_t, 32> key_;
  std::array<std::uint8_t, 12> nonce_{};
  std::array<std::uint32_t, 16> block_{};
  std::uint32_t counter_ = 0;
  bool exhausted_ = false;
  std::size_t pos_ = 16;
};

}  // namespace

void chacha_fill_randn(const SecureSeed& seed, std::span<float> out) {
  KeystreamUniforms u(seed);
  for (std::size_t i = 0; i < out.size(); i += 2) {
    const double u1 = u.next();
    const double u2 = u.next();
    const double r = std::sqrt(-2.0 * std::log1p(-u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    out[i] = static_cast<float>(r * std::cos(theta));
    if (i + 1 < out.size()) out[i + 1] = static_cast<float>(r * std::sin(theta));
  }
}

NoiseVector chacha_randn(const SecureSeed& seed, const Shape& shape) {
  for (auto d : shape)
    if (d == 0) throw std::invalid_argument("chacha_randn: zero-element shape " + shape_to_string(shape));
  const std::size_t n = shape_numel(shape);
  if (n == 0) throw std::invalid_argument("chacha_randn: zero-element shape");
  std::vector<float> data(n);
  chacha_fill_randn(seed, data);
  return Tensor::from_trusted(shape, std::move(data));
}

OverheadReport bench_overhead(std::size_t n, int repeats) {
  if (n < (std::size_t{1} << 16)) throw std::invalid_argument("bench_overhead: n must be at least 2^16");
  using Clock = std::chrono::steady_clock;
  std::vector<float> buf(n);
  SecureSeed key;
  key.key[0] = 1;
  double best_mt = 1e300, best_cc = 1e300;
  volatile float sink = 0.0f;
  for (int r = 0; r < std::max(1, repeats); ++r) {
    auto t0 = Clock::now();
    fill_randn(Seed(static_cast<std::uint64_t>(r)), buf);
    best_mt = std::min(best_mt, std::chrono::duration<double>(Clock::now() - t0).count());
    sink = sink + buf[n / 2];
    t0 = Clock::now();
    chacha_fill_randn(key, buf);
    best_cc = std::min(best_cc, std::chrono::duration<double>(Clock::now() - t0).count());
    sink = sink + buf[n / 2];
  }
  OverheadReport rep;
  rep.n = n;
  rep.mt_seconds = best_mt;
  rep.chacha_seconds = best_cc;
  rep.ratio = best_cc / best_mt;
  return rep;
}

}  // namespace seedrecon
