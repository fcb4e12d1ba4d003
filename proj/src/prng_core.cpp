#include "seedrecon/prng_core.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace seedrecon {

namespace {

constexpr std::uint32_t kMatrixA = 0x9908b0dfU;
constexpr std::uint32_t kUpperMask = 0x80000000U;
constexpr std::uint32_t kLowerMask = 0x7fffffffU;
constexpr std::size_t kShift = 397;

}  // namespace

Mt19937::Mt19937(Seed seed) noexcept {
  state_[0] = seed.effective();
  for (std::uint32_t i = 1; i < kStateWords; ++i)
    state_[i] = 1812433253U * (state_[i - 1] ^ (state_[i - 1] >> 30)) + i;
}

void Mt19937::twist() noexcept {
  for (std::size_t k = 0; k < kStateWords; ++k) {
    const std::uint32_t y = (state_[k] & kUpperMask) | (state_[(k + 1) % kStateWords] & kLowerMask);
    state_[k] = state_[(k + kShift) % kStateWords] ^ (y >> 1) ^ ((y & 1U) ? kMatrixA : 0U);
  }
  index_ = 0;
}

std::uint32_t Mt19937::next_u32() noexcept {
  if (index_ >= kStateWords) twist();
  std::uint32_t y = state_[index_++];
  y ^= y >> 11;
  y ^= (y << 7) & 0x9d2c5680U;
  y ^= (y << 15) & 0xefc60000U;
  y ^= y >> 18;
  return y;
}

void Mt19937::discard(std::uint64_t count) noexcept {
  while (count > 0) {
    if (index_ >= kStateWords) twist();
    const std::uint64_t step = std::min<std::uint64_t>(count, kStateWords - index_);
    index_ += step;
    count -= step;
  }
}

float CpuGenerator::uniform_float() noexcept {
  // 24 mantissa bits from one word; exact in float.
  return static_cast<float>(engine_.next_u32() & 0xffffffU) * (1.0f / 16777216.0f);
}

double CpuGenerator::uniform_double() noexcept {
  const std::uint64_t hi = engine_.next_u32();
  const std::uint64_t lo = engine_.next_u32();
  const std::uint64_t bits = ((hi << 32) | lo) & ((1ULL << 53) - 1);
  return static_cast<double>(bits) * (1.0 / 9007199254740992.0);
}

double CpuGenerator::normal_double() noexcept {
  if (cached_normal_) {
    const double v = *cached_normal_;
    cached_normal_.reset();
    return v;
  }
  const double u1 = uniform_double();
  const double u2 = uniform_double();
  const double r = std::sqrt(-2.0 * std::log1p(-u2));
  const double theta = 2.0 * std::numbers::pi * u1;
  cached_normal_ = r * std::sin(theta);
  return r * std::cos(theta);
}

// The vectorised fill evaluates log, sin and cos with single-precision Cephes
// polynomials. The reference binary was compiled with multiply-add
// contraction, so each multiply whose only consumer is an add became a fused
// multiply-add; the std::fma calls below mark exactly those spots.
namespace {

float bits_to_float(std::uint32_t u) noexcept { return std::bit_cast<float>(u); }
std::uint32_t float_to_bits(float f) noexcept { return std::bit_cast<std::uint32_t>(f); }

// Natural log for x in (0, 1].
float cephes_logf(float x) noexcept {
  x = std::max(x, bits_to_float(0x00800000U));
  std::int32_t exponent = static_cast<std::int32_t>(float_to_bits(x) >> 23);
  x = bits_to_float((float_to_bits(x) & ~0x7f800000U) | float_to_bits(0.5f));
  exponent -= 0x7f;
  float e = static_cast<float>(exponent);
  e = e + 1.0f;
  const bool below = x < 0.707106781186547524f;
  const float tmp = below ? x : 0.0f;
  x = x - 1.0f;
  e = e - (below ? 1.0f : 0.0f);
  x = x + tmp;

  const float z = x * x;
  float y = 7.0376836292E-2f;
  y = std::fma(y, x, -1.1514610310E-1f);
  y = std::fma(y, x, 1.1676998740E-1f);
  y = std::fma(y, x, -1.2420140846E-1f);
  y = std::fma(y, x, 1.4249322787E-1f);
  y = std::fma(y, x, -1.6668057665E-1f);
  y = std::fma(y, x, 2.0000714765E-1f);
  y = std::fma(y, x, -2.4999993993E-1f);
  y = std::fma(y, x, 3.3333331174E-1f);
  y = y * x;
  y = std::fma(y, z, e * -2.12194440e-4f);
  y = std::fma(-z, 0.5f, y);
  x = x + y;
  return std::fma(e, 0.693359375f, x);
}

void cephes_sincosf(float x, float& sin_out, float& cos_out) noexcept {
  std::uint32_t sign_sin = float_to_bits(x) & 0x80000000U;
  x = bits_to_float(float_to_bits(x) & 0x7fffffffU);

  float y = x * 1.27323954473516f;  // 4 / pi
  std::int32_t j = static_cast<std::int32_t>(y);
  j = (j + 1) & ~1;
  y = static_cast<float>(j);

  const std::uint32_t swap_sign_sin = static_cast<std::uint32_t>(j & 4) << 29;
  const bool poly_sin = (j & 2) == 0;

  x = std::fma(y, -0.78515625f, x);
  x = std::fma(y, -2.4187564849853515625e-4f, x);
  x = std::fma(y, -3.77489497744594108e-8f, x);

  const std::uint32_t sign_cos = static_cast<std::uint32_t>(~(j - 2) & 4) << 29;
  sign_sin ^= swap_sign_sin;

  const float z = x * x;
  float yc = 2.443315711809948E-005f;
  yc = std::fma(yc, z, -1.388731625493765E-003f);
  yc = std::fma(yc, z, 4.166664568298827E-002f);
  yc = yc * z;
  yc = std::fma(yc, z, -(z * 0.5f));
  yc = yc + 1.0f;

  float ys = -1.9515295891E-4f;
  ys = std::fma(ys, z, 8.3321608736E-3f);
  ys = std::fma(ys, z, -1.6666654611E-1f);
  ys = ys * z;
  ys = std::fma(ys, x, x);

  const float sin_part_s = poly_sin ? ys : 0.0f;
  const float sin_part_c = poly_sin ? 0.0f : yc;
  ys = ys - sin_part_s;
  yc = yc - sin_part_c;
  sin_out = bits_to_float(float_to_bits(sin_part_c + sin_part_s) ^ sign_sin);
  cos_out = bits_to_float(float_to_bits(yc + ys) ^ sign_cos);
}

constexpr float kTwoPi = static_cast<float>(2.0 * std::numbers::pi);

}  // namespace

void box_muller16(std::span<float, 16> data) noexcept {
  for (std::size_t j = 0; j < 8; ++j) {
    const float u1 = 1.0f - data[j];  // [0, 1) -> (0, 1]
    const float u2 = data[j + 8];
    const float radius = std::sqrt(-2.0f * cephes_logf(u1));
    const float theta = kTwoPi * u2;
    float s = 0.0f;
    float c = 0.0f;
    cephes_sincosf(theta, s, c);
    // The reference finishes with fma(n, std = 1, mean = 0), which maps -0 to +0.
    data[j] = radius * c + 0.0f;
    data[j + 8] = radius * s + 0.0f;
  }
}

void randn_prefix(Seed seed, std::size_t numel, std::span<float> out) {
  if (numel == 0) throw std::invalid_argument("randn: zero-element shape");
  if (out.size() > numel) throw std::invalid_argument("randn_prefix: prefix longer than tensor");
  if (out.empty()) return;

  CpuGenerator gen(seed);
  if (numel < kVectorFillThreshold) {
    for (auto& v : out) v = static_cast<float>(gen.normal_double());
    return;
  }

  // Uniforms are drawn for all numel positions, then transformed in blocks of
  // 16. When numel is not a multiple of 16, the last 16 positions are redrawn
  // from the words following the main fill and transformed again.
  const std::size_t tail_start = numel % 16 ? numel - 16 : numel;
  const std::size_t main_count = std::min(out.size(), tail_start);

  std::array<float, 16> block{};
  std::size_t i = 0;
  for (; i < main_count; i += 16) {
    for (auto& u : block) u = gen.uniform_float();
    box_muller16(block);
    std::copy_n(block.begin(), std::min<std::size_t>(16, main_count - i), out.begin() + i);
  }
  if (out.size() <= tail_start) return;

  gen.engine().discard(numel - i);
  for (auto& u : block) u = gen.uniform_float();
  box_muller16(block);
  for (std::size_t k = tail_start; k < out.size(); ++k) out[k] = block[k - tail_start];
}

void fill_randn(Seed seed, std::span<float> out) { randn_prefix(seed, out.size(), out); }

NoiseVector randn(Seed seed, const Shape& shape) {
  for (auto d : shape)
    if (d == 0) throw std::invalid_argument("randn: zero-element shape " + shape_to_string(shape));
  const std::size_t n = shape_numel(shape);
  if (n == 0) throw std::invalid_argument("randn: zero-element shape");
  std::vector<float> data(n);
  fill_randn(seed, data);
  return Tensor::from_trusted(shape, std::move(data));
}

}  // namespace seedrecon
