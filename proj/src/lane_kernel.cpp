#include "seedrecon/detail/lane_kernel.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <numbers>
#include <stdexcept>
#include <vector>

#if defined(__AVX512F__) || defined(__FMA__)
#include <immintrin.h>
#endif

#include "seedrecon/prng_core.hpp"

// One vector lane per seed. Every step mirrors the scalar generator in
// prng_core.cpp operation for operation, including where multiply-adds are
// fused, so lane results are bit-identical to the scalar path.

namespace seedrecon::detail {

namespace {

constexpr std::size_t W = kLanes;

typedef std::uint32_t u32v __attribute__((vector_size(W * 4)));
typedef std::int32_t i32v __attribute__((vector_size(W * 4)));
typedef float f32v __attribute__((vector_size(W * 4)));
typedef float f32h __attribute__((vector_size(W * 2)));
typedef double f64v __attribute__((vector_size(W * 4)));

constexpr std::size_t kN = 624;
constexpr std::size_t kM = 397;

inline f32v splat(float c) noexcept { return f32v{} + c; }

inline f32v fmadd(f32v a, f32v b, f32v c) noexcept {
#if defined(__AVX512F__)
  return (f32v)_mm512_fmadd_ps((__m512)a, (__m512)b, (__m512)c);
#elif defined(__FMA__)
  return (f32v)_mm256_fmadd_ps((__m256)a, (__m256)b, (__m256)c);
#else
  f32v r;
  for (std::size_t i = 0; i < W; ++i) r[i] = std::fma(a[i], b[i], c[i]);
  return r;
#endif
}

inline f64v fmadd(f64v a, f64v b, f64v c) noexcept {
#if defined(__AVX512F__)
  return (f64v)_mm512_fmadd_pd((__m512d)a, (__m512d)b, (__m512d)c);
#elif defined(__FMA__)
  return (f64v)_mm256_fmadd_pd((__m256d)a, (__m256d)b, (__m256d)c);
#else
  f64v r;
  for (std::size_t i = 0; i < W / 2; ++i) r[i] = std::fma(a[i], b[i], c[i]);
  return r;
#endif
}

inline f32v sqrtv(f32v a) noexcept {
#if defined(__AVX512F__)
  return (f32v)_mm512_sqrt_ps((__m512)a);
#elif defined(__AVX__)
  return (f32v)_mm256_sqrt_ps((__m256)a);
#else
  f32v r;
  for (std::size_t i = 0; i < W; ++i) r[i] = std::sqrt(a[i]);
  return r;
#endif
}

inline f32v logv(f32v x) noexcept {
  const f32v min_norm = (f32v)(u32v{} + 0x00800000U);
  x = x < min_norm ? min_norm : x;
  u32v bits = (u32v)x;
  i32v exponent = (i32v)(bits >> 23);
  bits = (bits & ~0x7f800000U) | 0x3f000000U;
  x = (f32v)bits;
  exponent -= 0x7f;
  f32v e = __builtin_convertvector(exponent, f32v);
  e = e + 1.0f;
  const i32v below = x < 0.707106781186547524f;
  const f32v tmp = below ? x : f32v{};
  x = x - 1.0f;
  e = e - (below ? splat(1.0f) : f32v{});
  x = x + tmp;

  const f32v z = x * x;
  f32v y = fmadd(splat(7.0376836292E-2f), x, splat(-1.1514610310E-1f));
  y = fmadd(y, x, splat(1.1676998740E-1f));
  y = fmadd(y, x, splat(-1.2420140846E-1f));
  y = fmadd(y, x, splat(1.4249322787E-1f));
  y = fmadd(y, x, splat(-1.6668057665E-1f));
  y = fmadd(y, x, splat(2.0000714765E-1f));
  y = fmadd(y, x, splat(-2.4999993993E-1f));
  y = fmadd(y, x, splat(3.3333331174E-1f));
  y = y * x;
  y = fmadd(y, z, e * -2.12194440e-4f);
  y = fmadd(-z, splat(0.5f), y);
  x = x + y;
  return fmadd(e, splat(0.693359375f), x);
}

inline void sincosv(f32v x, f32v& sin_out, f32v& cos_out) noexcept {
  u32v sign_sin = (u32v)x & 0x80000000U;
  x = (f32v)((u32v)x & 0x7fffffffU);

  f32v y = x * 1.27323954473516f;
  i32v j = __builtin_convertvector(y, i32v);
  j = (j + 1) & ~1;
  y = __builtin_convertvector(j, f32v);

  const u32v swap_sign_sin = (u32v)(j & 4) << 29;
  const i32v poly_sin = (j & 2) == 0;

  x = fmadd(y, splat(-0.78515625f), x);
  x = fmadd(y, splat(-2.4187564849853515625e-4f), x);
  x = fmadd(y, splat(-3.77489497744594108e-8f), x);

  const u32v sign_cos = (u32v)(~(j - 2) & 4) << 29;
  sign_sin ^= swap_sign_sin;

  const f32v z = x * x;
  f32v yc = fmadd(splat(2.443315711809948E-005f), z, splat(-1.388731625493765E-003f));
  yc = fmadd(yc, z, splat(4.166664568298827E-002f));
  yc = yc * z;
  yc = fmadd(yc, z, -(z * 0.5f));
  yc = yc + 1.0f;

  f32v ys = fmadd(splat(-1.9515295891E-4f), z, splat(8.3321608736E-3f));
  ys = fmadd(ys, z, splat(-1.6666654611E-1f));
  ys = ys * z;
  ys = fmadd(ys, x, x);

  const f32v sin_part_s = poly_sin ? ys : f32v{};
  const f32v sin_part_c = poly_sin ? f32v{} : yc;
  ys = ys - sin_part_s;
  yc = yc - sin_part_c;
  sin_out = (f32v)((u32v)(sin_part_c + sin_part_s) ^ sign_sin);
  cos_out = (f32v)((u32v)(yc + ys) ^ sign_cos);
}

constexpr float kTwoPi = static_cast<float>(2.0 * std::numbers::pi);

// The trailing "+ 0" of the scalar transform only turns -0 into +0, which
// cannot change a squared difference, so it is left out here.
inline void box_muller_block(f32v (&b)[16]) noexcept {
  for (std::size_t j = 0; j < 8; ++j) {
    const f32v u1 = 1.0f - b[j];
    const f32v u2 = b[j + 8];
    const f32v radius = sqrtv(-2.0f * logv(u1));
    const f32v theta = kTwoPi * u2;
    f32v s, c;
    sincosv(theta, s, c);
    b[j] = radius * c;
    b[j + 8] = radius * s;
  }
}

inline u32v temper(u32v y) noexcept {
  y ^= y >> 11;
  y ^= (y << 7) & 0x9d2c5680U;
  y ^= (y << 15) & 0xefc60000U;
  y ^= y >> 18;
  return y;
}

inline f32v to_uniform(u32v y) noexcept {
  return __builtin_convertvector((i32v)(y & 0xffffffU), f32v) * (1.0f / 16777216.0f);
}

// MT19937 across lanes. Words are twisted lazily, in index order, right
// before they are read; that is the same computation as the in-place twist
// of a whole pass.
struct LaneMt {
  u32v s[kN];
  std::size_t idx = kN;

  explicit LaneMt(const std::uint32_t* seeds) noexcept {
    std::memcpy(&s[0], seeds, sizeof(u32v));
    for (std::uint32_t i = 1; i < kN; ++i) s[i] = 1812433253U * (s[i - 1] ^ (s[i - 1] >> 30)) + i;
  }

  inline void twist_word(std::size_t k) noexcept {
    const std::size_t k1 = k + 1 == kN ? 0 : k + 1;
    const std::size_t km = k < kN - kM ? k + kM : k - (kN - kM);
    const u32v y = (s[k] & 0x80000000U) | (s[k1] & 0x7fffffffU);
    s[k] = s[km] ^ (y >> 1) ^ (-(y & 1U) & 0x9908b0dfU);
  }

  inline u32v next_raw() noexcept {
    if (idx == kN) idx = 0;
    twist_word(idx);
    return s[idx++];
  }

  void discard(std::size_t count) noexcept {
    for (; count > 0; --count) {
      if (idx == kN) idx = 0;
      twist_word(idx++);
    }
  }

  // 16 uniforms; the caller guarantees idx is a multiple of 16.
  inline void uniform_block(f32v (&out)[16]) noexcept {
    if (idx == kN) idx = 0;
    for (std::size_t k = 0; k < 16; ++k) {
      twist_word(idx + k);
      out[k] = to_uniform(temper(s[idx + k]));
    }
    idx += 16;
  }
};

inline void accumulate(const f32v (&b)[16], const double* target, std::size_t count, f64v& sum_lo,
                       f64v& sum_hi) noexcept {
  for (std::size_t k = 0; k < count; ++k) {
    f32h lo, hi;
    std::memcpy(&lo, &b[k], sizeof lo);
    std::memcpy(&hi, reinterpret_cast<const char*>(&b[k]) + sizeof lo, sizeof hi);
    const f64v t = f64v{} + target[k];
    const f64v d_lo = t - __builtin_convertvector(lo, f64v);
    const f64v d_hi = t - __builtin_convertvector(hi, f64v);
    sum_lo = fmadd(d_lo, d_lo, sum_lo);
    sum_hi = fmadd(d_hi, d_hi, sum_hi);
  }
}

}  // namespace

void sse_lanes(const std::uint32_t* seeds, const double* target, std::size_t numel, std::size_t n,
               double* sums) noexcept {
  LaneMt mt(seeds);
  f64v sum_lo{}, sum_hi{};
  f32v block[16];

  const std::size_t tail_start = numel % 16 ? numel - 16 : numel;
  const std::size_t main_n = std::min(n, tail_start);
  std::size_t i = 0;
  for (; i < main_n; i += 16) {
    mt.uniform_block(block);
    box_muller_block(block);
    accumulate(block, target + i, std::min<std::size_t>(16, main_n - i), sum_lo, sum_hi);
  }
  if (n > tail_start) {
    mt.discard(numel - i);
    for (auto& u : block) u = to_uniform(temper(mt.next_raw()));
    box_muller_block(block);
    accumulate(block, target + tail_start, n - tail_start, sum_lo, sum_hi);
  }
  std::memcpy(sums, &sum_lo, sizeof sum_lo);
  std::memcpy(sums + W / 2, &sum_hi, sizeof sum_hi);
}

double sse_prefix_scalar(std::uint32_t seed, const double* target, std::size_t numel, std::size_t n) {
  std::vector<float> noise(n);
  randn_prefix(Seed(seed), numel, noise);
  double sum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double d = target[k] - static_cast<double>(noise[k]);
    sum = std::fma(d, d, sum);
  }
  return sum;
}

namespace {
std::atomic<std::uint64_t> g_target_reads{0};
}

std::uint64_t target_reads() noexcept { return g_target_reads.load(std::memory_order_relaxed); }

void sse_seeds(std::span<const std::uint32_t> seeds, const double* target, std::size_t numel, std::size_t n,
               std::span<double> sums) {
  if (sums.size() < seeds.size()) throw std::invalid_argument("sse_seeds: output span too short");
  if (n == 0 || n > numel) throw std::invalid_argument("sse_seeds: prefix length out of range");
  g_target_reads.fetch_add(seeds.size() * n, std::memory_order_relaxed);
  if (numel < kVectorFillThreshold) {
    for (std::size_t i = 0; i < seeds.size(); ++i) sums[i] = sse_prefix_scalar(seeds[i], target, numel, n);
    return;
  }
  std::uint32_t lane_seeds[W];
  double lane_sums[W];
  for (std::size_t i = 0; i < seeds.size(); i += W) {
    const std::size_t count = std::min(W, seeds.size() - i);
    for (std::size_t k = 0; k < W; ++k) lane_seeds[k] = seeds[i + std::min(k, count - 1)];
    sse_lanes(lane_seeds, target, numel, n, lane_sums);
    std::copy_n(lane_sums, count, sums.begin() + static_cast<std::ptrdiff_t>(i));
  }
}

}  // namespace seedrecon::detail
