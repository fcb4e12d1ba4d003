#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

namespace seedrecon::detail {

// Seeds scored together by one kernel call. Matches the widest vector unit
// the build targets: 16 with AVX-512, 8 otherwise.
#if defined(__AVX512F__)
inline constexpr std::size_t kLanes = 16;
#else
inline constexpr std::size_t kLanes = 8;
#endif

// For each of the kLanes 32-bit seeds, writes to sums[i] the sum over
// k < n of (target[k] - randn(seed_i, [numel])[k])^2, accumulated in index
// order as sum = fma(d, d, sum) with d computed in double. Identical bits to
// the scalar path in sse_prefix_scalar. Requires 16 <= numel, 1 <= n <= numel.
void sse_lanes(const std::uint32_t* seeds, const double* target, std::size_t numel, std::size_t n,
               double* sums) noexcept;

// Scalar reference for one seed; any numel >= 1.
double sse_prefix_scalar(std::uint32_t seed, const double* target, std::size_t numel, std::size_t n);

// Scores every seed in `seeds`: sums[i] receives the squared-error sum of
// seeds[i]. Uses the lane kernel when numel allows it.
void sse_seeds(std::span<const std::uint32_t> seeds, const double* target, std::size_t numel, std::size_t n,
               std::span<double> sums);

// Target elements read by sse_seeds in this process so far: n per scored seed.
std::uint64_t target_reads() noexcept;

}  // namespace seedrecon::detail
