#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "seedrecon/seed.hpp"
#include "seedrecon/tensor.hpp"

namespace seedrecon {

// Mean of squared differences over the first n elements, accumulated in
// double as sum = fma(d, d, sum) in index order. Throws std::invalid_argument
// for n = 0 or n beyond either operand.
double mse_prefix(const LatentVector& a, const NoiseVector& b, std::size_t n);

struct Candidate {
  Seed seed{0};
  double loss = std::numeric_limits<double>::infinity();
};

// Ascending loss, ties by ascending raw seed.
bool ranks_before(const Candidate& a, const Candidate& b) noexcept;

// NaN marks a stage the seed was not scored at.
struct RankedSeed {
  Seed seed{0};
  double stage1_loss = std::numeric_limits<double>::quiet_NaN();
  double stage2_loss = std::numeric_limits<double>::quiet_NaN();
  double full_loss = std::numeric_limits<double>::quiet_NaN();
};

// Element reads of noise and target values, per stage.
struct SearchStats {
  std::uint64_t stage1_seeds = 0;
  std::uint64_t stage1_reads = 0;
  std::uint64_t stage2_seeds = 0;
  std::uint64_t stage2_reads = 0;
  std::uint64_t full_seeds = 0;
  std::uint64_t full_reads = 0;
  std::size_t target_elements = 0;

  double stage1_reads_per_seed() const noexcept {
    return stage1_seeds ? static_cast<double>(stage1_reads) / static_cast<double>(stage1_seeds) : 0.0;
  }
  // 1 - stage-1 reads per seed / full latent length
  double stage1_read_reduction() const noexcept {
    return target_elements ? 1.0 - stage1_reads_per_seed() / static_cast<double>(target_elements) : 0.0;
  }
};

struct SeedRanking {
  Candidate best;
  Candidate second_best;
  // Over every evaluated candidate, at the first stage that scored all of
  // them (full vector for range scans, stage 1 for two-stage search).
  double mean_loss = 0.0;
  double loss_stddev = 0.0;
  std::vector<RankedSeed> top_k;
  std::uint64_t evaluated = 0;
  SearchStats stats;
  double wall_seconds = 0.0;
};

struct ScanOptions {
  unsigned workers = 1;
  std::size_t keep = 16;  // length of SeedRanking::top_k
  std::uint64_t chunk_size = 1ULL << 16;
};

// Full-vector MSE for every seed in [lo, hi). Throws std::invalid_argument
// when lo >= hi or the target is empty.
SeedRanking scan_range(const LatentVector& target, Seed lo, Seed hi, const ScanOptions& opts = {});

struct SearchConfig {
  // Seeds scanned; the default is the whole 32-bit space.
  std::uint64_t lo = 0;
  std::uint64_t hi = kSeedSpace32;
  std::uint64_t chunk_size = 1ULL << 16;
  std::size_t stage1_len = 1U << 13;
  std::size_t stage1_keep = 1U << 13;
  std::size_t stage2_len = 1U << 15;
  // Stage-2 leaders re-scored on the whole target; best and second best
  // are chosen among them by full-vector loss.
  std::size_t final_rescore = 16;
  unsigned workers = 1;

  nlohmann::json to_json() const;
};

// Stage 1 scores every seed on the first stage1_len elements, keeps the
// global stage1_keep best, re-scores those on stage2_len elements and ranks
// them by that loss. Results do not depend on workers or chunk order.
// Throws std::invalid_argument on an inconsistent config or a target shorter
// than stage2_len.
SeedRanking two_stage_search(const LatentVector& target, const SearchConfig& cfg);

struct ConfidenceGap {
  double gap_ratio = 0.0;  // second_best / best; +inf when best is 0
  double z_score = 0.0;    // (mean - best) / stddev; 0 when stddev is 0
};

ConfidenceGap confidence_gap(const SeedRanking& r);

nlohmann::json ranking_to_json(const SeedRanking& r, std::size_t max_top = 16);

struct ApproxConfig {
  std::size_t iterations = 500;
  double learning_rate = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double variance_weight = 1.0;
  double noise_weight = 1.0;
  std::uint64_t init_seed = 0;  // seeds the standard-normal starting point
};

struct ApproxResult {
  NoiseVector noise;
  double target_mse = 0.0;  // MSE of the returned iterate to the target
  std::vector<double> loss_trace;  // objective per iteration, before the step
};

// Objective: MSE(eps, target) + variance_weight * (var(eps) - 1)^2
//            + noise_weight * (skewness(eps)^2 + excess_kurtosis(eps)^2)
double approx_objective(std::span<const double> eps, std::span<const double> target, const ApproxConfig& cfg);
void approx_gradient(std::span<const double> eps, std::span<const double> target, const ApproxConfig& cfg,
                     std::span<double> grad);

// Adam on the objective above; returns the iterate with the lowest objective.
ApproxResult approximate_noise(const LatentVector& target, const ApproxConfig& cfg = {});

}  // namespace seedrecon
