#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "seedrecon/seed.hpp"

namespace seedrecon {

class InsufficientDataError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Losses of one subject under same-seed-different-modifiers (ssdm) and
// different-seed-same-modifiers (dssm) generation.
struct PairedSample {
  std::string label;
  double ssdm = 0.0;
  double dssm = 0.0;
  double delta() const noexcept { return dssm - ssdm; }
};

enum class WilcoxonMethod { exact, normal_approximation };

struct WilcoxonResult {
  double statistic = 0.0;  // W: sum of signed ranks
  double w_plus = 0.0;     // sum of ranks of positive differences
  std::size_t n_effective = 0;
  double p_value = 1.0;  // two-sided
  WilcoxonMethod method = WilcoxonMethod::exact;
  double median_delta = 0.0;
};

inline constexpr std::size_t kWilcoxonExactMaxN = 25;
inline constexpr std::size_t kWilcoxonMinN = 5;

// Zero differences are dropped, tied magnitudes share their average rank.
// The exact null distribution of W+ over all 2^n sign patterns is used when
// n <= 25, otherwise a normal approximation with tie and continuity
// correction. `force` overrides that choice. Throws InsufficientDataError
// for fewer than 5 non-zero differences.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> deltas,
                                    std::optional<WilcoxonMethod> force = std::nullopt);
WilcoxonResult wilcoxon_signed_rank(const std::vector<PairedSample>& pairs);

// Average ranks of |x| (1-based), ties averaged.
std::vector<double> average_ranks(std::span<const double> magnitudes);

// Element at index (n - 1) / 2 of the sorted values.
double lower_median(std::vector<double> values);

struct SsdmDssmSummary {
  double median_ssdm = 0.0;
  double median_dssm = 0.0;
  double median_delta = 0.0;
  WilcoxonResult test;
};

SsdmDssmSummary ssdm_dssm_summary(const std::vector<PairedSample>& pairs);

// Deterministic synthetic pairs: log-normal spread around the given medians.
std::vector<PairedSample> synthetic_pairs(std::size_t n, std::uint64_t rng_seed, double ssdm_median = 0.25,
                                          double dssm_median = 1.0, double log_spread = 0.25);

struct SeedHistogram {
  // buckets[b] counts seeds with floor(log2(seed + 1)) == b; UINT64_MAX
  // lands in bucket 64.
  std::array<std::uint64_t, 65> buckets{};
  std::uint64_t total = 0;
  std::uint64_t effective32 = 0;
  double effective32_fraction = 0.0;
};

std::size_t seed_bucket(Seed s) noexcept;

// A seed counts as effectively 32-bit when raw < 2^32 or its cpu flag is
// set. cpu_flags is empty or as long as seeds. Throws std::invalid_argument
// for no seeds or mismatched flag count.
SeedHistogram seed_histogram(std::span<const Seed> seeds, const std::vector<bool>& cpu_flags = {});

// CSV inputs. Pairs: label,ssdm,dssm. Seeds: seed[,cpu] with cpu in
// {0,1,true,false}. A header row is recognised by its column names.
// Throw CsvError with the offending line, including for files without data.
std::vector<PairedSample> load_pairs_csv(const std::filesystem::path& path);
struct SeedTable {
  std::vector<Seed> seeds;
  std::vector<bool> cpu;  // empty when the file has no cpu column
};
SeedTable load_seeds_csv(const std::filesystem::path& path);

nlohmann::json to_json(const WilcoxonResult& r);
nlohmann::json to_json(const SsdmDssmSummary& s);
nlohmann::json to_json(const SeedHistogram& h);

}  // namespace seedrecon
