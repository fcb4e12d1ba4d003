#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "seedrecon/oracle.hpp"
#include "seedrecon/seed.hpp"
#include "seedrecon/tensor.hpp"

namespace seedrecon {

inline constexpr std::size_t kMinGenomeLength = 3;
inline constexpr std::size_t kMaxGenomeLength = 12;

// Invalid GA configuration or vocabulary.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct VocabEntry {
  std::string modifier;
  double frequency = 0.0;  // share of prompts containing the modifier
};

class ModifierVocabulary {
 public:
  // Throws ConfigError on duplicate modifiers, empty strings, or
  // frequencies / threshold outside [0, 1].
  explicit ModifierVocabulary(std::vector<VocabEntry> entries, double threshold = 0.01);

  // Rows "modifier,frequency"; an optional header row naming those columns.
  static ModifierVocabulary load_csv(const std::filesystem::path& path, double threshold = 0.01);

  const std::vector<VocabEntry>& entries() const noexcept { return entries_; }
  // Entries with frequency >= threshold, in input order.
  const std::vector<std::string>& usable() const noexcept { return usable_; }
  bool is_usable(const std::string& m) const { return usable_set_.count(m) != 0; }
  double threshold() const noexcept { return threshold_; }

 private:
  std::vector<VocabEntry> entries_;
  std::vector<std::string> usable_;
  std::unordered_set<std::string> usable_set_;
  double threshold_;
};

struct GaConfig {
  std::size_t population = 150;
  std::size_t generations = 25;
  std::size_t tournament_size = 3;
  double p_replace = 0.15;
  double p_insert = 0.03;
  double p_delete = 0.02;
  double elite_fraction = 0.05;
  Seed rng_seed{0};
  unsigned workers = 1;  // concurrent fitness evaluations, when the oracle allows

  // Throws ConfigError.
  void validate() const;
  // ceil(elite_fraction * population)
  std::size_t elite_count() const;
  nlohmann::json to_json() const;
};

// The single random stream of a GA run. Bounded integers and unit doubles
// are derived from the 64-bit engine directly, not via <random> distributions.
class GaRng {
 public:
  explicit GaRng(Seed seed) : engine_(seed.raw) {}
  // Uniform in [0, n); n > 0.
  std::size_t index(std::size_t n);
  // Uniform in [0, 1) with 53 random bits.
  double unit();

 private:
  std::mt19937_64 engine_;
};

// Throws ConfigError when the genome is too short, too long, or uses a
// modifier outside the usable vocabulary.
void validate_genome(const Genome& g, const ModifierVocabulary& vocab);

// Lengths uniform in [3, 12]; no modifier repeats within a genome.
// Throws ConfigError when fewer than 12 usable modifiers exist.
std::vector<Genome> init_population(const ModifierVocabulary& vocab, const GaConfig& cfg, GaRng& rng);

// Full-vector MSE between target and the oracle's latent. Throws
// OracleContractError naming the oracle when shapes differ.
double fitness(const Genome& g, const std::string& prefix, Seed seed, const LatentVector& target,
               GeneratorOracle& oracle);

// tournament_size draws with replacement; the lowest fitness wins, ties to
// the earlier index. A tournament at least as large as the population is
// the whole population and draws nothing. Returns the winner's index.
std::size_t tournament_select(std::span<const double> fitness, const GaConfig& cfg, GaRng& rng);

// a[0, cut_a) + b[cut_b, end), padded with random usable modifiers up to 3
// and truncated to 12.
Genome crossover_at(const Genome& a, const Genome& b, std::size_t cut_a, std::size_t cut_b,
                    const ModifierVocabulary& vocab, GaRng& rng);
// Cut points uniform over all modifier boundaries of each parent.
Genome crossover(const Genome& a, const Genome& b, const ModifierVocabulary& vocab, GaRng& rng);

struct MutationEvents {
  bool replaced = false;
  bool inserted = false;
  bool deleted = false;
};

// Replace, then insert, then delete, each decided by its own draw. Insertion
// is skipped at length 12 and deletion at length 3.
Genome mutate(const Genome& g, const ModifierVocabulary& vocab, const GaConfig& cfg, GaRng& rng,
              MutationEvents* events = nullptr);

struct GaResult {
  Genome best;
  double best_fitness = 0.0;
  std::vector<double> trace;            // best fitness seen so far, per generation
  std::vector<double> generation_best;  // best fitness within each generation
  std::uint64_t oracle_calls = 0;
  std::uint64_t cache_hits = 0;
};

// Called once per generation with the evaluated population.
using GenerationHook =
    std::function<void(std::size_t generation, const std::vector<Genome>& population, std::span<const double> fitness)>;

// Runs cfg.generations generations. Oracle failures are rethrown as
// OracleError with the generation and individual index prepended.
GaResult evolve(const LatentVector& target, const std::string& prefix, Seed seed, const ModifierVocabulary& vocab,
                GeneratorOracle& oracle, const GaConfig& cfg, const GenerationHook& hook = {});

}  // namespace seedrecon
