#include "seedrecon/ga_optimizer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <thread>

#include "seedrecon/csv.hpp"
#include "seedrecon/seed_search.hpp"

namespace seedrecon {

ModifierVocabulary::ModifierVocabulary(std::vector<VocabEntry> entries, double threshold)
    : entries_(std::move(entries)), threshold_(threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("vocabulary threshold must lie in [0, 1]");
  std::unordered_set<std::string> seen;
  for (const auto& e : entries_) {
    if (e.modifier.empty()) throw ConfigError("vocabulary contains an empty modifier");
    if (!(e.frequency >= 0.0 && e.frequency <= 1.0))
      throw ConfigError("modifier '" + e.modifier + "' has frequency outside [0, 1]");
    if (!seen.insert(e.modifier).second) throw ConfigError("duplicate modifier '" + e.modifier + "' in vocabulary");
    if (e.frequency >= threshold) {
      usable_.push_back(e.modifier);
      usable_set_.insert(e.modifier);
    }
  }
}

ModifierVocabulary ModifierVocabulary::load_csv(const std::filesystem::path& path, double threshold) {
  const auto rows = read_csv(path);
  std::vector<VocabEntry> entries;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (i == 0 && row.fields.size() >= 2 && row.fields[0] == "modifier" && row.fields[1] == "frequency") continue;
    if (row.fields.size() != 2) throw CsvError(row.line, "expected 2 columns (modifier,frequency)");
    entries.push_back({row.fields[0], csv_double(row, 1, "frequency")});
  }
  if (entries.empty()) throw CsvError(rows.empty() ? 1 : rows.back().line, "vocabulary file has no entries");
  return ModifierVocabulary(std::move(entries), threshold);
}

void GaConfig::validate() const {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string(name) + " must lie in [0, 1]");
  };
  prob(p_replace, "p_replace");
  prob(p_insert, "p_insert");
  prob(p_delete, "p_delete");
  prob(elite_fraction, "elite_fraction");
  if (population == 0) throw ConfigError("population must be positive");
  if (generations == 0) throw ConfigError("generations must be positive");
  if (tournament_size < 2) throw ConfigError("tournament_size must be at least 2");
  if (elite_fraction * static_cast<double>(population) < 1.0 - 1e-9)
    throw ConfigError("elite_fraction * population must be at least 1");
  if (elite_count() > population) throw ConfigError("elite count exceeds population");
}

std::size_t GaConfig::elite_count() const {
  // The small slack keeps products like 0.05 * 100 = 5.000000000000001 at 5.
  return static_cast<std::size_t>(std::ceil(elite_fraction * static_cast<double>(population) - 1e-9));
}

nlohmann::json GaConfig::to_json() const {
  return {{"population", population},         {"generations", generations}, {"tournament_size", tournament_size},
          {"p_replace", p_replace},           {"p_insert", p_insert},       {"p_delete", p_delete},
          {"elite_fraction", elite_fraction}, {"rng_seed", rng_seed.raw},   {"workers", workers}};
}

std::size_t GaRng::index(std::size_t n) {
  // Rejection sampling on the top of the range keeps every index equally likely.
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return static_cast<std::size_t>(x % bound);
}

double GaRng::unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

void validate_genome(const Genome& g, const ModifierVocabulary& vocab) {
  if (g.size() < kMinGenomeLength || g.size() > kMaxGenomeLength)
    throw ConfigError("genome length " + std::to_string(g.size()) + " outside [3, 12]");
  for (const auto& m : g)
    if (!vocab.is_usable(m)) throw ConfigError("genome modifier '" + m + "' is not in the usable vocabulary");
}

std::vector<Genome> init_population(const ModifierVocabulary& vocab, const GaConfig& cfg, GaRng& rng) {
  cfg.validate();
  const auto& pool = vocab.usable();
  if (pool.size() < kMaxGenomeLength)
    throw ConfigError("vocabulary has " + std::to_string(pool.size()) +
                      " usable modifiers; at least 12 are needed to build genomes without repeats");
  std::vector<std::size_t> idx(pool.size());
  std::vector<Genome> pop;
  pop.reserve(cfg.population);
  for (std::size_t p = 0; p < cfg.population; ++p) {
    const std::size_t len = kMinGenomeLength + rng.index(kMaxGenomeLength - kMinGenomeLength + 1);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Genome g;
    for (std::size_t k = 0; k < len; ++k) {
      const std::size_t j = k + rng.index(idx.size() - k);
      std::swap(idx[k], idx[j]);
      g.push_back(pool[idx[k]]);
    }
    pop.push_back(std::move(g));
  }
  return pop;
}

double fitness(const Genome& g, const std::string& prefix, Seed seed, const LatentVector& target,
               GeneratorOracle& oracle) {
  const auto latent = oracle.generate(prefix, g, seed);
  if (latent.shape() != target.shape())
    throw OracleContractError("oracle " + oracle.name() + " broke the shape contract: latent " +
                              shape_to_string(latent.shape()) + " vs target " + shape_to_string(target.shape()));
  return mse_prefix(target, latent, target.size());
}

std::size_t tournament_select(std::span<const double> fit, const GaConfig& cfg, GaRng& rng) {
  if (fit.empty()) throw std::invalid_argument("tournament_select: empty population");
  if (cfg.tournament_size >= fit.size())
    return static_cast<std::size_t>(std::min_element(fit.begin(), fit.end()) - fit.begin());
  std::size_t best = rng.index(fit.size());
  for (std::size_t k = 1; k < cfg.tournament_size; ++k) {
    const std::size_t c = rng.index(fit.size());
    if (fit[c] < fit[best] || (fit[c] == fit[best] && c < best)) best = c;
  }
  return best;
}

Genome crossover_at(const Genome& a, const Genome& b, std::size_t cut_a, std::size_t cut_b,
                    const ModifierVocabulary& vocab, GaRng& rng) {
  if (cut_a > a.size() || cut_b > b.size()) throw std::invalid_argument("crossover: cut point outside parent");
  Genome child(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(cut_a));
  child.insert(child.end(), b.begin() + static_cast<std::ptrdiff_t>(cut_b), b.end());
  const auto& pool = vocab.usable();
  while (child.size() < kMinGenomeLength) child.push_back(pool[rng.index(pool.size())]);
  if (child.size() > kMaxGenomeLength) child.resize(kMaxGenomeLength);
  return child;
}

Genome crossover(const Genome& a, const Genome& b, const ModifierVocabulary& vocab, GaRng& rng) {
  const std::size_t cut_a = rng.index(a.size() + 1);
  const std::size_t cut_b = rng.index(b.size() + 1);
  return crossover_at(a, b, cut_a, cut_b, vocab, rng);
}

Genome mutate(const Genome& g, const ModifierVocabulary& vocab, const GaConfig& cfg, GaRng& rng,
              MutationEvents* events) {
  const auto& pool = vocab.usable();
  Genome out = g;
  MutationEvents ev;
  if (rng.unit() < cfg.p_replace && !out.empty()) {
    out[rng.index(out.size())] = pool[rng.index(pool.size())];
    ev.replaced = true;
  }
  if (rng.unit() < cfg.p_insert && out.size() < kMaxGenomeLength) {
    const std::size_t at = rng.index(out.size() + 1);
    out.insert(out.begin() + static_cast<std::ptrdiff_t>(at), pool[rng.index(pool.size())]);
    ev.inserted = true;
  }
  if (rng.unit() < cfg.p_delete && out.size() > kMinGenomeLength) {
    out.erase(out.begin() + static_cast<std::ptrdiff_t>(rng.index(out.size())));
    ev.deleted = true;
  }
  if (events) *events = ev;
  return out;
}

namespace {

[[noreturn]] void rethrow_with_context(std::size_t gen, std::size_t individual) {
  const std::string ctx = "generation " + std::to_string(gen) + ", individual " + std::to_string(individual) + ": ";
  try {
    throw;
  } catch (const OracleContractError& e) {
    throw OracleContractError(ctx + e.what());
  } catch (const OracleError& e) {
    throw OracleError(ctx + e.what());
  }
}

}  // namespace

GaResult evolve(const LatentVector& target, const std::string& prefix, Seed seed, const ModifierVocabulary& vocab,
                GeneratorOracle& oracle, const GaConfig& cfg, const GenerationHook& hook) {
  cfg.validate();
  if (target.empty()) throw std::invalid_argument("evolve: empty target");
  GaRng rng(cfg.rng_seed);
  auto pop = init_population(vocab, cfg, rng);

  GaResult res;
  res.best_fitness = std::numeric_limits<double>::infinity();
  std::map<Genome, double> cache;
  std::vector<double> fit(cfg.population);
  const std::size_t elites = cfg.elite_count();

  for (std::size_t gen = 0; gen < cfg.generations; ++gen) {
    // Distinct uncached genomes, each with the first individual carrying it.
    std::vector<std::size_t> pending;
    std::map<Genome, std::size_t> pending_of;
    for (std::size_t i = 0; i < pop.size(); ++i) {
      if (cache.count(pop[i])) {
        ++res.cache_hits;
      } else if (!pending_of.emplace(pop[i], pending.size()).second) {
        ++res.cache_hits;
      } else {
        pending.push_back(i);
      }
    }

    std::vector<double> scores(pending.size());
    const unsigned workers =
        oracle.concurrent() ? std::max(1U, std::min<unsigned>(cfg.workers, static_cast<unsigned>(pending.size()))) : 1U;
    if (workers <= 1) {
      for (std::size_t k = 0; k < pending.size(); ++k) {
        try {
          scores[k] = fitness(pop[pending[k]], prefix, seed, target, oracle);
        } catch (const OracleError&) {
          rethrow_with_context(gen, pending[k]);
        }
      }
    } else {
      std::atomic<std::size_t> next{0};
      std::exception_ptr error;
      std::size_t error_index = 0;
      std::mutex m;
      std::vector<std::thread> threads;
      for (unsigned w = 0; w < workers; ++w) {
        threads.emplace_back([&] {
          for (std::size_t k = next.fetch_add(1); k < pending.size(); k = next.fetch_add(1)) {
            try {
              scores[k] = fitness(pop[pending[k]], prefix, seed, target, oracle);
            } catch (...) {
              std::lock_guard lock(m);
              if (!error || pending[k] < error_index) {
                error = std::current_exception();
                error_index = pending[k];
              }
            }
          }
        });
      }
      for (auto& t : threads) t.join();
      if (error) {
        try {
          std::rethrow_exception(error);
        } catch (const OracleError&) {
          rethrow_with_context(gen, error_index);
        }
      }
    }
    res.oracle_calls += pending.size();
    for (std::size_t k = 0; k < pending.size(); ++k) cache.emplace(pop[pending[k]], scores[k]);
    for (std::size_t i = 0; i < pop.size(); ++i) fit[i] = cache.at(pop[i]);
    if (hook) hook(gen, pop, fit);

    std::vector<std::size_t> order(pop.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return fit[x] < fit[y]; });
    res.generation_best.push_back(fit[order[0]]);
    if (fit[order[0]] < res.best_fitness) {
      res.best_fitness = fit[order[0]];
      res.best = pop[order[0]];
    }
    res.trace.push_back(res.best_fitness);
    if (gen + 1 == cfg.generations) break;

    std::vector<Genome> next;
    next.reserve(cfg.population);
    for (std::size_t e = 0; e < elites; ++e) next.push_back(pop[order[e]]);
    while (next.size() < cfg.population) {
      const std::size_t p1 = tournament_select(fit, cfg, rng);
      const std::size_t p2 = tournament_select(fit, cfg, rng);
      next.push_back(mutate(crossover(pop[p1], pop[p2], vocab, rng), vocab, cfg, rng));
    }
    pop = std::move(next);
  }
  return res;
}

}  // namespace seedrecon
