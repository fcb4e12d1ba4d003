#include "seedrecon/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "seedrecon/csv.hpp"
#include "seedrecon/experiment_stats.hpp"
#include "seedrecon/ga_optimizer.hpp"
#include "seedrecon/npy.hpp"
#include "seedrecon/oracle.hpp"
#include "seedrecon/prng_core.hpp"
#include "seedrecon/secure_noise.hpp"
#include "seedrecon/seed_search.hpp"

namespace seedrecon {

unsigned default_workers() {
  if (const char* env = std::getenv("SEEDRECON_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1U, std::thread::hardware_concurrency());
}

namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

// Usage problems detected after flag parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string join_command(const std::vector<std::string>& args) {
  std::string out = "seedrecon";
  for (const auto& a : args) {
    out += ' ';
    const bool plain = !a.empty() && a.find_first_of(" \t\"'\\$`") == std::string::npos;
    out += plain ? a : json(a).dump();
  }
  return out;
}

void write_report(const std::string& path, const json& report) {
  if (path.empty()) return;
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError(path, "cannot open report for writing");
  f << report.dump(2) << '\n';
  if (!f.flush()) throw IoError(path, "report write failed");
}

json make_report(const std::vector<std::string>& args, const std::string& sub, json config, json results,
                 double wall) {
  return {{"command", join_command(args)}, {"subcommand", sub},  {"config", std::move(config)},
          {"results", std::move(results)}, {"wall_seconds", wall}, {"version", kVersion}};
}

struct GenNoiseOpts {
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string shape = "16x64x64";
  std::string out;
  bool secure = false;
  std::string key;
  std::string report;
};

struct RecoverOpts {
  std::string target;
  std::string mode = "range";
  std::uint64_t lo = 0;
  std::uint64_t hi = 100000;
  unsigned subrange_bits = 32;
  unsigned workers = 0;
  std::string report;
  double min_z = 10.0;
  std::uint64_t chunk_size = 1ULL << 16;
  std::size_t stage1_len = 1U << 13;
  std::size_t stage1_keep = 1U << 13;
  std::size_t stage2_len = 1U << 15;
};

struct GaOpts {
  std::string target;
  std::string prefix;
  std::uint64_t seed = 0;
  std::string vocab;
  double threshold = 0.01;
  std::string oracle = "mock";
  long oracle_timeout_ms = 30000;
  GaConfig cfg;
  std::uint64_t rng_seed = 0;
  std::string report;
};

struct StatsOpts {
  std::string pairs;
  std::string seeds;
  std::string report;
};

int cmd_gen_noise(const std::vector<std::string>& args, const GenNoiseOpts& o, std::ostream& out) {
  const auto t0 = Clock::now();
  if (o.secure && o.key.empty()) throw UsageError("--secure requires --key HEX64");
  if (!o.secure && !o.key.empty()) throw UsageError("--key is only valid with --secure");
  if (!o.secure && !o.seed_given) throw UsageError("--seed is required unless --secure is given");
  Shape shape;
  try {
    shape = parse_shape(o.shape);
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("--shape: ") + e.what());
  }
  NoiseVector noise;
  json config = {{"shape", shape_to_string(shape)}, {"out", o.out}, {"secure", o.secure}};
  if (o.secure) {
    SecureSeed key;
    try {
      key = SecureSeed::from_hex(o.key);
    } catch (const std::invalid_argument& e) {
      throw UsageError(std::string("--key: ") + e.what());
    }
    noise = chacha_randn(key, shape);
    config["key"] = key.key_hex();
  } else {
    noise = randn(Seed(o.seed), shape);
    config["seed"] = o.seed;
  }
  write_npy(noise, o.out);
  const double wall = std::chrono::duration<double>(Clock::now() - t0).count();
  json results = {{"elements", noise.size()}, {"file", o.out}};
  if (!o.secure) results["effective_seed"] = Seed(o.seed).effective();
  write_report(o.report, make_report(args, "gen-noise", config, results, wall));
  out << "wrote " << noise.size() << " values (" << shape_to_string(shape) << ") to " << o.out << '\n';
  return kExitOk;
}

int cmd_recover_seed(const std::vector<std::string>& args, const RecoverOpts& o, bool range_flags_given,
                     bool subrange_given, std::ostream& out) {
  const auto t0 = Clock::now();
  if (o.mode != "range" && o.mode != "full32") throw UsageError("--mode must be range or full32");
  if (o.mode == "full32" && range_flags_given) throw UsageError("--lo/--hi are only valid with --mode range");
  if (o.mode == "range" && subrange_given) throw UsageError("--subrange-bits is only valid with --mode full32");
  if (o.subrange_bits == 0 || o.subrange_bits > 32) throw UsageError("--subrange-bits must lie in [1, 32]");
  if (o.mode == "range" && o.lo >= o.hi) throw UsageError("--lo must be below --hi");
  const unsigned workers = o.workers ? o.workers : default_workers();

  const auto target = read_npy(o.target);
  json config = {{"target", o.target}, {"mode", o.mode}, {"workers", workers}, {"min_z", o.min_z}};
  SeedRanking ranking;
  if (o.mode == "range") {
    ScanOptions so;
    so.workers = workers;
    so.chunk_size = o.chunk_size;
    config["lo"] = o.lo;
    config["hi"] = o.hi;
    config["chunk_size"] = o.chunk_size;
    ranking = scan_range(target, Seed(o.lo), Seed(o.hi), so);
  } else {
    SearchConfig sc;
    sc.lo = 0;
    sc.hi = 1ULL << o.subrange_bits;
    sc.chunk_size = o.chunk_size;
    sc.stage1_len = o.stage1_len;
    sc.stage1_keep = o.stage1_keep;
    sc.stage2_len = std::min<std::size_t>(o.stage2_len, target.size());
    sc.stage1_len = std::min(sc.stage1_len, sc.stage2_len);
    sc.workers = workers;
    config["search"] = sc.to_json();
    config["subrange_bits"] = o.subrange_bits;
    try {
      ranking = two_stage_search(target, sc);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  const auto gap = confidence_gap(ranking);
  const bool confident = gap.z_score >= o.min_z;
  json results = ranking_to_json(ranking);
  results["confident"] = confident;
  if (o.mode == "full32") {
    results["extrapolated_full32_seconds"] =
        ranking.wall_seconds * static_cast<double>(kSeedSpace32) / static_cast<double>(ranking.evaluated);
  }
  const double wall = std::chrono::duration<double>(Clock::now() - t0).count();
  write_report(o.report, make_report(args, "recover-seed", config, results, wall));

  out << "best seed " << ranking.best.seed.raw << "  loss " << std::setprecision(6) << ranking.best.loss
      << "\nsecond    " << ranking.second_best.seed.raw << "  loss " << ranking.second_best.loss << "\nmean loss "
      << ranking.mean_loss << "  gap ratio " << gap.gap_ratio << "  z " << gap.z_score << "\nevaluated "
      << ranking.evaluated << " seeds in " << ranking.wall_seconds << " s\n";
  if (!confident) {
    out << "low confidence: z " << gap.z_score << " below threshold " << o.min_z << '\n';
    return kExitLowConfidence;
  }
  return kExitOk;
}

int cmd_ga_recover(const std::vector<std::string>& args, GaOpts o, std::ostream& out) {
  const auto t0 = Clock::now();
  o.cfg.rng_seed = Seed(o.rng_seed);
  if (o.cfg.workers == 0) o.cfg.workers = default_workers();
  try {
    o.cfg.validate();
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  const auto target = read_npy(o.target);
  const auto vocab = ModifierVocabulary::load_csv(o.vocab, o.threshold);
  ExecOracleOptions eo;
  eo.timeout = std::chrono::milliseconds(o.oracle_timeout_ms);
  eo.shape = target.shape();
  std::unique_ptr<GeneratorOracle> oracle;
  try {
    oracle = make_oracle(o.oracle, target.shape(), eo);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const auto res = evolve(target, o.prefix, Seed(o.seed), vocab, *oracle, o.cfg);

  json config = {{"target", o.target},       {"prefix", o.prefix},     {"seed", o.seed},
                 {"vocab", o.vocab},         {"threshold", o.threshold}, {"oracle", o.oracle},
                 {"ga", o.cfg.to_json()},    {"oracle_timeout_ms", o.oracle_timeout_ms}};
  json results = {{"best_genome", res.best},
                  {"best_fitness", res.best_fitness},
                  {"prompt", assemble_prompt(o.prefix, res.best)},
                  {"trace", res.trace},
                  {"generation_best", res.generation_best},
                  {"oracle_calls", res.oracle_calls},
                  {"cache_hits", res.cache_hits}};
  const double wall = std::chrono::duration<double>(Clock::now() - t0).count();
  write_report(o.report, make_report(args, "ga-recover", config, results, wall));
  out << "best fitness " << res.best_fitness << "\nprompt: " << assemble_prompt(o.prefix, res.best) << '\n';
  return kExitOk;
}

int cmd_stats(const std::vector<std::string>& args, const StatsOpts& o, std::ostream& out) {
  const auto t0 = Clock::now();
  if (o.pairs.empty() == o.seeds.empty()) throw UsageError("give exactly one of --pairs or --seeds");
  json config, results;
  if (!o.pairs.empty()) {
    config = {{"pairs", o.pairs}};
    const auto pairs = load_pairs_csv(o.pairs);
    const auto s = ssdm_dssm_summary(pairs);
    results = to_json(s);
    results["n_pairs"] = pairs.size();
    out << "pairs " << pairs.size() << "  median ssdm " << s.median_ssdm << "  median dssm " << s.median_dssm
        << "  median delta " << s.median_delta << "\nwilcoxon W " << s.test.statistic << "  p " << s.test.p_value
        << " (" << to_json(s.test)["method"].get<std::string>() << ")\n";
  } else {
    config = {{"seeds", o.seeds}};
    const auto table = load_seeds_csv(o.seeds);
    const auto h = seed_histogram(table.seeds, table.cpu);
    results = to_json(h);
    out << "seeds " << h.total << "  effectively 32-bit " << h.effective32 << " (" << h.effective32_fraction
        << ")\n";
  }
  const double wall = std::chrono::duration<double>(Clock::now() - t0).count();
  write_report(o.report, make_report(args, "stats", config, results, wall));
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Seed and prompt-modifier recovery for CPU-seeded latent diffusion noise", "seedrecon"};
  app.set_version_flag("--version", std::string("seedrecon ") + kVersion);
  app.require_subcommand(1);

  GenNoiseOpts gn;
  auto* gen = app.add_subcommand("gen-noise", "Write the noise tensor of a seed as NPY");
  auto* gen_seed = gen->add_option("--seed", gn.seed, "Generator seed (64-bit; low 32 bits are used)");
  gen->add_option("--shape", gn.shape, "Shape, e.g. 16x64x64")->capture_default_str();
  gen->add_option("--out", gn.out, "Output .npy path")->required();
  gen->add_flag("--secure", gn.secure, "Use the ChaCha20 generator");
  gen->add_option("--key", gn.key, "64 hex digit key for --secure");
  gen->add_option("--report", gn.report, "Write a JSON run report");

  RecoverOpts ro;
  auto* rec = app.add_subcommand("recover-seed", "Recover the seed of a target latent");
  rec->add_option("--target", ro.target, "Target latent .npy")->required();
  rec->add_option("--mode", ro.mode, "range or full32")->capture_default_str();
  auto* lo_opt = rec->add_option("--lo", ro.lo, "First seed of the range (range mode)");
  auto* hi_opt = rec->add_option("--hi", ro.hi, "End of the range, exclusive (range mode)");
  auto* sub_opt = rec->add_option("--subrange-bits", ro.subrange_bits,
                                  "full32 mode: scan only [0, 2^B), for timing runs");
  rec->add_option("--workers", ro.workers, "Worker threads (default: SEEDRECON_WORKERS or all cores)");
  rec->add_option("--report", ro.report, "Write a JSON run report");
  rec->add_option("--min-z", ro.min_z, "Exit 3 when the best seed's z-score is below this")->capture_default_str();
  rec->add_option("--chunk-size", ro.chunk_size, "Seeds per work chunk")->capture_default_str();
  rec->add_option("--stage1-len", ro.stage1_len, "full32: prefix length of stage 1")->capture_default_str();
  rec->add_option("--stage1-keep", ro.stage1_keep, "full32: candidates kept after stage 1")->capture_default_str();
  rec->add_option("--stage2-len", ro.stage2_len, "full32: prefix length of stage 2")->capture_default_str();

  GaOpts go;
  auto* ga = app.add_subcommand("ga-recover", "Recover prompt modifiers with a genetic algorithm");
  ga->add_option("--target", go.target, "Target latent .npy")->required();
  ga->add_option("--prefix", go.prefix, "Prompt prefix (subject)")->required();
  ga->add_option("--seed", go.seed, "Generation seed")->required();
  ga->add_option("--vocab", go.vocab, "Vocabulary CSV (modifier,frequency)")->required();
  ga->add_option("--threshold", go.threshold, "Minimum modifier frequency")->capture_default_str();
  ga->add_option("--oracle", go.oracle, "mock or exec:COMMAND")->capture_default_str();
  ga->add_option("--oracle-timeout-ms", go.oracle_timeout_ms, "Per-request oracle timeout")->capture_default_str();
  ga->add_option("--population", go.cfg.population)->capture_default_str();
  ga->add_option("--generations", go.cfg.generations)->capture_default_str();
  ga->add_option("--tournament-size", go.cfg.tournament_size)->capture_default_str();
  ga->add_option("--p-replace", go.cfg.p_replace)->capture_default_str();
  ga->add_option("--p-insert", go.cfg.p_insert)->capture_default_str();
  ga->add_option("--p-delete", go.cfg.p_delete)->capture_default_str();
  ga->add_option("--elite-fraction", go.cfg.elite_fraction)->capture_default_str();
  ga->add_option("--rng-seed", go.rng_seed)->capture_default_str();
  go.cfg.workers = 0;
  ga->add_option("--workers", go.cfg.workers, "Concurrent fitness evaluations (mock oracle only)");
  ga->add_option("--report", go.report, "Write a JSON run report");

  StatsOpts so;
  auto* st = app.add_subcommand("stats", "Wilcoxon summary of loss pairs or a seed histogram");
  st->add_option("--pairs", so.pairs, "CSV label,ssdm,dssm");
  st->add_option("--seeds", so.seeds, "CSV seed[,cpu]");
  st->add_option("--report", so.report, "Write a JSON run report");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << "seedrecon " << kVersion << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (gen->parsed()) {
      gn.seed_given = gen_seed->count() > 0;
      return cmd_gen_noise(args, gn, out);
    }
    if (rec->parsed())
      return cmd_recover_seed(args, ro, lo_opt->count() + hi_opt->count() > 0, sub_opt->count() > 0, out);
    if (ga->parsed()) return cmd_ga_recover(args, go, out);
    if (st->parsed()) return cmd_stats(args, so, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const CsvError& e) {
    err << "error: malformed CSV: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const OracleError& e) {
    err << "error: oracle failure: " << e.what() << '\n';
    return kExitOracle;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const NpyFormatError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const InsufficientDataError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  err << "error: no subcommand\n";
  return kExitUsage;
}

}  // namespace seedrecon
