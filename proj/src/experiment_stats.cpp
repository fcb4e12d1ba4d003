#include "seedrecon/experiment_stats.hpp"

#include <algorithm>
#include <bit>
#include <limits>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <random>

#include "seedrecon/csv.hpp"

namespace seedrecon {

std::vector<double> average_ranks(std::span<const double> magnitudes) {
  const std::size_t n = magnitudes.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return magnitudes[a] < magnitudes[b]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && magnitudes[order[j + 1]] == magnitudes[order[i]]) ++j;
    const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

double lower_median(std::vector<double> values) {
  if (values.empty()) throw InsufficientDataError("median of an empty sample");
  const std::size_t k = (values.size() - 1) / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k), values.end());
  return values[k];
}

namespace {

// P(|2 T+ - R| >= |2 t - R|) for doubled integer ranks, via the exact
// distribution of the doubled sum over all sign patterns.
double exact_two_sided_p(const std::vector<std::uint64_t>& rank2, std::uint64_t t2) {
  const std::uint64_t total = std::accumulate(rank2.begin(), rank2.end(), std::uint64_t{0});
  std::vector<double> prob(total + 1, 0.0);
  prob[0] = 1.0;
  std::uint64_t reach = 0;
  for (std::uint64_t r : rank2) {
    reach += r;
    for (std::uint64_t s = reach; s >= r; --s) prob[s] = 0.5 * prob[s] + 0.5 * prob[s - r];
    for (std::uint64_t s = std::min(r, reach + 1); s-- > 0;) prob[s] *= 0.5;
  }
  const auto dev = [&](std::uint64_t s) {
    const std::int64_t d = 2 * static_cast<std::int64_t>(s) - static_cast<std::int64_t>(total);
    return d < 0 ? -d : d;
  };
  const std::int64_t observed = dev(t2);
  double p = 0.0;
  for (std::uint64_t s = 0; s <= total; ++s)
    if (dev(s) >= observed) p += prob[s];
  return std::min(1.0, p);
}

}  // namespace

WilcoxonResult wilcoxon_signed_rank(std::span<const double> deltas, std::optional<WilcoxonMethod> force) {
  std::vector<double> nonzero;
  for (double d : deltas) {
    if (!std::isfinite(d)) throw std::invalid_argument("wilcoxon: non-finite difference");
    if (d != 0.0) nonzero.push_back(d);
  }
  const std::size_t n = nonzero.size();
  if (n < kWilcoxonMinN)
    throw InsufficientDataError("wilcoxon: " + std::to_string(n) + " non-zero differences, need at least " +
                                std::to_string(kWilcoxonMinN));

  std::vector<double> mags(n);
  for (std::size_t i = 0; i < n; ++i) mags[i] = std::fabs(nonzero[i]);
  const auto ranks = average_ranks(mags);

  // Average ranks are multiples of 1/2, so doubled ranks are exact integers.
  std::vector<std::uint64_t> rank2(n);
  std::uint64_t t2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    rank2[i] = static_cast<std::uint64_t>(std::llround(2.0 * ranks[i]));
    if (nonzero[i] > 0) t2 += rank2[i];
  }
  const std::uint64_t total2 = static_cast<std::uint64_t>(n * (n + 1));

  WilcoxonResult r;
  r.n_effective = n;
  r.w_plus = static_cast<double>(t2) / 2.0;
  r.statistic = (2.0 * static_cast<double>(t2) - static_cast<double>(total2)) / 2.0;
  r.median_delta = lower_median(std::vector<double>(deltas.begin(), deltas.end()));
  r.method = force.value_or(n <= kWilcoxonExactMaxN ? WilcoxonMethod::exact : WilcoxonMethod::normal_approximation);

  if (r.method == WilcoxonMethod::exact) {
    r.p_value = exact_two_sided_p(rank2, t2);
  } else {
    const double nn = static_cast<double>(n);
    const double mean = nn * (nn + 1.0) / 4.0;
    double tie_term = 0.0;
    std::map<std::uint64_t, std::uint64_t> groups;
    for (auto v : rank2) ++groups[v];
    for (const auto& [rank, t] : groups) {
      const double tt = static_cast<double>(t);
      tie_term += tt * tt * tt - tt;
    }
    const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
    if (var <= 0.0) {
      r.p_value = 1.0;
    } else {
      const double z = std::max(0.0, std::fabs(r.w_plus - mean) - 0.5) / std::sqrt(var);
      r.p_value = std::min(1.0, std::erfc(z / std::numbers::sqrt2));
    }
  }
  return r;
}

WilcoxonResult wilcoxon_signed_rank(const std::vector<PairedSample>& pairs) {
  std::vector<double> d;
  d.reserve(pairs.size());
  for (const auto& p : pairs) d.push_back(p.delta());
  return wilcoxon_signed_rank(d);
}

SsdmDssmSummary ssdm_dssm_summary(const std::vector<PairedSample>& pairs) {
  SsdmDssmSummary s;
  s.test = wilcoxon_signed_rank(pairs);
  std::vector<double> a, b, d;
  for (const auto& p : pairs) {
    a.push_back(p.ssdm);
    b.push_back(p.dssm);
    d.push_back(p.delta());
  }
  s.median_ssdm = lower_median(a);
  s.median_dssm = lower_median(b);
  s.median_delta = lower_median(d);
  return s;
}

std::vector<PairedSample> synthetic_pairs(std::size_t n, std::uint64_t rng_seed, double ssdm_median,
                                          double dssm_median, double log_spread) {
  std::mt19937_64 eng(rng_seed);
  auto unit = [&] { return (static_cast<double>(eng() >> 11) + 0.5) * 0x1.0p-53; };
  auto normal = [&] { return std::sqrt(-2.0 * std::log(unit())) * std::cos(2.0 * std::numbers::pi * unit()); };
  std::vector<PairedSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    PairedSample p;
    p.label = "pair" + std::to_string(i);
    p.ssdm = ssdm_median * std::exp(log_spread * normal());
    p.dssm = dssm_median * std::exp(log_spread * normal());
    out.push_back(std::move(p));
  }
  return out;
}

std::size_t seed_bucket(Seed s) noexcept {
  if (s.raw == std::numeric_limits<std::uint64_t>::max()) return 64;
  return static_cast<std::size_t>(std::bit_width(s.raw + 1) - 1);
}

SeedHistogram seed_histogram(std::span<const Seed> seeds, const std::vector<bool>& cpu_flags) {
  if (seeds.empty()) throw std::invalid_argument("seed_histogram: no seeds");
  if (!cpu_flags.empty() && cpu_flags.size() != seeds.size())
    throw std::invalid_argument("seed_histogram: cpu flag count does not match seed count");
  SeedHistogram h;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    ++h.buckets[seed_bucket(seeds[i])];
    if (seeds[i].raw < kSeedSpace32 || (!cpu_flags.empty() && cpu_flags[i])) ++h.effective32;
  }
  h.total = seeds.size();
  h.effective32_fraction = static_cast<double>(h.effective32) / static_cast<double>(h.total);
  return h;
}

namespace {

bool is_header(const CsvRow& row, std::initializer_list<const char*> names) {
  if (row.fields.size() < names.size()) return false;
  std::size_t i = 0;
  for (const char* n : names)
    if (row.fields[i++] != n) return false;
  return true;
}

bool parse_flag(const CsvRow& row, std::size_t col) {
  const auto& f = row.fields[col];
  if (f == "1" || f == "true" || f == "True") return true;
  if (f == "0" || f == "false" || f == "False" || f.empty()) return false;
  throw CsvError(row.line, "column 'cpu': '" + f + "' is not a boolean");
}

}  // namespace

std::vector<PairedSample> load_pairs_csv(const std::filesystem::path& path) {
  const auto rows = read_csv(path);
  std::vector<PairedSample> out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (i == 0 && is_header(row, {"label", "ssdm", "dssm"})) continue;
    if (row.fields.size() != 3) throw CsvError(row.line, "expected 3 columns (label,ssdm,dssm)");
    out.push_back({row.fields[0], csv_double(row, 1, "ssdm"), csv_double(row, 2, "dssm")});
  }
  if (out.empty()) throw CsvError(rows.empty() ? 1 : rows.back().line, "no data rows");
  return out;
}

SeedTable load_seeds_csv(const std::filesystem::path& path) {
  const auto rows = read_csv(path);
  SeedTable t;
  std::optional<std::size_t> width;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (i == 0 && (is_header(row, {"seed"}))) {
      width = row.fields.size();
      if (*width > 2 || (*width == 2 && row.fields[1] != "cpu"))
        throw CsvError(row.line, "expected header seed[,cpu]");
      continue;
    }
    if (!width) width = row.fields.size();
    if (row.fields.size() != *width || *width > 2)
      throw CsvError(row.line, "expected " + std::to_string(std::min<std::size_t>(*width, 2)) + " column(s) (seed[,cpu])");
    t.seeds.emplace_back(csv_u64(row, 0, "seed"));
    if (*width == 2) t.cpu.push_back(parse_flag(row, 1));
  }
  if (t.seeds.empty()) throw CsvError(rows.empty() ? 1 : rows.back().line, "no data rows");
  return t;
}

nlohmann::json to_json(const WilcoxonResult& r) {
  return {{"statistic", r.statistic},
          {"w_plus", r.w_plus},
          {"n_effective", r.n_effective},
          {"p_value", r.p_value},
          {"method", r.method == WilcoxonMethod::exact ? "exact" : "normal-approximation"},
          {"median_delta", r.median_delta}};
}

nlohmann::json to_json(const SsdmDssmSummary& s) {
  return {{"median_ssdm", s.median_ssdm},
          {"median_dssm", s.median_dssm},
          {"median_delta", s.median_delta},
          {"wilcoxon", to_json(s.test)}};
}

nlohmann::json to_json(const SeedHistogram& h) {
  nlohmann::json buckets = nlohmann::json::array();
  for (std::size_t b = 0; b < h.buckets.size(); ++b)
    if (h.buckets[b]) buckets.push_back({{"log2_bucket", b}, {"count", h.buckets[b]}});
  return {{"total", h.total},
          {"effective32", h.effective32},
          {"effective32_fraction", h.effective32_fraction},
          {"buckets", buckets}};
}

}  // namespace seedrecon
