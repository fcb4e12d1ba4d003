#include "seedrecon/seed_search.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "seedrecon/detail/lane_kernel.hpp"
#include "seedrecon/prng_core.hpp"

namespace seedrecon {

double mse_prefix(const LatentVector& a, const NoiseVector& b, std::size_t n) {
  if (n == 0) throw std::invalid_argument("mse_prefix: n must be positive");
  if (n > a.size() || n > b.size())
    throw std::invalid_argument("mse_prefix: n = " + std::to_string(n) + " exceeds operand length");
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    sum = std::fma(d, d, sum);
  }
  return sum / static_cast<double>(n);
}

bool ranks_before(const Candidate& a, const Candidate& b) noexcept {
  if (a.loss != b.loss) return a.loss < b.loss;
  return a.seed.raw < b.seed.raw;
}

namespace {

using Clock = std::chrono::steady_clock;

// Bounded set of the best candidates seen. Which candidates it ends up
// holding depends only on the multiset inserted, never on insertion order.
class TopK {
 public:
  explicit TopK(std::size_t cap) : cap_(cap) { heap_.reserve(cap); }

  void push(const Candidate& c) {
    if (cap_ == 0) return;
    if (heap_.size() < cap_) {
      heap_.push_back(c);
      std::push_heap(heap_.begin(), heap_.end(), ranks_before);
    } else if (ranks_before(c, heap_.front())) {
      std::pop_heap(heap_.begin(), heap_.end(), ranks_before);
      heap_.back() = c;
      std::push_heap(heap_.begin(), heap_.end(), ranks_before);
    }
  }

  // Losses above this cannot enter.
  double admit_limit() const noexcept {
    return heap_.size() < cap_ ? std::numeric_limits<double>::infinity() : heap_.front().loss;
  }

  void merge(const TopK& other) {
    for (const auto& c : other.heap_) push(c);
  }

  std::vector<Candidate> sorted() const {
    auto out = heap_;
    std::sort(out.begin(), out.end(), ranks_before);
    return out;
  }

 private:
  std::size_t cap_;
  std::vector<Candidate> heap_;
};

// Count, mean and sum of squared deviations of one chunk's losses.
struct Moments {
  std::uint64_t count = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) noexcept {
    ++count;
    const double delta = x - mean;
    mean += delta / static_cast<double>(count);
    m2 += delta * (x - mean);
  }

  void merge(const Moments& o) noexcept {
    if (o.count == 0) return;
    if (count == 0) {
      *this = o;
      return;
    }
    const double n = static_cast<double>(count + o.count);
    const double delta = o.mean - mean;
    mean += delta * static_cast<double>(o.count) / n;
    m2 += o.m2 + delta * delta * static_cast<double>(count) * static_cast<double>(o.count) / n;
    count += o.count;
  }
};

struct ScanResult {
  std::vector<Candidate> best;  // sorted
  Moments moments;
};

std::vector<double> widen(const LatentVector& target) {
  return std::vector<double>(target.values().begin(), target.values().end());
}

// Runs fn(i) for i in [0, count) on up to `workers` threads, each index
// exactly once. Rethrows the first worker exception.
template <class Fn>
void parallel_for(std::uint64_t count, unsigned workers, Fn&& fn) {
  workers = static_cast<unsigned>(std::max<std::uint64_t>(1, std::min<std::uint64_t>(workers, count)));
  if (workers <= 1) {
    for (std::uint64_t i = 0; i < count; ++i) fn(i, 0U);
    return;
  }
  std::atomic<std::uint64_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      try {
        for (std::uint64_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i, w);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(count);
      }
    });
  }
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

// Scores seeds [lo, hi) on the first n of numel elements.
ScanResult scan_seeds(const std::vector<double>& target, std::size_t numel, std::size_t n, std::uint64_t lo,
                      std::uint64_t hi, std::uint64_t chunk_size, unsigned workers, std::size_t keep) {
  const std::uint64_t total = hi - lo;
  const std::uint64_t chunks = (total + chunk_size - 1) / chunk_size;
  workers = std::max(1U, workers);

  std::vector<Moments> chunk_moments(chunks);
  std::vector<TopK> local(workers, TopK(keep));
  std::vector<std::vector<std::uint32_t>> seed_buf(workers);
  std::vector<std::vector<double>> sum_buf(workers);

  parallel_for(chunks, workers, [&](std::uint64_t c, unsigned w) {
    const std::uint64_t first = lo + c * chunk_size;
    const std::uint64_t count = std::min(chunk_size, hi - first);
    auto& seeds = seed_buf[w];
    auto& sums = sum_buf[w];
    seeds.resize(count);
    sums.resize(count);
    for (std::uint64_t i = 0; i < count; ++i) seeds[i] = Seed(first + i).effective();
    detail::sse_seeds(seeds, target.data(), numel, n, sums);

    Moments m;
    TopK& top = local[w];
    double limit = top.admit_limit();
    const double dn = static_cast<double>(n);
    for (std::uint64_t i = 0; i < count; ++i) {
      const double loss = sums[i] / dn;
      m.add(loss);
      if (loss <= limit) {
        top.push({Seed(first + i), loss});
        limit = top.admit_limit();
      }
    }
    chunk_moments[c] = m;
  });

  ScanResult out;
  TopK merged(keep);
  for (const auto& t : local) merged.merge(t);
  out.best = merged.sorted();
  for (const auto& m : chunk_moments) out.moments.merge(m);
  return out;
}

// Loss of each seed on the first n elements, index-aligned with `seeds`.
std::vector<double> rescore(const std::vector<double>& target, std::size_t numel, std::size_t n,
                            const std::vector<Seed>& seeds, unsigned workers) {
  std::vector<std::uint32_t> eff(seeds.size());
  for (std::size_t i = 0; i < seeds.size(); ++i) eff[i] = seeds[i].effective();
  std::vector<double> sums(seeds.size());
  constexpr std::size_t kBlock = 256;
  const std::uint64_t blocks = (seeds.size() + kBlock - 1) / kBlock;
  parallel_for(blocks, workers, [&](std::uint64_t b, unsigned) {
    const std::size_t begin = b * kBlock;
    const std::size_t count = std::min(kBlock, seeds.size() - begin);
    detail::sse_seeds(std::span<const std::uint32_t>(eff).subspan(begin, count), target.data(), numel, n,
                      std::span<double>(sums).subspan(begin, count));
  });
  for (auto& s : sums) s /= static_cast<double>(n);
  return sums;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

SeedRanking scan_range(const LatentVector& target, Seed lo, Seed hi, const ScanOptions& opts) {
  if (target.empty()) throw std::invalid_argument("scan_range: empty target");
  if (lo.raw >= hi.raw) throw std::invalid_argument("scan_range: empty seed range (lo >= hi)");
  if (opts.chunk_size == 0) throw std::invalid_argument("scan_range: chunk_size must be positive");
  const auto t0 = Clock::now();

  const auto t = widen(target);
  const std::size_t numel = target.size();
  const auto scan = scan_seeds(t, numel, numel, lo.raw, hi.raw, opts.chunk_size, opts.workers,
                               std::max<std::size_t>(opts.keep, 2));

  SeedRanking r;
  r.evaluated = hi.raw - lo.raw;
  r.mean_loss = scan.moments.mean;
  r.loss_stddev = std::sqrt(scan.moments.m2 / static_cast<double>(scan.moments.count));
  if (!scan.best.empty()) r.best = scan.best[0];
  if (scan.best.size() > 1) r.second_best = scan.best[1];
  for (std::size_t i = 0; i < scan.best.size() && i < opts.keep; ++i) {
    RankedSeed rs;
    rs.seed = scan.best[i].seed;
    rs.full_loss = scan.best[i].loss;
    r.top_k.push_back(rs);
  }
  r.stats.target_elements = numel;
  r.stats.full_seeds = r.evaluated;
  r.stats.full_reads = r.evaluated * numel;
  r.wall_seconds = seconds_since(t0);
  return r;
}

nlohmann::json SearchConfig::to_json() const {
  return {{"lo", lo},
          {"hi", hi},
          {"chunk_size", chunk_size},
          {"stage1_len", stage1_len},
          {"stage1_keep", stage1_keep},
          {"stage2_len", stage2_len},
          {"final_rescore", final_rescore},
          {"workers", workers}};
}

SeedRanking two_stage_search(const LatentVector& target, const SearchConfig& cfg) {
  if (cfg.lo >= cfg.hi) throw std::invalid_argument("two_stage_search: empty seed range (lo >= hi)");
  if (cfg.chunk_size == 0) throw std::invalid_argument("two_stage_search: chunk_size must be positive");
  if (cfg.stage1_len == 0 || cfg.stage1_len > cfg.stage2_len)
    throw std::invalid_argument("two_stage_search: need 0 < stage1_len <= stage2_len");
  if (cfg.stage1_keep < 2) throw std::invalid_argument("two_stage_search: stage1_keep must be at least 2");
  if (target.size() < cfg.stage2_len)
    throw std::invalid_argument("two_stage_search: target has " + std::to_string(target.size()) +
                                " elements, fewer than stage2_len = " + std::to_string(cfg.stage2_len));
  const auto t0 = Clock::now();

  const auto t = widen(target);
  const std::size_t numel = target.size();
  const auto stage1 =
      scan_seeds(t, numel, cfg.stage1_len, cfg.lo, cfg.hi, cfg.chunk_size, cfg.workers, cfg.stage1_keep);

  SeedRanking r;
  r.evaluated = cfg.hi - cfg.lo;
  r.mean_loss = stage1.moments.mean;
  r.loss_stddev = std::sqrt(stage1.moments.m2 / static_cast<double>(stage1.moments.count));
  r.stats.target_elements = numel;
  r.stats.stage1_seeds = r.evaluated;
  r.stats.stage1_reads = r.evaluated * cfg.stage1_len;

  std::vector<Seed> survivors;
  survivors.reserve(stage1.best.size());
  for (const auto& c : stage1.best) survivors.push_back(c.seed);
  const auto stage2 = rescore(t, numel, cfg.stage2_len, survivors, cfg.workers);
  r.stats.stage2_seeds = survivors.size();
  r.stats.stage2_reads = survivors.size() * cfg.stage2_len;

  r.top_k.resize(survivors.size());
  for (std::size_t i = 0; i < survivors.size(); ++i) {
    r.top_k[i].seed = survivors[i];
    r.top_k[i].stage1_loss = stage1.best[i].loss;
    r.top_k[i].stage2_loss = stage2[i];
  }
  std::sort(r.top_k.begin(), r.top_k.end(), [](const RankedSeed& a, const RankedSeed& b) {
    return ranks_before({a.seed, a.stage2_loss}, {b.seed, b.stage2_loss});
  });

  const std::size_t finalists = std::min(std::max<std::size_t>(cfg.final_rescore, 2), r.top_k.size());
  std::vector<Seed> final_seeds;
  for (std::size_t i = 0; i < finalists; ++i) final_seeds.push_back(r.top_k[i].seed);
  const auto full = rescore(t, numel, numel, final_seeds, cfg.workers);
  r.stats.full_seeds = finalists;
  r.stats.full_reads = finalists * numel;

  std::vector<Candidate> ranked;
  for (std::size_t i = 0; i < finalists; ++i) {
    r.top_k[i].full_loss = full[i];
    ranked.push_back({final_seeds[i], full[i]});
  }
  std::sort(ranked.begin(), ranked.end(), ranks_before);
  r.best = ranked[0];
  if (ranked.size() > 1) r.second_best = ranked[1];
  r.wall_seconds = seconds_since(t0);
  return r;
}

ConfidenceGap confidence_gap(const SeedRanking& r) {
  ConfidenceGap g;
  g.gap_ratio = r.best.loss > 0.0 ? r.second_best.loss / r.best.loss : std::numeric_limits<double>::infinity();
  g.z_score = r.loss_stddev > 0.0 ? (r.mean_loss - r.best.loss) / r.loss_stddev : 0.0;
  return g;
}

namespace {

nlohmann::json loss_json(double v) {
  if (std::isnan(v)) return nullptr;
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

}  // namespace

nlohmann::json ranking_to_json(const SeedRanking& r, std::size_t max_top) {
  const auto gap = confidence_gap(r);
  nlohmann::json top = nlohmann::json::array();
  for (std::size_t i = 0; i < r.top_k.size() && i < max_top; ++i) {
    const auto& s = r.top_k[i];
    top.push_back({{"seed", s.seed.raw},
                   {"stage1_loss", loss_json(s.stage1_loss)},
                   {"stage2_loss", loss_json(s.stage2_loss)},
                   {"full_loss", loss_json(s.full_loss)}});
  }
  return {{"best_seed", r.best.seed.raw},
          {"best_loss", loss_json(r.best.loss)},
          {"second_best_seed", r.second_best.seed.raw},
          {"second_best_loss", loss_json(r.second_best.loss)},
          {"mean_loss", loss_json(r.mean_loss)},
          {"loss_stddev", loss_json(r.loss_stddev)},
          {"gap_ratio", loss_json(gap.gap_ratio)},
          {"z_score", loss_json(gap.z_score)},
          {"evaluated", r.evaluated},
          {"wall_seconds", r.wall_seconds},
          {"reads",
           {{"target_elements", r.stats.target_elements},
            {"stage1_seeds", r.stats.stage1_seeds},
            {"stage1_reads", r.stats.stage1_reads},
            {"stage2_seeds", r.stats.stage2_seeds},
            {"stage2_reads", r.stats.stage2_reads},
            {"full_seeds", r.stats.full_seeds},
            {"full_reads", r.stats.full_reads},
            {"stage1_read_reduction", r.stats.stage1_read_reduction()}}},
          {"top_k", top}};
}

namespace {

struct CentralMoments {
  double mean, var, m3, m4;
};

CentralMoments central_moments(std::span<const double> x) {
  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : x) {
    const double c = v - mean;
    const double c2 = c * c;
    m2 += c2;
    m3 += c2 * c;
    m4 += c2 * c2;
  }
  return {mean, m2 / n, m3 / n, m4 / n};
}

}  // namespace

double approx_objective(std::span<const double> eps, std::span<const double> target, const ApproxConfig& cfg) {
  const double n = static_cast<double>(eps.size());
  double mse = 0.0;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    const double d = eps[i] - target[i];
    mse += d * d;
  }
  mse /= n;
  const auto m = central_moments(eps);
  const double skew = m.m3 / std::pow(m.var, 1.5);
  const double kurt = m.m4 / (m.var * m.var) - 3.0;
  return mse + cfg.variance_weight * (m.var - 1.0) * (m.var - 1.0) + cfg.noise_weight * (skew * skew + kurt * kurt);
}

void approx_gradient(std::span<const double> eps, std::span<const double> target, const ApproxConfig& cfg,
                     std::span<double> grad) {
  const double n = static_cast<double>(eps.size());
  const auto m = central_moments(eps);
  const double v = m.var;
  const double skew = m.m3 / std::pow(v, 1.5);
  const double kurt = m.m4 / (v * v) - 3.0;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    const double c = eps[i] - m.mean;
    const double dv = 2.0 * c / n;
    const double dm3 = 3.0 * (c * c - v) / n;
    const double dm4 = 4.0 * (c * c * c - m.m3) / n;
    const double dskew = dm3 / std::pow(v, 1.5) - 1.5 * m.m3 / std::pow(v, 2.5) * dv;
    const double dkurt = dm4 / (v * v) - 2.0 * m.m4 / (v * v * v) * dv;
    grad[i] = 2.0 * (eps[i] - target[i]) / n + cfg.variance_weight * 2.0 * (v - 1.0) * dv +
              cfg.noise_weight * (2.0 * skew * dskew + 2.0 * kurt * dkurt);
  }
}

ApproxResult approximate_noise(const LatentVector& target, const ApproxConfig& cfg) {
  if (target.empty()) throw std::invalid_argument("approximate_noise: empty target");
  if (cfg.iterations == 0) throw std::invalid_argument("approximate_noise: iterations must be at least 1");
  if (cfg.variance_weight < 0.0 || cfg.noise_weight < 0.0)
    throw std::invalid_argument("approximate_noise: weights must be non-negative");

  const std::size_t n = target.size();
  const auto z = widen(target);
  const auto init = randn(Seed(cfg.init_seed), {n});
  std::vector<double> eps(init.values().begin(), init.values().end());
  std::vector<double> g(n), m(n, 0.0), v(n, 0.0);
  std::vector<double> best = eps;
  double best_obj = std::numeric_limits<double>::infinity();

  ApproxResult out;
  out.loss_trace.reserve(cfg.iterations);
  double b1t = 1.0, b2t = 1.0;
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const double obj = approx_objective(eps, z, cfg);
    out.loss_trace.push_back(obj);
    if (obj < best_obj) {
      best_obj = obj;
      best = eps;
    }
    approx_gradient(eps, z, cfg, g);
    b1t *= cfg.beta1;
    b2t *= cfg.beta2;
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / (1.0 - b1t);
      const double vhat = v[i] / (1.0 - b2t);
      eps[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
  }
  if (const double obj = approx_objective(eps, z, cfg); obj < best_obj) best = eps;

  std::vector<float> f(best.begin(), best.end());
  out.noise = Tensor(target.shape(), std::move(f));
  out.target_mse = mse_prefix(target, out.noise, n);
  return out;
}

}  // namespace seedrecon
