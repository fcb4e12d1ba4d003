#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "seedrecon/seed.hpp"
#include "seedrecon/tensor.hpp"

namespace seedrecon {

using Genome = std::vector<std::string>;

// "prefix, m1, m2, ..."
std::string assemble_prompt(const std::string& prefix, const Genome& modifiers);

// The generator failed, misbehaved, or broke the protocol.
class OracleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The generator answered with a latent that violates its contract (for
// example, the wrong shape).
class OracleContractError : public OracleError {
 public:
  using OracleError::OracleError;
};

// Deterministic (prefix, modifiers, seed) -> latent.
class GeneratorOracle {
 public:
  virtual ~GeneratorOracle() = default;
  virtual LatentVector generate(const std::string& prefix, const Genome& modifiers, Seed seed) = 0;
  virtual std::string name() const = 0;
  // True when generate() may be called from several threads at once.
  virtual bool concurrent() const noexcept { return false; }
};

struct MockOracleConfig {
  Shape shape{4, 64, 64};
  // Share of variance not explained by the seed's noise. 0.75 puts
  // MSE(latent, noise) at 2 - 2 * sqrt(1 - 0.75) = 1.0.
  double lambda = 0.75;
  // Strength of modifier fields relative to the prefix field.
  double modifier_coupling = 1.0;
  // Modifier at position i is weighted 1 / (1 + position_decay * i).
  double position_decay = 0.1;
  std::uint64_t salt = 0x5eed5eedULL;
};

// Synthetic generator:
//   latent = sqrt(1 - lambda) * randn(seed) + sqrt(lambda) * P
//   P = (F(prefix) + c * sum_i w_i F(m_i)) / sqrt(1 + c^2 * sum_i w_i^2)
// where F(text) is a fixed standard-normal field derived from a hash of the
// text. P has unit variance for every genome, and the prompt part is
// independent of the seed's noise.
class MockOracle final : public GeneratorOracle {
 public:
  explicit MockOracle(MockOracleConfig cfg = {});

  LatentVector generate(const std::string& prefix, const Genome& modifiers, Seed seed) override;
  std::string name() const override { return "mock"; }
  bool concurrent() const noexcept override { return true; }

  const MockOracleConfig& config() const noexcept { return cfg_; }

 private:
  std::shared_ptr<const std::vector<float>> field(const std::string& kind, const std::string& text);
  std::shared_ptr<const std::vector<float>> noise(Seed seed);

  MockOracleConfig cfg_;
  std::size_t numel_;
  std::mutex mutex_;
  std::map<std::string, std::shared_ptr<const std::vector<float>>> fields_;
  std::map<std::uint32_t, std::shared_ptr<const std::vector<float>>> noise_;
};

struct ExecOracleOptions {
  std::chrono::milliseconds timeout{30000};
  // Expected latent shape; when unset, the first response fixes it.
  std::optional<Shape> shape;
};

// Out-of-process generator speaking JSON lines over stdin/stdout:
//   request  {"id": N, "prefix": "...", "modifiers": [...], "seed": S}
//   response {"id": N, "latent_path": "/path/to/latent.npy"}
// A response carrying an "error" member, a mismatched id, malformed JSON,
// a timeout, or the child exiting all raise OracleError.
class ExecOracle final : public GeneratorOracle {
 public:
  ExecOracle(std::string command, ExecOracleOptions opts = {});
  ~ExecOracle() override;
  ExecOracle(const ExecOracle&) = delete;
  ExecOracle& operator=(const ExecOracle&) = delete;

  LatentVector generate(const std::string& prefix, const Genome& modifiers, Seed seed) override;
  std::string name() const override { return "exec:" + command_; }

  // Last request and response line, for diagnostics.
  const std::string& last_request() const noexcept { return last_request_; }
  const std::string& last_response() const noexcept { return last_response_; }

 private:
  [[noreturn]] void fail(const std::string& what) const;
  std::string read_line();
  void shutdown() noexcept;

  std::string command_;
  ExecOracleOptions opts_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
  std::uint64_t next_id_ = 1;
  std::string last_request_;
  std::string last_response_;
};

// "mock" or "exec:COMMAND".
std::unique_ptr<GeneratorOracle> make_oracle(const std::string& spec, const Shape& mock_shape,
                                             const ExecOracleOptions& exec_opts = {});

}  // namespace seedrecon
