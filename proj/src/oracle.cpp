#include "seedrecon/oracle.hpp"

#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>
#include <thread>

#include <nlohmann/json.hpp>

#include "seedrecon/npy.hpp"
#include "seedrecon/prng_core.hpp"

namespace seedrecon {

std::string assemble_prompt(const std::string& prefix, const Genome& modifiers) {
  std::string out = prefix;
  for (const auto& m : modifiers) {
    if (!out.empty()) out += ", ";
    out += m;
  }
  return out;
}

namespace {

std::uint64_t fnv1a64(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

MockOracle::MockOracle(MockOracleConfig cfg) : cfg_(std::move(cfg)), numel_(shape_numel(cfg_.shape)) {
  if (numel_ == 0) throw std::invalid_argument("mock oracle: empty latent shape");
  if (!(cfg_.lambda >= 0.0 && cfg_.lambda <= 1.0)) throw std::invalid_argument("mock oracle: lambda outside [0, 1]");
}

std::shared_ptr<const std::vector<float>> MockOracle::field(const std::string& kind, const std::string& text) {
  const std::string key = kind + '\x1f' + text;
  {
    std::lock_guard lock(mutex_);
    if (auto it = fields_.find(key); it != fields_.end()) return it->second;
  }
  const auto t = randn(Seed(fnv1a64(key, fnv1a64(std::to_string(cfg_.salt)))), cfg_.shape);
  auto data = std::make_shared<const std::vector<float>>(t.values().begin(), t.values().end());
  std::lock_guard lock(mutex_);
  return fields_.emplace(key, std::move(data)).first->second;
}

std::shared_ptr<const std::vector<float>> MockOracle::noise(Seed seed) {
  {
    std::lock_guard lock(mutex_);
    if (auto it = noise_.find(seed.effective()); it != noise_.end()) return it->second;
  }
  const auto t = randn(seed, cfg_.shape);
  auto data = std::make_shared<const std::vector<float>>(t.values().begin(), t.values().end());
  std::lock_guard lock(mutex_);
  if (noise_.size() > 64) noise_.clear();
  return noise_.emplace(seed.effective(), std::move(data)).first->second;
}

LatentVector MockOracle::generate(const std::string& prefix, const Genome& modifiers, Seed seed) {
  const auto eps = noise(seed);
  const auto base = field("prefix", prefix);
  std::vector<std::shared_ptr<const std::vector<float>>> mods;
  std::vector<double> weights;
  double weight_sq = 0.0;
  for (std::size_t i = 0; i < modifiers.size(); ++i) {
    mods.push_back(field("modifier", modifiers[i]));
    const double w = cfg_.modifier_coupling / (1.0 + cfg_.position_decay * static_cast<double>(i));
    weights.push_back(w);
    weight_sq += w * w;
  }
  const double a = std::sqrt(1.0 - cfg_.lambda);
  const double b = std::sqrt(cfg_.lambda) / std::sqrt(1.0 + weight_sq);

  std::vector<double> prompt((*base).begin(), (*base).end());
  for (std::size_t m = 0; m < mods.size(); ++m) {
    const auto& f = *mods[m];
    const double w = weights[m];
    for (std::size_t i = 0; i < numel_; ++i) prompt[i] += w * f[i];
  }
  std::vector<float> out(numel_);
  for (std::size_t i = 0; i < numel_; ++i) out[i] = static_cast<float>(a * (*eps)[i] + b * prompt[i]);
  return Tensor::from_trusted(cfg_.shape, std::move(out));
}

ExecOracle::ExecOracle(std::string command, ExecOracleOptions opts) : command_(std::move(command)), opts_(std::move(opts)) {
  if (command_.empty()) throw OracleError("exec oracle: empty command");
  int sv[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, sv) != 0)
    throw OracleError("exec oracle: socketpair failed: " + std::string(std::strerror(errno)));
  const pid_t pid = ::fork();
  if (pid < 0) {
    ::close(sv[0]);
    ::close(sv[1]);
    throw OracleError("exec oracle: fork failed: " + std::string(std::strerror(errno)));
  }
  if (pid == 0) {
    ::setpgid(0, 0);
    ::dup2(sv[1], STDIN_FILENO);
    ::dup2(sv[1], STDOUT_FILENO);
    ::execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(sv[1]);
  pid_ = pid;
  to_child_ = sv[0];
  from_child_ = sv[0];
}

ExecOracle::~ExecOracle() { shutdown(); }

void ExecOracle::shutdown() noexcept {
  if (to_child_ >= 0) {
    ::close(to_child_);
    to_child_ = from_child_ = -1;
  }
  if (pid_ > 0) {
    int status = 0;
    for (int i = 0; i < 100; ++i) {
      if (::waitpid(pid_, &status, WNOHANG) != 0) {
        pid_ = -1;
        return;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    ::kill(-pid_, SIGKILL);
    ::waitpid(pid_, &status, 0);
    pid_ = -1;
  }
}

namespace {

// Waits up to 0.5 s for the child to exit and describes how it ended.
std::string reap(int& pid, std::string fallback) {
  int status = 0;
  for (int i = 0; i < 50 && pid > 0; ++i) {
    if (::waitpid(pid, &status, WNOHANG) == pid) {
      pid = -1;
      if (WIFEXITED(status)) return "exited with status " + std::to_string(WEXITSTATUS(status));
      if (WIFSIGNALED(status)) return "was killed by signal " + std::to_string(WTERMSIG(status));
      break;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  return fallback;
}

}  // namespace

void ExecOracle::fail(const std::string& what) const {
  throw OracleError(name() + ": " + what + "\n  last request: " + (last_request_.empty() ? "<none>" : last_request_) +
                    "\n  last response: " + (last_response_.empty() ? "<none>" : last_response_));
}

std::string ExecOracle::read_line() {
  const auto deadline = std::chrono::steady_clock::now() + opts_.timeout;
  for (;;) {
    if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return line;
    }
    const auto left =
        std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now()).count();
    if (left <= 0) fail("timed out after " + std::to_string(opts_.timeout.count()) + " ms waiting for a response");
    pollfd pfd{from_child_, POLLIN, 0};
    const int rc = ::poll(&pfd, 1, static_cast<int>(left));
    if (rc < 0) {
      if (errno == EINTR) continue;
      fail("poll failed: " + std::string(std::strerror(errno)));
    }
    if (rc == 0) continue;
    char buf[4096];
    const ssize_t got = ::read(from_child_, buf, sizeof buf);
    if (got < 0 && errno != ECONNRESET) {
      if (errno == EINTR) continue;
      fail("read failed: " + std::string(std::strerror(errno)));
    }
    if (got <= 0) {
      fail("oracle process " + reap(pid_, "closed its output") + " before responding");
    }
    buffer_.append(buf, static_cast<std::size_t>(got));
  }
}

LatentVector ExecOracle::generate(const std::string& prefix, const Genome& modifiers, Seed seed) {
  if (to_child_ < 0) fail("oracle process is not running");
  const std::uint64_t id = next_id_++;
  nlohmann::json req = {{"id", id}, {"prefix", prefix}, {"modifiers", modifiers}, {"seed", seed.raw}};
  last_request_ = req.dump();
  last_response_.clear();
  const std::string line = last_request_ + "\n";
  std::size_t sent = 0;
  while (sent < line.size()) {
    const ssize_t n = ::send(to_child_, line.data() + sent, line.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      const std::string err = std::strerror(errno);
      fail("cannot send request (" + err + "); oracle process " + reap(pid_, "is unreachable"));
    }
    sent += static_cast<std::size_t>(n);
  }

  last_response_ = read_line();
  nlohmann::json resp;
  try {
    resp = nlohmann::json::parse(last_response_);
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("malformed JSON response: ") + e.what());
  }
  if (!resp.is_object()) fail("response is not a JSON object");
  if (!resp.contains("id") || !resp["id"].is_number_unsigned() || resp["id"].get<std::uint64_t>() != id)
    fail("response id does not match request id " + std::to_string(id));
  if (resp.contains("error")) fail("oracle reported an error: " + resp["error"].dump());
  if (!resp.contains("latent_path") || !resp["latent_path"].is_string()) fail("response lacks a latent_path string");

  LatentVector latent;
  try {
    latent = read_npy(resp["latent_path"].get<std::string>());
  } catch (const std::exception& e) {
    fail(std::string("cannot load latent: ") + e.what());
  }
  if (!opts_.shape) opts_.shape = latent.shape();
  if (latent.shape() != *opts_.shape)
    throw OracleContractError(name() + ": shape contract violated: latent has shape " +
                              shape_to_string(latent.shape()) + ", expected " + shape_to_string(*opts_.shape) +
                              "\n  last request: " + last_request_ + "\n  last response: " + last_response_);
  return latent;
}

std::unique_ptr<GeneratorOracle> make_oracle(const std::string& spec, const Shape& mock_shape,
                                             const ExecOracleOptions& exec_opts) {
  if (spec == "mock") {
    MockOracleConfig cfg;
    cfg.shape = mock_shape;
    return std::make_unique<MockOracle>(cfg);
  }
  if (spec.rfind("exec:", 0) == 0) return std::make_unique<ExecOracle>(spec.substr(5), exec_opts);
  throw std::invalid_argument("unknown oracle '" + spec + "': expected mock or exec:COMMAND");
}

}  // namespace seedrecon
