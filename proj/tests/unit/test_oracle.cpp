#include <gtest/gtest.h>

#include <cmath>
#include <thread>

#include "seedrecon/oracle.hpp"
#include "seedrecon/prng_core.hpp"
#include "seedrecon/seed_search.hpp"
#include "test_util.hpp"

using namespace seedrecon;
using namespace std::chrono_literals;
using seedrecon::testing::TempDir;

namespace {

std::string server(const TempDir& dir, const std::string& mode = "ok", int after = 1,
                   const std::string& shape = "4x16x16") {
  return std::string(SEEDRECON_MOCK_SERVER) + " --dir " + dir.path().string() + " --shape " + shape + " --mode " +
         mode + " --after " + std::to_string(after);
}

std::string error_of(GeneratorOracle& o, const Genome& g = {"a", "b", "c"}) {
  try {
    o.generate("prefix", g, Seed(1));
  } catch (const OracleError& e) {
    return e.what();
  }
  return "";
}

MockOracle small_mock() {
  MockOracleConfig cfg;
  cfg.shape = {4, 16, 16};
  return MockOracle(cfg);
}

}  // namespace

TEST(AssemblePrompt, JoinsWithCommas) {
  EXPECT_EQ(assemble_prompt("a cat", {}), "a cat");
  EXPECT_EQ(assemble_prompt("a cat", {"oil", "4k"}), "a cat, oil, 4k");
}

TEST(MockOracle, SeedNoiseDistanceIsCalibrated) {
  MockOracle oracle;
  const auto latent = oracle.generate("a castle", {"fog", "moody", "wide shot"}, Seed(21));
  EXPECT_EQ(latent.shape(), (Shape{4, 64, 64}));
  EXPECT_NEAR(mse_prefix(latent, randn(Seed(21), latent.shape()), latent.size()), 1.0, 0.03);
  EXPECT_NEAR(mse_prefix(latent, randn(Seed(22), latent.shape()), latent.size()), 2.0, 0.06);
}

TEST(MockOracle, DeterministicAndTruncated) {
  auto a = small_mock();
  auto b = small_mock();
  const auto x = a.generate("p", {"m1", "m2", "m3"}, Seed(5));
  EXPECT_TRUE(x.bitwise_equal(b.generate("p", {"m1", "m2", "m3"}, Seed(5))));
  EXPECT_TRUE(x.bitwise_equal(a.generate("p", {"m1", "m2", "m3"}, Seed(5 + kSeedSpace32))));
  EXPECT_FALSE(x.bitwise_equal(a.generate("p", {"m1", "m3", "m2"}, Seed(5))));
  EXPECT_FALSE(x.bitwise_equal(a.generate("q", {"m1", "m2", "m3"}, Seed(5))));
  EXPECT_FALSE(x.bitwise_equal(a.generate("p", {"m1", "m2", "m3", "m3"}, Seed(5))));
}

TEST(MockOracle, PromptDistanceShrinksWithSharedModifiers) {
  MockOracle o;
  const Genome truth = {"m1", "m2", "m3", "m4", "m5"};
  const auto target = o.generate("p", truth, Seed(3));
  auto loss = [&](const Genome& g) { return mse_prefix(target, o.generate("p", g, Seed(3)), target.size()); };
  EXPECT_EQ(loss(truth), 0.0);
  const double none = loss({"x1", "x2", "x3", "x4", "x5"});
  const double three = loss({"m1", "m2", "m3", "x4", "x5"});
  EXPECT_LT(three, none);
  EXPECT_GT(none, 0.5);
}

TEST(MockOracle, ConcurrentCallsAgree) {
  auto o = small_mock();
  const auto ref = o.generate("p", {"a", "b", "c"}, Seed(9));
  std::vector<std::thread> threads;
  std::atomic<int> mismatches{0};
  for (int t = 0; t < 8; ++t)
    threads.emplace_back([&, t] {
      for (int i = 0; i < 20; ++i) {
        if (!o.generate("p", {"a", "b", "c"}, Seed(9)).bitwise_equal(ref)) ++mismatches;
        o.generate("p" + std::to_string(t), {"d", "e", "f"}, Seed(i));
      }
    });
  for (auto& th : threads) th.join();
  EXPECT_EQ(mismatches.load(), 0);
}

TEST(ExecOracle, ServesTheSameLatentsAsInProcessMock) {
  TempDir dir;
  ExecOracle exec(server(dir));
  auto mock = small_mock();
  for (int i = 0; i < 5; ++i) {
    const Genome g = {"g" + std::to_string(i), "h", "k"};
    EXPECT_TRUE(exec.generate("pre", g, Seed(100 + i)).bitwise_equal(mock.generate("pre", g, Seed(100 + i))));
  }
  const auto req = nlohmann::json::parse(exec.last_request());
  EXPECT_EQ(req["id"], 5);
  EXPECT_EQ(req["seed"], 104);
  EXPECT_EQ(req["modifiers"].size(), 3u);
  EXPECT_EQ(nlohmann::json::parse(exec.last_response())["id"], 5);
}

TEST(ExecOracle, ScriptedRequestsKeepMatchedIds) {
  TempDir dir;
  ExecOracle exec(server(dir));
  for (int i = 1; i <= 100; ++i) {
    exec.generate("p", {"a", "b", "c"}, Seed(i));
    ASSERT_EQ(nlohmann::json::parse(exec.last_response())["id"], i);
  }
}

TEST(ExecOracle, WrongShapeViolatesContract) {
  TempDir dir;
  ExecOracle exec(server(dir, "wrong-shape", 2));
  exec.generate("p", {"a", "b", "c"}, Seed(1));
  try {
    exec.generate("p", {"a", "b", "c"}, Seed(2));
    FAIL() << "expected OracleContractError";
  } catch (const OracleContractError& e) {
    EXPECT_NE(std::string(e.what()).find("4x16x17"), std::string::npos) << e.what();
  }
}

TEST(ExecOracle, ExpectedShapeCheckedOnFirstResponse) {
  TempDir dir;
  ExecOracle exec(server(dir), {.shape = Shape{4, 32, 32}});
  EXPECT_THROW(exec.generate("p", {"a", "b", "c"}, Seed(1)), OracleContractError);
}

TEST(ExecOracle, CrashIsReportedWithExitStatus) {
  TempDir dir;
  ExecOracle exec(server(dir, "crash"));
  const auto msg = error_of(exec);
  EXPECT_NE(msg.find("exited with status 7"), std::string::npos) << msg;
  EXPECT_NE(msg.find("last request"), std::string::npos);
}

TEST(ExecOracle, HangTimesOut) {
  TempDir dir;
  ExecOracle exec(server(dir, "hang"), {.timeout = 300ms, .shape = std::nullopt});
  const auto t0 = std::chrono::steady_clock::now();
  const auto msg = error_of(exec);
  EXPECT_NE(msg.find("timed out"), std::string::npos) << msg;
  EXPECT_LT(std::chrono::steady_clock::now() - t0, 5s);
}

TEST(ExecOracle, ProtocolViolations) {
  TempDir dir;
  {
    ExecOracle exec(server(dir, "bad-json"));
    EXPECT_NE(error_of(exec).find("malformed JSON"), std::string::npos);
  }
  {
    ExecOracle exec(server(dir, "wrong-id"));
    EXPECT_NE(error_of(exec).find("does not match"), std::string::npos);
  }
  {
    ExecOracle exec(server(dir, "error"));
    EXPECT_NE(error_of(exec).find("out of memory"), std::string::npos);
  }
  {
    ExecOracle exec(server(dir, "missing-file"));
    EXPECT_NE(error_of(exec).find("cannot load latent"), std::string::npos);
  }
}

TEST(ExecOracle, MissingProgram) {
  ExecOracle exec("/nonexistent/generator-binary");
  const auto msg = error_of(exec);
  EXPECT_NE(msg.find("exited with status 127"), std::string::npos) << msg;
  EXPECT_THROW(ExecOracle(""), OracleError);
}

TEST(MakeOracle, Specs) {
  TempDir dir;
  EXPECT_EQ(make_oracle("mock", {4, 8, 8})->name(), "mock");
  EXPECT_EQ(make_oracle("mock", {4, 8, 8})->generate("p", {"a", "b", "c"}, Seed(1)).shape(), (Shape{4, 8, 8}));
  EXPECT_EQ(make_oracle("exec:" + server(dir), {})->name().rfind("exec:", 0), 0u);
  EXPECT_THROW(make_oracle("diffusers", {}), std::invalid_argument);
}
