// Stdio JSON-lines generator backed by MockOracle, for exercising ExecOracle.
// From request --after onwards it misbehaves as selected by --mode.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "seedrecon/npy.hpp"
#include "seedrecon/oracle.hpp"

int main(int argc, char** argv) {
  CLI::App app{"mock oracle server"};
  std::string dir;
  std::string shape_text = "4x16x16";
  std::string mode = "ok";
  std::uint64_t after = 1;
  app.add_option("--dir", dir)->required();
  app.add_option("--shape", shape_text);
  app.add_option("--mode", mode)->check(
      CLI::IsMember({"ok", "wrong-shape", "crash", "hang", "bad-json", "wrong-id", "error", "missing-file"}));
  app.add_option("--after", after);
  CLI11_PARSE(app, argc, argv);

  seedrecon::MockOracleConfig cfg;
  cfg.shape = seedrecon::parse_shape(shape_text);
  seedrecon::MockOracle oracle(cfg);
  seedrecon::MockOracleConfig wrong = cfg;
  wrong.shape.back() += 1;
  seedrecon::MockOracle wrong_oracle(wrong);

  std::uint64_t served = 0;
  std::string line;
  while (std::getline(std::cin, line)) {
    ++served;
    const auto req = nlohmann::json::parse(line);
    const auto id = req.at("id").get<std::uint64_t>();
    const bool act = served >= after;
    if (act && mode == "crash") return 7;
    if (act && mode == "hang") {
      std::this_thread::sleep_for(std::chrono::hours(1));
    }
    if (act && mode == "bad-json") {
      std::cout << "{\"id\": " << id << ", \"latent_path\": " << std::endl;
      continue;
    }
    if (act && mode == "error") {
      std::cout << nlohmann::json{{"id", id}, {"error", "out of memory"}}.dump() << std::endl;
      continue;
    }
    if (act && mode == "missing-file") {
      std::cout << nlohmann::json{{"id", id}, {"latent_path", dir + "/does-not-exist.npy"}}.dump() << std::endl;
      continue;
    }
    const auto prefix = req.at("prefix").get<std::string>();
    const auto mods = req.at("modifiers").get<seedrecon::Genome>();
    const seedrecon::Seed seed(req.at("seed").get<std::uint64_t>());
    auto& gen = act && mode == "wrong-shape" ? wrong_oracle : oracle;
    const auto path = std::filesystem::path(dir) / ("latent_" + std::to_string(id) + ".npy");
    seedrecon::write_npy(gen.generate(prefix, mods, seed), path);
    const std::uint64_t reply_id = act && mode == "wrong-id" ? id + 1 : id;
    std::cout << nlohmann::json{{"id", reply_id}, {"latent_path", path.string()}}.dump() << std::endl;
  }
  return 0;
}
