#ifndef TRIAN_CLI_HPP
#define TRIAN_CLI_HPP

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "trian/config.hpp"
#include "trian/optim.hpp"

namespace trian {

// Fully resolved run settings: code defaults < config file < command line.
// A snapshot is written next to every run's outputs so an experiment is
// reproducible from its artifacts alone.
struct RunConfig {
  ModelConfig model;
  TrainPlan plan;

  std::string data;
  std::string dev;
  std::string pretrain_data;
  std::string embeddings;
  std::string conceptnet;
  std::string freq_table;
  std::string stopwords;
  std::string out_dir = "trian_out";
  bool no_pretrain = false;

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
};

// Applies a config file (optional) on top of built-in defaults.
RunConfig resolve_run_config(const std::string& config_path = "");

// Entry point used by the binary and by in-process CLI tests. Returns the
// process exit code. out/err default to std::cout/std::cerr.
int run_cli(const std::vector<std::string>& args, std::ostream* out = nullptr,
            std::ostream* err = nullptr);

// Worker-thread cap from TRIAN_THREADS (>= 1; default 1).
int worker_threads();

}  // namespace trian

#endif  // TRIAN_CLI_HPP
