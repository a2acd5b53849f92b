#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "chatdqn/agent.hpp"
#include "chatdqn/clustering.hpp"
#include "chatdqn/rewardmodel.hpp"

namespace chatdqn {

struct PipelineConfig {
  int config_version = 1;

  std::string train_path = "data/desk/train.jsonl";
  std::string test_path = "data/desk/test.jsonl";
  std::string vectors_path = "data/desk/vectors.txt";

  std::size_t sentence_clusters = 100;
  std::size_t dialogue_clusters = 100;
  KMeansOptions kmeans;
  std::uint64_t cluster_seed = 1;

  AgentConfig agent;
  std::size_t threads = 0;

  RegressorConfig regressor;
  std::vector<double> noise_rates = {0.0, 0.25, 0.5, 0.75, 1.0};
  std::size_t noise_variants = 2;
  std::uint64_t noise_seed = 1;

  std::size_t eval_candidates = 20;
  std::uint64_t eval_seed = 1;
  bool select_once = false;
  std::size_t curve_window = 100;

  std::size_t serve_candidates = 20;
  int port = 8080;
};

// "key = value" lines; '#' starts a comment. Unknown keys and malformed values
// raise FormatError naming the line.
void apply_config_text(PipelineConfig& cfg, const std::string& text, const std::string& source);
PipelineConfig load_config(const std::string& path);
// Sets one key; throws std::invalid_argument for unknown keys or bad values.
void set_config_value(PipelineConfig& cfg, const std::string& key, const std::string& value);
std::string config_value(const PipelineConfig& cfg, const std::string& key);
std::vector<std::string> config_keys();
// Every key, one per line, in a form apply_config_text reads back.
std::string dump_config(const PipelineConfig& cfg);

}  // namespace chatdqn
