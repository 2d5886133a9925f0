#ifndef SELFRANK_PIPELINE_HPP_
#define SELFRANK_PIPELINE_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "selfrank/corpus.hpp"
#include "selfrank/errors.hpp"
#include "selfrank/isodata.hpp"
#include "selfrank/pairing.hpp"
#include "selfrank/policy.hpp"
#include "selfrank/ppo.hpp"
#include "selfrank/reward.hpp"
#include "selfrank/textrank.hpp"
#include "selfrank/toml_lite.hpp"

namespace selfrank {

// Full configuration of a staged run. Defaults are the documented baseline;
// a config file overrides them and command-line flags override the file.
struct PipelineConfig {
  // run
  std::uint64_t seed = 42;
  std::string out_dir = "out";
  int jobs = 1;  // advisory; execution is sequential and never depends on it

  // dataset
  std::string dataset_path;
  std::string prompt_template = "<Q>";

  // embedding
  std::string embedder = "hash";  // "hash" or "file:<path>"
  int embedding_dim = 256;

  // policy shape
  int context_window = 2;
  int policy_embedding_dim = 32;
  int policy_hidden_dim = 64;
  int vocab_size = 512;
  double init_scale = 0.05;

  // sft
  int sft_epochs = 20;
  double sft_lr = 0.1;

  // generate
  DecodeConfig decode;

  // rank
  double damping = 0.85;
  double tol = 1e-6;
  int max_iter = 1000;
  double min_similarity = 0.0;

  // cluster
  IsodataConfig isodata;
  RepresentativePolicy representative = RepresentativePolicy::medoid;

  // pair
  int interval_length = 2;
  NoiseConfig noise;
  int pair_cap = 0;  // 0 picks the default cap of 3x the filtered list length

  // train-reward
  RewardTrainConfig reward;

  // ppo
  PPOConfig ppo;
};

struct RunManifest {
  std::uint64_t master_seed = 0;
  std::string config_digest;
  std::map<std::string, std::string> stage_outputs;  // stage -> file name
  std::string created_at;  // ISO-8601 UTC
};

// Artifact row types. JSON field names are part of the on-disk format.
struct GeneratedRow {
  std::string qid;
  int sample_index = 0;
  std::string text;
};

struct RankedRow {
  std::string qid;
  int rank = 0;  // 1-based per question
  std::string answer_id;
  std::string text;
  double weight = 0.0;
};

struct ClusterRow {
  std::string qid;
  std::string answer_id;
  int cluster = 0;
  bool is_representative = false;
};

struct PairRow {
  std::string qid;
  std::string winner;
  std::string loser;
  int w_rank = 0;
  int l_rank = 0;
  std::string noise;
};

void to_json(nlohmann::json& j, const GeneratedRow& r);
void from_json(const nlohmann::json& j, GeneratedRow& r);
void to_json(nlohmann::json& j, const RankedRow& r);
void from_json(const nlohmann::json& j, RankedRow& r);
void to_json(nlohmann::json& j, const ClusterRow& r);
void from_json(const nlohmann::json& j, ClusterRow& r);
void to_json(nlohmann::json& j, const PairRow& r);
void from_json(const nlohmann::json& j, PairRow& r);
void to_json(nlohmann::json& j, const PPOLogEntry& r);
void from_json(const nlohmann::json& j, PPOLogEntry& r);

// Reads a config file into a PipelineConfig; an empty path yields the
// defaults. Unknown keys and type mismatches raise ConfigError. Validation
// of value ranges happens when a stage runs.
PipelineConfig load_config(const std::string& path);

// Range-checks every field; raises ConfigError on the first violation.
void validate_config(const PipelineConfig& config);

// Hex digest of the semantic configuration (seed and output locations are
// recorded separately in the manifest).
std::string config_digest(const PipelineConfig& config);

// Output file of a stage inside config.out_dir.
std::filesystem::path artifact_path(const PipelineConfig& config, const std::string& stage);

// Runs one stage against the artifacts already in config.out_dir, writes its
// artifact, and updates the manifest. Missing upstream artifacts raise an
// error naming the stage that has to run first.
std::filesystem::path run_stage(const std::string& stage, const PipelineConfig& config);

// Runs every stage in order; the first failure aborts the run.
RunManifest run_all(const PipelineConfig& config);

RunManifest load_manifest(const std::filesystem::path& out_dir);

}  // namespace selfrank

#endif  // SELFRANK_PIPELINE_HPP_
