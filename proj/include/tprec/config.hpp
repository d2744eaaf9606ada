#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "tprec/evaluation.hpp"
#include "tprec/kg_embedding.hpp"
#include "tprec/path_reasoner.hpp"
#include "tprec/policy_net.hpp"
#include "tprec/synthetic.hpp"

namespace tprec {

struct DataPaths {
  // Empty means <out>/data/<default name>, where the synth stage writes.
  std::string interactions;
  std::string kg;
  std::string reviews;
};

struct ClusteringSettings {
  int min_clusters = 2;
  int max_clusters = 32;
  int max_iter = 200;
  double tol = 1e-6;
  double variance_floor = 1e-6;
};

struct PolicySettings {
  int hidden = 256;
  int state_dim = 256;
  double dropout = 0.5;
  EncoderKind encoder = EncoderKind::BiLstm;
  RewardMode reward = RewardMode::Personalized;
  ReasonerConfig reasoner;
  PolicyTrainConfig train;
};

struct RecommendSection {
  std::vector<int> beam{25, 5, 1};
  int top_k = 10;
  // Fixed recommend time for every user; unset means each user's median test
  // timestamp.
  std::optional<std::int64_t> time;
};

struct EvaluateSection {
  int k = 10;
  ReasonFilter filter;
  std::size_t invalid_threshold = 10;
};

struct PipelineConfig {
  std::string dataset = "dataset";
  DataPaths data;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  int feature_dims = 25;
  std::vector<int> trend_gaps{90, 30, 7, 1};
  SplitSpec split;
  ClusteringSettings clustering;
  EmbeddingTrainConfig embedding;
  PolicySettings policy;
  RecommendSection recommend;
  EvaluateSection evaluate;
  SyntheticSpec synth;

  /// Directory relative data paths are resolved against.
  std::filesystem::path base_dir;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

nlohmann::json config_to_json(const PipelineConfig& cfg);

/// Starts from defaults and overrides the keys present. Unknown keys are an
/// error.
PipelineConfig config_from_json(const nlohmann::json& doc);

PipelineConfig load_config(const std::filesystem::path& path);

}  // namespace tprec
