#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "tprec/config.hpp"
#include "tprec/dataset.hpp"
#include "tprec/evaluation.hpp"
#include "tprec/kg_embedding.hpp"
#include "tprec/path_reasoner.hpp"
#include "tprec/recommender.hpp"
#include "tprec/synthetic.hpp"
#include "tprec/tckg.hpp"
#include "tprec/time_clustering.hpp"

namespace tprec {

enum class Stage { Synth, Features, Cluster, BuildGraph, TrainEmbed, TrainPolicy, Recommend, Evaluate };

std::string_view stage_name(Stage s);
Stage parse_stage(std::string_view name);
const std::vector<Stage>& all_stages();

/// Independent seed for each stage, derived from the root seed.
std::uint64_t stage_seed(std::uint64_t root, Stage s);

/// Raised for missing upstream artifacts; the message names the stage to run.
class MissingArtifactError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when artifacts on disk do not descend from the same runs.
class ProvenanceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

// ---- in-memory building blocks (also used by the stages) -------------------

Dataset dataset_from_synthetic(const SyntheticData& data);

struct FeatureTable {
  CalendarContext calendar;
  DailyCountSeries series;  // training interactions only
  std::vector<std::int64_t> days;
  RowMatrix rows;  // one temporal feature per day
};

/// Calendar origin over every interaction; count series and feature rows
/// over the training interactions.
FeatureTable compute_features(std::span<const InteractionRecord> all, std::span<const InteractionRecord> train);

ClusterSearch cluster_days(const FeatureTable& features, const ClusteringSettings& settings, std::uint64_t seed);

/// Cluster of a timestamp: argmax of the posterior of its feature vector.
class TimeAssigner {
 public:
  TimeAssigner(const GmmModel& gmm, const FeatureTable& features);
  int cluster(Timestamp t);
  TimeEncoder encoder() const { return {gmm_, calendar_, trends_}; }

 private:
  const GmmModel& gmm_;
  CalendarContext calendar_;
  TrendTable trends_;
  std::map<std::int64_t, int> cache_;
};

/// Training interactions become purchase edges; reviews attached to training
/// interactions become mention / described_by edges.
Tckg build_graph(const Dataset& ds, const Split& split, TimeAssigner& times);

struct UserRecommendations {
  std::vector<std::uint32_t> items;     // item indices, rank order
  std::set<std::uint32_t> path_words;   // word indices on paths of ranked items
  std::size_t valid_paths = 0;
};

struct EvaluationSummary {
  RankingMetrics ranking;          // fractions
  ExplanationMetrics explanation;  // fractions
  std::size_t invalid_users = 0;
  std::size_t users = 0;
};

/// Ranking and explanation metrics over users with test interactions.
EvaluationSummary summarize(const std::map<std::uint32_t, UserRecommendations>& recs, const Split& split,
                            std::span<const ReviewRecord> reviews, const EvaluateSection& settings);

/// Median (lower) test timestamp per test user.
std::map<std::uint32_t, Timestamp> median_test_times(const Split& split);

UserRecommendations to_user_recommendations(const Tckg& g, const RecResult& rec, std::span<const PathResult> paths, int k);

// ---- stages ---------------------------------------------------------------

struct StageOptions {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
};

struct StageResult {
  Stage stage = Stage::Synth;
  std::vector<std::filesystem::path> outputs;
  std::filesystem::path manifest;
  double seconds = 0.0;
};

/// Runs one stage. Upstream artifacts must exist in the output directory.
StageResult run_stage(Stage stage, const PipelineConfig& config, const StageOptions& options = {});

/// Checks that every input recorded in the stage's manifest still hashes to
/// the recorded value and was produced by the recorded upstream run.
void verify_provenance(const std::filesystem::path& out_dir, Stage stage);

std::filesystem::path manifest_path(const std::filesystem::path& out_dir, Stage stage);

}  // namespace tprec
