#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tprec/kg_embedding.hpp"
#include "tprec/path_reasoner.hpp"
#include "tprec/temporal_features.hpp"
#include "tprec/time_clustering.hpp"

namespace tprec {

/// Everything needed to turn a wall-clock time into cluster weights.
struct TimeEncoder {
  const GmmModel& gmm;
  CalendarContext calendar;
  const TrendTable& trends;
};

/// Posterior of the recommend time over the L clusters, and the purchase
/// relation vectors mixed with it.
PersonalizedRelation recommend_relation(const Tckg& g, const EmbeddingTable& emb, const TimeEncoder& time, Timestamp t);

struct Candidate {
  std::uint32_t item = 0;  // node id
  PathResult path;
};

struct RankedItem {
  std::uint32_t item = 0;  // node id
  double score = 0.0;
  PathResult path;
};

struct RecResult {
  std::uint32_t user = 0;  // node id
  Timestamp recommend_time;
  Vec time_weights;
  std::vector<RankedItem> items;
  std::size_t valid_paths = 0;
};

/// Scores (e_u + r_time) . e_item, sorts descending (ties to the smaller
/// item id) and keeps top_k. Candidates sharing an item keep the path with
/// the higher path score.
std::vector<RankedItem> rank_candidates(const EmbeddingTable& emb, std::uint32_t user_node, std::span<const Candidate> candidates,
                                        std::span<const double> r_time, int top_k);

struct RecommendQuery {
  std::uint32_t user = 0;  // user index
  Timestamp recommend_time;
  int top_k = 10;
};

struct RecommendSettings {
  std::vector<int> beam{25, 5, 1};
  bool exclude_train_items = true;
};

/// beam search, valid item-terminated paths minus training purchases,
/// ranked under the recommend-time relation. Throws on an unknown user.
RecResult recommend(const ReasonerContext& ctx, const PolicyParams& params, const TimeEncoder& time, const RecommendQuery& q,
                    const RecommendSettings& settings = {});

/// Same as recommend() for already computed beam output.
RecResult recommend_from_paths(const ReasonerContext& ctx, const TimeEncoder& time, const RecommendQuery& q,
                               std::span<const PathResult> paths, const RecommendSettings& settings = {});

}  // namespace tprec
