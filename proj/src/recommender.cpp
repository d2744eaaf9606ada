#include "tprec/recommender.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include <spdlog/spdlog.h>

namespace tprec {

PersonalizedRelation recommend_relation(const Tckg& g, const EmbeddingTable& emb, const TimeEncoder& time, Timestamp t) {
  if (time.gmm.components != g.clusters()) {
    throw std::invalid_argument("clustering model has " + std::to_string(time.gmm.components) + " components, graph has " +
                                std::to_string(g.clusters()) + " clusters");
  }
  const TemporalFeature f = temporal_feature(t, time.calendar, time.trends);
  const Vec w = posterior(time.gmm, f.combined);
  return mix_purchase_relations(g, emb, w);
}

std::vector<RankedItem> rank_candidates(const EmbeddingTable& emb, std::uint32_t user_node, std::span<const Candidate> candidates,
                                        std::span<const double> r_time, int top_k) {
  if (top_k < 1) throw std::invalid_argument("top_k must be >= 1");
  if (candidates.empty()) {
    spdlog::debug("no candidates for user node {}", user_node);
    return {};
  }
  Vec query(emb.entity(user_node).begin(), emb.entity(user_node).end());
  axpy(1.0, r_time, query);

  std::unordered_map<std::uint32_t, std::size_t> slot;
  std::vector<RankedItem> ranked;
  for (const Candidate& c : candidates) {
    auto [it, fresh] = slot.try_emplace(c.item, ranked.size());
    if (fresh) {
      ranked.push_back({c.item, dot(query, emb.entity(c.item)), c.path});
    } else {
      RankedItem& have = ranked[it->second];
      if (c.path.score > have.path.score) have.path = c.path;
    }
  }
  std::sort(ranked.begin(), ranked.end(), [](const RankedItem& a, const RankedItem& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.item < b.item;
  });
  if (ranked.size() > static_cast<std::size_t>(top_k)) ranked.resize(static_cast<std::size_t>(top_k));
  return ranked;
}

RecResult recommend_from_paths(const ReasonerContext& ctx, const TimeEncoder& time, const RecommendQuery& q,
                               std::span<const PathResult> paths, const RecommendSettings& settings) {
  const Tckg& g = ctx.graph;
  if (q.user >= g.count(EntityType::User)) throw std::out_of_range("unknown user index " + std::to_string(q.user));
  RecResult out;
  out.user = g.node({EntityType::User, q.user});
  out.recommend_time = q.recommend_time;

  std::vector<char> bought;
  if (settings.exclude_train_items) {
    bought.assign(g.node_count(), 0);
    for (const auto& h : g.history(q.user)) bought[g.node({EntityType::Item, h.item})] = 1;
  }
  std::vector<Candidate> cands;
  for (const PathResult& p : paths) {
    if (!p.valid) continue;
    ++out.valid_paths;
    if (!bought.empty() && bought[p.terminal]) continue;
    cands.push_back({p.terminal, p});
  }
  const PersonalizedRelation r = recommend_relation(g, ctx.embeddings, time, q.recommend_time);
  out.time_weights = r.weights;
  out.items = rank_candidates(ctx.embeddings, out.user, cands, r.vector, q.top_k);
  return out;
}

RecResult recommend(const ReasonerContext& ctx, const PolicyParams& params, const TimeEncoder& time, const RecommendQuery& q,
                    const RecommendSettings& settings) {
  if (q.user >= ctx.graph.count(EntityType::User)) throw std::out_of_range("unknown user index " + std::to_string(q.user));
  const auto paths = beam_search(ctx, params, q.user, settings.beam);
  return recommend_from_paths(ctx, time, q, paths, settings);
}

}  // namespace tprec
