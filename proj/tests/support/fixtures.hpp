#pragma once

// Small graphs and tables shared by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "tprec/common.hpp"
#include "tprec/kg_embedding.hpp"
#include "tprec/tckg.hpp"

namespace tprec::testing {

struct GraphSize {
  std::uint32_t users = 8;
  std::uint32_t items = 12;
  std::uint32_t features = 6;
  std::uint32_t brands = 3;
  std::uint32_t categories = 3;
  int per_user = 5;       // purchases per user
  int clusters = 3;
  double review_rate = 0.5;
};

inline TckgInput empty_input(const GraphSize& s) {
  TckgInput in;
  in.clusters = s.clusters;
  in.entity_counts = {s.users, s.items, s.features, s.brands, s.categories};
  return in;
}

/// Random purchases, reviews and static item facts.
inline TckgInput random_input(std::uint64_t seed, const GraphSize& s = {}) {
  Rng rng(seed);
  TckgInput in = empty_input(s);
  std::uniform_int_distribution<std::uint32_t> item(0, s.items - 1), word(0, s.features - 1), brand(0, s.brands - 1),
      cat(0, s.categories - 1);
  std::uniform_int_distribution<int> cluster(0, s.clusters - 1);
  std::uniform_int_distribution<std::int64_t> when(1'500'000'000, 1'560'000'000);
  std::bernoulli_distribution review(s.review_rate);
  for (std::uint32_t u = 0; u < s.users; ++u) {
    for (int k = 0; k < s.per_user; ++k) {
      const InteractionEvent ev{u, item(rng), Timestamp{when(rng)}, cluster(rng)};
      in.interactions.push_back(ev);
      if (review(rng)) in.reviews.push_back({ev.user, ev.item, ev.time, ev.cluster, {word(rng), word(rng)}});
    }
  }
  const RelationCatalog catalog(s.clusters);
  for (std::uint32_t i = 0; i < s.items; ++i) {
    in.static_triples.push_back({{EntityType::Item, i}, catalog.static_relation(StaticBase::BelongTo), {EntityType::Category, cat(rng)}});
    in.static_triples.push_back({{EntityType::Item, i}, catalog.static_relation(StaticBase::ProducedBy), {EntityType::Brand, brand(rng)}});
    const std::uint32_t j = item(rng);
    if (j != i) in.static_triples.push_back({{EntityType::Item, i}, catalog.static_relation(StaticBase::AlsoBought), {EntityType::Item, j}});
  }
  return in;
}

inline Tckg random_tckg(std::uint64_t seed, const GraphSize& s = {}) { return build_tckg(random_input(seed, s)); }

/// Uniform values in [-scale, scale] for every vector and bias.
inline EmbeddingTable random_embeddings(const Tckg& g, int dim, std::uint64_t seed, double scale = 0.5) {
  EmbeddingTable emb(dim, g.node_count(), g.relations().forward_count());
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  for (double& v : emb.entity_data()) v = u(rng);
  for (double& v : emb.relation_data()) v = u(rng);
  for (double& v : emb.bias_data()) v = u(rng);
  return emb;
}

/// Every user bought both items in cluster 0; one cluster, nothing else.
inline Tckg bandit_graph(std::uint32_t users) {
  GraphSize s;
  s.users = users;
  s.items = 2;
  s.features = 0;
  s.brands = 0;
  s.categories = 0;
  s.clusters = 1;
  TckgInput in = empty_input(s);
  for (std::uint32_t u = 0; u < users; ++u) {
    in.interactions.push_back({u, 0, Timestamp{1'600'000'000}, 0});
    in.interactions.push_back({u, 1, Timestamp{1'600'000'000}, 0});
  }
  return build_tckg(in);
}

/// Zero vectors; item biases give the two arms scores 1.0 and 0.1.
inline EmbeddingTable bandit_embeddings(const Tckg& g, int dim) {
  EmbeddingTable emb(dim, g.node_count(), g.relations().forward_count());
  emb.bias(g.node({EntityType::Item, 0})) = 1.0;
  emb.bias(g.node({EntityType::Item, 1})) = 0.1;
  return emb;
}

/// Items 0 -> 1 -> ... -> n linked by also_bought; n triples, no users.
inline Tckg chain_kg(std::uint32_t n) {
  GraphSize s;
  s.users = 0;
  s.items = n + 1;
  s.features = s.brands = s.categories = 0;
  s.clusters = 1;
  TckgInput in = empty_input(s);
  const RelationCatalog catalog(1);
  for (std::uint32_t i = 0; i < n; ++i)
    in.static_triples.push_back({{EntityType::Item, i}, catalog.static_relation(StaticBase::AlsoBought), {EntityType::Item, i + 1}});
  return build_tckg(in);
}

/// Relative error with a floor so that two near-zero values compare equal.
inline double rel_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / scale;
}

}  // namespace tprec::testing
