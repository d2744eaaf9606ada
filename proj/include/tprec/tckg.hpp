#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tprec/temporal_features.hpp"

namespace tprec {

enum class EntityType : std::uint8_t { User = 0, Item = 1, Feature = 2, Brand = 3, Category = 4 };
inline constexpr std::size_t kEntityTypeCount = 5;

std::string_view entity_type_name(EntityType t);
EntityType parse_entity_type(std::string_view name);

struct EntityId {
  EntityType type = EntityType::User;
  std::uint32_t index = 0;

  friend bool operator==(const EntityId&, const EntityId&) = default;
};

enum class StaticBase : std::uint8_t { BoughtTogether, AlsoViewed, AlsoBought, BelongTo, ProducedBy };
enum class TimedBase : std::uint8_t { Purchase, Mention, DescribedBy };
inline constexpr std::uint32_t kStaticRelationCount = 5;
inline constexpr std::uint32_t kTimedBaseCount = 3;

/// A forward relation code plus direction. Forward codes 0..4 are the static
/// relations; 5 + base*L + cluster are the time-aware ones.
struct RelationId {
  std::uint32_t forward = 0;
  bool inverse = false;

  /// Sort key used by adjacency lists.
  std::uint32_t key() const { return forward * 2 + (inverse ? 1U : 0U); }
  static RelationId from_key(std::uint32_t k) { return {k / 2, (k % 2) != 0}; }
  RelationId inverted() const { return {forward, !inverse}; }

  friend bool operator==(const RelationId&, const RelationId&) = default;
};

/// Relation schema for a given cluster count L: 3L + 5 forward relations.
class RelationCatalog {
 public:
  explicit RelationCatalog(int clusters);

  int clusters() const { return clusters_; }
  std::uint32_t forward_count() const { return kStaticRelationCount + kTimedBaseCount * static_cast<std::uint32_t>(clusters_); }

  RelationId static_relation(StaticBase b) const;
  RelationId timed(TimedBase b, int cluster) const;
  RelationId purchase(int cluster) const { return timed(TimedBase::Purchase, cluster); }

  bool is_timed(RelationId r) const { return r.forward >= kStaticRelationCount; }
  TimedBase timed_base(RelationId r) const;
  int cluster_of(RelationId r) const;

  /// Endpoint types, honoring direction.
  EntityType head_type(RelationId r) const;
  EntityType tail_type(RelationId r) const;

  std::string name(RelationId r) const;
  RelationId parse(std::string_view name) const;

 private:
  int clusters_;
};

struct Triple {
  EntityId head;
  RelationId relation;
  EntityId tail;
};

struct Edge {
  std::uint32_t relation_key = 0;
  std::uint32_t tail = 0;  // global node id

  RelationId relation() const { return RelationId::from_key(relation_key); }
};

struct InteractionEvent {
  std::uint32_t user = 0;
  std::uint32_t item = 0;
  Timestamp time;
  int cluster = 0;
};

struct ReviewEvent {
  std::uint32_t user = 0;
  std::uint32_t item = 0;
  Timestamp time;
  int cluster = 0;
  std::vector<std::uint32_t> words;  // Feature indices
};

struct TckgInput {
  int clusters = 1;
  std::array<std::uint32_t, kEntityTypeCount> entity_counts{};
  std::array<std::vector<std::string>, kEntityTypeCount> names;  // optional
  std::vector<InteractionEvent> interactions;
  std::vector<ReviewEvent> reviews;
  std::vector<Triple> static_triples;
};

struct BuildReport {
  std::vector<std::uint64_t> supplied_per_relation;  // before dedup
  std::vector<std::uint64_t> triples_per_relation;   // after dedup
  std::uint64_t duplicates_dropped = 0;
};

struct DegreeReport {
  std::array<std::uint32_t, kEntityTypeCount> max_out_degree{};
  std::array<double, kEntityTypeCount> mean_out_degree{};
  std::vector<std::uint64_t> triples_per_relation;
  std::vector<std::uint64_t> supplied_per_relation;
  std::uint64_t total_triples = 0;
};

/// Time-aware collaborative knowledge graph. Immutable once built; adjacency
/// holds every forward triple and its inverse, sorted by (relation, neighbor).
class Tckg {
 public:
  struct HistoryEntry {
    std::uint32_t item = 0;
    Timestamp time;
    int cluster = 0;
  };

  const RelationCatalog& relations() const { return catalog_; }
  int clusters() const { return catalog_.clusters(); }

  std::uint32_t count(EntityType t) const { return counts_[static_cast<std::size_t>(t)]; }
  std::uint32_t node_count() const { return offsets_[kEntityTypeCount]; }
  std::uint32_t node(EntityId e) const;
  EntityId entity(std::uint32_t node) const;
  bool is_type(std::uint32_t node, EntityType t) const;
  const std::string& name(std::uint32_t node) const;

  std::span<const Edge> neighbors(std::uint32_t node) const;
  std::span<const Edge> neighbors(EntityId e) const { return neighbors(node(e)); }
  bool has_edge(std::uint32_t head, RelationId r, std::uint32_t tail) const;
  std::uint64_t edge_count() const { return edges_.size(); }

  const std::vector<HistoryEntry>& history(std::uint32_t user_index) const { return history_.at(user_index); }
  const BuildReport& build_report() const { return report_; }

  void save(const std::filesystem::path& path) const;
  static Tckg load(const std::filesystem::path& path);

  friend Tckg build_tckg(const TckgInput& input);

 private:
  Tckg() : catalog_(1) {}

  RelationCatalog catalog_;
  std::array<std::uint32_t, kEntityTypeCount> counts_{};
  std::array<std::uint32_t, kEntityTypeCount + 1> offsets_{};
  std::vector<std::string> names_;
  std::vector<std::uint64_t> edge_offsets_;
  std::vector<Edge> edges_;
  std::vector<std::vector<HistoryEntry>> history_;
  BuildReport report_;
};

/// Throws std::out_of_range on unknown entities and std::invalid_argument on
/// out-of-range clusters or schema violations. Duplicate triples are dropped and counted.
Tckg build_tckg(const TckgInput& input);

DegreeReport degree_report(const Tckg& g);

}  // namespace tprec
