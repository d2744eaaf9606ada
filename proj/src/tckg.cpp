#include "tprec/tckg.hpp"

#include <algorithm>
#include <charconv>
#include <stdexcept>
#include <tuple>

#include "tprec/binary_io.hpp"

namespace tprec {

namespace {

constexpr std::array<std::string_view, kEntityTypeCount> kTypeNames = {"user", "item", "feature", "brand", "category"};
constexpr std::array<std::string_view, kStaticRelationCount> kStaticNames = {
    "bought_together", "also_viewed", "also_bought", "belong_to", "produced_by"};
constexpr std::array<std::string_view, kTimedBaseCount> kTimedNames = {"purchase", "mention", "described_by"};
constexpr std::string_view kInverseSuffix = ":inv";

struct Schema {
  EntityType head;
  EntityType tail;
};

Schema static_schema(StaticBase b) {
  switch (b) {
    case StaticBase::BelongTo: return {EntityType::Item, EntityType::Category};
    case StaticBase::ProducedBy: return {EntityType::Item, EntityType::Brand};
    default: return {EntityType::Item, EntityType::Item};
  }
}

Schema timed_schema(TimedBase b) {
  switch (b) {
    case TimedBase::Purchase: return {EntityType::User, EntityType::Item};
    case TimedBase::Mention: return {EntityType::User, EntityType::Feature};
    case TimedBase::DescribedBy: return {EntityType::Item, EntityType::Feature};
  }
  throw std::logic_error("unreachable timed base");
}

struct RawTriple {
  std::uint32_t head;
  std::uint32_t key;
  std::uint32_t tail;
  auto tie() const { return std::tie(head, key, tail); }
  bool operator<(const RawTriple& o) const { return tie() < o.tie(); }
  bool operator==(const RawTriple& o) const { return tie() == o.tie(); }
};

constexpr char kGraphMagic[] = "TPRCKG01";
constexpr std::uint32_t kGraphVersion = 1;

}  // namespace

std::string_view entity_type_name(EntityType t) { return kTypeNames[static_cast<std::size_t>(t)]; }

EntityType parse_entity_type(std::string_view name) {
  for (std::size_t i = 0; i < kTypeNames.size(); ++i)
    if (kTypeNames[i] == name) return static_cast<EntityType>(i);
  if (name == "word") return EntityType::Feature;
  throw std::invalid_argument("unknown entity type '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------

RelationCatalog::RelationCatalog(int clusters) : clusters_(clusters) {
  if (clusters < 1) throw std::invalid_argument("cluster count must be >= 1");
}

RelationId RelationCatalog::static_relation(StaticBase b) const { return {static_cast<std::uint32_t>(b), false}; }

RelationId RelationCatalog::timed(TimedBase b, int cluster) const {
  if (cluster < 0 || cluster >= clusters_) {
    throw std::invalid_argument("cluster " + std::to_string(cluster) + " out of range [0, " + std::to_string(clusters_) + ")");
  }
  return {kStaticRelationCount + static_cast<std::uint32_t>(b) * static_cast<std::uint32_t>(clusters_) +
              static_cast<std::uint32_t>(cluster),
          false};
}

TimedBase RelationCatalog::timed_base(RelationId r) const {
  if (!is_timed(r)) throw std::invalid_argument("relation is not time-aware");
  return static_cast<TimedBase>((r.forward - kStaticRelationCount) / static_cast<std::uint32_t>(clusters_));
}

int RelationCatalog::cluster_of(RelationId r) const {
  if (!is_timed(r)) throw std::invalid_argument("relation is not time-aware");
  return static_cast<int>((r.forward - kStaticRelationCount) % static_cast<std::uint32_t>(clusters_));
}

EntityType RelationCatalog::head_type(RelationId r) const {
  if (r.forward >= forward_count()) throw std::out_of_range("relation code out of range");
  const Schema s = is_timed(r) ? timed_schema(timed_base(r)) : static_schema(static_cast<StaticBase>(r.forward));
  return r.inverse ? s.tail : s.head;
}

EntityType RelationCatalog::tail_type(RelationId r) const { return head_type(r.inverted()); }

std::string RelationCatalog::name(RelationId r) const {
  if (r.forward >= forward_count()) throw std::out_of_range("relation code out of range");
  std::string out;
  if (is_timed(r)) {
    out = std::string(kTimedNames[static_cast<std::size_t>(timed_base(r))]) + "@" + std::to_string(cluster_of(r));
  } else {
    out = std::string(kStaticNames[r.forward]);
  }
  if (r.inverse) out += kInverseSuffix;
  return out;
}

RelationId RelationCatalog::parse(std::string_view name) const {
  bool inverse = false;
  if (name.ends_with(kInverseSuffix)) {
    inverse = true;
    name.remove_suffix(kInverseSuffix.size());
  }
  for (std::size_t i = 0; i < kStaticNames.size(); ++i)
    if (kStaticNames[i] == name) return {static_cast<std::uint32_t>(i), inverse};
  const auto at = name.find('@');
  if (at != std::string_view::npos) {
    const auto base = name.substr(0, at);
    const auto digits = name.substr(at + 1);
    int cluster = -1;
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), cluster);
    if (ec == std::errc{} && ptr == digits.data() + digits.size()) {
      for (std::size_t i = 0; i < kTimedNames.size(); ++i)
        if (kTimedNames[i] == base) {
          RelationId r = timed(static_cast<TimedBase>(i), cluster);
          r.inverse = inverse;
          return r;
        }
    }
  }
  throw std::invalid_argument("unknown relation '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------

std::uint32_t Tckg::node(EntityId e) const {
  const auto t = static_cast<std::size_t>(e.type);
  if (e.index >= counts_[t]) {
    throw std::out_of_range("unknown entity " + std::string(entity_type_name(e.type)) + ":" + std::to_string(e.index));
  }
  return offsets_[t] + e.index;
}

EntityId Tckg::entity(std::uint32_t node) const {
  if (node >= node_count()) throw std::out_of_range("node id out of range: " + std::to_string(node));
  std::size_t t = 0;
  while (node >= offsets_[t + 1]) ++t;
  return {static_cast<EntityType>(t), node - offsets_[t]};
}

bool Tckg::is_type(std::uint32_t node, EntityType t) const {
  const auto i = static_cast<std::size_t>(t);
  return node >= offsets_[i] && node < offsets_[i + 1];
}

const std::string& Tckg::name(std::uint32_t node) const {
  if (node >= names_.size()) throw std::out_of_range("node id out of range: " + std::to_string(node));
  return names_[node];
}

std::span<const Edge> Tckg::neighbors(std::uint32_t node) const {
  if (node >= node_count()) throw std::out_of_range("node id out of range: " + std::to_string(node));
  return {edges_.data() + edge_offsets_[node], edges_.data() + edge_offsets_[node + 1]};
}

bool Tckg::has_edge(std::uint32_t head, RelationId r, std::uint32_t tail) const {
  const auto adj = neighbors(head);
  const Edge probe{r.key(), tail};
  return std::binary_search(adj.begin(), adj.end(), probe, [](const Edge& a, const Edge& b) {
    return std::tie(a.relation_key, a.tail) < std::tie(b.relation_key, b.tail);
  });
}

Tckg build_tckg(const TckgInput& input) {
  Tckg g;
  g.catalog_ = RelationCatalog(input.clusters);
  g.counts_ = input.entity_counts;
  g.offsets_[0] = 0;
  for (std::size_t t = 0; t < kEntityTypeCount; ++t) g.offsets_[t + 1] = g.offsets_[t] + g.counts_[t];

  g.names_.resize(g.node_count());
  for (std::size_t t = 0; t < kEntityTypeCount; ++t) {
    const auto& given = input.names[t];
    if (!given.empty() && given.size() != g.counts_[t]) {
      throw std::invalid_argument("name table for " + std::string(kTypeNames[t]) + " has wrong length");
    }
    for (std::uint32_t i = 0; i < g.counts_[t]; ++i)
      g.names_[g.offsets_[t] + i] = given.empty() ? std::to_string(i) : given[i];
  }

  const RelationCatalog& cat = g.catalog_;
  const std::uint32_t rel_count = cat.forward_count();
  g.report_.supplied_per_relation.assign(rel_count, 0);
  g.report_.triples_per_relation.assign(rel_count, 0);

  std::vector<RawTriple> raw;
  raw.reserve(input.interactions.size() + input.static_triples.size());
  auto add = [&](EntityId h, RelationId r, EntityId t) {
    if (r.inverse) throw std::invalid_argument("input triples must use forward relations");
    if (cat.head_type(r) != h.type || cat.tail_type(r) != t.type) {
      throw std::invalid_argument("triple violates schema of relation " + cat.name(r));
    }
    raw.push_back({g.node(h), r.key(), g.node(t)});
    ++g.report_.supplied_per_relation[r.forward];
  };

  g.history_.assign(g.counts_[static_cast<std::size_t>(EntityType::User)], {});
  for (const auto& ev : input.interactions) {
    add({EntityType::User, ev.user}, cat.timed(TimedBase::Purchase, ev.cluster), {EntityType::Item, ev.item});
    g.history_[ev.user].push_back({ev.item, ev.time, ev.cluster});
  }
  for (const auto& rv : input.reviews) {
    for (std::uint32_t w : rv.words) {
      add({EntityType::User, rv.user}, cat.timed(TimedBase::Mention, rv.cluster), {EntityType::Feature, w});
      add({EntityType::Item, rv.item}, cat.timed(TimedBase::DescribedBy, rv.cluster), {EntityType::Feature, w});
    }
  }
  for (const auto& tr : input.static_triples) {
    if (cat.is_timed(tr.relation)) throw std::invalid_argument("static triple uses time-aware relation " + cat.name(tr.relation));
    add(tr.head, tr.relation, tr.tail);
  }

  std::sort(raw.begin(), raw.end());
  const auto before = raw.size();
  raw.erase(std::unique(raw.begin(), raw.end()), raw.end());
  g.report_.duplicates_dropped = before - raw.size();
  for (const auto& t : raw) ++g.report_.triples_per_relation[t.key / 2];

  std::vector<std::uint64_t> degree(g.node_count() + 1, 0);
  for (const auto& t : raw) {
    ++degree[t.head];
    ++degree[t.tail];
  }
  g.edge_offsets_.assign(g.node_count() + 1, 0);
  for (std::uint32_t n = 0; n < g.node_count(); ++n) g.edge_offsets_[n + 1] = g.edge_offsets_[n] + degree[n];
  g.edges_.resize(g.edge_offsets_.back());
  std::vector<std::uint64_t> cursor(g.edge_offsets_.begin(), g.edge_offsets_.end() - 1);
  for (const auto& t : raw) {
    g.edges_[cursor[t.head]++] = {t.key, t.tail};
    g.edges_[cursor[t.tail]++] = {t.key | 1U, t.head};
  }
  for (std::uint32_t n = 0; n < g.node_count(); ++n) {
    std::sort(g.edges_.begin() + static_cast<std::ptrdiff_t>(g.edge_offsets_[n]),
              g.edges_.begin() + static_cast<std::ptrdiff_t>(g.edge_offsets_[n + 1]),
              [](const Edge& a, const Edge& b) { return std::tie(a.relation_key, a.tail) < std::tie(b.relation_key, b.tail); });
  }
  return g;
}

DegreeReport degree_report(const Tckg& g) {
  DegreeReport r;
  r.triples_per_relation = g.build_report().triples_per_relation;
  r.supplied_per_relation = g.build_report().supplied_per_relation;
  for (auto c : r.triples_per_relation) r.total_triples += c;
  for (std::uint32_t n = 0; n < g.node_count(); ++n) {
    const auto t = static_cast<std::size_t>(g.entity(n).type);
    const auto deg = static_cast<std::uint32_t>(g.neighbors(n).size());
    r.max_out_degree[t] = std::max(r.max_out_degree[t], deg);
    r.mean_out_degree[t] += deg;
  }
  for (std::size_t t = 0; t < kEntityTypeCount; ++t)
    if (g.count(static_cast<EntityType>(t)) > 0) r.mean_out_degree[t] /= g.count(static_cast<EntityType>(t));
  return r;
}

// ---------------------------------------------------------------------------

void Tckg::save(const std::filesystem::path& path) const {
  io::BinaryWriter w(path, std::string_view(kGraphMagic, 8), kGraphVersion);
  w.put<std::int32_t>(clusters());
  w.put_array(std::span<const std::uint32_t>(counts_));
  for (const auto& n : names_) w.put_string(n);
  w.put_array(std::span<const std::uint64_t>(edge_offsets_));
  w.put_array(std::span<const Edge>(edges_));
  for (const auto& h : history_) {
    w.put<std::uint64_t>(h.size());
    for (const auto& e : h) {
      w.put<std::uint32_t>(e.item);
      w.put<std::int64_t>(e.time.seconds);
      w.put<std::int32_t>(e.cluster);
    }
  }
  w.put_array(std::span<const std::uint64_t>(report_.supplied_per_relation));
  w.put_array(std::span<const std::uint64_t>(report_.triples_per_relation));
  w.put<std::uint64_t>(report_.duplicates_dropped);
  w.finish();
}

Tckg Tckg::load(const std::filesystem::path& path) {
  io::BinaryReader r(path, std::string_view(kGraphMagic, 8));
  if (r.version() != kGraphVersion) throw std::runtime_error("unsupported graph snapshot version");
  Tckg g;
  g.catalog_ = RelationCatalog(r.get<std::int32_t>());
  const auto counts = r.get_array<std::uint32_t>();
  if (counts.size() != kEntityTypeCount) throw std::runtime_error("corrupt graph snapshot");
  std::copy(counts.begin(), counts.end(), g.counts_.begin());
  for (std::size_t t = 0; t < kEntityTypeCount; ++t) g.offsets_[t + 1] = g.offsets_[t] + g.counts_[t];
  g.names_.resize(g.node_count());
  for (auto& n : g.names_) n = r.get_string();
  g.edge_offsets_ = r.get_array<std::uint64_t>();
  g.edges_ = r.get_array<Edge>();
  g.history_.resize(g.count(EntityType::User));
  for (auto& h : g.history_) {
    h.resize(r.get<std::uint64_t>());
    for (auto& e : h) {
      e.item = r.get<std::uint32_t>();
      e.time.seconds = r.get<std::int64_t>();
      e.cluster = r.get<std::int32_t>();
    }
  }
  g.report_.supplied_per_relation = r.get_array<std::uint64_t>();
  g.report_.triples_per_relation = r.get_array<std::uint64_t>();
  g.report_.duplicates_dropped = r.get<std::uint64_t>();
  if (g.edge_offsets_.size() != g.node_count() + 1U || g.edge_offsets_.back() != g.edges_.size()) {
    throw std::runtime_error("corrupt graph snapshot " + path.string());
  }
  return g;
}

}  // namespace tprec
