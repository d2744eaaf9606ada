#include "tprec/dataset.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace tprec {

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return out;
}

[[noreturn]] void fail(const std::filesystem::path& path, std::size_t line, const std::string& what) {
  throw std::runtime_error(path.string() + ":" + std::to_string(line) + ": " + what);
}

std::int64_t parse_ts(std::string_view s, const std::filesystem::path& path, std::size_t line) {
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) fail(path, line, "bad timestamp '" + std::string(s) + "'");
  return v;
}

template <typename Fn>
void for_each_line(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    fn(std::string_view(line), n);
  }
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  return out;
}

}  // namespace

std::uint32_t EntityDictionary::intern(EntityType t, std::string_view id) {
  auto& index = index_[static_cast<std::size_t>(t)];
  auto& names = names_[static_cast<std::size_t>(t)];
  const auto [it, fresh] = index.try_emplace(std::string(id), static_cast<std::uint32_t>(names.size()));
  if (fresh) names.emplace_back(id);
  return it->second;
}

std::uint32_t EntityDictionary::lookup(EntityType t, std::string_view id) const {
  const auto& index = index_[static_cast<std::size_t>(t)];
  const auto it = index.find(std::string(id));
  if (it == index.end()) throw std::out_of_range("unknown " + std::string(entity_type_name(t)) + " '" + std::string(id) + "'");
  return it->second;
}

bool EntityDictionary::contains(EntityType t, std::string_view id) const {
  return index_[static_cast<std::size_t>(t)].count(std::string(id)) > 0;
}

std::string entity_ref(const EntityDictionary& dict, EntityId e) {
  return std::string(entity_type_name(e.type)) + ":" + dict.names(e.type).at(e.index);
}

Dataset load_dataset(const std::filesystem::path& interactions, const std::filesystem::path& kg,
                     const std::filesystem::path& reviews) {
  Dataset ds;
  for_each_line(interactions, [&](std::string_view line, std::size_t n) {
    const auto f = split_tabs(line);
    if (f.size() != 3 || f[0].empty() || f[1].empty()) fail(interactions, n, "expected user<TAB>item<TAB>timestamp");
    const auto u = ds.entities.intern(EntityType::User, f[0]);
    const auto i = ds.entities.intern(EntityType::Item, f[1]);
    ds.interactions.push_back({u, i, Timestamp{parse_ts(f[2], interactions, n)}});
  });

  if (!kg.empty()) {
    const RelationCatalog cat(1);
    for_each_line(kg, [&](std::string_view line, std::size_t n) {
      const auto f = split_tabs(line);
      if (f.size() != 3) fail(kg, n, "expected head<TAB>relation<TAB>tail");
      auto parse_ref = [&](std::string_view ref) {
        const auto colon = ref.find(':');
        if (colon == std::string_view::npos || colon + 1 == ref.size()) fail(kg, n, "entity '" + std::string(ref) + "' is not type:id");
        try {
          const EntityType t = parse_entity_type(ref.substr(0, colon));
          return EntityId{t, ds.entities.intern(t, ref.substr(colon + 1))};
        } catch (const std::invalid_argument& e) {
          fail(kg, n, e.what());
        }
      };
      RelationId r;
      try {
        r = cat.parse(f[1]);
      } catch (const std::invalid_argument& e) {
        fail(kg, n, e.what());
      }
      if (cat.is_timed(r)) fail(kg, n, "time-aware relation '" + std::string(f[1]) + "' cannot appear in the KG file");
      EntityId head = parse_ref(f[0]);
      EntityId tail = parse_ref(f[2]);
      if (r.inverse) {
        std::swap(head, tail);
        r.inverse = false;
      }
      if (cat.head_type(r) != head.type || cat.tail_type(r) != tail.type)
        fail(kg, n, "endpoint types do not match relation '" + cat.name(r) + "'");
      ds.static_triples.push_back({head, r, tail});
    });
  }

  if (!reviews.empty()) {
    for_each_line(reviews, [&](std::string_view line, std::size_t n) {
      const auto f = split_tabs(line);
      if (f.size() != 4) fail(reviews, n, "expected user<TAB>item<TAB>timestamp<TAB>words");
      ReviewRecord rv;
      rv.user = ds.entities.intern(EntityType::User, f[0]);
      rv.item = ds.entities.intern(EntityType::Item, f[1]);
      rv.time = Timestamp{parse_ts(f[2], reviews, n)};
      std::istringstream words{std::string(f[3])};
      std::string w;
      while (words >> w) rv.words.push_back(ds.entities.intern(EntityType::Feature, w));
      ds.reviews.push_back(std::move(rv));
    });
  }
  return ds;
}

void write_interactions(const std::filesystem::path& path, const std::vector<InteractionRecord>& rows,
                        const std::vector<std::string>& users, const std::vector<std::string>& items) {
  auto out = open_out(path);
  for (const auto& r : rows) out << users.at(r.user) << '\t' << items.at(r.item) << '\t' << r.time.seconds << '\n';
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

void write_kg(const std::filesystem::path& path, const std::vector<Triple>& triples,
              const std::array<std::vector<std::string>, kEntityTypeCount>& names) {
  auto out = open_out(path);
  const RelationCatalog cat(1);
  auto ref = [&](EntityId e) {
    return std::string(entity_type_name(e.type)) + ":" + names[static_cast<std::size_t>(e.type)].at(e.index);
  };
  for (const auto& t : triples) out << ref(t.head) << '\t' << cat.name(t.relation) << '\t' << ref(t.tail) << '\n';
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

void write_reviews(const std::filesystem::path& path, const std::vector<ReviewRecord>& rows,
                   const std::array<std::vector<std::string>, kEntityTypeCount>& names) {
  auto out = open_out(path);
  const auto& words = names[static_cast<std::size_t>(EntityType::Feature)];
  for (const auto& r : rows) {
    out << names[0].at(r.user) << '\t' << names[1].at(r.item) << '\t' << r.time.seconds << '\t';
    for (std::size_t k = 0; k < r.words.size(); ++k) out << (k ? " " : "") << words.at(r.words[k]);
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace tprec
