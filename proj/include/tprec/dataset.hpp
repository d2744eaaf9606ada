#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tprec/evaluation.hpp"
#include "tprec/tckg.hpp"

namespace tprec {

/// String ids per entity type, assigned in order of first appearance.
class EntityDictionary {
 public:
  std::uint32_t intern(EntityType t, std::string_view id);
  /// Throws std::out_of_range on unknown ids.
  std::uint32_t lookup(EntityType t, std::string_view id) const;
  bool contains(EntityType t, std::string_view id) const;
  const std::vector<std::string>& names(EntityType t) const { return names_[static_cast<std::size_t>(t)]; }
  std::uint32_t count(EntityType t) const { return static_cast<std::uint32_t>(names(t).size()); }

 private:
  std::array<std::vector<std::string>, kEntityTypeCount> names_;
  std::array<std::unordered_map<std::string, std::uint32_t>, kEntityTypeCount> index_;
};

struct Dataset {
  EntityDictionary entities;
  std::vector<InteractionRecord> interactions;
  std::vector<ReviewRecord> reviews;
  std::vector<Triple> static_triples;
};

/// Interaction log: user_id<TAB>item_id<TAB>unix_ts. KG: type:id<TAB>relation<TAB>type:id
/// (static relations only; a ":inv" name is flipped to its forward form).
/// Reviews: user_id<TAB>item_id<TAB>unix_ts<TAB>space separated words.
/// Empty kg/reviews paths are skipped. Blank lines and lines starting with
/// '#' are ignored; anything else malformed throws with file and line.
Dataset load_dataset(const std::filesystem::path& interactions, const std::filesystem::path& kg,
                     const std::filesystem::path& reviews);

/// Entity reference "type:id".
std::string entity_ref(const EntityDictionary& dict, EntityId e);

void write_interactions(const std::filesystem::path& path, const std::vector<InteractionRecord>& rows,
                        const std::vector<std::string>& users, const std::vector<std::string>& items);
void write_kg(const std::filesystem::path& path, const std::vector<Triple>& triples,
              const std::array<std::vector<std::string>, kEntityTypeCount>& names);
void write_reviews(const std::filesystem::path& path, const std::vector<ReviewRecord>& rows,
                   const std::array<std::vector<std::string>, kEntityTypeCount>& names);

}  // namespace tprec
