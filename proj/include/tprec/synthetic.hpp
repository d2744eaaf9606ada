#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "tprec/evaluation.hpp"
#include "tprec/tckg.hpp"

namespace tprec {

struct Festival {
  unsigned month = 11;
  unsigned day = 26;
  double multiplier = 3.0;
};

/// Seasonal purchase generator. Each item belongs to one season and each
/// user leans toward one season and two categories.
struct SyntheticSpec {
  int users = 200;
  int items = 100;
  int brands = 12;
  int categories = 8;
  int words = 48;
  int season_words = 8;  // per season; the rest are generic
  int horizon_days = 730;
  std::int64_t start = 1546300800;  // 2019-01-01 UTC
  double purchases_per_user_day = 0.045;
  double item_in_season = 3.0;
  double item_off_season = 0.25;
  double user_in_season = 2.5;
  double user_off_season = 0.5;
  double taste_boost = 3.0;
  std::vector<Festival> festivals{{11, 26, 3.0}, {12, 24, 2.0}};
  double review_probability = 0.6;
  int words_per_review = 4;
  double season_word_share = 0.7;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticData {
  std::array<std::vector<std::string>, kEntityTypeCount> names;
  std::vector<InteractionRecord> interactions;  // sorted by (time, user, item)
  std::vector<ReviewRecord> reviews;
  std::vector<Triple> static_triples;
};

/// Season (1..4) an item is tied to, and its per-season multipliers.
int item_season(const SyntheticSpec& spec, int item);
std::array<double, 4> item_affinity(const SyntheticSpec& spec, int item);
int user_season(const SyntheticSpec& spec, int user);

/// Festival multiplier for a day index (1 when not a festival).
double festival_multiplier(const SyntheticSpec& spec, std::int64_t day);

SyntheticData generate_synthetic(const SyntheticSpec& spec);

}  // namespace tprec
