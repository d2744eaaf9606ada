#include "tprec/synthetic.hpp"

#include <algorithm>
#include <chrono>
#include <stdexcept>
#include <string>

#include "tprec/common.hpp"

namespace tprec {

namespace {

enum : std::uint64_t { kUserTag = 0x51, kTasteTag = 0x52, kDayTag = 0x53, kKgTag = 0x54, kReviewTag = 0x55 };

int day_season(std::int64_t day) {
  const std::chrono::year_month_day ymd{std::chrono::sys_days{std::chrono::days{day}}};
  return static_cast<int>(season_of_month(static_cast<unsigned>(ymd.month())));
}

int item_category(const SyntheticSpec& spec, int item) {
  const int s = item_season(spec, item) - 1;
  std::vector<int> pool;
  for (int c = 0; c < spec.categories; ++c)
    if (c % 4 == s) pool.push_back(c);
  if (pool.empty()) return item % spec.categories;
  return pool[static_cast<std::size_t>(item / 4) % pool.size()];
}

std::vector<int> user_taste(const SyntheticSpec& spec, int user) {
  Rng rng(derive_seed(spec.seed, kTasteTag, static_cast<std::uint64_t>(user)));
  std::uniform_int_distribution<int> pick(0, spec.categories - 1);
  std::vector<int> out{pick(rng)};
  if (spec.categories > 1) {
    int second = pick(rng);
    while (second == out[0]) second = pick(rng);
    out.push_back(second);
  }
  return out;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (users < 1 || items < 2) throw std::invalid_argument("synth: need at least 1 user and 2 items");
  if (brands < 1 || categories < 1) throw std::invalid_argument("synth: need at least one brand and one category");
  if (season_words < 0 || words < 4 * season_words + 1) throw std::invalid_argument("synth: words must exceed 4 * season_words");
  if (horizon_days < 365) throw std::invalid_argument("synth: horizon_days must be >= 365");
  if (purchases_per_user_day < 0 || item_in_season < 0 || item_off_season < 0 || user_in_season < 0 || user_off_season < 0 ||
      taste_boost < 0) {
    throw std::invalid_argument("synth: rates and multipliers must be >= 0");
  }
  for (const auto& f : festivals)
    if (f.multiplier < 0 || f.month < 1 || f.month > 12 || f.day < 1 || f.day > 31)
      throw std::invalid_argument("synth: bad festival entry");
  if (review_probability < 0 || review_probability > 1 || season_word_share < 0 || season_word_share > 1)
    throw std::invalid_argument("synth: probabilities must lie in [0, 1]");
  if (words_per_review < 1) throw std::invalid_argument("synth: words_per_review must be >= 1");
}

int item_season(const SyntheticSpec&, int item) { return item % 4 + 1; }

std::array<double, 4> item_affinity(const SyntheticSpec& spec, int item) {
  std::array<double, 4> a;
  a.fill(spec.item_off_season);
  a[static_cast<std::size_t>(item_season(spec, item) - 1)] = spec.item_in_season;
  return a;
}

int user_season(const SyntheticSpec& spec, int user) {
  return static_cast<int>(derive_seed(spec.seed, kUserTag, static_cast<std::uint64_t>(user)) % 4) + 1;
}

double festival_multiplier(const SyntheticSpec& spec, std::int64_t day) {
  const std::chrono::year_month_day ymd{std::chrono::sys_days{std::chrono::days{day}}};
  double m = 1.0;
  for (const auto& f : spec.festivals)
    if (static_cast<unsigned>(ymd.month()) == f.month && static_cast<unsigned>(ymd.day()) == f.day) m *= f.multiplier;
  return m;
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  SyntheticData out;
  auto& names = out.names;
  for (int u = 0; u < spec.users; ++u) names[0].push_back("u" + std::to_string(u));
  for (int i = 0; i < spec.items; ++i) names[1].push_back("i" + std::to_string(i));
  for (int w = 0; w < spec.words; ++w) names[2].push_back("w" + std::to_string(w));
  for (int b = 0; b < spec.brands; ++b) names[3].push_back("b" + std::to_string(b));
  for (int c = 0; c < spec.categories; ++c) names[4].push_back("c" + std::to_string(c));

  const std::int64_t first_day = Timestamp{spec.start}.day();
  std::vector<int> season(static_cast<std::size_t>(spec.horizon_days));
  std::vector<double> festival(static_cast<std::size_t>(spec.horizon_days));
  for (int d = 0; d < spec.horizon_days; ++d) {
    season[static_cast<std::size_t>(d)] = day_season(first_day + d);
    festival[static_cast<std::size_t>(d)] = festival_multiplier(spec, first_day + d);
  }

  std::vector<std::array<double, 4>> affinity;
  std::vector<int> category;
  for (int i = 0; i < spec.items; ++i) {
    affinity.push_back(item_affinity(spec, i));
    category.push_back(item_category(spec, i));
  }

  const auto n_items = static_cast<std::size_t>(spec.items);
  for (int u = 0; u < spec.users; ++u) {
    const auto taste = user_taste(spec, u);
    const int home = user_season(spec, u);
    // Item weights and total daily rate per season.
    std::array<std::vector<double>, 4> weights;
    std::array<double, 4> mean_weight{};
    for (int s = 0; s < 4; ++s) {
      auto& w = weights[static_cast<std::size_t>(s)];
      w.resize(n_items);
      for (std::size_t i = 0; i < n_items; ++i) {
        const bool liked = std::find(taste.begin(), taste.end(), category[i]) != taste.end();
        w[i] = affinity[i][static_cast<std::size_t>(s)] * (liked ? spec.taste_boost : 1.0);
        mean_weight[static_cast<std::size_t>(s)] += w[i];
      }
      mean_weight[static_cast<std::size_t>(s)] /= static_cast<double>(n_items);
    }
    Rng rng(derive_seed(spec.seed, kDayTag, static_cast<std::uint64_t>(u)));
    std::uniform_int_distribution<std::int64_t> second_of_day(0, kSecondsPerDay - 1);
    for (int d = 0; d < spec.horizon_days; ++d) {
      const int s = season[static_cast<std::size_t>(d)] - 1;
      const double user_mult = (s + 1 == home) ? spec.user_in_season : spec.user_off_season;
      const double rate = spec.purchases_per_user_day * user_mult * festival[static_cast<std::size_t>(d)] *
                          mean_weight[static_cast<std::size_t>(s)];
      if (!(rate > 0.0)) continue;
      const int n = std::poisson_distribution<int>(rate)(rng);
      if (n == 0) continue;
      const auto& w = weights[static_cast<std::size_t>(s)];
      std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
      for (int k = 0; k < n; ++k) {
        const auto item = static_cast<std::uint32_t>(pick(rng));
        const Timestamp t{spec.start + static_cast<std::int64_t>(d) * kSecondsPerDay + second_of_day(rng)};
        out.interactions.push_back({static_cast<std::uint32_t>(u), item, t});
      }
    }
  }
  std::sort(out.interactions.begin(), out.interactions.end(), [](const InteractionRecord& a, const InteractionRecord& b) {
    if (a.time.seconds != b.time.seconds) return a.time.seconds < b.time.seconds;
    if (a.user != b.user) return a.user < b.user;
    return a.item < b.item;
  });

  Rng review_rng(derive_seed(spec.seed, kReviewTag));
  std::bernoulli_distribution write_review(spec.review_probability);
  std::bernoulli_distribution seasonal_word(spec.season_word_share);
  const int generic_base = 4 * spec.season_words;
  std::uniform_int_distribution<int> generic(generic_base, spec.words - 1);
  std::uniform_int_distribution<int> in_season(0, std::max(0, spec.season_words - 1));
  for (const auto& r : out.interactions) {
    if (!write_review(review_rng)) continue;
    ReviewRecord rv{r.user, r.item, r.time, {}};
    const int s = item_season(spec, static_cast<int>(r.item)) - 1;
    for (int k = 0; k < spec.words_per_review; ++k) {
      const bool seasonal = spec.season_words > 0 && seasonal_word(review_rng);
      rv.words.push_back(static_cast<std::uint32_t>(seasonal ? s * spec.season_words + in_season(review_rng) : generic(review_rng)));
    }
    out.reviews.push_back(std::move(rv));
  }

  Rng kg_rng(derive_seed(spec.seed, kKgTag));
  const RelationCatalog cat(1);
  std::vector<std::vector<int>> by_season(4);
  for (int i = 0; i < spec.items; ++i) by_season[static_cast<std::size_t>(item_season(spec, i) - 1)].push_back(i);
  for (int i = 0; i < spec.items; ++i) {
    const auto ii = static_cast<std::uint32_t>(i);
    const int s = item_season(spec, i) - 1;
    out.static_triples.push_back({{EntityType::Item, ii}, cat.static_relation(StaticBase::BelongTo),
                                  {EntityType::Category, static_cast<std::uint32_t>(category[static_cast<std::size_t>(i)])}});
    std::vector<int> brand_pool;
    for (int b = 0; b < spec.brands; ++b)
      if (b % 4 == s) brand_pool.push_back(b);
    const int brand = brand_pool.empty() ? std::uniform_int_distribution<int>(0, spec.brands - 1)(kg_rng)
                                         : brand_pool[std::uniform_int_distribution<std::size_t>(0, brand_pool.size() - 1)(kg_rng)];
    out.static_triples.push_back(
        {{EntityType::Item, ii}, cat.static_relation(StaticBase::ProducedBy), {EntityType::Brand, static_cast<std::uint32_t>(brand)}});
    const auto& peers = by_season[static_cast<std::size_t>(s)];
    if (peers.size() < 2) continue;
    std::uniform_int_distribution<std::size_t> peer(0, peers.size() - 1);
    auto other = [&] {
      int j = peers[peer(kg_rng)];
      while (j == i) j = peers[peer(kg_rng)];
      return static_cast<std::uint32_t>(j);
    };
    for (int k = 0; k < 2; ++k)
      out.static_triples.push_back({{EntityType::Item, ii}, cat.static_relation(StaticBase::AlsoBought), {EntityType::Item, other()}});
    out.static_triples.push_back({{EntityType::Item, ii}, cat.static_relation(StaticBase::BoughtTogether), {EntityType::Item, other()}});
  }
  return out;
}

}  // namespace tprec
