#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "tprec/common.hpp"
#include "tprec/evaluation.hpp"

using namespace tprec;

namespace {

struct OracleRanking {
  double ndcg, recall, precision, hr;
};

// Straight from the definitions: binary gains, log2(rank + 1) discounts.
OracleRanking oracle_ranking(const std::vector<std::uint32_t>& ranked, const std::set<std::uint32_t>& rel, int k) {
  double dcg = 0, idcg = 0;
  int hits = 0, used = 0;
  for (int rank = 1; rank <= k && rank <= static_cast<int>(ranked.size()); ++rank) {
    ++used;
    if (rel.count(ranked[static_cast<std::size_t>(rank - 1)])) {
      ++hits;
      dcg += 1.0 / std::log2(rank + 1.0);
    }
  }
  for (int rank = 1; rank <= std::min<int>(k, static_cast<int>(rel.size())); ++rank) idcg += 1.0 / std::log2(rank + 1.0);
  return {dcg / idcg, static_cast<double>(hits) / static_cast<double>(rel.size()), used ? hits / static_cast<double>(used) : 0.0,
          hits ? 1.0 : 0.0};
}

std::vector<std::uint32_t> random_ranking(Rng& rng, std::size_t n, std::uint32_t universe) {
  std::vector<std::uint32_t> all(universe);
  for (std::uint32_t i = 0; i < universe; ++i) all[i] = i;
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(std::min<std::size_t>(n, universe));
  return all;
}

std::set<std::uint32_t> random_set(Rng& rng, std::size_t max_size, std::uint32_t universe) {
  std::set<std::uint32_t> s;
  const std::size_t n = rng() % (max_size + 1);
  for (std::size_t i = 0; i < n; ++i) s.insert(static_cast<std::uint32_t>(rng() % universe));
  return s;
}

std::vector<InteractionRecord> interactions(std::uint32_t users, std::uint32_t per_user, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<InteractionRecord> out;
  for (std::uint32_t u = 0; u < users; ++u)
    for (std::uint32_t k = 0; k < per_user; ++k)
      out.push_back({u, static_cast<std::uint32_t>(rng() % 50), Timestamp{static_cast<std::int64_t>(1'500'000'000 + rng() % 10'000'000)}});
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

auto key(const InteractionRecord& r) { return std::tuple(r.user, r.time.seconds, r.item); }

}  // namespace

TEST(RankingMetrics, WorkedExample) {
  const std::set<std::uint32_t> rel{1, 2, 3};
  const std::vector<std::uint32_t> ranked{1, 10, 11, 12, 13, 14, 15, 16, 17, 18};
  const RankingMetrics m = user_ranking_metrics(ranked, rel, 10);
  const double idcg = 1.0 + 1.0 / std::log2(3.0) + 0.5;
  EXPECT_NEAR(m.ndcg, 1.0 / idcg, 1e-12);
  EXPECT_DOUBLE_EQ(m.recall, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.precision, 0.1);
  EXPECT_EQ(m.hr, 1.0);
}

TEST(RankingMetrics, PerfectAndNoHits) {
  const std::set<std::uint32_t> rel{4, 5};
  const RankingMetrics perfect = user_ranking_metrics(std::vector<std::uint32_t>{5, 4, 9}, rel, 10);
  EXPECT_DOUBLE_EQ(perfect.ndcg, 1.0);
  EXPECT_EQ(perfect.hr, 1.0);
  const RankingMetrics none = user_ranking_metrics(std::vector<std::uint32_t>{1, 2, 3}, rel, 10);
  EXPECT_EQ(none.ndcg, 0.0);
  EXPECT_EQ(none.recall, 0.0);
  EXPECT_EQ(none.precision, 0.0);
  EXPECT_EQ(none.hr, 0.0);
  EXPECT_THROW(user_ranking_metrics(std::vector<std::uint32_t>{}, rel, 0), std::invalid_argument);
}

TEST(RankingMetrics, PrecisionUsesPositionsFilled) {
  const RankingMetrics m = user_ranking_metrics(std::vector<std::uint32_t>{7, 8}, {7}, 10);
  EXPECT_DOUBLE_EQ(m.precision, 0.5);
}

TEST(RankingMetrics, RandomFixturesMatchOracle) {
  Rng rng(3);
  for (int rep = 0; rep < 200; ++rep) {
    std::map<std::uint32_t, std::vector<std::uint32_t>> ranked;
    std::map<std::uint32_t, std::set<std::uint32_t>> rel;
    double sum[4] = {0, 0, 0, 0};
    int counted = 0;
    for (std::uint32_t u = 0; u < 12; ++u) {
      rel[u] = random_set(rng, 6, 30);
      if (rng() % 5 != 0) ranked[u] = random_ranking(rng, rng() % 15, 30);
      if (rel[u].empty()) continue;
      const auto it = ranked.find(u);
      const OracleRanking o = oracle_ranking(it == ranked.end() ? std::vector<std::uint32_t>{} : it->second, rel[u], 10);
      const RankingMetrics m = user_ranking_metrics(it == ranked.end() ? std::vector<std::uint32_t>{} : it->second, rel[u], 10);
      EXPECT_NEAR(m.ndcg, o.ndcg, 1e-9);
      EXPECT_NEAR(m.recall, o.recall, 1e-9);
      EXPECT_NEAR(m.precision, o.precision, 1e-9);
      EXPECT_NEAR(m.hr, o.hr, 1e-9);
      sum[0] += o.ndcg, sum[1] += o.recall, sum[2] += o.precision, sum[3] += o.hr;
      ++counted;
    }
    const RankingMetrics all = ranking_metrics(ranked, rel, 10);
    ASSERT_EQ(all.users, static_cast<std::size_t>(counted));
    if (!counted) continue;
    EXPECT_NEAR(all.ndcg, sum[0] / counted, 1e-9);
    EXPECT_NEAR(all.recall, sum[1] / counted, 1e-9);
    EXPECT_NEAR(all.precision, sum[2] / counted, 1e-9);
    EXPECT_NEAR(all.hr, sum[3] / counted, 1e-9);
    for (double v : {all.ndcg, all.recall, all.precision, all.hr}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(RankingMetrics, AddingAHitNeverLowersRecallOrHr) {
  Rng rng(4);
  for (int rep = 0; rep < 200; ++rep) {
    std::set<std::uint32_t> rel = random_set(rng, 5, 40);
    rel.insert(99);
    std::vector<std::uint32_t> ranked = random_ranking(rng, 10, 40);
    const RankingMetrics before = user_ranking_metrics(ranked, rel, 10);
    for (auto& x : ranked) {
      if (!rel.count(x)) {
        x = 99;
        break;
      }
    }
    const RankingMetrics after = user_ranking_metrics(ranked, rel, 10);
    EXPECT_GE(after.recall, before.recall);
    EXPECT_GE(after.hr, before.hr);
  }
}

TEST(RankingMetrics, EmptyListsScoreZeroEmptyTestSetsSkipped) {
  const std::map<std::uint32_t, std::vector<std::uint32_t>> ranked{{0, {1}}};
  const std::map<std::uint32_t, std::set<std::uint32_t>> rel{{0, {1}}, {1, {2}}, {2, {}}};
  const RankingMetrics m = ranking_metrics(ranked, rel, 10);
  EXPECT_EQ(m.users, 2u);
  EXPECT_DOUBLE_EQ(m.hr, 0.5);
  EXPECT_DOUBLE_EQ(m.ndcg, 0.5);
}

TEST(ExplanationMetrics, PlusOneDenominators) {
  const ExplanationMetrics empty = user_explanation_metrics({}, {});
  EXPECT_EQ(empty.recall, 0.0);
  EXPECT_EQ(empty.precision, 0.0);
  EXPECT_EQ(empty.f1, 0.0);
  const ExplanationMetrics one = user_explanation_metrics({7}, {7});
  EXPECT_DOUBLE_EQ(one.recall, 0.5);
  EXPECT_DOUBLE_EQ(one.precision, 0.5);
  EXPECT_DOUBLE_EQ(one.f1, 0.25);
  const ExplanationMetrics miss = user_explanation_metrics({1, 2}, {3});
  EXPECT_EQ(miss.f1, 0.0);
}

TEST(ExplanationMetrics, RandomFixturesMatchSetOracle) {
  Rng rng(5);
  for (int rep = 0; rep < 200; ++rep) {
    std::map<std::uint32_t, std::set<std::uint32_t>> s, g;
    double r_sum = 0, p_sum = 0, f_sum = 0;
    for (std::uint32_t u = 0; u < 8; ++u) {
      if (rng() % 4) s[u] = random_set(rng, 6, 12);
      g[u] = random_set(rng, 6, 12);
      std::vector<std::uint32_t> both;
      const auto& su = s.count(u) ? s[u] : std::set<std::uint32_t>{};
      std::set_intersection(su.begin(), su.end(), g[u].begin(), g[u].end(), std::back_inserter(both));
      const double r = both.size() / (g[u].size() + 1.0), p = both.size() / (su.size() + 1.0);
      const double f = 2 * p * r / (p + r + 1);
      const ExplanationMetrics m = user_explanation_metrics(su, g[u]);
      EXPECT_NEAR(m.recall, r, 1e-9);
      EXPECT_NEAR(m.precision, p, 1e-9);
      EXPECT_NEAR(m.f1, f, 1e-9);
      r_sum += r, p_sum += p, f_sum += f;
    }
    const ExplanationMetrics all = explanation_metrics(s, g);
    EXPECT_EQ(all.users, 8u);
    EXPECT_NEAR(all.recall, r_sum / 8, 1e-9);
    EXPECT_NEAR(all.precision, p_sum / 8, 1e-9);
    EXPECT_NEAR(all.f1, f_sum / 8, 1e-9);
  }
}

TEST(GroundTruth, TfIdfByHand) {
  // three reviews: [a a b], [b c], [c]
  EXPECT_NEAR(tfidf(2, 3, 3, 1), 2.0 / 3.0 * std::log(3.0), 1e-12);
  EXPECT_NEAR(tfidf(1, 3, 3, 2), 1.0 / 3.0 * std::log(1.5), 1e-12);
  EXPECT_NEAR(tfidf(1, 1, 3, 2), std::log(1.5), 1e-12);
  EXPECT_EQ(tfidf(1, 2, 3, 3), 0.0);
  EXPECT_EQ(tfidf(0, 0, 3, 1), 0.0);

  const std::vector<ReviewRecord> reviews{{0, 0, Timestamp{}, {1, 1, 2}}, {0, 1, Timestamp{}, {2, 3}}, {1, 0, Timestamp{}, {3}}};
  const GroundTruthReasons gt = build_ground_truth(reviews);
  EXPECT_EQ(gt.words.at({0, 0}), (std::set<std::uint32_t>{1, 2}));
  EXPECT_EQ(gt.user_reasons(0, std::vector<std::uint32_t>{0, 1}), (std::set<std::uint32_t>{1, 2, 3}));
  EXPECT_TRUE(gt.user_reasons(1, std::vector<std::uint32_t>{5}).empty());
  EXPECT_TRUE(build_ground_truth(std::vector<ReviewRecord>{}).words.empty());
}

TEST(GroundTruth, FrequencyAndTfIdfFilter) {
  // Word 0 appears in every review, so its TF-IDF is 0 everywhere.
  auto corpus = [](std::uint32_t reviews) {
    std::vector<ReviewRecord> out;
    for (std::uint32_t i = 0; i < reviews; ++i) out.push_back({i, 0, Timestamp{}, {0, 1 + i % 7}});
    return out;
  };
  const GroundTruthReasons rare = build_ground_truth(corpus(4999));
  EXPECT_TRUE(rare.words.at({0, 0}).count(0));
  const GroundTruthReasons frequent = build_ground_truth(corpus(6000));
  EXPECT_FALSE(frequent.words.at({0, 0}).count(0));
  EXPECT_TRUE(frequent.words.at({0, 0}).count(1));  // rare word kept

  // Frequent but salient: 6000 occurrences concentrated in few reviews.
  std::vector<ReviewRecord> salient;
  for (std::uint32_t i = 0; i < 100; ++i) salient.push_back({i, 0, Timestamp{}, {1}});
  salient.push_back({1000, 0, Timestamp{}, std::vector<std::uint32_t>(6000, 9)});
  EXPECT_TRUE(build_ground_truth(salient).words.at({1000, 0}).count(9));
}

TEST(Split, NormalTenGivesSevenAndThree) {
  SplitSpec spec;
  spec.valid_fraction_of_train = 0.0;
  const auto rows = interactions(1, 10, 1);
  const Split s = split_interactions(rows, spec);
  EXPECT_EQ(s.train.size(), 7u);
  EXPECT_EQ(s.test.size(), 3u);
  SplitSpec with_valid;
  const Split v = split_interactions(rows, with_valid);
  EXPECT_EQ(v.test.size(), 3u);
  EXPECT_EQ(v.valid.size(), 0u);  // floor(0.1 * 7)
  EXPECT_EQ(v.train.size(), 7u);
}

TEST(Split, PartitionDeterminismAndExclusion) {
  for (SplitMode mode : {SplitMode::Normal, SplitMode::Sequential}) {
    SplitSpec spec;
    spec.mode = mode;
    spec.seed = 5;
    auto rows = interactions(20, 23, 2);
    rows.push_back({99, 1, Timestamp{1}});  // only four interactions
    for (int i = 0; i < 3; ++i) rows.push_back({99, 2, Timestamp{2 + i}});
    const Split a = split_interactions(rows, spec);
    const Split b = split_interactions(rows, spec);
    EXPECT_EQ(a.excluded_users, std::vector<std::uint32_t>{99});
    std::vector<InteractionRecord> merged;
    for (const auto* part : {&a.train, &a.valid, &a.test}) merged.insert(merged.end(), part->begin(), part->end());
    std::vector<InteractionRecord> kept;
    for (const auto& r : rows)
      if (r.user != 99) kept.push_back(r);
    auto by_key = [](const InteractionRecord& x, const InteractionRecord& y) { return key(x) < key(y); };
    std::sort(merged.begin(), merged.end(), by_key);
    std::sort(kept.begin(), kept.end(), by_key);
    ASSERT_EQ(merged.size(), kept.size());
    for (std::size_t i = 0; i < kept.size(); ++i) EXPECT_EQ(key(merged[i]), key(kept[i]));
    ASSERT_EQ(a.test.size(), b.test.size());
    for (std::size_t i = 0; i < a.test.size(); ++i) EXPECT_EQ(key(a.test[i]), key(b.test[i]));
    EXPECT_EQ(a.test.size(), 20u * 6);  // floor(0.3 * 23)
  }
}

TEST(Split, SequentialKeepsTimeOrder) {
  SplitSpec spec;
  spec.mode = SplitMode::Sequential;
  const auto rows = interactions(15, 20, 3);
  const Split s = split_interactions(rows, spec);
  for (std::uint32_t u = 0; u < 15; ++u) {
    std::int64_t train_max = INT64_MIN, valid_min = INT64_MAX, valid_max = INT64_MIN, test_min = INT64_MAX;
    std::size_t n[3] = {0, 0, 0};
    for (const auto& r : s.train)
      if (r.user == u) train_max = std::max(train_max, r.time.seconds), ++n[0];
    for (const auto& r : s.valid)
      if (r.user == u) valid_min = std::min(valid_min, r.time.seconds), valid_max = std::max(valid_max, r.time.seconds), ++n[1];
    for (const auto& r : s.test)
      if (r.user == u) test_min = std::min(test_min, r.time.seconds), ++n[2];
    EXPECT_LE(train_max, valid_min);
    EXPECT_LE(valid_max, test_min);
    EXPECT_EQ(n[0], 12u);
    EXPECT_EQ(n[1], 2u);
    EXPECT_EQ(n[2], 6u);
  }
  SplitSpec bad;
  bad.test_fraction = 1.5;
  EXPECT_THROW(split_interactions(rows, bad), std::invalid_argument);
}
