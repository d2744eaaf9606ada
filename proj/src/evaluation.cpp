#include "tprec/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

#include <spdlog/spdlog.h>

#include "tprec/common.hpp"

namespace tprec {

namespace {

bool by_user_time(const InteractionRecord& a, const InteractionRecord& b) {
  if (a.user != b.user) return a.user < b.user;
  if (a.time.seconds != b.time.seconds) return a.time.seconds < b.time.seconds;
  return a.item < b.item;
}

std::size_t share(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
}

}  // namespace

Split split_interactions(std::span<const InteractionRecord> interactions, const SplitSpec& spec) {
  if (spec.test_fraction < 0 || spec.test_fraction > 1 || spec.valid_fraction_of_train < 0 || spec.valid_fraction_of_train > 1 ||
      spec.sequential_valid < 0 || spec.sequential_test < 0 || spec.sequential_valid + spec.sequential_test > 1) {
    throw std::invalid_argument("split fractions out of range");
  }
  std::map<std::uint32_t, std::vector<InteractionRecord>> per_user;
  for (const auto& r : interactions) per_user[r.user].push_back(r);

  Split out;
  for (auto& [user, rows] : per_user) {
    if (rows.size() < spec.min_interactions) {
      out.excluded_users.push_back(user);
      continue;
    }
    std::sort(rows.begin(), rows.end(), by_user_time);
    const std::size_t n = rows.size();
    if (spec.mode == SplitMode::Sequential) {
      const std::size_t test = share(spec.sequential_test, n);
      const std::size_t valid = share(spec.sequential_valid, n);
      const std::size_t train = n - test - valid;
      out.train.insert(out.train.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(train));
      out.valid.insert(out.valid.end(), rows.begin() + static_cast<std::ptrdiff_t>(train),
                       rows.begin() + static_cast<std::ptrdiff_t>(train + valid));
      out.test.insert(out.test.end(), rows.begin() + static_cast<std::ptrdiff_t>(train + valid), rows.end());
      continue;
    }
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(derive_seed(spec.seed, 0x5B17, user));
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t test = share(spec.test_fraction, n);
    const std::size_t valid = share(spec.valid_fraction_of_train, n - test);
    std::vector<char> part(n, 0);  // 0 train, 1 valid, 2 test
    for (std::size_t i = 0; i < test; ++i) part[order[i]] = 2;
    for (std::size_t i = test; i < test + valid; ++i) part[order[i]] = 1;
    for (std::size_t i = 0; i < n; ++i) (part[i] == 0 ? out.train : part[i] == 1 ? out.valid : out.test).push_back(rows[i]);
  }
  if (!out.excluded_users.empty()) {
    spdlog::warn("{} users have fewer than {} interactions and were excluded", out.excluded_users.size(), spec.min_interactions);
  }
  return out;
}

RankingMetrics user_ranking_metrics(std::span<const std::uint32_t> ranked, const std::set<std::uint32_t>& relevant, int k) {
  if (k < 1) throw std::invalid_argument("K must be >= 1");
  RankingMetrics m;
  m.users = 1;
  if (relevant.empty()) return m;
  const std::size_t used = std::min(ranked.size(), static_cast<std::size_t>(k));
  double dcg = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < used; ++i) {
    if (relevant.count(ranked[i])) {
      ++hits;
      dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
    }
  }
  double idcg = 0.0;
  const std::size_t ideal = std::min(relevant.size(), static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < ideal; ++i) idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  m.ndcg = dcg / idcg;
  m.recall = static_cast<double>(hits) / static_cast<double>(relevant.size());
  m.precision = used ? static_cast<double>(hits) / static_cast<double>(used) : 0.0;
  m.hr = hits > 0 ? 1.0 : 0.0;
  return m;
}

RankingMetrics ranking_metrics(const std::map<std::uint32_t, std::vector<std::uint32_t>>& ranked,
                               const std::map<std::uint32_t, std::set<std::uint32_t>>& relevant, int k) {
  RankingMetrics total;
  std::size_t skipped = 0;
  static const std::vector<std::uint32_t> kNone;
  for (const auto& [user, items] : relevant) {
    if (items.empty()) {
      ++skipped;
      continue;
    }
    const auto it = ranked.find(user);
    const RankingMetrics m = user_ranking_metrics(it == ranked.end() ? kNone : it->second, items, k);
    total.ndcg += m.ndcg;
    total.recall += m.recall;
    total.precision += m.precision;
    total.hr += m.hr;
    ++total.users;
  }
  if (skipped) spdlog::info("{} users with an empty test set left out of ranking metrics", skipped);
  if (total.users) {
    const double n = static_cast<double>(total.users);
    total.ndcg /= n;
    total.recall /= n;
    total.precision /= n;
    total.hr /= n;
  }
  return total;
}

ExplanationMetrics user_explanation_metrics(const std::set<std::uint32_t>& path_words, const std::set<std::uint32_t>& reasons) {
  std::size_t overlap = 0;
  for (auto w : path_words) overlap += reasons.count(w);
  ExplanationMetrics m;
  m.users = 1;
  m.recall = static_cast<double>(overlap) / (static_cast<double>(reasons.size()) + 1.0);
  m.precision = static_cast<double>(overlap) / (static_cast<double>(path_words.size()) + 1.0);
  m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall + 1.0);
  return m;
}

ExplanationMetrics explanation_metrics(const std::map<std::uint32_t, std::set<std::uint32_t>>& path_words,
                                       const std::map<std::uint32_t, std::set<std::uint32_t>>& reasons) {
  ExplanationMetrics total;
  static const std::set<std::uint32_t> kNone;
  for (const auto& [user, g] : reasons) {
    const auto it = path_words.find(user);
    const ExplanationMetrics m = user_explanation_metrics(it == path_words.end() ? kNone : it->second, g);
    total.recall += m.recall;
    total.precision += m.precision;
    total.f1 += m.f1;
    ++total.users;
  }
  if (total.users) {
    const double n = static_cast<double>(total.users);
    total.recall /= n;
    total.precision /= n;
    total.f1 /= n;
  }
  return total;
}

double tfidf(std::size_t count_in_doc, std::size_t doc_length, std::size_t docs, std::size_t docs_with_word) {
  if (doc_length == 0 || docs_with_word == 0) return 0.0;
  const double tf = static_cast<double>(count_in_doc) / static_cast<double>(doc_length);
  return tf * std::log(static_cast<double>(docs) / static_cast<double>(docs_with_word));
}

std::set<std::uint32_t> GroundTruthReasons::user_reasons(std::uint32_t user, std::span<const std::uint32_t> items) const {
  std::set<std::uint32_t> out;
  for (auto item : items) {
    const auto it = words.find({user, item});
    if (it != words.end()) out.insert(it->second.begin(), it->second.end());
  }
  return out;
}

GroundTruthReasons build_ground_truth(std::span<const ReviewRecord> reviews, const ReasonFilter& filter) {
  GroundTruthReasons gt;
  if (reviews.empty()) return gt;
  std::unordered_map<std::uint32_t, std::uint64_t> frequency;
  std::unordered_map<std::uint32_t, std::size_t> doc_frequency;
  for (const auto& r : reviews) {
    std::set<std::uint32_t> distinct(r.words.begin(), r.words.end());
    for (auto w : r.words) ++frequency[w];
    for (auto w : distinct) ++doc_frequency[w];
  }
  for (const auto& r : reviews) {
    std::map<std::uint32_t, std::size_t> counts;
    for (auto w : r.words) ++counts[w];
    auto& kept = gt.words[{r.user, r.item}];
    for (const auto& [w, c] : counts) {
      const bool frequent = frequency[w] > filter.max_frequency;
      const double score = tfidf(c, r.words.size(), reviews.size(), doc_frequency[w]);
      if (frequent && score < filter.min_tfidf) continue;
      kept.insert(w);
    }
  }
  return gt;
}

}  // namespace tprec
