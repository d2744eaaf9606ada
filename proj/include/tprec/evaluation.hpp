#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include "tprec/temporal_features.hpp"

namespace tprec {

struct InteractionRecord {
  std::uint32_t user = 0;  // user index
  std::uint32_t item = 0;  // item index
  Timestamp time;
};

struct ReviewRecord {
  std::uint32_t user = 0;
  std::uint32_t item = 0;
  Timestamp time;
  std::vector<std::uint32_t> words;  // word (Feature) indices, in order
};

enum class SplitMode { Normal, Sequential };

struct SplitSpec {
  SplitMode mode = SplitMode::Normal;
  // Normal: random per-user test share, then a share of the rest for validation.
  double test_fraction = 0.3;
  double valid_fraction_of_train = 0.1;
  // Sequential: chronological shares (train gets the remainder).
  double sequential_valid = 0.1;
  double sequential_test = 0.3;
  std::size_t min_interactions = 5;
  std::uint64_t seed = 0;
};

struct Split {
  std::vector<InteractionRecord> train, valid, test;
  std::vector<std::uint32_t> excluded_users;
};

/// Per-user partition. Users below min_interactions are dropped (listed in
/// excluded_users). Test takes floor(fraction * n); output is ordered by
/// (user, time, item).
Split split_interactions(std::span<const InteractionRecord> interactions, const SplitSpec& spec);

struct RankingMetrics {
  double ndcg = 0.0;
  double recall = 0.0;
  double precision = 0.0;
  double hr = 0.0;
  std::size_t users = 0;  // users averaged over
};

/// One user's metrics at K. `ranked` holds recommended items in rank order.
RankingMetrics user_ranking_metrics(std::span<const std::uint32_t> ranked, const std::set<std::uint32_t>& relevant, int k);

/// Macro-average over users with a non-empty relevant set. Users without a
/// recommendation list score 0. Values are fractions in [0, 1].
RankingMetrics ranking_metrics(const std::map<std::uint32_t, std::vector<std::uint32_t>>& ranked,
                               const std::map<std::uint32_t, std::set<std::uint32_t>>& relevant, int k);

struct ExplanationMetrics {
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
  std::size_t users = 0;
};

/// |S∩G|/(|G|+1), |S∩G|/(|S|+1) and 2PR/(P+R+1) for one user.
ExplanationMetrics user_explanation_metrics(const std::set<std::uint32_t>& path_words, const std::set<std::uint32_t>& reasons);

/// Macro-average over the users present in `reasons`.
ExplanationMetrics explanation_metrics(const std::map<std::uint32_t, std::set<std::uint32_t>>& path_words,
                                       const std::map<std::uint32_t, std::set<std::uint32_t>>& reasons);

struct ReasonFilter {
  std::uint64_t max_frequency = 5000;
  double min_tfidf = 0.1;
};

/// tf = count in the review / review length; idf = ln(N / df).
double tfidf(std::size_t count_in_doc, std::size_t doc_length, std::size_t docs, std::size_t docs_with_word);

/// Filtered word sets keyed by (user, item). A word is dropped from a review
/// when its corpus frequency exceeds max_frequency and its TF-IDF in that
/// review is below min_tfidf.
struct GroundTruthReasons {
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::set<std::uint32_t>> words;

  /// Union over the given (user, item) pairs.
  std::set<std::uint32_t> user_reasons(std::uint32_t user, std::span<const std::uint32_t> items) const;
};

GroundTruthReasons build_ground_truth(std::span<const ReviewRecord> reviews, const ReasonFilter& filter = {});

}  // namespace tprec
