#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "tprec/common.hpp"

namespace tprec {

/// Per-dimension standardization applied before EM.
struct FeatureNormalizer {
  Vec mean;
  Vec scale;

  static constexpr double kScaleFloor = 1e-12;

  static FeatureNormalizer fit(const RowMatrix& features);
  Vec normalize(std::span<const double> raw) const;
  Vec denormalize(std::span<const double> normalized) const;
};

struct GmmConfig {
  int max_iter = 200;
  double tol = 1e-6;  // on mean per-row log-likelihood
  std::uint64_t seed = 0;
  double variance_floor = 1e-6;
};

/// Diagonal-covariance Gaussian mixture. Means and variances live in the
/// normalized feature space.
struct GmmModel {
  int components = 0;
  int dims = 0;
  FeatureNormalizer normalizer;
  Vec weights;
  std::vector<Vec> means;
  std::vector<Vec> variances;

  // Fit diagnostics.
  std::uint64_t seed = 0;
  std::size_t rows = 0;
  double log_likelihood = 0.0;
  int iterations = 0;
  int reseeds = 0;
  double bic_value = 0.0;  // set by select_cluster_count
  std::vector<double> log_likelihood_trace;

  Vec raw_mean(int component) const;
  Vec raw_variance(int component) const;

  nlohmann::json to_json() const;
  static GmmModel from_json(const nlohmann::json& doc);
};

/// EM on standardized features. Throws std::invalid_argument when there are
/// fewer rows than components or non-finite inputs.
GmmModel fit_gmm(const RowMatrix& features, int components, const GmmConfig& config);

/// Free-parameter count for a diagonal mixture: L*(2m+1) - 1.
std::int64_t gmm_free_parameters(int components, int dims);

/// Lower-is-better BIC: p*ln(n) - 2*ln(L^).
double bic(const GmmModel& model, const RowMatrix& features);

/// Total data log-likelihood under the model.
double log_likelihood(const GmmModel& model, const RowMatrix& features);

struct ClusterSearch {
  int best = 0;
  GmmModel model;
  std::vector<int> evaluated;
  std::vector<double> bic_values;
};

/// Fits every L in [lo, hi] once and keeps the BIC minimizer (ties toward
/// smaller L).
ClusterSearch select_cluster_count(const RowMatrix& features, int lo, int hi, const GmmConfig& config);

/// Component posterior for a raw feature vector; sums to 1.
Vec posterior(const GmmModel& model, std::span<const double> feature);

/// Argmax with ties to the smallest index.
int assign_relation(std::span<const double> weights);

namespace kernels {

/// Per-row component log-joint log(w_l) + log N(x_i; mu_l, var_l), written to
/// out (rows x L). Inputs are normalized rows.
void gmm_log_joint_serial(const GmmModel& model, const RowMatrix& normalized, RowMatrix& out);
void gmm_log_joint_parallel(const GmmModel& model, const RowMatrix& normalized, RowMatrix& out);

/// Converts log-joint rows into responsibilities in place and returns the
/// per-row log-sum-exp (log-likelihood contribution).
Vec normalize_log_rows_serial(RowMatrix& log_joint);
Vec normalize_log_rows_parallel(RowMatrix& log_joint);

}  // namespace kernels

}  // namespace tprec
