#include "tprec/time_clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

namespace tprec {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;  // ln(2*pi)
constexpr double kEmptyComponentMass = 1e-8;

RowMatrix normalize_rows(const FeatureNormalizer& norm, const RowMatrix& features) {
  RowMatrix out(features.rows, features.cols);
  for (std::size_t i = 0; i < features.rows; ++i) {
    auto src = features.row(i);
    auto dst = out.row(i);
    for (std::size_t j = 0; j < features.cols; ++j) dst[j] = (src[j] - norm.mean[j]) / norm.scale[j];
  }
  return out;
}

double log_joint_row(const GmmModel& m, std::span<const double> x, int l) {
  const auto& mu = m.means[static_cast<std::size_t>(l)];
  const auto& var = m.variances[static_cast<std::size_t>(l)];
  double acc = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double diff = x[j] - mu[j];
    acc += std::log(var[j]) + diff * diff / var[j];
  }
  return std::log(m.weights[static_cast<std::size_t>(l)]) - 0.5 * (static_cast<double>(x.size()) * kLog2Pi + acc);
}

double normalize_log_row(std::span<double> row) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : row) mx = std::max(mx, v);
  if (!std::isfinite(mx)) {
    for (double& v : row) v = 0.0;
    return mx;
  }
  double s = 0.0;
  for (double v : row) s += std::exp(v - mx);
  const double lse = mx + std::log(s);
  for (double& v : row) v = std::exp(v - lse);
  return lse;
}

void require_finite(const RowMatrix& features) {
  for (double v : features.data)
    if (!std::isfinite(v)) throw std::invalid_argument("features contain non-finite values");
}

std::size_t sample_discrete(std::span<const double> weights, Rng& rng) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) return std::uniform_int_distribution<std::size_t>(0, weights.size() - 1)(rng);
  double u = std::uniform_real_distribution<double>(0.0, total)(rng);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (u < weights[i]) return i;
    u -= weights[i];
  }
  return weights.size() - 1;
}

void seed_means(GmmModel& m, const RowMatrix& x, Rng& rng) {
  // k-means++: first center uniform, then proportional to squared distance.
  std::vector<double> d2(x.rows, std::numeric_limits<double>::infinity());
  std::size_t pick = std::uniform_int_distribution<std::size_t>(0, x.rows - 1)(rng);
  for (int l = 0; l < m.components; ++l) {
    if (l > 0) pick = sample_discrete(d2, rng);
    auto c = x.row(pick);
    m.means[static_cast<std::size_t>(l)].assign(c.begin(), c.end());
    for (std::size_t i = 0; i < x.rows; ++i) {
      double s = 0.0;
      auto r = x.row(i);
      for (std::size_t j = 0; j < x.cols; ++j) s += (r[j] - c[j]) * (r[j] - c[j]);
      d2[i] = std::min(d2[i], s);
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------

FeatureNormalizer FeatureNormalizer::fit(const RowMatrix& features) {
  FeatureNormalizer n;
  n.mean.assign(features.cols, 0.0);
  n.scale.assign(features.cols, 0.0);
  const double rows = static_cast<double>(features.rows);
  for (std::size_t i = 0; i < features.rows; ++i)
    for (std::size_t j = 0; j < features.cols; ++j) n.mean[j] += features(i, j);
  for (double& v : n.mean) v /= rows;
  for (std::size_t i = 0; i < features.rows; ++i)
    for (std::size_t j = 0; j < features.cols; ++j) {
      const double d = features(i, j) - n.mean[j];
      n.scale[j] += d * d;
    }
  for (double& v : n.scale) v = std::max(std::sqrt(v / rows), kScaleFloor);
  return n;
}

Vec FeatureNormalizer::normalize(std::span<const double> raw) const {
  if (raw.size() != mean.size()) throw std::invalid_argument("feature dimension mismatch");
  Vec out(raw.size());
  for (std::size_t j = 0; j < raw.size(); ++j) out[j] = (raw[j] - mean[j]) / scale[j];
  return out;
}

Vec FeatureNormalizer::denormalize(std::span<const double> normalized) const {
  Vec out(normalized.size());
  for (std::size_t j = 0; j < normalized.size(); ++j) out[j] = normalized[j] * scale[j] + mean[j];
  return out;
}

Vec GmmModel::raw_mean(int component) const { return normalizer.denormalize(means.at(static_cast<std::size_t>(component))); }

Vec GmmModel::raw_variance(int component) const {
  const auto& v = variances.at(static_cast<std::size_t>(component));
  Vec out(v.size());
  for (std::size_t j = 0; j < v.size(); ++j) out[j] = v[j] * normalizer.scale[j] * normalizer.scale[j];
  return out;
}

// ---------------------------------------------------------------------------

namespace kernels {

void gmm_log_joint_serial(const GmmModel& model, const RowMatrix& normalized, RowMatrix& out) {
  out = RowMatrix(normalized.rows, static_cast<std::size_t>(model.components));
  for (std::size_t i = 0; i < normalized.rows; ++i)
    for (int l = 0; l < model.components; ++l) out(i, static_cast<std::size_t>(l)) = log_joint_row(model, normalized.row(i), l);
}

void gmm_log_joint_parallel(const GmmModel& model, const RowMatrix& normalized, RowMatrix& out) {
  out = RowMatrix(normalized.rows, static_cast<std::size_t>(model.components));
  const auto n = static_cast<std::int64_t>(normalized.rows);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto row = static_cast<std::size_t>(i);
    for (int l = 0; l < model.components; ++l)
      out(row, static_cast<std::size_t>(l)) = log_joint_row(model, normalized.row(row), l);
  }
}

Vec normalize_log_rows_serial(RowMatrix& log_joint) {
  Vec lse(log_joint.rows);
  for (std::size_t i = 0; i < log_joint.rows; ++i) lse[i] = normalize_log_row(log_joint.row(i));
  return lse;
}

Vec normalize_log_rows_parallel(RowMatrix& log_joint) {
  Vec lse(log_joint.rows);
  const auto n = static_cast<std::int64_t>(log_joint.rows);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) lse[static_cast<std::size_t>(i)] = normalize_log_row(log_joint.row(static_cast<std::size_t>(i)));
  return lse;
}

}  // namespace kernels

// ---------------------------------------------------------------------------

GmmModel fit_gmm(const RowMatrix& features, int components, const GmmConfig& config) {
  if (components < 1) throw std::invalid_argument("component count must be >= 1");
  if (features.rows < static_cast<std::size_t>(components)) {
    throw std::invalid_argument("cannot fit " + std::to_string(components) + " components to " +
                                std::to_string(features.rows) + " rows");
  }
  if (features.cols == 0) throw std::invalid_argument("features have zero columns");
  require_finite(features);

  GmmModel m;
  m.components = components;
  m.dims = static_cast<int>(features.cols);
  m.seed = config.seed;
  m.rows = features.rows;
  m.normalizer = FeatureNormalizer::fit(features);
  const RowMatrix x = normalize_rows(m.normalizer, features);
  const std::size_t L = static_cast<std::size_t>(components);
  const std::size_t d = features.cols;
  const double n = static_cast<double>(x.rows);

  Rng rng(config.seed);
  m.weights.assign(L, 1.0 / static_cast<double>(L));
  m.means.assign(L, Vec(d, 0.0));
  seed_means(m, x, rng);
  Vec global_var(d, 0.0);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < d; ++j) global_var[j] += x(i, j) * x(i, j);  // normalized: mean 0
  for (double& v : global_var) v = std::max(v / n, config.variance_floor);
  m.variances.assign(L, global_var);

  RowMatrix resp;
  double prev = -std::numeric_limits<double>::infinity();
  for (int iter = 0;; ++iter) {
    kernels::gmm_log_joint_parallel(m, x, resp);
    const Vec lse = kernels::normalize_log_rows_parallel(resp);
    double ll = 0.0;
    for (double v : lse) ll += v;
    if (!std::isfinite(ll)) throw std::runtime_error("EM produced a non-finite log-likelihood");
    m.log_likelihood = ll;
    m.log_likelihood_trace.push_back(ll);
    m.iterations = iter;
    if (std::abs(ll - prev) / n < config.tol || iter >= config.max_iter) break;
    prev = ll;

    // M-step.
    for (std::size_t l = 0; l < L; ++l) {
      double mass = 0.0;
      for (std::size_t i = 0; i < x.rows; ++i) mass += resp(i, l);
      if (mass < kEmptyComponentMass) {
        const std::size_t pick = std::uniform_int_distribution<std::size_t>(0, x.rows - 1)(rng);
        auto r = x.row(pick);
        m.means[l].assign(r.begin(), r.end());
        m.variances[l] = global_var;
        m.weights[l] = 1.0 / n;
        ++m.reseeds;
        continue;
      }
      auto& mu = m.means[l];
      auto& var = m.variances[l];
      std::fill(mu.begin(), mu.end(), 0.0);
      for (std::size_t i = 0; i < x.rows; ++i) axpy(resp(i, l), x.row(i), mu);
      for (double& v : mu) v /= mass;
      std::fill(var.begin(), var.end(), 0.0);
      for (std::size_t i = 0; i < x.rows; ++i) {
        const double r = resp(i, l);
        for (std::size_t j = 0; j < d; ++j) {
          const double diff = x(i, j) - mu[j];
          var[j] += r * diff * diff;
        }
      }
      for (double& v : var) v = std::max(v / mass, config.variance_floor);
      m.weights[l] = mass / n;
    }
    double wsum = 0.0;
    for (double w : m.weights) wsum += w;
    for (double& w : m.weights) w /= wsum;
  }
  return m;
}

std::int64_t gmm_free_parameters(int components, int dims) {
  return static_cast<std::int64_t>(components) * (2 * dims + 1) - 1;
}

double log_likelihood(const GmmModel& model, const RowMatrix& features) {
  const RowMatrix x = normalize_rows(model.normalizer, features);
  RowMatrix lj;
  kernels::gmm_log_joint_parallel(model, x, lj);
  const Vec lse = kernels::normalize_log_rows_parallel(lj);
  double ll = 0.0;
  for (double v : lse) ll += v;
  return ll;
}

double bic(const GmmModel& model, const RowMatrix& features) {
  const double p = static_cast<double>(gmm_free_parameters(model.components, model.dims));
  return p * std::log(static_cast<double>(features.rows)) - 2.0 * log_likelihood(model, features);
}

ClusterSearch select_cluster_count(const RowMatrix& features, int lo, int hi, const GmmConfig& config) {
  if (lo < 1 || hi < lo) {
    throw std::invalid_argument("empty cluster-count range [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
  ClusterSearch out;
  double best_bic = std::numeric_limits<double>::infinity();
  for (int L = lo; L <= hi; ++L) {
    GmmConfig c = config;
    c.seed = derive_seed(config.seed, static_cast<std::uint64_t>(L));
    GmmModel m = fit_gmm(features, L, c);
    const double value = bic(m, features);
    out.evaluated.push_back(L);
    out.bic_values.push_back(value);
    spdlog::debug("gmm L={} ll={:.4f} bic={:.4f} iters={}", L, m.log_likelihood, value, m.iterations);
    if (value < best_bic) {
      best_bic = value;
      out.best = L;
      out.model = std::move(m);
      out.model.bic_value = value;
    }
  }
  return out;
}

Vec posterior(const GmmModel& model, std::span<const double> feature) {
  const Vec x = model.normalizer.normalize(feature);
  Vec w(static_cast<std::size_t>(model.components));
  for (int l = 0; l < model.components; ++l) w[static_cast<std::size_t>(l)] = log_joint_row(model, x, l);
  const double lse = normalize_log_row(w);
  if (std::isfinite(lse)) return w;

  // Every density underflowed: hard-assign to the nearest mean (Mahalanobis).
  int best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (int l = 0; l < model.components; ++l) {
    double dist = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double diff = x[j] - model.means[static_cast<std::size_t>(l)][j];
      dist += diff * diff / model.variances[static_cast<std::size_t>(l)][j];
    }
    if (dist < best_dist) {
      best_dist = dist;
      best = l;
    }
  }
  std::fill(w.begin(), w.end(), 0.0);
  w[static_cast<std::size_t>(best)] = 1.0;
  return w;
}

int assign_relation(std::span<const double> weights) {
  if (weights.empty()) throw std::invalid_argument("empty weight distribution");
  return static_cast<int>(std::max_element(weights.begin(), weights.end()) - weights.begin());
}

// ---------------------------------------------------------------------------

nlohmann::json GmmModel::to_json() const {
  return nlohmann::json{
      {"format", "tprec-gmm"},
      {"version", 1},
      {"components", components},
      {"dims", dims},
      {"normalizer", {{"mean", normalizer.mean}, {"scale", normalizer.scale}}},
      {"weights", weights},
      {"means", means},
      {"variances", variances},
      {"seed", seed},
      {"rows", rows},
      {"log_likelihood", log_likelihood},
      {"iterations", iterations},
      {"reseeds", reseeds},
      {"bic", bic_value},
  };
}

GmmModel GmmModel::from_json(const nlohmann::json& doc) {
  if (doc.value("format", "") != "tprec-gmm") throw std::runtime_error("not a tprec-gmm document");
  if (doc.at("version").get<int>() != 1) throw std::runtime_error("unsupported tprec-gmm version");
  GmmModel m;
  doc.at("components").get_to(m.components);
  doc.at("dims").get_to(m.dims);
  doc.at("normalizer").at("mean").get_to(m.normalizer.mean);
  doc.at("normalizer").at("scale").get_to(m.normalizer.scale);
  doc.at("weights").get_to(m.weights);
  doc.at("means").get_to(m.means);
  doc.at("variances").get_to(m.variances);
  doc.at("seed").get_to(m.seed);
  doc.at("rows").get_to(m.rows);
  doc.at("log_likelihood").get_to(m.log_likelihood);
  doc.at("iterations").get_to(m.iterations);
  doc.at("reseeds").get_to(m.reseeds);
  m.bic_value = doc.value("bic", 0.0);
  return m;
}

}  // namespace tprec
