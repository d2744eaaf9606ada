#include "tprec/kg_embedding.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include <spdlog/spdlog.h>

#include "tprec/binary_io.hpp"

namespace tprec {

namespace {

constexpr char kEmbeddingMagic[] = "TPREMB01";
constexpr std::uint32_t kEmbeddingVersion = 1;
constexpr int kNegativeRetries = 32;

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

bool is_purchase(const Tckg& g, RelationId r) {
  const auto& cat = g.relations();
  return !r.inverse && cat.is_timed(r) && cat.timed_base(r) == TimedBase::Purchase;
}

// Dense gradient accumulator that remembers which rows were touched so a
// sparse batch never pays for a full sweep of the table.
class SparseGrad {
 public:
  SparseGrad(std::size_t entities, std::size_t relations, std::size_t dim)
      : dim_(dim), entity_(entities * dim, 0.0), relation_(relations * dim, 0.0), bias_(entities, 0.0),
        entity_touched_(entities, 0), relation_touched_(relations, 0), bias_touched_(entities, 0) {}

  void add_entity(std::uint32_t row, std::span<const double> g, double scale) {
    mark(entity_touched_, entity_rows_, row);
    axpy(scale, g, std::span<double>(entity_.data() + row * dim_, dim_));
  }
  void add_relation(std::uint32_t row, std::span<const double> g, double scale) {
    mark(relation_touched_, relation_rows_, row);
    axpy(scale, g, std::span<double>(relation_.data() + row * dim_, dim_));
  }
  void add_bias(std::uint32_t row, double g) {
    mark(bias_touched_, bias_rows_, row);
    bias_[row] += g;
  }

  double squared_norm() const {
    double s = 0.0;
    for (auto r : entity_rows_)
      for (std::size_t j = 0; j < dim_; ++j) s += entity_[r * dim_ + j] * entity_[r * dim_ + j];
    for (auto r : relation_rows_)
      for (std::size_t j = 0; j < dim_; ++j) s += relation_[r * dim_ + j] * relation_[r * dim_ + j];
    for (auto r : bias_rows_) s += bias_[r] * bias_[r];
    return s;
  }

  void clear() {
    for (auto r : entity_rows_) {
      std::fill_n(entity_.begin() + static_cast<std::ptrdiff_t>(r * dim_), dim_, 0.0);
      entity_touched_[r] = 0;
    }
    for (auto r : relation_rows_) {
      std::fill_n(relation_.begin() + static_cast<std::ptrdiff_t>(r * dim_), dim_, 0.0);
      relation_touched_[r] = 0;
    }
    for (auto r : bias_rows_) {
      bias_[r] = 0.0;
      bias_touched_[r] = 0;
    }
    entity_rows_.clear();
    relation_rows_.clear();
    bias_rows_.clear();
  }

  std::size_t dim_;
  std::vector<double> entity_, relation_, bias_;
  std::vector<char> entity_touched_, relation_touched_, bias_touched_;
  std::vector<std::uint32_t> entity_rows_, relation_rows_, bias_rows_;

 private:
  static void mark(std::vector<char>& flags, std::vector<std::uint32_t>& rows, std::uint32_t r) {
    if (!flags[r]) {
      flags[r] = 1;
      rows.push_back(r);
    }
  }
};

// Adam moments stored densely; only touched rows are updated (lazy Adam).
struct AdamMoments {
  std::vector<double> m, v;
  explicit AdamMoments(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

void adam_rows(std::vector<double>& params, const std::vector<double>& grad, AdamMoments& mom,
               const std::vector<std::uint32_t>& rows, std::size_t width, double lr, double scale, std::int64_t step) {
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
  for (auto r : rows) {
    for (std::size_t j = 0; j < width; ++j) {
      const std::size_t i = r * width + j;
      const double g = grad[i] * scale;
      mom.m[i] = kBeta1 * mom.m[i] + (1.0 - kBeta1) * g;
      mom.v[i] = kBeta2 * mom.v[i] + (1.0 - kBeta2) * g * g;
      params[i] -= lr * (mom.m[i] / c1) / (std::sqrt(mom.v[i] / c2) + kAdamEps);
    }
  }
}

void project_to_unit_ball(EmbeddingTable& emb) {
  for (std::uint32_t n = 0; n < emb.entity_count(); ++n) {
    auto e = emb.entity(n);
    const double norm = std::sqrt(dot(e, e));
    if (norm > 1.0)
      for (double& v : e) v /= norm;
  }
}

kernels::ExampleGrad example_grad(const EmbeddingTable& emb, const kernels::TrainingExample& ex) {
  kernels::ExampleGrad out;
  out.translational = pairwise_loss_grad(emb, ex.positive, ex.negative_tail);
  if (ex.with_bias_term) out.bias = bias_pair_loss_grad(emb, ex.positive, ex.negative_tail);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

EmbeddingTable::EmbeddingTable(int dim, std::uint32_t entities, std::uint32_t relations)
    : dim_(dim), entity_count_(entities), relation_count_(relations),
      entities_(static_cast<std::size_t>(entities) * static_cast<std::size_t>(dim), 0.0),
      relations_(static_cast<std::size_t>(relations) * static_cast<std::size_t>(dim), 0.0),
      biases_(entities, 0.0) {
  if (dim < 1) throw std::invalid_argument("embedding dimension must be >= 1");
}

std::span<const double> EmbeddingTable::entity(std::uint32_t node) const {
  if (node >= entity_count_) throw std::out_of_range("entity id out of range: " + std::to_string(node));
  return {entities_.data() + static_cast<std::size_t>(node) * static_cast<std::size_t>(dim_), static_cast<std::size_t>(dim_)};
}

std::span<double> EmbeddingTable::entity(std::uint32_t node) {
  if (node >= entity_count_) throw std::out_of_range("entity id out of range: " + std::to_string(node));
  return {entities_.data() + static_cast<std::size_t>(node) * static_cast<std::size_t>(dim_), static_cast<std::size_t>(dim_)};
}

std::span<const double> EmbeddingTable::forward_relation(std::uint32_t code) const {
  if (code >= relation_count_) throw std::out_of_range("relation id out of range: " + std::to_string(code));
  return {relations_.data() + static_cast<std::size_t>(code) * static_cast<std::size_t>(dim_), static_cast<std::size_t>(dim_)};
}

std::span<double> EmbeddingTable::forward_relation(std::uint32_t code) {
  if (code >= relation_count_) throw std::out_of_range("relation id out of range: " + std::to_string(code));
  return {relations_.data() + static_cast<std::size_t>(code) * static_cast<std::size_t>(dim_), static_cast<std::size_t>(dim_)};
}

double EmbeddingTable::bias(std::uint32_t node) const {
  if (node >= entity_count_) throw std::out_of_range("entity id out of range: " + std::to_string(node));
  return biases_[node];
}

double& EmbeddingTable::bias(std::uint32_t node) {
  if (node >= entity_count_) throw std::out_of_range("entity id out of range: " + std::to_string(node));
  return biases_[node];
}

Vec EmbeddingTable::relation(RelationId r) const {
  Vec out(static_cast<std::size_t>(dim_), 0.0);
  accumulate_relation(r, 1.0, out);
  return out;
}

void EmbeddingTable::accumulate_relation(RelationId r, double scale, std::span<double> out) const {
  axpy(r.inverse ? -scale : scale, forward_relation(r.forward), out);
}

bool EmbeddingTable::all_finite() const {
  auto finite = [](const std::vector<double>& v) { return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); }); };
  return finite(entities_) && finite(relations_) && finite(biases_);
}

void EmbeddingTable::save(const std::filesystem::path& path) const {
  io::BinaryWriter w(path, std::string_view(kEmbeddingMagic, 8), kEmbeddingVersion);
  w.put<std::int32_t>(dim_);
  w.put<std::uint32_t>(entity_count_);
  w.put<std::uint32_t>(relation_count_);
  w.put<std::uint64_t>(seed);
  w.put<std::int32_t>(epochs);
  w.put_array(std::span<const double>(entities_));
  w.put_array(std::span<const double>(relations_));
  w.put_array(std::span<const double>(biases_));
  w.finish();
}

EmbeddingTable EmbeddingTable::load(const std::filesystem::path& path) {
  io::BinaryReader r(path, std::string_view(kEmbeddingMagic, 8));
  if (r.version() != kEmbeddingVersion) throw std::runtime_error("unsupported embedding version in " + path.string());
  const auto dim = r.get<std::int32_t>();
  const auto ents = r.get<std::uint32_t>();
  const auto rels = r.get<std::uint32_t>();
  EmbeddingTable t(dim, ents, rels);
  t.seed = r.get<std::uint64_t>();
  t.epochs = r.get<std::int32_t>();
  t.entities_ = r.get_array<double>();
  t.relations_ = r.get_array<double>();
  t.biases_ = r.get_array<double>();
  if (t.entities_.size() != static_cast<std::size_t>(ents) * static_cast<std::size_t>(dim) ||
      t.relations_.size() != static_cast<std::size_t>(rels) * static_cast<std::size_t>(dim) || t.biases_.size() != ents) {
    throw std::runtime_error("corrupt embedding file " + path.string());
  }
  return t;
}

// ---------------------------------------------------------------------------

double neg_log_sigmoid(double x) {
  // -ln s(x) = ln(1 + e^{-x})
  if (x >= 0.0) return std::log1p(std::exp(-x));
  return -x + std::log1p(std::exp(x));
}

double score_triple(const EmbeddingTable& emb, std::uint32_t head, RelationId r, std::uint32_t tail) {
  const auto h = emb.entity(head);
  const auto t = emb.entity(tail);
  const auto rel = emb.forward_relation(r.forward);
  const double sign = r.inverse ? -1.0 : 1.0;
  double s = 0.0;
  for (std::size_t j = 0; j < h.size(); ++j) {
    const double diff = h[j] + sign * rel[j] - t[j];
    s += diff * diff;
  }
  return s;
}

double interaction_score(const EmbeddingTable& emb, std::uint32_t user, std::span<const double> relation, std::uint32_t item) {
  const auto u = emb.entity(user);
  const auto v = emb.entity(item);
  double s = emb.bias(item);
  for (std::size_t j = 0; j < u.size(); ++j) s += (u[j] + relation[j]) * v[j];
  return s;
}

PairwiseGrad pairwise_loss_grad(const EmbeddingTable& emb, const NodeTriple& pos, std::uint32_t negative_tail) {
  const std::size_t d = static_cast<std::size_t>(emb.dim());
  const auto h = emb.entity(pos.head);
  const auto t = emb.entity(pos.tail);
  const auto tn = emb.entity(negative_tail);
  const auto rel = emb.forward_relation(pos.relation.forward);
  const double sign = pos.relation.inverse ? -1.0 : 1.0;

  Vec p(d), q(d);
  double g_pos = 0.0, g_neg = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    const double base = h[j] + sign * rel[j];
    p[j] = base - t[j];
    q[j] = base - tn[j];
    g_pos += p[j] * p[j];
    g_neg += q[j] * q[j];
  }
  const double margin = g_neg - g_pos;
  PairwiseGrad out;
  out.loss = neg_log_sigmoid(margin);
  const double c = -sigmoid(-margin);  // d loss / d margin
  out.head.resize(d);
  out.relation.resize(d);
  out.tail.resize(d);
  out.negative.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    const double dh = c * 2.0 * (q[j] - p[j]);
    out.head[j] = dh;
    out.relation[j] = sign * dh;
    out.tail[j] = c * 2.0 * p[j];
    out.negative[j] = -c * 2.0 * q[j];
  }
  return out;
}

BiasPairGrad bias_pair_loss_grad(const EmbeddingTable& emb, const NodeTriple& pos, std::uint32_t negative_item) {
  const std::size_t d = static_cast<std::size_t>(emb.dim());
  const auto u = emb.entity(pos.head);
  const auto v = emb.entity(pos.tail);
  const auto vn = emb.entity(negative_item);
  const auto rel = emb.forward_relation(pos.relation.forward);
  const double sign = pos.relation.inverse ? -1.0 : 1.0;

  double s_pos = emb.bias(pos.tail), s_neg = emb.bias(negative_item);
  for (std::size_t j = 0; j < d; ++j) {
    const double q = u[j] + sign * rel[j];
    s_pos += q * v[j];
    s_neg += q * vn[j];
  }
  const double margin = s_pos - s_neg;
  BiasPairGrad out;
  out.loss = neg_log_sigmoid(margin);
  const double c = -sigmoid(-margin);
  out.user.resize(d);
  out.relation.resize(d);
  out.item.resize(d);
  out.negative.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    const double q = u[j] + sign * rel[j];
    out.user[j] = c * (v[j] - vn[j]);
    out.relation[j] = sign * out.user[j];
    out.item[j] = c * q;
    out.negative[j] = -c * q;
  }
  out.item_bias = c;
  out.negative_bias = -c;
  return out;
}

NodeTriple sample_negative(const Tckg& g, const NodeTriple& positive, Rng& rng) {
  const EntityType tail_type = g.relations().tail_type(positive.relation);
  const std::uint32_t first = g.node({tail_type, 0}) ;
  const std::uint32_t n = g.count(tail_type);
  if (n < 2) {
    throw std::invalid_argument("no compatible negative tail for relation " + g.relations().name(positive.relation));
  }
  std::uniform_int_distribution<std::uint32_t> pick(0, n - 1);
  NodeTriple neg = positive;
  for (int attempt = 0; attempt < kNegativeRetries; ++attempt) {
    neg.tail = first + pick(rng);
    if (neg.tail != positive.tail && !g.has_edge(positive.head, positive.relation, neg.tail)) return neg;
  }
  // Dense neighborhoods: enumerate the remaining non-edges.
  std::vector<std::uint32_t> free_tails;
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint32_t cand = first + i;
    if (cand != positive.tail && !g.has_edge(positive.head, positive.relation, cand)) free_tails.push_back(cand);
  }
  if (!free_tails.empty()) {
    neg.tail = free_tails[std::uniform_int_distribution<std::size_t>(0, free_tails.size() - 1)(rng)];
    return neg;
  }
  do {
    neg.tail = first + pick(rng);
  } while (neg.tail == positive.tail);
  return neg;
}

std::vector<NodeTriple> forward_triples(const Tckg& g) {
  std::vector<NodeTriple> out;
  for (std::uint32_t n = 0; n < g.node_count(); ++n)
    for (const auto& e : g.neighbors(n))
      if (!e.relation().inverse) out.push_back({n, e.relation(), e.tail});
  return out;
}

EmbeddingTable init_embeddings(const Tckg& g, int dim, std::uint64_t seed) {
  EmbeddingTable t(dim, g.node_count(), g.relations().forward_count());
  Rng rng(seed);
  const double bound = 6.0 / std::sqrt(static_cast<double>(dim));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (double& v : t.entity_data()) v = u(rng);
  for (double& v : t.relation_data()) v = u(rng);
  project_to_unit_ball(t);
  t.seed = seed;
  return t;
}

namespace kernels {

std::vector<ExampleGrad> embedding_grads_serial(const EmbeddingTable& emb, std::span<const TrainingExample> batch) {
  std::vector<ExampleGrad> out(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) out[i] = example_grad(emb, batch[i]);
  return out;
}

std::vector<ExampleGrad> embedding_grads_parallel(const EmbeddingTable& emb, std::span<const TrainingExample> batch) {
  std::vector<ExampleGrad> out(batch.size());
  const auto n = static_cast<std::int64_t>(batch.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = example_grad(emb, batch[static_cast<std::size_t>(i)]);
  return out;
}

}  // namespace kernels

EmbeddingTable train_embeddings(const Tckg& g, const EmbeddingTrainConfig& cfg, EmbeddingTrainLog* log) {
  if (cfg.dim < 1 || cfg.batch_size < 1 || cfg.epochs < 0 || cfg.negatives_per_positive < 1 || !(cfg.learning_rate > 0.0)) {
    throw std::invalid_argument("invalid embedding training config");
  }
  EmbeddingTable emb = init_embeddings(g, cfg.dim, cfg.seed);
  const auto positives = forward_triples(g);
  if (positives.empty()) {
    spdlog::warn("graph has no triples; embeddings stay at initialization");
    return emb;
  }

  const std::size_t d = static_cast<std::size_t>(cfg.dim);
  SparseGrad grad(emb.entity_count(), emb.relation_count(), d);
  AdamMoments ent_m(emb.entity_data().size()), rel_m(emb.relation_data().size()), bias_m(emb.bias_data().size());
  Rng rng(derive_seed(cfg.seed, 0xE3B));
  std::vector<std::size_t> order(positives.size());
  std::iota(order.begin(), order.end(), 0);
  std::int64_t step = 0;
  EmbeddingTrainLog local;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0, bias_loss_sum = 0.0;
    std::size_t loss_n = 0, bias_n = 0;
    std::vector<kernels::TrainingExample> batch;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      batch.clear();
      for (std::size_t k = start; k < stop; ++k) {
        const NodeTriple& pos = positives[order[k]];
        for (int neg = 0; neg < cfg.negatives_per_positive; ++neg) {
          kernels::TrainingExample ex;
          ex.positive = pos;
          ex.negative_tail = sample_negative(g, pos, rng).tail;
          ex.with_bias_term = cfg.bias_objective && is_purchase(g, pos.relation);
          batch.push_back(ex);
        }
      }
      const auto grads = kernels::embedding_grads_parallel(emb, batch);

      grad.clear();
      const double inv = 1.0 / static_cast<double>(batch.size());
      double batch_loss = 0.0;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& ex = batch[i];
        const auto& tg = grads[i].translational;
        batch_loss += tg.loss;
        grad.add_entity(ex.positive.head, tg.head, inv);
        grad.add_relation(ex.positive.relation.forward, tg.relation, inv);
        grad.add_entity(ex.positive.tail, tg.tail, inv);
        grad.add_entity(ex.negative_tail, tg.negative, inv);
        if (ex.with_bias_term) {
          const auto& bg = grads[i].bias;
          batch_loss += bg.loss;
          bias_loss_sum += bg.loss;
          ++bias_n;
          grad.add_entity(ex.positive.head, bg.user, inv);
          grad.add_relation(ex.positive.relation.forward, bg.relation, inv);
          grad.add_entity(ex.positive.tail, bg.item, inv);
          grad.add_entity(ex.negative_tail, bg.negative, inv);
          grad.add_bias(ex.positive.tail, bg.item_bias * inv);
          grad.add_bias(ex.negative_tail, bg.negative_bias * inv);
        }
        loss_sum += tg.loss;
        ++loss_n;
      }
      if (!std::isfinite(batch_loss)) {
        throw std::runtime_error("non-finite embedding loss at epoch " + std::to_string(epoch));
      }
      double scale = 1.0;
      const double norm = std::sqrt(grad.squared_norm());
      if (cfg.max_grad_norm > 0.0 && norm > cfg.max_grad_norm) {
        scale = cfg.max_grad_norm / norm;
        ++local.clipped_batches;
      }
      ++step;
      adam_rows(emb.entity_data(), grad.entity_, ent_m, grad.entity_rows_, d, cfg.learning_rate, scale, step);
      adam_rows(emb.relation_data(), grad.relation_, rel_m, grad.relation_rows_, d, cfg.learning_rate, scale, step);
      adam_rows(emb.bias_data(), grad.bias_, bias_m, grad.bias_rows_, 1, cfg.learning_rate, scale, step);
    }
    project_to_unit_ball(emb);
    local.epoch_loss.push_back(loss_sum / static_cast<double>(loss_n));
    local.epoch_bias_loss.push_back(bias_n ? bias_loss_sum / static_cast<double>(bias_n) : 0.0);
    spdlog::debug("embedding epoch {} loss {:.6f} bias-loss {:.6f}", epoch, local.epoch_loss.back(), local.epoch_bias_loss.back());
  }
  emb.epochs = cfg.epochs;
  if (!emb.all_finite()) throw std::runtime_error("embedding training produced non-finite values");
  if (log) *log = std::move(local);
  return emb;
}

}  // namespace tprec
