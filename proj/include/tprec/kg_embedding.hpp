#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "tprec/common.hpp"
#include "tprec/tckg.hpp"

namespace tprec {

/// Entity and relation vectors plus entity biases. Only forward relations
/// are stored; an inverse relation's vector is the negated forward vector.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(int dim, std::uint32_t entities, std::uint32_t relations);

  int dim() const { return dim_; }
  std::uint32_t entity_count() const { return entity_count_; }
  std::uint32_t relation_count() const { return relation_count_; }

  std::span<const double> entity(std::uint32_t node) const;
  std::span<double> entity(std::uint32_t node);
  std::span<const double> forward_relation(std::uint32_t code) const;
  std::span<double> forward_relation(std::uint32_t code);
  double bias(std::uint32_t node) const;
  double& bias(std::uint32_t node);

  /// Relation vector honoring direction.
  Vec relation(RelationId r) const;
  /// out += sign(r) * scale * forward vector.
  void accumulate_relation(RelationId r, double scale, std::span<double> out) const;

  std::vector<double>& entity_data() { return entities_; }
  std::vector<double>& relation_data() { return relations_; }
  std::vector<double>& bias_data() { return biases_; }
  const std::vector<double>& entity_data() const { return entities_; }
  const std::vector<double>& relation_data() const { return relations_; }
  const std::vector<double>& bias_data() const { return biases_; }

  bool all_finite() const;

  // Provenance written into the header.
  std::uint64_t seed = 0;
  std::int32_t epochs = 0;

  void save(const std::filesystem::path& path) const;
  static EmbeddingTable load(const std::filesystem::path& path);

 private:
  int dim_ = 0;
  std::uint32_t entity_count_ = 0;
  std::uint32_t relation_count_ = 0;
  std::vector<double> entities_;
  std::vector<double> relations_;
  std::vector<double> biases_;
};

struct NodeTriple {
  std::uint32_t head = 0;
  RelationId relation;
  std::uint32_t tail = 0;
};

struct EmbeddingTrainConfig {
  int dim = 100;
  double learning_rate = 0.005;
  int batch_size = 64;
  int epochs = 30;
  int negatives_per_positive = 1;
  std::uint64_t seed = 0;
  double max_grad_norm = 5.0;
  /// Pairwise inner-product term on purchase triples that trains entity
  /// biases (see README, "entity biases").
  bool bias_objective = true;
};

struct EmbeddingTrainLog {
  std::vector<double> epoch_loss;      // mean translational pairwise loss
  std::vector<double> epoch_bias_loss; // mean bias-objective loss (0 when off)
  std::uint64_t clipped_batches = 0;
};

/// ||e_h + r - e_t||^2.
double score_triple(const EmbeddingTable& emb, std::uint32_t head, RelationId r, std::uint32_t tail);

/// (e_u + r) . e_v + b_v
double interaction_score(const EmbeddingTable& emb, std::uint32_t user, std::span<const double> relation, std::uint32_t item);

/// Numerically stable -ln(sigmoid(x)).
double neg_log_sigmoid(double x);

/// Replaces the tail with a schema-compatible entity that does not form an
/// existing triple. Falls back to any compatible entity != tail when every
/// alternative is an existing triple; throws when no compatible entity other
/// than the tail exists.
NodeTriple sample_negative(const Tckg& g, const NodeTriple& positive, Rng& rng);

/// All forward triples of the graph in adjacency order.
std::vector<NodeTriple> forward_triples(const Tckg& g);

EmbeddingTable init_embeddings(const Tckg& g, int dim, std::uint64_t seed);

EmbeddingTable train_embeddings(const Tckg& g, const EmbeddingTrainConfig& cfg, EmbeddingTrainLog* log = nullptr);

/// Gradient of one translational pairwise term -ln s(g(h,t') - g(h,t)).
struct PairwiseGrad {
  double loss = 0.0;
  Vec head, relation, tail, negative;  // d-dim each; relation is w.r.t. the forward vector
};
PairwiseGrad pairwise_loss_grad(const EmbeddingTable& emb, const NodeTriple& pos, std::uint32_t negative_tail);

/// Gradient of the bias objective -ln s(s(u,v) - s(u,v')) on a purchase triple.
struct BiasPairGrad {
  double loss = 0.0;
  Vec user, relation, item, negative;
  double item_bias = 0.0;
  double negative_bias = 0.0;
};
BiasPairGrad bias_pair_loss_grad(const EmbeddingTable& emb, const NodeTriple& pos, std::uint32_t negative_item);

namespace kernels {

struct TrainingExample {
  NodeTriple positive;
  std::uint32_t negative_tail = 0;
  bool with_bias_term = false;
};

struct ExampleGrad {
  PairwiseGrad translational;
  BiasPairGrad bias;  // empty vectors when the example has no bias term
};

std::vector<ExampleGrad> embedding_grads_serial(const EmbeddingTable& emb, std::span<const TrainingExample> batch);
std::vector<ExampleGrad> embedding_grads_parallel(const EmbeddingTable& emb, std::span<const TrainingExample> batch);

}  // namespace kernels

}  // namespace tprec
