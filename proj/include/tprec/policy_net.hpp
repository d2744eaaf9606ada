#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "tprec/common.hpp"

namespace tprec {

enum class EncoderKind : std::int32_t {
  BiLstm = 0,
  FeedForward = 1,  // ablation: concatenated inputs through one dense layer
};

struct PolicyShape {
  int input_dim = 100;   // d
  int hidden = 256;      // recurrent units per direction
  int state_dim = 256;   // width of x_k
  int actions = 251;     // pruned action space + self-loop slot
  int sequence = 4;      // e_u, k' (entity, relation) pairs, e_k
  EncoderKind encoder = EncoderKind::BiLstm;

  friend bool operator==(const PolicyShape&, const PolicyShape&) = default;
};

struct LstmWeights {
  Eigen::MatrixXd input;      // 4H x D, gate order i, f, g, o
  Eigen::MatrixXd recurrent;  // 4H x H
  Eigen::VectorXd bias;       // 4H
};

/// Actor-critic parameters. Gradients use the same type.
struct PolicyParams {
  PolicyShape shape;
  LstmWeights forward;
  LstmWeights backward;
  Eigen::MatrixXd dense;    // FeedForward only: (sequence*D) x state_dim
  Eigen::MatrixXd project;  // W1: 2H x state_dim
  Eigen::MatrixXd actor;    // Wa: state_dim x actions
  Eigen::VectorXd critic;   // Wc: state_dim
  double dropout = 0.5;

  static PolicyParams zeros(const PolicyShape& shape);
  static PolicyParams initialize(const PolicyShape& shape, double dropout, std::uint64_t seed);

  /// Every parameter block as a flat view, in a fixed order.
  std::vector<std::span<double>> blocks();
  std::vector<std::span<const double>> blocks() const;
  std::size_t parameter_count() const;
  void set_zero();
};

/// Forward activations kept for the backward pass.
struct EncoderCache {
  Eigen::MatrixXd inputs;  // D x T
  struct Direction {
    Eigen::MatrixXd gates;   // 4H x T, post-activation
    Eigen::MatrixXd cell;    // H x T
    Eigen::MatrixXd hidden;  // H x T
  } fwd, bwd;
  Eigen::VectorXd concat;     // 2H (or sequence*D for FeedForward)
  Eigen::VectorXd activated;  // sigmoid output before dropout
  Eigen::VectorXd keep;       // dropout multiplier (0 or 1/(1-p)); ones in eval
  Eigen::VectorXd state;      // x_k
};

/// Encodes a D x T input sequence. Dropout is applied only when train is set
/// (inverted dropout, so eval needs no rescaling).
Eigen::VectorXd encode_state(const PolicyParams& p, const Eigen::MatrixXd& inputs, bool train, Rng& rng,
                             EncoderCache* cache = nullptr);

/// Masked softmax over x * Wa. Masked slots get probability exactly 0.
/// Throws when no slot is valid.
Eigen::VectorXd actor_probs(const PolicyParams& p, const Eigen::VectorXd& state, std::span<const char> mask);

double critic_value(const PolicyParams& p, const Eigen::VectorXd& state);

/// Backpropagates d(loss)/d(logits) and d(loss)/d(value) through the heads
/// and the encoder, accumulating into grads.
void backpropagate(const PolicyParams& p, const EncoderCache& cache, const Eigen::VectorXd& dlogits, double dvalue,
                   PolicyParams& grads);

struct AdamState {
  PolicyParams first;
  PolicyParams second;
  std::int64_t step = 0;
  std::int64_t skipped = 0;

  static AdamState for_params(const PolicyParams& p);
};

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam update. Returns false (and counts a skip) if any gradient is
/// non-finite; parameters are then left untouched.
bool apply_gradients(PolicyParams& params, const PolicyParams& grads, AdamState& state, const AdamConfig& cfg);

struct PolicyCheckpoint {
  PolicyParams params;
  AdamState optimizer;
  std::uint64_t seed = 0;
  std::int64_t epoch = 0;

  void save(const std::filesystem::path& path) const;
  static PolicyCheckpoint load(const std::filesystem::path& path);
};

}  // namespace tprec
