#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "tprec/common.hpp"
#include "tprec/kg_embedding.hpp"
#include "tprec/policy_net.hpp"
#include "tprec/tckg.hpp"

namespace tprec {

struct ReasonerConfig {
  int max_actions = 250;  // epsilon
  int path_length = 3;    // K
  int history = 1;        // k'

  int action_slots() const { return max_actions + 1; }
  int sequence_length() const { return 2 + 2 * history; }
};

/// One step of a walk. A self-loop keeps the agent in place and carries no
/// relation.
struct Hop {
  std::uint32_t from = 0;
  RelationId relation;
  std::uint32_t to = 0;
  bool self_loop = false;
};

struct State {
  std::uint32_t user = 0;  // node id
  std::vector<Hop> history;  // last k' hops
  std::vector<Hop> path;     // every hop so far
  std::uint32_t current = 0;
  int step = 0;
};

struct Action {
  bool self_loop = true;
  RelationId relation;
  std::uint32_t next = 0;
  double prune_score = 0.0;
};

/// Slot 0 is the self-loop; slots 1.. hold the kept graph actions in
/// descending pruning score.
struct ActionSpace {
  std::vector<Action> actions;
  std::vector<char> mask;  // width epsilon + 1

  std::size_t size() const { return actions.size(); }
};

State initial_state(std::uint32_t user_node);

ActionSpace prune_actions(const Tckg& g, const EmbeddingTable& emb, const State& s, const ReasonerConfig& cfg);

/// Throws std::logic_error when the episode is already at K steps.
State transition(const State& s, const Action& a, const ReasonerConfig& cfg);

/// Encoder input columns: e_u, (e_{k-1}, r_k) for each of the last k' hops
/// (zero-padded at the front), e_k.
Eigen::MatrixXd state_inputs(const EmbeddingTable& emb, const State& s, const ReasonerConfig& cfg);

struct PersonalizedRelation {
  Vec weights;  // over the L purchase clusters
  Vec vector;   // d
};

/// Cluster frequencies over the user's training interactions, mixed into one
/// relation vector. A user with no history gets uniform weights.
PersonalizedRelation personalized_relation(const Tckg& g, const EmbeddingTable& emb, std::uint32_t user_index);

/// Mixes purchase-relation vectors with the given weights.
PersonalizedRelation mix_purchase_relations(const Tckg& g, const EmbeddingTable& emb, std::span<const double> weights);

/// (e_u + r) . e_v + b_v; throws if item_node is not an item.
double reward_score(const Tckg& g, const EmbeddingTable& emb, std::uint32_t user_node, std::uint32_t item_node,
                    const PersonalizedRelation& pr);

enum class RewardMode {
  Personalized,   // history-weighted cluster mixture
  AveragePooled,  // uniform mixture over clusters (ablation)
};

/// Per-user relation and max-over-items normalizer for the terminal reward.
/// Built once per training run; embeddings are frozen.
class RewardModel {
 public:
  RewardModel(const Tckg& g, const EmbeddingTable& emb, RewardMode mode);

  const PersonalizedRelation& relation(std::uint32_t user_index) const { return relations_.at(user_index); }
  double normalizer(std::uint32_t user_index) const { return normalizers_.at(user_index); }
  std::size_t degenerate_users() const { return degenerate_; }

 private:
  std::vector<PersonalizedRelation> relations_;
  std::vector<double> normalizers_;
  std::size_t degenerate_ = 0;
};

/// R_K = clamp(g_R(e_K|u), 0) / max_v g_R(v|u), limited to [0, 1]. Zero for
/// non-item terminals and for users whose normalizer is not positive.
double terminal_reward(const Tckg& g, const EmbeddingTable& emb, const State& terminal, const PersonalizedRelation& pr,
                       double normalizer, const ReasonerConfig& cfg);

/// Read-only bundle shared by rollouts and beam search.
struct ReasonerContext {
  const Tckg& graph;
  const EmbeddingTable& embeddings;
  const RewardModel& rewards;
  ReasonerConfig config;
};

struct StepRecord {
  State state;
  ActionSpace space;
  EncoderCache cache;
  Eigen::VectorXd probs;
  int slot = 0;
  double log_prob = 0.0;
  double value = 0.0;
};

struct Trajectory {
  std::vector<StepRecord> steps;
  State terminal;
  double reward = 0.0;
};

Trajectory rollout(const ReasonerContext& ctx, const PolicyParams& params, std::uint32_t user_index, Rng& rng, bool train);

/// G_k = gamma^(K-1-k) * R_K for k in [0, K).
std::vector<double> discounted_returns(double terminal_reward, int steps, double gamma);

struct PolicyTrainConfig {
  double gamma = 0.99;
  AdamConfig adam{};
  int batch_size = 32;
  int epochs = 50;
  double critic_weight = 1.0;
  std::uint64_t seed = 0;
};

struct PolicyTrainLog {
  std::vector<double> epoch_reward;
  std::vector<double> epoch_actor_loss;
  std::vector<double> epoch_critic_loss;
  std::int64_t skipped_batches = 0;
};

/// Accumulates the REINFORCE-with-baseline gradient of one trajectory:
/// actor loss -log pi(a_k|s_k) * (G_k - c(s_k)) with the advantage held
/// constant, critic loss critic_weight * (G_k - c(s_k))^2.
void trajectory_gradient(const PolicyParams& params, const Trajectory& t, double gamma, double critic_weight,
                         PolicyParams& grads, double* actor_loss = nullptr, double* critic_loss = nullptr);

/// Trains in place. `state` carries Adam moments across calls (resumable).
void train_policy(const ReasonerContext& ctx, std::span<const std::uint32_t> users, PolicyParams& params, AdamState& state,
                  const PolicyTrainConfig& cfg, PolicyTrainLog* log = nullptr, int first_epoch = 0);

struct PathResult {
  std::uint32_t user = 0;     // node id
  std::vector<Hop> hops;      // graph edges only (self-loops dropped)
  double score = 0.0;         // sum of log action probabilities
  std::uint32_t terminal = 0; // node id
  bool valid = false;         // terminal is an item
};

/// Level-wise beam over the actor's probabilities. Output is sorted by score
/// (descending); among valid paths only the best one per terminal item is
/// kept.
std::vector<PathResult> beam_search(const ReasonerContext& ctx, const PolicyParams& params, std::uint32_t user_index,
                                    std::span<const int> sizes);

std::size_t count_valid(std::span<const PathResult> paths);

/// Users whose valid-path count is below threshold.
std::size_t invalid_user_count(std::span<const std::vector<PathResult>> results, std::size_t threshold = 10);

namespace kernels {

std::vector<std::vector<PathResult>> beam_search_serial(const ReasonerContext& ctx, const PolicyParams& params,
                                                        std::span<const std::uint32_t> users, std::span<const int> sizes);
std::vector<std::vector<PathResult>> beam_search_parallel(const ReasonerContext& ctx, const PolicyParams& params,
                                                          std::span<const std::uint32_t> users, std::span<const int> sizes);

/// max over items of (e_u + r_u) . e_v + b_v for every user.
std::vector<double> reward_normalizers_serial(const Tckg& g, const EmbeddingTable& emb,
                                              std::span<const PersonalizedRelation> relations);
std::vector<double> reward_normalizers_parallel(const Tckg& g, const EmbeddingTable& emb,
                                                std::span<const PersonalizedRelation> relations);

}  // namespace kernels

}  // namespace tprec
