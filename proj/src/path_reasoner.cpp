#include "tprec/path_reasoner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include <spdlog/spdlog.h>

namespace tprec {

namespace {

constexpr int kGradientChunks = 8;

void require_item(const Tckg& g, std::uint32_t node) {
  if (!g.is_type(node, EntityType::Item)) {
    throw std::invalid_argument("entity " + std::to_string(node) + " is not an item");
  }
}

std::vector<double> user_relation_normalizers(const Tckg& g, const EmbeddingTable& emb,
                                              std::span<const PersonalizedRelation> relations, bool parallel) {
  const std::uint32_t items = g.count(EntityType::Item);
  const std::uint32_t first_item = items ? g.node({EntityType::Item, 0}) : 0;
  std::vector<double> out(relations.size(), 0.0);
  auto one = [&](std::size_t u) {
    const std::uint32_t user_node = g.node({EntityType::User, static_cast<std::uint32_t>(u)});
    double best = -std::numeric_limits<double>::infinity();
    for (std::uint32_t i = 0; i < items; ++i)
      best = std::max(best, interaction_score(emb, user_node, relations[u].vector, first_item + i));
    out[u] = best;
  };
  const auto n = static_cast<std::int64_t>(relations.size());
  if (parallel) {
#pragma omp parallel for schedule(dynamic, 16)
    for (std::int64_t u = 0; u < n; ++u) one(static_cast<std::size_t>(u));
  } else {
    for (std::int64_t u = 0; u < n; ++u) one(static_cast<std::size_t>(u));
  }
  return out;
}

struct Beam {
  State state;
  double score = 0.0;
};

}  // namespace

// ---------------------------------------------------------------------------

State initial_state(std::uint32_t user_node) {
  State s;
  s.user = user_node;
  s.current = user_node;
  s.step = 0;
  return s;
}

ActionSpace prune_actions(const Tckg& g, const EmbeddingTable& emb, const State& s, const ReasonerConfig& cfg) {
  const std::size_t d = static_cast<std::size_t>(emb.dim());
  Vec query(emb.entity(s.user).begin(), emb.entity(s.user).end());
  for (const Hop& h : s.path)
    if (!h.self_loop) emb.accumulate_relation(h.relation, 1.0, query);

  const Hop* last = (!s.path.empty() && !s.path.back().self_loop) ? &s.path.back() : nullptr;
  const auto adj = g.neighbors(s.current);

  struct Candidate {
    double score;
    std::size_t order;
  };
  std::vector<Candidate> cands;
  cands.reserve(adj.size());
  Vec q(d);
  for (std::size_t i = 0; i < adj.size(); ++i) {
    const Edge& e = adj[i];
    const RelationId r = e.relation();
    if (last && e.tail == last->from && r == last->relation.inverted()) continue;
    std::copy(query.begin(), query.end(), q.begin());
    emb.accumulate_relation(r, 1.0, q);
    cands.push_back({dot(q, emb.entity(e.tail)) + emb.bias(e.tail), i});
  }
  auto better = [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.order < b.order;
  };
  const std::size_t keep = std::min(cands.size(), static_cast<std::size_t>(cfg.max_actions));
  std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(), better);

  ActionSpace space;
  space.mask.assign(static_cast<std::size_t>(cfg.action_slots()), 0);
  space.actions.reserve(keep + 1);
  space.actions.push_back(Action{});  // slot 0: stay
  space.mask[0] = 1;
  for (std::size_t k = 0; k < keep; ++k) {
    const Edge& e = adj[cands[k].order];
    space.actions.push_back(Action{false, e.relation(), e.tail, cands[k].score});
    space.mask[k + 1] = 1;
  }
  return space;
}

State transition(const State& s, const Action& a, const ReasonerConfig& cfg) {
  if (s.step >= cfg.path_length) {
    throw std::logic_error("transition past the final step (" + std::to_string(cfg.path_length) + ")");
  }
  State n = s;
  Hop h;
  h.from = s.current;
  h.self_loop = a.self_loop;
  h.relation = a.relation;
  h.to = a.self_loop ? s.current : a.next;
  n.path.push_back(h);
  n.history.push_back(h);
  while (n.history.size() > static_cast<std::size_t>(cfg.history)) n.history.erase(n.history.begin());
  n.current = h.to;
  n.step = s.step + 1;
  return n;
}

Eigen::MatrixXd state_inputs(const EmbeddingTable& emb, const State& s, const ReasonerConfig& cfg) {
  const int d = emb.dim();
  Eigen::MatrixXd in = Eigen::MatrixXd::Zero(d, cfg.sequence_length());
  auto put = [&](int col, std::span<const double> v) {
    for (int j = 0; j < d; ++j) in(j, col) = v[static_cast<std::size_t>(j)];
  };
  put(0, emb.entity(s.user));
  const int pad = cfg.history - static_cast<int>(s.history.size());
  for (std::size_t k = 0; k < s.history.size(); ++k) {
    const Hop& h = s.history[k];
    const int col = 1 + 2 * (pad + static_cast<int>(k));
    put(col, emb.entity(h.from));
    if (!h.self_loop) put(col + 1, emb.relation(h.relation));
  }
  put(cfg.sequence_length() - 1, emb.entity(s.current));
  return in;
}

// ---------------------------------------------------------------------------

PersonalizedRelation mix_purchase_relations(const Tckg& g, const EmbeddingTable& emb, std::span<const double> weights) {
  if (weights.size() != static_cast<std::size_t>(g.clusters())) throw std::invalid_argument("weight vector length != L");
  PersonalizedRelation pr;
  pr.weights.assign(weights.begin(), weights.end());
  pr.vector.assign(static_cast<std::size_t>(emb.dim()), 0.0);
  for (int l = 0; l < g.clusters(); ++l)
    emb.accumulate_relation(g.relations().purchase(l), weights[static_cast<std::size_t>(l)], pr.vector);
  return pr;
}

PersonalizedRelation personalized_relation(const Tckg& g, const EmbeddingTable& emb, std::uint32_t user_index) {
  const auto& hist = g.history(user_index);
  const auto L = static_cast<std::size_t>(g.clusters());
  Vec w(L, 0.0);
  if (hist.empty()) {
    spdlog::warn("user {} has no training interactions; using uniform cluster weights", user_index);
    std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(L));
  } else {
    for (const auto& h : hist) w[static_cast<std::size_t>(h.cluster)] += 1.0;
    for (double& v : w) v /= static_cast<double>(hist.size());
  }
  return mix_purchase_relations(g, emb, w);
}

double reward_score(const Tckg& g, const EmbeddingTable& emb, std::uint32_t user_node, std::uint32_t item_node,
                    const PersonalizedRelation& pr) {
  require_item(g, item_node);
  return interaction_score(emb, user_node, pr.vector, item_node);
}

RewardModel::RewardModel(const Tckg& g, const EmbeddingTable& emb, RewardMode mode) {
  const std::uint32_t users = g.count(EntityType::User);
  relations_.reserve(users);
  const Vec uniform(static_cast<std::size_t>(g.clusters()), 1.0 / static_cast<double>(g.clusters()));
  const PersonalizedRelation pooled = mix_purchase_relations(g, emb, uniform);
  for (std::uint32_t u = 0; u < users; ++u)
    relations_.push_back(mode == RewardMode::Personalized ? personalized_relation(g, emb, u) : pooled);
  normalizers_ = kernels::reward_normalizers_parallel(g, emb, relations_);
  for (std::uint32_t u = 0; u < users; ++u) {
    if (!(normalizers_[u] > 0.0)) {
      ++degenerate_;
      spdlog::debug("user {} has non-positive reward normalizer {}; rewards are 0", u, normalizers_[u]);
    }
  }
  if (degenerate_ > 0) spdlog::warn("{} users have a non-positive reward normalizer", degenerate_);
}

double terminal_reward(const Tckg& g, const EmbeddingTable& emb, const State& terminal, const PersonalizedRelation& pr,
                       double normalizer, const ReasonerConfig& cfg) {
  if (terminal.step != cfg.path_length) throw std::invalid_argument("terminal reward requested before the final step");
  if (!g.is_type(terminal.current, EntityType::Item)) return 0.0;
  if (!(normalizer > 0.0)) return 0.0;
  const double score = std::max(0.0, reward_score(g, emb, terminal.user, terminal.current, pr));
  return std::clamp(score / normalizer, 0.0, 1.0);
}

// ---------------------------------------------------------------------------

Trajectory rollout(const ReasonerContext& ctx, const PolicyParams& params, std::uint32_t user_index, Rng& rng, bool train) {
  const auto& cfg = ctx.config;
  Trajectory t;
  State s = initial_state(ctx.graph.node({EntityType::User, user_index}));
  for (int k = 0; k < cfg.path_length; ++k) {
    StepRecord rec;
    rec.state = s;
    rec.space = prune_actions(ctx.graph, ctx.embeddings, s, cfg);
    const Eigen::VectorXd x = encode_state(params, state_inputs(ctx.embeddings, s, cfg), train, rng, &rec.cache);
    rec.probs = actor_probs(params, x, rec.space.mask);
    rec.value = critic_value(params, x);
    std::discrete_distribution<int> pick(rec.probs.data(), rec.probs.data() + rec.probs.size());
    rec.slot = pick(rng);
    rec.log_prob = std::log(rec.probs[rec.slot]);
    s = transition(s, rec.space.actions[static_cast<std::size_t>(rec.slot)], cfg);
    t.steps.push_back(std::move(rec));
  }
  t.terminal = s;
  t.reward = terminal_reward(ctx.graph, ctx.embeddings, s, ctx.rewards.relation(user_index), ctx.rewards.normalizer(user_index), cfg);
  return t;
}

std::vector<double> discounted_returns(double terminal_reward, int steps, double gamma) {
  std::vector<double> g(static_cast<std::size_t>(steps), 0.0);
  double acc = terminal_reward;
  for (int k = steps - 1; k >= 0; --k) {
    g[static_cast<std::size_t>(k)] = acc;
    acc *= gamma;
  }
  return g;
}

void trajectory_gradient(const PolicyParams& params, const Trajectory& t, double gamma, double critic_weight,
                         PolicyParams& grads, double* actor_loss, double* critic_loss) {
  const auto returns = discounted_returns(t.reward, static_cast<int>(t.steps.size()), gamma);
  double al = 0.0, cl = 0.0;
  for (std::size_t k = 0; k < t.steps.size(); ++k) {
    const StepRecord& rec = t.steps[k];
    const double advantage = returns[k] - rec.value;
    // d(-log pi(a) * A)/d logits = A * (p - onehot(a)); masked slots stay 0.
    Eigen::VectorXd dlogits = advantage * rec.probs;
    dlogits[rec.slot] -= advantage;
    const double dvalue = -2.0 * critic_weight * advantage;
    backpropagate(params, rec.cache, dlogits, dvalue, grads);
    al += -rec.log_prob * advantage;
    cl += critic_weight * advantage * advantage;
  }
  if (actor_loss) *actor_loss = al;
  if (critic_loss) *critic_loss = cl;
}

void train_policy(const ReasonerContext& ctx, std::span<const std::uint32_t> users, PolicyParams& params, AdamState& state,
                  const PolicyTrainConfig& cfg, PolicyTrainLog* log, int first_epoch) {
  if (cfg.batch_size < 1 || cfg.epochs < 0) throw std::invalid_argument("invalid policy training config");
  if (users.empty()) throw std::invalid_argument("no users to train on");
  std::vector<std::uint32_t> order(users.begin(), users.end());
  std::vector<PolicyParams> chunk_grads(kGradientChunks, PolicyParams::zeros(params.shape));
  PolicyParams total = PolicyParams::zeros(params.shape);
  PolicyTrainLog local;

  for (int epoch = first_epoch; epoch < first_epoch + cfg.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, 0x5F, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double reward_sum = 0.0, actor_sum = 0.0, critic_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const std::size_t n = stop - start;
      const int chunks = static_cast<int>(std::min<std::size_t>(kGradientChunks, n));
      std::vector<double> chunk_reward(static_cast<std::size_t>(chunks), 0.0), chunk_actor(static_cast<std::size_t>(chunks), 0.0),
          chunk_critic(static_cast<std::size_t>(chunks), 0.0);

      // Fixed chunking keeps the reduction order independent of thread count.
#pragma omp parallel for schedule(dynamic, 1)
      for (int c = 0; c < chunks; ++c) {
        auto& grad = chunk_grads[static_cast<std::size_t>(c)];
        grad.set_zero();
        const std::size_t lo = start + n * static_cast<std::size_t>(c) / static_cast<std::size_t>(chunks);
        const std::size_t hi = start + n * static_cast<std::size_t>(c + 1) / static_cast<std::size_t>(chunks);
        for (std::size_t i = lo; i < hi; ++i) {
          const std::uint32_t u = order[i];
          Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch), u));
          const Trajectory t = rollout(ctx, params, u, rng, true);
          double al = 0.0, cl = 0.0;
          trajectory_gradient(params, t, cfg.gamma, cfg.critic_weight, grad, &al, &cl);
          chunk_reward[static_cast<std::size_t>(c)] += t.reward;
          chunk_actor[static_cast<std::size_t>(c)] += al;
          chunk_critic[static_cast<std::size_t>(c)] += cl;
        }
      }

      total.set_zero();
      double batch_reward = 0.0, batch_actor = 0.0, batch_critic = 0.0;
      for (int c = 0; c < chunks; ++c) {
        auto dst = total.blocks();
        const auto src = std::as_const(chunk_grads[static_cast<std::size_t>(c)]).blocks();
        for (std::size_t b = 0; b < dst.size(); ++b) axpy(1.0 / static_cast<double>(n), src[b], dst[b]);
        batch_reward += chunk_reward[static_cast<std::size_t>(c)];
        batch_actor += chunk_actor[static_cast<std::size_t>(c)];
        batch_critic += chunk_critic[static_cast<std::size_t>(c)];
      }
      if (!std::isfinite(batch_actor) || !std::isfinite(batch_critic) || !apply_gradients(params, total, state, cfg.adam)) {
        ++local.skipped_batches;
        spdlog::warn("skipping policy batch with non-finite loss or gradient (epoch {})", epoch);
        continue;
      }
      reward_sum += batch_reward;
      actor_sum += batch_actor;
      critic_sum += batch_critic;
    }
    const double denom = static_cast<double>(order.size());
    local.epoch_reward.push_back(reward_sum / denom);
    local.epoch_actor_loss.push_back(actor_sum / denom);
    local.epoch_critic_loss.push_back(critic_sum / denom);
    spdlog::debug("policy epoch {} reward {:.4f} actor {:.4f} critic {:.4f}", epoch, local.epoch_reward.back(),
                  local.epoch_actor_loss.back(), local.epoch_critic_loss.back());
  }
  if (log) {
    log->epoch_reward.insert(log->epoch_reward.end(), local.epoch_reward.begin(), local.epoch_reward.end());
    log->epoch_actor_loss.insert(log->epoch_actor_loss.end(), local.epoch_actor_loss.begin(), local.epoch_actor_loss.end());
    log->epoch_critic_loss.insert(log->epoch_critic_loss.end(), local.epoch_critic_loss.begin(), local.epoch_critic_loss.end());
    log->skipped_batches += local.skipped_batches;
  }
}

// ---------------------------------------------------------------------------

std::vector<PathResult> beam_search(const ReasonerContext& ctx, const PolicyParams& params, std::uint32_t user_index,
                                    std::span<const int> sizes) {
  const auto& cfg = ctx.config;
  if (sizes.size() != static_cast<std::size_t>(cfg.path_length)) {
    throw std::invalid_argument("beam needs one width per hop (" + std::to_string(cfg.path_length) + ")");
  }
  Rng unused(0);
  std::vector<Beam> beams{{initial_state(ctx.graph.node({EntityType::User, user_index})), 0.0}};
  for (int hop = 0; hop < cfg.path_length; ++hop) {
    std::vector<Beam> next;
    for (const Beam& b : beams) {
      const ActionSpace space = prune_actions(ctx.graph, ctx.embeddings, b.state, cfg);
      const Eigen::VectorXd x = encode_state(params, state_inputs(ctx.embeddings, b.state, cfg), false, unused);
      const Eigen::VectorXd probs = actor_probs(params, x, space.mask);
      std::vector<int> slots(space.size());
      std::iota(slots.begin(), slots.end(), 0);
      std::stable_sort(slots.begin(), slots.end(), [&](int a, int c) { return probs[a] > probs[c]; });
      const std::size_t take = std::min(slots.size(), static_cast<std::size_t>(std::max(0, sizes[static_cast<std::size_t>(hop)])));
      for (std::size_t k = 0; k < take; ++k) {
        const int slot = slots[k];
        if (!(probs[slot] > 0.0)) break;
        next.push_back({transition(b.state, space.actions[static_cast<std::size_t>(slot)], cfg), b.score + std::log(probs[slot])});
      }
    }
    beams = std::move(next);
  }
  std::stable_sort(beams.begin(), beams.end(), [](const Beam& a, const Beam& b) { return a.score > b.score; });

  std::vector<PathResult> out;
  std::vector<char> seen(ctx.graph.node_count(), 0);
  for (const Beam& b : beams) {
    PathResult r;
    r.user = b.state.user;
    r.score = b.score;
    r.terminal = b.state.current;
    r.valid = ctx.graph.is_type(r.terminal, EntityType::Item);
    if (r.valid) {
      if (seen[r.terminal]) continue;
      seen[r.terminal] = 1;
    }
    for (const Hop& h : b.state.path)
      if (!h.self_loop) r.hops.push_back(h);
    out.push_back(std::move(r));
  }
  return out;
}

std::size_t count_valid(std::span<const PathResult> paths) {
  return static_cast<std::size_t>(std::count_if(paths.begin(), paths.end(), [](const PathResult& p) { return p.valid; }));
}

std::size_t invalid_user_count(std::span<const std::vector<PathResult>> results, std::size_t threshold) {
  std::size_t n = 0;
  for (const auto& r : results)
    if (count_valid(r) < threshold) ++n;
  return n;
}

namespace kernels {

std::vector<std::vector<PathResult>> beam_search_serial(const ReasonerContext& ctx, const PolicyParams& params,
                                                        std::span<const std::uint32_t> users, std::span<const int> sizes) {
  std::vector<std::vector<PathResult>> out(users.size());
  for (std::size_t i = 0; i < users.size(); ++i) out[i] = beam_search(ctx, params, users[i], sizes);
  return out;
}

std::vector<std::vector<PathResult>> beam_search_parallel(const ReasonerContext& ctx, const PolicyParams& params,
                                                          std::span<const std::uint32_t> users, std::span<const int> sizes) {
  std::vector<std::vector<PathResult>> out(users.size());
  const auto n = static_cast<std::int64_t>(users.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t i = 0; i < n; ++i)
    out[static_cast<std::size_t>(i)] = beam_search(ctx, params, users[static_cast<std::size_t>(i)], sizes);
  return out;
}

std::vector<double> reward_normalizers_serial(const Tckg& g, const EmbeddingTable& emb,
                                              std::span<const PersonalizedRelation> relations) {
  return user_relation_normalizers(g, emb, relations, false);
}

std::vector<double> reward_normalizers_parallel(const Tckg& g, const EmbeddingTable& emb,
                                                std::span<const PersonalizedRelation> relations) {
  return user_relation_normalizers(g, emb, relations, true);
}

}  // namespace kernels

}  // namespace tprec
