#include "tprec/policy_net.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "tprec/binary_io.hpp"

namespace tprec {

namespace {

constexpr char kPolicyMagic[] = "TPRPOL01";
constexpr std::uint32_t kPolicyVersion = 1;

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Eigen::VectorXd sigmoid(const Eigen::VectorXd& v) { return v.unaryExpr([](double x) { return sigmoid(x); }); }

void fill_uniform(Eigen::MatrixXd& m, double bound, Rng& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
}

void fill_uniform(Eigen::VectorXd& v, double bound, Rng& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = u(rng);
}

LstmWeights lstm_zeros(int hidden, int input) {
  return {Eigen::MatrixXd::Zero(4 * hidden, input), Eigen::MatrixXd::Zero(4 * hidden, hidden), Eigen::VectorXd::Zero(4 * hidden)};
}

// Runs one direction over the columns of `inputs` in the given order.
void lstm_forward(const LstmWeights& w, const Eigen::MatrixXd& inputs, bool reverse, EncoderCache::Direction& out) {
  const Eigen::Index H = w.recurrent.cols();
  const Eigen::Index T = inputs.cols();
  out.gates.resize(4 * H, T);
  out.cell.resize(H, T);
  out.hidden.resize(H, T);
  Eigen::VectorXd h = Eigen::VectorXd::Zero(H);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(H);
  for (Eigen::Index s = 0; s < T; ++s) {
    const Eigen::Index t = reverse ? T - 1 - s : s;
    Eigen::VectorXd z = w.bias;
    z.noalias() += w.input * inputs.col(t);
    z.noalias() += w.recurrent * h;
    for (Eigen::Index k = 0; k < H; ++k) {
      z[k] = sigmoid(z[k]);                  // input gate
      z[H + k] = sigmoid(z[H + k]);          // forget gate
      z[2 * H + k] = std::tanh(z[2 * H + k]);  // candidate
      z[3 * H + k] = sigmoid(z[3 * H + k]);  // output gate
    }
    c = z.segment(H, H).cwiseProduct(c) + z.segment(0, H).cwiseProduct(z.segment(2 * H, H));
    h = z.segment(3 * H, H).cwiseProduct(c.array().tanh().matrix());
    out.gates.col(t) = z;
    out.cell.col(t) = c;
    out.hidden.col(t) = h;
  }
}

void lstm_backward(const LstmWeights& w, const Eigen::MatrixXd& inputs, bool reverse, const EncoderCache::Direction& cache,
                   Eigen::VectorXd dh, LstmWeights& grad) {
  const Eigen::Index H = w.recurrent.cols();
  const Eigen::Index T = inputs.cols();
  Eigen::VectorXd dc = Eigen::VectorXd::Zero(H);
  Eigen::VectorXd dz(4 * H);
  for (Eigen::Index s = T - 1; s >= 0; --s) {
    const Eigen::Index t = reverse ? T - 1 - s : s;
    const bool first = (s == 0);
    const Eigen::Index prev = reverse ? t + 1 : t - 1;
    const auto gates = cache.gates.col(t);
    const Eigen::VectorXd tanh_c = cache.cell.col(t).array().tanh().matrix();
    for (Eigen::Index k = 0; k < H; ++k) {
      const double i = gates[k], f = gates[H + k], g = gates[2 * H + k], o = gates[3 * H + k];
      const double c_prev = first ? 0.0 : cache.cell(k, prev);
      const double dck = dc[k] + dh[k] * o * (1.0 - tanh_c[k] * tanh_c[k]);
      dz[k] = dck * g * i * (1.0 - i);
      dz[H + k] = dck * c_prev * f * (1.0 - f);
      dz[2 * H + k] = dck * i * (1.0 - g * g);
      dz[3 * H + k] = dh[k] * tanh_c[k] * o * (1.0 - o);
      dc[k] = dck * f;
    }
    grad.input.noalias() += dz * inputs.col(t).transpose();
    grad.bias += dz;
    if (!first) {
      grad.recurrent.noalias() += dz * cache.hidden.col(prev).transpose();
      dh.noalias() = w.recurrent.transpose() * dz;
    }
  }
}

void check_inputs(const PolicyParams& p, const Eigen::MatrixXd& inputs) {
  if (inputs.rows() != p.shape.input_dim || inputs.cols() != p.shape.sequence) {
    throw std::invalid_argument("encoder input is " + std::to_string(inputs.rows()) + "x" + std::to_string(inputs.cols()) +
                                ", expected " + std::to_string(p.shape.input_dim) + "x" + std::to_string(p.shape.sequence));
  }
}

template <typename Block>
std::span<double> view(Block& b) {
  return {b.data(), static_cast<std::size_t>(b.size())};
}
template <typename Block>
std::span<const double> cview(const Block& b) {
  return {b.data(), static_cast<std::size_t>(b.size())};
}

}  // namespace

// ---------------------------------------------------------------------------

PolicyParams PolicyParams::zeros(const PolicyShape& s) {
  if (s.input_dim < 1 || s.hidden < 1 || s.state_dim < 1 || s.actions < 1 || s.sequence < 1) {
    throw std::invalid_argument("invalid policy shape");
  }
  PolicyParams p;
  p.shape = s;
  if (s.encoder == EncoderKind::BiLstm) {
    p.forward = lstm_zeros(s.hidden, s.input_dim);
    p.backward = lstm_zeros(s.hidden, s.input_dim);
    p.dense = Eigen::MatrixXd::Zero(0, 0);
    p.project = Eigen::MatrixXd::Zero(2 * s.hidden, s.state_dim);
  } else {
    p.forward = lstm_zeros(0, 0);
    p.backward = lstm_zeros(0, 0);
    p.dense = Eigen::MatrixXd::Zero(s.sequence * s.input_dim, s.state_dim);
    p.project = Eigen::MatrixXd::Zero(0, 0);
  }
  p.actor = Eigen::MatrixXd::Zero(s.state_dim, s.actions);
  p.critic = Eigen::VectorXd::Zero(s.state_dim);
  return p;
}

PolicyParams PolicyParams::initialize(const PolicyShape& s, double dropout, std::uint64_t seed) {
  if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("dropout rate must be in [0, 1)");
  PolicyParams p = zeros(s);
  p.dropout = dropout;
  Rng rng(seed);
  if (s.encoder == EncoderKind::BiLstm) {
    const double b = 1.0 / std::sqrt(static_cast<double>(s.hidden));
    for (LstmWeights* w : {&p.forward, &p.backward}) {
      fill_uniform(w->input, b, rng);
      fill_uniform(w->recurrent, b, rng);
      fill_uniform(w->bias, b, rng);
    }
    fill_uniform(p.project, std::sqrt(6.0 / static_cast<double>(p.project.rows() + p.project.cols())), rng);
  } else {
    fill_uniform(p.dense, std::sqrt(6.0 / static_cast<double>(p.dense.rows() + p.dense.cols())), rng);
  }
  fill_uniform(p.actor, std::sqrt(6.0 / static_cast<double>(s.state_dim + s.actions)), rng);
  fill_uniform(p.critic, std::sqrt(6.0 / static_cast<double>(s.state_dim + 1)), rng);
  return p;
}

std::vector<std::span<double>> PolicyParams::blocks() {
  return {view(forward.input), view(forward.recurrent), view(forward.bias), view(backward.input), view(backward.recurrent),
          view(backward.bias), view(dense), view(project), view(actor), view(critic)};
}

std::vector<std::span<const double>> PolicyParams::blocks() const {
  return {cview(forward.input), cview(forward.recurrent), cview(forward.bias), cview(backward.input), cview(backward.recurrent),
          cview(backward.bias), cview(dense), cview(project), cview(actor), cview(critic)};
}

std::size_t PolicyParams::parameter_count() const {
  std::size_t n = 0;
  for (auto b : blocks()) n += b.size();
  return n;
}

void PolicyParams::set_zero() {
  for (auto b : blocks()) std::fill(b.begin(), b.end(), 0.0);
}

// ---------------------------------------------------------------------------

Eigen::VectorXd encode_state(const PolicyParams& p, const Eigen::MatrixXd& inputs, bool train, Rng& rng, EncoderCache* cache) {
  check_inputs(p, inputs);
  EncoderCache local;
  EncoderCache& c = cache ? *cache : local;
  c.inputs = inputs;
  Eigen::VectorXd pre;
  if (p.shape.encoder == EncoderKind::BiLstm) {
    lstm_forward(p.forward, inputs, false, c.fwd);
    lstm_forward(p.backward, inputs, true, c.bwd);
    const Eigen::Index H = p.shape.hidden;
    c.concat.resize(2 * H);
    c.concat.head(H) = c.fwd.hidden.col(inputs.cols() - 1);
    c.concat.tail(H) = c.bwd.hidden.col(0);
    pre.noalias() = p.project.transpose() * c.concat;
  } else {
    c.concat = Eigen::Map<const Eigen::VectorXd>(inputs.data(), inputs.size());
    pre.noalias() = p.dense.transpose() * c.concat;
  }
  c.activated = sigmoid(pre);
  c.keep = Eigen::VectorXd::Ones(c.activated.size());
  if (train && p.dropout > 0.0) {
    std::bernoulli_distribution drop(p.dropout);
    const double scale = 1.0 / (1.0 - p.dropout);
    for (Eigen::Index k = 0; k < c.keep.size(); ++k) c.keep[k] = drop(rng) ? 0.0 : scale;
  }
  c.state = c.activated.cwiseProduct(c.keep);
  return c.state;
}

Eigen::VectorXd actor_probs(const PolicyParams& p, const Eigen::VectorXd& state, std::span<const char> mask) {
  if (mask.size() != static_cast<std::size_t>(p.shape.actions)) throw std::invalid_argument("action mask has wrong width");
  const Eigen::VectorXd logits = p.actor.transpose() * state;
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < mask.size(); ++a)
    if (mask[a]) mx = std::max(mx, logits[static_cast<Eigen::Index>(a)]);
  if (!std::isfinite(mx)) throw std::invalid_argument("action mask has no valid slot");
  Eigen::VectorXd probs = Eigen::VectorXd::Zero(p.shape.actions);
  double sum = 0.0;
  for (std::size_t a = 0; a < mask.size(); ++a) {
    if (!mask[a]) continue;
    const double e = std::exp(logits[static_cast<Eigen::Index>(a)] - mx);
    probs[static_cast<Eigen::Index>(a)] = e;
    sum += e;
  }
  probs /= sum;
  return probs;
}

double critic_value(const PolicyParams& p, const Eigen::VectorXd& state) { return p.critic.dot(state); }

void backpropagate(const PolicyParams& p, const EncoderCache& c, const Eigen::VectorXd& dlogits, double dvalue,
                   PolicyParams& grads) {
  grads.actor.noalias() += c.state * dlogits.transpose();
  grads.critic += dvalue * c.state;
  Eigen::VectorXd dstate = p.actor * dlogits + dvalue * p.critic;
  const Eigen::VectorXd dpre =
      dstate.cwiseProduct(c.keep).cwiseProduct(c.activated.cwiseProduct((1.0 - c.activated.array()).matrix()));
  if (p.shape.encoder == EncoderKind::FeedForward) {
    grads.dense.noalias() += c.concat * dpre.transpose();
    return;
  }
  grads.project.noalias() += c.concat * dpre.transpose();
  const Eigen::VectorXd dconcat = p.project * dpre;
  const Eigen::Index H = p.shape.hidden;
  lstm_backward(p.forward, c.inputs, false, c.fwd, dconcat.head(H), grads.forward);
  lstm_backward(p.backward, c.inputs, true, c.bwd, dconcat.tail(H), grads.backward);
}

// ---------------------------------------------------------------------------

AdamState AdamState::for_params(const PolicyParams& p) {
  AdamState s;
  s.first = PolicyParams::zeros(p.shape);
  s.second = PolicyParams::zeros(p.shape);
  return s;
}

bool apply_gradients(PolicyParams& params, const PolicyParams& grads, AdamState& state, const AdamConfig& cfg) {
  if (!(params.shape == grads.shape)) throw std::invalid_argument("gradient shape does not match parameters");
  const auto gb = grads.blocks();
  for (auto b : gb)
    for (double g : b)
      if (!std::isfinite(g)) {
        ++state.skipped;
        return false;
      }
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  auto pb = params.blocks();
  auto mb = state.first.blocks();
  auto vb = state.second.blocks();
  for (std::size_t k = 0; k < pb.size(); ++k) {
    for (std::size_t i = 0; i < pb[k].size(); ++i) {
      const double g = gb[k][i];
      mb[k][i] = cfg.beta1 * mb[k][i] + (1.0 - cfg.beta1) * g;
      vb[k][i] = cfg.beta2 * vb[k][i] + (1.0 - cfg.beta2) * g * g;
      pb[k][i] -= cfg.learning_rate * (mb[k][i] / c1) / (std::sqrt(vb[k][i] / c2) + cfg.epsilon);
    }
  }
  return true;
}

// ---------------------------------------------------------------------------

void PolicyCheckpoint::save(const std::filesystem::path& path) const {
  io::BinaryWriter w(path, std::string_view(kPolicyMagic, 8), kPolicyVersion);
  const auto& s = params.shape;
  w.put<std::int32_t>(s.input_dim);
  w.put<std::int32_t>(s.hidden);
  w.put<std::int32_t>(s.state_dim);
  w.put<std::int32_t>(s.actions);
  w.put<std::int32_t>(s.sequence);
  w.put<std::int32_t>(static_cast<std::int32_t>(s.encoder));
  w.put<double>(params.dropout);
  w.put<std::uint64_t>(seed);
  w.put<std::int64_t>(epoch);
  w.put<std::int64_t>(optimizer.step);
  w.put<std::int64_t>(optimizer.skipped);
  for (const PolicyParams* p : {&params, &optimizer.first, &optimizer.second})
    for (auto b : p->blocks()) w.put_array(b);
  w.finish();
}

PolicyCheckpoint PolicyCheckpoint::load(const std::filesystem::path& path) {
  io::BinaryReader r(path, std::string_view(kPolicyMagic, 8));
  if (r.version() != kPolicyVersion) throw std::runtime_error("unsupported policy checkpoint version");
  PolicyShape s;
  s.input_dim = r.get<std::int32_t>();
  s.hidden = r.get<std::int32_t>();
  s.state_dim = r.get<std::int32_t>();
  s.actions = r.get<std::int32_t>();
  s.sequence = r.get<std::int32_t>();
  s.encoder = static_cast<EncoderKind>(r.get<std::int32_t>());
  PolicyCheckpoint ck;
  ck.params = PolicyParams::zeros(s);
  ck.params.dropout = r.get<double>();
  ck.seed = r.get<std::uint64_t>();
  ck.epoch = r.get<std::int64_t>();
  ck.optimizer = AdamState::for_params(ck.params);
  ck.optimizer.step = r.get<std::int64_t>();
  ck.optimizer.skipped = r.get<std::int64_t>();
  for (PolicyParams* p : {&ck.params, &ck.optimizer.first, &ck.optimizer.second}) {
    for (auto b : p->blocks()) {
      const auto data = r.get_array<double>();
      if (data.size() != b.size()) throw std::runtime_error("corrupt policy checkpoint " + path.string());
      std::copy(data.begin(), data.end(), b.begin());
    }
  }
  return ck;
}

}  // namespace tprec
