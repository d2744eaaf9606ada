#include "tprec/config.hpp"

#include <fstream>
#include <initializer_list>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace tprec {

using nlohmann::json;

namespace {

// Reads optional keys from one object and remembers which ones it saw, so
// typos surface as errors instead of silently falling back to defaults.
class Section {
 public:
  Section(const json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
    if (!doc_.is_object()) throw std::invalid_argument("config: '" + path_ + "' must be an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!doc_.contains(key)) return;
    try {
      doc_.at(key).get_to(out);
    } catch (const json::exception& e) {
      throw std::invalid_argument("config: bad value for '" + path_ + key + "': " + e.what());
    }
  }

  std::optional<Section> child(const char* key) {
    seen_.insert(key);
    if (!doc_.contains(key)) return std::nullopt;
    return Section(doc_.at(key), path_ + key + ".");
  }

  bool has(const char* key) {
    seen_.insert(key);
    return doc_.contains(key);
  }
  const json& at(const char* key) const { return doc_.at(key); }

  void finish() const {
    for (const auto& [k, v] : doc_.items())
      if (!seen_.count(k)) throw std::invalid_argument("config: unknown key '" + path_ + k + "'");
  }

 private:
  const json& doc_;
  std::string path_;
  std::set<std::string> seen_;
};

std::string encoder_name(EncoderKind k) { return k == EncoderKind::BiLstm ? "bilstm" : "feedforward"; }
EncoderKind parse_encoder(const std::string& s) {
  if (s == "bilstm") return EncoderKind::BiLstm;
  if (s == "feedforward") return EncoderKind::FeedForward;
  throw std::invalid_argument("config: policy.encoder must be 'bilstm' or 'feedforward'");
}
std::string reward_name(RewardMode m) { return m == RewardMode::Personalized ? "personalized" : "average"; }
RewardMode parse_reward(const std::string& s) {
  if (s == "personalized") return RewardMode::Personalized;
  if (s == "average") return RewardMode::AveragePooled;
  throw std::invalid_argument("config: policy.reward must be 'personalized' or 'average'");
}
std::string split_name(SplitMode m) { return m == SplitMode::Normal ? "normal" : "sequential"; }
SplitMode parse_split(const std::string& s) {
  if (s == "normal") return SplitMode::Normal;
  if (s == "sequential") return SplitMode::Sequential;
  throw std::invalid_argument("config: split.mode must be 'normal' or 'sequential'");
}

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("config: " + what);
}

}  // namespace

void PipelineConfig::validate() const {
  require(feature_dims == static_cast<int>(kFeatureDims), "features.dims must be " + std::to_string(kFeatureDims));
  require(trend_gaps == std::vector<int>(kTrendGaps.begin(), kTrendGaps.end()), "features.trend_gaps must be [90, 30, 7, 1]");
  require(split.test_fraction >= 0 && split.test_fraction < 1, "split.test_fraction must be in [0, 1)");
  require(split.valid_fraction_of_train >= 0 && split.valid_fraction_of_train < 1, "split.valid_fraction_of_train must be in [0, 1)");
  require(split.sequential_valid >= 0 && split.sequential_test >= 0 && split.sequential_valid + split.sequential_test < 1,
          "split.sequential_* must be non-negative and sum below 1");
  require(split.min_interactions >= 1, "split.min_interactions must be >= 1");
  require(clustering.min_clusters >= 1 && clustering.max_clusters >= clustering.min_clusters,
          "clustering needs 1 <= min_clusters <= max_clusters");
  require(clustering.max_iter >= 1 && clustering.tol > 0 && clustering.variance_floor > 0, "clustering iteration settings");
  require(embedding.dim >= 1 && embedding.learning_rate > 0 && embedding.batch_size >= 1 && embedding.epochs >= 0 &&
              embedding.negatives_per_positive >= 1 && embedding.max_grad_norm > 0,
          "embedding settings out of range");
  require(policy.hidden >= 1 && policy.state_dim >= 1, "policy sizes must be >= 1");
  require(policy.dropout >= 0 && policy.dropout < 1, "policy.dropout must be in [0, 1)");
  require(policy.reasoner.max_actions >= 1 && policy.reasoner.path_length >= 1 && policy.reasoner.history >= 1,
          "policy.max_actions, path_length and history must be >= 1");
  require(policy.train.gamma >= 0 && policy.train.gamma <= 1, "policy.gamma must be in [0, 1]");
  require(policy.train.adam.learning_rate > 0 && policy.train.batch_size >= 1 && policy.train.epochs >= 0 &&
              policy.train.critic_weight >= 0,
          "policy training settings out of range");
  require(recommend.beam.size() == static_cast<std::size_t>(policy.reasoner.path_length),
          "recommend.beam needs one width per hop");
  for (int b : recommend.beam) require(b >= 1, "recommend.beam widths must be >= 1");
  require(recommend.top_k >= 1, "recommend.top_k must be >= 1");
  require(evaluate.k >= 1, "evaluate.k must be >= 1");
  synth.validate();
}

json config_to_json(const PipelineConfig& c) {
  json festivals = json::array();
  for (const auto& f : c.synth.festivals) festivals.push_back({{"month", f.month}, {"day", f.day}, {"multiplier", f.multiplier}});
  return json{
      {"dataset", c.dataset},
      {"seed", c.seed},
      {"out_dir", c.out_dir},
      {"data", {{"interactions", c.data.interactions}, {"kg", c.data.kg}, {"reviews", c.data.reviews}}},
      {"features", {{"dims", c.feature_dims}, {"trend_gaps", c.trend_gaps}}},
      {"split",
       {{"mode", split_name(c.split.mode)},
        {"test_fraction", c.split.test_fraction},
        {"valid_fraction_of_train", c.split.valid_fraction_of_train},
        {"sequential_valid", c.split.sequential_valid},
        {"sequential_test", c.split.sequential_test},
        {"min_interactions", c.split.min_interactions}}},
      {"clustering",
       {{"min_clusters", c.clustering.min_clusters},
        {"max_clusters", c.clustering.max_clusters},
        {"max_iter", c.clustering.max_iter},
        {"tol", c.clustering.tol},
        {"variance_floor", c.clustering.variance_floor}}},
      {"embedding",
       {{"dim", c.embedding.dim},
        {"learning_rate", c.embedding.learning_rate},
        {"batch_size", c.embedding.batch_size},
        {"epochs", c.embedding.epochs},
        {"negatives", c.embedding.negatives_per_positive},
        {"max_grad_norm", c.embedding.max_grad_norm},
        {"bias_objective", c.embedding.bias_objective}}},
      {"policy",
       {{"hidden", c.policy.hidden},
        {"state_dim", c.policy.state_dim},
        {"dropout", c.policy.dropout},
        {"encoder", encoder_name(c.policy.encoder)},
        {"reward", reward_name(c.policy.reward)},
        {"max_actions", c.policy.reasoner.max_actions},
        {"path_length", c.policy.reasoner.path_length},
        {"history", c.policy.reasoner.history},
        {"gamma", c.policy.train.gamma},
        {"learning_rate", c.policy.train.adam.learning_rate},
        {"batch_size", c.policy.train.batch_size},
        {"epochs", c.policy.train.epochs},
        {"critic_weight", c.policy.train.critic_weight}}},
      {"recommend",
       {{"beam", c.recommend.beam}, {"top_k", c.recommend.top_k}, {"time", c.recommend.time ? json(*c.recommend.time) : json(nullptr)}}},
      {"evaluate",
       {{"k", c.evaluate.k},
        {"max_word_frequency", c.evaluate.filter.max_frequency},
        {"min_tfidf", c.evaluate.filter.min_tfidf},
        {"invalid_threshold", c.evaluate.invalid_threshold}}},
      {"synth",
       {{"users", c.synth.users},
        {"items", c.synth.items},
        {"brands", c.synth.brands},
        {"categories", c.synth.categories},
        {"words", c.synth.words},
        {"season_words", c.synth.season_words},
        {"horizon_days", c.synth.horizon_days},
        {"start", c.synth.start},
        {"purchases_per_user_day", c.synth.purchases_per_user_day},
        {"item_in_season", c.synth.item_in_season},
        {"item_off_season", c.synth.item_off_season},
        {"user_in_season", c.synth.user_in_season},
        {"user_off_season", c.synth.user_off_season},
        {"taste_boost", c.synth.taste_boost},
        {"festivals", festivals},
        {"review_probability", c.synth.review_probability},
        {"words_per_review", c.synth.words_per_review},
        {"season_word_share", c.synth.season_word_share}}},
  };
}

PipelineConfig config_from_json(const json& doc) {
  PipelineConfig c;
  Section root(doc, "");
  root.read("dataset", c.dataset);
  root.read("seed", c.seed);
  root.read("out_dir", c.out_dir);
  if (auto s = root.child("data")) {
    s->read("interactions", c.data.interactions);
    s->read("kg", c.data.kg);
    s->read("reviews", c.data.reviews);
    s->finish();
  }
  if (auto s = root.child("features")) {
    s->read("dims", c.feature_dims);
    s->read("trend_gaps", c.trend_gaps);
    s->finish();
  }
  if (auto s = root.child("split")) {
    std::string mode = split_name(c.split.mode);
    s->read("mode", mode);
    c.split.mode = parse_split(mode);
    s->read("test_fraction", c.split.test_fraction);
    s->read("valid_fraction_of_train", c.split.valid_fraction_of_train);
    s->read("sequential_valid", c.split.sequential_valid);
    s->read("sequential_test", c.split.sequential_test);
    s->read("min_interactions", c.split.min_interactions);
    s->finish();
  }
  if (auto s = root.child("clustering")) {
    s->read("min_clusters", c.clustering.min_clusters);
    s->read("max_clusters", c.clustering.max_clusters);
    s->read("max_iter", c.clustering.max_iter);
    s->read("tol", c.clustering.tol);
    s->read("variance_floor", c.clustering.variance_floor);
    s->finish();
  }
  if (auto s = root.child("embedding")) {
    s->read("dim", c.embedding.dim);
    s->read("learning_rate", c.embedding.learning_rate);
    s->read("batch_size", c.embedding.batch_size);
    s->read("epochs", c.embedding.epochs);
    s->read("negatives", c.embedding.negatives_per_positive);
    s->read("max_grad_norm", c.embedding.max_grad_norm);
    s->read("bias_objective", c.embedding.bias_objective);
    s->finish();
  }
  if (auto s = root.child("policy")) {
    s->read("hidden", c.policy.hidden);
    s->read("state_dim", c.policy.state_dim);
    s->read("dropout", c.policy.dropout);
    std::string encoder = encoder_name(c.policy.encoder), reward = reward_name(c.policy.reward);
    s->read("encoder", encoder);
    s->read("reward", reward);
    c.policy.encoder = parse_encoder(encoder);
    c.policy.reward = parse_reward(reward);
    s->read("max_actions", c.policy.reasoner.max_actions);
    s->read("path_length", c.policy.reasoner.path_length);
    s->read("history", c.policy.reasoner.history);
    s->read("gamma", c.policy.train.gamma);
    s->read("learning_rate", c.policy.train.adam.learning_rate);
    s->read("batch_size", c.policy.train.batch_size);
    s->read("epochs", c.policy.train.epochs);
    s->read("critic_weight", c.policy.train.critic_weight);
    s->finish();
  }
  if (auto s = root.child("recommend")) {
    s->read("beam", c.recommend.beam);
    s->read("top_k", c.recommend.top_k);
    if (s->has("time") && !s->at("time").is_null()) {
      std::int64_t t = 0;
      s->read("time", t);
      c.recommend.time = t;
    }
    s->finish();
  }
  if (auto s = root.child("evaluate")) {
    s->read("k", c.evaluate.k);
    s->read("max_word_frequency", c.evaluate.filter.max_frequency);
    s->read("min_tfidf", c.evaluate.filter.min_tfidf);
    s->read("invalid_threshold", c.evaluate.invalid_threshold);
    s->finish();
  }
  if (auto s = root.child("synth")) {
    auto& y = c.synth;
    s->read("users", y.users);
    s->read("items", y.items);
    s->read("brands", y.brands);
    s->read("categories", y.categories);
    s->read("words", y.words);
    s->read("season_words", y.season_words);
    s->read("horizon_days", y.horizon_days);
    s->read("start", y.start);
    s->read("purchases_per_user_day", y.purchases_per_user_day);
    s->read("item_in_season", y.item_in_season);
    s->read("item_off_season", y.item_off_season);
    s->read("user_in_season", y.user_in_season);
    s->read("user_off_season", y.user_off_season);
    s->read("taste_boost", y.taste_boost);
    if (s->has("festivals")) {
      y.festivals.clear();
      for (const auto& f : s->at("festivals")) {
        Section fs(f, "synth.festivals[].");
        Festival fe;
        fs.read("month", fe.month);
        fs.read("day", fe.day);
        fs.read("multiplier", fe.multiplier);
        fs.finish();
        y.festivals.push_back(fe);
      }
    }
    s->read("review_probability", y.review_probability);
    s->read("words_per_review", y.words_per_review);
    s->read("season_word_share", y.season_word_share);
    s->finish();
  }
  root.finish();
  c.validate();
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config " + path.string() + ": " + e.what());
  }
  PipelineConfig c = config_from_json(doc);
  c.base_dir = std::filesystem::absolute(path).parent_path();
  return c;
}

}  // namespace tprec
