#include <gtest/gtest.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tprec/pipeline.hpp"

using namespace tprec;
namespace fs = std::filesystem;

namespace {

const fs::path kTinyConfig = fs::path(TPREC_SOURCE_DIR) / "data" / "tiny" / "config.json";

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("tprec_unit_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

const std::vector<Stage> kTrainChain = {Stage::Features, Stage::Cluster, Stage::BuildGraph, Stage::TrainEmbed, Stage::TrainPolicy};

void run_all(const PipelineConfig& cfg, const fs::path& out) {
  StageOptions opt;
  opt.out = out;
  for (Stage s : kTrainChain) run_stage(s, cfg, opt);
  run_stage(Stage::Recommend, cfg, opt);
  run_stage(Stage::Evaluate, cfg, opt);
}

int season_of_day(std::int64_t day) {
  const std::chrono::year_month_day ymd{std::chrono::sys_days{std::chrono::days{day}}};
  return static_cast<int>(season_of_month(static_cast<unsigned>(ymd.month())));
}

}  // namespace

TEST(Config, DefaultsMatchReferenceHyperparameters) {
  const PipelineConfig c;
  EXPECT_EQ(c.embedding.dim, 100);
  EXPECT_EQ(c.feature_dims, 25);
  EXPECT_EQ(c.trend_gaps, (std::vector<int>{90, 30, 7, 1}));
  EXPECT_EQ(c.policy.reasoner.max_actions, 250);
  EXPECT_EQ(c.policy.reasoner.path_length, 3);
  EXPECT_EQ(c.policy.reasoner.history, 1);
  EXPECT_DOUBLE_EQ(c.policy.train.gamma, 0.99);
  EXPECT_DOUBLE_EQ(c.policy.train.adam.learning_rate, 1e-4);
  EXPECT_EQ(c.policy.train.batch_size, 32);
  EXPECT_EQ(c.policy.train.epochs, 50);
  EXPECT_EQ(c.policy.hidden, 256);
  EXPECT_DOUBLE_EQ(c.policy.dropout, 0.5);
  EXPECT_EQ(c.recommend.beam, (std::vector<int>{25, 5, 1}));
  EXPECT_EQ(c.recommend.top_k, 10);
  EXPECT_EQ(c.evaluate.k, 10);
  EXPECT_EQ(c.clustering.min_clusters, 2);
  EXPECT_EQ(c.clustering.max_clusters, 32);
  EXPECT_DOUBLE_EQ(c.split.test_fraction, 0.3);
  EXPECT_DOUBLE_EQ(c.split.valid_fraction_of_train, 0.1);
  EXPECT_DOUBLE_EQ(c.split.sequential_valid, 0.1);
  EXPECT_DOUBLE_EQ(c.split.sequential_test, 0.3);
  EXPECT_EQ(c.evaluate.filter.max_frequency, 5000u);
  EXPECT_DOUBLE_EQ(c.evaluate.filter.min_tfidf, 0.1);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, JsonRoundTripAndOverrides) {
  const PipelineConfig c = config_from_json(nlohmann::json::parse(R"({"seed": 9, "policy": {"hidden": 12, "reward": "average"}})"));
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.policy.hidden, 12);
  EXPECT_EQ(c.policy.reward, RewardMode::AveragePooled);
  EXPECT_EQ(c.policy.state_dim, 256);
  const PipelineConfig back = config_from_json(config_to_json(c));
  EXPECT_EQ(config_to_json(back), config_to_json(c));
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"sede": 1})")), std::invalid_argument);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"policy": {"hiden": 1}})")), std::invalid_argument);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"policy": {"hidden": "x"}})")), std::invalid_argument);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"recommend": {"beam": [25, 5]}})")), std::invalid_argument);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"features": {"dims": 24}})")), std::invalid_argument);
  EXPECT_THROW(load_config("/nonexistent/tprec.json"), std::runtime_error);
}

TEST(Synthetic, WinterItemsSellMoreInWinter) {
  double winter_buys = 0, summer_buys = 0, winter_days = 0, summer_days = 0;
  std::size_t draws = 0;
  for (std::uint64_t seed = 1; draws < 10000; ++seed) {
    SyntheticSpec spec;
    spec.seed = seed;
    const SyntheticData d = generate_synthetic(spec);
    for (const auto& r : d.interactions) {
      ++draws;
      if (item_season(spec, static_cast<int>(r.item)) != static_cast<int>(Season::Winter)) continue;
      const int s = season_of_day(r.time.day());
      winter_buys += s == static_cast<int>(Season::Winter);
      summer_buys += s == static_cast<int>(Season::Summer);
    }
    const std::int64_t first = Timestamp{spec.start}.day();
    for (std::int64_t day = first; day < first + spec.horizon_days; ++day) {
      winter_days += season_of_day(day) == static_cast<int>(Season::Winter);
      summer_days += season_of_day(day) == static_cast<int>(Season::Summer);
    }
  }
  EXPECT_GT(winter_buys / winter_days, 2.0 * summer_buys / summer_days);
}

TEST(Synthetic, ZeroRatesGiveEmptyLogAndSeedsAreStable) {
  SyntheticSpec zero;
  zero.item_in_season = zero.item_off_season = 0.0;
  EXPECT_TRUE(generate_synthetic(zero).interactions.empty());

  SyntheticSpec spec;
  spec.users = 30;
  spec.seed = 4;
  const SyntheticData a = generate_synthetic(spec), b = generate_synthetic(spec);
  ASSERT_EQ(a.interactions.size(), b.interactions.size());
  for (std::size_t i = 0; i < a.interactions.size(); ++i) {
    EXPECT_EQ(a.interactions[i].item, b.interactions[i].item);
    EXPECT_EQ(a.interactions[i].time.seconds, b.interactions[i].time.seconds);
  }
  EXPECT_EQ(a.reviews.size(), b.reviews.size());
  spec.seed = 5;
  EXPECT_NE(generate_synthetic(spec).interactions.size(), 0u);

  EXPECT_DOUBLE_EQ(festival_multiplier(SyntheticSpec{}, Timestamp{1574726400}.day()), 3.0);  // 2019-11-26
  EXPECT_DOUBLE_EQ(festival_multiplier(SyntheticSpec{}, Timestamp{1574812800}.day()), 1.0);
  SyntheticSpec bad;
  bad.horizon_days = 100;
  EXPECT_THROW(generate_synthetic(bad), std::invalid_argument);
}

TEST(Dataset, LoadsTinyFixture) {
  const fs::path dir = kTinyConfig.parent_path();
  const Dataset d = load_dataset(dir / "interactions.tsv", dir / "kg.tsv", dir / "reviews.tsv");
  EXPECT_EQ(d.entities.count(EntityType::User), 50u);
  EXPECT_FALSE(d.interactions.empty());
  EXPECT_FALSE(d.static_triples.empty());
  EXPECT_FALSE(d.reviews.empty());
  const Dataset bare = load_dataset(dir / "interactions.tsv", "", "");
  EXPECT_TRUE(bare.static_triples.empty());
}

TEST(Dataset, MalformedInputNamesFileAndLine) {
  const fs::path dir = fresh_dir("dataset");
  write_text(dir / "ok.tsv", "# comment\nu1\ti1\t1500000000\n\nu2\ti1\t1500000100\n");
  write_text(dir / "short.tsv", "u1\ti1\t1500000000\nu2\ti1\n");
  write_text(dir / "ts.tsv", "u1\ti1\tyesterday\n");
  write_text(dir / "kg.tsv", "item:i1\tbelong_to\tcategory:c1\nitem:i1\tlikes\tcategory:c1\n");
  EXPECT_EQ(load_dataset(dir / "ok.tsv", "", "").interactions.size(), 2u);
  try {
    load_dataset(dir / "short.tsv", "", "");
    FAIL() << "expected an error";
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find("short.tsv:2"), std::string::npos) << e.what();
  }
  EXPECT_ANY_THROW(load_dataset(dir / "ts.tsv", "", ""));
  EXPECT_ANY_THROW(load_dataset(dir / "ok.tsv", dir / "kg.tsv", ""));
  EXPECT_ANY_THROW(load_dataset(dir / "missing.tsv", "", ""));
  fs::remove_all(dir);
}

TEST(Pipeline, StageNamesAndSeeds) {
  for (Stage s : all_stages()) EXPECT_EQ(parse_stage(stage_name(s)), s);
  EXPECT_EQ(stage_name(Stage::TrainPolicy), "train-policy");
  EXPECT_THROW(parse_stage("train"), std::invalid_argument);
  EXPECT_NE(stage_seed(1, Stage::TrainEmbed), stage_seed(1, Stage::TrainPolicy));
  EXPECT_EQ(stage_seed(1, Stage::Cluster), stage_seed(1, Stage::Cluster));
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Pipeline, TinyFixtureEndToEndIsDeterministic) {
  const PipelineConfig cfg = load_config(kTinyConfig);
  const fs::path a = fresh_dir("tiny_a"), b = fresh_dir("tiny_b");
  run_all(cfg, a);
  run_all(cfg, b);
  for (const char* name : {"features.json", "gmm.json", "graph.tckg", "embeddings.bin", "policy.ckpt", "paths.jsonl",
                           "recommendations.jsonl", "metrics.json", "split.tsv"}) {
    ASSERT_TRUE(fs::exists(a / name)) << name;
    EXPECT_EQ(sha256_file(a / name), sha256_file(b / name)) << name;
  }
  const auto metrics = nlohmann::json::parse(slurp(a / "metrics.json"));
  EXPECT_EQ(metrics.at("users").get<int>(), 50);
  for (const char* k : {"ndcg", "recall", "precision", "hr"}) {
    EXPECT_GE(metrics.at(k).get<double>(), 0.0);
    EXPECT_LE(metrics.at(k).get<double>(), 100.0);
  }
  EXPECT_NO_THROW(verify_provenance(a, Stage::Evaluate));

  // rerunning a stage reproduces its artifact byte for byte
  const std::string before = sha256_file(a / "embeddings.bin");
  StageOptions opt;
  opt.out = a;
  run_stage(Stage::TrainEmbed, cfg, opt);
  EXPECT_EQ(sha256_file(a / "embeddings.bin"), before);

  // a different seed upstream leaves the downstream artifacts orphaned
  opt.seed = cfg.seed + 1;
  run_stage(Stage::TrainEmbed, cfg, opt);
  EXPECT_THROW(verify_provenance(a, Stage::Evaluate), ProvenanceError);
  opt.seed.reset();
  EXPECT_THROW(run_stage(Stage::Evaluate, cfg, opt), ProvenanceError);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Pipeline, RecommendBeforeTrainPolicyNamesTheStage) {
  const PipelineConfig cfg = load_config(kTinyConfig);
  const fs::path out = fresh_dir("early");
  StageOptions opt;
  opt.out = out;
  for (Stage s : {Stage::Features, Stage::Cluster, Stage::BuildGraph, Stage::TrainEmbed}) run_stage(s, cfg, opt);
  try {
    run_stage(Stage::Recommend, cfg, opt);
    FAIL() << "expected a missing-artifact error";
  } catch (const MissingArtifactError& e) {
    EXPECT_NE(std::string(e.what()).find("train-policy"), std::string::npos) << e.what();
  }

  const fs::path log = out / "cli.log";
  const std::string cmd = std::string("\"") + TPREC_CLI + "\" recommend --config \"" + kTinyConfig.string() + "\" --out \"" +
                          out.string() + "\" > \"" + log.string() + "\" 2>&1";
  EXPECT_NE(std::system(cmd.c_str()), 0);
  EXPECT_NE(slurp(log).find("train-policy"), std::string::npos) << slurp(log);
  fs::remove_all(out);
}

TEST(Pipeline, SummaryHelpers) {
  Split split;
  split.test = {{0, 1, Timestamp{30}}, {0, 2, Timestamp{10}}, {0, 3, Timestamp{20}}, {0, 4, Timestamp{40}}, {1, 1, Timestamp{5}}};
  const auto med = median_test_times(split);
  EXPECT_EQ(med.at(0).seconds, 20);  // lower median of four
  EXPECT_EQ(med.at(1).seconds, 5);

  std::map<std::uint32_t, UserRecommendations> recs;
  recs[0].items = {1, 9};
  recs[0].valid_paths = 12;
  recs[1].valid_paths = 3;
  EvaluateSection settings;
  const std::vector<ReviewRecord> reviews;
  const EvaluationSummary s = summarize(recs, split, reviews, settings);
  EXPECT_EQ(s.users, 2u);
  EXPECT_EQ(s.invalid_users, 1u);
  EXPECT_DOUBLE_EQ(s.ranking.hr, 0.5);
}
