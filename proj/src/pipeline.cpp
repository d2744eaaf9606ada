#include "tprec/pipeline.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include "tprec/parallel.hpp"

namespace tprec {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 8> kStageNames = {"synth",        "features",     "cluster",   "build-graph",
                                                         "train-embed",  "train-policy", "recommend", "evaluate"};

// Artifact file names, relative to the output directory.
constexpr const char* kSplit = "split.tsv";
constexpr const char* kFeatures = "features.json";
constexpr const char* kGmm = "gmm.json";
constexpr const char* kGraph = "graph.tckg";
constexpr const char* kGraphReport = "graph_report.json";
constexpr const char* kEmbeddings = "embeddings.bin";
constexpr const char* kPolicy = "policy.ckpt";
constexpr const char* kPaths = "paths.jsonl";
constexpr const char* kRecs = "recommendations.jsonl";
constexpr const char* kMetrics = "metrics.json";
constexpr const char* kSynthInteractions = "data/interactions.tsv";
constexpr const char* kSynthKg = "data/kg.tsv";
constexpr const char* kSynthReviews = "data/reviews.tsv";

constexpr int kManifestVersion = 1;

std::optional<Stage> producer_of(const std::string& artifact) {
  static const std::map<std::string, Stage> producers = {
      {kSynthInteractions, Stage::Synth}, {kSynthKg, Stage::Synth},       {kSynthReviews, Stage::Synth},
      {kSplit, Stage::Features},          {kFeatures, Stage::Features},   {kGmm, Stage::Cluster},
      {kGraph, Stage::BuildGraph},        {kGraphReport, Stage::BuildGraph}, {kEmbeddings, Stage::TrainEmbed},
      {kPolicy, Stage::TrainPolicy},      {kPaths, Stage::Recommend},     {kRecs, Stage::Recommend},
      {kMetrics, Stage::Evaluate}};
  const auto it = producers.find(artifact);
  if (it == producers.end()) return std::nullopt;
  return it->second;
}

struct StageRun {
  const PipelineConfig& config;
  fs::path out;
  std::uint64_t root_seed;
  json inputs = json::object();
  json outputs = json::object();
  json details = json::object();

  fs::path artifact(const char* name) const { return out / name; }

  // Upstream artifacts inside the output directory.
  void require(std::initializer_list<const char*> names) {
    std::vector<std::string> missing;
    for (const char* n : names)
      if (!fs::exists(artifact(n))) {
        const auto stage = producer_of(n);
        missing.push_back(std::string(n) + " (run the " + std::string(stage ? stage_name(*stage) : "?") + " stage)");
      }
    if (!missing.empty()) {
      std::string msg = "missing upstream artifacts in " + out.string() + ":";
      for (const auto& m : missing) msg += "\n  " + m;
      throw MissingArtifactError(msg);
    }
    for (const char* n : names) record_input(n, artifact(n));
  }

  void record_input(const std::string& name, const fs::path& path) {
    inputs[name] = {{"path", path.lexically_relative(out).string()}, {"sha256", sha256_file(path)}};
  }
  void record_output(const char* name) { outputs[name] = {{"sha256", sha256_file(artifact(name))}}; }
};

struct DataFiles {
  fs::path interactions, kg, reviews;
  bool from_synth = false;
};

fs::path resolve(const PipelineConfig& c, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || c.base_dir.empty() ? path : c.base_dir / path;
}

DataFiles data_files(const PipelineConfig& c, const fs::path& out) {
  DataFiles f;
  if (c.data.interactions.empty()) {
    f.from_synth = true;
    f.interactions = out / kSynthInteractions;
    if (!fs::exists(f.interactions)) {
      throw MissingArtifactError("missing " + f.interactions.string() +
                                 " (run the synth stage, or set data.interactions in the config)");
    }
    if (fs::exists(out / kSynthKg)) f.kg = out / kSynthKg;
    if (fs::exists(out / kSynthReviews)) f.reviews = out / kSynthReviews;
    return f;
  }
  f.interactions = resolve(c, c.data.interactions);
  if (!c.data.kg.empty()) f.kg = resolve(c, c.data.kg);
  if (!c.data.reviews.empty()) f.reviews = resolve(c, c.data.reviews);
  for (const auto* p : {&f.interactions, &f.kg, &f.reviews})
    if (!p->empty() && !fs::exists(*p)) throw std::runtime_error("data file not found: " + p->string());
  return f;
}

Dataset load_data(StageRun& run) {
  const DataFiles f = data_files(run.config, run.out);
  run.record_input("interactions", f.interactions);
  if (!f.kg.empty()) run.record_input("kg", f.kg);
  if (!f.reviews.empty()) run.record_input("reviews", f.reviews);
  return load_dataset(f.interactions, f.kg, f.reviews);
}

void write_json(const fs::path& path, const json& doc) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << doc.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return json::parse(in);
}

void require_format(const json& doc, const char* format, int version, const fs::path& path) {
  if (doc.value("format", "") != format) throw std::runtime_error(path.string() + " is not a " + format + " document");
  if (doc.value("version", -1) != version) throw std::runtime_error(path.string() + ": unsupported " + format + " version");
}

// ---- split file -----------------------------------------------------------

void write_split(const fs::path& path, const Split& split, const EntityDictionary& dict) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "# tprec-split v1\n";
  auto put = [&](const std::vector<InteractionRecord>& rows, const char* part) {
    for (const auto& r : rows)
      out << dict.names(EntityType::User)[r.user] << '\t' << dict.names(EntityType::Item)[r.item] << '\t' << r.time.seconds << '\t'
          << part << '\n';
  };
  put(split.train, "train");
  put(split.valid, "valid");
  put(split.test, "test");
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

Split read_split(const fs::path& path, const EntityDictionary& dict) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "# tprec-split v1") throw std::runtime_error(path.string() + " is not a tprec split file");
  Split s;
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    std::istringstream fields(line);
    std::string user, item, part;
    std::int64_t ts = 0;
    if (!std::getline(fields, user, '\t') || !std::getline(fields, item, '\t') || !(fields >> ts) || !(fields >> part))
      throw std::runtime_error(path.string() + ":" + std::to_string(n) + ": malformed split row");
    const InteractionRecord r{dict.lookup(EntityType::User, user), dict.lookup(EntityType::Item, item), Timestamp{ts}};
    if (part == "train") s.train.push_back(r);
    else if (part == "valid") s.valid.push_back(r);
    else if (part == "test") s.test.push_back(r);
    else throw std::runtime_error(path.string() + ":" + std::to_string(n) + ": unknown part '" + part + "'");
  }
  return s;
}

// ---- features file --------------------------------------------------------

json features_to_json(const FeatureTable& f) {
  json rows = json::array();
  for (std::size_t i = 0; i < f.rows.rows; ++i) {
    auto r = f.rows.row(i);
    rows.push_back(std::vector<double>(r.begin(), r.end()));
  }
  return json{{"format", "tprec-features"},
              {"version", 1},
              {"dims", kFeatureDims},
              {"calendar", {{"earliest_year", f.calendar.earliest_year}, {"earliest_day", f.calendar.earliest_day}}},
              {"series", {{"origin_day", f.series.origin_day}, {"counts", f.series.counts}}},
              {"days", f.days},
              {"rows", rows}};
}

FeatureTable features_from_json(const json& doc, const fs::path& path) {
  require_format(doc, "tprec-features", 1, path);
  FeatureTable f;
  doc.at("calendar").at("earliest_year").get_to(f.calendar.earliest_year);
  doc.at("calendar").at("earliest_day").get_to(f.calendar.earliest_day);
  doc.at("series").at("origin_day").get_to(f.series.origin_day);
  doc.at("series").at("counts").get_to(f.series.counts);
  doc.at("days").get_to(f.days);
  const auto& rows = doc.at("rows");
  f.rows = RowMatrix(rows.size(), kFeatureDims);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto v = rows[i].get<std::vector<double>>();
    if (v.size() != kFeatureDims) throw std::runtime_error(path.string() + ": feature row has wrong width");
    std::copy(v.begin(), v.end(), f.rows.row(i).begin());
  }
  return f;
}

GmmModel load_gmm(const fs::path& path) { return GmmModel::from_json(read_json(path)); }

PolicyShape policy_shape(const PipelineConfig& c, int input_dim) {
  PolicyShape s;
  s.input_dim = input_dim;
  s.hidden = c.policy.hidden;
  s.state_dim = c.policy.state_dim;
  s.actions = c.policy.reasoner.action_slots();
  s.sequence = c.policy.reasoner.sequence_length();
  s.encoder = c.policy.encoder;
  return s;
}

json hops_json(const Tckg& g, const EntityDictionary& dict, const std::vector<Hop>& hops) {
  json out = json::array();
  for (const Hop& h : hops) out.push_back({g.relations().name(h.relation), entity_ref(dict, g.entity(h.to))});
  return out;
}

// ---- stage bodies -----------------------------------------------------------

void stage_synth(StageRun& run) {
  SyntheticSpec spec = run.config.synth;
  spec.seed = stage_seed(run.root_seed, Stage::Synth);
  const SyntheticData data = generate_synthetic(spec);
  fs::create_directories(run.out / "data");
  write_interactions(run.artifact(kSynthInteractions), data.interactions, data.names[0], data.names[1]);
  write_kg(run.artifact(kSynthKg), data.static_triples, data.names);
  write_reviews(run.artifact(kSynthReviews), data.reviews, data.names);
  run.record_output(kSynthInteractions);
  run.record_output(kSynthKg);
  run.record_output(kSynthReviews);
  run.details = {{"interactions", data.interactions.size()}, {"reviews", data.reviews.size()}, {"triples", data.static_triples.size()}};
}

void stage_features(StageRun& run) {
  const Dataset ds = load_data(run);
  SplitSpec spec = run.config.split;
  spec.seed = stage_seed(run.root_seed, Stage::Features);
  const Split split = split_interactions(ds.interactions, spec);
  if (split.train.empty()) throw std::runtime_error("no training interactions after the split");
  const FeatureTable f = compute_features(ds.interactions, split.train);
  write_split(run.artifact(kSplit), split, ds.entities);
  write_json(run.artifact(kFeatures), features_to_json(f));
  run.record_output(kSplit);
  run.record_output(kFeatures);
  run.details = {{"train", split.train.size()},
                 {"valid", split.valid.size()},
                 {"test", split.test.size()},
                 {"excluded_users", split.excluded_users.size()},
                 {"feature_rows", f.rows.rows}};
}

void stage_cluster(StageRun& run) {
  run.require({kFeatures});
  const FeatureTable f = features_from_json(read_json(run.artifact(kFeatures)), run.artifact(kFeatures));
  const ClusterSearch search = cluster_days(f, run.config.clustering, stage_seed(run.root_seed, Stage::Cluster));
  json doc = search.model.to_json();
  doc["search"] = {{"evaluated", search.evaluated}, {"bic", search.bic_values}};
  write_json(run.artifact(kGmm), doc);
  run.record_output(kGmm);
  run.details = {{"clusters", search.best}, {"bic", search.model.bic_value}};
}

void stage_build_graph(StageRun& run) {
  run.require({kSplit, kFeatures, kGmm});
  const Dataset ds = load_data(run);
  const Split split = read_split(run.artifact(kSplit), ds.entities);
  const FeatureTable f = features_from_json(read_json(run.artifact(kFeatures)), run.artifact(kFeatures));
  const GmmModel gmm = load_gmm(run.artifact(kGmm));
  TimeAssigner times(gmm, f);
  const Tckg g = build_graph(ds, split, times);
  g.save(run.artifact(kGraph));
  const DegreeReport rep = degree_report(g);
  json per_relation = json::object();
  for (std::uint32_t r = 0; r < g.relations().forward_count(); ++r)
    per_relation[g.relations().name({r, false})] = rep.triples_per_relation[r];
  write_json(run.artifact(kGraphReport),
             {{"format", "tprec-graph-report"},
              {"version", 1},
              {"clusters", g.clusters()},
              {"nodes", g.node_count()},
              {"directed_edges", g.edge_count()},
              {"triples", rep.total_triples},
              {"duplicates_dropped", g.build_report().duplicates_dropped},
              {"max_out_degree", rep.max_out_degree},
              {"mean_out_degree", rep.mean_out_degree},
              {"triples_per_relation", per_relation}});
  run.record_output(kGraph);
  run.record_output(kGraphReport);
  run.details = {{"clusters", g.clusters()}, {"nodes", g.node_count()}, {"triples", rep.total_triples}};
}

void stage_train_embed(StageRun& run) {
  run.require({kGraph});
  const Tckg g = Tckg::load(run.artifact(kGraph));
  EmbeddingTrainConfig cfg = run.config.embedding;
  cfg.seed = stage_seed(run.root_seed, Stage::TrainEmbed);
  EmbeddingTrainLog log;
  const EmbeddingTable emb = train_embeddings(g, cfg, &log);
  emb.save(run.artifact(kEmbeddings));
  run.record_output(kEmbeddings);
  run.details = {{"epoch_loss", log.epoch_loss}, {"epoch_bias_loss", log.epoch_bias_loss}, {"clipped_batches", log.clipped_batches}};
}

void stage_train_policy(StageRun& run) {
  run.require({kGraph, kEmbeddings});
  const Tckg g = Tckg::load(run.artifact(kGraph));
  const EmbeddingTable emb = EmbeddingTable::load(run.artifact(kEmbeddings));
  const auto& pc = run.config.policy;
  const RewardModel rewards(g, emb, pc.reward);
  const ReasonerContext ctx{g, emb, rewards, pc.reasoner};
  const std::uint64_t seed = stage_seed(run.root_seed, Stage::TrainPolicy);
  PolicyCheckpoint ckpt;
  ckpt.params = PolicyParams::initialize(policy_shape(run.config, emb.dim()), pc.dropout, seed);
  ckpt.optimizer = AdamState::for_params(ckpt.params);
  ckpt.seed = seed;
  std::vector<std::uint32_t> users;
  for (std::uint32_t u = 0; u < g.count(EntityType::User); ++u)
    if (!g.history(u).empty()) users.push_back(u);
  if (users.empty()) throw std::runtime_error("graph has no users with training interactions");
  PolicyTrainConfig tc = pc.train;
  tc.seed = seed;
  PolicyTrainLog log;
  train_policy(ctx, users, ckpt.params, ckpt.optimizer, tc, &log);
  ckpt.epoch = tc.epochs;
  ckpt.save(run.artifact(kPolicy));
  run.record_output(kPolicy);
  run.details = {{"users", users.size()},
                 {"degenerate_users", rewards.degenerate_users()},
                 {"epoch_reward", log.epoch_reward},
                 {"skipped_batches", log.skipped_batches}};
}

void stage_recommend(StageRun& run) {
  run.require({kSplit, kFeatures, kGmm, kGraph, kEmbeddings, kPolicy});
  const Dataset ds = load_data(run);
  const Split split = read_split(run.artifact(kSplit), ds.entities);
  const FeatureTable f = features_from_json(read_json(run.artifact(kFeatures)), run.artifact(kFeatures));
  const GmmModel gmm = load_gmm(run.artifact(kGmm));
  const Tckg g = Tckg::load(run.artifact(kGraph));
  const EmbeddingTable emb = EmbeddingTable::load(run.artifact(kEmbeddings));
  const PolicyCheckpoint ckpt = PolicyCheckpoint::load(run.artifact(kPolicy));
  const auto& pc = run.config.policy;
  if (ckpt.params.shape != policy_shape(run.config, emb.dim()))
    throw std::runtime_error("policy checkpoint shape does not match the config; rerun train-policy");
  const RewardModel rewards(g, emb, pc.reward);
  const ReasonerContext ctx{g, emb, rewards, pc.reasoner};
  TimeAssigner times(gmm, f);
  const TimeEncoder enc = times.encoder();

  const auto when = median_test_times(split);
  std::vector<std::uint32_t> users;
  for (const auto& [u, t] : when) users.push_back(u);
  const auto beams = kernels::beam_search_parallel(ctx, ckpt.params, users, run.config.recommend.beam);

  std::ofstream paths_out(run.artifact(kPaths), std::ios::trunc), recs_out(run.artifact(kRecs), std::ios::trunc);
  if (!paths_out || !recs_out) throw std::runtime_error("cannot write recommendation outputs in " + run.out.string());
  RecommendSettings settings;
  settings.beam = run.config.recommend.beam;
  std::size_t rows = 0;
  for (std::size_t i = 0; i < users.size(); ++i) {
    const std::uint32_t u = users[i];
    const std::string& uname = ds.entities.names(EntityType::User)[u];
    for (const PathResult& p : beams[i]) {
      json terminal = p.valid ? json(ds.entities.names(EntityType::Item)[g.entity(p.terminal).index]) : json(nullptr);
      paths_out << json{{"user", uname}, {"hops", hops_json(g, ds.entities, p.hops)}, {"path_score", p.score},
                        {"terminal_item", terminal}, {"valid", p.valid}}
                       .dump()
                << '\n';
    }
    const Timestamp t = run.config.recommend.time ? Timestamp{*run.config.recommend.time} : when.at(u);
    const RecResult rec = recommend_from_paths(ctx, enc, {u, t, run.config.recommend.top_k}, beams[i], settings);
    for (std::size_t r = 0; r < rec.items.size(); ++r) {
      const RankedItem& it = rec.items[r];
      recs_out << json{{"user", uname},
                       {"recommend_time", t.seconds},
                       {"rank", r + 1},
                       {"item", ds.entities.names(EntityType::Item)[g.entity(it.item).index]},
                       {"score", it.score},
                       {"path", hops_json(g, ds.entities, it.path.hops)},
                       {"path_score", it.path.score}}
                          .dump()
               << '\n';
      ++rows;
    }
  }
  paths_out.close();
  recs_out.close();
  if (!paths_out || !recs_out) throw std::runtime_error("write failed in " + run.out.string());
  run.record_output(kPaths);
  run.record_output(kRecs);
  run.details = {{"users", users.size()}, {"recommendations", rows}, {"invalid_users", invalid_user_count(beams)}};
}

void stage_evaluate(StageRun& run) {
  run.require({kSplit, kRecs, kPaths});
  verify_provenance(run.out, Stage::Recommend);
  const Dataset ds = load_data(run);
  const Split split = read_split(run.artifact(kSplit), ds.entities);
  const int k = run.config.evaluate.k;

  std::map<std::uint32_t, UserRecommendations> recs;
  for (const auto& [u, t] : median_test_times(split)) recs[u];
  {
    std::ifstream in(run.artifact(kRecs));
    std::string line;
    std::map<std::uint32_t, std::vector<std::pair<int, std::uint32_t>>> ranked;
    while (std::getline(in, line)) {
      const json r = json::parse(line);
      const auto u = ds.entities.lookup(EntityType::User, r.at("user").get<std::string>());
      const auto item = ds.entities.lookup(EntityType::Item, r.at("item").get<std::string>());
      const int rank = r.at("rank").get<int>();
      ranked[u].push_back({rank, item});
      if (rank > k) continue;
      for (const auto& hop : r.at("path")) {
        const auto ref = hop.at(1).get<std::string>();
        const auto colon = ref.find(':');
        if (parse_entity_type(ref.substr(0, colon)) == EntityType::Feature)
          recs[u].path_words.insert(ds.entities.lookup(EntityType::Feature, ref.substr(colon + 1)));
      }
    }
    for (auto& [u, list] : ranked) {
      std::sort(list.begin(), list.end());
      for (const auto& [rank, item] : list) recs[u].items.push_back(item);
    }
  }
  {
    std::ifstream in(run.artifact(kPaths));
    std::string line;
    while (std::getline(in, line)) {
      const json p = json::parse(line);
      if (p.at("valid").get<bool>()) ++recs[ds.entities.lookup(EntityType::User, p.at("user").get<std::string>())].valid_paths;
    }
  }
  const EvaluationSummary s = summarize(recs, split, ds.reviews, run.config.evaluate);
  auto pct = [](double v) { return 100.0 * v; };
  const json report{{"format", "tprec-metrics"},
                    {"version", 1},
                    {"dataset", run.config.dataset},
                    {"split", run.config.split.mode == SplitMode::Normal ? "normal" : "sequential"},
                    {"K", k},
                    {"ndcg", pct(s.ranking.ndcg)},
                    {"recall", pct(s.ranking.recall)},
                    {"precision", pct(s.ranking.precision)},
                    {"hr", pct(s.ranking.hr)},
                    {"users", s.users},
                    {"invalid_users", s.invalid_users},
                    {"explanation", {{"recall", pct(s.explanation.recall)}, {"precision", pct(s.explanation.precision)}, {"f1", pct(s.explanation.f1)}}}};
  write_json(run.artifact(kMetrics), report);
  run.record_output(kMetrics);
  run.details = report;
}

void verify_recursive(const fs::path& out, Stage stage, std::set<Stage>& done) {
  if (!done.insert(stage).second) return;
  const fs::path mpath = manifest_path(out, stage);
  if (!fs::exists(mpath)) throw ProvenanceError("no manifest for the " + std::string(stage_name(stage)) + " stage");
  const json m = read_json(mpath);
  require_format(m, "tprec-manifest", kManifestVersion, mpath);
  for (const auto& [name, rec] : m.at("inputs").items()) {
    const fs::path p = out / rec.at("path").get<std::string>();
    const std::string recorded = rec.at("sha256").get<std::string>();
    if (!fs::exists(p) || sha256_file(p) != recorded) {
      throw ProvenanceError("mixed provenance: " + p.string() + " changed after the " + std::string(stage_name(stage)) +
                            " stage read it; rerun the downstream stages");
    }
    const auto producer = producer_of(rec.at("path").get<std::string>());
    if (!producer) continue;
    const fs::path up = manifest_path(out, *producer);
    if (!fs::exists(up)) throw ProvenanceError("no manifest for the " + std::string(stage_name(*producer)) + " stage");
    const json um = read_json(up);
    const auto& outs = um.at("outputs");
    const std::string rel = rec.at("path").get<std::string>();
    if (!outs.contains(rel) || outs.at(rel).at("sha256").get<std::string>() != recorded) {
      throw ProvenanceError("mixed provenance: " + rel + " read by " + std::string(stage_name(stage)) +
                            " was not produced by the recorded " + std::string(stage_name(*producer)) + " run");
    }
    verify_recursive(out, *producer, done);
  }
}

}  // namespace

// ---------------------------------------------------------------------------

std::string_view stage_name(Stage s) { return kStageNames[static_cast<std::size_t>(s)]; }

Stage parse_stage(std::string_view name) {
  for (std::size_t i = 0; i < kStageNames.size(); ++i)
    if (kStageNames[i] == name) return static_cast<Stage>(i);
  throw std::invalid_argument("unknown stage '" + std::string(name) + "'");
}

const std::vector<Stage>& all_stages() {
  static const std::vector<Stage> v = {Stage::Synth,      Stage::Features,    Stage::Cluster,   Stage::BuildGraph,
                                       Stage::TrainEmbed, Stage::TrainPolicy, Stage::Recommend, Stage::Evaluate};
  return v;
}

std::uint64_t stage_seed(std::uint64_t root, Stage s) { return derive_seed(root, 0x57A6E, static_cast<std::uint64_t>(s)); }

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) throw std::runtime_error("sha256 failed");
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return hex.str();
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::array<char, 1 << 16> buf;
  while (in) {
    in.read(buf.data(), buf.size());
    EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return hex.str();
}

Dataset dataset_from_synthetic(const SyntheticData& data) {
  Dataset ds;
  for (std::size_t t = 0; t < kEntityTypeCount; ++t)
    for (const auto& n : data.names[t]) ds.entities.intern(static_cast<EntityType>(t), n);
  ds.interactions = data.interactions;
  ds.reviews = data.reviews;
  ds.static_triples = data.static_triples;
  return ds;
}

FeatureTable compute_features(std::span<const InteractionRecord> all, std::span<const InteractionRecord> train) {
  if (train.empty()) throw std::invalid_argument("no training interactions to featurize");
  std::vector<Timestamp> every, train_ts;
  for (const auto& r : all) every.push_back(r.time);
  for (const auto& r : train) train_ts.push_back(r.time);
  FeatureTable f;
  f.calendar = CalendarContext::from_timestamps(every);
  f.series = DailyCountSeries::from_timestamps(train_ts);
  std::set<std::int64_t> days;
  for (const auto& t : train_ts) days.insert(t.day());
  f.days.assign(days.begin(), days.end());
  const TrendTable trends(f.series);
  f.rows = RowMatrix(f.days.size(), kFeatureDims);
  for (std::size_t i = 0; i < f.days.size(); ++i) {
    const TemporalFeature tf = temporal_feature(Timestamp{f.days[i] * kSecondsPerDay}, f.calendar, trends);
    std::copy(tf.combined.begin(), tf.combined.end(), f.rows.row(i).begin());
  }
  return f;
}

ClusterSearch cluster_days(const FeatureTable& features, const ClusteringSettings& s, std::uint64_t seed) {
  const int rows = static_cast<int>(features.rows.rows);
  int hi = std::min(s.max_clusters, rows);
  int lo = std::min(s.min_clusters, hi);
  if (hi < s.max_clusters) spdlog::warn("only {} distinct days; cluster search capped at L={}", rows, hi);
  if (hi < 1) throw std::runtime_error("no feature rows to cluster");
  GmmConfig cfg;
  cfg.max_iter = s.max_iter;
  cfg.tol = s.tol;
  cfg.variance_floor = s.variance_floor;
  cfg.seed = seed;
  return select_cluster_count(features.rows, lo, hi, cfg);
}

TimeAssigner::TimeAssigner(const GmmModel& gmm, const FeatureTable& features)
    : gmm_(gmm), calendar_(features.calendar), trends_(features.series) {}

int TimeAssigner::cluster(Timestamp t) {
  const std::int64_t day = std::max(t.day(), calendar_.earliest_day);
  const auto it = cache_.find(day);
  if (it != cache_.end()) return it->second;
  const TemporalFeature f = temporal_feature(Timestamp{day * kSecondsPerDay}, calendar_, trends_);
  const int c = assign_relation(posterior(gmm_, f.combined));
  cache_.emplace(day, c);
  return c;
}

Tckg build_graph(const Dataset& ds, const Split& split, TimeAssigner& times) {
  TckgInput in;
  in.clusters = times.encoder().gmm.components;
  for (std::size_t t = 0; t < kEntityTypeCount; ++t) {
    in.entity_counts[t] = ds.entities.count(static_cast<EntityType>(t));
    in.names[t] = ds.entities.names(static_cast<EntityType>(t));
  }
  struct Key {
    std::uint32_t user, item;
    std::int64_t ts;
    bool operator<(const Key& o) const { return std::tie(user, item, ts) < std::tie(o.user, o.item, o.ts); }
  };
  std::set<Key> train_keys;
  for (const auto& r : split.train) {
    in.interactions.push_back({r.user, r.item, r.time, times.cluster(r.time)});
    train_keys.insert({r.user, r.item, r.time.seconds});
  }
  for (const auto& rv : ds.reviews) {
    if (!train_keys.count({rv.user, rv.item, rv.time.seconds})) continue;
    in.reviews.push_back({rv.user, rv.item, rv.time, times.cluster(rv.time), rv.words});
  }
  in.static_triples = ds.static_triples;
  return build_tckg(in);
}

std::map<std::uint32_t, Timestamp> median_test_times(const Split& split) {
  std::map<std::uint32_t, std::vector<std::int64_t>> per_user;
  for (const auto& r : split.test) per_user[r.user].push_back(r.time.seconds);
  std::map<std::uint32_t, Timestamp> out;
  for (auto& [u, ts] : per_user) {
    std::sort(ts.begin(), ts.end());
    out[u] = Timestamp{ts[(ts.size() - 1) / 2]};
  }
  return out;
}

UserRecommendations to_user_recommendations(const Tckg& g, const RecResult& rec, std::span<const PathResult> paths, int k) {
  UserRecommendations out;
  out.valid_paths = count_valid(paths);
  for (std::size_t r = 0; r < rec.items.size(); ++r) {
    out.items.push_back(g.entity(rec.items[r].item).index);
    if (static_cast<int>(r) >= k) continue;
    for (const Hop& h : rec.items[r].path.hops)
      if (g.is_type(h.to, EntityType::Feature)) out.path_words.insert(g.entity(h.to).index);
  }
  return out;
}

EvaluationSummary summarize(const std::map<std::uint32_t, UserRecommendations>& recs, const Split& split,
                            std::span<const ReviewRecord> reviews, const EvaluateSection& settings) {
  std::map<std::uint32_t, std::set<std::uint32_t>> relevant;
  for (const auto& r : split.test) relevant[r.user].insert(r.item);
  std::map<std::uint32_t, std::vector<std::uint32_t>> ranked;
  std::map<std::uint32_t, std::set<std::uint32_t>> words;
  for (const auto& [u, rec] : recs) {
    ranked[u] = rec.items;
    words[u] = rec.path_words;
  }
  const GroundTruthReasons gt = build_ground_truth(reviews, settings.filter);
  std::map<std::uint32_t, std::set<std::uint32_t>> reasons;
  EvaluationSummary s;
  for (const auto& [u, items] : relevant) {
    const std::vector<std::uint32_t> list(items.begin(), items.end());
    reasons[u] = gt.user_reasons(u, list);
    const auto it = recs.find(u);
    if (it == recs.end() || it->second.valid_paths < settings.invalid_threshold) ++s.invalid_users;
  }
  s.ranking = ranking_metrics(ranked, relevant, settings.k);
  s.explanation = explanation_metrics(words, reasons);
  s.users = relevant.size();
  return s;
}

fs::path manifest_path(const fs::path& out_dir, Stage stage) {
  return out_dir / "manifests" / (std::string(stage_name(stage)) + ".json");
}

void verify_provenance(const fs::path& out_dir, Stage stage) {
  std::set<Stage> done;
  verify_recursive(out_dir, stage, done);
}

StageResult run_stage(Stage stage, const PipelineConfig& config, const StageOptions& options) {
  configure_threads_from_env();
  const fs::path out = options.out ? *options.out : resolve(config, config.out_dir);
  fs::create_directories(out / "manifests");
  StageRun run{config, out, options.seed.value_or(config.seed)};
  spdlog::info("stage {} -> {}", stage_name(stage), out.string());
  const auto t0 = std::chrono::steady_clock::now();
  switch (stage) {
    case Stage::Synth: stage_synth(run); break;
    case Stage::Features: stage_features(run); break;
    case Stage::Cluster: stage_cluster(run); break;
    case Stage::BuildGraph: stage_build_graph(run); break;
    case Stage::TrainEmbed: stage_train_embed(run); break;
    case Stage::TrainPolicy: stage_train_policy(run); break;
    case Stage::Recommend: stage_recommend(run); break;
    case Stage::Evaluate: stage_evaluate(run); break;
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  StageResult result;
  result.stage = stage;
  result.seconds = seconds;
  for (const auto& [name, v] : run.outputs.items()) result.outputs.push_back(out / name);
  result.manifest = manifest_path(out, stage);
  json config_doc = config_to_json(config);
  write_json(result.manifest, {{"format", "tprec-manifest"},
                               {"version", kManifestVersion},
                               {"stage", stage_name(stage)},
                               {"seed", run.root_seed},
                               {"stage_seed", stage_seed(run.root_seed, stage)},
                               {"threads", worker_count()},
                               {"config", config_doc},
                               {"inputs", run.inputs},
                               {"outputs", run.outputs},
                               {"timings", {{"seconds", seconds}}},
                               {"details", run.details}});
  spdlog::info("stage {} done in {:.2f}s", stage_name(stage), seconds);
  return result;
}

}  // namespace tprec
