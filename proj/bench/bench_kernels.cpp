// Serial reference vs OpenMP version of each hot kernel.
// Thread count comes from TPREC_THREADS (default: OpenMP default).

#include <benchmark/benchmark.h>

#include "fixtures.hpp"
#include "tprec/parallel.hpp"
#include "tprec/path_reasoner.hpp"
#include "tprec/time_clustering.hpp"

using namespace tprec;

namespace {

RowMatrix random_rows(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  RowMatrix m(rows, cols);
  Rng rng(seed);
  std::normal_distribution<double> n(0, 1);
  for (double& x : m.data) x = n(rng);
  return m;
}

struct GmmData {
  RowMatrix x = random_rows(20000, 25, 1);
  GmmModel model;
  GmmData() {
    GmmConfig cfg;
    cfg.seed = 2;
    cfg.max_iter = 5;
    model = fit_gmm(x, 8, cfg);
  }
};

const GmmData& gmm_data() {
  static const GmmData d;
  return d;
}

tprec::testing::GraphSize big_graph() {
  tprec::testing::GraphSize s;
  s.users = 200;
  s.items = 300;
  s.features = 100;
  s.brands = 20;
  s.categories = 20;
  s.per_user = 15;
  s.clusters = 4;
  return s;
}

struct GraphData {
  Tckg graph = tprec::testing::random_tckg(3, big_graph());
  EmbeddingTable emb = tprec::testing::random_embeddings(graph, 64, 3);
  std::vector<kernels::TrainingExample> batch;
  GraphData() {
    const auto triples = forward_triples(graph);
    Rng rng(4);
    for (std::size_t i = 0; i < triples.size(); ++i) {
      const NodeTriple neg = sample_negative(graph, triples[i], rng);
      batch.push_back({triples[i], neg.tail, graph.relations().is_timed(triples[i].relation)});
    }
  }
};

const GraphData& graph_data() {
  static const GraphData d;
  return d;
}

template <bool Parallel>
void BM_GmmLogJoint(benchmark::State& state) {
  configure_threads_from_env();
  const auto& d = gmm_data();
  RowMatrix out;
  for (auto _ : state) {
    if constexpr (Parallel) kernels::gmm_log_joint_parallel(d.model, d.x, out);
    else kernels::gmm_log_joint_serial(d.model, d.x, out);
    benchmark::DoNotOptimize(out.data.data());
  }
}

template <bool Parallel>
void BM_NormalizeLogRows(benchmark::State& state) {
  configure_threads_from_env();
  const auto& d = gmm_data();
  RowMatrix joint;
  kernels::gmm_log_joint_serial(d.model, d.x, joint);
  for (auto _ : state) {
    state.PauseTiming();
    RowMatrix m = joint;
    state.ResumeTiming();
    Vec l = Parallel ? kernels::normalize_log_rows_parallel(m) : kernels::normalize_log_rows_serial(m);
    benchmark::DoNotOptimize(l.data());
  }
}

template <bool Parallel>
void BM_EmbeddingGrads(benchmark::State& state) {
  configure_threads_from_env();
  const auto& d = graph_data();
  for (auto _ : state) {
    auto g = Parallel ? kernels::embedding_grads_parallel(d.emb, d.batch) : kernels::embedding_grads_serial(d.emb, d.batch);
    benchmark::DoNotOptimize(g.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(d.batch.size()));
}

struct BeamData {
  const GraphData& g = graph_data();
  RewardModel rm{g.graph, g.emb, RewardMode::Personalized};
  ReasonerContext ctx{g.graph, g.emb, rm, ReasonerConfig{}};
  PolicyParams params;
  std::vector<std::uint32_t> users;
  std::vector<PersonalizedRelation> relations;
  BeamData() {
    PolicyShape shape;
    shape.input_dim = 64;
    shape.hidden = 64;
    shape.state_dim = 64;
    shape.actions = ctx.config.action_slots();
    shape.sequence = ctx.config.sequence_length();
    params = PolicyParams::initialize(shape, 0.1, 6);
    for (std::uint32_t u = 0; u < 32; ++u) users.push_back(u);
    for (std::uint32_t u = 0; u < g.graph.count(EntityType::User); ++u) relations.push_back(rm.relation(u));
  }
};

const BeamData& beam_data() {
  static const BeamData d;
  return d;
}

template <bool Parallel>
void BM_BeamSearch(benchmark::State& state) {
  configure_threads_from_env();
  const auto& d = beam_data();
  const std::vector<int> sizes{25, 5, 1};
  for (auto _ : state) {
    auto r = Parallel ? kernels::beam_search_parallel(d.ctx, d.params, d.users, sizes)
                      : kernels::beam_search_serial(d.ctx, d.params, d.users, sizes);
    benchmark::DoNotOptimize(r.data());
  }
}

template <bool Parallel>
void BM_RewardNormalizers(benchmark::State& state) {
  configure_threads_from_env();
  const auto& d = beam_data();
  for (auto _ : state) {
    auto n = Parallel ? kernels::reward_normalizers_parallel(d.g.graph, d.g.emb, d.relations)
                      : kernels::reward_normalizers_serial(d.g.graph, d.g.emb, d.relations);
    benchmark::DoNotOptimize(n.data());
  }
}

}  // namespace

BENCHMARK(BM_GmmLogJoint<false>)->Name("gmm_log_joint/serial");
BENCHMARK(BM_GmmLogJoint<true>)->Name("gmm_log_joint/parallel");
BENCHMARK(BM_NormalizeLogRows<false>)->Name("normalize_log_rows/serial");
BENCHMARK(BM_NormalizeLogRows<true>)->Name("normalize_log_rows/parallel");
BENCHMARK(BM_EmbeddingGrads<false>)->Name("embedding_grads/serial");
BENCHMARK(BM_EmbeddingGrads<true>)->Name("embedding_grads/parallel");
BENCHMARK(BM_BeamSearch<false>)->Name("beam_search/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BeamSearch<true>)->Name("beam_search/parallel")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RewardNormalizers<false>)->Name("reward_normalizers/serial");
BENCHMARK(BM_RewardNormalizers<true>)->Name("reward_normalizers/parallel");

BENCHMARK_MAIN();
