#include <benchmark/benchmark.h>

#include "evorec/common.hpp"
#include "evorec/diagnosis.hpp"
#include "evorec/metrics.hpp"
#include "evorec/models.hpp"

using namespace evorec;

namespace {

Matrix random_matrix(size_t rows, size_t cols, uint64_t seed) {
  Matrix m(rows, cols);
  Rng rng(seed);
  for (auto& v : m.data) v = rng.uniform(-1, 1);
  return m;
}

void BM_EmbeddingCollapse(benchmark::State& state) {
  auto m = random_matrix(static_cast<size_t>(state.range(0)), 32, 7);
  for (auto _ : state) {
    auto r = probe_embedding_collapse(m, 512, 7);
    benchmark::DoNotOptimize(r.value);
  }
}
BENCHMARK(BM_EmbeddingCollapse)->Arg(128)->Arg(512)->Arg(1024);

void BM_RankTarget(benchmark::State& state) {
  Rng rng(11);
  std::map<ItemId, double> scores;
  for (int i = 0; i < state.range(0); ++i) {
    scores["i" + std::to_string(i)] = rng.real01();
  }
  const ItemId target = "i0";
  for (auto _ : state) {
    auto r = rank_target(scores, target);
    benchmark::DoNotOptimize(r.target_rank);
  }
}
BENCHMARK(BM_RankTarget)->Arg(100)->Arg(1000);

void BM_BprPairLoss(benchmark::State& state) {
  const size_t dim = static_cast<size_t>(state.range(0));
  Rng rng(3);
  std::vector<double> u(dim), p(dim), n(dim), gu(dim), gp(dim), gn(dim);
  for (size_t i = 0; i < dim; ++i) {
    u[i] = rng.uniform(-1, 1);
    p[i] = rng.uniform(-1, 1);
    n[i] = rng.uniform(-1, 1);
  }
  for (auto _ : state) {
    double loss = bpr_pair_loss(u.data(), p.data(), n.data(), dim, gu.data(), gp.data(), gn.data());
    benchmark::DoNotOptimize(loss);
  }
}
BENCHMARK(BM_BprPairLoss)->Arg(32)->Arg(128);

}  // namespace

BENCHMARK_MAIN();
