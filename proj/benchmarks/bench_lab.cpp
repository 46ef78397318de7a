// Microbenchmarks for the hot paths: polytope slicing / centroid extraction
// (scales exponentially in the simplex dimension) and population DPO loss /
// gradient evaluation (the inner loop of every training run).

#include <benchmark/benchmark.h>

#include <cstdint>

#include "preflab/dpo.hpp"
#include "preflab/geometry.hpp"
#include "preflab/instance.hpp"
#include "preflab/rng.hpp"
#include "preflab/train.hpp"

namespace {

using preflab::MatrixXd;
using preflab::VectorXd;

// Random rank-N constraint over the D-simplex with a feasible rhs.
struct SliceFixture {
  MatrixXd theta;
  VectorXd rhs;
  SliceFixture(int dim, int latent, std::uint64_t seed) {
    preflab::Rng rng(preflab::derive_seed(seed, 42));
    theta.resize(latent, dim + 1);
    for (int i = 0; i < latent; ++i)
      for (int j = 0; j < dim + 1; ++j) theta(i, j) = rng.normal();
    const VectorXd interior = VectorXd::Constant(dim + 1, 1.0 / (dim + 1));
    rhs = theta * interior;
  }
};

void BM_EnumerateSliceVertices(benchmark::State& state) {
  const int dim = static_cast<int>(state.range(0));
  const SliceFixture fx(dim, dim / 2 + 1, 7);
  for (auto _ : state) {
    auto slice = preflab::geometry::enumerate_slice_vertices_rhs(fx.theta, fx.rhs);
    benchmark::DoNotOptimize(slice.vertices.size());
  }
}
BENCHMARK(BM_EnumerateSliceVertices)->Arg(3)->Arg(6)->Arg(9)->Arg(12);

void BM_PolytopeCentroid(benchmark::State& state) {
  const int dim = static_cast<int>(state.range(0));
  const SliceFixture fx(dim, dim / 2 + 1, 7);
  const auto slice = preflab::geometry::enumerate_slice_vertices_rhs(fx.theta, fx.rhs);
  for (auto _ : state) {
    VectorXd c = preflab::geometry::polytope_centroid(slice);
    benchmark::DoNotOptimize(c.sum());
  }
}
BENCHMARK(BM_PolytopeCentroid)->Arg(3)->Arg(5)->Arg(7);

struct TrainFixture {
  preflab::InstanceBundle bundle = preflab::generate_instance(preflab::InstanceSizes{}, 1.0, 3);
  preflab::WeightedPreferences cells = preflab::population_cells(preflab::proxy_process(bundle));
};

void BM_PopulationLoss(benchmark::State& state) {
  const TrainFixture fx;
  const auto rows = preflab::log_rows_of(fx.bundle.fp);
  for (auto _ : state) {
    double loss = preflab::dpo_loss_cells(rows, fx.bundle.pi_ref, fx.cells, 1.0);
    benchmark::DoNotOptimize(loss);
  }
}
BENCHMARK(BM_PopulationLoss);

void BM_PopulationGradient(benchmark::State& state) {
  const TrainFixture fx;
  const auto wrt = preflab::ComponentSet::from_names({"tau", "theta", "decoder"});
  for (auto _ : state) {
    auto grads =
        preflab::dpo_gradient(fx.bundle.fp, nullptr, fx.bundle.pi_ref, fx.cells, 1.0, wrt);
    benchmark::DoNotOptimize(grads.tau.sum());
  }
}
BENCHMARK(BM_PopulationGradient);

void BM_Stage1Short(benchmark::State& state) {
  const TrainFixture fx;
  preflab::TrainConfig cfg;
  cfg.latent_dim = fx.bundle.sizes.latent_dim;
  cfg.max_steps = 10;
  cfg.grad_tol = 0.0;
  cfg.seed = 11;
  const preflab::DataProcess g = preflab::proxy_process(fx.bundle);
  for (auto _ : state) {
    auto out = preflab::train_stage1_population(g, fx.bundle.pi_ref,
                                                fx.bundle.sizes.simplex_dim, cfg);
    benchmark::DoNotOptimize(out.report.final_loss);
  }
}
BENCHMARK(BM_Stage1Short);

}  // namespace

BENCHMARK_MAIN();
