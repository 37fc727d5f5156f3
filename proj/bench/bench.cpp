// Serial reference vs OpenMP kernels. Run with OMP_NUM_THREADS to compare.

#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

#include "confwave/control.hpp"
#include "confwave/gcc.hpp"
#include "confwave/geometry.hpp"

using namespace confwave;

namespace {

Exec policy(const benchmark::State& st) { return st.range(1) ? Exec::Parallel : Exec::Serial; }

std::vector<double> random_vector(std::size_t n) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  std::vector<double> v(n);
  for (double& x : v) x = nd(rng);
  return v;
}

Grid bench_grid(int n) { return n > 100 ? Grid::unit(2, n) : Grid::unit(3, n); }

void BM_CsrApply(benchmark::State& st) {
  Grid g = bench_grid(static_cast<int>(st.range(0)));
  Csr A = assemble_laplace_beltrami(g, CoefficientSet(g), true).matrix;
  std::vector<double> x = random_vector(g.size()), y(g.size());
  for (auto _ : st) {
    if (policy(st) == Exec::Serial)
      kernels::csr_apply_serial(A, x.data(), y.data());
    else
      kernels::csr_apply_parallel(A, x.data(), y.data());
    benchmark::DoNotOptimize(y.data());
  }
  st.SetItemsProcessed(st.iterations() * static_cast<long>(g.size()));
}

void BM_LeapfrogStep(benchmark::State& st) {
  Grid g = bench_grid(static_cast<int>(st.range(0)));
  Csr A = assemble_laplace_beltrami(g, CoefficientSet(g), true).interior_block(g);
  const std::size_t n = g.interior().size();
  std::vector<double> cur = random_vector(n), prev = random_vector(n), next(n);
  for (auto _ : st) {
    kernels::leapfrog_step(policy(st), A, nullptr, cur.data(), nullptr, prev.data(), 1e-4, next.data());
    benchmark::DoNotOptimize(next.data());
  }
  st.SetItemsProcessed(st.iterations() * static_cast<long>(n));
}

void BM_HumGramApply(benchmark::State& st) {
  Grid g = Grid::unit(2, static_cast<int>(st.range(0)));
  HumSolver s(ControlProblem{g, CoefficientSet(g)});
  Eigen::VectorXd y = Eigen::VectorXd::Random(2 * s.n_interior());
  for (auto _ : st) benchmark::DoNotOptimize(s.apply_hum_gram(y, policy(st)));
}

void BM_RaySweep(benchmark::State& st) {
  Grid g = Grid::unit(2, 33);
  CoefficientSet cs(g);
  cs.c = sample(g, [](const Vec3& x) { return 1.0 + 0.2 * std::exp(-20 * ((x[0] - 0.5) * (x[0] - 0.5) + (x[1] - 0.5) * (x[1] - 0.5))); });
  GccOptions o;
  o.points_per_axis = static_cast<int>(st.range(0));
  o.ray.record_path = false;
  for (auto _ : st) benchmark::DoNotOptimize(estimate_control_time(g, cs, o, policy(st)).tau_est);
}

}  // namespace

// second argument: 0 serial reference, 1 OpenMP
BENCHMARK(BM_CsrApply)->ArgsProduct({{24, 512}, {0, 1}});
BENCHMARK(BM_LeapfrogStep)->ArgsProduct({{24, 512}, {0, 1}});
BENCHMARK(BM_HumGramApply)->ArgsProduct({{24}, {0, 1}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RaySweep)->ArgsProduct({{6}, {0, 1}})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
