// Serial versus OpenMP timings of the parallel kernels. Argument 0 selects the
// serial reference, 1 the OpenMP backend.

#include "hwsched/ctmc.hpp"
#include "hwsched/diffusion.hpp"
#include "hwsched/hjb.hpp"
#include "hwsched/io.hpp"

#include <benchmark/benchmark.h>

namespace {

using namespace hwsched;

const ModelFile& n_model() {
    static const ModelFile f = load_model(std::string(HWSCHED_FIXTURES) + "/n_model.json");
    return f;
}

Backend backend_of(const benchmark::State& state) { return state.range(0) == 0 ? Backend::serial : Backend::openmp; }

Grid square(std::size_t n) { return Grid({GridAxis{-4.0, 4.0, n}, GridAxis{-4.0, 4.0, n}}); }

void BM_mc_cost(benchmark::State& state) {
    const auto& f = n_model();
    const TreeDynamics dyn(f.model);
    const std::vector<double> x0{1.0, -0.5};
    McOptions o;
    o.paths = 2000;
    o.horizon = 4.0;
    o.dt = 1e-2;
    o.backend = backend_of(state);
    for (auto _ : state) benchmark::DoNotOptimize(mc_cost(dyn, *f.cost, x0, Policy(StaticPriority{0, 0}), o).mean);
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(o.paths));
}
BENCHMARK(BM_mc_cost)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_hjb_jacobi(benchmark::State& state) {
    const auto& f = n_model();
    const TreeDynamics dyn(f.model);
    HjbOptions o;
    o.boundary = BoundaryMode::extrapolate;
    o.sweep = SweepKind::jacobi;
    o.tolerance = 1e-6;
    o.backend = backend_of(state);
    const auto grid = square(61);
    for (auto _ : state) benchmark::DoNotOptimize(solve_hjb(dyn, *f.cost, grid, o).report.iterations);
}
BENCHMARK(BM_hjb_jacobi)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_extract_policy(benchmark::State& state) {
    const auto& f = n_model();
    const TreeDynamics dyn(f.model);
    HjbOptions o;
    o.boundary = BoundaryMode::extrapolate;
    o.sweep = SweepKind::gauss_seidel;
    const auto sol = solve_hjb(dyn, *f.cost, square(201), o);
    for (auto _ : state) benchmark::DoNotOptimize(extract_policy(sol.value, dyn, *f.cost, backend_of(state)).controls);
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(sol.value.grid.size()));
}
BENCHMARK(BM_extract_policy)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_ctmc_samples(benchmark::State& state) {
    const auto& m = n_model().model;
    ScalingSpec sc;
    sc.n = 100;
    const std::vector<double> x0{0.0, 0.0}, times{0.5, 1.0};
    const auto rule = static_priority_rule(m, 0, 0);
    for (auto _ : state) benchmark::DoNotOptimize(ctmc_samples(m, sc, rule, x0, times, 200, 3, backend_of(state)).data);
    state.SetItemsProcessed(state.iterations() * 200);
}
BENCHMARK(BM_ctmc_samples)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
