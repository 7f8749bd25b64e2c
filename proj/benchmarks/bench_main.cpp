#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "mrm/partition.hpp"
#include "mrm/syngen.hpp"
#include "mrm/train.hpp"

namespace {

std::vector<double> poisson_times(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::exponential_distribution<double> gap(4.0);
    std::vector<double> t(n);
    double now = 0;
    for (auto& x : t) x = now += gap(rng);
    return t;
}

void BM_OptimalPartition(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto times = poisson_times(n, 7);
    const std::size_t groups = 64;
    const std::size_t cap = (n + groups - 1) / groups + 1;
    for (auto _ : state) benchmark::DoNotOptimize(mrm::optimal_partition(times, groups, cap));
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_OptimalPartition)->RangeMultiplier(4)->Range(64, 4096)->Complexity();

struct Fixture {
    mrm::SynthConfig syn;
    mrm::MrmConfig config;
    mrm::EventSequence seq;

    explicit Fixture(std::size_t length) {
        syn.seq_len_min = syn.seq_len_max = length;
        syn.max_features = 0;
        const auto d = syn.dataset_config();
        config.model_dim = 32;
        config.num_heads = 8;
        config.head_dim = 4;
        config.num_codes = d.num_codes;
        config.num_features = d.num_features;
        config.max_features = d.max_features;
        seq = mrm::generate_one(syn, 0);
    }
};

void BM_Forward(benchmark::State& state) {
    const Fixture f(static_cast<std::size_t>(state.range(0)));
    const mrm::MrmModel model(f.config, mrm::MrmParams::initialize(f.config, 1));
    for (auto _ : state) benchmark::DoNotOptimize(model.predict(f.seq));
}
BENCHMARK(BM_Forward)->Arg(40)->Arg(120)->Unit(benchmark::kMicrosecond);

void BM_ForwardBackward(benchmark::State& state) {
    const Fixture f(static_cast<std::size_t>(state.range(0)));
    const bool plain = state.range(1) != 0;
    const mrm::MrmModel model(f.config, mrm::MrmParams::initialize(f.config, 1), plain);
    auto grads = model.params().zeros_like();
    for (auto _ : state) benchmark::DoNotOptimize(model.loss_and_gradient(f.seq, grads));
}
BENCHMARK(BM_ForwardBackward)->Args({40, 0})->Args({120, 0})->Args({120, 1})->Unit(benchmark::kMicrosecond);

}  // namespace
BENCHMARK_MAIN();
