// Serial-vs-OpenMP kernel comparison. The serial rows are the reference
// implementations the tests pin the parallel ones against.

#include <benchmark/benchmark.h>

#include <vector>

#include "rectify/kernels.hpp"
#include "rectify/model.hpp"
#include "rectify/rng.hpp"

namespace rectify::serial_kern {
void matmul(const float*, const float*, float*, int, int, int, bool, bool);
void attention_forward(const float*, const float*, const float*, float*, float*, int, int, int);
}  // namespace rectify::serial_kern

namespace rectify::omp_kern {
void matmul(const float*, const float*, float*, int, int, int, bool, bool);
void attention_forward(const float*, const float*, const float*, float*, float*, int, int, int);
}  // namespace rectify::omp_kern

using namespace rectify;

namespace {

std::vector<float> random_vec(std::size_t n, std::uint64_t seed) {
    auto rng = substream(seed);
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(normal01(rng));
    return v;
}

template <bool Parallel>
void bm_matmul(benchmark::State& state) {
    int m = static_cast<int>(state.range(0)), k = 512, n = 512;
    auto a = random_vec(static_cast<std::size_t>(m) * k, 1);
    auto b = random_vec(static_cast<std::size_t>(k) * n, 2);
    std::vector<float> c(static_cast<std::size_t>(m) * n);
    for (auto _ : state) {
        if (Parallel)
            omp_kern::matmul(a.data(), b.data(), c.data(), m, k, n, false, false);
        else
            serial_kern::matmul(a.data(), b.data(), c.data(), m, k, n, false, false);
        benchmark::DoNotOptimize(c.data());
        benchmark::ClobberMemory();
    }
    state.SetItemsProcessed(state.iterations() * static_cast<long>(m) * k * n);
}

template <bool Parallel>
void bm_attention(benchmark::State& state) {
    int t = static_cast<int>(state.range(0)), d = 128, h = 4;
    auto q = random_vec(static_cast<std::size_t>(t) * d, 3);
    auto k = random_vec(static_cast<std::size_t>(t) * d, 4);
    auto v = random_vec(static_cast<std::size_t>(t) * d, 5);
    std::vector<float> out(static_cast<std::size_t>(t) * d);
    std::vector<float> probs(static_cast<std::size_t>(h) * t * t);
    for (auto _ : state) {
        if (Parallel)
            omp_kern::attention_forward(q.data(), k.data(), v.data(), out.data(), probs.data(), t, d, h);
        else
            serial_kern::attention_forward(q.data(), k.data(), v.data(), out.data(), probs.data(), t, d, h);
        benchmark::DoNotOptimize(out.data());
    }
}

template <bool Parallel>
void bm_forward(benchmark::State& state) {
    ModelConfig cfg;
    cfg.n_layers = 4;
    cfg.d_model = 128;
    cfg.n_heads = 4;
    cfg.d_ff = 512;
    cfg.vocab_size = 64;
    cfg.max_seq_len = 64;
    ParamStore store = init_params(cfg, 9);
    std::vector<int> ids(static_cast<std::size_t>(state.range(0)));
    auto rng = substream(10);
    for (auto& id : ids) id = static_cast<int>(rng() % 64);
    set_parallel_kernels(Parallel);
    for (auto _ : state) {
        ForwardOut out = forward_logits(cfg, ParamView(store), ids);
        benchmark::DoNotOptimize(out.logits.data());
    }
    set_parallel_kernels(true);
}

}  // namespace

BENCHMARK_TEMPLATE(bm_matmul, false)->Arg(16)->Arg(64)->Unit(benchmark::kMicrosecond);
BENCHMARK_TEMPLATE(bm_matmul, true)->Arg(16)->Arg(64)->Unit(benchmark::kMicrosecond);
BENCHMARK_TEMPLATE(bm_attention, false)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);
BENCHMARK_TEMPLATE(bm_attention, true)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);
BENCHMARK_TEMPLATE(bm_forward, false)->Arg(32)->Unit(benchmark::kMicrosecond);
BENCHMARK_TEMPLATE(bm_forward, true)->Arg(32)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
