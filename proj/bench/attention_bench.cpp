// Serial reference kernels against the OpenMP ones on the same inputs.

#include <random>

#include <benchmark/benchmark.h>

#include "framewise/attention.hpp"
#include "framewise/attention_serial.hpp"

namespace {

using framewise::Matrix;
namespace attn = framewise::attention;

Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64 &rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix m(rows, cols);
    for (double &v : m.values())
        v = normal(rng);
    return m;
}

attn::FrameQKV random_frames(int frames, std::size_t tokens, std::size_t dim) {
    std::mt19937_64 rng(42);
    attn::FrameQKV qkv;
    for (int f = 0; f < frames; ++f) {
        qkv.queries.push_back(random_matrix(tokens, dim, rng));
        qkv.keys.push_back(random_matrix(tokens, dim, rng));
        qkv.values.push_back(random_matrix(tokens, dim, rng));
    }
    return qkv;
}

void BM_ScaledAttentionSerial(benchmark::State &state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto qkv = random_frames(1, n, 64);
    for (auto _ : state)
        benchmark::DoNotOptimize(attn::serial::scaled_attention(qkv.queries[0], qkv.keys[0], qkv.values[0]));
}

void BM_ScaledAttentionOmp(benchmark::State &state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto qkv = random_frames(1, n, 64);
    for (auto _ : state)
        benchmark::DoNotOptimize(attn::scaled_attention(qkv.queries[0], qkv.keys[0], qkv.values[0]));
}

void BM_DualSoftmaxSerial(benchmark::State &state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto qkv = random_frames(1, n, 64);
    for (auto _ : state)
        benchmark::DoNotOptimize(attn::serial::dual_softmax(qkv.queries[0], qkv.keys[0], true));
}

void BM_DualSoftmaxOmp(benchmark::State &state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto qkv = random_frames(1, n, 64);
    for (auto _ : state)
        benchmark::DoNotOptimize(attn::dual_softmax(qkv.queries[0], qkv.keys[0], true));
}

void BM_CrossFrameSerial(benchmark::State &state) {
    const auto qkv = random_frames(8, static_cast<std::size_t>(state.range(0)), 64);
    const attn::CrossFrameConfig config{.mode = attn::Mode::rvm_dsf};
    for (auto _ : state)
        benchmark::DoNotOptimize(attn::serial::cross_frame_attention(qkv, config, 10));
}

void BM_CrossFrameOmp(benchmark::State &state) {
    const auto qkv = random_frames(8, static_cast<std::size_t>(state.range(0)), 64);
    const attn::CrossFrameConfig config{.mode = attn::Mode::rvm_dsf};
    for (auto _ : state)
        benchmark::DoNotOptimize(attn::cross_frame_attention(qkv, config, 10));
}

} // namespace

BENCHMARK(BM_ScaledAttentionSerial)->Arg(64)->Arg(256)->Arg(1024);
BENCHMARK(BM_ScaledAttentionOmp)->Arg(64)->Arg(256)->Arg(1024);
BENCHMARK(BM_DualSoftmaxSerial)->Arg(64)->Arg(256)->Arg(1024);
BENCHMARK(BM_DualSoftmaxOmp)->Arg(64)->Arg(256)->Arg(1024);
BENCHMARK(BM_CrossFrameSerial)->Arg(64)->Arg(256);
BENCHMARK(BM_CrossFrameOmp)->Arg(64)->Arg(256);

BENCHMARK_MAIN();
