#include <benchmark/benchmark.h>

#include "seedsr/autodiff.hpp"
#include "seedsr/rng.hpp"
#include "seedsr/segpost.hpp"
#include "seedsr/synthetic.hpp"

using namespace seedsr;

namespace {

Tensor rnd(std::vector<int> dims, uint64_t seed) {
    Philox rng(seed);
    return rng.normal_tensor(std::move(dims));
}

}  // namespace

static void BM_Conv2dForward(benchmark::State& state) {
    const int hw = static_cast<int>(state.range(0));
    Tensor in = rnd({hw, hw, 40}, 1);
    Tensor k = rnd({3, 3, 40, 16}, 2);
    Tensor b = rnd({16}, 3);
    for (auto _ : state) {
        Tensor out = conv2d_value(in, k, &b, 1, 1);
        benchmark::DoNotOptimize(out.raw());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(hw) * hw * 9 * 40 * 16);
}
BENCHMARK(BM_Conv2dForward)->Arg(16)->Arg(32)->Arg(48);

static void BM_AttentionForward(benchmark::State& state) {
    const int tokens = static_cast<int>(state.range(0));
    NodePtr q = make_const(rnd({tokens, 8}, 4));
    NodePtr k = make_const(rnd({tokens, 8}, 5));
    NodePtr v = make_const(rnd({tokens, 8}, 6));
    NodePtr wo = make_const(rnd({8, 8}, 7));
    for (auto _ : state) {
        NodePtr out = attention(q, k, v, wo, 4);
        benchmark::DoNotOptimize(out->value.raw());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(tokens) * tokens);
}
BENCHMARK(BM_AttentionForward)->Arg(256)->Arg(1024)->Arg(2304);

static void BM_AttentionBackward(benchmark::State& state) {
    const int tokens = static_cast<int>(state.range(0));
    Tensor qv = rnd({tokens, 8}, 8);
    Tensor w = rnd({tokens, 8}, 12);
    NodePtr wo = make_const(rnd({8, 8}, 11));
    NodePtr k = make_const(rnd({tokens, 8}, 9));
    NodePtr v = make_const(rnd({tokens, 8}, 10));
    for (auto _ : state) {
        NodePtr q = make_leaf(qv);
        NodePtr loss = dot_const(attention(q, k, v, wo, 4), w);
        backward(loss);
        benchmark::DoNotOptimize(q->grad.raw());
    }
}
BENCHMARK(BM_AttentionBackward)->Arg(256)->Arg(1024);

static void BM_Watershed(benchmark::State& state) {
    Philox rng(77);
    IntGrid labels = gen_field_map(64, 10, rng);
    ByteGrid mask = interior_mask(labels);
    for (auto _ : state) {
        IntGrid inst = watershed_instances(mask, 5.0);
        benchmark::DoNotOptimize(inst.v.data());
    }
}
BENCHMARK(BM_Watershed);

static void BM_DistanceTransform(benchmark::State& state) {
    Philox rng(78);
    IntGrid labels = gen_field_map(96, 12, rng);
    ByteGrid mask = interior_mask(labels);
    for (auto _ : state) {
        auto dt = distance_transform(mask);
        benchmark::DoNotOptimize(dt.data());
    }
}
BENCHMARK(BM_DistanceTransform);

BENCHMARK_MAIN();
