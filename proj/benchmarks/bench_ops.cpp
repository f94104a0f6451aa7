// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include <vector>

#include "heartdarts/network.hpp"
#include "heartdarts/ops.hpp"
#include "heartdarts/rng.hpp"
#include "heartdarts/supernet.hpp"

using namespace heartdarts;

namespace {

TensorPtr<float> random_input(Shape s, std::uint64_t seed) {
    Rng rng(seed);
    auto t = make_tensor<float>(s);
    for (auto& v : t->values) v = static_cast<float>(rng.normal());
    return t;
}

void BM_Conv1dForward(benchmark::State& state) {
    const auto k = static_cast<std::size_t>(state.range(0));
    auto x = random_input({64, 16, 75}, 1);
    auto w = random_input({16, 16, k}, 2);
    for (auto _ : state) {
        Tape<float> tape(false);
        benchmark::DoNotOptimize(ops::conv1d(tape, x, w, TensorPtr<float>{}, 1, k / 2));
    }
    state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_Conv1dForward)->Arg(3)->Arg(9)->Arg(27);

void BM_Conv1dBackward(benchmark::State& state) {
    const auto k = static_cast<std::size_t>(state.range(0));
    auto x = random_input({64, 16, 75}, 1);
    auto w = random_input({16, 16, k}, 2);
    x->requires_grad = w->requires_grad = true;
    for (auto _ : state) {
        Tape<float> tape;
        tape.backward(ops::sum(tape, ops::conv1d(tape, x, w, TensorPtr<float>{}, 1, k / 2)));
    }
    state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_Conv1dBackward)->Arg(3)->Arg(9)->Arg(27);

void BM_SupernetStep(benchmark::State& state) {
    Supernet<float> net(SupernetConfig{1, 300, 8, 4, 1, 1e-3});
    auto x = random_input({32, 1, 300}, 3);
    const std::vector<int> labels(32, 1);
    for (auto _ : state) {
        Tape<float> tape;
        tape.backward(ops::cross_entropy(tape, net.forward(tape, x, true), labels));
    }
    state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_SupernetStep)->Unit(benchmark::kMillisecond);

void BM_FinalNetworkPredict(benchmark::State& state) {
    Genotype g;
    for (auto* cell : {&g.normal, &g.reduce})
        for (auto& node : *cell) node = {GenotypeEdge{0, OpKind::conv9}, GenotypeEdge{1, OpKind::skip_connect}};
    TrainConfig cfg;
    cfg.init_channels = 16;
    cfg.layers = 8;
    FinalNetwork<float> net(g, cfg, 1, 300);
    auto x = random_input({128, 1, 300}, 4);
    for (auto _ : state) benchmark::DoNotOptimize(predict(net, x));
    state.SetItemsProcessed(state.iterations() * 128);
}
BENCHMARK(BM_FinalNetworkPredict)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
