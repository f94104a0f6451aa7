// SPDX-License-Identifier: Apache-2.0
//
// Random instances and reference constructions shared by the unit tests and
// the acceptance binary.
#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "heartdarts/network.hpp"
#include "heartdarts/ops.hpp"
#include "heartdarts/rng.hpp"
#include "heartdarts/search_space.hpp"
#include "heartdarts/supernet.hpp"
#include "support/oracles.hpp"

namespace heartdarts::oracle {

inline TensorPtr<double> uniform(Rng& rng, Shape s, double lo = -1.0, double hi = 1.0) {
    auto t = make_tensor<double>(s);
    for (auto& v : t->values) v = lo + (hi - lo) * rng.uniform();
    return t;
}

// Values bounded away from zero so relu's kink is never crossed by +-h.
inline TensorPtr<double> off_kink(Rng& rng, Shape s) {
    auto t = uniform(rng, s);
    for (auto& v : t->values)
        if (std::abs(v) < 1e-2) v = v < 0 ? -0.5 : 0.5;
    return t;
}

template <typename T>
TensorPtr<T> random_input(Rng& rng, Shape s) {
    auto t = make_tensor<T>(s);
    for (auto& v : t->values) v = static_cast<T>(rng.normal());
    return t;
}

inline AlphaMatrix random_alpha(Rng& rng, double scale) {
    AlphaMatrix a{};
    for (auto& row : a)
        for (auto& v : row) v = scale * rng.normal();
    return a;
}

// Coarse integer logits make ties frequent.
inline AlphaMatrix tied_alpha(Rng& rng) {
    AlphaMatrix a{};
    for (auto& row : a)
        for (auto& v : row) v = static_cast<double>(rng.below(3));
    return a;
}

/// Uniform over valid genotypes: two distinct predecessors, non-zero ops.
inline Genotype random_genotype(Rng& rng) {
    auto cell = [&] {
        CellGenotype c{};
        for (std::size_t k = 0; k < kIntermediateNodes; ++k) {
            const std::size_t node = k + kInputNodes;
            std::size_t a = rng.below(node), b = rng.below(node - 1);
            if (b >= a) ++b;
            if (a > b) std::swap(a, b);
            c[k] = {GenotypeEdge{a, kAllOps[rng.below(kNumOps - 1)]}, GenotypeEdge{b, kAllOps[rng.below(kNumOps - 1)]}};
        }
        return c;
    };
    return Genotype{cell(), cell(), {2, 3, 4, 5}};
}

/// Uses every op kind except zero across the two cells.
inline Genotype mixed_genotype() {
    Genotype g;
    g.normal = {NodeEdges{GenotypeEdge{0, OpKind::conv5}, GenotypeEdge{1, OpKind::skip_connect}},
                NodeEdges{GenotypeEdge{1, OpKind::maxpool3}, GenotypeEdge{2, OpKind::conv9}},
                NodeEdges{GenotypeEdge{0, OpKind::conv27}, GenotypeEdge{3, OpKind::maxpool5}},
                NodeEdges{GenotypeEdge{2, OpKind::skip_connect}, GenotypeEdge{4, OpKind::conv3}}};
    g.reduce = {NodeEdges{GenotypeEdge{0, OpKind::maxpool5}, GenotypeEdge{1, OpKind::skip_connect}},
                NodeEdges{GenotypeEdge{0, OpKind::conv13}, GenotypeEdge{2, OpKind::conv3}},
                NodeEdges{GenotypeEdge{1, OpKind::conv17}, GenotypeEdge{3, OpKind::skip_connect}},
                NodeEdges{GenotypeEdge{0, OpKind::maxpool3}, GenotypeEdge{4, OpKind::conv5}}};
    return g;
}

/// Softmax of each alpha row as a [1, edges, ops] weight tensor.
inline TensorPtr<double> weights_from(const AlphaMatrix& a) {
    auto t = make_tensor<double>({1, kNumEdges, kNumOps});
    for (std::size_t e = 0; e < kNumEdges; ++e) {
        const auto w = softmax_row(a[e]);
        for (std::size_t o = 0; o < kNumOps; ++o) t->values[e * kNumOps + o] = w[o];
    }
    return t;
}

/// One candidate op of every kind for a single edge.
inline std::vector<CandidateOp<double>> edge_ops(ParamRegistry<double>& reg, std::size_t channels,
                                                 std::size_t stride) {
    std::vector<CandidateOp<double>> ops;
    for (OpKind k : kAllOps)
        ops.emplace_back(reg, "s" + std::to_string(stride) + "." + std::string(op_name(k)), k, channels, stride, true);
    return ops;
}

inline double max_abs_diff(const Tensor<double>& got, const Ref& want) {
    if (!(got.shape == want.shape)) return INFINITY;
    double worst = 0.0;
    for (std::size_t i = 0; i < want.v.size(); ++i) worst = std::max(worst, std::abs(got.values[i] - want.v[i]));
    return worst;
}

// The plain cell stack written out directly, with ReLU at the addition sites.
template <typename T>
TensorPtr<T> stack_with_relu(const FinalNetwork<T>& net, const TensorPtr<T>& x, bool training) {
    Tape<T> tape(false);
    auto s0 = net.stem().forward(tape, x, training);
    auto s1 = s0;
    const auto [r1, r2] = reduction_indices(net.cells().size());
    for (std::size_t i = 0; i < net.cells().size(); ++i) {
        auto out = net.cells()[i].forward(tape, s0, s1, training);
        s0 = s1;
        s1 = out;
        const bool capture = i == 0 || i == r1 || i == r2;
        if (!capture && (i + 1 == r1 || i + 1 == r2)) {
            s0 = ops::relu(tape, s0);
            s1 = ops::relu(tape, s1);
        }
    }
    return net.classifier().forward(tape, s1);
}

struct GradCase {
    std::string name;
    std::vector<std::pair<std::string, TensorPtr<double>>> wrt;
    std::function<TensorPtr<double>(Tape<double>&)> loss;
};

/// A finite-difference case for every differentiable op.
inline std::vector<GradCase> op_gradient_cases(Rng& rng) {
    std::vector<GradCase> cases;
    for (std::size_t stride : {1, 2}) {
        auto x = uniform(rng, {2, 3, 11});
        auto w = uniform(rng, {4, 3, 5});
        auto b = uniform(rng, {1, 4, 1});
        const std::size_t lo = ops::pooled_length(11, 5, stride, 2);
        auto r = uniform(rng, {1, 4 * lo, 1});
        cases.push_back({"conv1d s" + std::to_string(stride), {{"x", x}, {"w", w}, {"b", b}}, [=](Tape<double>& t) {
                             return project(t, ops::conv1d(t, x, w, b, stride, 2), r);
                         }});
    }
    for (bool affine : {false, true}) {
        auto x = uniform(rng, {3, 2, 6});
        auto g = uniform(rng, {1, 2, 1}, 0.5, 1.5);
        auto be = uniform(rng, {1, 2, 1});
        auto st = std::make_shared<BatchNormStats<double>>(
            BatchNormStats<double>{"bn", std::vector<double>(2, 0.0), std::vector<double>(2, 1.0)});
        auto r = uniform(rng, {1, 12, 1});
        std::vector<std::pair<std::string, TensorPtr<double>>> wrt{{"x", x}};
        if (affine) {
            wrt.push_back({"gamma", g});
            wrt.push_back({"beta", be});
        }
        cases.push_back({affine ? "batchnorm1d affine" : "batchnorm1d", wrt, [=](Tape<double>& t) {
                             return project(t,
                                            ops::batchnorm1d(t, x, affine ? g : TensorPtr<double>{},
                                                             affine ? be : TensorPtr<double>{}, *st, true),
                                            r);
                         }});
    }
    {
        auto x = off_kink(rng, {2, 3, 5});
        auto r = uniform(rng, {1, 15, 1});
        cases.push_back({"relu", {{"x", x}}, [=](Tape<double>& t) { return project(t, ops::relu(t, x), r); }});
    }
    for (std::size_t k : {3, 5}) {
        auto x = uniform(rng, {2, 2, 13});
        const std::size_t lo = ops::pooled_length(13, k, 2, k / 2);
        auto r = uniform(rng, {1, 2 * lo, 1});
        cases.push_back({"maxpool1d k" + std::to_string(k), {{"x", x}}, [=](Tape<double>& t) {
                             return project(t, ops::maxpool1d(t, x, k, 2, k / 2), r);
                         }});
    }
    {
        auto x = uniform(rng, {2, 3, 7});
        auto r = uniform(rng, {1, 3, 1});
        cases.push_back(
            {"global_avgpool", {{"x", x}}, [=](Tape<double>& t) { return project(t, ops::global_avgpool(t, x), r); }});
    }
    {
        auto x = uniform(rng, {3, 4, 2});
        auto w = uniform(rng, {5, 8, 1});
        auto b = uniform(rng, {1, 5, 1});
        auto r = uniform(rng, {1, 5, 1});
        cases.push_back({"linear", {{"x", x}, {"w", w}, {"b", b}}, [=](Tape<double>& t) {
                             return project(t, ops::linear(t, x, w, b), r);
                         }});
    }
    {
        auto a = uniform(rng, {2, 2, 3});
        auto b = uniform(rng, {2, 2, 3});
        auto c = uniform(rng, {2, 1, 3});
        auto r = uniform(rng, {1, 9, 1});
        cases.push_back({"add+concat", {{"a", a}, {"b", b}, {"c", c}}, [=](Tape<double>& t) {
                             return project(t, ops::concat_channels(t, {ops::add(t, a, b), c}), r);
                         }});
    }
    {
        auto logits = uniform(rng, {4, 5, 1}, -2.0, 2.0);
        const std::vector<int> labels{0, 4, 2, 2};
        cases.push_back({"cross_entropy", {{"logits", logits}}, [=](Tape<double>& t) {
                             return ops::cross_entropy(t, logits, labels);
                         }});
    }
    {
        auto alpha = uniform(rng, {1, 3, 4});
        auto r = uniform(rng, {1, 12, 1});
        cases.push_back({"softmax_rows", {{"alpha", alpha}}, [=](Tape<double>& t) {
                             return project(t, ops::softmax_rows(t, alpha), r);
                         }});
    }
    {
        auto alpha = uniform(rng, {1, 2, 4});
        std::vector<TensorPtr<double>> terms{uniform(rng, {2, 2, 3}), nullptr, uniform(rng, {2, 2, 3}),
                                             uniform(rng, {2, 2, 3})};
        auto r = uniform(rng, {1, 6, 1});
        cases.push_back({"weighted_sum",
                         {{"alpha", alpha}, {"t0", terms[0]}, {"t2", terms[2]}, {"t3", terms[3]}},
                         [=](Tape<double>& t) {
                             auto w = ops::softmax_rows(t, alpha);
                             return project(t, ops::weighted_sum(t, terms, w, 1), r);
                         }});
    }
    return cases;
}

}  // namespace heartdarts::oracle
