// SPDX-License-Identifier: Apache-2.0
#include "heartdarts/supernet.hpp"

namespace heartdarts {

template <typename T>
TensorPtr<T> mixed_edge_forward(Tape<T>& tape, const TensorPtr<T>& x, const TensorPtr<T>& weights, std::size_t row,
                                std::span<const CandidateOp<T>> ops, bool training) {
    if (ops.size() != kNumOps)
        throw ShapeError("mixed edge needs " + std::to_string(kNumOps) + " ops, got " + std::to_string(ops.size()));
    std::vector<TensorPtr<T>> terms(kNumOps);
    for (std::size_t o = 0; o < kNumOps; ++o) {
        if (ops[o].kind() == OpKind::zero) continue;
        terms[o] = ops[o].forward(tape, x, training);
    }
    return ops::weighted_sum(tape, terms, weights, row);
}

template <typename T>
MixedCell<T>::MixedCell(ParamRegistry<T>& reg, const std::string& id, std::size_t c_prev_prev, std::size_t c_prev,
                        std::size_t channels, bool reduction, bool reduction_prev)
    : reduction_(reduction),
      channels_(channels),
      pre0_(reg, id + ".pre0", c_prev_prev, channels, reduction_prev ? 2 : 1, false),
      pre1_(reg, id + ".pre1", c_prev, channels, 1, false) {
    for (std::size_t e = 0; e < kNumEdges; ++e) {
        const auto [node, pred] = edge_endpoints(e);
        (void)node;
        const std::size_t stride = (reduction && pred < kInputNodes) ? 2 : 1;
        for (OpKind kind : kAllOps) {
            const std::string op_id = id + ".edge" + std::to_string(e) + "." + std::string(op_name(kind));
            ops_[e].emplace_back(reg, op_id, kind, channels, stride, true);
        }
    }
}

template <typename T>
std::pair<TensorPtr<T>, TensorPtr<T>> MixedCell<T>::preprocess(Tape<T>& tape, const TensorPtr<T>& s0,
                                                               const TensorPtr<T>& s1, bool training) const {
    return {pre0_.forward(tape, s0, training), pre1_.forward(tape, s1, training)};
}

template <typename T>
TensorPtr<T> MixedCell<T>::forward_nodes(Tape<T>& tape, const TensorPtr<T>& s0, const TensorPtr<T>& s1,
                                         const TensorPtr<T>& weights, bool training) const {
    if (s0->shape != s1->shape)
        throw ShapeError("cell inputs disagree after preprocessing: " + to_string(s0->shape) + " vs " +
                         to_string(s1->shape));
    std::vector<TensorPtr<T>> nodes = {s0, s1};
    for (std::size_t k = 0; k < kIntermediateNodes; ++k) {
        const std::size_t node = k + kInputNodes;
        TensorPtr<T> acc;
        for (std::size_t pred = 0; pred < node; ++pred) {
            const std::size_t e = edge_index(node, pred);
            auto h = mixed_edge_forward<T>(tape, nodes[pred], weights, e, ops_[e], training);
            acc = acc ? ops::add(tape, acc, h) : h;
        }
        nodes.push_back(acc);
    }
    return ops::concat_channels(tape, std::vector<TensorPtr<T>>(nodes.begin() + kInputNodes, nodes.end()));
}

template <typename T>
TensorPtr<T> MixedCell<T>::forward(Tape<T>& tape, const TensorPtr<T>& s0, const TensorPtr<T>& s1,
                                   const TensorPtr<T>& weights, bool training) const {
    auto [p0, p1] = preprocess(tape, s0, s1, training);
    return forward_nodes(tape, p0, p1, weights, training);
}

template <typename T>
Supernet<T>::Supernet(const SupernetConfig& config) : config_(config), reg_(config.seed) {
    if (config.cells < 1) throw ConfigError("supernet needs at least one cell");
    if (config.channels < 1 || config.leads < 1) throw ConfigError("supernet channels and leads must be >= 1");
    alpha_normal_ = reg_.arch("alpha.normal", {1, kNumEdges, kNumOps}, config.alpha_init_std);
    alpha_reduce_ = reg_.arch("alpha.reduce", {1, kNumEdges, kNumOps}, config.alpha_init_std);
    stem_ = Stem<T>(reg_, config.leads, config.channels);

    const auto [r1, r2] = reduction_indices(config.cells);
    std::size_t c_pp = config.channels, c_p = config.channels, c = config.channels;
    bool reduction_prev = false;
    for (std::size_t i = 0; i < config.cells; ++i) {
        const bool reduction = (i == r1 || i == r2);
        if (reduction) c *= 2;
        cells_.emplace_back(reg_, "cells." + std::to_string(i), c_pp, c_p, c, reduction, reduction_prev);
        reduction_prev = reduction;
        c_pp = c_p;
        c_p = kIntermediateNodes * c;
    }
    classifier_ = Classifier<T>(reg_, c_p, kNumClasses);
}

template <typename T>
TensorPtr<T> Supernet<T>::forward(Tape<T>& tape, const TensorPtr<T>& x, bool training) const {
    if (x->shape.channels != config_.leads)
        throw ShapeError("supernet expects " + std::to_string(config_.leads) + " leads, got " + to_string(x->shape));
    auto w_normal = ops::softmax_rows(tape, alpha_normal_);
    auto w_reduce = ops::softmax_rows(tape, alpha_reduce_);
    auto s0 = stem_.forward(tape, x, training);
    auto s1 = s0;
    for (const auto& cell : cells_) {
        auto out = cell.forward(tape, s0, s1, cell.reduction() ? w_reduce : w_normal, training);
        s0 = s1;
        s1 = out;
    }
    return classifier_.forward(tape, s1);
}

template <typename T>
std::vector<Shape> Supernet<T>::shape_trace(std::size_t batch) const {
    std::vector<Shape> trace;
    std::size_t len = ops::pooled_length(ops::pooled_length(config_.length, 5, 2, 2), 3, 2, 1);
    trace.push_back({batch, config_.channels, len});
    for (const auto& cell : cells_) {
        if (cell.reduction()) len = ops::pooled_length(len, 1, 2, 0);
        trace.push_back({batch, kIntermediateNodes * cell.channels(), len});
    }
    return trace;
}

template <typename T>
ArchParams Supernet<T>::arch() const {
    ArchParams a;
    for (std::size_t e = 0; e < kNumEdges; ++e)
        for (std::size_t o = 0; o < kNumOps; ++o) {
            a.normal[e][o] = alpha_normal_->values[e * kNumOps + o];
            a.reduce[e][o] = alpha_reduce_->values[e * kNumOps + o];
        }
    return a;
}

template <typename T>
void Supernet<T>::set_arch(const ArchParams& a) {
    for (std::size_t e = 0; e < kNumEdges; ++e)
        for (std::size_t o = 0; o < kNumOps; ++o) {
            alpha_normal_->values[e * kNumOps + o] = static_cast<T>(a.normal[e][o]);
            alpha_reduce_->values[e * kNumOps + o] = static_cast<T>(a.reduce[e][o]);
        }
}

template TensorPtr<float> mixed_edge_forward(Tape<float>&, const TensorPtr<float>&, const TensorPtr<float>&,
                                             std::size_t, std::span<const CandidateOp<float>>, bool);
template TensorPtr<double> mixed_edge_forward(Tape<double>&, const TensorPtr<double>&, const TensorPtr<double>&,
                                              std::size_t, std::span<const CandidateOp<double>>, bool);
template class MixedCell<float>;
template class MixedCell<double>;
template class Supernet<float>;
template class Supernet<double>;

}  // namespace heartdarts
