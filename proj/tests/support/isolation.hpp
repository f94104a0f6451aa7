// SPDX-License-Identifier: Apache-2.0
//
// Replays each search step by hand on a restored copy of the engine and
// compares per-phase parameter hashes with the engine's own step.
#pragma once

#include <string>
#include <vector>

#include "heartdarts/search.hpp"
#include "support/oracles.hpp"

namespace heartdarts::oracle {

struct IsolationReport {
    std::size_t steps = 0;
    std::size_t alpha_mismatch = 0;           // replayed alpha step != engine alpha
    std::size_t weights_moved_in_alpha = 0;   // weights changed during the alpha phase
    std::size_t weight_mismatch = 0;          // replayed weight step != engine weights
    std::size_t alpha_moved_in_weights = 0;   // alpha changed during the weight phase
    std::size_t alpha_saw_train = 0;          // a different train batch changed alpha
    std::size_t loss_mismatch = 0;            // reported losses are not the pre-update values
    std::size_t alpha_static = 0;             // alpha did not move at all
    std::size_t weights_static = 0;           // weights did not move at all

    bool ok() const {
        return alpha_mismatch == 0 && weights_moved_in_alpha == 0 && weight_mismatch == 0 &&
               alpha_moved_in_weights == 0 && alpha_saw_train == 0 && loss_mismatch == 0 && alpha_static == 0 &&
               weights_static == 0;
    }
    std::string summary() const {
        return std::to_string(steps) + " steps, alpha mismatch " + std::to_string(alpha_mismatch) +
               ", w moved in alpha phase " + std::to_string(weights_moved_in_alpha) + ", w mismatch " +
               std::to_string(weight_mismatch) + ", alpha moved in w phase " + std::to_string(alpha_moved_in_weights) +
               ", alpha saw train batch " + std::to_string(alpha_saw_train) + ", loss mismatch " +
               std::to_string(loss_mismatch) + ", static alpha/w " + std::to_string(alpha_static) + "/" +
               std::to_string(weights_static);
    }
};

template <typename T>
double replay_loss(Supernet<T>& net, const Batch<T>& batch) {
    Tape<T> tape;
    auto loss = ops::cross_entropy(tape, net.forward(tape, batch.x, true), batch.labels);
    tape.backward(loss);
    return static_cast<double>(loss->values[0]);
}

/// Runs `steps` search steps on consecutive batches of the two search
/// splits, checking each against a hand replay.
template <typename T>
IsolationReport check_isolation(SearchEngine<T>& engine, const HeartbeatDataset& ds, std::size_t steps,
                                std::size_t batch) {
    const auto train = ds.indices(Split::search_train);
    const auto val = ds.indices(Split::search_val);
    auto take = [&](const std::vector<std::size_t>& pool, std::size_t start) {
        std::vector<std::size_t> idx;
        for (std::size_t k = 0; k < batch; ++k) idx.push_back(pool[(start + k) % pool.size()]);
        return make_batch<T>(ds, idx);
    };

    IsolationReport rep;
    for (std::size_t s = 0; s < steps; ++s) {
        const auto tb = take(train, s * batch);
        const auto vb = take(val, s * batch);
        const auto other_tb = take(train, s * batch + batch / 2 + 1);

        const auto bytes = engine.checkpoint();
        const auto hw0 = hash_group(engine.net().weights());
        const auto ha0 = hash_group(engine.net().arch_params());
        const auto losses = engine.search_step(tb, vb);
        const auto hw1 = hash_group(engine.net().weights());
        const auto ha1 = hash_group(engine.net().arch_params());
        ++rep.steps;
        if (ha1 == ha0) ++rep.alpha_static;
        if (hw1 == hw0) ++rep.weights_static;

        auto replay = SearchEngine<T>::restore(bytes);
        auto& net = replay.net();
        auto& reg = net.registry();
        Optimizer<T> opt_a = replay.arch_optimizer();
        Optimizer<T> opt_w = replay.weight_optimizer();
        const auto weights = net.weights();
        const auto arch = net.arch_params();

        reg.set_requires_grad(ParamGroup::weight, false);
        reg.set_requires_grad(ParamGroup::arch, true);
        zero_grad(arch);
        const double val_loss = replay_loss(net, vb);
        opt_a.step(arch);
        if (hash_group(arch) != ha1) ++rep.alpha_mismatch;
        if (hash_group(weights) != hw0) ++rep.weights_moved_in_alpha;

        reg.set_requires_grad(ParamGroup::weight, true);
        reg.set_requires_grad(ParamGroup::arch, false);
        zero_grad(weights);
        const double train_loss = replay_loss(net, tb);
        if (replay.config().grad_clip > 0.0) clip_grad_norm(weights, replay.config().grad_clip);
        opt_w.step(weights);
        if (hash_group(weights) != hw1) ++rep.weight_mismatch;
        if (hash_group(arch) != ha1) ++rep.alpha_moved_in_weights;
        if (val_loss != losses.val_loss || train_loss != losses.train_loss) ++rep.loss_mismatch;

        auto swapped = SearchEngine<T>::restore(bytes);
        swapped.search_step(other_tb, vb);
        if (hash_group(swapped.net().arch_params()) != ha1) ++rep.alpha_saw_train;
    }
    return rep;
}

}  // namespace heartdarts::oracle
