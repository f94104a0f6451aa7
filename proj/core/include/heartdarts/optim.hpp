// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "heartdarts/binary_io.hpp"
#include "heartdarts/tensor.hpp"

namespace heartdarts {

enum class OptimizerKind : std::uint8_t { momentum_sgd = 0, adaptive_moments = 1 };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::momentum_sgd;
    double lr = 0.025;
    double momentum = 0.9;  // momentum_sgd
    double beta1 = 0.5;     // adaptive_moments
    double beta2 = 0.999;
    double weight_decay = 3e-4;
    double eps = 1e-8;

    bool operator==(const OptimizerConfig&) const = default;

    /// Weight regime: momentum SGD, lr 0.025 (cosine-annealed), m 0.9, wd 3e-4.
    static OptimizerConfig weight_default();
    /// Architecture regime: adaptive moments, lr 3e-4, betas (0.5, 0.999), wd 1e-3.
    static OptimizerConfig arch_default();
};

/// Optimizer over a fixed, ordered parameter group. Buffers are matched to
/// parameters by position, so the group must be passed in the same order
/// on every call.
template <typename T>
class Optimizer {
public:
    Optimizer() = default;
    Optimizer(OptimizerConfig config, const std::vector<Parameter<T>*>& params);

    void step(const std::vector<Parameter<T>*>& params);

    void set_lr(double lr) { config_.lr = lr; }
    double lr() const { return config_.lr; }
    const OptimizerConfig& config() const { return config_; }
    std::uint64_t step_count() const { return steps_; }

    void save(ByteWriter& w) const;
    /// Reads buffers in place; sizes must match this optimizer's group.
    void load(ByteReader<CheckpointError>& r);

    bool operator==(const Optimizer&) const = default;

private:
    OptimizerConfig config_;
    std::vector<std::vector<T>> first_;   // velocity or first moment
    std::vector<std::vector<T>> second_;  // second moment (adaptive only)
    std::uint64_t steps_ = 0;
};

/// lr_min + (lr_max - lr_min) * (1 + cos(pi * epoch / (total - 1))) / 2.
double cosine_lr(std::size_t epoch, std::size_t total_epochs, double lr_max, double lr_min);

/// Scales gradients so their global L2 norm is at most max_norm. Returns the
/// norm before clipping.
template <typename T>
double clip_grad_norm(const std::vector<Parameter<T>*>& params, double max_norm);

template <typename T>
void zero_grad(const std::vector<Parameter<T>*>& params);

}  // namespace heartdarts
