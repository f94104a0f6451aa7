// SPDX-License-Identifier: Apache-2.0
//
// Alternating architecture search: one alpha step on a validation batch,
// then one weight step on a training batch, repeated over epochs.
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "heartdarts/ecg.hpp"
#include "heartdarts/optim.hpp"
#include "heartdarts/rng.hpp"
#include "heartdarts/supernet.hpp"

namespace heartdarts {

struct SearchConfig {
    std::size_t epochs = 100;
    std::size_t batch_size = 100;
    std::size_t init_channels = 16;
    std::size_t cells = 8;
    std::uint64_t seed = 0;
    OptimizerConfig weight_opt = OptimizerConfig::weight_default();
    OptimizerConfig arch_opt = OptimizerConfig::arch_default();
    double lr_min = 0.0;
    double grad_clip = 5.0;  // global norm on weight gradients; <= 0 disables

    /// Throws ConfigError on zero counts or fewer than 3 cells.
    void validate() const;
    bool operator==(const SearchConfig&) const = default;
};

struct SearchState {
    std::size_t epoch = 0;
    std::vector<double> train_loss;  // per-epoch mean
    std::vector<double> val_loss;
    std::vector<ArchParams> alpha_history;  // alpha after each epoch
    std::string rng_state;
    std::uint64_t val_cursor = 0;

    bool operator==(const SearchState&) const = default;
};

struct StepLosses {
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct EpochLog {
    std::size_t epoch = 0;  // 1-based index of the finished epoch
    double lr = 0.0;
    double train_loss = 0.0;
    double val_loss = 0.0;
};

inline constexpr std::string_view kCheckpointMagic = "HDCK";
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
class SearchEngine {
public:
    SearchEngine(const SearchConfig& config, std::size_t leads, std::size_t length);

    /// Alpha update from `val` with weights frozen, then weight update from
    /// `train` with alpha frozen. Returned losses are the pre-update values.
    StepLosses search_step(const Batch<T>& train, const Batch<T>& val);

    /// One pass over the search-train split in a seeded shuffled order, with
    /// validation batches drawn cyclically from the search-val split.
    EpochLog run_epoch(const HeartbeatDataset& ds);

    /// Runs epochs until `state().epoch == until` (or config.epochs).
    void run(const HeartbeatDataset& ds, std::size_t until, const std::function<void(const EpochLog&)>& log = {});

    Genotype genotype() const { return discretize(net_.arch()); }

    std::vector<std::uint8_t> checkpoint() const;
    /// Throws CheckpointError on bad magic, version, truncation or trailing bytes.
    static SearchEngine restore(std::span<const std::uint8_t> bytes);
    /// As restore(), but the stored configuration must equal this one. On
    /// any error this engine is left untouched.
    void restore_into(std::span<const std::uint8_t> bytes);

    const SearchConfig& config() const { return config_; }
    SearchState state() const;
    Supernet<T>& net() { return net_; }
    const Supernet<T>& net() const { return net_; }
    const Optimizer<T>& weight_optimizer() const { return opt_w_; }
    const Optimizer<T>& arch_optimizer() const { return opt_a_; }
    std::size_t leads() const { return leads_; }
    std::size_t length() const { return length_; }

private:
    TensorPtr<T> loss_on(const Batch<T>& batch);

    SearchConfig config_;
    std::size_t leads_;
    std::size_t length_;
    Supernet<T> net_;
    Optimizer<T> opt_w_;
    Optimizer<T> opt_a_;
    Rng rng_;
    SearchState state_;
};

struct SearchResult {
    Genotype genotype;
    SearchState state;
};

/// Full search on the dataset's search-train / search-val splits. Throws
/// ConfigError when either split is empty.
SearchResult run_search(const SearchConfig& config, const HeartbeatDataset& ds,
                        const std::function<void(const EpochLog&)>& log = {});

}  // namespace heartdarts
