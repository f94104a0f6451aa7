// SPDX-License-Identifier: Apache-2.0
//
// The discrete network built from a genotype: stem, a stack of cells with
// two reductions, shortcut connections around each stage, and a classifier.
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "heartdarts/ecg.hpp"
#include "heartdarts/layers.hpp"
#include "heartdarts/metrics.hpp"
#include "heartdarts/optim.hpp"
#include "heartdarts/search_space.hpp"

namespace heartdarts {

struct TrainConfig {
    std::size_t epochs = 100;
    std::size_t batch_size = 256;
    std::size_t init_channels = 32;
    std::size_t layers = 15;
    std::uint64_t seed = 0;
    OptimizerConfig weight_opt = OptimizerConfig::weight_default();
    double lr_min = 0.0;
    double grad_clip = 5.0;  // <= 0 disables

    /// Throws ConfigError on zero counts or fewer than 3 layers.
    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

/// enabled: the full scheme. zeroed: the register holds zeros of the
/// captured shape, so each addition site reduces to ReLU(s). disabled: a
/// plain cell stack with no capture, addition or ReLU.
enum class ShortcutMode : std::uint8_t { enabled, zeroed, disabled };

struct ShortcutEvent {
    enum class Kind : std::uint8_t { capture, add };
    Kind kind;
    std::size_t cell;  // index of the cell just computed
    Shape shape;       // shape of the register at this event
    bool operator==(const ShortcutEvent&) const = default;
};

/// After computing cell i: capture t = s1 when i is 0, floor(L/3) or
/// floor(2L/3); otherwise add t into both s0 and s1 (with ReLU) when i is
/// floor(L/3) - 1 or floor(2L/3) - 1. Capture wins where the two overlap.
struct ShortcutPlan {
    std::vector<std::size_t> capture;
    std::vector<std::size_t> add;
};
ShortcutPlan shortcut_plan(std::size_t layers);

template <typename T>
class DiscreteCell {
public:
    DiscreteCell(ParamRegistry<T>& reg, const std::string& id, const CellGenotype& genotype, std::size_t c_prev_prev,
                 std::size_t c_prev, std::size_t channels, bool reduction, bool reduction_prev);

    std::pair<TensorPtr<T>, TensorPtr<T>> preprocess(Tape<T>& tape, const TensorPtr<T>& s0, const TensorPtr<T>& s1,
                                                     bool training) const;
    /// Each intermediate node sums its two selected op outputs; returns the
    /// concatenation of the four nodes.
    TensorPtr<T> forward_nodes(Tape<T>& tape, const TensorPtr<T>& s0, const TensorPtr<T>& s1, bool training) const;
    TensorPtr<T> forward(Tape<T>& tape, const TensorPtr<T>& s0, const TensorPtr<T>& s1, bool training) const;

    bool reduction() const { return reduction_; }
    std::size_t channels() const { return channels_; }
    const CellGenotype& genotype() const { return genotype_; }
    /// The op on input `slot` (0 or 1) of intermediate node `k` (0..3).
    const CandidateOp<T>& op(std::size_t k, std::size_t slot) const { return ops_[k][slot]; }
    const Preprocess<T>& pre0() const { return pre0_; }
    const Preprocess<T>& pre1() const { return pre1_; }

private:
    bool reduction_;
    std::size_t channels_;
    CellGenotype genotype_;
    Preprocess<T> pre0_;
    Preprocess<T> pre1_;
    std::array<std::array<CandidateOp<T>, 2>, kIntermediateNodes> ops_;
};

template <typename T>
class FinalNetwork {
public:
    /// Throws ValidationError for an invalid genotype and ConfigError for a
    /// bad configuration or lead count outside {1, 2}.
    FinalNetwork(const Genotype& genotype, const TrainConfig& config, std::size_t leads, std::size_t length);

    FinalNetwork(const FinalNetwork&) = delete;
    FinalNetwork& operator=(const FinalNetwork&) = delete;
    FinalNetwork(FinalNetwork&&) noexcept = default;
    FinalNetwork& operator=(FinalNetwork&&) noexcept = default;

    /// x: [b, leads, length] -> logits [b, 5]. When `trace` is given, every
    /// capture and addition is appended to it.
    TensorPtr<T> forward(Tape<T>& tape, const TensorPtr<T>& x, bool training,
                         ShortcutMode mode = ShortcutMode::enabled, std::vector<ShortcutEvent>* trace = nullptr) const;

    /// Stem output shape followed by each cell's output shape.
    std::vector<Shape> shape_trace(std::size_t batch) const;

    const Genotype& genotype() const { return genotype_; }
    const TrainConfig& config() const { return config_; }
    std::size_t leads() const { return leads_; }
    std::size_t length() const { return length_; }
    const ShortcutPlan& plan() const { return plan_; }
    ParamRegistry<T>& registry() { return reg_; }
    const ParamRegistry<T>& registry() const { return reg_; }
    std::vector<Parameter<T>*> weights() { return reg_.group(ParamGroup::weight); }
    std::size_t parameter_count() const { return reg_.parameter_count(ParamGroup::weight); }

    const Stem<T>& stem() const { return stem_; }
    const std::vector<DiscreteCell<T>>& cells() const { return cells_; }
    const Classifier<T>& classifier() const { return classifier_; }

private:
    Genotype genotype_;
    TrainConfig config_;
    std::size_t leads_;
    std::size_t length_;
    ShortcutPlan plan_;
    ParamRegistry<T> reg_;
    Stem<T> stem_;
    std::vector<DiscreteCell<T>> cells_;
    Classifier<T> classifier_;
};

struct TrainEpochLog {
    std::size_t epoch = 0;  // 1-based
    double lr = 0.0;
    double train_loss = 0.0;
    std::optional<double> val_accuracy;  // percent, on search_val when present
};

struct TrainHistory {
    std::vector<double> train_loss;
    std::vector<double> val_accuracy;  // empty without a search_val split
};

/// Trains the weights on the search_train split with cosine-annealed
/// momentum SGD. Throws InputError when search_train is empty.
template <typename T>
TrainHistory train_final(FinalNetwork<T>& net, const HeartbeatDataset& ds,
                         const std::function<void(const TrainEpochLog&)>& log = {});

/// Argmax of the eval-mode logits, first index on ties.
std::vector<int> argmax_rows(const Tensor<float>& logits);
std::vector<int> argmax_rows(const Tensor<double>& logits);

/// Eval-mode class predictions for x: [b, leads, length]. Throws ShapeError
/// on a lead or length mismatch.
template <typename T>
std::vector<int> predict(const FinalNetwork<T>& net, const TensorPtr<T>& x);

/// Confusion matrix of eval-mode predictions over one split.
template <typename T>
ConfusionMatrix evaluate(const FinalNetwork<T>& net, const HeartbeatDataset& ds, Split split,
                         std::size_t batch_size = 256);

inline constexpr std::string_view kModelMagic = "HDMD";
inline constexpr std::uint32_t kModelVersion = 1;

std::vector<std::uint8_t> encode_model(const FinalNetwork<float>& net);
/// Throws FormatError on bad magic, version, truncation or mismatched tensors.
FinalNetwork<float> decode_model(std::span<const std::uint8_t> bytes);
void save_model(const std::string& path, const FinalNetwork<float>& net);
FinalNetwork<float> load_model(const std::string& path);

}  // namespace heartdarts
