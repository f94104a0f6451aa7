// SPDX-License-Identifier: Apache-2.0
//
// The over-parameterized search network: every edge of every cell carries
// all ten candidate operations, mixed by softmax(alpha).
#pragma once

#include <array>
#include <vector>

#include "heartdarts/layers.hpp"

namespace heartdarts {

inline constexpr std::size_t kNumClasses = 5;

/// sum_o softmax(alpha_row)_o * op_o(x), with the softmax already applied:
/// `weights` is a [1, edges, 10] tensor and `row` selects the edge. The
/// zero op contributes nothing and is not evaluated.
template <typename T>
TensorPtr<T> mixed_edge_forward(Tape<T>& tape, const TensorPtr<T>& x, const TensorPtr<T>& weights, std::size_t row,
                                std::span<const CandidateOp<T>> ops, bool training);

template <typename T>
class MixedCell {
public:
    MixedCell(ParamRegistry<T>& reg, const std::string& id, std::size_t c_prev_prev, std::size_t c_prev,
              std::size_t channels, bool reduction, bool reduction_prev);

    std::pair<TensorPtr<T>, TensorPtr<T>> preprocess(Tape<T>& tape, const TensorPtr<T>& s0, const TensorPtr<T>& s1,
                                                     bool training) const;
    /// Sums the mixed edges into each intermediate node on already-adapted
    /// inputs; returns the
    /// channel concatenation of the four intermediate nodes.
    TensorPtr<T> forward_nodes(Tape<T>& tape, const TensorPtr<T>& s0, const TensorPtr<T>& s1,
                               const TensorPtr<T>& weights, bool training) const;
    TensorPtr<T> forward(Tape<T>& tape, const TensorPtr<T>& s0, const TensorPtr<T>& s1, const TensorPtr<T>& weights,
                         bool training) const;

    bool reduction() const { return reduction_; }
    std::size_t channels() const { return channels_; }
    std::span<const CandidateOp<T>> edge_ops(std::size_t edge) const { return ops_[edge]; }
    const Preprocess<T>& pre0() const { return pre0_; }
    const Preprocess<T>& pre1() const { return pre1_; }

private:
    bool reduction_;
    std::size_t channels_;
    Preprocess<T> pre0_;
    Preprocess<T> pre1_;
    std::array<std::vector<CandidateOp<T>>, kNumEdges> ops_;
};

struct SupernetConfig {
    std::size_t leads = 1;
    std::size_t length = 300;
    std::size_t channels = 16;  // stem filters and first working width
    std::size_t cells = 8;
    std::uint64_t seed = 0;
    double alpha_init_std = 1e-3;

    bool operator==(const SupernetConfig&) const = default;
};

template <typename T>
class Supernet {
public:
    explicit Supernet(const SupernetConfig& config);

    Supernet(const Supernet&) = delete;
    Supernet& operator=(const Supernet&) = delete;
    Supernet(Supernet&&) noexcept = default;
    Supernet& operator=(Supernet&&) noexcept = default;

    /// x: [b, leads, length] -> logits [b, 5].
    TensorPtr<T> forward(Tape<T>& tape, const TensorPtr<T>& x, bool training) const;

    /// Output shape of the stem and of each cell for a given batch size.
    std::vector<Shape> shape_trace(std::size_t batch) const;

    ArchParams arch() const;
    void set_arch(const ArchParams& arch);

    const SupernetConfig& config() const { return config_; }
    ParamRegistry<T>& registry() { return reg_; }
    const ParamRegistry<T>& registry() const { return reg_; }
    std::vector<Parameter<T>*> weights() { return reg_.group(ParamGroup::weight); }
    std::vector<Parameter<T>*> arch_params() { return reg_.group(ParamGroup::arch); }

    const Stem<T>& stem() const { return stem_; }
    const std::vector<MixedCell<T>>& cells() const { return cells_; }
    const TensorPtr<T>& alpha_normal() const { return alpha_normal_; }
    const TensorPtr<T>& alpha_reduce() const { return alpha_reduce_; }

private:
    SupernetConfig config_;
    ParamRegistry<T> reg_;
    TensorPtr<T> alpha_normal_;
    TensorPtr<T> alpha_reduce_;
    Stem<T> stem_;
    std::vector<MixedCell<T>> cells_;
    Classifier<T> classifier_;
};

}  // namespace heartdarts
