// SPDX-License-Identifier: Apache-2.0
//
// Building blocks shared by the search network and the final network.
#pragma once

#include <memory>
#include <string>
#include <vector>

#include "heartdarts/binary_io.hpp"
#include "heartdarts/ops.hpp"
#include "heartdarts/rng.hpp"
#include "heartdarts/search_space.hpp"
#include "heartdarts/tensor.hpp"

namespace heartdarts {

/// Owns every parameter and batch-norm buffer of one network, in creation
/// order. Initialization draws from a single seeded stream, so the same
/// construction sequence always yields the same weights.
template <typename T>
class ParamRegistry {
public:
    explicit ParamRegistry(std::uint64_t seed) : rng_(seed) {}

    /// Zero-mean normal with std sqrt(2 / fan_in); shape [out, in, k].
    TensorPtr<T> he_normal(const std::string& id, Shape shape);
    TensorPtr<T> constant(const std::string& id, Shape shape, T value, ParamGroup group = ParamGroup::weight);
    /// Normal(0, stddev) in the arch group.
    TensorPtr<T> arch(const std::string& id, Shape shape, double stddev);
    std::shared_ptr<BatchNormStats<T>> bn_stats(const std::string& id, std::size_t channels);

    std::vector<Parameter<T>>& params() { return params_; }
    const std::vector<Parameter<T>>& params() const { return params_; }
    std::vector<std::shared_ptr<BatchNormStats<T>>>& bn_stats() { return bn_; }
    const std::vector<std::shared_ptr<BatchNormStats<T>>>& bn_stats() const { return bn_; }

    std::vector<Parameter<T>*> group(ParamGroup g);
    void set_requires_grad(ParamGroup g, bool on);
    std::size_t parameter_count(ParamGroup g) const;

private:
    TensorPtr<T> add(const std::string& id, Shape shape, ParamGroup group);

    Rng rng_;
    std::vector<Parameter<T>> params_;
    std::vector<std::shared_ptr<BatchNormStats<T>>> bn_;
};

template <typename T>
struct BatchNorm {
    std::shared_ptr<BatchNormStats<T>> stats;
    TensorPtr<T> gamma;  // null without affine
    TensorPtr<T> beta;

    BatchNorm() = default;
    BatchNorm(ParamRegistry<T>& reg, const std::string& id, std::size_t channels, bool affine);
    TensorPtr<T> forward(Tape<T>& tape, const TensorPtr<T>& x, bool training) const;
};

/// conv(k, stride, padding k/2, no bias) -> BN -> optional ReLU.
template <typename T>
struct ConvBn {
    TensorPtr<T> kernel;
    std::size_t stride = 1;
    std::size_t padding = 0;
    BatchNorm<T> bn;
    bool relu = true;

    ConvBn() = default;
    ConvBn(ParamRegistry<T>& reg, const std::string& id, std::size_t c_in, std::size_t c_out, std::size_t k,
           std::size_t stride, bool affine, bool relu);
    TensorPtr<T> forward(Tape<T>& tape, const TensorPtr<T>& x, bool training) const;
};

/// Cell input adapter: ReLU -> 1x1 conv (stride 1 or 2) -> BN.
template <typename T>
struct Preprocess {
    TensorPtr<T> kernel;
    std::size_t stride = 1;
    BatchNorm<T> bn;

    Preprocess() = default;
    Preprocess(ParamRegistry<T>& reg, const std::string& id, std::size_t c_in, std::size_t c_out, std::size_t stride,
               bool affine);
    TensorPtr<T> forward(Tape<T>& tape, const TensorPtr<T>& x, bool training) const;
};

/// conv(k=5, stride 2) -> BN -> ReLU -> maxpool(k=3, stride 2).
template <typename T>
struct Stem {
    ConvBn<T> conv;

    Stem() = default;
    Stem(ParamRegistry<T>& reg, std::size_t leads, std::size_t channels);
    TensorPtr<T> forward(Tape<T>& tape, const TensorPtr<T>& x, bool training) const;
};

/// Global average pooling over time, then one linear layer.
template <typename T>
struct Classifier {
    TensorPtr<T> weight;
    TensorPtr<T> bias;

    Classifier() = default;
    Classifier(ParamRegistry<T>& reg, std::size_t channels, std::size_t classes);
    TensorPtr<T> forward(Tape<T>& tape, const TensorPtr<T>& x) const;
};

/// One concrete candidate operation on a cell edge.
///
/// Convolutions are Conv-BN-ReLU. Pooling is followed by a non-affine BN in
/// the search network and is plain in the final network. On stride-2 edges
/// skip_connect becomes a 1x1 stride-2 Conv-BN and zero emits zeros at the
/// strided shape.
template <typename T>
class CandidateOp {
public:
    CandidateOp() = default;
    CandidateOp(ParamRegistry<T>& reg, const std::string& id, OpKind kind, std::size_t channels, std::size_t stride,
                bool searching);

    OpKind kind() const { return kind_; }
    std::size_t stride() const { return stride_; }
    TensorPtr<T> forward(Tape<T>& tape, const TensorPtr<T>& x, bool training) const;

    const ConvBn<T>& conv() const { return conv_; }
    const BatchNorm<T>* pool_bn() const { return has_pool_bn_ ? &pool_bn_ : nullptr; }

private:
    OpKind kind_ = OpKind::zero;
    std::size_t stride_ = 1;
    ConvBn<T> conv_;          // conv ops and strided skip
    BatchNorm<T> pool_bn_;    // pooling during search
    bool has_pool_bn_ = false;
};

/// Writes every parameter (id, group, shape, values) and batch-norm buffer.
template <typename T>
void write_registry(ByteWriter& w, const ParamRegistry<T>& reg);

/// Values read back for a registry, staged so a failed read leaves the
/// target network untouched. Ids, groups and shapes must match `reg`.
template <typename T>
struct RegistryValues {
    std::vector<std::vector<T>> params;
    std::vector<std::pair<std::vector<T>, std::vector<T>>> bn;
};

template <typename T, typename ErrorT>
RegistryValues<T> read_registry(ByteReader<ErrorT>& r, const ParamRegistry<T>& reg);

template <typename T>
void apply_registry(ParamRegistry<T>& reg, RegistryValues<T> values);

/// Reduction cell positions floor(n/3) and floor(2n/3).
std::pair<std::size_t, std::size_t> reduction_indices(std::size_t cells);

}  // namespace heartdarts
