// SPDX-License-Identifier: Apache-2.0
//
// The differentiable operation set. Every op takes the tape it records
// onto; when no input requires a gradient nothing is recorded. Kernels
// may run in parallel but each output element has exactly one writer and
// a fixed summation order, so results do not depend on the thread count.
#pragma once

#include <span>
#include <vector>

#include "heartdarts/tensor.hpp"

namespace heartdarts::ops {

/// floor((length + 2*padding - k) / stride) + 1, or ShapeError if that is < 1.
std::size_t pooled_length(std::size_t length, std::size_t k, std::size_t stride, std::size_t padding);

/// Cross-correlation. kernel: [out_ch, in_ch, k]; bias (optional): [1, out_ch, 1].
template <typename T>
TensorPtr<T> conv1d(Tape<T>& tape, const TensorPtr<T>& x, const TensorPtr<T>& kernel, const TensorPtr<T>& bias,
                    std::size_t stride, std::size_t padding);

/// Per-channel normalization over (batch, position). gamma/beta may be null
/// (no affine). Training mode uses batch statistics and updates `running`.
template <typename T>
TensorPtr<T> batchnorm1d(Tape<T>& tape, const TensorPtr<T>& x, const TensorPtr<T>& gamma, const TensorPtr<T>& beta,
                         BatchNormStats<T>& running, bool training, double eps = 1e-5, double momentum = 0.1);

template <typename T>
TensorPtr<T> relu(Tape<T>& tape, const TensorPtr<T>& x);

/// Max pooling with implicit -inf padding; ties go to the first index.
template <typename T>
TensorPtr<T> maxpool1d(Tape<T>& tape, const TensorPtr<T>& x, std::size_t k, std::size_t stride, std::size_t padding);

/// [b, c, L] -> [b, c, 1].
template <typename T>
TensorPtr<T> global_avgpool(Tape<T>& tape, const TensorPtr<T>& x);

/// x is flattened per batch row to channels*length features.
/// weight: [out, in, 1]; bias: [1, out, 1]. Output [b, out, 1].
template <typename T>
TensorPtr<T> linear(Tape<T>& tape, const TensorPtr<T>& x, const TensorPtr<T>& weight, const TensorPtr<T>& bias);

template <typename T>
TensorPtr<T> add(Tape<T>& tape, const TensorPtr<T>& a, const TensorPtr<T>& b);

template <typename T>
TensorPtr<T> concat_channels(Tape<T>& tape, const std::vector<TensorPtr<T>>& parts);

/// Sum of all elements -> [1, 1, 1].
template <typename T>
TensorPtr<T> sum(Tape<T>& tape, const TensorPtr<T>& x);

/// Mean over the batch of -log softmax(logits)[label]. logits: [b, n, 1].
template <typename T>
TensorPtr<T> cross_entropy(Tape<T>& tape, const TensorPtr<T>& logits, std::span<const int> labels);

/// Row-wise softmax of a [1, rows, n] tensor along the last axis.
template <typename T>
TensorPtr<T> softmax_rows(Tape<T>& tape, const TensorPtr<T>& logits);

/// sum_o weights[0, row, o] * terms[o]. Null terms contribute exactly zero
/// (the zero operation). All non-null terms must share one shape.
template <typename T>
TensorPtr<T> weighted_sum(Tape<T>& tape, const std::vector<TensorPtr<T>>& terms, const TensorPtr<T>& weights,
                          std::size_t row);

/// Plain softmax with max subtraction.
template <typename T>
std::vector<T> softmax(std::span<const T> v);

}  // namespace heartdarts::ops
