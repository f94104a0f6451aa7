// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode automatic differentiation over rank-3 tensors laid out as
// [batch][channel][position]. Tensors are shared nodes; operations append a
// backward closure to a Tape, and Tape::backward replays them in reverse.
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "heartdarts/error.hpp"

namespace heartdarts {

struct Shape {
    std::size_t batch = 0;
    std::size_t channels = 0;
    std::size_t length = 0;

    constexpr std::size_t numel() const { return batch * channels * length; }
    constexpr bool operator==(const Shape&) const = default;
};

std::string to_string(const Shape& s);

template <typename T>
struct Tensor {
    Shape shape;
    std::vector<T> values;
    std::vector<T> grad;  // empty until a backward pass touches this node
    bool requires_grad = false;

    Tensor() = default;
    Tensor(Shape s, T fill = T(0)) : shape(s), values(s.numel(), fill) {}
    Tensor(Shape s, std::vector<T> v);

    std::size_t index(std::size_t b, std::size_t c, std::size_t l) const {
        return (b * shape.channels + c) * shape.length + l;
    }
    T& at(std::size_t b, std::size_t c, std::size_t l) { return values[index(b, c, l)]; }
    T at(std::size_t b, std::size_t c, std::size_t l) const { return values[index(b, c, l)]; }

    bool has_grad() const { return !grad.empty(); }
    /// Allocates a zero gradient buffer if none exists and returns it.
    std::vector<T>& grad_buffer();
    void zero_grad() { grad.assign(values.size(), T(0)); }
};

template <typename T>
using TensorPtr = std::shared_ptr<Tensor<T>>;

template <typename T>
TensorPtr<T> make_tensor(Shape s, T fill = T(0)) {
    return std::make_shared<Tensor<T>>(s, fill);
}

template <typename T>
TensorPtr<T> make_tensor(Shape s, std::vector<T> values) {
    return std::make_shared<Tensor<T>>(s, std::move(values));
}

enum class ParamGroup : std::uint8_t { weight = 0, arch = 1 };

/// A trainable tensor owned by a network. `group` selects the optimizer.
template <typename T>
struct Parameter {
    std::string id;
    ParamGroup group = ParamGroup::weight;
    TensorPtr<T> tensor;
};

/// Running statistics for one batch-norm layer. Not trainable.
template <typename T>
struct BatchNormStats {
    std::string id;
    std::vector<T> mean;
    std::vector<T> var;
};

template <typename T>
class Tape {
public:
    struct Entry {
        std::vector<TensorPtr<T>> inputs;
        TensorPtr<T> output;
        std::function<void()> backward;
    };

    /// A disabled tape records nothing (inference).
    explicit Tape(bool enabled = true) : enabled_(enabled) {}

    bool recording() const { return enabled_; }

    void record(std::vector<TensorPtr<T>> inputs, TensorPtr<T> output, std::function<void()> backward);

    /// Seeds d(loss)/d(loss) = 1 and runs every recorded rule in reverse.
    /// The tape is consumed: a second call without a fresh forward throws.
    void backward(const TensorPtr<T>& loss);

    std::size_t size() const { return entries_.size(); }
    const std::vector<Entry>& entries() const { return entries_; }
    void clear();

private:
    std::vector<Entry> entries_;
    bool enabled_ = true;
    bool consumed_ = false;
};

}  // namespace heartdarts
