// SPDX-License-Identifier: Apache-2.0
#include "heartdarts/tensor.hpp"

#include <algorithm>

namespace heartdarts {

std::string to_string(const Shape& s) {
    return "[" + std::to_string(s.batch) + "," + std::to_string(s.channels) + "," + std::to_string(s.length) + "]";
}

template <typename T>
Tensor<T>::Tensor(Shape s, std::vector<T> v) : shape(s), values(std::move(v)) {
    if (values.size() != s.numel())
        throw ShapeError("tensor of shape " + to_string(s) + " given " + std::to_string(values.size()) + " values");
}

template <typename T>
std::vector<T>& Tensor<T>::grad_buffer() {
    if (grad.size() != values.size()) grad.assign(values.size(), T(0));
    return grad;
}

template <typename T>
void Tape<T>::record(std::vector<TensorPtr<T>> inputs, TensorPtr<T> output, std::function<void()> backward) {
    if (!enabled_) return;
    if (consumed_) {
        // A new forward after backward starts a fresh graph.
        entries_.clear();
        consumed_ = false;
    }
    entries_.push_back(Entry{std::move(inputs), std::move(output), std::move(backward)});
}

template <typename T>
void Tape<T>::backward(const TensorPtr<T>& loss) {
    if (consumed_) throw StateError("backward called twice without a new forward pass");
    if (entries_.empty() || !loss) throw StateError("backward called before any forward pass was recorded");
    const bool on_tape = std::any_of(entries_.begin(), entries_.end(),
                                     [&](const Entry& e) { return e.output == loss; });
    if (!on_tape) throw StateError("loss tensor was not produced by an operation on this tape");
    if (loss->values.size() != 1) throw ShapeError("backward needs a scalar loss, got " + to_string(loss->shape));

    loss->grad_buffer()[0] += T(1);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
        if (it->output->has_grad()) it->backward();
    }
    consumed_ = true;
    // Drop closures so intermediate activations are released.
    std::vector<Entry>().swap(entries_);
}

template <typename T>
void Tape<T>::clear() {
    entries_.clear();
    consumed_ = false;
}

template struct Tensor<float>;
template struct Tensor<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace heartdarts
