// SPDX-License-Identifier: Apache-2.0
#include "heartdarts/optim.hpp"

#include <cmath>
#include <numbers>

namespace heartdarts {

OptimizerConfig OptimizerConfig::weight_default() {
    return OptimizerConfig{OptimizerKind::momentum_sgd, 0.025, 0.9, 0.5, 0.999, 3e-4, 1e-8};
}

OptimizerConfig OptimizerConfig::arch_default() {
    return OptimizerConfig{OptimizerKind::adaptive_moments, 3e-4, 0.9, 0.5, 0.999, 1e-3, 1e-8};
}

template <typename T>
Optimizer<T>::Optimizer(OptimizerConfig config, const std::vector<Parameter<T>*>& params) : config_(config) {
    for (const auto* p : params) {
        first_.emplace_back(p->tensor->values.size(), T(0));
        if (config_.kind == OptimizerKind::adaptive_moments) second_.emplace_back(p->tensor->values.size(), T(0));
    }
}

template <typename T>
void Optimizer<T>::step(const std::vector<Parameter<T>*>& params) {
    if (params.size() != first_.size())
        throw StateError("optimizer built for " + std::to_string(first_.size()) + " parameters, stepped with " +
                         std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& t = *params[i]->tensor;
        if (t.grad.size() != t.values.size()) throw StateError("missing gradient for parameter " + params[i]->id);
        if (first_[i].size() != t.values.size())
            throw StateError("optimizer buffer shape mismatch for parameter " + params[i]->id);
    }
    ++steps_;
    const T lr = static_cast<T>(config_.lr);
    const T wd = static_cast<T>(config_.weight_decay);
    if (config_.kind == OptimizerKind::momentum_sgd) {
        const T m = static_cast<T>(config_.momentum);
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& t = *params[i]->tensor;
            auto& v = first_[i];
            for (std::size_t j = 0; j < v.size(); ++j) {
                v[j] = m * v[j] + t.grad[j] + wd * t.values[j];
                t.values[j] -= lr * v[j];
            }
        }
        return;
    }
    const double b1 = config_.beta1, b2 = config_.beta2;
    const T bias1 = static_cast<T>(1.0 - std::pow(b1, static_cast<double>(steps_)));
    const T bias2 = static_cast<T>(1.0 - std::pow(b2, static_cast<double>(steps_)));
    const T eps = static_cast<T>(config_.eps);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& t = *params[i]->tensor;
        auto& m1 = first_[i];
        auto& m2 = second_[i];
        for (std::size_t j = 0; j < m1.size(); ++j) {
            const T g = t.grad[j] + wd * t.values[j];
            m1[j] = static_cast<T>(b1) * m1[j] + static_cast<T>(1.0 - b1) * g;
            m2[j] = static_cast<T>(b2) * m2[j] + static_cast<T>(1.0 - b2) * g * g;
            const T mhat = m1[j] / bias1;
            const T vhat = m2[j] / bias2;
            t.values[j] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

template <typename T>
void Optimizer<T>::save(ByteWriter& w) const {
    w.put(static_cast<std::uint8_t>(config_.kind));
    w.put_f64(config_.lr);
    w.put_f64(config_.momentum);
    w.put_f64(config_.beta1);
    w.put_f64(config_.beta2);
    w.put_f64(config_.weight_decay);
    w.put_f64(config_.eps);
    w.put(steps_);
    w.put(static_cast<std::uint64_t>(first_.size()));
    for (const auto& b : first_) {
        w.put(static_cast<std::uint64_t>(b.size()));
        w.put_reals<T>(b);
    }
    w.put(static_cast<std::uint64_t>(second_.size()));
    for (const auto& b : second_) {
        w.put(static_cast<std::uint64_t>(b.size()));
        w.put_reals<T>(b);
    }
}

template <typename T>
void Optimizer<T>::load(ByteReader<CheckpointError>& r) {
    OptimizerConfig c;
    const auto kind = r.get<std::uint8_t>("optimizer kind");
    if (kind > 1) throw CheckpointError("unknown optimizer kind " + std::to_string(kind));
    c.kind = static_cast<OptimizerKind>(kind);
    c.lr = r.get_f64();
    c.momentum = r.get_f64();
    c.beta1 = r.get_f64();
    c.beta2 = r.get_f64();
    c.weight_decay = r.get_f64();
    c.eps = r.get_f64();
    if (c.kind != config_.kind) throw CheckpointError("optimizer kind mismatch");
    const auto steps = r.get<std::uint64_t>("step count");
    auto read_buffers = [&](std::vector<std::vector<T>>& dst, const char* what) {
        const auto n = r.get<std::uint64_t>(what);
        if (n != dst.size())
            throw CheckpointError(std::string(what) + ": expected " + std::to_string(dst.size()) + " buffers, found " +
                                  std::to_string(n));
        std::vector<std::vector<T>> tmp(dst.size());
        for (std::size_t i = 0; i < dst.size(); ++i) {
            const auto len = r.get<std::uint64_t>(what);
            if (len != dst[i].size()) throw CheckpointError(std::string(what) + ": buffer size mismatch");
            tmp[i].resize(len);
            r.get_reals<T>(tmp[i]);
        }
        return tmp;
    };
    auto f = read_buffers(first_, "first-moment buffers");
    auto s = read_buffers(second_, "second-moment buffers");
    config_ = c;
    steps_ = steps;
    first_ = std::move(f);
    second_ = std::move(s);
}

double cosine_lr(std::size_t epoch, std::size_t total_epochs, double lr_max, double lr_min) {
    if (total_epochs < 2) return lr_max;
    const double frac = static_cast<double>(epoch) / static_cast<double>(total_epochs - 1);
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(std::numbers::pi * frac));
}

template <typename T>
double clip_grad_norm(const std::vector<Parameter<T>*>& params, double max_norm) {
    double sq = 0.0;
    for (const auto* p : params)
        for (T g : p->tensor->grad) sq += static_cast<double>(g) * g;
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const T scale = static_cast<T>(max_norm / (norm + 1e-6));
        for (auto* p : params)
            for (T& g : p->tensor->grad) g *= scale;
    }
    return norm;
}

template <typename T>
void zero_grad(const std::vector<Parameter<T>*>& params) {
    for (auto* p : params) p->tensor->zero_grad();
}

template class Optimizer<float>;
template class Optimizer<double>;
template double clip_grad_norm(const std::vector<Parameter<float>*>&, double);
template double clip_grad_norm(const std::vector<Parameter<double>*>&, double);
template void zero_grad(const std::vector<Parameter<float>*>&);
template void zero_grad(const std::vector<Parameter<double>*>&);

}  // namespace heartdarts
