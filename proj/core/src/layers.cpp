// SPDX-License-Identifier: Apache-2.0
#include "heartdarts/layers.hpp"

#include <cmath>

namespace heartdarts {

template <typename T>
TensorPtr<T> ParamRegistry<T>::add(const std::string& id, Shape shape, ParamGroup group) {
    for (const auto& p : params_)
        if (p.id == id) throw StateError("duplicate parameter id " + id);
    auto t = make_tensor<T>(shape);
    t->requires_grad = true;
    params_.push_back(Parameter<T>{id, group, t});
    return t;
}

template <typename T>
TensorPtr<T> ParamRegistry<T>::he_normal(const std::string& id, Shape shape) {
    auto t = add(id, shape, ParamGroup::weight);
    const double stddev = std::sqrt(2.0 / static_cast<double>(shape.channels * shape.length));
    for (T& v : t->values) v = static_cast<T>(stddev * rng_.normal());
    return t;
}

template <typename T>
TensorPtr<T> ParamRegistry<T>::constant(const std::string& id, Shape shape, T value, ParamGroup group) {
    auto t = add(id, shape, group);
    std::fill(t->values.begin(), t->values.end(), value);
    return t;
}

template <typename T>
TensorPtr<T> ParamRegistry<T>::arch(const std::string& id, Shape shape, double stddev) {
    auto t = add(id, shape, ParamGroup::arch);
    for (T& v : t->values) v = static_cast<T>(stddev * rng_.normal());
    return t;
}

template <typename T>
std::shared_ptr<BatchNormStats<T>> ParamRegistry<T>::bn_stats(const std::string& id, std::size_t channels) {
    auto s = std::make_shared<BatchNormStats<T>>();
    s->id = id;
    s->mean.assign(channels, T(0));
    s->var.assign(channels, T(1));
    bn_.push_back(s);
    return s;
}

template <typename T>
std::vector<Parameter<T>*> ParamRegistry<T>::group(ParamGroup g) {
    std::vector<Parameter<T>*> out;
    for (auto& p : params_)
        if (p.group == g) out.push_back(&p);
    return out;
}

template <typename T>
void ParamRegistry<T>::set_requires_grad(ParamGroup g, bool on) {
    for (auto& p : params_)
        if (p.group == g) p.tensor->requires_grad = on;
}

template <typename T>
std::size_t ParamRegistry<T>::parameter_count(ParamGroup g) const {
    std::size_t n = 0;
    for (const auto& p : params_)
        if (p.group == g) n += p.tensor->values.size();
    return n;
}

// ------------------------------------------------------------------ layers

template <typename T>
BatchNorm<T>::BatchNorm(ParamRegistry<T>& reg, const std::string& id, std::size_t channels, bool affine)
    : stats(reg.bn_stats(id, channels)) {
    if (affine) {
        gamma = reg.constant(id + ".gamma", {1, channels, 1}, T(1));
        beta = reg.constant(id + ".beta", {1, channels, 1}, T(0));
    }
}

template <typename T>
TensorPtr<T> BatchNorm<T>::forward(Tape<T>& tape, const TensorPtr<T>& x, bool training) const {
    return ops::batchnorm1d(tape, x, gamma, beta, *stats, training);
}

template <typename T>
ConvBn<T>::ConvBn(ParamRegistry<T>& reg, const std::string& id, std::size_t c_in, std::size_t c_out, std::size_t k,
                  std::size_t stride_, bool affine, bool relu_)
    : kernel(reg.he_normal(id + ".conv", {c_out, c_in, k})),
      stride(stride_),
      padding(k / 2),
      bn(reg, id + ".bn", c_out, affine),
      relu(relu_) {}

template <typename T>
TensorPtr<T> ConvBn<T>::forward(Tape<T>& tape, const TensorPtr<T>& x, bool training) const {
    auto y = bn.forward(tape, ops::conv1d(tape, x, kernel, TensorPtr<T>{}, stride, padding), training);
    return relu ? ops::relu(tape, y) : y;
}

template <typename T>
Preprocess<T>::Preprocess(ParamRegistry<T>& reg, const std::string& id, std::size_t c_in, std::size_t c_out,
                          std::size_t stride_, bool affine)
    : kernel(reg.he_normal(id + ".conv", {c_out, c_in, 1})), stride(stride_), bn(reg, id + ".bn", c_out, affine) {}

template <typename T>
TensorPtr<T> Preprocess<T>::forward(Tape<T>& tape, const TensorPtr<T>& x, bool training) const {
    auto h = ops::relu(tape, x);
    return bn.forward(tape, ops::conv1d(tape, h, kernel, TensorPtr<T>{}, stride, 0), training);
}

template <typename T>
Stem<T>::Stem(ParamRegistry<T>& reg, std::size_t leads, std::size_t channels)
    : conv(reg, "stem", leads, channels, 5, 2, true, true) {}

template <typename T>
TensorPtr<T> Stem<T>::forward(Tape<T>& tape, const TensorPtr<T>& x, bool training) const {
    return ops::maxpool1d(tape, conv.forward(tape, x, training), 3, 2, 1);
}

template <typename T>
Classifier<T>::Classifier(ParamRegistry<T>& reg, std::size_t channels, std::size_t classes)
    : weight(reg.he_normal("classifier.weight", {classes, channels, 1})),
      bias(reg.constant("classifier.bias", {1, classes, 1}, T(0))) {}

template <typename T>
TensorPtr<T> Classifier<T>::forward(Tape<T>& tape, const TensorPtr<T>& x) const {
    return ops::linear(tape, ops::global_avgpool(tape, x), weight, bias);
}

template <typename T>
CandidateOp<T>::CandidateOp(ParamRegistry<T>& reg, const std::string& id, OpKind kind, std::size_t channels,
                            std::size_t stride, bool searching)
    : kind_(kind), stride_(stride) {
    const bool affine = !searching;
    if (is_conv(kind)) {
        conv_ = ConvBn<T>(reg, id, channels, channels, op_kernel_size(kind), stride, affine, true);
    } else if (is_pool(kind)) {
        if (searching) {
            pool_bn_ = BatchNorm<T>(reg, id + ".bn", channels, false);
            has_pool_bn_ = true;
        }
    } else if (kind == OpKind::skip_connect && stride != 1) {
        conv_ = ConvBn<T>(reg, id, channels, channels, 1, stride, affine, false);
    }
}

template <typename T>
TensorPtr<T> CandidateOp<T>::forward(Tape<T>& tape, const TensorPtr<T>& x, bool training) const {
    if (is_conv(kind_)) return conv_.forward(tape, x, training);
    if (is_pool(kind_)) {
        const std::size_t k = op_kernel_size(kind_);
        auto y = ops::maxpool1d(tape, x, k, stride_, k / 2);
        return has_pool_bn_ ? pool_bn_.forward(tape, y, training) : y;
    }
    if (kind_ == OpKind::skip_connect) return stride_ == 1 ? x : conv_.forward(tape, x, training);
    const Shape s = x->shape;
    return make_tensor<T>({s.batch, s.channels, ops::pooled_length(s.length, 1, stride_, 0)});
}

template <typename T>
void write_registry(ByteWriter& w, const ParamRegistry<T>& reg) {
    w.put(static_cast<std::uint8_t>(sizeof(T)));
    w.put(static_cast<std::uint64_t>(reg.params().size()));
    for (const auto& p : reg.params()) {
        w.put_string(p.id);
        w.put(static_cast<std::uint8_t>(p.group));
        w.put(static_cast<std::uint64_t>(p.tensor->shape.batch));
        w.put(static_cast<std::uint64_t>(p.tensor->shape.channels));
        w.put(static_cast<std::uint64_t>(p.tensor->shape.length));
        w.put_reals<T>(p.tensor->values);
    }
    w.put(static_cast<std::uint64_t>(reg.bn_stats().size()));
    for (const auto& s : reg.bn_stats()) {
        w.put_string(s->id);
        w.put(static_cast<std::uint64_t>(s->mean.size()));
        w.put_reals<T>(s->mean);
        w.put_reals<T>(s->var);
    }
}

template <typename T, typename ErrorT>
RegistryValues<T> read_registry(ByteReader<ErrorT>& r, const ParamRegistry<T>& reg) {
    const auto scalar = r.template get<std::uint8_t>("scalar size");
    if (scalar != sizeof(T))
        throw ErrorT("stored scalar size " + std::to_string(scalar) + " does not match " + std::to_string(sizeof(T)));
    RegistryValues<T> out;
    const auto n = r.template get<std::uint64_t>("parameter count");
    if (n != reg.params().size())
        throw ErrorT("stored " + std::to_string(n) + " parameters, network has " + std::to_string(reg.params().size()));
    for (const auto& p : reg.params()) {
        const auto id = r.get_string("parameter id");
        if (id != p.id) throw ErrorT("parameter id mismatch: stored " + id + ", expected " + p.id);
        const auto group = r.template get<std::uint8_t>("parameter group");
        Shape s;
        s.batch = r.template get<std::uint64_t>("shape");
        s.channels = r.template get<std::uint64_t>("shape");
        s.length = r.template get<std::uint64_t>("shape");
        if (group != static_cast<std::uint8_t>(p.group) || s != p.tensor->shape)
            throw ErrorT("parameter " + id + " has a different group or shape");
        std::vector<T> v(s.numel());
        r.template get_reals<T>(v);
        out.params.push_back(std::move(v));
    }
    const auto nb = r.template get<std::uint64_t>("batchnorm count");
    if (nb != reg.bn_stats().size()) throw ErrorT("batchnorm buffer count mismatch");
    for (const auto& st : reg.bn_stats()) {
        const auto id = r.get_string("batchnorm id");
        if (id != st->id) throw ErrorT("batchnorm id mismatch: stored " + id + ", expected " + st->id);
        const auto c = r.template get<std::uint64_t>("batchnorm channels");
        if (c != st->mean.size()) throw ErrorT("batchnorm " + id + " channel mismatch");
        std::vector<T> mean(c), var(c);
        r.template get_reals<T>(mean);
        r.template get_reals<T>(var);
        out.bn.emplace_back(std::move(mean), std::move(var));
    }
    return out;
}

template <typename T>
void apply_registry(ParamRegistry<T>& reg, RegistryValues<T> values) {
    for (std::size_t i = 0; i < values.params.size(); ++i) reg.params()[i].tensor->values = std::move(values.params[i]);
    for (std::size_t i = 0; i < values.bn.size(); ++i) {
        reg.bn_stats()[i]->mean = std::move(values.bn[i].first);
        reg.bn_stats()[i]->var = std::move(values.bn[i].second);
    }
}

std::pair<std::size_t, std::size_t> reduction_indices(std::size_t cells) { return {cells / 3, 2 * cells / 3}; }

template class ParamRegistry<float>;
template class ParamRegistry<double>;
template struct BatchNorm<float>;
template struct BatchNorm<double>;
template struct ConvBn<float>;
template struct ConvBn<double>;
template struct Preprocess<float>;
template struct Preprocess<double>;
template struct Stem<float>;
template struct Stem<double>;
template struct Classifier<float>;
template struct Classifier<double>;
template class CandidateOp<float>;
template class CandidateOp<double>;
template void write_registry(ByteWriter&, const ParamRegistry<float>&);
template void write_registry(ByteWriter&, const ParamRegistry<double>&);
template RegistryValues<float> read_registry(ByteReader<CheckpointError>&, const ParamRegistry<float>&);
template RegistryValues<double> read_registry(ByteReader<CheckpointError>&, const ParamRegistry<double>&);
template RegistryValues<float> read_registry(ByteReader<FormatError>&, const ParamRegistry<float>&);
template RegistryValues<double> read_registry(ByteReader<FormatError>&, const ParamRegistry<double>&);
template void apply_registry(ParamRegistry<float>&, RegistryValues<float>);
template void apply_registry(ParamRegistry<double>&, RegistryValues<double>);

}  // namespace heartdarts
