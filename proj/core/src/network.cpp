// SPDX-License-Identifier: Apache-2.0
#include "heartdarts/network.hpp"

#include <algorithm>

#include "heartdarts/ops.hpp"
#include "heartdarts/rng.hpp"

namespace heartdarts {

namespace {

constexpr std::uint64_t kShuffleSalt = 0xd1b54a32d192ed03ULL;

bool contains(const std::vector<std::size_t>& v, std::size_t x) { return std::find(v.begin(), v.end(), x) != v.end(); }

template <typename T>
TensorPtr<T> zeros_like(const TensorPtr<T>& x) {
    return make_tensor<T>(x->shape);
}

template <typename T>
void check_input(const FinalNetwork<T>& net, const Shape& s) {
    if (s.channels != net.leads() || s.length != net.length())
        throw ShapeError("network expects [b, " + std::to_string(net.leads()) + ", " + std::to_string(net.length()) +
                         "], got " + to_string(s));
}

}  // namespace

void TrainConfig::validate() const {
    if (epochs == 0) throw ConfigError("training epochs must be at least 1");
    if (batch_size == 0) throw ConfigError("training batch size must be at least 1");
    if (init_channels == 0) throw ConfigError("training channels must be at least 1");
    if (layers < 3) throw ConfigError("the network needs at least 3 layers, got " + std::to_string(layers));
}

ShortcutPlan shortcut_plan(std::size_t layers) {
    const auto [r1, r2] = reduction_indices(layers);
    ShortcutPlan plan;
    for (std::size_t i = 0; i < layers; ++i) {
        if (i == 0 || i == r1 || i == r2)
            plan.capture.push_back(i);
        else if (i + 1 == r1 || i + 1 == r2)
            plan.add.push_back(i);
    }
    return plan;
}

template <typename T>
DiscreteCell<T>::DiscreteCell(ParamRegistry<T>& reg, const std::string& id, const CellGenotype& genotype,
                              std::size_t c_prev_prev, std::size_t c_prev, std::size_t channels, bool reduction,
                              bool reduction_prev)
    : reduction_(reduction),
      channels_(channels),
      genotype_(genotype),
      pre0_(reg, id + ".pre0", c_prev_prev, channels, reduction_prev ? 2 : 1, true),
      pre1_(reg, id + ".pre1", c_prev, channels, 1, true) {
    for (std::size_t k = 0; k < kIntermediateNodes; ++k)
        for (std::size_t slot = 0; slot < 2; ++slot) {
            const auto& edge = genotype[k][slot];
            const std::size_t stride = (reduction && edge.pred < kInputNodes) ? 2 : 1;
            const std::string op_id = id + ".node" + std::to_string(k + kInputNodes) + "." + std::to_string(slot) +
                                      "." + std::string(op_name(edge.op));
            ops_[k][slot] = CandidateOp<T>(reg, op_id, edge.op, channels, stride, false);
        }
}

template <typename T>
std::pair<TensorPtr<T>, TensorPtr<T>> DiscreteCell<T>::preprocess(Tape<T>& tape, const TensorPtr<T>& s0,
                                                                  const TensorPtr<T>& s1, bool training) const {
    return {pre0_.forward(tape, s0, training), pre1_.forward(tape, s1, training)};
}

template <typename T>
TensorPtr<T> DiscreteCell<T>::forward_nodes(Tape<T>& tape, const TensorPtr<T>& s0, const TensorPtr<T>& s1,
                                            bool training) const {
    if (s0->shape != s1->shape)
        throw ShapeError("cell inputs disagree after preprocessing: " + to_string(s0->shape) + " vs " +
                         to_string(s1->shape));
    std::vector<TensorPtr<T>> nodes = {s0, s1};
    for (std::size_t k = 0; k < kIntermediateNodes; ++k) {
        auto a = ops_[k][0].forward(tape, nodes[genotype_[k][0].pred], training);
        auto b = ops_[k][1].forward(tape, nodes[genotype_[k][1].pred], training);
        nodes.push_back(ops::add(tape, a, b));
    }
    return ops::concat_channels(tape, std::vector<TensorPtr<T>>(nodes.begin() + kInputNodes, nodes.end()));
}

template <typename T>
TensorPtr<T> DiscreteCell<T>::forward(Tape<T>& tape, const TensorPtr<T>& s0, const TensorPtr<T>& s1,
                                      bool training) const {
    auto [p0, p1] = preprocess(tape, s0, s1, training);
    return forward_nodes(tape, p0, p1, training);
}

template <typename T>
FinalNetwork<T>::FinalNetwork(const Genotype& genotype, const TrainConfig& config, std::size_t leads,
                              std::size_t length)
    : genotype_(genotype), config_(config), leads_(leads), length_(length), reg_(config.seed) {
    validate(genotype);
    config.validate();
    if (leads < 1 || leads > 2) throw ConfigError("leads must be 1 or 2, got " + std::to_string(leads));
    plan_ = shortcut_plan(config.layers);
    stem_ = Stem<T>(reg_, leads, config.init_channels);

    const auto [r1, r2] = reduction_indices(config.layers);
    std::size_t c_pp = config.init_channels, c_p = config.init_channels, c = config.init_channels;
    bool reduction_prev = false;
    for (std::size_t i = 0; i < config.layers; ++i) {
        const bool reduction = (i == r1 || i == r2);
        if (reduction) c *= 2;
        cells_.emplace_back(reg_, "cells." + std::to_string(i), reduction ? genotype.reduce : genotype.normal, c_pp,
                            c_p, c, reduction, reduction_prev);
        reduction_prev = reduction;
        c_pp = c_p;
        c_p = kIntermediateNodes * c;
    }
    classifier_ = Classifier<T>(reg_, c_p, kNumAamiClasses);
}

template <typename T>
TensorPtr<T> FinalNetwork<T>::forward(Tape<T>& tape, const TensorPtr<T>& x, bool training, ShortcutMode mode,
                                      std::vector<ShortcutEvent>* trace) const {
    check_input(*this, x->shape);
    auto s0 = stem_.forward(tape, x, training);
    auto s1 = s0;
    TensorPtr<T> t;
    for (std::size_t i = 0; i < cells_.size(); ++i) {
        auto out = cells_[i].forward(tape, s0, s1, training);
        s0 = s1;
        s1 = out;
        if (mode == ShortcutMode::disabled) continue;
        if (contains(plan_.capture, i)) {
            t = mode == ShortcutMode::enabled ? s1 : zeros_like(s1);
            if (trace) trace->push_back({ShortcutEvent::Kind::capture, i, t->shape});
        } else if (contains(plan_.add, i)) {
            if (trace) trace->push_back({ShortcutEvent::Kind::add, i, t->shape});
            s0 = ops::relu(tape, ops::add(tape, s0, t));
            s1 = ops::relu(tape, ops::add(tape, s1, t));
        }
    }
    return classifier_.forward(tape, s1);
}

template <typename T>
std::vector<Shape> FinalNetwork<T>::shape_trace(std::size_t batch) const {
    std::vector<Shape> trace;
    std::size_t len = ops::pooled_length(ops::pooled_length(length_, 5, 2, 2), 3, 2, 1);
    trace.push_back({batch, config_.init_channels, len});
    for (const auto& cell : cells_) {
        if (cell.reduction()) len = ops::pooled_length(len, 1, 2, 0);
        trace.push_back({batch, kIntermediateNodes * cell.channels(), len});
    }
    return trace;
}

template <typename T>
TrainHistory train_final(FinalNetwork<T>& net, const HeartbeatDataset& ds,
                         const std::function<void(const TrainEpochLog&)>& log) {
    if (ds.leads != net.leads() || ds.window_len != net.length())
        throw ShapeError("dataset beats are " + std::to_string(ds.leads) + "x" + std::to_string(ds.window_len) +
                         ", network expects " + std::to_string(net.leads()) + "x" + std::to_string(net.length()));
    auto train = ds.indices(Split::search_train);
    if (train.empty()) throw InputError("training split is empty");
    const bool has_val = ds.has_split(Split::search_val);

    const auto& cfg = net.config();
    auto weights = net.weights();
    Optimizer<T> opt(cfg.weight_opt, weights);
    Rng rng(cfg.seed ^ kShuffleSalt);
    TrainHistory history;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = cosine_lr(epoch, cfg.epochs, cfg.weight_opt.lr, cfg.lr_min);
        opt.set_lr(lr);
        for (std::size_t i = train.size(); i > 1; --i) std::swap(train[i - 1], train[rng.below(i)]);
        double loss_sum = 0.0;
        std::size_t steps = 0;
        for (std::size_t start = 0; start < train.size(); start += cfg.batch_size) {
            const std::size_t n = std::min(cfg.batch_size, train.size() - start);
            const auto batch = make_batch<T>(ds, std::span(train).subspan(start, n));
            zero_grad(weights);
            Tape<T> tape;
            auto logits = net.forward(tape, batch.x, true);
            auto loss = ops::cross_entropy(tape, logits, batch.labels);
            tape.backward(loss);
            if (cfg.grad_clip > 0.0) clip_grad_norm(weights, cfg.grad_clip);
            opt.step(weights);
            loss_sum += static_cast<double>(loss->values[0]);
            ++steps;
        }
        TrainEpochLog entry{epoch + 1, lr, loss_sum / static_cast<double>(steps), std::nullopt};
        history.train_loss.push_back(entry.train_loss);
        if (has_val) {
            const auto cm = evaluate(net, ds, Split::search_val, cfg.batch_size);
            entry.val_accuracy = 100.0 * static_cast<double>(cm.trace()) / static_cast<double>(cm.total());
            history.val_accuracy.push_back(*entry.val_accuracy);
        }
        if (log) log(entry);
    }
    return history;
}

namespace {

template <typename T>
std::vector<int> argmax_impl(const Tensor<T>& logits) {
    const auto& s = logits.shape;
    std::vector<int> out(s.batch);
    const std::size_t classes = s.channels * s.length;
    for (std::size_t b = 0; b < s.batch; ++b) {
        const T* row = logits.values.data() + b * classes;
        out[b] = static_cast<int>(std::max_element(row, row + classes) - row);
    }
    return out;
}

}  // namespace

std::vector<int> argmax_rows(const Tensor<float>& logits) { return argmax_impl(logits); }
std::vector<int> argmax_rows(const Tensor<double>& logits) { return argmax_impl(logits); }

template <typename T>
std::vector<int> predict(const FinalNetwork<T>& net, const TensorPtr<T>& x) {
    check_input(net, x->shape);
    Tape<T> tape(false);
    return argmax_rows(*net.forward(tape, x, false));
}

template <typename T>
ConfusionMatrix evaluate(const FinalNetwork<T>& net, const HeartbeatDataset& ds, Split split, std::size_t batch_size) {
    if (batch_size == 0) throw ConfigError("evaluation batch size must be at least 1");
    const auto idx = ds.indices(split);
    ConfusionMatrix cm;
    for (std::size_t start = 0; start < idx.size(); start += batch_size) {
        const std::size_t n = std::min(batch_size, idx.size() - start);
        const auto batch = make_batch<T>(ds, std::span(idx).subspan(start, n));
        const auto pred = predict(net, batch.x);
        for (std::size_t i = 0; i < n; ++i) cm.accumulate(batch.labels[i], pred[i]);
    }
    return cm;
}

std::vector<std::uint8_t> encode_model(const FinalNetwork<float>& net) {
    const auto& c = net.config();
    ByteWriter w;
    w.magic(kModelMagic);
    w.put(kModelVersion);
    w.put_string(serialize_genotype(net.genotype()));
    w.put(static_cast<std::uint64_t>(c.epochs));
    w.put(static_cast<std::uint64_t>(c.batch_size));
    w.put(static_cast<std::uint64_t>(c.init_channels));
    w.put(static_cast<std::uint64_t>(c.layers));
    w.put(c.seed);
    w.put(static_cast<std::uint8_t>(c.weight_opt.kind));
    w.put_f64(c.weight_opt.lr);
    w.put_f64(c.weight_opt.momentum);
    w.put_f64(c.weight_opt.beta1);
    w.put_f64(c.weight_opt.beta2);
    w.put_f64(c.weight_opt.weight_decay);
    w.put_f64(c.weight_opt.eps);
    w.put_f64(c.lr_min);
    w.put_f64(c.grad_clip);
    w.put(static_cast<std::uint64_t>(net.leads()));
    w.put(static_cast<std::uint64_t>(net.length()));
    write_registry(w, net.registry());
    return std::move(w).take();
}

FinalNetwork<float> decode_model(std::span<const std::uint8_t> bytes) {
    ByteReader<FormatError> r(bytes);
    r.expect_magic(kModelMagic);
    const auto version = r.get<std::uint32_t>("format version");
    if (version != kModelVersion)
        throw FormatError("unsupported model version " + std::to_string(version) + " (expected " +
                          std::to_string(kModelVersion) + ")");
    Genotype g;
    try {
        g = parse_genotype(r.get_string("genotype"));
    } catch (const Error& e) {
        throw FormatError(std::string("model genotype: ") + e.what());
    }
    TrainConfig c;
    c.epochs = r.get<std::uint64_t>("epochs");
    c.batch_size = r.get<std::uint64_t>("batch size");
    c.init_channels = r.get<std::uint64_t>("channels");
    c.layers = r.get<std::uint64_t>("layers");
    c.seed = r.get<std::uint64_t>("seed");
    const auto kind = r.get<std::uint8_t>("optimizer kind");
    if (kind > 1) throw FormatError("unknown optimizer kind " + std::to_string(kind));
    c.weight_opt.kind = static_cast<OptimizerKind>(kind);
    c.weight_opt.lr = r.get_f64();
    c.weight_opt.momentum = r.get_f64();
    c.weight_opt.beta1 = r.get_f64();
    c.weight_opt.beta2 = r.get_f64();
    c.weight_opt.weight_decay = r.get_f64();
    c.weight_opt.eps = r.get_f64();
    c.lr_min = r.get_f64();
    c.grad_clip = r.get_f64();
    const auto leads = r.get<std::uint64_t>("leads");
    const auto length = r.get<std::uint64_t>("length");
    if (leads < 1 || leads > 2 || length < 32 || length > (1u << 20)) throw FormatError("stored input shape is invalid");
    try {
        c.validate();
    } catch (const ConfigError& e) {
        throw FormatError(std::string("stored configuration is invalid: ") + e.what());
    }
    FinalNetwork<float> net(g, c, leads, length);
    auto values = read_registry(r, net.registry());
    r.expect_end();
    apply_registry(net.registry(), std::move(values));
    return net;
}

void save_model(const std::string& path, const FinalNetwork<float>& net) { write_file_bytes(path, encode_model(net)); }

FinalNetwork<float> load_model(const std::string& path) { return decode_model(read_file_bytes(path)); }

template class DiscreteCell<float>;
template class DiscreteCell<double>;
template class FinalNetwork<float>;
template class FinalNetwork<double>;
template TrainHistory train_final(FinalNetwork<float>&, const HeartbeatDataset&,
                                  const std::function<void(const TrainEpochLog&)>&);
template TrainHistory train_final(FinalNetwork<double>&, const HeartbeatDataset&,
                                  const std::function<void(const TrainEpochLog&)>&);
template std::vector<int> predict(const FinalNetwork<float>&, const TensorPtr<float>&);
template std::vector<int> predict(const FinalNetwork<double>&, const TensorPtr<double>&);
template ConfusionMatrix evaluate(const FinalNetwork<float>&, const HeartbeatDataset&, Split, std::size_t);
template ConfusionMatrix evaluate(const FinalNetwork<double>&, const HeartbeatDataset&, Split, std::size_t);

}  // namespace heartdarts
