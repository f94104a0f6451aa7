// SPDX-License-Identifier: Apache-2.0
#include "heartdarts/search.hpp"

#include <algorithm>
#include <numeric>

#include "heartdarts/ops.hpp"

namespace heartdarts {

namespace {

constexpr std::uint64_t kShuffleSalt = 0x9e3779b97f4a7c15ULL;

void put_opt_config(ByteWriter& w, const OptimizerConfig& c) {
    w.put(static_cast<std::uint8_t>(c.kind));
    w.put_f64(c.lr);
    w.put_f64(c.momentum);
    w.put_f64(c.beta1);
    w.put_f64(c.beta2);
    w.put_f64(c.weight_decay);
    w.put_f64(c.eps);
}

OptimizerConfig get_opt_config(ByteReader<CheckpointError>& r) {
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
    return c;
}

void put_history(ByteWriter& w, const std::vector<double>& v) {
    w.put(static_cast<std::uint64_t>(v.size()));
    w.put_reals<double>(v);
}

std::vector<double> get_history(ByteReader<CheckpointError>& r, std::size_t expected) {
    const auto n = r.get<std::uint64_t>("history length");
    if (n != expected) throw CheckpointError("history length disagrees with the epoch counter");
    std::vector<double> v(n);
    r.get_reals<double>(v);
    return v;
}

void put_alpha(ByteWriter& w, const AlphaMatrix& a) {
    for (const auto& row : a) w.put_reals<double>(row);
}

AlphaMatrix get_alpha(ByteReader<CheckpointError>& r) {
    AlphaMatrix a{};
    for (auto& row : a) r.get_reals<double>(row);
    return a;
}

SupernetConfig supernet_config(const SearchConfig& c, std::size_t leads, std::size_t length) {
    SupernetConfig s;
    s.leads = leads;
    s.length = length;
    s.channels = c.init_channels;
    s.cells = c.cells;
    s.seed = c.seed;
    return s;
}

}  // namespace

void SearchConfig::validate() const {
    if (epochs == 0) throw ConfigError("search epochs must be at least 1");
    if (batch_size == 0) throw ConfigError("search batch size must be at least 1");
    if (init_channels == 0) throw ConfigError("search channels must be at least 1");
    if (cells < 3) throw ConfigError("search needs at least 3 cells, got " + std::to_string(cells));
}

template <typename T>
SearchEngine<T>::SearchEngine(const SearchConfig& config, std::size_t leads, std::size_t length)
    : config_((config.validate(), config)),
      leads_(leads),
      length_(length),
      net_(supernet_config(config, leads, length)),
      opt_w_(config.weight_opt, net_.weights()),
      opt_a_(config.arch_opt, net_.arch_params()),
      rng_(config.seed ^ kShuffleSalt) {}

template <typename T>
TensorPtr<T> SearchEngine<T>::loss_on(const Batch<T>& batch) {
    Tape<T> tape;
    auto logits = net_.forward(tape, batch.x, true);
    auto loss = ops::cross_entropy(tape, logits, batch.labels);
    tape.backward(loss);
    return loss;
}

template <typename T>
StepLosses SearchEngine<T>::search_step(const Batch<T>& train, const Batch<T>& val) {
    if (train.labels.empty() || val.labels.empty()) throw InputError("search step needs non-empty batches");
    auto& reg = net_.registry();
    const auto weights = net_.weights();
    const auto arch = net_.arch_params();
    StepLosses out;

    reg.set_requires_grad(ParamGroup::weight, false);
    reg.set_requires_grad(ParamGroup::arch, true);
    zero_grad(arch);
    try {
        out.val_loss = static_cast<double>(loss_on(val)->values[0]);
        opt_a_.step(arch);

        reg.set_requires_grad(ParamGroup::weight, true);
        reg.set_requires_grad(ParamGroup::arch, false);
        zero_grad(weights);
        out.train_loss = static_cast<double>(loss_on(train)->values[0]);
        if (config_.grad_clip > 0.0) clip_grad_norm(weights, config_.grad_clip);
        opt_w_.step(weights);
    } catch (...) {
        reg.set_requires_grad(ParamGroup::weight, true);
        reg.set_requires_grad(ParamGroup::arch, true);
        throw;
    }
    reg.set_requires_grad(ParamGroup::arch, true);
    return out;
}

template <typename T>
EpochLog SearchEngine<T>::run_epoch(const HeartbeatDataset& ds) {
    if (ds.leads != leads_ || ds.window_len != length_)
        throw ShapeError("dataset beats are " + std::to_string(ds.leads) + "x" + std::to_string(ds.window_len) +
                         ", search network expects " + std::to_string(leads_) + "x" + std::to_string(length_));
    auto train = ds.indices(Split::search_train);
    const auto val = ds.indices(Split::search_val);
    if (train.empty() || val.empty()) throw ConfigError("search needs non-empty search_train and search_val splits");

    const double lr = cosine_lr(state_.epoch, config_.epochs, config_.weight_opt.lr, config_.lr_min);
    opt_w_.set_lr(lr);
    for (std::size_t i = train.size(); i > 1; --i) std::swap(train[i - 1], train[rng_.below(i)]);

    double train_sum = 0.0, val_sum = 0.0;
    std::size_t steps = 0;
    std::vector<std::size_t> val_idx;
    for (std::size_t start = 0; start < train.size(); start += config_.batch_size) {
        const std::size_t end = std::min(train.size(), start + config_.batch_size);
        val_idx.clear();
        for (std::size_t k = 0; k < end - start; ++k) {
            val_idx.push_back(val[state_.val_cursor % val.size()]);
            state_.val_cursor = (state_.val_cursor + 1) % val.size();
        }
        const auto tb = make_batch<T>(ds, std::span(train).subspan(start, end - start));
        const auto vb = make_batch<T>(ds, val_idx);
        const auto l = search_step(tb, vb);
        train_sum += l.train_loss;
        val_sum += l.val_loss;
        ++steps;
    }
    ++state_.epoch;
    EpochLog log{state_.epoch, lr, train_sum / static_cast<double>(steps), val_sum / static_cast<double>(steps)};
    state_.train_loss.push_back(log.train_loss);
    state_.val_loss.push_back(log.val_loss);
    state_.alpha_history.push_back(net_.arch());
    return log;
}

template <typename T>
void SearchEngine<T>::run(const HeartbeatDataset& ds, std::size_t until,
                          const std::function<void(const EpochLog&)>& log) {
    until = std::min(until, config_.epochs);
    while (state_.epoch < until) {
        const auto entry = run_epoch(ds);
        if (log) log(entry);
    }
}

template <typename T>
SearchState SearchEngine<T>::state() const {
    SearchState s = state_;
    s.rng_state = rng_.state();
    return s;
}

template <typename T>
std::vector<std::uint8_t> SearchEngine<T>::checkpoint() const {
    ByteWriter w;
    w.magic(kCheckpointMagic);
    w.put(kCheckpointVersion);
    w.put(static_cast<std::uint64_t>(config_.epochs));
    w.put(static_cast<std::uint64_t>(config_.batch_size));
    w.put(static_cast<std::uint64_t>(config_.init_channels));
    w.put(static_cast<std::uint64_t>(config_.cells));
    w.put(config_.seed);
    put_opt_config(w, config_.weight_opt);
    put_opt_config(w, config_.arch_opt);
    w.put_f64(config_.lr_min);
    w.put_f64(config_.grad_clip);
    w.put(static_cast<std::uint64_t>(leads_));
    w.put(static_cast<std::uint64_t>(length_));
    w.put_string(rng_.state());
    w.put(static_cast<std::uint64_t>(state_.epoch));
    w.put(state_.val_cursor);
    put_history(w, state_.train_loss);
    put_history(w, state_.val_loss);
    w.put(static_cast<std::uint64_t>(state_.alpha_history.size()));
    for (const auto& a : state_.alpha_history) {
        put_alpha(w, a.normal);
        put_alpha(w, a.reduce);
    }
    write_registry(w, net_.registry());
    opt_w_.save(w);
    opt_a_.save(w);
    return std::move(w).take();
}

template <typename T>
SearchEngine<T> SearchEngine<T>::restore(std::span<const std::uint8_t> bytes) {
    ByteReader<CheckpointError> r(bytes);
    r.expect_magic(kCheckpointMagic);
    const auto version = r.get<std::uint32_t>("format version");
    if (version != kCheckpointVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                              std::to_string(kCheckpointVersion) + ")");
    SearchConfig c;
    c.epochs = r.get<std::uint64_t>("epochs");
    c.batch_size = r.get<std::uint64_t>("batch size");
    c.init_channels = r.get<std::uint64_t>("channels");
    c.cells = r.get<std::uint64_t>("cells");
    c.seed = r.get<std::uint64_t>("seed");
    c.weight_opt = get_opt_config(r);
    c.arch_opt = get_opt_config(r);
    c.lr_min = r.get_f64();
    c.grad_clip = r.get_f64();
    const auto leads = r.get<std::uint64_t>("leads");
    const auto length = r.get<std::uint64_t>("length");
    try {
        c.validate();
    } catch (const ConfigError& e) {
        throw CheckpointError(std::string("stored configuration is invalid: ") + e.what());
    }
    if (leads == 0 || leads > 2 || length < 32 || length > (1u << 20))
        throw CheckpointError("stored input shape is invalid");

    const auto rng_state = r.get_string("rng state");
    SearchState st;
    st.epoch = r.get<std::uint64_t>("epoch");
    st.val_cursor = r.get<std::uint64_t>("validation cursor");
    if (st.epoch > c.epochs) throw CheckpointError("stored epoch exceeds the configured epoch count");
    st.train_loss = get_history(r, st.epoch);
    st.val_loss = get_history(r, st.epoch);
    const auto na = r.get<std::uint64_t>("alpha history length");
    if (na != st.epoch) throw CheckpointError("alpha history length disagrees with the epoch counter");
    for (std::size_t i = 0; i < na; ++i) {
        ArchParams a;
        a.normal = get_alpha(r);
        a.reduce = get_alpha(r);
        st.alpha_history.push_back(a);
    }

    SearchEngine engine(c, leads, length);
    try {
        engine.rng_.set_state(rng_state);
    } catch (const std::exception&) {
        throw CheckpointError("malformed rng state");
    }
    auto values = read_registry(r, engine.net_.registry());
    engine.opt_w_.load(r);
    engine.opt_a_.load(r);
    r.expect_end();
    apply_registry(engine.net_.registry(), std::move(values));
    engine.state_ = std::move(st);
    return engine;
}

template <typename T>
void SearchEngine<T>::restore_into(std::span<const std::uint8_t> bytes) {
    auto other = restore(bytes);
    if (!(other.config_ == config_) || other.leads_ != leads_ || other.length_ != length_)
        throw CheckpointError("checkpoint configuration does not match this search (cells " +
                              std::to_string(other.config_.cells) + " vs " + std::to_string(config_.cells) +
                              ", channels " + std::to_string(other.config_.init_channels) + " vs " +
                              std::to_string(config_.init_channels) + ")");
    *this = std::move(other);
}

SearchResult run_search(const SearchConfig& config, const HeartbeatDataset& ds,
                        const std::function<void(const EpochLog&)>& log) {
    config.validate();
    if (!ds.has_split(Split::search_train) || !ds.has_split(Split::search_val))
        throw ConfigError("dataset lacks a search_train or search_val split");
    SearchEngine<float> engine(config, ds.leads, ds.window_len);
    engine.run(ds, config.epochs, log);
    return {engine.genotype(), engine.state()};
}

template class SearchEngine<float>;
template class SearchEngine<double>;

}  // namespace heartdarts
