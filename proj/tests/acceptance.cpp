// SPDX-License-Identifier: Apache-2.0
//
// Acceptance run: each criterion prints one PASS/FAIL line with its measured
// figures and wall time. Exit status is nonzero if any criterion fails.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "heartdarts/ecg.hpp"
#include "heartdarts/metrics.hpp"
#include "heartdarts/network.hpp"
#include "heartdarts/parallel.hpp"
#include "heartdarts/search.hpp"
#include "heartdarts/synthetic.hpp"
#include "support/fixtures.hpp"
#include "support/isolation.hpp"
#include "support/oracles.hpp"
#include "support/reference_tables.hpp"
#include "support/signals.hpp"

using namespace heartdarts;
namespace oc = heartdarts::oracle;
namespace ref = heartdarts::reference;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

/// Collects failed checks; the first few are kept for the report line.
class Checks {
public:
    void expect(bool ok, const std::string& what) {
        ++total_;
        if (ok) return;
        ++failed_;
        if (failures_.size() < 4) failures_.push_back(what);
    }
    bool ok() const { return failed_ == 0; }
    Outcome outcome(const std::string& summary) const {
        std::string d = summary + "; " + std::to_string(total_ - failed_) + "/" + std::to_string(total_) + " checks";
        for (const auto& f : failures_) d += "; failed: " + f;
        return {ok(), d};
    }

private:
    std::size_t total_ = 0;
    std::size_t failed_ = 0;
    std::vector<std::string> failures_;
};

std::string num(double v, int digits = 2) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string sci(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2e", v);
    return buf;
}

void progress(const std::string& line) { std::cerr << "  " << line << std::endl; }

// ------------------------------------------------------------------ 1

void check_table(Checks& c, const std::string& name, const ref::PrintedTable& t) {
    constexpr double tol = 0.01 + 1e-9;
    const auto r = overall_metrics(ConfusionMatrix(t.counts));
    auto near = [&](double got, double want, const std::string& what) {
        c.expect(std::abs(got - want) <= tol, name + " " + what + " " + num(got) + " vs " + num(want));
    };
    near(r.accuracy, t.accuracy, "Acc");
    near(r.macro_sensitivity, t.macro_sensitivity, "macro Se");
    near(r.macro_positive_predictivity, t.macro_positive_predictivity, "macro +P");
    near(r.macro_f1, t.macro_f1, "macro F1");
    for (std::size_t k = 0; k < kNumAamiClasses; ++k) {
        const std::string cls(class_name(static_cast<AamiClass>(k)));
        near(r.positive_predictivity[k].value_or(NAN), t.rows[k].positive_predictivity, cls + " +P");
        near(r.sensitivity[k].value_or(NAN), t.rows[k].sensitivity, cls + " Se");
        near(r.specificity[k].value_or(NAN), t.rows[k].specificity, cls + " Spe");
    }
}

Outcome criterion1() {
    Checks c;
    check_table(c, "single-lead", ref::kSingleLead);
    check_table(c, "2-lead", ref::kTwoLead);
    const auto s = per_class_metrics(ConfusionMatrix(ref::kSingleLead.counts), 1);
    c.expect(round_percent(*s.positive_predictivity) == 94.21, "S +P");
    c.expect(round_percent(*s.sensitivity) == 93.65, "S Se");
    c.expect(round_percent(*s.specificity) == 99.84, "S Spe");
    const auto a = overall_metrics(ConfusionMatrix(ref::kSingleLead.counts));
    const auto b = overall_metrics(ConfusionMatrix(ref::kTwoLead.counts));
    return c.outcome("single-lead Acc " + num(a.accuracy) + " Se/+P/F1 " + num(a.macro_sensitivity) + "/" +
                     num(a.macro_positive_predictivity) + "/" + num(a.macro_f1) + ", 2-lead Acc " + num(b.accuracy) +
                     " Se/+P/F1 " + num(b.macro_sensitivity) + "/" + num(b.macro_positive_predictivity) + "/" +
                     num(b.macro_f1));
}

// ------------------------------------------------------------------ 2

Outcome criterion2() {
    Checks c;
    Rng rng(2024);
    double worst_op = 0.0;
    for (const auto& g : oc::op_gradient_cases(rng)) {
        const auto r = oc::check_gradients(g.wrt, g.loss);
        worst_op = std::max({worst_op, r.worst_rel, r.worst_elem});
        c.expect(r.worst_rel < 1e-4 && r.worst_elem < 1e-4,
                 g.name + " rel " + sci(r.worst_rel) + " elem " + sci(r.worst_elem));
    }

    // Smallest 2-cell supernet: fewer ReLU / max-pool kinks for a +-h stencil
    // to straddle.
    SupernetConfig cfg;
    cfg.leads = 1;
    cfg.length = 16;
    cfg.channels = 1;
    cfg.cells = 2;
    cfg.seed = 1;
    cfg.alpha_init_std = 0.5;
    Supernet<double> net(cfg);
    Rng data(101);
    auto x = oc::random_input<double>(data, {3, 1, 16});
    const std::vector<int> labels{0, 1, 2};
    std::vector<std::pair<std::string, TensorPtr<double>>> wrt;
    for (auto& p : net.registry().params()) wrt.push_back({p.id, p.tensor});
    const auto loss = [&](Tape<double>& tape) { return ops::cross_entropy(tape, net.forward(tape, x, true), labels); };
    const auto r = oc::check_gradients(wrt, loss);
    c.expect(r.worst_rel < 1e-3, "2-cell supernet tensor " + r.worst_name + " rel " + sci(r.worst_rel));
    c.expect(r.worst_elem < 1e-3, "2-cell supernet elementwise " + sci(r.worst_elem));
    return c.outcome("ops worst " + sci(worst_op) + " (< 1e-4); 2-cell supernet " + std::to_string(r.coords) +
                     " coords, worst tensor " + sci(r.worst_rel) + ", worst element " + sci(r.worst_elem) +
                     " (< 1e-3)");
}

// ------------------------------------------------------------------ 3

Outcome criterion3() {
    Checks c;
    Rng rng(33);
    double worst_edge = 0.0, worst_cell = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        ParamRegistry<double> reg(1000 + trial);
        const std::size_t stride = 1 + trial % 2, C = 1 + rng.below(4);
        const auto edge = oc::edge_ops(reg, C, stride);
        AlphaMatrix a{};
        for (auto& v : a[0]) v = 2.0 * rng.normal();
        auto x = oc::random_tensor(rng, {1 + rng.below(3), C, 8 + rng.below(40)});
        Tape<double> tape(false);
        auto y = mixed_edge_forward<double>(tape, x, oc::weights_from(a), 0, edge, true);
        const double d = oc::max_abs_diff(*y, oc::mixed_edge(oc::from_tensor(*x), a[0], edge));
        worst_edge = std::max(worst_edge, d);
        c.expect(d <= 1e-6, "edge trial " + std::to_string(trial) + " " + sci(d));
    }
    for (int trial = 0; trial < 100; ++trial) {
        ParamRegistry<double> reg(2000 + trial);
        const bool reduction = rng.below(2) == 1;
        const bool reduction_prev = rng.below(2) == 1;
        const std::size_t c_pp = 1 + rng.below(6), c_p = 1 + rng.below(6), C = 1 + rng.below(4);
        const std::size_t len = 8 + 2 * rng.below(12);
        MixedCell<double> cell(reg, "c", c_pp, c_p, C, reduction, reduction_prev);
        const auto a = oc::random_alpha(rng, 2.0);
        const std::size_t batch = 1 + rng.below(3);
        auto s0 = oc::random_tensor(rng, {batch, c_pp, reduction_prev ? 2 * len : len});
        auto s1 = oc::random_tensor(rng, {batch, c_p, len});
        Tape<double> tape(false);
        auto y = cell.forward(tape, s0, s1, oc::weights_from(a), true);
        const auto p0 = oc::preprocess(oc::from_tensor(*s0), cell.pre0());
        const auto p1 = oc::preprocess(oc::from_tensor(*s1), cell.pre1());
        const double d = oc::max_abs_diff(*y, oc::mixed_cell_nodes(cell, p0, p1, a));
        worst_cell = std::max(worst_cell, d);
        c.expect(d <= 1e-6, "cell trial " + std::to_string(trial) + " " + sci(d));
    }
    return c.outcome("100 mixed edges worst " + sci(worst_edge) + ", 100 mixed cells worst " + sci(worst_cell) +
                     " (<= 1e-6)");
}

// ------------------------------------------------------------------ 4

Outcome criterion4() {
    Checks c;
    Rng rng(44);
    std::size_t tied = 0;
    for (int t = 0; t < 1000; ++t) {
        AlphaMatrix a;
        switch (t % 4) {
            case 0: a = oc::random_alpha(rng, 1.0); break;
            case 1: a = oc::random_alpha(rng, 1e-3); break;
            case 2: a = oc::tied_alpha(rng); ++tied; break;
            default: {
                // zero dominates every row
                a = oc::random_alpha(rng, 1.0);
                for (auto& row : a) row[static_cast<std::size_t>(OpKind::zero)] = 10.0;
            }
        }
        const auto got = discretize_cell(a);
        c.expect(got == oc::brute_force_discretize(a), "instance " + std::to_string(t));
        for (const auto& node : got)
            for (const auto& e : node) c.expect(e.op != OpKind::zero, "zero emitted at instance " + std::to_string(t));
    }
    return c.outcome("1000 alpha matrices (" + std::to_string(tied) + " with coarse ties, 250 zero-dominant)");
}

// ------------------------------------------------------------------ 5

Outcome criterion5() {
    SearchConfig cfg;
    cfg.epochs = 50;
    cfg.batch_size = 8;
    cfg.init_channels = 4;
    cfg.cells = 3;
    cfg.seed = 5;
    const auto ds = make_synthetic_dataset({5, 24, 64, 1, 0.3});
    SearchEngine<float> engine(cfg, 1, 64);
    const auto rep = oc::check_isolation(engine, ds, 50, 8);
    return {rep.ok() && rep.steps == 50, rep.summary()};
}

// ------------------------------------------------------------------ 6

Outcome criterion6() {
    Checks c;
    const auto plan = shortcut_plan(15);
    c.expect(plan.capture == std::vector<std::size_t>{0, 5, 10}, "capture sites");
    c.expect(plan.add == std::vector<std::size_t>{4, 9}, "addition sites");

    TrainConfig tc;
    tc.layers = 15;
    tc.init_channels = 4;
    tc.seed = 6;
    FinalNetwork<float> net(oc::mixed_genotype(), tc, 2, 300);
    const auto trace = net.shape_trace(2);
    const std::size_t C = 4;
    for (std::size_t i = 0; i < 15; ++i) {
        const Shape& s = trace[i + 1];
        const std::size_t want_len = i < 5 ? 75 : (i < 10 ? 38 : 19);
        const std::size_t want_ch = 4 * (i < 5 ? C : (i < 10 ? 2 * C : 4 * C));
        c.expect(s.length == want_len, "cell " + std::to_string(i) + " length " + std::to_string(s.length));
        c.expect(s.channels == want_ch, "cell " + std::to_string(i) + " channels " + std::to_string(s.channels));
    }

    Rng rng(66);
    auto x = oc::random_input<float>(rng, {3, 2, 300});
    std::vector<ShortcutEvent> events;
    {
        Tape<float> tape(false);
        net.forward(tape, x, true, ShortcutMode::enabled, &events);
    }
    std::vector<std::size_t> captured, added;
    for (const auto& e : events) (e.kind == ShortcutEvent::Kind::capture ? captured : added).push_back(e.cell);
    c.expect(captured == plan.capture, "traced captures");
    c.expect(added == plan.add, "traced additions");

    for (bool training : {true, false}) {
        Tape<float> tape(false);
        const auto zeroed = net.forward(tape, x, training, ShortcutMode::zeroed);
        const auto plain = oc::stack_with_relu(net, x, training);
        std::size_t ulp = 0;
        for (std::size_t i = 0; i < plain->values.size(); ++i)
            if (zeroed->values[i] != plain->values[i]) ++ulp;
        c.expect(ulp == 0, std::string(training ? "training" : "eval") + " zeroed differs in " + std::to_string(ulp));
    }
    return c.outcome("capture {0,5,10}, add {4,9}, zeroed register equals stack + ReLU bitwise, lengths 75/38/19 at "
                     "C/2C/4C");
}

// ------------------------------------------------------------------ 7

double test_accuracy(const Genotype& g, const TrainConfig& tc, const HeartbeatDataset& ds) {
    FinalNetwork<float> net(g, tc, ds.leads, ds.window_len);
    train_final(net, ds);
    return overall_metrics(evaluate(net, ds, Split::test)).accuracy;
}

Outcome criterion7() {
    const auto ds = make_synthetic_dataset({7, 400, 300, 1, 0.3});

    SearchConfig sc;
    sc.epochs = 20;
    sc.batch_size = 64;
    sc.init_channels = 8;
    sc.cells = 4;
    sc.seed = 1;
    const auto search = run_search(sc, ds, [](const EpochLog& e) {
        progress("search epoch " + std::to_string(e.epoch) + " train_loss " + num(e.train_loss, 4) + " val_loss " +
                 num(e.val_loss, 4));
    });

    TrainConfig tc;
    tc.epochs = 30;
    tc.batch_size = 64;
    tc.init_channels = 8;
    tc.layers = 8;
    tc.seed = 1;
    const double searched = test_accuracy(search.genotype, tc, ds);
    progress("searched genotype test accuracy " + num(searched));

    Rng rng(1000);
    double baseline_sum = 0.0;
    std::string baselines;
    for (int b = 0; b < 5; ++b) {
        const double acc = test_accuracy(oc::random_genotype(rng), tc, ds);
        progress("random genotype " + std::to_string(b + 1) + " test accuracy " + num(acc));
        baseline_sum += acc;
        baselines += (b ? "/" : "") + num(acc);
    }
    const double baseline = baseline_sum / 5.0;
    return {searched >= 90.0 && searched > baseline,
            "2000 beats, 4-cell/20-epoch search, 8-cell/30-epoch training: test accuracy " + num(searched) +
                "% (>= 90), random-genotype baselines " + baselines + " mean " + num(baseline) + "%"};
}

// ------------------------------------------------------------------ 8

EcgRecord ramp_record(std::size_t length, std::vector<Annotation> anns) {
    EcgRecord r;
    r.record_id = "r";
    r.fs = 360.0;
    r.lead_names = {"MLII"};
    r.signals = {std::vector<double>(length)};
    for (std::size_t i = 0; i < length; ++i) r.signals[0][i] = static_cast<double>(i);
    r.annotations = std::move(anns);
    return r;
}

Outcome criterion8() {
    Checks c;
    const std::vector<std::pair<Database, std::size_t>> windows{
        {Database::mitbih, 300}, {Database::incart, 250}, {Database::qt, 220}};
    for (const auto& [db, len] : windows) {
        const auto spec = database_spec(db);
        const auto res = segment_heartbeats(ramp_record(2000, {{500, 'N'}, {1000, 'V'}}), spec.pre, spec.post);
        c.expect(res.beats.size() == 2, std::string(spec.name) + " beat count");
        for (const auto& b : res.beats) {
            c.expect(b.window.size() == len, std::string(spec.name) + " window " + std::to_string(b.window.size()));
            c.expect(b.window.front() == static_cast<double>(b.r_peak - 99), std::string(spec.name) + " start");
        }
    }
    const auto res = segment_heartbeats(
        ramp_record(3000, {{300, 'N'}, {700, 'A'}, {1100, 'V'}, {1500, 'F'}, {1900, '/'}}), 99, 200);
    std::vector<AamiClass> labels;
    for (const auto& b : res.beats) labels.push_back(b.label);
    c.expect(labels == std::vector<AamiClass>{AamiClass::N, AamiClass::S, AamiClass::V, AamiClass::F, AamiClass::Q},
             "[N,A,V,F,/] mapping");

    Rng rng(88);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 1 + rng.below(3000);
        std::vector<Heartbeat> beats(n);
        for (std::size_t i = 0; i < n; ++i) {
            beats[i].leads = 1;
            beats[i].window = {rng.normal()};
            beats[i].record_id = "rec" + std::to_string(i % 7);
            beats[i].r_peak = i;
        }
        const auto ds = split_dataset(beats, rng.below(1u << 30));
        const double train = static_cast<double>(ds.count(Split::search_train) + ds.count(Split::search_val));
        const double st = static_cast<double>(ds.count(Split::search_train));
        c.expect(std::abs(train - 0.8 * static_cast<double>(n)) <= 1.0, "train share n=" + std::to_string(n));
        c.expect(std::abs(static_cast<double>(ds.count(Split::test)) - 0.2 * static_cast<double>(n)) <= 1.0,
                 "test share n=" + std::to_string(n));
        c.expect(std::abs(st - 0.8 * train) <= 1.0, "search re-split n=" + std::to_string(n));
        bool positional = true;
        for (std::size_t i = 1; i < ds.beats.size(); ++i) positional &= ds.beats[i - 1].split <= ds.beats[i].split;
        c.expect(positional, "positional order n=" + std::to_string(n));
    }
    return c.outcome("windows 300/250/220, [N,A,V,F,/] -> [N,S,V,F,Q], 300 random splits within 1 beat of 80/20 "
                     "and 80/20 positional");
}

// ------------------------------------------------------------------ 9

struct Artifacts {
    std::vector<std::uint8_t> dataset;
    std::string genotype;
    std::vector<std::uint8_t> checkpoint;
    std::vector<std::uint8_t> model;
};

Artifacts produce() {
    Artifacts a;
    const auto ds = make_synthetic_dataset({9, 40, 128, 2, 0.3});
    a.dataset = encode_dataset(ds);
    SearchConfig sc;
    sc.epochs = 2;
    sc.batch_size = 16;
    sc.init_channels = 4;
    sc.cells = 3;
    sc.seed = 9;
    SearchEngine<float> engine(sc, ds.leads, ds.window_len);
    engine.run(ds, sc.epochs);
    a.checkpoint = engine.checkpoint();
    a.genotype = serialize_genotype(engine.genotype());
    TrainConfig tc;
    tc.epochs = 2;
    tc.batch_size = 32;
    tc.init_channels = 4;
    tc.layers = 6;
    tc.seed = 9;
    FinalNetwork<float> net(engine.genotype(), tc, ds.leads, ds.window_len);
    train_final(net, ds);
    a.model = encode_model(net);
    return a;
}

Outcome criterion9() {
    Checks c;
    const auto a = produce();
    const auto b = produce();
    c.expect(a.dataset == b.dataset, "dataset bytes differ");
    c.expect(a.genotype == b.genotype, "genotype text differs");
    c.expect(a.checkpoint == b.checkpoint, "checkpoint bytes differ");
    c.expect(a.model == b.model, "model bytes differ");

    // restore mid-run and continue
    const auto ds = make_synthetic_dataset({9, 40, 128, 2, 0.3});
    SearchConfig sc;
    sc.epochs = 4;
    sc.batch_size = 16;
    sc.init_channels = 4;
    sc.cells = 3;
    sc.seed = 3;
    SearchEngine<float> straight(sc, ds.leads, ds.window_len);
    straight.run(ds, 4);
    SearchEngine<float> first(sc, ds.leads, ds.window_len);
    first.run(ds, 2);
    auto resumed = SearchEngine<float>::restore(first.checkpoint());
    resumed.run(ds, 4);
    c.expect(resumed.state().train_loss == straight.state().train_loss, "resumed train losses");
    c.expect(resumed.state().val_loss == straight.state().val_loss, "resumed val losses");
    c.expect(resumed.checkpoint() == straight.checkpoint(), "resumed checkpoint");

    // every format round-trips
    c.expect(encode_dataset(decode_dataset(a.dataset)) == a.dataset, "HDDS round-trip");
    c.expect(SearchEngine<float>::restore(a.checkpoint).checkpoint() == a.checkpoint, "HDCK round-trip");
    c.expect(encode_model(decode_model(a.model)) == a.model, "HDMD round-trip");
    c.expect(serialize_genotype(parse_genotype(a.genotype)) == a.genotype, "genotype round-trip");
    const auto report = overall_metrics(ConfusionMatrix(ref::kTwoLead.counts));
    c.expect(parse_report(format_report(report)) == report, "report round-trip");
    return c.outcome("dataset " + std::to_string(a.dataset.size()) + " B, checkpoint " +
                     std::to_string(a.checkpoint.size()) + " B, model " + std::to_string(a.model.size()) +
                     " B identical across runs; resume bitwise; 5 formats round-trip");
}

// ------------------------------------------------------------------ 10

Outcome criterion10() {
    const auto r = oc::denoise_corpus(20, 100);
    return {r.improved * 100 >= r.trials * 95 && r.length_changed == 0,
            std::to_string(r.improved) + "/" + std::to_string(r.trials) + " trials improved (>= 95%), " +
                std::to_string(r.length_changed) + " length changes"};
}

struct Criterion {
    int id;
    double budget_s;
    std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"heartdarts acceptance criteria", "heartdarts_acceptance"};
    std::vector<int> only;
    app.add_option("--only", only, "Run only these criteria")->delimiter(',')->check(CLI::Range(1, 10));
    CLI11_PARSE(app, argc, argv);
    configure_threads_from_env();

    const std::vector<Criterion> all{
        {1, 1.0, criterion1},     {2, 300.0, criterion2}, {3, 60.0, criterion3},   {4, 10.0, criterion4},
        {5, 60.0, criterion5},    {6, 60.0, criterion6},  {7, 1800.0, criterion7}, {8, 10.0, criterion8},
        {9, 600.0, criterion9},   {10, 60.0, criterion10},
    };
    const std::set<int> selected(only.begin(), only.end());
    bool all_pass = true;
    for (const auto& cr : all) {
        if (!selected.empty() && !selected.count(cr.id)) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = cr.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool in_budget = secs <= cr.budget_s;
        const bool pass = o.pass && in_budget;
        all_pass &= pass;
        std::cout << "criterion " << cr.id << ": " << (pass ? "PASS" : "FAIL") << " (" << o.detail << "; "
                  << num(secs) << " s, budget " << num(cr.budget_s, 0) << " s" << (in_budget ? "" : " EXCEEDED")
                  << ")" << std::endl;
    }
    return all_pass ? 0 : 1;
}
