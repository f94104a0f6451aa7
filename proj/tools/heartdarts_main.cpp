// SPDX-License-Identifier: Apache-2.0
//
// heartdarts: command-line front end for preprocessing, search, training
// and evaluation.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "heartdarts/ecg.hpp"
#include "heartdarts/error.hpp"
#include "heartdarts/metrics.hpp"
#include "heartdarts/network.hpp"
#include "heartdarts/parallel.hpp"
#include "heartdarts/search.hpp"
#include "heartdarts/synthetic.hpp"

namespace fs = std::filesystem;
using namespace heartdarts;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitFailure = 1;

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot open \"" + path + "\" for writing");
    out << text;
    if (!out) throw InputError("failed writing \"" + path + "\"");
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open \"" + path + "\"");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Appends a line to the log file and echoes it to stderr.
class RunLog {
public:
    explicit RunLog(const std::string& path) : out_(path, std::ios::trunc) {
        if (!out_) throw InputError("cannot open log \"" + path + "\"");
    }
    void line(const std::string& text) {
        out_ << text << '\n';
        out_.flush();
        std::cerr << text << '\n';
    }

private:
    std::ofstream out_;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream is(s);
    while (std::getline(is, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

// ------------------------------------------------------------- preprocess

struct PreprocessArgs {
    std::string db;
    std::string signals;
    std::string annotations;
    std::string leads;
    std::uint64_t seed = 0;
    std::string out;
};

int run_preprocess(const PreprocessArgs& a) {
    const auto db = database_from_name(a.db);
    if (!db) throw ConfigError("unknown database \"" + a.db + "\" (expected mitbih, incart or qt)");
    const auto spec = database_spec(*db);
    const auto leads = split_csv(a.leads);
    if (leads.empty() || leads.size() > 2) throw ConfigError("--leads needs one or two lead names");
    if (!fs::is_directory(a.signals)) throw IngestionError("signal directory \"" + a.signals + "\" does not exist");
    if (!fs::is_directory(a.annotations))
        throw IngestionError("annotation directory \"" + a.annotations + "\" does not exist");

    std::vector<fs::path> records;
    for (const auto& entry : fs::directory_iterator(a.signals))
        if (entry.is_regular_file() && entry.path().extension() == ".csv") records.push_back(entry.path());
    std::sort(records.begin(), records.end());
    if (records.empty()) throw IngestionError("no .csv records in \"" + a.signals + "\"");

    PreprocessSummary summary;
    std::vector<Heartbeat> beats;
    for (const auto& sig : records) {
        const std::string id = sig.stem().string();
        const fs::path ann = fs::path(a.annotations) / (id + ".csv");
        if (!fs::exists(ann)) throw IngestionError("missing annotation file \"" + ann.string() + "\"");
        const auto rec = load_record_csv(sig.string(), ann.string(), spec.fs, leads, id);
        auto rb = preprocess_record(rec, spec, &summary);
        beats.insert(beats.end(), std::make_move_iterator(rb.begin()), std::make_move_iterator(rb.end()));
    }
    if (beats.empty()) throw IngestionError("no heartbeats could be segmented");
    const auto ds = split_dataset(std::move(beats), a.seed);
    save_dataset(a.out, ds);
    std::cout << "records " << summary.records << "\nbeats " << summary.beats << "\ndropped_boundary "
              << summary.dropped_boundary << "\nskipped_unknown " << summary.skipped_unknown << '\n'
              << dataset_stats(ds).report();
    return 0;
}

// ------------------------------------------------------------------ synth

int run_synth(const SyntheticConfig& cfg, const std::string& out) {
    const auto ds = make_synthetic_dataset(cfg);
    save_dataset(out, ds);
    std::cout << dataset_stats(ds).report();
    return 0;
}

// ----------------------------------------------------------------- search

struct SearchArgs {
    std::string dataset;
    SearchConfig config;
    std::string out_genotype;
    std::string checkpoint;
    std::string log;
    bool resume = false;
};

int run_search_cmd(SearchArgs a) {
    const auto ds = load_dataset(a.dataset);
    if (!ds.has_split(Split::search_train) || !ds.has_split(Split::search_val))
        throw ConfigError("dataset lacks a search_train or search_val split");
    RunLog log(a.log.empty() ? a.out_genotype + ".log" : a.log);
    SearchEngine<float> engine(a.config, ds.leads, ds.window_len);
    if (a.resume && fs::exists(a.checkpoint)) {
        engine.restore_into(read_file_bytes(a.checkpoint));
        log.line("resumed at epoch " + std::to_string(engine.state().epoch));
    }
    log.line("search epochs " + std::to_string(a.config.epochs) + " batch " + std::to_string(a.config.batch_size) +
             " channels " + std::to_string(a.config.init_channels) + " cells " + std::to_string(a.config.cells) +
             " seed " + std::to_string(a.config.seed));
    engine.run(ds, a.config.epochs, [&](const EpochLog& e) {
        log.line("epoch " + std::to_string(e.epoch) + " lr " + fmt("%.6f", e.lr) + " train_loss " +
                 fmt("%.6f", e.train_loss) + " val_loss " + fmt("%.6f", e.val_loss));
        write_file_bytes(a.checkpoint, engine.checkpoint());
    });
    write_file_bytes(a.checkpoint, engine.checkpoint());
    const auto text = serialize_genotype(engine.genotype());
    write_text(a.out_genotype, text);
    log.line("genotype " + a.out_genotype);
    std::cout << text;
    return 0;
}

// ------------------------------------------------------------------ train

struct TrainArgs {
    std::string dataset;
    std::string genotype;
    TrainConfig config;
    std::string out_model;
    std::string log;
};

int run_train(const TrainArgs& a) {
    const auto ds = load_dataset(a.dataset);
    const auto g = parse_genotype(read_text(a.genotype));
    FinalNetwork<float> net(g, a.config, ds.leads, ds.window_len);
    RunLog log(a.log.empty() ? a.out_model + ".log" : a.log);
    log.line("train epochs " + std::to_string(a.config.epochs) + " batch " + std::to_string(a.config.batch_size) +
             " channels " + std::to_string(a.config.init_channels) + " layers " + std::to_string(a.config.layers) +
             " seed " + std::to_string(a.config.seed) + " parameters " + std::to_string(net.parameter_count()));
    train_final(net, ds, [&](const TrainEpochLog& e) {
        std::string line = "epoch " + std::to_string(e.epoch) + " lr " + fmt("%.6f", e.lr) + " train_loss " +
                           fmt("%.6f", e.train_loss);
        if (e.val_accuracy) line += " val_acc " + fmt("%.2f", *e.val_accuracy);
        log.line(line);
    });
    save_model(a.out_model, net);
    log.line("model " + a.out_model);
    return 0;
}

// ------------------------------------------------------------------- eval

struct EvalArgs {
    std::string dataset;
    std::string model;
    std::string split = "test";
    std::string report;
};

int run_eval(const EvalArgs& a) {
    const auto split = split_from_name(a.split);
    if (!split || *split == Split::search_train)
        throw ConfigError("--split must be test or search_val, got \"" + a.split + "\"");
    const auto ds = load_dataset(a.dataset);
    const auto net = load_model(a.model);
    if (!ds.has_split(*split)) throw InputError("dataset has no beats in split " + a.split);
    const auto report = overall_metrics(evaluate(net, ds, *split));
    const auto text = format_report(report);
    std::cout << text;
    if (!a.report.empty()) {
        write_text(a.report, text);
        write_text(a.report + ".json", report_to_json(report));
    }
    return 0;
}

// -------------------------------------------------------- export-genotype

int run_export(const std::string& checkpoint, const std::string& out) {
    const auto engine = SearchEngine<float>::restore(read_file_bytes(checkpoint));
    const auto text = serialize_genotype(engine.genotype());
    write_text(out, text);
    std::cout << text;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"heartdarts: heartbeat classification with differentiable architecture search", "heartdarts"};
    app.require_subcommand(1);

    PreprocessArgs pre;
    auto* c_pre = app.add_subcommand("preprocess", "Build a dataset from signal/annotation CSV records");
    c_pre->add_option("--db", pre.db, "Database kind")->required()->check(CLI::IsMember({"mitbih", "incart", "qt"}));
    c_pre->add_option("--signals", pre.signals, "Directory of <record>.csv signal files")->required();
    c_pre->add_option("--annotations", pre.annotations, "Directory of <record>.csv annotation files")->required();
    c_pre->add_option("--leads", pre.leads, "Lead names, L1[,L2]")->required();
    c_pre->add_option("--seed", pre.seed, "Split seed");
    c_pre->add_option("--out", pre.out, "Dataset file")->required();

    SyntheticConfig syn;
    std::string syn_out;
    auto* c_syn = app.add_subcommand("synth", "Generate the synthetic 5-class dataset");
    c_syn->add_option("--seed", syn.seed, "Seed");
    c_syn->add_option("--per-class", syn.per_class, "Beats per class")->check(CLI::PositiveNumber);
    c_syn->add_option("--length", syn.length, "Window length")->check(CLI::Range(64, 1 << 20));
    c_syn->add_option("--leads", syn.leads, "Lead count")->check(CLI::Range(1, 2));
    c_syn->add_option("--noise", syn.noise_sigma, "Gaussian noise sigma")->check(CLI::NonNegativeNumber);
    c_syn->add_option("--out", syn_out, "Dataset file")->required();

    SearchArgs se;
    auto* c_se = app.add_subcommand("search", "Run the architecture search");
    c_se->add_option("--dataset", se.dataset, "Dataset file")->required();
    c_se->add_option("--epochs", se.config.epochs, "Epochs")->check(CLI::PositiveNumber);
    c_se->add_option("--batch", se.config.batch_size, "Batch size")->check(CLI::PositiveNumber);
    c_se->add_option("--channels", se.config.init_channels, "Initial channels")->check(CLI::PositiveNumber);
    c_se->add_option("--cells", se.config.cells, "Cells")->check(CLI::Range(3, 64));
    c_se->add_option("--seed", se.config.seed, "Seed");
    c_se->add_option("--out-genotype", se.out_genotype, "Genotype file")->required();
    c_se->add_option("--checkpoint", se.checkpoint, "Checkpoint file")->required();
    c_se->add_option("--log", se.log, "Log file (default <out-genotype>.log)");
    c_se->add_flag("--resume", se.resume, "Continue from --checkpoint when it exists");

    TrainArgs tr;
    auto* c_tr = app.add_subcommand("train", "Train the final network from a genotype");
    c_tr->add_option("--dataset", tr.dataset, "Dataset file")->required();
    c_tr->add_option("--genotype", tr.genotype, "Genotype file")->required();
    c_tr->add_option("--layers", tr.config.layers, "Cells")->check(CLI::Range(3, 64));
    c_tr->add_option("--epochs", tr.config.epochs, "Epochs")->check(CLI::PositiveNumber);
    c_tr->add_option("--batch", tr.config.batch_size, "Batch size")->check(CLI::PositiveNumber);
    c_tr->add_option("--channels", tr.config.init_channels, "Initial channels")->check(CLI::PositiveNumber);
    c_tr->add_option("--seed", tr.config.seed, "Seed");
    c_tr->add_option("--out-model", tr.out_model, "Model file")->required();
    c_tr->add_option("--log", tr.log, "Log file (default <out-model>.log)");

    EvalArgs ev;
    auto* c_ev = app.add_subcommand("eval", "Evaluate a model on one split");
    c_ev->add_option("--dataset", ev.dataset, "Dataset file")->required();
    c_ev->add_option("--model", ev.model, "Model file")->required();
    c_ev->add_option("--split", ev.split, "Split")->check(CLI::IsMember({"test", "search_val"}));
    c_ev->add_option("--report", ev.report, "Report file (a .json variant is written alongside)");

    std::string ex_ckpt, ex_out;
    auto* c_ex = app.add_subcommand("export-genotype", "Write the genotype stored in a search checkpoint");
    c_ex->add_option("--checkpoint", ex_ckpt, "Checkpoint file")->required();
    c_ex->add_option("--out", ex_out, "Genotype file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error[usage]: " << e.what() << "\n\n";
        const auto subs = app.get_subcommands();
        std::cerr << (subs.empty() ? app.help() : subs.front()->help());
        return kExitUsage;
    }

    try {
        configure_threads_from_env();
        if (c_pre->parsed()) return run_preprocess(pre);
        if (c_syn->parsed()) return run_synth(syn, syn_out);
        if (c_se->parsed()) return run_search_cmd(se);
        if (c_tr->parsed()) return run_train(tr);
        if (c_ev->parsed()) return run_eval(ev);
        if (c_ex->parsed()) return run_export(ex_ckpt, ex_out);
    } catch (const Error& e) {
        std::cerr << "error[" << e.category() << "]: " << e.what() << '\n';
        return kExitFailure;
    } catch (const std::exception& e) {
        std::cerr << "error[internal]: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitUsage;
}
