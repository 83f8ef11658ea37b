// dartsgt command-line front end: data generation, architecture search,
// training, interpretability analysis, and the invariant self-check.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dartsgt/graph_data.hpp"
#include "dartsgt/interpret.hpp"
#include "dartsgt/model.hpp"
#include "dartsgt/rng.hpp"
#include "dartsgt/search.hpp"
#include "dartsgt/selfcheck.hpp"

using nlohmann::json;
using namespace dartsgt;

namespace {

constexpr const char* kVersion = "dartsgt 1.0";

struct Options {
    std::string dataset;
    std::string config;
    std::string out;
    std::string task = "motif";
    int n_graphs = 200;
    std::uint64_t seed = 0;
    int epochs_search = 15;
    int epochs_final = 25;
    int layers = 2;
    int heads = 2;
    int dim = 16;
    std::string attention = "sparse";
    std::string variant = "dartsgt";
    std::string arch;
    std::string edge_residual = "on";
    std::string checkpoint;
    int k = 5;
    double node_fraction = 10.0;
    bool sign_agnostic = false;
    double lr = 3e-3;
    double lr_alpha = 1e-3;
    int batch_size = 8;
    double test_fraction = 0.2;
};

void add_model_flags(CLI::App* cmd, Options& o) {
    cmd->add_option("--seed", o.seed, "Run seed; every random stream derives from it");
    cmd->add_option("--layers", o.layers, "Transformer layers");
    cmd->add_option("--heads", o.heads, "Attention heads per layer");
    cmd->add_option("--dim", o.dim, "Model width (divisible by heads)");
    cmd->add_option("--attention", o.attention, "dense or sparse")
        ->check(CLI::IsMember({"dense", "sparse"}));
    cmd->add_option("--variant", o.variant, "dartsgt, symmetric, or vanilla")
        ->check(CLI::IsMember({"dartsgt", "symmetric", "vanilla"}));
    cmd->add_option("--edge-residual", o.edge_residual, "on or off")
        ->check(CLI::IsMember({"on", "off"}));
    cmd->add_option("--lr", o.lr, "Weight learning rate");
    cmd->add_option("--batch-size", o.batch_size, "Gradient accumulation window");
    cmd->add_option("--config", o.config,
                    "JSON config file; explicit flags override its values");
}

/// Applies config-file values for flags the user did not pass explicitly.
void merge_config(CLI::App* cmd, Options& o) {
    if (o.config.empty()) return;
    std::ifstream in(o.config);
    if (!in) throw std::invalid_argument("cannot open config file: " + o.config);
    json j;
    in >> j;
    auto use_file = [&](const std::string& flag) {
        auto* opt = cmd->get_option_no_throw(flag);
        return opt != nullptr && opt->count() == 0;
    };
    auto set_if = [&](const std::string& key, const std::string& flag, auto& field) {
        if (j.contains(key) && use_file(flag)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    set_if("seed", "--seed", o.seed);
    set_if("epochs_search", "--epochs-search", o.epochs_search);
    set_if("epochs_final", "--epochs-final", o.epochs_final);
    set_if("layers", "--layers", o.layers);
    set_if("heads", "--heads", o.heads);
    set_if("dim", "--dim", o.dim);
    set_if("attention", "--attention", o.attention);
    set_if("variant", "--variant", o.variant);
    set_if("edge_residual", "--edge-residual", o.edge_residual);
    set_if("lr", "--lr", o.lr);
    set_if("lr_alpha", "--lr-alpha", o.lr_alpha);
    set_if("batch_size", "--batch-size", o.batch_size);
    set_if("k", "--k", o.k);
    set_if("node_fraction", "--node-fraction", o.node_fraction);
    set_if("test_fraction", "--test-fraction", o.test_fraction);
}

json resolved_config(const std::string& command, const Options& o) {
    json j;
    j["command"] = command;
    j["version"] = kVersion;
    j["seed"] = o.seed;
    j["dataset"] = o.dataset;
    j["out"] = o.out;
    if (command == "generate") {
        j["task"] = o.task;
        j["n"] = o.n_graphs;
    }
    if (command == "search" || command == "train") {
        j["epochs_search"] = o.epochs_search;
        j["epochs_final"] = o.epochs_final;
        j["layers"] = o.layers;
        j["heads"] = o.heads;
        j["dim"] = o.dim;
        j["attention"] = o.attention;
        j["variant"] = o.variant;
        j["edge_residual"] = o.edge_residual;
        j["lr"] = o.lr;
        j["lr_alpha"] = o.lr_alpha;
        j["batch_size"] = o.batch_size;
    }
    if (command == "train") {
        j["arch"] = o.arch;
        j["test_fraction"] = o.test_fraction;
    }
    if (command == "interpret") {
        j["checkpoint"] = o.checkpoint;
        j["k"] = o.k;
        j["node_fraction"] = o.node_fraction;
        j["sign_agnostic"] = o.sign_agnostic;
    }
    return j;
}

void write_provenance(const std::string& command, const Options& o) {
    if (o.out.empty()) return;
    std::ofstream log(o.out + ".provenance.json");
    if (!log) throw std::runtime_error("cannot write provenance log for " + o.out);
    log << resolved_config(command, o).dump(2) << "\n";
}

ModelConfig model_config_from(const Options& o, const Dataset& ds) {
    ModelConfig cfg;
    cfg.layers = o.layers;
    cfg.heads = o.heads;
    cfg.dim = o.dim;
    cfg.attention = attention_kind_from_name(o.attention);
    cfg.variant = variant_from_name(o.variant);
    cfg.edge_residual = o.edge_residual == "on";
    cfg.task_kind = ds.task_kind;
    cfg.num_classes = ds.num_classes;
    cfg.d_in = ds.d_in;
    cfg.d_e = ds.d_e;
    cfg.validate();
    return cfg;
}

SearchConfig search_config_from(const Options& o, const Dataset& ds) {
    SearchConfig cfg;
    cfg.epochs_search = o.epochs_search;
    cfg.epochs_final = o.epochs_final;
    cfg.lr_w = o.lr;
    cfg.lr_alpha = o.lr_alpha;
    cfg.batch_size = o.batch_size;
    cfg.seed = o.seed;
    cfg.model = model_config_from(o, ds);
    cfg.validate();
    return cfg;
}

/// "searched:<file>" | "uniform:<OP>" | "random:<seed>"
std::vector<GnnOp> resolve_arch(const std::string& spec, int layers) {
    auto colon = spec.find(':');
    if (colon == std::string::npos)
        throw std::invalid_argument("--arch must be searched:<file>, uniform:<OP>, "
                                    "or random:<seed>");
    const std::string kind = spec.substr(0, colon);
    const std::string arg = spec.substr(colon + 1);
    if (kind == "uniform")
        return DiscreteArchitecture::uniform(layers, gnn_op_from_name(arg)).ops;
    if (kind == "random")
        return random_architecture(layers, std::stoull(arg)).ops;
    if (kind == "searched") {
        std::ifstream in(arg);
        if (!in) throw std::invalid_argument("cannot open architecture file: " + arg);
        json j;
        in >> j;
        std::vector<GnnOp> ops;
        for (const auto& name : j.at("architecture"))
            ops.push_back(gnn_op_from_name(name.get<std::string>()));
        if (static_cast<int>(ops.size()) != layers)
            throw std::invalid_argument("architecture file has " +
                                        std::to_string(ops.size()) + " layers, --layers is " +
                                        std::to_string(layers));
        return ops;
    }
    throw std::invalid_argument("unknown --arch kind: " + kind);
}

/// Deterministic train/test partition, independent of the 60/40 DARTS split.
void split_train_test(const Dataset& ds, double test_fraction, std::uint64_t seed,
                      Dataset& train, Dataset& test) {
    train = test = ds;
    train.graphs.clear();
    test.graphs.clear();
    std::vector<int> idx(ds.graphs.size());
    std::iota(idx.begin(), idx.end(), 0);
    auto rng = substream(seed, "shuffle:train-test");
    std::shuffle(idx.begin(), idx.end(), rng);
    const std::size_t n_test = static_cast<std::size_t>(test_fraction * idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i)
        (i < n_test ? test : train).graphs.push_back(ds.graphs[idx[i]]);
}

int cmd_generate(const Options& o) {
    Dataset ds = generate_synthetic(o.task, o.n_graphs, o.seed);
    save_dataset(o.out, ds);
    write_provenance("generate", o);
    double nodes = 0.0, edges = 0.0, degree = 0.0;
    for (const auto& g : ds.graphs) {
        nodes += g.n;
        edges += g.num_edges();
        degree += static_cast<double>(g.num_edges()) / g.n;
    }
    const double count = static_cast<double>(ds.graphs.size());
    std::printf("task=%s graphs=%zu avg_nodes=%.3f avg_edges=%.3f mean_degree=%.3f\n",
                ds.task_name.c_str(), ds.graphs.size(), nodes / count, edges / count,
                degree / count);
    std::printf("wrote %s\n", o.out.c_str());
    return 0;
}

int cmd_search(const Options& o) {
    Dataset ds = load_dataset(o.dataset);
    SearchConfig cfg = search_config_from(o, ds);
    SearchResult result = search(ds, cfg);
    save_search_result(o.out, result, cfg);
    write_provenance("search", o);

    std::printf("selected architecture:");
    for (const auto& name : result.architecture.names()) std::printf(" %s", name.c_str());
    std::printf("\n");
    std::vector<double> prop(kNumGnnOps, 0.0);
    for (GnnOp op : result.architecture.ops)
        prop[static_cast<int>(op)] += 1.0 / result.architecture.ops.size();
    std::printf("operator proportions:");
    for (int i = 0; i < kNumGnnOps; ++i)
        std::printf(" %s=%.4f", gnn_op_name(static_cast<GnnOp>(i)), prop[i]);
    std::printf("\n");
    for (const auto& w : result.warnings) std::printf("warning: %s\n", w.c_str());
    std::printf("wrote %s\n", o.out.c_str());
    return 0;
}

int cmd_train(const Options& o) {
    Dataset ds = load_dataset(o.dataset);
    ModelConfig cfg = model_config_from(o, ds);
    std::vector<GnnOp> arch;
    if (cfg.variant != Variant::Vanilla) {
        if (o.arch.empty())
            throw std::invalid_argument("--arch is required unless --variant vanilla");
        arch = resolve_arch(o.arch, cfg.layers);
    }
    Dataset train, test;
    split_train_test(ds, o.test_fraction, o.seed, train, test);

    std::vector<double> epoch_losses;
    auto report = [&](int epoch, const ModelState& m) {
        EvalMetrics tr = evaluate(m, train);
        EvalMetrics te = evaluate(m, test);
        if (ds.task_kind == TaskKind::Regression)
            std::printf("epoch %d train_loss=%.6f train_mae=%.4f test_mae=%.4f\n",
                        epoch, epoch_losses.back(), tr.mae, te.mae);
        else
            std::printf("epoch %d train_loss=%.6f train_acc=%.4f test_acc=%.4f\n",
                        epoch, epoch_losses.back(), tr.accuracy, te.accuracy);
    };
    ModelState model = train_model(cfg, arch, train, o.epochs_final, o.lr, o.batch_size,
                                   0.0, o.seed, 0.0, &epoch_losses, report);
    save_checkpoint(o.out, model);
    write_provenance("train", o);

    EvalMetrics final = evaluate(model, test);
    if (ds.task_kind == TaskKind::Regression)
        std::printf("final test_mae=%.6f test_loss=%.6f\n", final.mae, final.mean_loss);
    else
        std::printf("final test_acc=%.6f test_loss=%.6f\n", final.accuracy,
                    final.mean_loss);
    std::printf("wrote %s\n", o.out.c_str());
    return 0;
}

int cmd_interpret(const Options& o) {
    ModelState model = load_checkpoint(o.checkpoint);
    Dataset ds = load_dataset(o.dataset);
    if (ds.d_in != model.config.d_in || ds.d_e != model.config.d_e ||
        ds.task_kind != model.config.task_kind)
        throw std::invalid_argument("checkpoint and dataset disagree on task shape");

    InterpretConfig cfg;
    cfg.k = o.k;
    cfg.node_fraction = o.node_fraction;
    cfg.sign_agnostic = o.sign_agnostic;
    DatasetReport report = analyze_dataset(model, ds, cfg);

    std::ofstream out(o.out);
    if (!out) throw std::runtime_error("cannot write report: " + o.out);
    out << dataset_report_json(report) << "\n";
    std::ofstream inst(o.out + ".instances.jsonl");
    if (!inst) throw std::runtime_error("cannot write per-instance reports");
    for (const auto& r : report.instances) inst << instance_report_json(r) << "\n";
    write_provenance("interpret", o);

    std::printf("instances=%zu\n", report.instances.size());
    std::printf("median specialization  %.6f\n", report.median_specialization);
    if (report.median_focus)
        std::printf("median focus           %.6f\n", *report.median_focus);
    else
        std::printf("median focus           undefined\n");
    std::printf("wrote %s\n", o.out.c_str());
    return 0;
}

int cmd_selfcheck() {
    SelfCheckReport report = run_selfcheck();
    for (const auto& c : report.checks)
        std::printf("[%s] %-26s %s\n", c.passed ? "PASS" : "FAIL", c.name.c_str(),
                    c.detail.c_str());
    if (!report.all_passed()) {
        std::printf("selfcheck FAILED\n");
        return 2;
    }
    std::printf("selfcheck passed\n");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DARTS-GT: graph transformer with searchable GNN operators"};
    app.require_subcommand(1);
    Options o;

    auto* gen = app.add_subcommand("generate", "Write a synthetic dataset");
    gen->add_option("--task", o.task, "motif, degree-reg, or community")
        ->check(CLI::IsMember({"motif", "degree-reg", "community"}));
    gen->add_option("--n", o.n_graphs, "Number of graphs");
    gen->add_option("--seed", o.seed, "Generation seed");
    gen->add_option("--config", o.config, "JSON config file");
    gen->add_option("--out", o.out, "Output dataset path")->required();

    auto* sea = app.add_subcommand("search", "Two-phase architecture search, phase 1");
    sea->add_option("--dataset", o.dataset, "Dataset file")->required();
    sea->add_option("--epochs-search", o.epochs_search, "Alternating-update epochs");
    sea->add_option("--lr-alpha", o.lr_alpha, "Architecture learning rate");
    add_model_flags(sea, o);
    sea->add_option("--out", o.out, "Architecture/search log output")->required();

    auto* tra = app.add_subcommand("train", "Train a discrete model from scratch");
    tra->add_option("--dataset", o.dataset, "Dataset file")->required();
    tra->add_option("--arch", o.arch,
                    "searched:<file>, uniform:<OP>, or random:<seed>");
    tra->add_option("--epochs-final", o.epochs_final, "Training epochs");
    tra->add_option("--test-fraction", o.test_fraction, "Held-out test fraction");
    add_model_flags(tra, o);
    tra->add_option("--out", o.out, "Checkpoint output path")->required();

    auto* interp = app.add_subcommand("interpret", "Head-ablation analysis");
    interp->add_option("--checkpoint", o.checkpoint, "Model checkpoint")->required();
    interp->add_option("--dataset", o.dataset, "Dataset file")->required();
    interp->add_option("--k", o.k, "Top head pairs entering the focus metric");
    interp->add_option("--node-fraction", o.node_fraction,
                       "Top-node set size, percent of nodes");
    interp->add_flag("--sign-agnostic", o.sign_agnostic,
                     "Rank heads by |deviation| instead of signed deviation");
    interp->add_option("--seed", o.seed, "Recorded in provenance only");
    interp->add_option("--config", o.config, "JSON config file");
    interp->add_option("--out", o.out, "Dataset report output path")->required();

    auto* self = app.add_subcommand("selfcheck", "Run the invariant suite");
    (void)self;

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        CLI::App* cmd = app.get_subcommands().front();
        merge_config(cmd, o);
        if (cmd == gen) return cmd_generate(o);
        if (cmd == sea) return cmd_search(o);
        if (cmd == tra) return cmd_train(o);
        if (cmd == interp) return cmd_interpret(o);
        return cmd_selfcheck();
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
