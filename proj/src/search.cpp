#include "dartsgt/search.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "dartsgt/rng.hpp"

namespace dartsgt {

using nlohmann::json;

ArchParams ArchParams::zeros(int layers) {
    ArchParams a;
    for (int l = 0; l < layers; ++l) a.rows.push_back(make_tensor({1, kNumGnnOps}, true));
    return a;
}

std::vector<std::vector<double>> ArchParams::snapshot() const {
    std::vector<std::vector<double>> out;
    for (const auto& r : rows) out.push_back(r->values);
    return out;
}

std::vector<std::vector<double>> ArchParams::softmax() const {
    std::vector<std::vector<double>> out;
    for (const auto& r : rows) {
        double mx = *std::max_element(r->values.begin(), r->values.end());
        std::vector<double> w(r->values.size());
        double z = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) z += w[i] = std::exp(r->values[i] - mx);
        for (double& x : w) x /= z;
        out.push_back(std::move(w));
    }
    return out;
}

bool ArchParams::all_finite() const {
    for (const auto& r : rows)
        if (!r->all_finite()) return false;
    return true;
}

void SearchConfig::validate() const {
    if (epochs_search < 0 || epochs_final < 1)
        throw std::invalid_argument("SearchConfig: epochs out of range");
    if (lr_w <= 0.0 || lr_alpha < 0.0)
        throw std::invalid_argument("SearchConfig: learning rates must be positive");
    if (batch_size < 1) throw std::invalid_argument("SearchConfig: batch_size >= 1");
    model.validate();
}

std::vector<std::string> DiscreteArchitecture::names() const {
    std::vector<std::string> out;
    for (GnnOp op : ops) out.emplace_back(gnn_op_name(op));
    return out;
}

DiscreteArchitecture DiscreteArchitecture::uniform(int layers, GnnOp op) {
    return DiscreteArchitecture{std::vector<GnnOp>(static_cast<std::size_t>(layers), op)};
}

namespace {

// Accumulates batch-mean gradients into the model (and alpha when given).
// Returns the mean loss over the batch.
double accumulate_batch(const ModelState& model, const ArchParams* arch,
                        const std::vector<const Graph*>& batch, std::mt19937_64& rng) {
    const double inv = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    for (const Graph* g : batch) {
        Tape tape;
        ForwardOptions opt;
        opt.training = true;
        opt.rng = &rng;
        if (arch) opt.alpha = &arch->rows;
        auto pred = model_forward(&tape, model, *g, opt);
        auto loss = ops::scalar_mul(&tape, graph_loss(&tape, model, pred, *g), inv);
        total += loss->values[0];
        tape.backward(loss);
    }
    return total;
}

void check_finite_loss(double loss, int epoch, int batch_index) {
    if (!std::isfinite(loss))
        throw std::runtime_error("non-finite loss " + std::to_string(loss) +
                                 " at epoch " + std::to_string(epoch) + ", batch " +
                                 std::to_string(batch_index));
}

std::vector<TensorPtr> trainable(const ModelState& s) {
    std::vector<TensorPtr> out;
    for (const auto& [name, t] : s.parameters()) out.push_back(t);
    return out;
}

void clip_grads(const std::vector<TensorPtr>& params, double max_norm) {
    if (max_norm <= 0.0) return;
    double sq = 0.0;
    for (const auto& p : params)
        for (double g : p->grad) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm <= max_norm) return;
    const double scale = max_norm / norm;
    for (const auto& p : params)
        for (double& g : p->grad) g *= scale;
}

}  // namespace

void alternate_step(ModelState& supernet, ArchParams& arch,
                    const std::vector<const Graph*>& batch_train,
                    const std::vector<const Graph*>& batch_val,
                    AdamOptimizer& opt_w, AdamOptimizer& opt_alpha,
                    std::mt19937_64& rng) {
    // w step on the train batch; alpha gradients from it are discarded.
    opt_w.zero_grad();
    for (const auto& r : arch.rows) {
        r->ensure_grad();
        r->zero_grad();
    }
    accumulate_batch(supernet, &arch, batch_train, rng);
    opt_w.step();

    // alpha step on the val batch; w gradients from it are discarded (they are
    // zeroed before the next w step).
    opt_alpha.zero_grad();
    accumulate_batch(supernet, &arch, batch_val, rng);
    opt_alpha.step();
}

SearchResult search(const Dataset& dataset, const SearchConfig& cfg) {
    cfg.validate();
    if (dataset.size() < 2)
        throw std::invalid_argument("search: dataset too small for a 60/40 split");
    SplitPair split = split_darts(dataset, cfg.seed);

    ModelState supernet = ModelState::init(cfg.model, true, {},
                                           substream_seed(cfg.seed, "phase1"));
    ArchParams arch = ArchParams::zeros(cfg.model.layers);
    AdamOptimizer opt_w(trainable(supernet), cfg.lr_w, cfg.weight_decay);
    AdamOptimizer opt_alpha(arch.rows, cfg.lr_alpha, cfg.alpha_weight_decay);

    auto shuffle_rng = substream(cfg.seed, "shuffle:search");
    auto dropout_rng = substream(cfg.seed, "dropout:search");

    SearchResult result;
    const auto& train = split.darts_train.graphs;
    const auto& val = split.darts_val.graphs;
    std::vector<int> train_idx(train.size()), val_idx(val.size());
    std::iota(train_idx.begin(), train_idx.end(), 0);
    std::iota(val_idx.begin(), val_idx.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs_search; ++epoch) {
        std::shuffle(train_idx.begin(), train_idx.end(), shuffle_rng);
        std::shuffle(val_idx.begin(), val_idx.end(), shuffle_rng);
        std::size_t val_cursor = 0;
        int batch_index = 0;
        for (std::size_t start = 0; start < train_idx.size();
             start += cfg.batch_size, ++batch_index) {
            std::vector<const Graph*> batch_train, batch_val;
            for (std::size_t i = start;
                 i < std::min(start + cfg.batch_size, train_idx.size()); ++i)
                batch_train.push_back(&train[train_idx[i]]);
            for (int i = 0; i < cfg.batch_size; ++i) {
                batch_val.push_back(&val[val_idx[val_cursor]]);
                val_cursor = (val_cursor + 1) % val_idx.size();
            }
            // inline alternate_step so alpha clipping stays configurable
            opt_w.zero_grad();
            for (const auto& r : arch.rows) {
                r->ensure_grad();
                r->zero_grad();
            }
            double train_loss =
                accumulate_batch(supernet, &arch, batch_train, dropout_rng);
            check_finite_loss(train_loss, epoch, batch_index);
            opt_w.step();

            opt_alpha.zero_grad();
            double val_loss = accumulate_batch(supernet, &arch, batch_val, dropout_rng);
            check_finite_loss(val_loss, epoch, batch_index);
            clip_grads(arch.rows, cfg.alpha_grad_clip);
            opt_alpha.step();
        }
        result.alpha_history.push_back(arch.snapshot());
    }
    if (cfg.epochs_search == 0)
        result.warnings.emplace_back(
            "no search epochs were run; architecture weights are all zero");
    result.final_alpha = arch.snapshot();
    result.final_softmax = arch.softmax();
    result.architecture = discretize(arch, &result.warnings);
    return result;
}

DiscreteArchitecture discretize(const ArchParams& arch,
                                std::vector<std::string>* warnings) {
    if (!arch.all_finite())
        throw std::runtime_error("discretize: non-finite architecture weights");
    DiscreteArchitecture d;
    for (int l = 0; l < arch.layers(); ++l) {
        const auto& row = arch.rows[l]->values;
        int best = 0;
        for (int i = 1; i < kNumGnnOps; ++i)
            if (row[i] > row[best]) best = i;
        for (int i = 0; i < kNumGnnOps; ++i)
            if (i != best && row[i] == row[best]) {
                if (warnings)
                    warnings->push_back("layer " + std::to_string(l) +
                                        ": architecture weight tie, picking " +
                                        gnn_op_name(static_cast<GnnOp>(std::min(i, best))));
                best = std::min(i, best);
                break;
            }
        d.ops.push_back(static_cast<GnnOp>(best));
    }
    return d;
}

ModelState train_model(const ModelConfig& cfg, const std::vector<GnnOp>& arch,
                       const Dataset& train, int epochs, double lr, int batch_size,
                       double weight_decay, std::uint64_t seed, double val_fraction,
                       std::vector<double>* epoch_losses,
                       const std::function<void(int, const ModelState&)>& on_epoch) {
    ModelState model = ModelState::init(cfg, false, arch, substream_seed(seed, "phase2"));
    AdamOptimizer opt(trainable(model), lr, weight_decay);
    auto shuffle_rng = substream(seed, "shuffle:final");
    auto dropout_rng = substream(seed, "dropout:final");

    // optional held-out split for best-state selection
    std::vector<int> idx(train.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::size_t n_val = val_fraction > 0.0
                            ? static_cast<std::size_t>(val_fraction * train.size())
                            : 0;
    Dataset val_set;
    Dataset train_set = train;
    if (n_val > 0) {
        std::shuffle(idx.begin(), idx.end(), shuffle_rng);
        val_set = train;
        val_set.graphs.clear();
        train_set.graphs.clear();
        for (std::size_t i = 0; i < idx.size(); ++i)
            (i < n_val ? val_set : train_set).graphs.push_back(train.graphs[idx[i]]);
    }

    double best_val_loss = std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> best_values;

    std::vector<int> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double epoch_loss = 0.0;
        int batch_index = 0, batches = 0;
        for (std::size_t start = 0; start < order.size();
             start += batch_size, ++batch_index, ++batches) {
            std::vector<const Graph*> batch;
            for (std::size_t i = start; i < std::min(start + batch_size, order.size());
                 ++i)
                batch.push_back(&train_set.graphs[order[i]]);
            opt.zero_grad();
            const double loss = accumulate_batch(model, nullptr, batch, dropout_rng);
            check_finite_loss(loss, epoch, batch_index);
            opt.step();
            epoch_loss += loss;
        }
        if (epoch_losses) epoch_losses->push_back(epoch_loss / std::max(batches, 1));
        if (on_epoch) on_epoch(epoch, model);
        if (n_val > 0) {
            const double vl = evaluate(model, val_set).mean_loss;
            if (vl < best_val_loss) {
                best_val_loss = vl;
                best_values.clear();
                for (const auto& p : opt.params()) best_values.push_back(p->values);
            }
        }
    }
    if (n_val > 0 && !best_values.empty()) {
        const auto& params = opt.params();
        for (std::size_t i = 0; i < params.size(); ++i)
            params[i]->values = best_values[i];
    }
    return model;
}

ModelState train_final(const DiscreteArchitecture& arch, const Dataset& train,
                       const SearchConfig& cfg, std::vector<double>* epoch_losses) {
    if (static_cast<int>(arch.ops.size()) != cfg.model.layers)
        throw std::invalid_argument("train_final: architecture length mismatch");
    return train_model(cfg.model, arch.ops, train, cfg.epochs_final, cfg.lr_w,
                       cfg.batch_size, cfg.weight_decay, cfg.seed,
                       cfg.final_val_fraction, epoch_losses);
}

DiscreteArchitecture random_architecture(int layers, std::uint64_t seed) {
    if (layers < 1) throw std::invalid_argument("random_architecture: layers >= 1");
    auto rng = substream(seed, "random-arch");
    std::uniform_int_distribution<int> pick(0, kNumGnnOps - 1);
    DiscreteArchitecture d;
    for (int l = 0; l < layers; ++l) d.ops.push_back(static_cast<GnnOp>(pick(rng)));
    return d;
}

void save_search_result(const std::string& path, const SearchResult& result,
                        const SearchConfig& cfg) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write search output: " + path);
    json j;
    j["seed"] = cfg.seed;
    j["epochs_search"] = cfg.epochs_search;
    j["alpha_per_epoch"] = result.alpha_history;
    j["final_alpha"] = result.final_alpha;
    j["final_softmax"] = result.final_softmax;
    j["architecture"] = result.architecture.names();
    std::vector<double> proportions(kNumGnnOps, 0.0);
    for (GnnOp op : result.architecture.ops)
        proportions[static_cast<int>(op)] += 1.0 / result.architecture.ops.size();
    json props;
    for (int i = 0; i < kNumGnnOps; ++i)
        props[gnn_op_name(static_cast<GnnOp>(i))] = proportions[i];
    j["operator_proportions"] = props;
    j["warnings"] = result.warnings;
    out << j.dump(2) << "\n";
}

}  // namespace dartsgt
