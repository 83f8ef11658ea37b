#include "dartsgt/model.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "dartsgt/rng.hpp"

namespace dartsgt {

using namespace ops;
using nlohmann::json;

namespace {
std::uint64_t g_forward_count = 0;
}

std::uint64_t model_forward_count() { return g_forward_count; }
void reset_model_forward_count() { g_forward_count = 0; }

const char* attention_kind_name(AttentionKind k) {
    return k == AttentionKind::Dense ? "dense" : "sparse";
}

const char* variant_name(Variant v) {
    switch (v) {
        case Variant::DartsGT: return "dartsgt";
        case Variant::Symmetric: return "symmetric";
        case Variant::Vanilla: return "vanilla";
    }
    return "?";
}

AttentionKind attention_kind_from_name(const std::string& s) {
    if (s == "dense") return AttentionKind::Dense;
    if (s == "sparse") return AttentionKind::Sparse;
    throw std::invalid_argument("unknown attention kind: " + s);
}

Variant variant_from_name(const std::string& s) {
    if (s == "dartsgt") return Variant::DartsGT;
    if (s == "symmetric") return Variant::Symmetric;
    if (s == "vanilla") return Variant::Vanilla;
    throw std::invalid_argument("unknown variant: " + s);
}

int ModelConfig::out_dim() const {
    switch (task_kind) {
        case TaskKind::Regression: return 1;
        case TaskKind::GraphClassification: return num_classes == 2 ? 1 : num_classes;
        case TaskKind::NodeClassification: return num_classes;
    }
    return 1;
}

void ModelConfig::validate() const {
    if (layers < 1 || heads < 1 || dim < 1) throw std::invalid_argument("ModelConfig: layers/heads/dim must be positive");
    if (dim % heads != 0)
        throw std::invalid_argument("ModelConfig: dim " + std::to_string(dim) +
                                    " not divisible by heads " + std::to_string(heads));
    if (ffn_ratio < 1) throw std::invalid_argument("ModelConfig: ffn_ratio >= 1");
    if (dropout < 0.0 || dropout >= 1.0)
        throw std::invalid_argument("ModelConfig: dropout must be in [0,1)");
    if (task_kind != TaskKind::Regression && num_classes < 2)
        throw std::invalid_argument("ModelConfig: classification needs >= 2 classes");
    if (d_in < 1 || d_e < 0) throw std::invalid_argument("ModelConfig: bad feature dims");
}

std::vector<double> AttentionTrace::incoming_mass(int layer, int head,
                                                  const std::vector<int>& tgt) const {
    const Head& h = at(layer, head);
    std::vector<double> mass(h.n, 0.0);
    if (kind == AttentionKind::Dense) {
        for (int i = 0; i < h.n; ++i)
            for (int j = 0; j < h.n; ++j) mass[j] += h.dense[static_cast<std::size_t>(i) * h.n + j];
    } else {
        for (std::size_t e = 0; e < h.edge_scores.size(); ++e) mass[tgt[e]] += h.edge_scores[e];
    }
    return mass;
}

double AttentionTrace::attention_std(int layer, int head) const {
    const Head& h = at(layer, head);
    const std::vector<double>& v =
        kind == AttentionKind::Dense ? h.dense : h.edge_scores;
    if (v.empty()) return 0.0;
    double mu = 0.0;
    for (double x : v) mu += x;
    mu /= v.size();
    double var = 0.0;
    for (double x : v) var += (x - mu) * (x - mu);
    return std::sqrt(var / v.size());
}

ModelState ModelState::init(const ModelConfig& cfg, bool search_mode,
                            const std::vector<GnnOp>& arch, std::uint64_t seed) {
    cfg.validate();
    const bool has_gnn = cfg.variant != Variant::Vanilla;
    if (has_gnn && !search_mode && static_cast<int>(arch.size()) != cfg.layers)
        throw std::invalid_argument("ModelState::init: architecture length " +
                                    std::to_string(arch.size()) + " != layers " +
                                    std::to_string(cfg.layers));
    ModelState s;
    s.config = cfg;
    s.search_mode = has_gnn && search_mode;
    auto rng = substream(seed, "init");
    const int d = cfg.dim, dm = cfg.head_dim();

    s.node_enc_w = init_linear(cfg.d_in, d, rng);
    s.node_enc_b = make_tensor({1, d}, true);
    if (has_gnn && cfg.phi == PhiKind::Mlp2) {
        s.phi_w1 = init_linear(d, d, rng);
        s.phi_b1 = make_tensor({1, d}, true);
        s.phi_w2 = init_linear(d, d, rng);
        s.phi_b2 = make_tensor({1, d}, true);
    }
    if (cfg.edge_residual) {
        s.edge_mlp_w1 = init_linear(std::max(cfg.d_e, 1), d, rng);
        s.edge_mlp_b1 = make_tensor({1, d}, true);
        s.edge_mlp_w2 = init_linear(d, d, rng);
        s.edge_mlp_b2 = make_tensor({1, d}, true);
    }
    for (int l = 0; l < cfg.layers; ++l) {
        LayerState ls;
        if (has_gnn) {
            ls.edge_proj_w = init_linear(std::max(cfg.d_e, 1), d, rng);
            ls.edge_proj_b = make_tensor({1, d}, true);
            if (s.search_mode) {
                for (GnnOp op : kAllGnnOps) ls.gnn.push_back(GnnParams::init(op, d, rng));
            } else {
                ls.selected = arch[l];
                ls.gnn.push_back(GnnParams::init(arch[l], d, rng));
            }
        }
        for (int m = 0; m < cfg.heads; ++m) {
            ls.w_q.push_back(init_linear(d, dm, rng));
            ls.w_k.push_back(init_linear(d, dm, rng));
            ls.w_v.push_back(init_linear(d, dm, rng));
        }
        ls.w_out = init_linear(d, d, rng);
        ls.norm1_g = make_tensor({1, d}, true);
        ls.norm2_g = make_tensor({1, d}, true);
        std::fill(ls.norm1_g->values.begin(), ls.norm1_g->values.end(), 1.0);
        std::fill(ls.norm2_g->values.begin(), ls.norm2_g->values.end(), 1.0);
        ls.norm1_b = make_tensor({1, d}, true);
        ls.norm2_b = make_tensor({1, d}, true);
        ls.ffn_w1 = init_linear(d, cfg.ffn_ratio * d, rng);
        ls.ffn_b1 = make_tensor({1, cfg.ffn_ratio * d}, true);
        ls.ffn_w2 = init_linear(cfg.ffn_ratio * d, d, rng);
        ls.ffn_b2 = make_tensor({1, d}, true);
        if (cfg.edge_residual) ls.gate = make_scalar(0.0, true);  // gate starts at 0.5
        s.layers.push_back(std::move(ls));
    }
    const int out = cfg.out_dim();
    s.head_w = init_linear(d, out, rng);
    s.head_b = make_tensor({1, out}, true);
    return s;
}

NamedParams ModelState::parameters() const {
    NamedParams out;
    auto put = [&](const std::string& name, const TensorPtr& t) {
        if (t) out.emplace_back(name, t);
    };
    put("node_enc.w", node_enc_w);
    put("node_enc.b", node_enc_b);
    put("phi.w1", phi_w1);
    put("phi.b1", phi_b1);
    put("phi.w2", phi_w2);
    put("phi.b2", phi_b2);
    put("edge_mlp.w1", edge_mlp_w1);
    put("edge_mlp.b1", edge_mlp_b1);
    put("edge_mlp.w2", edge_mlp_w2);
    put("edge_mlp.b2", edge_mlp_b2);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const LayerState& ls = layers[l];
        const std::string p = "layer" + std::to_string(l) + ".";
        put(p + "edge_proj.w", ls.edge_proj_w);
        put(p + "edge_proj.b", ls.edge_proj_b);
        for (const GnnParams& gp : ls.gnn)
            gp.collect(p + "op." + gnn_op_name(gp.op) + ".", out);
        for (std::size_t m = 0; m < ls.w_q.size(); ++m) {
            const std::string h = p + "head" + std::to_string(m) + ".";
            put(h + "wq", ls.w_q[m]);
            put(h + "wk", ls.w_k[m]);
            put(h + "wv", ls.w_v[m]);
        }
        put(p + "w_out", ls.w_out);
        put(p + "norm1.g", ls.norm1_g);
        put(p + "norm1.b", ls.norm1_b);
        put(p + "norm2.g", ls.norm2_g);
        put(p + "norm2.b", ls.norm2_b);
        put(p + "ffn.w1", ls.ffn_w1);
        put(p + "ffn.b1", ls.ffn_b1);
        put(p + "ffn.w2", ls.ffn_w2);
        put(p + "ffn.b2", ls.ffn_b2);
        put(p + "gate", ls.gate);
    }
    put("head.w", head_w);
    put("head.b", head_b);
    return out;
}

namespace {

TensorPtr constant_tensor(const Tensor& t) {
    auto out = std::make_shared<Tensor>(t);
    out->requires_grad = false;
    out->grad.clear();
    return out;
}

TensorPtr apply_phi(Tape* tape, const ModelState& s, const TensorPtr& z) {
    if (s.config.phi == PhiKind::Identity || !s.phi_w1) return z;
    auto h = relu(tape, add_rowvec(tape, matmul(tape, z, s.phi_w1), s.phi_b1));
    return add_rowvec(tape, matmul(tape, h, s.phi_w2), s.phi_b2);
}

}  // namespace

TensorPtr model_forward(Tape* tape, const ModelState& state, const Graph& g,
                        const ForwardOptions& opt) {
    ++g_forward_count;
    const ModelConfig& cfg = state.config;
    if (g.node_features.cols() != cfg.d_in || g.edge_features.cols() != cfg.d_e)
        throw std::invalid_argument(
            "model_forward: graph feature dims (" +
            std::to_string(g.node_features.cols()) + "," +
            std::to_string(g.edge_features.cols()) + ") do not match encoders (" +
            std::to_string(cfg.d_in) + "," + std::to_string(cfg.d_e) + ")");
    if (opt.mask) {
        if (opt.mask->layer < 0 || opt.mask->layer >= cfg.layers || opt.mask->head < 0 ||
            opt.mask->head >= cfg.heads)
            throw std::out_of_range("model_forward: head mask out of range");
    }
    if (state.search_mode &&
        (!opt.alpha || static_cast<int>(opt.alpha->size()) != cfg.layers))
        throw std::invalid_argument("model_forward: search mode requires L alpha rows");

    const int n = g.n, dm = cfg.head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dm));
    const bool training = opt.training && cfg.dropout > 0.0;
    if (training && !opt.rng)
        throw std::invalid_argument("model_forward: training dropout needs an rng");

    if (opt.trace) {
        opt.trace->layers = cfg.layers;
        opt.trace->heads = cfg.heads;
        opt.trace->kind = cfg.attention;
        opt.trace->entries.assign(static_cast<std::size_t>(cfg.layers) * cfg.heads, {});
    }
    if (opt.audit) {
        opt.audit->head_outputs.assign(static_cast<std::size_t>(cfg.layers) * cfg.heads,
                                       {});
        opt.audit->layer_inputs.clear();
        opt.audit->edge_stream_computations = 0;
    }

    auto features = constant_tensor(g.node_features);
    auto edge_raw = constant_tensor(g.edge_features);
    auto z = add_rowvec(tape, matmul(tape, features, state.node_enc_w), state.node_enc_b);

    // Edge residual stream: computed once per forward pass, reused at every layer.
    TensorPtr h_edge;
    if (cfg.edge_residual) {
        auto hidden = relu(
            tape, add_rowvec(tape, matmul(tape, edge_raw, state.edge_mlp_w1),
                             state.edge_mlp_b1));
        if (training) hidden = dropout(tape, hidden, cfg.dropout, true, *opt.rng);
        auto e_tilde =
            add_rowvec(tape, matmul(tape, hidden, state.edge_mlp_w2), state.edge_mlp_b2);
        h_edge = segment_sum(tape, e_tilde, g.tgt, n);
        if (opt.audit) ++opt.audit->edge_stream_computations;
    }

    for (int l = 0; l < cfg.layers; ++l) {
        const LayerState& ls = state.layers[l];
        if (opt.audit) opt.audit->layer_inputs.push_back(z->values);

        TensorPtr struct_out;
        if (cfg.variant != Variant::Vanilla) {
            auto edge_proj = add_rowvec(tape, matmul(tape, edge_raw, ls.edge_proj_w),
                                        ls.edge_proj_b);
            if (state.search_mode) {
                std::array<GnnParams, kNumGnnOps> bundle = {ls.gnn[0], ls.gnn[1],
                                                            ls.gnn[2]};
                struct_out = mixed_operator(tape, (*opt.alpha)[l], bundle, z, g.src,
                                            g.tgt, edge_proj);
            } else {
                struct_out = gnn_forward(tape, ls.gnn[0], z, g.src, g.tgt, edge_proj);
            }
        }

        TensorPtr q_src, kv_src;
        switch (cfg.variant) {
            case Variant::Vanilla:
                q_src = z;
                kv_src = z;
                break;
            case Variant::Symmetric:
                q_src = struct_out;
                kv_src = struct_out;
                break;
            case Variant::DartsGT:
                q_src = apply_phi(tape, state, z);
                kv_src = struct_out;
                break;
        }

        std::vector<TensorPtr> head_outputs;
        for (int m = 0; m < cfg.heads; ++m) {
            auto q = matmul(tape, q_src, ls.w_q[m]);
            auto k = matmul(tape, kv_src, ls.w_k[m]);
            auto v = matmul(tape, kv_src, ls.w_v[m]);
            TensorPtr y;
            if (cfg.attention == AttentionKind::Dense) {
                auto s = row_softmax(tape, scalar_mul(tape, matmul_nt(tape, q, k), scale));
                y = matmul(tape, s, v);
                if (opt.trace) {
                    auto& h = opt.trace->entries[static_cast<std::size_t>(l) * cfg.heads + m];
                    h.dense = s->values;
                    h.n = n;
                }
            } else {
                auto beta = scalar_mul(
                    tape,
                    row_dot(tape, gather_rows(tape, k, g.src), gather_rows(tape, q, g.tgt)),
                    scale);
                auto s = segment_softmax(tape, beta, g.tgt, n);
                y = segment_sum(tape, row_scale(tape, gather_rows(tape, v, g.src), s),
                                g.tgt, n);
                if (opt.trace) {
                    auto& h = opt.trace->entries[static_cast<std::size_t>(l) * cfg.heads + m];
                    h.edge_scores = s->values;
                    h.n = n;
                }
            }
            if (opt.mask && opt.mask->layer == l && opt.mask->head == m)
                y = make_tensor({n, dm});  // silenced pre-concatenation output
            if (opt.audit)
                opt.audit->head_outputs[static_cast<std::size_t>(l) * cfg.heads + m] =
                    y->values;
            head_outputs.push_back(y);
        }
        auto y_cat = matmul(tape, concat_columns(tape, head_outputs), ls.w_out);
        if (training) y_cat = dropout(tape, y_cat, cfg.dropout, true, *opt.rng);
        if (cfg.edge_residual)
            y_cat = add(tape, y_cat, scale_by(tape, h_edge, sigmoid(tape, ls.gate)));
        auto z_hat = layer_norm(tape, add(tape, z, y_cat), ls.norm1_g, ls.norm1_b);
        auto ffn_hidden = relu(
            tape, add_rowvec(tape, matmul(tape, z_hat, ls.ffn_w1), ls.ffn_b1));
        if (training) ffn_hidden = dropout(tape, ffn_hidden, cfg.dropout, true, *opt.rng);
        auto ffn = add_rowvec(tape, matmul(tape, ffn_hidden, ls.ffn_w2), ls.ffn_b2);
        z = layer_norm(tape, add(tape, z_hat, ffn), ls.norm2_g, ls.norm2_b);
    }
    if (opt.audit) opt.audit->layer_inputs.push_back(z->values);

    if (cfg.task_kind == TaskKind::NodeClassification)
        return add_rowvec(tape, matmul(tape, z, state.head_w), state.head_b);
    auto pooled = mean_rows(tape, z);
    return add_rowvec(tape, matmul(tape, pooled, state.head_w), state.head_b);
}

TensorPtr graph_loss(Tape* tape, const ModelState& state, const TensorPtr& pred,
                     const Graph& g) {
    switch (state.config.task_kind) {
        case TaskKind::Regression:
            return mae_loss(tape, pred, g.label_value);
        case TaskKind::GraphClassification:
            if (state.config.num_classes == 2)
                return bce_with_logits(tape, pred, static_cast<double>(g.label_class));
            return cross_entropy(tape, pred, {g.label_class});
        case TaskKind::NodeClassification:
            return cross_entropy(tape, pred, g.node_labels);
    }
    throw std::logic_error("unreachable");
}

EvalMetrics evaluate(const ModelState& state, const Dataset& ds) {
    EvalMetrics m;
    double correct = 0.0, total = 0.0, abs_err = 0.0;
    for (const Graph& g : ds.graphs) {
        auto pred = model_forward(nullptr, state, g);
        auto loss = graph_loss(nullptr, state, pred, g);
        m.mean_loss += loss->values[0];
        switch (ds.task_kind) {
            case TaskKind::Regression:
                abs_err += std::abs(pred->values[0] - g.label_value);
                total += 1.0;
                break;
            case TaskKind::GraphClassification: {
                int predicted;
                if (state.config.num_classes == 2)
                    predicted = pred->values[0] > 0.0 ? 1 : 0;
                else {
                    predicted = 0;
                    for (int c = 1; c < pred->cols(); ++c)
                        if (pred->values[c] > pred->values[predicted]) predicted = c;
                }
                correct += predicted == g.label_class ? 1.0 : 0.0;
                total += 1.0;
                break;
            }
            case TaskKind::NodeClassification:
                for (int i = 0; i < g.n; ++i) {
                    int predicted = 0;
                    for (int c = 1; c < pred->cols(); ++c)
                        if (pred->at(i, c) > pred->at(i, predicted)) predicted = c;
                    correct += predicted == g.node_labels[i] ? 1.0 : 0.0;
                    total += 1.0;
                }
                break;
        }
    }
    if (!ds.graphs.empty()) m.mean_loss /= ds.graphs.size();
    if (total > 0.0) {
        m.accuracy = correct / total;
        m.mae = abs_err / total;
    }
    return m;
}

void save_checkpoint(const std::string& path, const ModelState& state) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    const ModelConfig& c = state.config;
    json cfg = {{"layers", c.layers},
                {"heads", c.heads},
                {"dim", c.dim},
                {"ffn_ratio", c.ffn_ratio},
                {"attention", attention_kind_name(c.attention)},
                {"variant", variant_name(c.variant)},
                {"phi", c.phi == PhiKind::Identity ? "identity" : "mlp2"},
                {"edge_residual", c.edge_residual},
                {"dropout", c.dropout},
                {"task_kind", task_kind_name(c.task_kind)},
                {"num_classes", c.num_classes},
                {"d_in", c.d_in},
                {"d_e", c.d_e},
                {"search_mode", state.search_mode}};
    json arch = json::array();
    if (c.variant != Variant::Vanilla && !state.search_mode)
        for (const LayerState& ls : state.layers) arch.push_back(gnn_op_name(ls.selected));
    cfg["architecture"] = arch;
    out << "DARTSGT-CKPT 1\n" << cfg.dump() << "\n";
    char buf[64];
    for (const auto& [name, t] : state.parameters()) {
        out << "tensor " << name << " " << t->rows() << " " << t->cols() << "\n";
        for (std::size_t i = 0; i < t->size(); ++i) {
            std::snprintf(buf, sizeof buf, "%a", t->values[i]);
            out << buf << (i + 1 == t->size() ? "" : " ");
        }
        out << "\n";
    }
}

ModelState load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    std::string line;
    if (!std::getline(in, line) || line != "DARTSGT-CKPT 1")
        throw std::runtime_error(path + ": not a checkpoint file");
    if (!std::getline(in, line)) throw std::runtime_error(path + ": missing config");
    json cfg = json::parse(line);
    ModelConfig c;
    c.layers = cfg.at("layers");
    c.heads = cfg.at("heads");
    c.dim = cfg.at("dim");
    c.ffn_ratio = cfg.at("ffn_ratio");
    c.attention = attention_kind_from_name(cfg.at("attention"));
    c.variant = variant_from_name(cfg.at("variant"));
    c.phi = cfg.at("phi") == "mlp2" ? PhiKind::Mlp2 : PhiKind::Identity;
    c.edge_residual = cfg.at("edge_residual");
    c.dropout = cfg.at("dropout");
    const std::string tk = cfg.at("task_kind");
    c.task_kind = tk == "regression"          ? TaskKind::Regression
                  : tk == "graph_classification" ? TaskKind::GraphClassification
                                                 : TaskKind::NodeClassification;
    c.num_classes = cfg.at("num_classes");
    c.d_in = cfg.at("d_in");
    c.d_e = cfg.at("d_e");
    std::vector<GnnOp> arch;
    for (const auto& name : cfg.at("architecture"))
        arch.push_back(gnn_op_from_name(name.get<std::string>()));
    ModelState s = ModelState::init(c, cfg.at("search_mode").get<bool>(), arch, 0);

    NamedParams params = s.parameters();
    auto find = [&](const std::string& name) -> TensorPtr {
        for (auto& [n, t] : params)
            if (n == name) return t;
        throw std::runtime_error(path + ": unknown tensor name " + name);
    };
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream hdr(line);
        std::string kw, name;
        int rows = 0, cols = 0;
        hdr >> kw >> name >> rows >> cols;
        if (kw != "tensor") throw std::runtime_error(path + ": bad tensor header");
        TensorPtr t = find(name);
        if (t->rows() != rows || t->cols() != cols)
            throw std::runtime_error(path + ": shape mismatch for " + name);
        if (!std::getline(in, line))
            throw std::runtime_error(path + ": missing values for " + name);
        std::istringstream vals(line);
        for (std::size_t i = 0; i < t->size(); ++i) {
            std::string tok;
            if (!(vals >> tok))
                throw std::runtime_error(path + ": truncated values for " + name);
            t->values[i] = std::strtod(tok.c_str(), nullptr);
        }
    }
    return s;
}

}  // namespace dartsgt
