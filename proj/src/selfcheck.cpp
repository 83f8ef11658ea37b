#include "dartsgt/selfcheck.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <random>

#include "dartsgt/gnn_ops.hpp"
#include "dartsgt/interpret.hpp"
#include "dartsgt/rng.hpp"

namespace dartsgt {

bool SelfCheckReport::all_passed() const {
    return std::all_of(checks.begin(), checks.end(),
                       [](const CheckResult& c) { return c.passed; });
}

double gradcheck_max_rel_err(const std::function<TensorPtr(Tape*)>& loss_fn,
                             const std::vector<TensorPtr>& inputs, double eps) {
    for (const auto& in : inputs) {
        in->requires_grad = true;
        in->ensure_grad();
        in->zero_grad();
    }
    Tape tape;
    TensorPtr loss = loss_fn(&tape);
    tape.backward(loss);
    std::vector<std::vector<double>> analytic;
    for (const auto& in : inputs)
        analytic.push_back(in->has_grad() ? in->grad
                                          : std::vector<double>(in->size(), 0.0));

    double worst = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        Tensor& t = *inputs[i];
        for (std::size_t k = 0; k < t.size(); ++k) {
            const double keep = t.values[k];
            t.values[k] = keep + eps;
            const double fp = loss_fn(nullptr)->values[0];
            t.values[k] = keep - eps;
            const double fm = loss_fn(nullptr)->values[0];
            t.values[k] = keep;
            const double numeric = (fp - fm) / (2.0 * eps);
            const double a = analytic[i][k];
            const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-2});
            worst = std::max(worst, std::fabs(a - numeric) / denom);
        }
    }
    return worst;
}

Graph random_graph(int n, int d_in, int d_e, bool complete, bool self_loops,
                   std::uint64_t seed) {
    auto rng = substream(seed, "selfcheck-graph");
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    Graph g;
    g.n = n;
    if (complete) {
        for (auto [i, j] : complete_edge_set(n, self_loops)) {
            g.src.push_back(i);
            g.tgt.push_back(j);
        }
    } else {
        // ring plus a couple of chords, both orientations
        auto put = [&](int a, int b) {
            g.src.push_back(a);
            g.tgt.push_back(b);
            g.src.push_back(b);
            g.tgt.push_back(a);
        };
        for (int i = 0; i < n; ++i) put(i, (i + 1) % n);
        if (n > 3) put(0, n / 2);
    }
    g.node_features = Tensor({n, d_in});
    for (auto& v : g.node_features.values) v = unit(rng);
    g.edge_features = Tensor({g.num_edges(), d_e});
    for (auto& v : g.edge_features.values) v = unit(rng);
    g.label_class = 1;
    g.label_value = 0.5;
    g.node_labels.assign(n, 0);
    return g;
}

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3g", v);
    return buf;
}

CheckResult check_gradient_ops() {
    double worst = 0.0;
    auto rng = substream(11, "selfcheck-ops");
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    auto rnd = [&](std::vector<int> shape) {
        auto t = make_tensor(std::move(shape), true);
        for (auto& v : t->values) v = unit(rng);
        return t;
    };

    {
        auto a = rnd({3, 4}), b = rnd({4, 2}), c = rnd({3, 2});
        worst = std::max(worst, gradcheck_max_rel_err(
            [&](Tape* t) {
                auto y = ops::relu(t, ops::matmul(t, a, b));
                return ops::mean(t, ops::hadamard(t, y, c));
            },
            {a, b, c}));
    }
    {
        auto x = rnd({3, 5}), w = rnd({3, 5});
        worst = std::max(worst, gradcheck_max_rel_err(
            [&](Tape* t) {
                return ops::mean(t, ops::hadamard(t, ops::row_softmax(t, x), w));
            },
            {x, w}));
    }
    {
        auto x = rnd({4, 6}), g = rnd({1, 6}), b = rnd({1, 6});
        worst = std::max(worst, gradcheck_max_rel_err(
            [&](Tape* t) {
                return ops::mean(t, ops::sigmoid(t, ops::layer_norm(t, x, g, b)));
            },
            {x, g, b}));
    }
    {
        std::vector<int> targets = {0, 0, 1, 2, 2, 2};
        auto s = rnd({6, 1}), m = rnd({6, 3});
        worst = std::max(worst, gradcheck_max_rel_err(
            [&](Tape* t) {
                auto w = ops::segment_softmax(t, s, targets, 3);
                return ops::mean(t, ops::segment_sum(t, ops::row_scale(t, m, w),
                                                     targets, 3));
            },
            {s, m}));
    }
    {
        auto z = rnd({1, 1});
        worst = std::max(worst, gradcheck_max_rel_err(
            [&](Tape* t) { return ops::bce_with_logits(t, z, 1.0); }, {z}));
        auto logits = rnd({4, 3});
        std::vector<int> labels = {0, 2, 1, 1};
        worst = std::max(worst, gradcheck_max_rel_err(
            [&](Tape* t) { return ops::cross_entropy(t, logits, labels); }, {logits}));
        auto p = rnd({1, 1});
        worst = std::max(worst, gradcheck_max_rel_err(
            [&](Tape* t) { return ops::mae_loss(t, p, 0.3); }, {p}));
    }
    return {"gradient-ops", worst < 1e-4, "max rel err " + fmt(worst)};
}

CheckResult check_gradient_block() {
    ModelConfig cfg;
    cfg.layers = 2;
    cfg.heads = 2;
    cfg.dim = 8;
    cfg.attention = AttentionKind::Sparse;
    cfg.variant = Variant::DartsGT;
    cfg.task_kind = TaskKind::GraphClassification;
    cfg.num_classes = 2;
    cfg.d_in = 3;
    cfg.d_e = 2;
    Graph g = random_graph(4, cfg.d_in, cfg.d_e, false, false, 21);

    ModelState model = ModelState::init(cfg, true, {}, 17);
    std::vector<TensorPtr> alpha;
    auto arng = substream(17, "selfcheck-alpha");
    std::uniform_real_distribution<double> unit(-0.5, 0.5);
    for (int l = 0; l < cfg.layers; ++l) {
        auto row = make_tensor({1, kNumGnnOps}, true);
        for (auto& v : row->values) v = unit(arng);
        alpha.push_back(row);
    }
    std::vector<TensorPtr> inputs = alpha;
    for (auto& [name, t] : model.parameters()) inputs.push_back(t);

    auto loss_fn = [&](Tape* t) {
        ForwardOptions opt;
        opt.alpha = &alpha;
        TensorPtr pred = model_forward(t, model, g, opt);
        return graph_loss(t, model, pred, g);
    };
    double worst = gradcheck_max_rel_err(loss_fn, inputs);
    return {"gradient-block", worst < 1e-4, "max rel err " + fmt(worst)};
}

CheckResult check_dense_sparse() {
    ModelConfig cfg;
    cfg.layers = 2;
    cfg.heads = 2;
    cfg.dim = 8;
    cfg.variant = Variant::DartsGT;
    cfg.task_kind = TaskKind::GraphClassification;
    cfg.num_classes = 2;
    cfg.d_in = 3;
    cfg.d_e = 2;
    Graph g = random_graph(5, cfg.d_in, cfg.d_e, true, true, 31);

    cfg.attention = AttentionKind::Dense;
    ModelState dense = ModelState::init(cfg, false, {GnnOp::GINE, GnnOp::GatedGCN}, 7);
    cfg.attention = AttentionKind::Sparse;
    ModelState sparse = ModelState::init(cfg, false, {GnnOp::GINE, GnnOp::GatedGCN}, 7);

    ForwardAudit ad, as;
    ForwardOptions od, os;
    od.audit = &ad;
    os.audit = &as;
    model_forward(nullptr, dense, g, od);
    model_forward(nullptr, sparse, g, os);
    double worst = 0.0;
    for (std::size_t h = 0; h < ad.head_outputs.size(); ++h)
        for (std::size_t k = 0; k < ad.head_outputs[h].size(); ++k)
            worst = std::max(worst,
                             std::fabs(ad.head_outputs[h][k] - as.head_outputs[h][k]));
    return {"dense-sparse-equivalence", worst < 1e-9, "max abs diff " + fmt(worst)};
}

CheckResult check_mixture() {
    const int d = 8;
    auto rng = substream(5, "selfcheck-mixture");
    std::array<GnnParams, kNumGnnOps> params = {GnnParams::init(GnnOp::GINE, d, rng),
                                                GnnParams::init(GnnOp::GATv2, d, rng),
                                                GnnParams::init(GnnOp::GatedGCN, d, rng)};
    Graph g = random_graph(5, d, d, false, false, 41);
    auto z = make_tensor({g.n, d}, g.node_features.values);
    auto e = make_tensor({g.num_edges(), d}, g.edge_features.values);
    auto alpha = make_tensor({1, kNumGnnOps}, {0.3, -0.2, 0.8});

    TensorPtr mixed = mixed_operator(nullptr, alpha, params, z, g.src, g.tgt, e);
    TensorPtr sm = ops::row_softmax(nullptr, alpha);
    std::vector<double> manual(mixed->size(), 0.0);
    for (int o = 0; o < kNumGnnOps; ++o) {
        TensorPtr out = gnn_forward(nullptr, params[o], z, g.src, g.tgt, e);
        for (std::size_t k = 0; k < manual.size(); ++k)
            manual[k] += sm->values[o] * out->values[k];
    }
    double worst = 0.0;
    for (std::size_t k = 0; k < manual.size(); ++k)
        worst = std::max(worst, std::fabs(manual[k] - mixed->values[k]));
    return {"mixture-linearity", worst < 1e-12, "max abs diff " + fmt(worst)};
}

CheckResult check_masking() {
    ModelConfig cfg;
    cfg.layers = 2;
    cfg.heads = 2;
    cfg.dim = 8;
    cfg.attention = AttentionKind::Sparse;
    cfg.variant = Variant::DartsGT;
    cfg.task_kind = TaskKind::GraphClassification;
    cfg.num_classes = 2;
    cfg.d_in = 3;
    cfg.d_e = 2;
    Graph g = random_graph(6, cfg.d_in, cfg.d_e, false, false, 51);
    ModelState model = ModelState::init(cfg, false, {GnnOp::GATv2, GnnOp::GINE}, 9);

    ForwardAudit base, masked;
    ForwardOptions ob, om;
    ob.audit = &base;
    HeadMask mask{1, 0};
    om.audit = &masked;
    om.mask = &mask;
    model_forward(nullptr, model, g, ob);
    model_forward(nullptr, model, g, om);

    bool ok = true;
    for (int l = 0; l < cfg.layers && ok; ++l)
        for (int m = 0; m < cfg.heads && ok; ++m) {
            if (l == mask.layer && m == mask.head) continue;
            ok = base.head_outputs[l * cfg.heads + m] ==
                 masked.head_outputs[l * cfg.heads + m];
        }
    // everything strictly below the masked layer is bitwise untouched
    for (int l = 0; l <= mask.layer && ok; ++l)
        ok = base.layer_inputs[l] == masked.layer_inputs[l];
    return {"masking-locality", ok, ok ? "bitwise clean" : "leak detected"};
}

CheckResult check_softmax_normalization() {
    auto x = make_tensor({3, 4}, {1000.0, 999.0, -1000.0, 998.0,
                                  -745.0, -744.0, -743.0, -742.0,
                                  0.0, 0.0, 0.0, 0.0});
    TensorPtr s = ops::row_softmax(nullptr, x);
    double worst = 0.0;
    for (int i = 0; i < 3; ++i) {
        double row = 0.0;
        for (int j = 0; j < 4; ++j) row += s->at(i, j);
        worst = std::max(worst, std::fabs(row - 1.0));
    }
    if (!s->all_finite()) worst = 1.0;
    return {"softmax-normalization", worst < 1e-12, "max row-sum error " + fmt(worst)};
}

CheckResult check_metric_bounds() {
    bool ok = true;
    std::string detail = "oracles + 200 random traces";
    DeviationTable t;
    t.layers = 2;
    t.heads = 2;
    t.delta = {0.0, 0.0, 2.0, 2.0};
    if (std::fabs(specialization(t) - 1.0) > 1e-15) ok = false;
    t.delta = {0.7, 0.7, 0.7, 0.7};
    if (specialization(t) != 0.0) ok = false;

    auto f = focus_metric({{1, 2}, {2, 3}});
    if (!f || std::fabs(*f - 1.0 / 3.0) > 1e-15) ok = false;
    if (focus_metric({{0, 1}}).has_value()) ok = false;

    auto rng = substream(3, "selfcheck-metrics");
    std::uniform_int_distribution<int> node(0, 9);
    for (int trial = 0; trial < 200 && ok; ++trial) {
        std::vector<std::vector<int>> sets(2 + trial % 4);
        for (auto& s : sets) {
            s.resize(1 + trial % 3);
            for (auto& v : s) v = node(rng);
            std::sort(s.begin(), s.end());
            s.erase(std::unique(s.begin(), s.end()), s.end());
        }
        auto fv = focus_metric(sets);
        if (!fv || *fv < 0.0 || *fv > 1.0) ok = false;
    }
    return {"metric-bounds", ok, ok ? detail : "oracle mismatch"};
}

}  // namespace

SelfCheckReport run_selfcheck() {
    SelfCheckReport report;
    report.checks.push_back(check_gradient_ops());
    report.checks.push_back(check_gradient_block());
    report.checks.push_back(check_dense_sparse());
    report.checks.push_back(check_mixture());
    report.checks.push_back(check_masking());
    report.checks.push_back(check_softmax_normalization());
    report.checks.push_back(check_metric_bounds());
    return report;
}

}  // namespace dartsgt
