#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "dartsgt/model.hpp"
#include "dartsgt/selfcheck.hpp"

using namespace dartsgt;

namespace {

ModelConfig base_config() {
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
    return cfg;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("config validation rejects indivisible width") {
    ModelConfig cfg = base_config();
    cfg.dim = 10;
    cfg.heads = 4;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.dim = 12;
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("vanilla variant carries no GNN parameters") {
    ModelConfig cfg = base_config();
    cfg.variant = Variant::Vanilla;
    cfg.edge_residual = false;
    ModelState m = ModelState::init(cfg, false, {}, 3);
    for (const auto& layer : m.layers) CHECK(layer.gnn.empty());
    for (const auto& [name, t] : m.parameters()) {
        CHECK(name.find("gnn") == std::string::npos);
        CHECK(name.find("edge_mlp") == std::string::npos);
        CHECK(name.find("gate") == std::string::npos);
    }
}

TEST_CASE("search mode instantiates all operators, discrete exactly one") {
    ModelConfig cfg = base_config();
    ModelState search_model = ModelState::init(cfg, true, {}, 3);
    for (const auto& layer : search_model.layers)
        CHECK(layer.gnn.size() == kNumGnnOps);
    ModelState discrete = ModelState::init(cfg, false, {GnnOp::GINE, GnnOp::GatedGCN}, 3);
    for (const auto& layer : discrete.layers) CHECK(layer.gnn.size() == 1);
    CHECK(discrete.layers[1].selected == GnnOp::GatedGCN);
}

TEST_CASE("forward determinism and call counting") {
    ModelConfig cfg = base_config();
    ModelState m = ModelState::init(cfg, false, {GnnOp::GINE, GnnOp::GINE}, 4);
    Graph g = random_graph(6, cfg.d_in, cfg.d_e, false, false, 9);
    reset_model_forward_count();
    auto p1 = model_forward(nullptr, m, g);
    auto p2 = model_forward(nullptr, m, g);
    CHECK(p1->values == p2->values);
    CHECK(model_forward_count() == 2);
}

TEST_CASE("dense and sparse attention agree on complete self-looped graphs") {
    for (int n : {1, 2, 5, 9}) {
        ModelConfig cfg = base_config();
        Graph g = random_graph(n, cfg.d_in, cfg.d_e, true, true, 100 + n);
        cfg.attention = AttentionKind::Dense;
        ModelState dense = ModelState::init(cfg, false, {GnnOp::GATv2, GnnOp::GINE}, 5);
        cfg.attention = AttentionKind::Sparse;
        ModelState sparse = ModelState::init(cfg, false, {GnnOp::GATv2, GnnOp::GINE}, 5);
        ForwardAudit ad, as;
        ForwardOptions od, os;
        od.audit = &ad;
        os.audit = &as;
        model_forward(nullptr, dense, g, od);
        model_forward(nullptr, sparse, g, os);
        double worst = 0.0;
        for (std::size_t h = 0; h < ad.head_outputs.size(); ++h)
            for (std::size_t i = 0; i < ad.head_outputs[h].size(); ++i)
                worst = std::max(worst, std::fabs(ad.head_outputs[h][i] -
                                                  as.head_outputs[h][i]));
        CHECK(worst < 1e-9);
    }
}

TEST_CASE("attention trace invariants") {
    ModelConfig cfg = base_config();
    Graph g = random_graph(7, cfg.d_in, cfg.d_e, false, false, 11);

    SUBCASE("dense rows sum to one, uniform incoming mass sums to n") {
        cfg.attention = AttentionKind::Dense;
        ModelState m = ModelState::init(cfg, false, {GnnOp::GINE, GnnOp::GINE}, 6);
        AttentionTrace trace;
        ForwardOptions opt;
        opt.trace = &trace;
        model_forward(nullptr, m, g, opt);
        REQUIRE(trace.entries.size() == 4);
        double total_mass = 0.0;
        for (int l = 0; l < 2; ++l)
            for (int h = 0; h < 2; ++h) {
                const auto& head = trace.at(l, h);
                for (int i = 0; i < head.n; ++i) {
                    double row = 0.0;
                    for (int j = 0; j < head.n; ++j) row += head.dense[i * head.n + j];
                    CHECK(std::fabs(row - 1.0) < 1e-6);
                }
                CHECK(trace.attention_std(l, h) >= 0.0);
            }
        auto mass = trace.incoming_mass(0, 0, g.tgt);
        for (double v : mass) total_mass += v;
        CHECK(total_mass == doctest::Approx(g.n).epsilon(1e-9));
    }

    SUBCASE("sparse per-target groups sum to one") {
        cfg.attention = AttentionKind::Sparse;
        ModelState m = ModelState::init(cfg, false, {GnnOp::GINE, GnnOp::GINE}, 6);
        AttentionTrace trace;
        ForwardOptions opt;
        opt.trace = &trace;
        model_forward(nullptr, m, g, opt);
        for (int l = 0; l < 2; ++l)
            for (int h = 0; h < 2; ++h) {
                const auto& head = trace.at(l, h);
                std::vector<double> sums(g.n, 0.0);
                for (int e = 0; e < g.num_edges(); ++e)
                    sums[g.tgt[e]] += head.edge_scores[e];
                for (int j = 0; j < g.n; ++j)
                    if (sums[j] != 0.0) CHECK(std::fabs(sums[j] - 1.0) < 1e-6);
            }
    }
}

TEST_CASE("single directed edge forces attention weight one") {
    ModelConfig cfg = base_config();
    Graph g;
    g.n = 2;
    g.src = {0};
    g.tgt = {1};
    g.node_features = Tensor({2, cfg.d_in});
    g.node_features.at(0, 0) = 1.0;
    g.node_features.at(1, 1) = -0.5;
    g.edge_features = Tensor({1, cfg.d_e});
    g.edge_features.at(0, 0) = 0.3;
    g.label_class = 0;
    ModelState m = ModelState::init(cfg, false, {GnnOp::GINE, GnnOp::GINE}, 7);
    AttentionTrace trace;
    ForwardOptions opt;
    opt.trace = &trace;
    model_forward(nullptr, m, g, opt);
    for (int l = 0; l < 2; ++l)
        for (int h = 0; h < 2; ++h)
            CHECK(trace.at(l, h).edge_scores[0] == 1.0);
    auto mass = trace.incoming_mass(0, 0, g.tgt);
    CHECK(mass[0] == 0.0);
    CHECK(mass[1] == 1.0);
}

TEST_CASE("masking leaves other heads and earlier layers bitwise unchanged") {
    ModelConfig cfg = base_config();
    Graph g = random_graph(6, cfg.d_in, cfg.d_e, false, false, 13);
    ModelState m = ModelState::init(cfg, false, {GnnOp::GatedGCN, GnnOp::GATv2}, 8);
    ForwardAudit base, masked;
    ForwardOptions ob, om;
    ob.audit = &base;
    HeadMask mask{1, 1};
    om.audit = &masked;
    om.mask = &mask;
    model_forward(nullptr, m, g, ob);
    model_forward(nullptr, m, g, om);
    for (int l = 0; l < 2; ++l)
        for (int h = 0; h < 2; ++h) {
            if (l == 1 && h == 1) {
                for (double v : masked.head_outputs[l * 2 + h]) CHECK(v == 0.0);
            } else {
                CHECK(base.head_outputs[l * 2 + h] == masked.head_outputs[l * 2 + h]);
            }
        }
    CHECK(base.layer_inputs[0] == masked.layer_inputs[0]);
    CHECK(base.layer_inputs[1] == masked.layer_inputs[1]);
}

TEST_CASE("edge stream is computed once per forward pass") {
    ModelConfig cfg = base_config();
    cfg.layers = 3;
    Graph g = random_graph(5, cfg.d_in, cfg.d_e, false, false, 17);
    ModelState m =
        ModelState::init(cfg, false, {GnnOp::GINE, GnnOp::GINE, GnnOp::GINE}, 9);
    ForwardAudit audit;
    ForwardOptions opt;
    opt.audit = &audit;
    model_forward(nullptr, m, g, opt);
    CHECK(audit.edge_stream_computations == 1);
}

TEST_CASE("checkpoint round-trips bitwise") {
    ModelConfig cfg = base_config();
    ModelState m = ModelState::init(cfg, false, {GnnOp::GATv2, GnnOp::GatedGCN}, 10);
    Graph g = random_graph(6, cfg.d_in, cfg.d_e, false, false, 19);
    const std::string p1 = "/tmp/dartsgt_test_ckpt1", p2 = "/tmp/dartsgt_test_ckpt2";
    save_checkpoint(p1, m);
    ModelState back = load_checkpoint(p1);
    save_checkpoint(p2, back);
    CHECK(read_file(p1) == read_file(p2));

    auto orig = m.parameters();
    auto loaded = back.parameters();
    REQUIRE(orig.size() == loaded.size());
    for (std::size_t i = 0; i < orig.size(); ++i) {
        CHECK(orig[i].first == loaded[i].first);
        CHECK(orig[i].second->values == loaded[i].second->values);
    }
    CHECK(model_forward(nullptr, m, g)->values ==
          model_forward(nullptr, back, g)->values);
    std::remove(p1.c_str());
    std::remove(p2.c_str());
}

TEST_CASE("evaluate reports accuracy and loss") {
    ModelConfig cfg = base_config();
    ModelState m = ModelState::init(cfg, false, {GnnOp::GINE, GnnOp::GINE}, 20);
    Dataset ds = generate_synthetic("motif", 12, 21);
    cfg.d_in = ds.d_in;
    cfg.d_e = ds.d_e;
    ModelState m2 = ModelState::init(cfg, false, {GnnOp::GINE, GnnOp::GINE}, 20);
    EvalMetrics em = evaluate(m2, ds);
    CHECK(em.mean_loss > 0.0);
    CHECK(em.accuracy >= 0.0);
    CHECK(em.accuracy <= 1.0);
}
