#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dartsgt/gnn_ops.hpp"
#include "dartsgt/rng.hpp"

using namespace dartsgt;

namespace {

TensorPtr rnd(std::vector<int> shape, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    auto t = make_tensor(std::move(shape), true);
    for (auto& v : t->values) v = u(rng);
    return t;
}

void set_identity(const TensorPtr& t) {
    std::fill(t->values.begin(), t->values.end(), 0.0);
    for (int i = 0; i < t->rows() && i < t->cols(); ++i) t->at(i, i) = 1.0;
}

void set_zero(const TensorPtr& t) {
    std::fill(t->values.begin(), t->values.end(), 0.0);
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::fabs(a[i] - b[i]));
    return worst;
}

}  // namespace

TEST_CASE("operator names") {
    CHECK(std::string(gnn_op_name(GnnOp::GINE)) == "GINE");
    CHECK(gnn_op_from_name("GATV2") == GnnOp::GATv2);
    CHECK_THROWS_AS(gnn_op_from_name("nope"), std::invalid_argument);
}

TEST_CASE("GINE with no edges reduces to the self term") {
    const int d = 4;
    auto rng = substream(1, "gnn-test");
    GnnParams p = GnnParams::init(GnnOp::GINE, d, rng);
    set_identity(p.gine_w1);
    set_zero(p.gine_b1);
    set_identity(p.gine_w2);
    set_zero(p.gine_b2);
    p.gine_eps->values[0] = 0.0;
    auto z = rnd({3, d}, rng);
    auto e = make_tensor({0, d});
    auto out = gnn_forward(nullptr, p, z, {}, {}, e);
    for (int v = 0; v < 3; ++v)
        for (int c = 0; c < d; ++c)
            CHECK(out->at(v, c) == std::max(z->at(v, c), 0.0));  // MLP = relu here
}

TEST_CASE("GINE hand computation, 2 nodes 1 edge, identity MLP") {
    const int d = 4;
    auto rng = substream(2, "gnn-test");
    GnnParams p = GnnParams::init(GnnOp::GINE, d, rng);
    set_identity(p.gine_w1);
    set_zero(p.gine_b1);
    set_identity(p.gine_w2);
    set_zero(p.gine_b2);
    p.gine_eps->values[0] = 0.0;
    auto z = make_tensor({2, d}, {0.5, -1.0, 2.0, 0.0, 1.0, 1.0, -3.0, 0.25});
    auto e = make_tensor({1, d}, {0.1, 0.2, 0.3, 0.4});
    auto out = gnn_forward(nullptr, p, z, {0}, {1}, e);
    for (int c = 0; c < d; ++c) {
        const double msg = std::max(z->at(0, c) + e->at(0, c), 0.0);
        CHECK(out->at(1, c) == doctest::Approx(std::max(z->at(1, c) + msg, 0.0)));
        CHECK(out->at(0, c) == doctest::Approx(std::max(z->at(0, c), 0.0)));
    }
}

TEST_CASE("GATv2 singleton and symmetry behavior") {
    const int d = 4;
    auto rng = substream(3, "gnn-test");
    GnnParams p = GnnParams::init(GnnOp::GATv2, d, rng);
    auto z = rnd({3, d}, rng);
    auto e = rnd({2, d}, rng);

    // node 1 has a single incoming edge from 0: attention weight must be 1
    auto out = gnn_forward(nullptr, p, z, {0}, {1}, make_tensor({1, d}, std::vector<double>(e->values.begin(), e->values.begin() + d)));
    auto wh = ops::matmul(nullptr, z, p.gat_w_src);
    for (int c = 0; c < d; ++c) CHECK(out->at(1, c) == doctest::Approx(wh->at(0, c)));

    // isolated node (no incoming edges) gets a zero row
    for (int c = 0; c < d; ++c) CHECK(out->at(2, c) == 0.0);

    // two sources with identical features and edge features: weights 0.5 each
    auto z2 = make_tensor({3, d});
    for (int c = 0; c < d; ++c) {
        z2->at(0, c) = z->at(0, c);
        z2->at(1, c) = z->at(0, c);
        z2->at(2, c) = z->at(2, c);
    }
    auto e_same = make_tensor({2, d});
    for (int c = 0; c < d; ++c) e_same->at(0, c) = e_same->at(1, c) = e->at(0, c);
    auto out2 = gnn_forward(nullptr, p, z2, {0, 1}, {2, 2}, e_same);
    auto wh2 = ops::matmul(nullptr, z2, p.gat_w_src);
    for (int c = 0; c < d; ++c)
        CHECK(out2->at(2, c) == doctest::Approx(wh2->at(0, c)));  // 0.5+0.5 of same value
}

TEST_CASE("GatedGCN empty neighborhood and uniform-gate closed form") {
    const int d = 4;
    auto rng = substream(4, "gnn-test");
    GnnParams p = GnnParams::init(GnnOp::GatedGCN, d, rng);
    auto z = rnd({4, d}, rng);
    auto e = rnd({3, d}, rng);

    // no incoming edges anywhere -> U h_j
    auto out0 = gnn_forward(nullptr, p, z, {}, {}, make_tensor({0, d}));
    auto uh = ops::matmul(nullptr, z, p.ggcn_u);
    CHECK(max_abs_diff(out0->values, uh->values) < 1e-12);

    // zero gate projections -> every gate is exactly 0.5; node 3 receives 0,1,2
    set_zero(p.ggcn_a);
    set_zero(p.ggcn_b);
    set_zero(p.ggcn_c);
    auto out = gnn_forward(nullptr, p, z, {0, 1, 2}, {3, 3, 3}, e);
    auto vh = ops::matmul(nullptr, z, p.ggcn_v);
    for (int c = 0; c < d; ++c) {
        const double mean_msg =
            0.5 * (vh->at(0, c) + vh->at(1, c) + vh->at(2, c)) / (1.5 + 1e-6);
        CHECK(out->at(3, c) == doctest::Approx(uh->at(3, c) + mean_msg).epsilon(1e-9));
    }
}

TEST_CASE("permutation equivariance of all three operators") {
    const int d = 6, n = 6;
    auto rng = substream(5, "gnn-test");
    std::vector<int> src = {0, 1, 2, 3, 4, 5, 0, 2}, tgt = {1, 2, 3, 4, 5, 0, 3, 5};
    auto z = rnd({n, d}, rng);
    auto e = rnd({static_cast<int>(src.size()), d}, rng);
    std::vector<int> perm = {3, 0, 5, 1, 4, 2};  // v -> perm[v]

    for (GnnOp op : kAllGnnOps) {
        GnnParams p = GnnParams::init(op, d, rng);
        auto out = gnn_forward(nullptr, p, z, src, tgt, e);

        auto zp = make_tensor({n, d});
        for (int v = 0; v < n; ++v)
            for (int c = 0; c < d; ++c) zp->at(perm[v], c) = z->at(v, c);
        std::vector<int> srcp(src.size()), tgtp(tgt.size());
        for (std::size_t i = 0; i < src.size(); ++i) {
            srcp[i] = perm[src[i]];
            tgtp[i] = perm[tgt[i]];
        }
        auto outp = gnn_forward(nullptr, p, zp, srcp, tgtp, e);
        double worst = 0.0;
        for (int v = 0; v < n; ++v)
            for (int c = 0; c < d; ++c)
                worst = std::max(worst,
                                 std::fabs(outp->at(perm[v], c) - out->at(v, c)));
        CHECK(worst < 1e-9);
    }
}

TEST_CASE("mixed operator mixture contracts") {
    const int d = 6, n = 5;
    auto rng = substream(6, "gnn-test");
    std::vector<int> src = {0, 1, 2, 3, 4, 0}, tgt = {1, 2, 3, 4, 0, 2};
    auto z = rnd({n, d}, rng);
    auto e = rnd({static_cast<int>(src.size()), d}, rng);
    std::array<GnnParams, kNumGnnOps> params = {
        GnnParams::init(GnnOp::GINE, d, rng), GnnParams::init(GnnOp::GATv2, d, rng),
        GnnParams::init(GnnOp::GatedGCN, d, rng)};
    std::array<TensorPtr, kNumGnnOps> singles;
    for (int o = 0; o < kNumGnnOps; ++o)
        singles[o] = gnn_forward(nullptr, params[o], z, src, tgt, e);

    SUBCASE("zero alpha gives the exact mean") {
        auto alpha = make_tensor({1, kNumGnnOps}, true);
        auto mixed = mixed_operator(nullptr, alpha, params, z, src, tgt, e);
        std::vector<double> mean(mixed->size(), 0.0);
        for (int o = 0; o < kNumGnnOps; ++o)
            for (std::size_t i = 0; i < mean.size(); ++i)
                mean[i] += singles[o]->values[i] / 3.0;
        CHECK(max_abs_diff(mixed->values, mean) < 1e-13);
    }

    SUBCASE("saturated alpha collapses to one operator") {
        auto alpha = make_tensor({1, kNumGnnOps}, {40.0, 0.0, 0.0}, true);
        auto mixed = mixed_operator(nullptr, alpha, params, z, src, tgt, e);
        CHECK(max_abs_diff(mixed->values, singles[0]->values) < 1e-12);
    }

    SUBCASE("general alpha equals independent linear combination") {
        auto alpha = make_tensor({1, kNumGnnOps}, {0.7, -0.3, 0.1}, true);
        auto w = ops::row_softmax(nullptr, alpha);
        CHECK(std::fabs(w->values[0] + w->values[1] + w->values[2] - 1.0) < 1e-12);
        auto mixed = mixed_operator(nullptr, alpha, params, z, src, tgt, e);
        std::vector<double> manual(mixed->size(), 0.0);
        for (int o = 0; o < kNumGnnOps; ++o)
            for (std::size_t i = 0; i < manual.size(); ++i)
                manual[i] += w->values[o] * singles[o]->values[i];
        CHECK(max_abs_diff(mixed->values, manual) < 1e-12);
    }

    SUBCASE("architecture gradient flows when outputs differ") {
        auto alpha = make_tensor({1, kNumGnnOps}, {0.2, 0.1, -0.4}, true);
        alpha->ensure_grad();
        Tape tape;
        auto mixed = mixed_operator(&tape, alpha, params, z, src, tgt, e);
        tape.backward(ops::sum(&tape, mixed));
        double total = 0.0;
        for (double g : alpha->grad) total += std::fabs(g);
        CHECK(total > 1e-10);
    }
}
