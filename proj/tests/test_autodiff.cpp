#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "dartsgt/autodiff.hpp"
#include "dartsgt/rng.hpp"
#include "dartsgt/selfcheck.hpp"

using namespace dartsgt;

namespace {

TensorPtr rnd(std::vector<int> shape, std::mt19937_64& rng, bool grad = true) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    auto t = make_tensor(std::move(shape), grad);
    for (auto& v : t->values) v = u(rng);
    return t;
}

}  // namespace

TEST_CASE("matmul basics") {
    auto i2 = make_tensor({2, 2}, {1, 0, 0, 1});
    auto b = make_tensor({2, 3}, {1, 2, 3, 4, 5, 6});
    auto c = ops::matmul(nullptr, i2, b);
    CHECK(c->values == b->values);

    auto a = make_tensor({2, 2}, {1, 2, 3, 4});
    auto ones = make_tensor({2, 1}, {1, 1});
    auto prod = ops::matmul(nullptr, a, ones);
    CHECK(prod->values == std::vector<double>{3, 7});

    auto bad = make_tensor({3, 1});
    CHECK_THROWS_WITH_AS(ops::matmul(nullptr, a, bad),
                         doctest::Contains("[2x2]"), std::invalid_argument);
}

TEST_CASE("matmul gradient vs finite differences") {
    auto rng = substream(1, "test");
    auto a = rnd({3, 4}, rng), b = rnd({4, 2}, rng);
    double err = gradcheck_max_rel_err(
        [&](Tape* t) { return ops::sum(t, ops::matmul(t, a, b)); }, {a, b});
    CHECK(err < 1e-4);
}

TEST_CASE("row_softmax values") {
    auto z = make_tensor({3, 3});
    auto s = ops::row_softmax(nullptr, z);
    for (double v : s->values) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    auto x = make_tensor({1, 3}, {1, 2, 3});
    auto sx = ops::row_softmax(nullptr, x);
    CHECK(sx->values[0] == doctest::Approx(0.09003057).epsilon(1e-6));
    CHECK(sx->values[1] == doctest::Approx(0.24472847).epsilon(1e-6));
    CHECK(sx->values[2] == doctest::Approx(0.66524096).epsilon(1e-6));

    // shift invariance
    auto shifted = make_tensor({1, 3}, {1 + 7.5, 2 + 7.5, 3 + 7.5});
    auto ss = ops::row_softmax(nullptr, shifted);
    for (int j = 0; j < 3; ++j)
        CHECK(std::fabs(ss->values[j] - sx->values[j]) < 1e-12);

    // rows sum to 1
    auto rng = substream(2, "test");
    auto r = rnd({5, 7}, rng, false);
    auto sr = ops::row_softmax(nullptr, r);
    for (int i = 0; i < 5; ++i) {
        double total = 0.0;
        for (int j = 0; j < 7; ++j) total += sr->at(i, j);
        CHECK(std::fabs(total - 1.0) < 1e-9);
    }
}

TEST_CASE("segment_softmax values") {
    auto single = make_tensor({1, 1}, std::vector<double>{3.7});
    auto w = ops::segment_softmax(nullptr, single, {0}, 2);
    CHECK(w->values[0] == 1.0);

    auto equal = make_tensor({2, 1}, {0.4, 0.4});
    auto we = ops::segment_softmax(nullptr, equal, {1, 1}, 2);
    CHECK(we->values[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(we->values[1] == doctest::Approx(0.5).epsilon(1e-12));

    auto two = make_tensor({2, 1}, {0.0, 1.0});
    auto wt = ops::segment_softmax(nullptr, two, {0, 0}, 1);
    CHECK(wt->values[0] == doctest::Approx(0.26894142).epsilon(1e-6));
    CHECK(wt->values[1] == doctest::Approx(0.73105858).epsilon(1e-6));

    CHECK_THROWS_AS(ops::segment_softmax(nullptr, two, {0, 5}, 2),
                    std::out_of_range);

    // per-target groups sum to 1
    auto rng = substream(3, "test");
    auto scores = rnd({8, 1}, rng, false);
    std::vector<int> targets = {0, 0, 0, 1, 2, 2, 3, 3};
    auto ws = ops::segment_softmax(nullptr, scores, targets, 5);
    std::vector<double> sums(5, 0.0);
    for (int e = 0; e < 8; ++e) sums[targets[e]] += ws->values[e];
    for (int j = 0; j < 4; ++j) CHECK(std::fabs(sums[j] - 1.0) < 1e-9);
    CHECK(sums[4] == 0.0);
}

TEST_CASE("layer_norm values") {
    auto gain = make_tensor({1, 2}, {1, 1});
    auto bias = make_tensor({1, 2}, {0, 0});

    auto constant = make_tensor({1, 2}, {4.0, 4.0});
    auto out = ops::layer_norm(nullptr, constant, gain, bias);
    CHECK(std::fabs(out->values[0]) < 1e-2);  // epsilon-guarded zero
    CHECK(std::fabs(out->values[1]) < 1e-2);

    auto row = make_tensor({1, 2}, {1.0, 3.0});
    auto norm = ops::layer_norm(nullptr, row, gain, bias);
    CHECK(norm->values[0] == doctest::Approx(-1.0).epsilon(1e-3));
    CHECK(norm->values[1] == doctest::Approx(1.0).epsilon(1e-3));

    auto rng = substream(4, "test");
    auto gain6 = make_tensor({1, 6}, {1, 1, 1, 1, 1, 1});
    auto bias6 = make_tensor({1, 6});
    auto x = rnd({4, 6}, rng, false);
    auto y = ops::layer_norm(nullptr, x, gain6, bias6);
    for (int i = 0; i < 4; ++i) {
        double mean = 0.0;
        for (int j = 0; j < 6; ++j) mean += y->at(i, j);
        CHECK(std::fabs(mean / 6.0) < 1e-10);
    }
}

TEST_CASE("backward basics") {
    auto x = make_tensor({2, 3}, {1, -2, 3, 0.5, 2, -1}, true);
    {
        Tape tape;
        auto loss = ops::sum(&tape, x);
        tape.backward(loss);
        for (double g : x->grad) CHECK(g == 1.0);
        CHECK_THROWS_AS(tape.backward(loss), std::logic_error);  // double backward
    }
    x->zero_grad();
    {
        Tape tape;
        auto loss = ops::sum(&tape, ops::hadamard(&tape, x, x));
        tape.backward(loss);
        for (std::size_t i = 0; i < x->size(); ++i)
            CHECK(x->grad[i] == doctest::Approx(2.0 * x->values[i]));
    }
    {
        Tape tape;
        auto y = ops::relu(&tape, x);
        CHECK_THROWS_AS(tape.backward(y), std::invalid_argument);  // non-scalar loss
    }
}

TEST_CASE("elementwise suite") {
    auto x = make_tensor({1, 2}, {-1.0, 2.0});
    auto r = ops::relu(nullptr, x);
    CHECK(r->values[0] == 0.0);
    CHECK(r->values[1] == 2.0);

    auto z = make_tensor({1, 1}, std::vector<double>{0.0});
    CHECK(ops::sigmoid(nullptr, z)->values[0] == 0.5);

    // concat then slice recovers the parts exactly
    auto rng = substream(5, "test");
    auto a = rnd({3, 2}, rng, false), b = rnd({3, 4}, rng, false),
         c = rnd({3, 1}, rng, false);
    auto cat = ops::concat_columns(nullptr, {a, b, c});
    CHECK(cat->rows() == 3);
    CHECK(cat->cols() == 7);
    CHECK(ops::slice_cols(nullptr, cat, 0, 2)->values == a->values);
    CHECK(ops::slice_cols(nullptr, cat, 2, 6)->values == b->values);
    CHECK(ops::slice_cols(nullptr, cat, 6, 7)->values == c->values);
}

TEST_CASE("finite differences across the op set, 10 random trials") {
    auto rng = substream(6, "test");
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        auto a = rnd({3, 4}, rng), b = rnd({4, 3}, rng), c = rnd({3, 3}, rng);
        auto bias = rnd({1, 3}, rng), gain = rnd({1, 3}, rng);
        auto ln_bias = rnd({1, 3}, rng, false);
        auto s = rnd({5, 1}, rng), m = rnd({5, 3}, rng);
        std::vector<int> targets = {0, 1, 1, 2, 2};
        worst = std::max(worst, gradcheck_max_rel_err(
            [&](Tape* t) {
                auto h = ops::add_rowvec(t, ops::matmul(t, a, b), bias);
                auto act = ops::sigmoid(t, ops::leaky_relu(t, h, 0.2));
                auto mm = ops::matmul_nt(t, act, c);
                auto ln = ops::layer_norm(t, mm, gain, ln_bias);
                auto sm = ops::row_softmax(t, ln);
                auto seg = ops::segment_softmax(t, s, targets, 3);
                auto agg = ops::segment_sum(t, ops::row_scale(t, m, seg), targets, 3);
                auto gathered = ops::gather_rows(t, agg, {0, 1, 2});
                auto mix = ops::add(t, sm, ops::scalar_mul(t, gathered, 0.25));
                auto dots = ops::row_dot(t, mix, gathered);
                return ops::add(t, ops::mean(t, dots),
                                ops::mean(t, ops::mean_rows(t, mix)));
            },
            {a, b, c, bias, gain, s, m}));
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("forward determinism") {
    auto rng = substream(7, "test");
    auto a = rnd({4, 4}, rng, false), b = rnd({4, 4}, rng, false);
    auto r1 = ops::row_softmax(nullptr, ops::matmul(nullptr, a, b));
    auto r2 = ops::row_softmax(nullptr, ops::matmul(nullptr, a, b));
    CHECK(r1->values == r2->values);
}

TEST_CASE("loss oracles") {
    // stable BCE at extreme logits
    auto big = make_tensor({1, 1}, std::vector<double>{40.0});
    auto l1 = ops::bce_with_logits(nullptr, big, 1.0);
    CHECK(l1->values[0] == doctest::Approx(0.0).epsilon(1e-12));
    auto l0 = ops::bce_with_logits(nullptr, big, 0.0);
    CHECK(l0->values[0] == doctest::Approx(40.0).epsilon(1e-9));

    auto pred = make_tensor({1, 1}, std::vector<double>{1.25});
    CHECK(ops::mae_loss(nullptr, pred, 1.0)->values[0] == doctest::Approx(0.25));

    auto logits = make_tensor({1, 3}, {0.0, 0.0, 0.0});
    CHECK(ops::cross_entropy(nullptr, logits, {1})->values[0] ==
          doctest::Approx(std::log(3.0)).epsilon(1e-12));
}
