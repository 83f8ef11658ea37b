#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <set>

#include "dartsgt/graph_data.hpp"

using namespace dartsgt;

namespace {

std::string tmp_path(const char* name) {
    return std::string("/tmp/dartsgt_test_") + name;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("minimal graph record loads") {
    auto path = tmp_path("minimal.jsonl");
    write_file(path,
               "{\"task\":\"motif\",\"num_classes\":2,\"d_in\":4,\"d_e\":2}\n"
               "{\"n\":1,\"edges\":[],\"x\":[[0,0,0,0]],\"e\":[],\"y\":0}\n");
    Dataset ds = load_dataset(path);
    REQUIRE(ds.graphs.size() == 1);
    CHECK(ds.graphs[0].n == 1);
    CHECK(ds.graphs[0].num_edges() == 0);
    std::remove(path.c_str());
}

TEST_CASE("out-of-range edge target rejected") {
    auto path = tmp_path("badedge.jsonl");
    write_file(path,
               "{\"task\":\"motif\",\"num_classes\":2,\"d_in\":4,\"d_e\":2}\n"
               "{\"n\":2,\"edges\":[[0,2]],\"x\":[[0,0,0,0],[0,0,0,0]],"
               "\"e\":[[0,0]],\"y\":0}\n");
    CHECK_THROWS_WITH_AS(load_dataset(path), doctest::Contains("out of range"),
                         std::runtime_error);
    std::remove(path.c_str());
}

TEST_CASE("malformed record reports line number") {
    auto path = tmp_path("malformed.jsonl");
    write_file(path,
               "{\"task\":\"motif\",\"num_classes\":2,\"d_in\":4,\"d_e\":2}\n"
               "this is not json\n");
    CHECK_THROWS_WITH_AS(load_dataset(path), doctest::Contains("line 2"),
                         std::runtime_error);
    std::remove(path.c_str());
}

TEST_CASE("save/load round-trip is identity") {
    Dataset ds = generate_synthetic("motif", 50, 13);
    auto p1 = tmp_path("rt1.jsonl"), p2 = tmp_path("rt2.jsonl");
    save_dataset(p1, ds);
    Dataset back = load_dataset(p1);
    save_dataset(p2, back);
    CHECK(read_file(p1) == read_file(p2));
    REQUIRE(back.graphs.size() == ds.graphs.size());
    for (std::size_t i = 0; i < ds.graphs.size(); ++i) {
        CHECK(back.graphs[i].n == ds.graphs[i].n);
        CHECK(back.graphs[i].src == ds.graphs[i].src);
        CHECK(back.graphs[i].node_features.values == ds.graphs[i].node_features.values);
        CHECK(back.graphs[i].label_class == ds.graphs[i].label_class);
    }
    std::remove(p1.c_str());
    std::remove(p2.c_str());
}

TEST_CASE("synthetic generation is deterministic") {
    Dataset a = generate_synthetic("motif", 100, 7);
    Dataset b = generate_synthetic("motif", 100, 7);
    REQUIRE(a.graphs.size() == b.graphs.size());
    for (std::size_t i = 0; i < a.graphs.size(); ++i) {
        CHECK(a.graphs[i].src == b.graphs[i].src);
        CHECK(a.graphs[i].node_features.values == b.graphs[i].node_features.values);
        CHECK(a.graphs[i].label_class == b.graphs[i].label_class);
    }
    Dataset c = generate_synthetic("motif", 100, 8);
    bool same = true;
    for (std::size_t i = 0; i < a.graphs.size() && same; ++i)
        same = a.graphs[i].src == c.graphs[i].src &&
               a.graphs[i].node_features.values == c.graphs[i].node_features.values;
    CHECK_FALSE(same);
}

TEST_CASE("motif labels match the brute-force triangle oracle") {
    Dataset ds = generate_synthetic("motif", 100, 7);
    int positives = 0;
    for (const auto& g : ds.graphs) {
        CHECK(g.n >= 8);
        CHECK(g.n <= 40);
        CHECK(has_flagged_triangle(g) == (g.label_class == 1));
        positives += g.label_class;
    }
    CHECK(positives == 50);
}

TEST_CASE("degree-reg label matches recomputation") {
    Dataset ds = generate_synthetic("degree-reg", 40, 5);
    for (const auto& g : ds.graphs)
        CHECK(g.label_value == static_cast<double>(g.num_edges()) / g.n);
}

TEST_CASE("community graphs carry a 2-block partition") {
    Dataset ds = generate_synthetic("community", 20, 3);
    CHECK(ds.task_kind == TaskKind::NodeClassification);
    CHECK(ds.num_classes == 2);
    for (const auto& g : ds.graphs) {
        REQUIRE(static_cast<int>(g.node_labels.size()) == g.n);
        for (int y : g.node_labels) CHECK((y == 0 || y == 1));
    }
}

TEST_CASE("unknown task rejected") {
    CHECK_THROWS_AS(generate_synthetic("nope", 5, 0), std::invalid_argument);
}

TEST_CASE("darts split ratios and partition property") {
    Dataset ten = generate_synthetic("motif", 10, 1);
    SplitPair sp = split_darts(ten, 42);
    CHECK(sp.darts_train.graphs.size() == 6);
    CHECK(sp.darts_val.graphs.size() == 4);

    Dataset five = generate_synthetic("motif", 5, 1);
    SplitPair sp5 = split_darts(five, 42);
    CHECK(sp5.darts_train.graphs.size() == 3);
    CHECK(sp5.darts_val.graphs.size() == 2);

    // disjoint union: every original graph appears exactly once
    auto signature = [](const Graph& g) {
        return std::make_pair(g.src, g.node_features.values);
    };
    std::multiset<std::pair<std::vector<int>, std::vector<double>>> orig, split;
    for (const auto& g : ten.graphs) orig.insert(signature(g));
    for (const auto& g : sp.darts_train.graphs) split.insert(signature(g));
    for (const auto& g : sp.darts_val.graphs) split.insert(signature(g));
    CHECK(orig == split);
}

TEST_CASE("split seeding") {
    Dataset ds = generate_synthetic("motif", 100, 2);
    SplitPair a = split_darts(ds, 7), b = split_darts(ds, 7), c = split_darts(ds, 8);
    auto order = [](const SplitPair& sp) {
        std::vector<std::vector<double>> o;
        for (const auto& g : sp.darts_train.graphs) o.push_back(g.node_features.values);
        return o;
    };
    CHECK(order(a) == order(b));
    CHECK(order(a) != order(c));

    Dataset one = generate_synthetic("motif", 1, 1);
    CHECK_THROWS_AS(split_darts(one, 0), std::invalid_argument);
}

TEST_CASE("complete edge set") {
    auto e2 = complete_edge_set(2, false);
    REQUIRE(e2.size() == 2);
    CHECK(e2[0] == std::make_pair(0, 1));
    CHECK(e2[1] == std::make_pair(1, 0));

    CHECK(complete_edge_set(3, true).size() == 9);
    for (int n = 1; n <= 10; ++n)
        CHECK(complete_edge_set(n, false).size() ==
              static_cast<std::size_t>(n) * n - n);
}
