#include "dartsgt/graph_data.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "dartsgt/rng.hpp"

namespace dartsgt {

using nlohmann::json;

std::string task_kind_name(TaskKind k) {
    switch (k) {
        case TaskKind::Regression: return "regression";
        case TaskKind::GraphClassification: return "graph_classification";
        case TaskKind::NodeClassification: return "node_classification";
    }
    return "unknown";
}

void Graph::validate(TaskKind kind, int num_classes, int graph_index) const {
    const std::string tag = "graph " + std::to_string(graph_index) + ": ";
    if (n < 1) throw std::runtime_error(tag + "node count must be >= 1");
    for (std::size_t i = 0; i < src.size(); ++i) {
        if (src[i] < 0 || src[i] >= n || tgt[i] < 0 || tgt[i] >= n)
            throw std::runtime_error(tag + "edge (" + std::to_string(src[i]) + "," +
                                     std::to_string(tgt[i]) + ") out of range for n=" +
                                     std::to_string(n));
    }
    if (node_features.rows() != n)
        throw std::runtime_error(tag + "node feature row count != n");
    if (edge_features.rows() != num_edges())
        throw std::runtime_error(tag + "edge feature row count != |E|");
    if (kind == TaskKind::NodeClassification) {
        if (static_cast<int>(node_labels.size()) != n)
            throw std::runtime_error(tag + "node label count != n");
        for (int y : node_labels)
            if (y < 0 || y >= num_classes)
                throw std::runtime_error(tag + "node label out of range");
    } else if (kind == TaskKind::GraphClassification) {
        if (label_class < 0 || label_class >= num_classes)
            throw std::runtime_error(tag + "class label out of range");
    }
}

void Dataset::validate() const {
    for (std::size_t i = 0; i < graphs.size(); ++i) {
        const Graph& g = graphs[i];
        if (g.node_features.cols() != d_in || g.edge_features.cols() != d_e)
            throw std::runtime_error("graph " + std::to_string(i) +
                                     ": feature dimensions differ from dataset header");
        g.validate(task_kind, num_classes, static_cast<int>(i));
    }
}

namespace {

TaskKind task_kind_from_name(const std::string& task) {
    if (task == "motif") return TaskKind::GraphClassification;
    if (task == "degree-reg") return TaskKind::Regression;
    if (task == "community") return TaskKind::NodeClassification;
    throw std::invalid_argument("unknown task name: " + task);
}

Tensor matrix_from_json(const json& j, int expect_rows, const char* what, int line_no) {
    if (!j.is_array())
        throw std::runtime_error("line " + std::to_string(line_no) + ": " + what +
                                 " must be an array of rows");
    const int rows = static_cast<int>(j.size());
    if (rows != expect_rows)
        throw std::runtime_error("line " + std::to_string(line_no) + ": " + what +
                                 " row count mismatch");
    const int cols = rows > 0 ? static_cast<int>(j[0].size()) : 0;
    Tensor t({rows, cols});
    for (int i = 0; i < rows; ++i) {
        if (static_cast<int>(j[i].size()) != cols)
            throw std::runtime_error("line " + std::to_string(line_no) + ": ragged " +
                                     std::string(what));
        for (int c = 0; c < cols; ++c) t.at(i, c) = j[i][c].get<double>();
    }
    return t;
}

}  // namespace

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open dataset file: " + path);
    std::string line;
    int line_no = 0;
    Dataset ds;
    // header line
    if (!std::getline(in, line))
        throw std::runtime_error(path + ": empty dataset file");
    ++line_no;
    json header;
    try {
        header = json::parse(line);
    } catch (const json::exception& e) {
        throw std::runtime_error("line 1: malformed header: " + std::string(e.what()));
    }
    ds.task_name = header.at("task").get<std::string>();
    ds.task_kind = task_kind_from_name(ds.task_name);
    ds.num_classes = header.value("num_classes", 0);
    ds.d_in = header.at("d_in").get<int>();
    ds.d_e = header.at("d_e").get<int>();

    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw std::runtime_error("line " + std::to_string(line_no) +
                                     ": malformed record: " + std::string(e.what()));
        }
        Graph g;
        g.n = j.at("n").get<int>();
        for (const auto& e : j.at("edges")) {
            g.src.push_back(e.at(0).get<int>());
            g.tgt.push_back(e.at(1).get<int>());
        }
        g.node_features = matrix_from_json(j.at("x"), g.n, "x", line_no);
        g.edge_features = matrix_from_json(j.at("e"), g.num_edges(), "e", line_no);
        if (g.num_edges() == 0) g.edge_features = Tensor({0, ds.d_e});
        const json& y = j.at("y");
        switch (ds.task_kind) {
            case TaskKind::Regression: g.label_value = y.get<double>(); break;
            case TaskKind::GraphClassification: g.label_class = y.get<int>(); break;
            case TaskKind::NodeClassification:
                g.node_labels = y.get<std::vector<int>>();
                break;
        }
        ds.graphs.push_back(std::move(g));
    }
    ds.validate();
    return ds;
}

void save_dataset(const std::string& path, const Dataset& ds) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write dataset file: " + path);
    json header = {{"task", ds.task_name}, {"d_in", ds.d_in}, {"d_e", ds.d_e}};
    if (ds.task_kind != TaskKind::Regression) header["num_classes"] = ds.num_classes;
    out << header.dump() << "\n";
    for (const Graph& g : ds.graphs) {
        json j;
        j["n"] = g.n;
        json edges = json::array();
        for (int i = 0; i < g.num_edges(); ++i)
            edges.push_back(json::array({g.src[i], g.tgt[i]}));
        j["edges"] = std::move(edges);
        json x = json::array();
        for (int i = 0; i < g.n; ++i) {
            json row = json::array();
            for (int c = 0; c < ds.d_in; ++c) row.push_back(g.node_features.at(i, c));
            x.push_back(std::move(row));
        }
        j["x"] = std::move(x);
        json e = json::array();
        for (int i = 0; i < g.num_edges(); ++i) {
            json row = json::array();
            for (int c = 0; c < ds.d_e; ++c) row.push_back(g.edge_features.at(i, c));
            e.push_back(std::move(row));
        }
        j["e"] = std::move(e);
        switch (ds.task_kind) {
            case TaskKind::Regression: j["y"] = g.label_value; break;
            case TaskKind::GraphClassification: j["y"] = g.label_class; break;
            case TaskKind::NodeClassification: j["y"] = g.node_labels; break;
        }
        out << j.dump() << "\n";
    }
}

bool has_flagged_triangle(const Graph& g) {
    std::set<std::pair<int, int>> edge_set;
    for (int i = 0; i < g.num_edges(); ++i) edge_set.insert({g.src[i], g.tgt[i]});
    auto connected = [&](int a, int b) {
        return edge_set.count({a, b}) || edge_set.count({b, a});
    };
    std::vector<int> flagged;
    for (int v = 0; v < g.n; ++v)
        if (g.node_features.at(v, 0) == 1.0) flagged.push_back(v);
    for (std::size_t a = 0; a < flagged.size(); ++a)
        for (std::size_t b = a + 1; b < flagged.size(); ++b)
            for (std::size_t c = b + 1; c < flagged.size(); ++c)
                if (connected(flagged[a], flagged[b]) &&
                    connected(flagged[b], flagged[c]) &&
                    connected(flagged[a], flagged[c]))
                    return true;
    return false;
}

namespace {

void add_undirected_edge(Graph& g, int a, int b) {
    g.src.push_back(a);
    g.tgt.push_back(b);
    g.src.push_back(b);
    g.tgt.push_back(a);
}

// Erdos-Renyi base graph, both orientations stored.
void random_base_edges(Graph& g, double p, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int a = 0; a < g.n; ++a)
        for (int b = a + 1; b < g.n; ++b)
            if (u(rng) < p) add_undirected_edge(g, a, b);
}

void fill_random_features(Tensor& t, std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> u(lo, hi);
    for (double& v : t.values) v = u(rng);
}

Graph make_motif_graph(bool positive, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> size_dist(8, 40);
    Graph g;
    g.n = size_dist(rng);
    random_base_edges(g, 3.0 / g.n, rng);
    g.node_features = Tensor({g.n, 4});
    fill_random_features(g.node_features, rng, -0.5, 0.5);
    // feature 0 is the binary flag
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int v = 0; v < g.n; ++v) g.node_features.at(v, 0) = u(rng) < 0.3 ? 1.0 : 0.0;
    if (positive) {
        std::vector<int> perm(g.n);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        const int a = perm[0], b = perm[1], c = perm[2];
        std::set<std::pair<int, int>> edge_set;
        for (int i = 0; i < g.num_edges(); ++i) edge_set.insert({g.src[i], g.tgt[i]});
        auto ensure = [&](int x, int y) {
            if (!edge_set.count({x, y})) add_undirected_edge(g, x, y);
        };
        ensure(a, b);
        ensure(b, c);
        ensure(a, c);
        g.node_features.at(a, 0) = 1.0;
        g.node_features.at(b, 0) = 1.0;
        g.node_features.at(c, 0) = 1.0;
        g.label_class = 1;
    } else {
        // clear one flag of every flagged triangle until none remain
        while (true) {
            bool found = false;
            std::vector<int> flagged;
            for (int v = 0; v < g.n; ++v)
                if (g.node_features.at(v, 0) == 1.0) flagged.push_back(v);
            std::set<std::pair<int, int>> edge_set;
            for (int i = 0; i < g.num_edges(); ++i)
                edge_set.insert({g.src[i], g.tgt[i]});
            auto connected = [&](int x, int y) {
                return edge_set.count({x, y}) || edge_set.count({y, x});
            };
            for (std::size_t i = 0; i < flagged.size() && !found; ++i)
                for (std::size_t j = i + 1; j < flagged.size() && !found; ++j)
                    for (std::size_t k = j + 1; k < flagged.size() && !found; ++k)
                        if (connected(flagged[i], flagged[j]) &&
                            connected(flagged[j], flagged[k]) &&
                            connected(flagged[i], flagged[k])) {
                            g.node_features.at(flagged[i], 0) = 0.0;
                            found = true;
                        }
            if (!found) break;
        }
        g.label_class = 0;
    }
    g.edge_features = Tensor({g.num_edges(), 2});
    fill_random_features(g.edge_features, rng, -0.5, 0.5);
    return g;
}

Graph make_degree_reg_graph(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> size_dist(8, 40);
    Graph g;
    g.n = size_dist(rng);
    random_base_edges(g, 3.0 / g.n, rng);
    g.node_features = Tensor({g.n, 3});
    fill_random_features(g.node_features, rng, -0.5, 0.5);
    g.edge_features = Tensor({g.num_edges(), 2});
    fill_random_features(g.edge_features, rng, -0.5, 0.5);
    // mean in-degree; both orientations are stored so this is the mean
    // undirected degree
    g.label_value = static_cast<double>(g.num_edges()) / g.n;
    return g;
}

Graph make_community_graph(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> size_dist(8, 40);
    Graph g;
    g.n = size_dist(rng);
    const int half = g.n / 2;
    g.node_labels.resize(g.n);
    for (int v = 0; v < g.n; ++v) g.node_labels[v] = v < half ? 0 : 1;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int a = 0; a < g.n; ++a)
        for (int b = a + 1; b < g.n; ++b) {
            const double p = g.node_labels[a] == g.node_labels[b] ? 0.6 : 0.08;
            if (u(rng) < p) add_undirected_edge(g, a, b);
        }
    g.node_features = Tensor({g.n, 3});
    fill_random_features(g.node_features, rng, -0.5, 0.5);
    g.edge_features = Tensor({g.num_edges(), 2});
    fill_random_features(g.edge_features, rng, -0.5, 0.5);
    return g;
}

}  // namespace

Dataset generate_synthetic(const std::string& task, int n_graphs, std::uint64_t seed) {
    if (n_graphs < 1) throw std::invalid_argument("generate_synthetic: n_graphs >= 1");
    Dataset ds;
    ds.task_name = task;
    ds.task_kind = task_kind_from_name(task);
    auto rng = substream(seed, "data:" + task);
    if (task == "motif") {
        ds.num_classes = 2;
        ds.d_in = 4;
        ds.d_e = 2;
        for (int i = 0; i < n_graphs; ++i)
            ds.graphs.push_back(make_motif_graph(i % 2 == 0, rng));
    } else if (task == "degree-reg") {
        ds.d_in = 3;
        ds.d_e = 2;
        for (int i = 0; i < n_graphs; ++i) ds.graphs.push_back(make_degree_reg_graph(rng));
    } else {  // community
        ds.num_classes = 2;
        ds.d_in = 3;
        ds.d_e = 2;
        for (int i = 0; i < n_graphs; ++i) ds.graphs.push_back(make_community_graph(rng));
    }
    ds.validate();
    return ds;
}

SplitPair split_darts(const Dataset& d, std::uint64_t seed) {
    if (d.size() < 2) throw std::invalid_argument("split_darts: dataset too small");
    std::vector<int> perm(d.size());
    std::iota(perm.begin(), perm.end(), 0);
    auto rng = substream(seed, "shuffle:darts-split");
    std::shuffle(perm.begin(), perm.end(), rng);
    const std::size_t n_train = d.size() * 6 / 10;  // floor(60%)
    SplitPair sp;
    sp.darts_train = d;
    sp.darts_train.graphs.clear();
    sp.darts_val = sp.darts_train;
    for (std::size_t i = 0; i < perm.size(); ++i)
        (i < n_train ? sp.darts_train : sp.darts_val).graphs.push_back(d.graphs[perm[i]]);
    return sp;
}

std::vector<std::pair<int, int>> complete_edge_set(int n, bool with_self_loops) {
    if (n < 1) throw std::invalid_argument("complete_edge_set: n >= 1");
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (with_self_loops || i != j) edges.emplace_back(i, j);
    return edges;
}

}  // namespace dartsgt
