#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dartsgt/autodiff.hpp"

namespace dartsgt {

enum class TaskKind { Regression, GraphClassification, NodeClassification };

std::string task_kind_name(TaskKind k);

/// Directed edges as stored; undirected synthetic graphs carry both
/// orientations. Messages flow source -> target.
struct Graph {
    int n = 0;
    std::vector<int> src;
    std::vector<int> tgt;
    Tensor node_features;  // [n x d_in]
    Tensor edge_features;  // [|E| x d_e]
    double label_value = 0.0;         // regression
    int label_class = 0;              // graph classification
    std::vector<int> node_labels;     // node classification

    int num_edges() const { return static_cast<int>(src.size()); }
    void validate(TaskKind kind, int num_classes, int graph_index) const;
};

struct Dataset {
    std::vector<Graph> graphs;
    TaskKind task_kind = TaskKind::GraphClassification;
    int num_classes = 0;  // meaningful for classification tasks
    int d_in = 0;
    int d_e = 0;
    std::string task_name;

    std::size_t size() const { return graphs.size(); }
    void validate() const;
};

struct SplitPair {
    Dataset darts_train;
    Dataset darts_val;
};

Dataset load_dataset(const std::string& path);
void save_dataset(const std::string& path, const Dataset& ds);

/// Built-in tasks: "motif" (flagged-triangle graph classification),
/// "degree-reg" (mean-degree regression), "community" (2-block node
/// classification). Deterministic in (task, n_graphs, seed).
Dataset generate_synthetic(const std::string& task, int n_graphs, std::uint64_t seed);

/// Seeded shuffle, first floor(60%) to darts_train, remainder to darts_val.
SplitPair split_darts(const Dataset& d, std::uint64_t seed);

/// All ordered pairs (i,j) in lexicographic order, i != j unless with_self_loops.
std::vector<std::pair<int, int>> complete_edge_set(int n, bool with_self_loops);

/// Brute-force check used by the motif task: does the graph contain a triangle
/// whose three nodes all carry node_features[.][0] == 1?
bool has_flagged_triangle(const Graph& g);

}  // namespace dartsgt
