#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dartsgt/graph_data.hpp"
#include "dartsgt/model.hpp"

namespace dartsgt {

/// Per-instance map (layer, head) -> head deviation delta.
struct DeviationTable {
    int instance = 0;
    int layers = 0;
    int heads = 0;
    double baseline_loss = 0.0;
    std::vector<double> delta;  // layer-major, L*M entries

    double at(int layer, int head) const { return delta[layer * heads + head]; }
    void set(int layer, int head, double d) { delta[layer * heads + head] = d; }
};

struct InterpretConfig {
    int k = 5;
    double node_fraction = 10.0;  // percent of nodes per top-node set
    bool sign_agnostic = false;
};

struct TopPairReport {
    int layer = 0;
    int head = 0;
    std::vector<int> top_nodes;
    double attn_std = 0.0;
};

struct InstanceReport {
    int instance = 0;
    double baseline_loss = 0.0;
    DeviationTable table;
    std::vector<std::pair<int, int>> ranking;  // (layer, head), best first
    double specialization = 0.0;
    std::optional<double> focus;
    int effective_k = 0;
    std::vector<TopPairReport> top_pairs;
    std::string klass;
};

struct DatasetReport {
    std::vector<InstanceReport> instances;
    double median_specialization = 0.0;
    std::optional<double> median_focus;
    InterpretConfig cfg;
};

/// Change in task loss when one head is masked; both passes in eval mode,
/// no retraining.
double head_deviation(const ModelState& model, const Graph& g, int layer, int head);

/// Descending by delta (default) or |delta| (sign-agnostic); ties break by
/// (layer, head) lexicographic order.
std::vector<std::pair<int, int>> rank_heads(const DeviationTable& table,
                                            bool sign_agnostic);

/// Population standard deviation of all deviations.
double specialization(const DeviationTable& table);

/// Top-r% nodes by incoming attention mass; set size max(1, ceil(r*n/100)),
/// mass ties break to the lower node index.
std::vector<int> top_nodes(const AttentionTrace& trace, int layer, int head,
                           double node_fraction, const std::vector<int>& tgt);

/// Mean pairwise Jaccard similarity of the node sets; nullopt when fewer than
/// two rankable pairs exist.
std::optional<double> focus_metric(const std::vector<std::vector<int>>& node_sets);

/// Quadrant label; thresholds are closed on the upper half (>= counts high).
std::string interpretation_class(double spec, std::optional<double> focus,
                                 double spec_threshold, double focus_threshold);

DatasetReport analyze_dataset(const ModelState& model, const Dataset& ds,
                              const InterpretConfig& cfg);

/// Fixed field order, floats with 17 significant digits.
std::string instance_report_json(const InstanceReport& r);
std::string dataset_report_json(const DatasetReport& r);

double median_of(std::vector<double> values);

}  // namespace dartsgt
