#include "dartsgt/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace dartsgt {

namespace {

double loss_value(const ModelState& state, const Graph& g, const ForwardOptions& opt) {
    TensorPtr pred = model_forward(nullptr, state, g, opt);
    TensorPtr loss = graph_loss(nullptr, state, pred, g);
    return loss->values[0];
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    std::string s(buf);
    // Bare integers still need to read as JSON numbers, which they do, but
    // keep nan/inf out of reports.
    if (s.find("nan") != std::string::npos || s.find("inf") != std::string::npos)
        return "null";
    return s;
}

}  // namespace

double head_deviation(const ModelState& model, const Graph& g, int layer, int head) {
    ForwardOptions base;
    double baseline = loss_value(model, g, base);
    HeadMask mask{layer, head};
    ForwardOptions masked;
    masked.mask = &mask;
    return loss_value(model, g, masked) - baseline;
}

std::vector<std::pair<int, int>> rank_heads(const DeviationTable& table,
                                            bool sign_agnostic) {
    std::vector<std::pair<int, int>> order;
    order.reserve(static_cast<std::size_t>(table.layers) * table.heads);
    for (int l = 0; l < table.layers; ++l)
        for (int m = 0; m < table.heads; ++m) order.emplace_back(l, m);
    auto key = [&](const std::pair<int, int>& p) {
        double d = table.at(p.first, p.second);
        return sign_agnostic ? std::fabs(d) : d;
    };
    std::stable_sort(order.begin(), order.end(),
                     [&](const auto& a, const auto& b) {
                         double ka = key(a), kb = key(b);
                         if (ka != kb) return ka > kb;
                         return a < b;
                     });
    return order;
}

double specialization(const DeviationTable& table) {
    const std::size_t n = table.delta.size();
    if (n == 0) return 0.0;
    double mean = std::accumulate(table.delta.begin(), table.delta.end(), 0.0) /
                  static_cast<double>(n);
    double ss = 0.0;
    for (double d : table.delta) ss += (d - mean) * (d - mean);
    return std::sqrt(ss / static_cast<double>(n));
}

std::vector<int> top_nodes(const AttentionTrace& trace, int layer, int head,
                           double node_fraction, const std::vector<int>& tgt) {
    std::vector<double> mass = trace.incoming_mass(layer, head, tgt);
    const int n = static_cast<int>(mass.size());
    if (n == 0) return {};
    int count = std::max(1, static_cast<int>(std::ceil(node_fraction * n / 100.0)));
    count = std::min(count, n);
    std::vector<int> idx(mass.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        if (mass[a] != mass[b]) return mass[a] > mass[b];
        return a < b;
    });
    idx.resize(count);
    return idx;
}

std::optional<double> focus_metric(const std::vector<std::vector<int>>& node_sets) {
    const int p = static_cast<int>(node_sets.size());
    if (p < 2) return std::nullopt;
    double total = 0.0;
    int pairs = 0;
    for (int a = 0; a < p; ++a) {
        for (int b = a + 1; b < p; ++b) {
            std::vector<int> sa = node_sets[a], sb = node_sets[b];
            std::sort(sa.begin(), sa.end());
            std::sort(sb.begin(), sb.end());
            std::vector<int> inter, uni;
            std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(),
                                  std::back_inserter(inter));
            std::set_union(sa.begin(), sa.end(), sb.begin(), sb.end(),
                           std::back_inserter(uni));
            total += uni.empty() ? 0.0
                                 : static_cast<double>(inter.size()) /
                                       static_cast<double>(uni.size());
            ++pairs;
        }
    }
    return total / pairs;
}

std::string interpretation_class(double spec, std::optional<double> focus,
                                 double spec_threshold, double focus_threshold) {
    if (!focus.has_value()) return "insufficient-heads";
    const bool high_spec = spec >= spec_threshold;
    const bool high_focus = *focus >= focus_threshold;
    if (high_spec && high_focus) return "most-interpretable";
    if (high_spec) return "complementary-strategies";
    if (high_focus) return "node-consensus";
    return "least-interpretable";
}

double median_of(std::vector<double> values) {
    if (values.empty())
        throw std::invalid_argument("median_of: empty input");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    if (n % 2 == 1) return values[n / 2];
    return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

DatasetReport analyze_dataset(const ModelState& model, const Dataset& ds,
                              const InterpretConfig& cfg) {
    const int L = model.config.layers;
    const int M = model.config.heads;
    DatasetReport report;
    report.cfg = cfg;

    for (std::size_t gi = 0; gi < ds.graphs.size(); ++gi) {
        const Graph& g = ds.graphs[gi];
        InstanceReport inst;
        inst.instance = static_cast<int>(gi);

        // One baseline pass, reused for every head of this instance; the
        // attention trace for the focus metric rides along on the same pass.
        AttentionTrace trace;
        ForwardOptions base;
        base.trace = &trace;
        inst.baseline_loss = loss_value(model, g, base);

        inst.table.instance = inst.instance;
        inst.table.layers = L;
        inst.table.heads = M;
        inst.table.baseline_loss = inst.baseline_loss;
        inst.table.delta.assign(static_cast<std::size_t>(L) * M, 0.0);
        for (int l = 0; l < L; ++l) {
            for (int m = 0; m < M; ++m) {
                HeadMask mask{l, m};
                ForwardOptions masked;
                masked.mask = &mask;
                inst.table.set(l, m, loss_value(model, g, masked) - inst.baseline_loss);
            }
        }

        inst.ranking = rank_heads(inst.table, cfg.sign_agnostic);
        inst.specialization = specialization(inst.table);

        inst.effective_k = std::min(cfg.k, L * M);
        std::vector<std::vector<int>> node_sets;
        for (int i = 0; i < inst.effective_k; ++i) {
            auto [l, m] = inst.ranking[i];
            TopPairReport tp;
            tp.layer = l;
            tp.head = m;
            tp.top_nodes = top_nodes(trace, l, m, cfg.node_fraction, g.tgt);
            tp.attn_std = trace.attention_std(l, m);
            node_sets.push_back(tp.top_nodes);
            inst.top_pairs.push_back(std::move(tp));
        }
        inst.focus = focus_metric(node_sets);
        report.instances.push_back(std::move(inst));
    }

    // Run-level thresholds: medians over the instances of this report.
    std::vector<double> specs, foci;
    for (const auto& inst : report.instances) {
        specs.push_back(inst.specialization);
        if (inst.focus.has_value()) foci.push_back(*inst.focus);
    }
    if (!specs.empty()) report.median_specialization = median_of(specs);
    if (!foci.empty()) report.median_focus = median_of(foci);

    const double focus_thr = report.median_focus.value_or(0.0);
    for (auto& inst : report.instances) {
        inst.klass = interpretation_class(inst.specialization, inst.focus,
                                          report.median_specialization, focus_thr);
    }
    return report;
}

std::string instance_report_json(const InstanceReport& r) {
    std::ostringstream os;
    os << "{\"instance\":" << r.instance;
    os << ",\"baseline_loss\":" << fmt_double(r.baseline_loss);
    os << ",\"deviations\":[";
    bool first = true;
    for (int l = 0; l < r.table.layers; ++l) {
        for (int m = 0; m < r.table.heads; ++m) {
            if (!first) os << ",";
            first = false;
            os << "{\"layer\":" << l << ",\"head\":" << m
               << ",\"delta\":" << fmt_double(r.table.at(l, m)) << "}";
        }
    }
    os << "],\"ranking\":[";
    for (std::size_t i = 0; i < r.ranking.size(); ++i) {
        if (i) os << ",";
        os << "[" << r.ranking[i].first << "," << r.ranking[i].second << "]";
    }
    os << "],\"specialization\":" << fmt_double(r.specialization);
    os << ",\"focus\":";
    if (r.focus.has_value())
        os << fmt_double(*r.focus);
    else
        os << "null";
    os << ",\"top_pairs\":[";
    for (std::size_t i = 0; i < r.top_pairs.size(); ++i) {
        const auto& tp = r.top_pairs[i];
        if (i) os << ",";
        os << "{\"layer\":" << tp.layer << ",\"head\":" << tp.head
           << ",\"top_nodes\":[";
        for (std::size_t j = 0; j < tp.top_nodes.size(); ++j) {
            if (j) os << ",";
            os << tp.top_nodes[j];
        }
        os << "],\"attn_std\":" << fmt_double(tp.attn_std) << "}";
    }
    os << "],\"class\":\"" << r.klass << "\"}";
    return os.str();
}

std::string dataset_report_json(const DatasetReport& r) {
    std::ostringstream os;
    os << "{\"instances\":[";
    for (std::size_t i = 0; i < r.instances.size(); ++i) {
        if (i) os << ",";
        os << instance_report_json(r.instances[i]);
    }
    os << "],\"median_specialization\":" << fmt_double(r.median_specialization);
    os << ",\"median_focus\":";
    if (r.median_focus.has_value())
        os << fmt_double(*r.median_focus);
    else
        os << "null";
    os << ",\"k\":" << r.cfg.k;
    os << ",\"node_fraction\":" << fmt_double(r.cfg.node_fraction) << "}";
    return os.str();
}

}  // namespace dartsgt
