#pragma once

#include <array>
#include <random>
#include <string>
#include <vector>

#include "dartsgt/autodiff.hpp"

namespace dartsgt {

enum class GnnOp { GINE = 0, GATv2 = 1, GatedGCN = 2 };
inline constexpr int kNumGnnOps = 3;
inline constexpr std::array<GnnOp, kNumGnnOps> kAllGnnOps = {GnnOp::GINE, GnnOp::GATv2,
                                                            GnnOp::GatedGCN};

const char* gnn_op_name(GnnOp op);
GnnOp gnn_op_from_name(const std::string& name);

using NamedParams = std::vector<std::pair<std::string, TensorPtr>>;

/// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) init, the convention used for all
/// projection matrices in this project.
TensorPtr init_linear(int fan_in, int fan_out, std::mt19937_64& rng);

/// One learnable bundle per (layer, operator) pair; all operators map width d
/// to width d so the downstream K/V projections are operator-agnostic.
struct GnnParams {
    GnnOp op = GnnOp::GINE;
    int width = 0;

    // GINE: h'_j = MLP((1+eps) h_j + sum_i relu(h_i + e_ij)), MLP = d->d->d ReLU
    TensorPtr gine_eps;
    TensorPtr gine_w1, gine_b1, gine_w2, gine_b2;

    // GATv2 (single head): score = a^T leaky_relu(W_s h_i + W_t h_j + W_e e_ij)
    TensorPtr gat_w_src, gat_w_tgt, gat_w_edge, gat_attn;

    // GatedGCN: gate = sigmoid(A h_i + B h_j + C e_ij);
    // h'_j = U h_j + sum(gate * V h_i) / (sum(gate) + 1e-6)
    TensorPtr ggcn_a, ggcn_b, ggcn_c, ggcn_u, ggcn_v;

    static GnnParams init(GnnOp op, int d, std::mt19937_64& rng);
    void collect(const std::string& prefix, NamedParams& out) const;
};

/// edge_feat must already be projected to width d.
TensorPtr gnn_forward(Tape* tape, const GnnParams& p, const TensorPtr& z,
                      const std::vector<int>& src, const std::vector<int>& tgt,
                      const TensorPtr& edge_feat);

/// Softmax-weighted combination of the three candidate outputs; the mixture
/// weights carry gradient back into the architecture row.
TensorPtr mixed_operator(Tape* tape, const TensorPtr& alpha_row,
                         const std::array<GnnParams, kNumGnnOps>& params,
                         const TensorPtr& z, const std::vector<int>& src,
                         const std::vector<int>& tgt, const TensorPtr& edge_feat);

}  // namespace dartsgt
