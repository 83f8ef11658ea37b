#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dartsgt/autodiff.hpp"
#include "dartsgt/gnn_ops.hpp"
#include "dartsgt/graph_data.hpp"

namespace dartsgt {

enum class AttentionKind { Dense, Sparse };
enum class Variant { DartsGT, Symmetric, Vanilla };
enum class PhiKind { Identity, Mlp2 };

const char* attention_kind_name(AttentionKind k);
const char* variant_name(Variant v);
AttentionKind attention_kind_from_name(const std::string& s);
Variant variant_from_name(const std::string& s);

struct ModelConfig {
    int layers = 2;
    int heads = 2;
    int dim = 16;
    int ffn_ratio = 2;
    AttentionKind attention = AttentionKind::Sparse;
    Variant variant = Variant::DartsGT;
    PhiKind phi = PhiKind::Identity;
    bool edge_residual = true;
    double dropout = 0.0;
    TaskKind task_kind = TaskKind::GraphClassification;
    int num_classes = 2;
    int d_in = 1;
    int d_e = 1;

    int head_dim() const { return dim / heads; }
    /// Output width of the task head.
    int out_dim() const;
    /// Rejects d % M != 0 and other malformed combinations.
    void validate() const;
};

struct HeadMask {
    int layer = 0;
    int head = 0;
};

/// Attention weights captured on a forward pass, one entry per (layer, head)
/// in layer-major order. Dense runs keep the full n x n softmax matrix,
/// sparse runs the per-edge scores aligned to the graph's edge list.
struct AttentionTrace {
    int layers = 0;
    int heads = 0;
    AttentionKind kind = AttentionKind::Dense;
    struct Head {
        std::vector<double> dense;        // n*n row-major, dense only
        std::vector<double> edge_scores;  // |E|, sparse only
        int n = 0;
    };
    std::vector<Head> entries;

    const Head& at(int layer, int head) const { return entries[layer * heads + head]; }
    /// Total attention a node receives as target, per node.
    std::vector<double> incoming_mass(int layer, int head,
                                      const std::vector<int>& tgt) const;
    /// Population std of the captured attention weights of one head.
    double attention_std(int layer, int head) const;
};

struct LayerState {
    // All candidate bundles in search mode, exactly one in discrete mode,
    // none for the vanilla variant.
    std::vector<GnnParams> gnn;
    GnnOp selected = GnnOp::GINE;
    TensorPtr edge_proj_w, edge_proj_b;  // d_e -> d, shared by this layer's operators
    std::vector<TensorPtr> w_q, w_k, w_v;  // per head, d x d_m
    TensorPtr w_out;
    TensorPtr norm1_g, norm1_b, norm2_g, norm2_b;
    TensorPtr ffn_w1, ffn_b1, ffn_w2, ffn_b2;
    TensorPtr gate;  // gamma, 1x1; edge residual gate
};

struct ModelState {
    ModelConfig config;
    bool search_mode = false;
    TensorPtr node_enc_w, node_enc_b;
    TensorPtr phi_w1, phi_b1, phi_w2, phi_b2;  // phi MLP, shared across layers
    TensorPtr edge_mlp_w1, edge_mlp_b1, edge_mlp_w2, edge_mlp_b2;  // MLP_edge
    std::vector<LayerState> layers;
    TensorPtr head_w, head_b;

    /// Stable name -> tensor listing of every learnable parameter.
    NamedParams parameters() const;

    /// search_mode instantiates all candidate operators per layer; otherwise
    /// arch (length L) selects exactly one. arch is ignored for vanilla.
    static ModelState init(const ModelConfig& cfg, bool search_mode,
                           const std::vector<GnnOp>& arch, std::uint64_t seed);
};

/// Side-channel captures used by contract tests.
struct ForwardAudit {
    // Pre-concatenation head outputs (after masking), layer-major.
    std::vector<std::vector<double>> head_outputs;
    // Block input embeddings Z^(l) for l = 0..L.
    std::vector<std::vector<double>> layer_inputs;
    int edge_stream_computations = 0;
};

struct ForwardOptions {
    const HeadMask* mask = nullptr;
    AttentionTrace* trace = nullptr;  // filled when non-null
    ForwardAudit* audit = nullptr;
    bool training = false;
    std::mt19937_64* rng = nullptr;                 // required when training with dropout
    const std::vector<TensorPtr>* alpha = nullptr;  // L rows of 1x3, search mode only
};

TensorPtr model_forward(Tape* tape, const ModelState& state, const Graph& g,
                        const ForwardOptions& opt = {});

/// Per-instance task loss (MAE / BCE-with-logits / cross-entropy).
TensorPtr graph_loss(Tape* tape, const ModelState& state, const TensorPtr& pred,
                     const Graph& g);

struct EvalMetrics {
    double mean_loss = 0.0;
    double accuracy = 0.0;  // classification only
    double mae = 0.0;       // regression only
};
EvalMetrics evaluate(const ModelState& state, const Dataset& ds);

// Call-count audit hooks (single-threaded commands).
std::uint64_t model_forward_count();
void reset_model_forward_count();

/// Checkpoint round-trips bitwise (hexfloat text format).
void save_checkpoint(const std::string& path, const ModelState& state);
ModelState load_checkpoint(const std::string& path);

}  // namespace dartsgt
