#include "dartsgt/gnn_ops.hpp"

#include <cmath>
#include <stdexcept>

namespace dartsgt {

using namespace ops;

const char* gnn_op_name(GnnOp op) {
    switch (op) {
        case GnnOp::GINE: return "GINE";
        case GnnOp::GATv2: return "GATV2";
        case GnnOp::GatedGCN: return "GATEDGCN";
    }
    return "?";
}

GnnOp gnn_op_from_name(const std::string& name) {
    for (GnnOp op : kAllGnnOps)
        if (name == gnn_op_name(op)) return op;
    throw std::invalid_argument("unknown GNN operator name: " + name);
}

TensorPtr init_linear(int fan_in, int fan_out, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    auto t = make_tensor({fan_in, fan_out}, true);
    for (double& v : t->values) v = u(rng);
    return t;
}

GnnParams GnnParams::init(GnnOp op, int d, std::mt19937_64& rng) {
    GnnParams p;
    p.op = op;
    p.width = d;
    switch (op) {
        case GnnOp::GINE:
            p.gine_eps = make_scalar(0.0, true);
            p.gine_w1 = init_linear(d, d, rng);
            p.gine_b1 = make_tensor({1, d}, true);
            p.gine_w2 = init_linear(d, d, rng);
            p.gine_b2 = make_tensor({1, d}, true);
            break;
        case GnnOp::GATv2:
            p.gat_w_src = init_linear(d, d, rng);
            p.gat_w_tgt = init_linear(d, d, rng);
            p.gat_w_edge = init_linear(d, d, rng);
            p.gat_attn = init_linear(d, 1, rng);
            break;
        case GnnOp::GatedGCN:
            p.ggcn_a = init_linear(d, d, rng);
            p.ggcn_b = init_linear(d, d, rng);
            p.ggcn_c = init_linear(d, d, rng);
            p.ggcn_u = init_linear(d, d, rng);
            p.ggcn_v = init_linear(d, d, rng);
            break;
    }
    return p;
}

void GnnParams::collect(const std::string& prefix, NamedParams& out) const {
    auto put = [&](const char* name, const TensorPtr& t) {
        if (t) out.emplace_back(prefix + name, t);
    };
    put("gine.eps", gine_eps);
    put("gine.w1", gine_w1);
    put("gine.b1", gine_b1);
    put("gine.w2", gine_w2);
    put("gine.b2", gine_b2);
    put("gat.w_src", gat_w_src);
    put("gat.w_tgt", gat_w_tgt);
    put("gat.w_edge", gat_w_edge);
    put("gat.attn", gat_attn);
    put("ggcn.a", ggcn_a);
    put("ggcn.b", ggcn_b);
    put("ggcn.c", ggcn_c);
    put("ggcn.u", ggcn_u);
    put("ggcn.v", ggcn_v);
}

namespace {

void check_width(const GnnParams& p, const TensorPtr& z, const TensorPtr& edge_feat) {
    if (z->cols() != p.width || edge_feat->cols() != p.width)
        throw std::invalid_argument(std::string("gnn_forward(") + gnn_op_name(p.op) +
                                    "): width mismatch, z " + z->shape_str() +
                                    " edge_feat " + edge_feat->shape_str() +
                                    " expected width " + std::to_string(p.width));
}

TensorPtr gine_forward(Tape* t, const GnnParams& p, const TensorPtr& z,
                       const std::vector<int>& src, const std::vector<int>& tgt,
                       const TensorPtr& ef) {
    const int n = z->rows();
    auto h_src = gather_rows(t, z, src);                    // [E x d]
    auto msg = relu(t, add(t, h_src, ef));
    auto agg = segment_sum(t, msg, tgt, n);                 // [n x d]
    auto self = scale_by(t, z, add_const(t, p.gine_eps, 1.0));
    auto pre = add(t, self, agg);
    auto hidden = relu(t, add_rowvec(t, matmul(t, pre, p.gine_w1), p.gine_b1));
    return add_rowvec(t, matmul(t, hidden, p.gine_w2), p.gine_b2);
}

TensorPtr gatv2_forward(Tape* t, const GnnParams& p, const TensorPtr& z,
                        const std::vector<int>& src, const std::vector<int>& tgt,
                        const TensorPtr& ef) {
    const int n = z->rows();
    auto zs = matmul(t, z, p.gat_w_src);                    // [n x d]
    auto zt = matmul(t, z, p.gat_w_tgt);
    auto et = matmul(t, ef, p.gat_w_edge);                  // [E x d]
    auto pre = add(t, add(t, gather_rows(t, zs, src), gather_rows(t, zt, tgt)), et);
    auto scores = matmul(t, leaky_relu(t, pre, 0.2), p.gat_attn);  // [E x 1]
    auto attn = segment_softmax(t, scores, tgt, n);
    auto weighted = row_scale(t, gather_rows(t, zs, src), attn);
    return segment_sum(t, weighted, tgt, n);
}

TensorPtr gatedgcn_forward(Tape* t, const GnnParams& p, const TensorPtr& z,
                           const std::vector<int>& src, const std::vector<int>& tgt,
                           const TensorPtr& ef) {
    const int n = z->rows();
    auto az = matmul(t, z, p.ggcn_a);
    auto bz = matmul(t, z, p.ggcn_b);
    auto ce = matmul(t, ef, p.ggcn_c);
    auto gate = sigmoid(
        t, add(t, add(t, gather_rows(t, az, src), gather_rows(t, bz, tgt)), ce));
    auto vz = matmul(t, z, p.ggcn_v);
    auto num = segment_sum(t, hadamard(t, gate, gather_rows(t, vz, src)), tgt, n);
    auto den = add_const(t, segment_sum(t, gate, tgt, n), 1e-6);
    return add(t, matmul(t, z, p.ggcn_u), divide(t, num, den));
}

}  // namespace

TensorPtr gnn_forward(Tape* tape, const GnnParams& p, const TensorPtr& z,
                      const std::vector<int>& src, const std::vector<int>& tgt,
                      const TensorPtr& edge_feat) {
    check_width(p, z, edge_feat);
    switch (p.op) {
        case GnnOp::GINE: return gine_forward(tape, p, z, src, tgt, edge_feat);
        case GnnOp::GATv2: return gatv2_forward(tape, p, z, src, tgt, edge_feat);
        case GnnOp::GatedGCN: return gatedgcn_forward(tape, p, z, src, tgt, edge_feat);
    }
    throw std::logic_error("unreachable");
}

TensorPtr mixed_operator(Tape* tape, const TensorPtr& alpha_row,
                         const std::array<GnnParams, kNumGnnOps>& params,
                         const TensorPtr& z, const std::vector<int>& src,
                         const std::vector<int>& tgt, const TensorPtr& edge_feat) {
    if (alpha_row->rows() != 1 || alpha_row->cols() != kNumGnnOps)
        throw std::invalid_argument("mixed_operator: alpha row must be 1x" +
                                    std::to_string(kNumGnnOps));
    auto weights = row_softmax(tape, alpha_row);
    TensorPtr out;
    for (int i = 0; i < kNumGnnOps; ++i) {
        auto w_i = slice_cols(tape, weights, i, i + 1);
        auto part =
            scale_by(tape, gnn_forward(tape, params[i], z, src, tgt, edge_feat), w_i);
        out = out ? add(tape, out, part) : part;
    }
    return out;
}

}  // namespace dartsgt
