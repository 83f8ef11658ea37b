#pragma once

#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace dartsgt {

/// Dense row-major tensor of doubles with an optional gradient buffer.
/// The gradient buffer is allocated lazily on first backward touch.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> values;
    std::vector<double> grad;  // empty until backward reaches this tensor
    bool requires_grad = false;

    Tensor() = default;
    explicit Tensor(std::vector<int> shp);

    int rows() const { return shape.empty() ? 0 : shape[0]; }
    int cols() const { return shape.size() < 2 ? 1 : shape[1]; }
    std::size_t size() const { return values.size(); }

    double& at(int i, int j) { return values[static_cast<std::size_t>(i) * cols() + j]; }
    double at(int i, int j) const { return values[static_cast<std::size_t>(i) * cols() + j]; }

    void ensure_grad();
    void zero_grad();
    bool has_grad() const { return !grad.empty(); }
    bool all_finite() const;
    std::string shape_str() const;
};

using TensorPtr = std::shared_ptr<Tensor>;

TensorPtr make_tensor(std::vector<int> shape, bool requires_grad = false);
TensorPtr make_tensor(std::vector<int> shape, std::vector<double> vals,
                      bool requires_grad = false);
TensorPtr make_scalar(double v, bool requires_grad = false);

/// Records one forward pass worth of backward rules in execution order.
/// A tape may be consumed by backward() exactly once.
class Tape {
public:
    void record(std::function<void()> fn);
    /// Seeds d(loss)/d(loss) = 1 and runs the rules in reverse order.
    /// Throws if loss is not scalar or the tape was already consumed.
    void backward(const TensorPtr& loss);
    bool consumed() const { return consumed_; }
    std::size_t num_records() const { return records_.size(); }
    void reset();

private:
    std::vector<std::function<void()>> records_;
    bool consumed_ = false;
};

namespace ops {

// Every op takes an optional tape; a null tape means eval-only (no backward rule
// is recorded). Gradients accumulate additively into inputs.

TensorPtr matmul(Tape* tape, const TensorPtr& a, const TensorPtr& b);
/// a * b^T without materializing the transpose.
TensorPtr matmul_nt(Tape* tape, const TensorPtr& a, const TensorPtr& b);

TensorPtr add(Tape* tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(Tape* tape, const TensorPtr& a, const TensorPtr& b);
/// X[n x d] + bias[1 x d] broadcast over rows.
TensorPtr add_rowvec(Tape* tape, const TensorPtr& x, const TensorPtr& bias);
TensorPtr hadamard(Tape* tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr divide(Tape* tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr scalar_mul(Tape* tape, const TensorPtr& x, double c);
TensorPtr add_const(Tape* tape, const TensorPtr& x, double c);
/// X scaled by a learnable 1x1 tensor.
TensorPtr scale_by(Tape* tape, const TensorPtr& x, const TensorPtr& s);

TensorPtr relu(Tape* tape, const TensorPtr& x);
TensorPtr leaky_relu(Tape* tape, const TensorPtr& x, double slope);
TensorPtr sigmoid(Tape* tape, const TensorPtr& x);

TensorPtr concat_columns(Tape* tape, const std::vector<TensorPtr>& parts);
TensorPtr slice_cols(Tape* tape, const TensorPtr& x, int c0, int c1);

TensorPtr sum(Tape* tape, const TensorPtr& x);
TensorPtr mean(Tape* tape, const TensorPtr& x);
/// Column means: [n x d] -> [1 x d].
TensorPtr mean_rows(Tape* tape, const TensorPtr& x);

TensorPtr row_softmax(Tape* tape, const TensorPtr& x);
/// Softmax over edge scores grouped by target node. scores is [E x 1];
/// targets[e] < n. Nodes without incoming edges contribute nothing.
TensorPtr segment_softmax(Tape* tape, const TensorPtr& scores,
                          const std::vector<int>& targets, int n);

/// Per-row normalization to mean 0, variance 1 (epsilon 1e-5 inside the sqrt),
/// then elementwise gain/bias.
TensorPtr layer_norm(Tape* tape, const TensorPtr& x, const TensorPtr& gain,
                     const TensorPtr& bias);

TensorPtr gather_rows(Tape* tape, const TensorPtr& x, const std::vector<int>& idx);
/// Sums rows of m[E x d] into n buckets by target index.
TensorPtr segment_sum(Tape* tape, const TensorPtr& m, const std::vector<int>& targets,
                      int n);
/// Row-wise dot product: [E x d], [E x d] -> [E x 1].
TensorPtr row_dot(Tape* tape, const TensorPtr& a, const TensorPtr& b);
/// Scales row e of m[E x d] by s[e]; s is [E x 1].
TensorPtr row_scale(Tape* tape, const TensorPtr& m, const TensorPtr& s);

/// Inverted dropout; identity when p == 0 or not training.
TensorPtr dropout(Tape* tape, const TensorPtr& x, double p, bool training,
                  std::mt19937_64& rng);

// Task losses, all producing a 1x1 tensor.
TensorPtr mae_loss(Tape* tape, const TensorPtr& pred, double target);
TensorPtr bce_with_logits(Tape* tape, const TensorPtr& logit, double label);
/// Mean cross-entropy over rows of logits [n x C] against integer labels.
TensorPtr cross_entropy(Tape* tape, const TensorPtr& logits,
                        const std::vector<int>& labels);

}  // namespace ops
}  // namespace dartsgt
