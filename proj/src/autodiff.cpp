#include "dartsgt/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace dartsgt {

Tensor::Tensor(std::vector<int> shp) : shape(std::move(shp)) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
        n *= static_cast<std::size_t>(d);
    }
    values.assign(n, 0.0);
}

void Tensor::ensure_grad() {
    if (grad.empty()) grad.assign(values.size(), 0.0);
}

void Tensor::zero_grad() {
    std::fill(grad.begin(), grad.end(), 0.0);
}

bool Tensor::all_finite() const {
    for (double v : values)
        if (!std::isfinite(v)) return false;
    return true;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
}

TensorPtr make_tensor(std::vector<int> shape, bool requires_grad) {
    auto t = std::make_shared<Tensor>(std::move(shape));
    t->requires_grad = requires_grad;
    return t;
}

TensorPtr make_tensor(std::vector<int> shape, std::vector<double> vals,
                      bool requires_grad) {
    auto t = make_tensor(std::move(shape), requires_grad);
    if (t->values.size() != vals.size())
        throw std::invalid_argument("make_tensor: value count does not match shape " +
                                    t->shape_str());
    t->values = std::move(vals);
    return t;
}

TensorPtr make_scalar(double v, bool requires_grad) {
    return make_tensor({1, 1}, {v}, requires_grad);
}

void Tape::record(std::function<void()> fn) { records_.push_back(std::move(fn)); }

void Tape::backward(const TensorPtr& loss) {
    if (consumed_)
        throw std::logic_error("Tape::backward: tape already consumed; reset first");
    if (loss->size() != 1)
        throw std::invalid_argument("Tape::backward: loss must be scalar, got " +
                                    loss->shape_str());
    loss->ensure_grad();
    loss->grad[0] = 1.0;
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
    consumed_ = true;
}

void Tape::reset() {
    records_.clear();
    consumed_ = false;
}

namespace ops {
namespace {

void check_same_shape(const TensorPtr& a, const TensorPtr& b, const char* op) {
    if (a->shape != b->shape)
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    a->shape_str() + " vs " + b->shape_str());
}

// C (+)= op(A) * op(B); plain triple loop, ikj order for the common NN case.
void gemm(bool ta, bool tb, const Tensor& a, const Tensor& b, Tensor& c,
          bool accumulate) {
    const int m = ta ? a.cols() : a.rows();
    const int k = ta ? a.rows() : a.cols();
    const int n = tb ? b.rows() : b.cols();
    if (!accumulate) std::fill(c.values.begin(), c.values.end(), 0.0);
    for (int i = 0; i < m; ++i) {
        double* crow = &c.values[static_cast<std::size_t>(i) * n];
        for (int p = 0; p < k; ++p) {
            const double av = ta ? a.at(p, i) : a.at(i, p);
            if (av == 0.0) continue;
            if (!tb) {
                const double* brow = &b.values[static_cast<std::size_t>(p) * n];
                for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
            } else {
                for (int j = 0; j < n; ++j) crow[j] += av * b.at(j, p);
            }
        }
    }
}

void gemm_into_grad(bool ta, bool tb, const Tensor& a, const Tensor& b, Tensor& g) {
    Tensor tmp({ta ? a.cols() : a.rows(), tb ? b.rows() : b.cols()});
    gemm(ta, tb, a, b, tmp, false);
    for (std::size_t i = 0; i < g.grad.size(); ++i) g.grad[i] += tmp.values[i];
}

struct GradView {
    // Wraps a grad vector so gemm can read it as a matrix.
    static Tensor as_tensor(const TensorPtr& t) {
        Tensor v;
        v.shape = t->shape;
        v.values = t->grad;
        return v;
    }
};

}  // namespace

TensorPtr matmul(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
    if (a->cols() != b->rows())
        throw std::invalid_argument("matmul: inner dimensions disagree " +
                                    a->shape_str() + " vs " + b->shape_str());
    auto out = make_tensor({a->rows(), b->cols()});
    gemm(false, false, *a, *b, *out, false);
    if (tape)
        tape->record([a, b, out] {
            if (!out->has_grad()) return;
            Tensor g = GradView::as_tensor(out);
            a->ensure_grad();
            b->ensure_grad();
            gemm_into_grad(false, true, g, *b, *a);  // dA = dC * B^T
            gemm_into_grad(true, false, *a, g, *b);  // dB = A^T * dC
        });
    return out;
}

TensorPtr matmul_nt(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
    if (a->cols() != b->cols())
        throw std::invalid_argument("matmul_nt: inner dimensions disagree " +
                                    a->shape_str() + " vs " + b->shape_str());
    auto out = make_tensor({a->rows(), b->rows()});
    gemm(false, true, *a, *b, *out, false);
    if (tape)
        tape->record([a, b, out] {
            if (!out->has_grad()) return;
            Tensor g = GradView::as_tensor(out);
            a->ensure_grad();
            b->ensure_grad();
            gemm_into_grad(false, false, g, *b, *a);  // dA = dC * B
            gemm_into_grad(true, false, g, *a, *b);   // dB = dC^T * A
        });
    return out;
}

TensorPtr add(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
    check_same_shape(a, b, "add");
    auto out = make_tensor(a->shape);
    for (std::size_t i = 0; i < out->size(); ++i)
        out->values[i] = a->values[i] + b->values[i];
    if (tape)
        tape->record([a, b, out] {
            if (!out->has_grad()) return;
            a->ensure_grad();
            b->ensure_grad();
            for (std::size_t i = 0; i < out->size(); ++i) {
                a->grad[i] += out->grad[i];
                b->grad[i] += out->grad[i];
            }
        });
    return out;
}

TensorPtr sub(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
    check_same_shape(a, b, "sub");
    auto out = make_tensor(a->shape);
    for (std::size_t i = 0; i < out->size(); ++i)
        out->values[i] = a->values[i] - b->values[i];
    if (tape)
        tape->record([a, b, out] {
            if (!out->has_grad()) return;
            a->ensure_grad();
            b->ensure_grad();
            for (std::size_t i = 0; i < out->size(); ++i) {
                a->grad[i] += out->grad[i];
                b->grad[i] -= out->grad[i];
            }
        });
    return out;
}

TensorPtr add_rowvec(Tape* tape, const TensorPtr& x, const TensorPtr& bias) {
    if (bias->rows() != 1 || bias->cols() != x->cols())
        throw std::invalid_argument("add_rowvec: bias " + bias->shape_str() +
                                    " incompatible with " + x->shape_str());
    auto out = make_tensor(x->shape);
    const int n = x->rows(), d = x->cols();
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) out->at(i, j) = x->at(i, j) + bias->values[j];
    if (tape)
        tape->record([x, bias, out, n, d] {
            if (!out->has_grad()) return;
            x->ensure_grad();
            bias->ensure_grad();
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < d; ++j) {
                    const double g = out->grad[static_cast<std::size_t>(i) * d + j];
                    x->grad[static_cast<std::size_t>(i) * d + j] += g;
                    bias->grad[j] += g;
                }
        });
    return out;
}

TensorPtr hadamard(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
    check_same_shape(a, b, "hadamard");
    auto out = make_tensor(a->shape);
    for (std::size_t i = 0; i < out->size(); ++i)
        out->values[i] = a->values[i] * b->values[i];
    if (tape)
        tape->record([a, b, out] {
            if (!out->has_grad()) return;
            a->ensure_grad();
            b->ensure_grad();
            for (std::size_t i = 0; i < out->size(); ++i) {
                a->grad[i] += out->grad[i] * b->values[i];
                b->grad[i] += out->grad[i] * a->values[i];
            }
        });
    return out;
}

TensorPtr divide(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
    check_same_shape(a, b, "divide");
    auto out = make_tensor(a->shape);
    for (std::size_t i = 0; i < out->size(); ++i)
        out->values[i] = a->values[i] / b->values[i];
    if (tape)
        tape->record([a, b, out] {
            if (!out->has_grad()) return;
            a->ensure_grad();
            b->ensure_grad();
            for (std::size_t i = 0; i < out->size(); ++i) {
                const double g = out->grad[i];
                a->grad[i] += g / b->values[i];
                b->grad[i] -= g * a->values[i] / (b->values[i] * b->values[i]);
            }
        });
    return out;
}

TensorPtr scalar_mul(Tape* tape, const TensorPtr& x, double c) {
    auto out = make_tensor(x->shape);
    for (std::size_t i = 0; i < out->size(); ++i) out->values[i] = c * x->values[i];
    if (tape)
        tape->record([x, out, c] {
            if (!out->has_grad()) return;
            x->ensure_grad();
            for (std::size_t i = 0; i < out->size(); ++i)
                x->grad[i] += c * out->grad[i];
        });
    return out;
}

TensorPtr add_const(Tape* tape, const TensorPtr& x, double c) {
    auto out = make_tensor(x->shape);
    for (std::size_t i = 0; i < out->size(); ++i) out->values[i] = x->values[i] + c;
    if (tape)
        tape->record([x, out] {
            if (!out->has_grad()) return;
            x->ensure_grad();
            for (std::size_t i = 0; i < out->size(); ++i) x->grad[i] += out->grad[i];
        });
    return out;
}

TensorPtr scale_by(Tape* tape, const TensorPtr& x, const TensorPtr& s) {
    if (s->size() != 1)
        throw std::invalid_argument("scale_by: scale must be 1x1, got " + s->shape_str());
    const double sv = s->values[0];
    auto out = make_tensor(x->shape);
    for (std::size_t i = 0; i < out->size(); ++i) out->values[i] = sv * x->values[i];
    if (tape)
        tape->record([x, s, out, sv] {
            if (!out->has_grad()) return;
            x->ensure_grad();
            s->ensure_grad();
            double acc = 0.0;
            for (std::size_t i = 0; i < out->size(); ++i) {
                x->grad[i] += sv * out->grad[i];
                acc += out->grad[i] * x->values[i];
            }
            s->grad[0] += acc;
        });
    return out;
}

TensorPtr relu(Tape* tape, const TensorPtr& x) {
    auto out = make_tensor(x->shape);
    for (std::size_t i = 0; i < out->size(); ++i)
        out->values[i] = x->values[i] > 0.0 ? x->values[i] : 0.0;
    if (tape)
        tape->record([x, out] {
            if (!out->has_grad()) return;
            x->ensure_grad();
            for (std::size_t i = 0; i < out->size(); ++i)
                if (x->values[i] > 0.0) x->grad[i] += out->grad[i];
        });
    return out;
}

TensorPtr leaky_relu(Tape* tape, const TensorPtr& x, double slope) {
    auto out = make_tensor(x->shape);
    for (std::size_t i = 0; i < out->size(); ++i)
        out->values[i] = x->values[i] > 0.0 ? x->values[i] : slope * x->values[i];
    if (tape)
        tape->record([x, out, slope] {
            if (!out->has_grad()) return;
            x->ensure_grad();
            for (std::size_t i = 0; i < out->size(); ++i)
                x->grad[i] += (x->values[i] > 0.0 ? 1.0 : slope) * out->grad[i];
        });
    return out;
}

TensorPtr sigmoid(Tape* tape, const TensorPtr& x) {
    auto out = make_tensor(x->shape);
    for (std::size_t i = 0; i < out->size(); ++i)
        out->values[i] = 1.0 / (1.0 + std::exp(-x->values[i]));
    if (tape)
        tape->record([x, out] {
            if (!out->has_grad()) return;
            x->ensure_grad();
            for (std::size_t i = 0; i < out->size(); ++i) {
                const double s = out->values[i];
                x->grad[i] += out->grad[i] * s * (1.0 - s);
            }
        });
    return out;
}

TensorPtr concat_columns(Tape* tape, const std::vector<TensorPtr>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_columns: empty input");
    const int n = parts[0]->rows();
    int d_total = 0;
    for (const auto& p : parts) {
        if (p->rows() != n)
            throw std::invalid_argument("concat_columns: row counts differ: " +
                                        parts[0]->shape_str() + " vs " + p->shape_str());
        d_total += p->cols();
    }
    auto out = make_tensor({n, d_total});
    int off = 0;
    for (const auto& p : parts) {
        const int d = p->cols();
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) out->at(i, off + j) = p->at(i, j);
        off += d;
    }
    if (tape)
        tape->record([parts, out, n] {
            if (!out->has_grad()) return;
            int off = 0;
            for (const auto& p : parts) {
                p->ensure_grad();
                const int d = p->cols();
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < d; ++j)
                        p->grad[static_cast<std::size_t>(i) * d + j] +=
                            out->grad[static_cast<std::size_t>(i) * out->cols() + off + j];
                off += d;
            }
        });
    return out;
}

TensorPtr slice_cols(Tape* tape, const TensorPtr& x, int c0, int c1) {
    if (c0 < 0 || c1 > x->cols() || c0 >= c1)
        throw std::invalid_argument("slice_cols: bad range on " + x->shape_str());
    const int n = x->rows(), d = c1 - c0;
    auto out = make_tensor({n, d});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) out->at(i, j) = x->at(i, c0 + j);
    if (tape)
        tape->record([x, out, c0, n, d] {
            if (!out->has_grad()) return;
            x->ensure_grad();
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < d; ++j)
                    x->grad[static_cast<std::size_t>(i) * x->cols() + c0 + j] +=
                        out->grad[static_cast<std::size_t>(i) * d + j];
        });
    return out;
}

TensorPtr sum(Tape* tape, const TensorPtr& x) {
    double acc = 0.0;
    for (double v : x->values) acc += v;
    auto out = make_scalar(acc);
    if (tape)
        tape->record([x, out] {
            if (!out->has_grad()) return;
            x->ensure_grad();
            for (std::size_t i = 0; i < x->size(); ++i) x->grad[i] += out->grad[0];
        });
    return out;
}

TensorPtr mean(Tape* tape, const TensorPtr& x) {
    double acc = 0.0;
    for (double v : x->values) acc += v;
    const double inv = 1.0 / static_cast<double>(x->size());
    auto out = make_scalar(acc * inv);
    if (tape)
        tape->record([x, out, inv] {
            if (!out->has_grad()) return;
            x->ensure_grad();
            for (std::size_t i = 0; i < x->size(); ++i) x->grad[i] += inv * out->grad[0];
        });
    return out;
}

TensorPtr mean_rows(Tape* tape, const TensorPtr& x) {
    const int n = x->rows(), d = x->cols();
    auto out = make_tensor({1, d});
    const double inv = 1.0 / static_cast<double>(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) out->values[j] += x->at(i, j) * inv;
    if (tape)
        tape->record([x, out, n, d, inv] {
            if (!out->has_grad()) return;
            x->ensure_grad();
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < d; ++j)
                    x->grad[static_cast<std::size_t>(i) * d + j] += inv * out->grad[j];
        });
    return out;
}

TensorPtr row_softmax(Tape* tape, const TensorPtr& x) {
    const int n = x->rows(), d = x->cols();
    auto out = make_tensor(x->shape);
    for (int i = 0; i < n; ++i) {
        double mx = x->at(i, 0);
        for (int j = 1; j < d; ++j) mx = std::max(mx, x->at(i, j));
        double z = 0.0;
        for (int j = 0; j < d; ++j) {
            out->at(i, j) = std::exp(x->at(i, j) - mx);
            z += out->at(i, j);
        }
        for (int j = 0; j < d; ++j) out->at(i, j) /= z;
    }
    if (tape)
        tape->record([x, out, n, d] {
            if (!out->has_grad()) return;
            x->ensure_grad();
            for (int i = 0; i < n; ++i) {
                double dot = 0.0;
                for (int j = 0; j < d; ++j)
                    dot += out->grad[static_cast<std::size_t>(i) * d + j] * out->at(i, j);
                for (int j = 0; j < d; ++j) {
                    const std::size_t k = static_cast<std::size_t>(i) * d + j;
                    x->grad[k] += out->at(i, j) * (out->grad[k] - dot);
                }
            }
        });
    return out;
}

TensorPtr segment_softmax(Tape* tape, const TensorPtr& scores,
                          const std::vector<int>& targets, int n) {
    const int e = scores->rows();
    if (scores->cols() != 1)
        throw std::invalid_argument("segment_softmax: scores must be [E x 1], got " +
                                    scores->shape_str());
    if (static_cast<std::size_t>(e) != targets.size())
        throw std::invalid_argument("segment_softmax: targets length mismatch");
    for (int t : targets)
        if (t < 0 || t >= n)
            throw std::out_of_range("segment_softmax: target index " +
                                    std::to_string(t) + " out of range [0," +
                                    std::to_string(n) + ")");
    auto out = make_tensor(scores->shape);
    std::vector<double> mx(n, -std::numeric_limits<double>::infinity());
    for (int i = 0; i < e; ++i) mx[targets[i]] = std::max(mx[targets[i]], scores->values[i]);
    std::vector<double> z(n, 0.0);
    for (int i = 0; i < e; ++i) {
        out->values[i] = std::exp(scores->values[i] - mx[targets[i]]);
        z[targets[i]] += out->values[i];
    }
    for (int i = 0; i < e; ++i) out->values[i] /= z[targets[i]];
    if (tape)
        tape->record([scores, out, targets, n, e] {
            if (!out->has_grad()) return;
            scores->ensure_grad();
            std::vector<double> dot(n, 0.0);
            for (int i = 0; i < e; ++i) dot[targets[i]] += out->grad[i] * out->values[i];
            for (int i = 0; i < e; ++i)
                scores->grad[i] += out->values[i] * (out->grad[i] - dot[targets[i]]);
        });
    return out;
}

TensorPtr layer_norm(Tape* tape, const TensorPtr& x, const TensorPtr& gain,
                     const TensorPtr& bias) {
    const int n = x->rows(), d = x->cols();
    if (gain->size() != static_cast<std::size_t>(d) ||
        bias->size() != static_cast<std::size_t>(d))
        throw std::invalid_argument("layer_norm: gain/bias width mismatch with " +
                                    x->shape_str());
    constexpr double kEps = 1e-5;
    auto out = make_tensor(x->shape);
    auto xhat = std::make_shared<Tensor>(x->shape);  // kept for backward
    std::vector<double> inv_std(n);
    for (int i = 0; i < n; ++i) {
        double mu = 0.0;
        for (int j = 0; j < d; ++j) mu += x->at(i, j);
        mu /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) {
            const double c = x->at(i, j) - mu;
            var += c * c;
        }
        var /= d;
        inv_std[i] = 1.0 / std::sqrt(var + kEps);
        for (int j = 0; j < d; ++j) {
            xhat->at(i, j) = (x->at(i, j) - mu) * inv_std[i];
            out->at(i, j) = gain->values[j] * xhat->at(i, j) + bias->values[j];
        }
    }
    if (tape)
        tape->record([x, gain, bias, out, xhat, inv_std, n, d] {
            if (!out->has_grad()) return;
            x->ensure_grad();
            gain->ensure_grad();
            bias->ensure_grad();
            for (int i = 0; i < n; ++i) {
                double mean_dxh = 0.0, mean_dxh_xh = 0.0;
                for (int j = 0; j < d; ++j) {
                    const std::size_t k = static_cast<std::size_t>(i) * d + j;
                    const double dxh = out->grad[k] * gain->values[j];
                    mean_dxh += dxh;
                    mean_dxh_xh += dxh * xhat->values[k];
                }
                mean_dxh /= d;
                mean_dxh_xh /= d;
                for (int j = 0; j < d; ++j) {
                    const std::size_t k = static_cast<std::size_t>(i) * d + j;
                    const double dxh = out->grad[k] * gain->values[j];
                    x->grad[k] +=
                        inv_std[i] * (dxh - mean_dxh - xhat->values[k] * mean_dxh_xh);
                    gain->grad[j] += out->grad[k] * xhat->values[k];
                    bias->grad[j] += out->grad[k];
                }
            }
        });
    return out;
}

TensorPtr gather_rows(Tape* tape, const TensorPtr& x, const std::vector<int>& idx) {
    const int d = x->cols();
    for (int i : idx)
        if (i < 0 || i >= x->rows())
            throw std::out_of_range("gather_rows: index " + std::to_string(i) +
                                    " out of range for " + x->shape_str());
    auto out = make_tensor({static_cast<int>(idx.size()), d});
    for (std::size_t r = 0; r < idx.size(); ++r)
        for (int j = 0; j < d; ++j) out->at(static_cast<int>(r), j) = x->at(idx[r], j);
    if (tape)
        tape->record([x, out, idx, d] {
            if (!out->has_grad()) return;
            x->ensure_grad();
            for (std::size_t r = 0; r < idx.size(); ++r)
                for (int j = 0; j < d; ++j)
                    x->grad[static_cast<std::size_t>(idx[r]) * d + j] +=
                        out->grad[r * d + j];
        });
    return out;
}

TensorPtr segment_sum(Tape* tape, const TensorPtr& m, const std::vector<int>& targets,
                      int n) {
    const int e = m->rows(), d = m->cols();
    if (static_cast<std::size_t>(e) != targets.size())
        throw std::invalid_argument("segment_sum: targets length mismatch");
    for (int t : targets)
        if (t < 0 || t >= n) throw std::out_of_range("segment_sum: target out of range");
    auto out = make_tensor({n, d});
    for (int r = 0; r < e; ++r)
        for (int j = 0; j < d; ++j) out->at(targets[r], j) += m->at(r, j);
    if (tape)
        tape->record([m, out, targets, e, d] {
            if (!out->has_grad()) return;
            m->ensure_grad();
            for (int r = 0; r < e; ++r)
                for (int j = 0; j < d; ++j)
                    m->grad[static_cast<std::size_t>(r) * d + j] +=
                        out->grad[static_cast<std::size_t>(targets[r]) * d + j];
        });
    return out;
}

TensorPtr row_dot(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
    check_same_shape(a, b, "row_dot");
    const int n = a->rows(), d = a->cols();
    auto out = make_tensor({n, 1});
    for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int j = 0; j < d; ++j) acc += a->at(i, j) * b->at(i, j);
        out->values[i] = acc;
    }
    if (tape)
        tape->record([a, b, out, n, d] {
            if (!out->has_grad()) return;
            a->ensure_grad();
            b->ensure_grad();
            for (int i = 0; i < n; ++i) {
                const double g = out->grad[i];
                for (int j = 0; j < d; ++j) {
                    const std::size_t k = static_cast<std::size_t>(i) * d + j;
                    a->grad[k] += g * b->values[k];
                    b->grad[k] += g * a->values[k];
                }
            }
        });
    return out;
}

TensorPtr row_scale(Tape* tape, const TensorPtr& m, const TensorPtr& s) {
    const int n = m->rows(), d = m->cols();
    if (s->rows() != n || s->cols() != 1)
        throw std::invalid_argument("row_scale: scale " + s->shape_str() +
                                    " incompatible with " + m->shape_str());
    auto out = make_tensor(m->shape);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) out->at(i, j) = s->values[i] * m->at(i, j);
    if (tape)
        tape->record([m, s, out, n, d] {
            if (!out->has_grad()) return;
            m->ensure_grad();
            s->ensure_grad();
            for (int i = 0; i < n; ++i) {
                double acc = 0.0;
                for (int j = 0; j < d; ++j) {
                    const std::size_t k = static_cast<std::size_t>(i) * d + j;
                    m->grad[k] += s->values[i] * out->grad[k];
                    acc += out->grad[k] * m->values[k];
                }
                s->grad[i] += acc;
            }
        });
    return out;
}

TensorPtr dropout(Tape* tape, const TensorPtr& x, double p, bool training,
                  std::mt19937_64& rng) {
    if (!training || p <= 0.0) return x;
    if (p >= 1.0) throw std::invalid_argument("dropout: p must be < 1");
    auto mask = std::make_shared<std::vector<double>>(x->size());
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double keep_inv = 1.0 / (1.0 - p);
    auto out = make_tensor(x->shape);
    for (std::size_t i = 0; i < x->size(); ++i) {
        (*mask)[i] = u(rng) < p ? 0.0 : keep_inv;
        out->values[i] = x->values[i] * (*mask)[i];
    }
    if (tape)
        tape->record([x, out, mask] {
            if (!out->has_grad()) return;
            x->ensure_grad();
            for (std::size_t i = 0; i < out->size(); ++i)
                x->grad[i] += out->grad[i] * (*mask)[i];
        });
    return out;
}

TensorPtr mae_loss(Tape* tape, const TensorPtr& pred, double target) {
    if (pred->size() != 1)
        throw std::invalid_argument("mae_loss: prediction must be scalar, got " +
                                    pred->shape_str());
    const double diff = pred->values[0] - target;
    auto out = make_scalar(std::abs(diff));
    if (tape)
        tape->record([pred, out, diff] {
            if (!out->has_grad()) return;
            pred->ensure_grad();
            pred->grad[0] += (diff >= 0.0 ? 1.0 : -1.0) * out->grad[0];
        });
    return out;
}

TensorPtr bce_with_logits(Tape* tape, const TensorPtr& logit, double label) {
    if (logit->size() != 1)
        throw std::invalid_argument("bce_with_logits: logit must be scalar, got " +
                                    logit->shape_str());
    const double z = logit->values[0];
    // Stable form: max(z,0) - z*y + log(1 + exp(-|z|)).
    const double loss =
        std::max(z, 0.0) - z * label + std::log1p(std::exp(-std::abs(z)));
    auto out = make_scalar(loss);
    if (tape)
        tape->record([logit, out, z, label] {
            if (!out->has_grad()) return;
            logit->ensure_grad();
            const double s = 1.0 / (1.0 + std::exp(-z));
            logit->grad[0] += (s - label) * out->grad[0];
        });
    return out;
}

TensorPtr cross_entropy(Tape* tape, const TensorPtr& logits,
                        const std::vector<int>& labels) {
    const int n = logits->rows(), c = logits->cols();
    if (static_cast<std::size_t>(n) != labels.size())
        throw std::invalid_argument("cross_entropy: label count mismatch with " +
                                    logits->shape_str());
    for (int y : labels)
        if (y < 0 || y >= c) throw std::out_of_range("cross_entropy: label out of range");
    auto probs = std::make_shared<Tensor>(logits->shape);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        double mx = logits->at(i, 0);
        for (int j = 1; j < c; ++j) mx = std::max(mx, logits->at(i, j));
        double z = 0.0;
        for (int j = 0; j < c; ++j) {
            probs->at(i, j) = std::exp(logits->at(i, j) - mx);
            z += probs->at(i, j);
        }
        for (int j = 0; j < c; ++j) probs->at(i, j) /= z;
        total -= std::log(std::max(probs->at(i, labels[i]), 1e-300));
    }
    auto out = make_scalar(total / n);
    if (tape)
        tape->record([logits, out, probs, labels, n, c] {
            if (!out->has_grad()) return;
            logits->ensure_grad();
            const double g = out->grad[0] / n;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < c; ++j)
                    logits->grad[static_cast<std::size_t>(i) * c + j] +=
                        g * (probs->at(i, j) - (j == labels[i] ? 1.0 : 0.0));
        });
    return out;
}

}  // namespace ops
}  // namespace dartsgt
