#include "dartsgt/optim.hpp"

#include <cmath>

namespace dartsgt {

AdamOptimizer::AdamOptimizer(std::vector<TensorPtr> params, double lr,
                             double weight_decay)
    : params_(std::move(params)), lr_(lr), weight_decay_(weight_decay) {
    for (const auto& p : params_) {
        m_.emplace_back(p->size(), 0.0);
        v_.emplace_back(p->size(), 0.0);
    }
}

void AdamOptimizer::zero_grad() {
    for (auto& p : params_) {
        p->ensure_grad();
        p->zero_grad();
    }
}

void AdamOptimizer::step() {
    constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
    ++t_;
    const double bc1 = 1.0 - std::pow(kBeta1, t_);
    const double bc2 = 1.0 - std::pow(kBeta2, t_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Tensor& p = *params_[i];
        if (!p.has_grad()) continue;
        for (std::size_t k = 0; k < p.size(); ++k) {
            double g = p.grad[k];
            if (weight_decay_ != 0.0) g += weight_decay_ * p.values[k];
            m_[i][k] = kBeta1 * m_[i][k] + (1.0 - kBeta1) * g;
            v_[i][k] = kBeta2 * v_[i][k] + (1.0 - kBeta2) * g * g;
            p.values[k] -= lr_ * (m_[i][k] / bc1) / (std::sqrt(v_[i][k] / bc2) + kEps);
        }
    }
}

}  // namespace dartsgt
