#pragma once

#include <vector>

#include "dartsgt/autodiff.hpp"

namespace dartsgt {

/// Adam with the usual defaults (beta1=0.9, beta2=0.999, eps=1e-8).
class AdamOptimizer {
public:
    AdamOptimizer(std::vector<TensorPtr> params, double lr, double weight_decay = 0.0);

    void zero_grad();
    void step();
    double learning_rate() const { return lr_; }
    const std::vector<TensorPtr>& params() const { return params_; }

private:
    std::vector<TensorPtr> params_;
    std::vector<std::vector<double>> m_, v_;
    double lr_;
    double weight_decay_;
    long t_ = 0;
};

}  // namespace dartsgt
