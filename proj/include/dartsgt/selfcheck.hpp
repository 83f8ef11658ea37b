#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dartsgt/autodiff.hpp"
#include "dartsgt/graph_data.hpp"
#include "dartsgt/model.hpp"

namespace dartsgt {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct SelfCheckReport {
    std::vector<CheckResult> checks;
    bool all_passed() const;
};

/// Invariant suite behind the selfcheck command: gradient checks, dense/sparse
/// equivalence, mixture linearity, masking locality, metric bounds.
SelfCheckReport run_selfcheck();

/// Central finite-difference check of every element of every listed input.
/// loss_fn must rebuild the scalar loss from the inputs' current values each
/// call. Returns the worst relative error seen.
double gradcheck_max_rel_err(const std::function<TensorPtr(Tape*)>& loss_fn,
                             const std::vector<TensorPtr>& inputs,
                             double eps = 1e-5);

/// Random fully-wired test graph (complete edge set with self-loops when
/// requested), used by equivalence and gradient checks.
Graph random_graph(int n, int d_in, int d_e, bool complete, bool self_loops,
                   std::uint64_t seed);

}  // namespace dartsgt
