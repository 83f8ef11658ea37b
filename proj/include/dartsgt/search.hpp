#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dartsgt/graph_data.hpp"
#include "dartsgt/model.hpp"
#include "dartsgt/optim.hpp"

namespace dartsgt {

/// Architecture weights: one 1x|O| row per layer, initialized to zeros so the
/// first forward pass mixes the candidates uniformly.
struct ArchParams {
    std::vector<TensorPtr> rows;

    static ArchParams zeros(int layers);
    int layers() const { return static_cast<int>(rows.size()); }
    std::vector<std::vector<double>> snapshot() const;
    std::vector<std::vector<double>> softmax() const;
    bool all_finite() const;
};

struct SearchConfig {
    int epochs_search = 15;
    int epochs_final = 25;
    double lr_w = 3e-3;
    double lr_alpha = 1e-3;
    double weight_decay = 0.0;
    double alpha_weight_decay = 0.0;  // off unless explicitly configured
    double alpha_grad_clip = 0.0;     // 0 disables clipping
    int batch_size = 8;               // gradient-accumulation window
    double final_val_fraction = 0.0;  // >0 keeps best-validation state in phase 2
    std::uint64_t seed = 0;
    ModelConfig model;

    void validate() const;
};

struct DiscreteArchitecture {
    std::vector<GnnOp> ops;

    std::vector<std::string> names() const;
    static DiscreteArchitecture uniform(int layers, GnnOp op);
};

struct SearchResult {
    std::vector<std::vector<std::vector<double>>> alpha_history;  // epoch -> L x |O|
    std::vector<std::vector<double>> final_alpha;                 // L x |O|
    std::vector<std::vector<double>> final_softmax;
    DiscreteArchitecture architecture;
    std::vector<std::string> warnings;
};

/// One first-order DARTS iteration: a w step on the train batch with alpha
/// frozen, then an alpha step on the val batch with w frozen.
void alternate_step(ModelState& supernet, ArchParams& arch,
                    const std::vector<const Graph*>& batch_train,
                    const std::vector<const Graph*>& batch_val,
                    AdamOptimizer& opt_w, AdamOptimizer& opt_alpha,
                    std::mt19937_64& rng);

/// Phase 1 of the two-phase search: 60/40 split, alternating first-order
/// updates, then argmax discretization.
SearchResult search(const Dataset& dataset, const SearchConfig& cfg);

/// Per-layer argmax; ties break to the lowest operator index with a warning.
DiscreteArchitecture discretize(const ArchParams& arch,
                                std::vector<std::string>* warnings = nullptr);

/// Phase 2: fresh model with only the selected operator per layer, trained on
/// the full training data.
ModelState train_final(const DiscreteArchitecture& arch, const Dataset& train,
                       const SearchConfig& cfg,
                       std::vector<double>* epoch_losses = nullptr);

/// Trains any variant/architecture from scratch; the workhorse behind
/// train_final and the CLI baselines.
ModelState train_model(const ModelConfig& cfg, const std::vector<GnnOp>& arch,
                       const Dataset& train, int epochs, double lr, int batch_size,
                       double weight_decay, std::uint64_t seed,
                       double val_fraction = 0.0,
                       std::vector<double>* epoch_losses = nullptr,
                       const std::function<void(int, const ModelState&)>& on_epoch = {});

DiscreteArchitecture random_architecture(int layers, std::uint64_t seed);

/// Structured text output: per-epoch alpha matrices, final softmax weights,
/// the selected architecture, operator proportions, and the seed.
void save_search_result(const std::string& path, const SearchResult& result,
                        const SearchConfig& cfg);

}  // namespace dartsgt
