#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "uqbench/matrix.hpp"
#include "uqbench/mc_prediction.hpp"

namespace uqbench {

struct MlpConfig {
    std::size_t input_dim = 2;
    std::size_t l1 = 64;         // first hidden width
    std::size_t l2 = 16;         // second hidden width
    std::size_t num_classes = 2;
    double p1 = 0.0;             // dropout rate after hidden layer 1, in [0, 1)
    double p2 = 0.0;             // dropout rate after hidden layer 2, in [0, 1)
    std::uint64_t init_seed = 0;

    void validate() const;
};

/// Three-dense-layer classifier: input -> l1 -> l2 -> num_classes,
/// ReLU on hidden layers, softmax head. Weights are [in x out], biases per output.
struct MlpModel {
    MlpConfig config;
    Matrix w1, w2, w3;
    std::vector<double> b1, b2, b3;

    /// Glorot-uniform weights (+-sqrt(6/(fan_in+fan_out))), zero biases, seeded
    /// from config.init_seed.
    static MlpModel init(const MlpConfig& cfg);

    bool all_finite() const;
};

/// Inverted-dropout masks: kept units carry 1/(1-p) so expectation matches the
/// unmasked activation and inference needs no rescaling.
struct DropoutMask {
    std::vector<double> mask1;  // length l1
    std::vector<double> mask2;  // length l2
    std::uint64_t seed = 0;

    static DropoutMask sample(const MlpConfig& cfg, std::uint64_t seed);
};

enum class LossKind { standard_ce, uncertainty_aware };

struct LossSpec {
    LossKind kind = LossKind::standard_ce;
    double beta = 1.0;  // entropy-penalty weight (uncertainty_aware only)
};

struct TrainConfig {
    std::size_t epochs = 150;
    std::size_t batch_size = 32;
    double learning_rate = 0.05;
    LossKind loss_kind = LossKind::standard_ce;
    std::size_t train_mc_passes = 5;  // M, uncertainty_aware only
    double pe_penalty_weight = 1.0;   // beta
    std::uint64_t seed = 0;
};

struct MlpGradients {
    Matrix w1, w2, w3;
    std::vector<double> b1, b2, b3;

    static MlpGradients zeros_like(const MlpModel& m);
    double max_abs() const;
};

struct TrainHistory {
    std::vector<double> train_loss;  // one entry per epoch
    std::vector<double> valid_loss;
};

struct TrainResult {
    MlpModel model;
    TrainHistory history;
};

/// One forward pass. With a mask, dropout is applied after each hidden ReLU;
/// without, the pass is deterministic. Output rows are probability simplices.
Matrix forward(const MlpModel& model, const Matrix& batch,
               const std::optional<DropoutMask>& mask = std::nullopt);

/// T stochastic passes; pass m uses a mask seeded from mix_seed(seed, m).
McPrediction mc_forward(const MlpModel& model, const Matrix& batch, std::size_t t_passes,
                        std::uint64_t seed);

/// Mean over the batch of -log p[b, labels[b]], probabilities clamped to [1e-12, 1].
double cross_entropy_loss(const Matrix& probs, const std::vector<int>& labels);

/// Binary uncertainty-aware loss: BCE on the pass-averaged class-1 probability
/// plus (beta/M) * sum over passes of the per-pass normalized predictive entropy.
/// beta = M recovers the plain over-passes entropy sum.
double uncertainty_aware_loss(const McPrediction& pass_probs, const std::vector<int>& labels,
                              double beta);

/// Loss of `spec` kind at the current parameters with the given masks held fixed.
/// standard_ce uses masks.size() <= 1 (empty = no dropout); uncertainty_aware
/// runs one pass per mask (M = masks.size() >= 1).
double loss_value(const MlpModel& model, const Matrix& batch, const std::vector<int>& labels,
                  const LossSpec& spec, const std::vector<DropoutMask>& masks);

/// Exact analytic gradient of loss_value at the current parameters.
MlpGradients backward(const MlpModel& model, const Matrix& batch, const std::vector<int>& labels,
                      const LossSpec& spec, const std::vector<DropoutMask>& masks);

/// Central finite differences of loss_value, step h per parameter. Test oracle.
MlpGradients numeric_gradient(const MlpModel& model, const Matrix& batch,
                              const std::vector<int>& labels, const LossSpec& spec,
                              const std::vector<DropoutMask>& masks, double h);

/// Mini-batch SGD. Deterministic given (model.config.init_seed, cfg.seed); the
/// shuffle order and every dropout mask are reseeded per epoch/batch from cfg.seed.
TrainResult train(const MlpModel& model, const Matrix& train_x, const std::vector<int>& train_y,
                  const Matrix& valid_x, const std::vector<int>& valid_y, const TrainConfig& cfg);

}  // namespace uqbench
