#pragma once

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "uqbench/matrix.hpp"
#include "uqbench/mc_prediction.hpp"

namespace uqbench {

/// 2x2 partition of predictions by correctness x certainty.
/// certain <=> PE strictly below the threshold.
struct UncertaintyConfusion {
    std::size_t cc = 0;  // correct & certain
    std::size_t cu = 0;  // correct & uncertain
    std::size_t ic = 0;  // incorrect & certain
    std::size_t iu = 0;  // incorrect & uncertain
    double threshold = 0.5;

    std::size_t total() const { return cc + cu + ic + iu; }
};

/// Mean predictive entropy of the misclassified (mu_incorrect) and correctly
/// classified (mu_correct) groups. A group with no members yields an absent
/// center and an undefined distance.
struct GroupCenters {
    std::optional<double> mu_incorrect;  // mu1
    std::optional<double> mu_correct;    // mu2
    std::optional<double> distance;      // |mu2 - mu1|
};

/// Entrywise mean over passes; rows remain simplices.
Matrix predictive_mean(const McPrediction& mc);

/// Normalized predictive entropy per row: -sum p*log2(p) / log2(C), in [0, 1].
std::vector<double> predictive_entropy(const Matrix& mean_probs);

/// Argmax per row, ties broken toward the lower class index.
std::vector<int> classify(const Matrix& mean_probs);

UncertaintyConfusion uncertainty_confusion(const std::vector<double>& pe,
                                           const std::vector<int>& predicted,
                                           const std::vector<int>& labels, double threshold);

/// (CC + IU) / total.
double uacc(const UncertaintyConfusion& ucm);

/// Expected calibration error over m_bins equal-width right-closed confidence bins;
/// a sample's confidence is the max entry of its mean-probability row.
double ece(const Matrix& mean_probs, const std::vector<int>& labels, std::size_t m_bins);

double accuracy(const std::vector<int>& predicted, const std::vector<int>& labels);

/// Mann-Whitney AUC for class-1 scores; ties count 0.5. Throws if labels are
/// single-class.
double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

GroupCenters group_centers(const std::vector<double>& pe, const std::vector<int>& predicted,
                           const std::vector<int>& labels);

/// One UAcc per threshold, same order as the grid.
std::vector<std::pair<double, double>> threshold_sweep(const std::vector<double>& pe,
                                                       const std::vector<int>& predicted,
                                                       const std::vector<int>& labels,
                                                       const std::vector<double>& grid);

}  // namespace uqbench
