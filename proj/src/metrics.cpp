#include "uqbench/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace uqbench {

Matrix predictive_mean(const McPrediction& mc) {
    if (mc.t_passes == 0) throw std::invalid_argument("predictive_mean: needs >= 1 pass");
    Matrix mean(mc.batch, mc.classes);
    for (std::size_t t = 0; t < mc.t_passes; ++t)
        for (std::size_t b = 0; b < mc.batch; ++b)
            for (std::size_t c = 0; c < mc.classes; ++c) mean(b, c) += mc.at(t, b, c);
    for (double& v : mean.data) v /= static_cast<double>(mc.t_passes);
    return mean;
}

std::vector<double> predictive_entropy(const Matrix& mean_probs) {
    const double norm = std::log2(static_cast<double>(mean_probs.cols));
    std::vector<double> pe(mean_probs.rows);
    for (std::size_t b = 0; b < mean_probs.rows; ++b) {
        const double* p = mean_probs.row_ptr(b);
        double h = 0.0;
        for (std::size_t c = 0; c < mean_probs.cols; ++c)
            if (p[c] > 0.0) h -= p[c] * std::log2(p[c]);
        pe[b] = std::min(1.0, std::max(0.0, h / norm));
    }
    return pe;
}

std::vector<int> classify(const Matrix& mean_probs) {
    std::vector<int> pred(mean_probs.rows);
    for (std::size_t b = 0; b < mean_probs.rows; ++b) {
        const double* p = mean_probs.row_ptr(b);
        std::size_t best = 0;
        for (std::size_t c = 1; c < mean_probs.cols; ++c)
            if (p[c] > p[best]) best = c;
        pred[b] = static_cast<int>(best);
    }
    return pred;
}

UncertaintyConfusion uncertainty_confusion(const std::vector<double>& pe,
                                           const std::vector<int>& predicted,
                                           const std::vector<int>& labels, double threshold) {
    if (pe.size() != predicted.size() || pe.size() != labels.size())
        throw std::invalid_argument("uncertainty_confusion: length mismatch");
    if (threshold < 0.0 || threshold > 1.0)
        throw std::invalid_argument("uncertainty_confusion: threshold must lie in [0, 1]");
    UncertaintyConfusion ucm;
    ucm.threshold = threshold;
    for (std::size_t i = 0; i < pe.size(); ++i) {
        const bool correct = predicted[i] == labels[i];
        const bool certain = pe[i] < threshold;
        if (correct && certain) ++ucm.cc;
        else if (correct) ++ucm.cu;
        else if (certain) ++ucm.ic;
        else ++ucm.iu;
    }
    return ucm;
}

double uacc(const UncertaintyConfusion& ucm) {
    const std::size_t n = ucm.total();
    if (n == 0) throw std::invalid_argument("uacc: empty confusion matrix");
    return static_cast<double>(ucm.cc + ucm.iu) / static_cast<double>(n);
}

double ece(const Matrix& mean_probs, const std::vector<int>& labels, std::size_t m_bins) {
    if (m_bins < 1) throw std::invalid_argument("ece: m_bins must be >= 1");
    if (labels.size() != mean_probs.rows) throw std::invalid_argument("ece: length mismatch");
    const std::size_t n = mean_probs.rows;
    if (n == 0) return 0.0;

    std::vector<std::size_t> count(m_bins, 0);
    std::vector<double> conf_sum(m_bins, 0.0);
    std::vector<std::size_t> correct(m_bins, 0);
    const std::vector<int> pred = classify(mean_probs);
    for (std::size_t i = 0; i < n; ++i) {
        const double* p = mean_probs.row_ptr(i);
        const double conf = *std::max_element(p, p + mean_probs.cols);
        // right-closed bins ((m-1)/M, m/M]; conf == 0 falls into the first bin
        std::size_t bin = static_cast<std::size_t>(
            std::ceil(conf * static_cast<double>(m_bins)));
        if (bin == 0) bin = 1;
        bin = std::min(bin, m_bins) - 1;
        ++count[bin];
        conf_sum[bin] += conf;
        if (pred[i] == labels[i]) ++correct[bin];
    }
    double e = 0.0;
    for (std::size_t m = 0; m < m_bins; ++m) {
        if (count[m] == 0) continue;
        const double acc = static_cast<double>(correct[m]) / static_cast<double>(count[m]);
        const double conf = conf_sum[m] / static_cast<double>(count[m]);
        e += (static_cast<double>(count[m]) / static_cast<double>(n)) * std::abs(acc - conf);
    }
    return e;
}

double accuracy(const std::vector<int>& predicted, const std::vector<int>& labels) {
    if (predicted.size() != labels.size()) throw std::invalid_argument("accuracy: length mismatch");
    if (predicted.empty()) throw std::invalid_argument("accuracy: empty input");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i)
        if (predicted[i] == labels[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("roc_auc: length mismatch");
    const std::size_t n = scores.size();
    std::size_t n_pos = 0;
    for (int y : labels) n_pos += (y == 1);
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw std::invalid_argument("roc_auc: AUC undefined for single-class labels");

    // Rank-sum with midranks for ties.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&scores](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double midrank = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based
        for (std::size_t k = i; k <= j; ++k)
            if (labels[order[k]] == 1) rank_sum_pos += midrank;
        i = j + 1;
    }
    const double u = rank_sum_pos -
                     static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

GroupCenters group_centers(const std::vector<double>& pe, const std::vector<int>& predicted,
                           const std::vector<int>& labels) {
    if (pe.size() != predicted.size() || pe.size() != labels.size())
        throw std::invalid_argument("group_centers: length mismatch");
    double sum_inc = 0.0, sum_cor = 0.0;
    std::size_t n_inc = 0, n_cor = 0;
    for (std::size_t i = 0; i < pe.size(); ++i) {
        if (predicted[i] == labels[i]) {
            sum_cor += pe[i];
            ++n_cor;
        } else {
            sum_inc += pe[i];
            ++n_inc;
        }
    }
    GroupCenters gc;
    if (n_inc > 0) gc.mu_incorrect = sum_inc / static_cast<double>(n_inc);
    if (n_cor > 0) gc.mu_correct = sum_cor / static_cast<double>(n_cor);
    if (gc.mu_incorrect && gc.mu_correct)
        gc.distance = std::abs(*gc.mu_correct - *gc.mu_incorrect);
    return gc;
}

std::vector<std::pair<double, double>> threshold_sweep(const std::vector<double>& pe,
                                                       const std::vector<int>& predicted,
                                                       const std::vector<int>& labels,
                                                       const std::vector<double>& grid) {
    if (grid.empty()) throw std::invalid_argument("threshold_sweep: empty grid");
    std::vector<std::pair<double, double>> out;
    out.reserve(grid.size());
    for (double t : grid)
        out.emplace_back(t, uacc(uncertainty_confusion(pe, predicted, labels, t)));
    return out;
}

}  // namespace uqbench
