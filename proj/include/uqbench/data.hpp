#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "uqbench/matrix.hpp"

namespace uqbench {

struct Dataset {
    Matrix features;              // N x D
    std::vector<int> labels;      // values in {0, ..., C-1}
    std::vector<std::string> feature_names;  // empty when unknown
    std::string source_tag;

    std::size_t size() const { return features.rows; }
    std::size_t dim() const { return features.cols; }
    std::size_t num_classes() const;
};

struct SplitSpec {
    double test_fraction = 0.2;
    std::uint64_t seed = 0;
    bool stratified = true;
};

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

struct PcaModel {
    std::vector<double> mean;        // length D
    Matrix components;               // k x D, orthonormal rows
    std::vector<double> explained_variances;  // length k, nonincreasing
};

/// Two concentric rings: n/2 points on the unit circle (label 0) at equally
/// spaced angles, n/2 on the radius-`factor` circle (label 1), plus isotropic
/// Gaussian noise of the given std-dev on each coordinate.
Dataset make_circles(std::size_t n, double noise, double factor, std::uint64_t seed);

/// Comma-separated, optional single header row, decimal-point reals. The label
/// column is selected by header name, or by zero-based index when the string
/// is a plain integer (name match wins). Labels map to 0..C-1 in
/// first-appearance order; the mapping is recorded in the source tag.
Dataset load_csv(const std::string& path, const std::string& label_column, bool has_header);

void save_csv(const Dataset& ds, const std::string& path);

struct Standardizer {
    std::vector<double> means;
    std::vector<double> stds;  // floored at 1e-12
};

Standardizer standardize_fit(const Dataset& train);
Dataset standardize_apply(const Dataset& ds, const Standardizer& s);

/// Top-k principal components of the feature covariance, via cyclic Jacobi
/// eigendecomposition of the symmetric covariance matrix.
PcaModel pca_fit(const Dataset& ds, std::size_t k);
Dataset pca_transform(const Dataset& ds, const PcaModel& model);

/// Symmetric eigendecomposition helper (cyclic Jacobi, off-diagonal Frobenius
/// norm < 1e-10 at convergence). Returns eigenvalues descending with matching
/// eigenvectors as rows.
void jacobi_eigen_symmetric(const Matrix& sym, std::vector<double>& eigenvalues,
                            Matrix& eigenvectors_rows);

SplitIndices split_indices(const std::vector<int>& labels, const SplitSpec& spec);
std::pair<Dataset, Dataset> split(const Dataset& ds, const SplitSpec& spec);

Dataset subset(const Dataset& ds, const std::vector<std::size_t>& indices);

}  // namespace uqbench
