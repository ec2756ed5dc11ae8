#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "uqbench/matrix.hpp"

namespace uqbench {

/// T x B x C probability tensor produced by stochastic forward passes.
/// Layout is pass-major: probs[(t*batch + b)*classes + c].
struct McPrediction {
    std::size_t t_passes = 0;
    std::size_t batch = 0;
    std::size_t classes = 0;
    std::vector<double> probs;

    McPrediction() = default;
    McPrediction(std::size_t t, std::size_t b, std::size_t c)
        : t_passes(t), batch(b), classes(c), probs(t * b * c, 0.0) {}

    double& at(std::size_t t, std::size_t b, std::size_t c) {
        return probs[(t * batch + b) * classes + c];
    }
    double at(std::size_t t, std::size_t b, std::size_t c) const {
        return probs[(t * batch + b) * classes + c];
    }

    /// Copy pass t out as a B x C matrix.
    Matrix pass(std::size_t t) const {
        Matrix m(batch, classes);
        const double* src = probs.data() + t * batch * classes;
        std::copy(src, src + batch * classes, m.data.begin());
        return m;
    }

    void set_pass(std::size_t t, const Matrix& m) {
        std::copy(m.data.begin(), m.data.end(), probs.begin() + t * batch * classes);
    }
};

}  // namespace uqbench
