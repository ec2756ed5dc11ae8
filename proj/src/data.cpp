#include "uqbench/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "uqbench/rng.hpp"

namespace uqbench {

std::size_t Dataset::num_classes() const {
    int mx = -1;
    for (int y : labels) mx = std::max(mx, y);
    return static_cast<std::size_t>(mx + 1);
}

Dataset make_circles(std::size_t n, double noise, double factor, std::uint64_t seed) {
    if (n < 2 || n % 2 != 0) throw std::invalid_argument("make_circles: n must be even and >= 2");
    if (factor <= 0.0 || factor >= 1.0)
        throw std::invalid_argument("make_circles: factor must lie in (0, 1)");
    if (noise < 0.0) throw std::invalid_argument("make_circles: noise must be >= 0");

    const std::size_t half = n / 2;
    Dataset ds;
    ds.features = Matrix(n, 2);
    ds.labels.resize(n);
    Rng rng(seed);
    const double two_pi = 6.283185307179586476925286766559;
    for (std::size_t i = 0; i < n; ++i) {
        const bool inner = i >= half;
        const std::size_t j = inner ? i - half : i;
        const double angle = two_pi * static_cast<double>(j) / static_cast<double>(half);
        const double r = inner ? factor : 1.0;
        ds.features(i, 0) = r * std::cos(angle) + (noise > 0.0 ? rng.normal(0.0, noise) : 0.0);
        ds.features(i, 1) = r * std::sin(angle) + (noise > 0.0 ? rng.normal(0.0, noise) : 0.0);
        ds.labels[i] = inner ? 1 : 0;
    }
    ds.feature_names = {"x1", "x2"};
    char tag[128];
    std::snprintf(tag, sizeof(tag), "circles(n=%zu,noise=%g,factor=%g,seed=%llu)", n, noise,
                  factor, static_cast<unsigned long long>(seed));
    ds.source_tag = tag;
    return ds;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            cells.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    cells.push_back(cur);
    return cells;
}

double parse_cell(const std::string& cell, std::size_t file_row, std::size_t col) {
    const char* begin = cell.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin || *end != '\0') {
        std::ostringstream os;
        os << "load_csv: non-numeric cell at row " << file_row << ", column " << col + 1;
        throw std::runtime_error(os.str());
    }
    return v;
}

}  // namespace

Dataset load_csv(const std::string& path, const std::string& label_column, bool has_header) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_csv: cannot open " + path);

    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() && in.peek() == std::char_traits<char>::eof()) break;
        rows.push_back(split_line(line));
    }
    if (rows.empty()) throw std::runtime_error("load_csv: empty file " + path);

    std::vector<std::string> header;
    std::size_t first_data = 0;
    if (has_header) {
        header = rows[0];
        first_data = 1;
        if (rows.size() == 1) throw std::runtime_error("load_csv: header-only file " + path);
    }
    const std::size_t n_cols = rows[first_data].size();
    if (n_cols < 2) throw std::runtime_error("load_csv: need at least one feature and a label");
    if (has_header && header.size() != n_cols)
        throw std::runtime_error("load_csv: header width differs from data width");

    // Resolve the label column: header name first, then numeric index.
    std::size_t label_idx = n_cols;
    if (has_header) {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == label_column) {
                label_idx = i;
                break;
            }
    }
    if (label_idx == n_cols) {
        char* end = nullptr;
        const long idx = std::strtol(label_column.c_str(), &end, 10);
        if (end != label_column.c_str() && *end == '\0' && idx >= 0 &&
            static_cast<std::size_t>(idx) < n_cols)
            label_idx = static_cast<std::size_t>(idx);
    }
    if (label_idx == n_cols)
        throw std::runtime_error("load_csv: label column '" + label_column + "' not found");

    const std::size_t n = rows.size() - first_data;
    Dataset ds;
    ds.features = Matrix(n, n_cols - 1);
    ds.labels.resize(n);
    std::vector<std::string> label_order;  // first-appearance mapping

    for (std::size_t r = 0; r < n; ++r) {
        const auto& cells = rows[r + first_data];
        const std::size_t file_row = r + first_data + 1;  // 1-based, counting the header
        if (cells.size() != n_cols) {
            std::ostringstream os;
            os << "load_csv: ragged row " << file_row << " (got " << cells.size() << " cells, expected "
               << n_cols << ")";
            throw std::runtime_error(os.str());
        }
        std::size_t f = 0;
        for (std::size_t c = 0; c < n_cols; ++c) {
            if (c == label_idx) continue;
            ds.features(r, f++) = parse_cell(cells[c], file_row, c);
        }
        const std::string& lab = cells[label_idx];
        auto it = std::find(label_order.begin(), label_order.end(), lab);
        if (it == label_order.end()) {
            label_order.push_back(lab);
            ds.labels[r] = static_cast<int>(label_order.size() - 1);
        } else {
            ds.labels[r] = static_cast<int>(it - label_order.begin());
        }
    }

    if (has_header)
        for (std::size_t c = 0; c < n_cols; ++c)
            if (c != label_idx) ds.feature_names.push_back(header[c]);

    std::ostringstream tag;
    tag << "csv:" << path << ";labels=";
    for (std::size_t i = 0; i < label_order.size(); ++i)
        tag << (i ? "," : "") << label_order[i] << "->" << i;
    ds.source_tag = tag.str();
    return ds;
}

void save_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_csv: cannot open " + path + " for writing");
    for (std::size_t c = 0; c < ds.dim(); ++c) {
        const std::string name =
            c < ds.feature_names.size() ? ds.feature_names[c] : "f" + std::to_string(c);
        out << name << ",";
    }
    out << "label\n";
    char buf[64];
    for (std::size_t r = 0; r < ds.size(); ++r) {
        for (std::size_t c = 0; c < ds.dim(); ++c) {
            std::snprintf(buf, sizeof(buf), "%.17g", ds.features(r, c));
            out << buf << ",";
        }
        out << ds.labels[r] << "\n";
    }
    if (!out) throw std::runtime_error("save_csv: write failed for " + path);
}

Standardizer standardize_fit(const Dataset& train) {
    if (train.size() == 0) throw std::invalid_argument("standardize_fit: empty dataset");
    const std::size_t n = train.size(), d = train.dim();
    Standardizer s;
    s.means.assign(d, 0.0);
    s.stds.assign(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) s.means[j] += train.features(i, j);
    for (double& m : s.means) m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            const double c = train.features(i, j) - s.means[j];
            s.stds[j] += c * c;
        }
    for (double& v : s.stds) v = std::max(std::sqrt(v / static_cast<double>(n)), 1e-12);
    return s;
}

Dataset standardize_apply(const Dataset& ds, const Standardizer& s) {
    if (ds.dim() != s.means.size())
        throw std::invalid_argument("standardize_apply: dimension mismatch");
    Dataset out = ds;
    for (std::size_t i = 0; i < ds.size(); ++i)
        for (std::size_t j = 0; j < ds.dim(); ++j)
            out.features(i, j) = (ds.features(i, j) - s.means[j]) / s.stds[j];
    out.source_tag += ";standardized";
    return out;
}

void jacobi_eigen_symmetric(const Matrix& sym, std::vector<double>& eigenvalues,
                            Matrix& eigenvectors_rows) {
    if (sym.rows != sym.cols) throw std::invalid_argument("jacobi: matrix must be square");
    const std::size_t d = sym.rows;
    Matrix a = sym;
    Matrix v(d, d);
    for (std::size_t i = 0; i < d; ++i) v(i, i) = 1.0;

    auto off_norm = [&a, d]() {
        double s = 0.0;
        for (std::size_t p = 0; p < d; ++p)
            for (std::size_t q = p + 1; q < d; ++q) s += 2.0 * a(p, q) * a(p, q);
        return std::sqrt(s);
    };
    double fro = 0.0;
    for (double x : a.data) fro += x * x;
    fro = std::sqrt(fro);
    const double tol = std::max(1e-10, 1e-15 * fro);

    for (int sweep = 0; sweep < 100 && off_norm() >= tol; ++sweep) {
        for (std::size_t p = 0; p < d; ++p) {
            for (std::size_t q = p + 1; q < d; ++q) {
                if (a(p, q) == 0.0) continue;
                const double tau = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                for (std::size_t k = 0; k < d; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < d; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < d; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<std::size_t> order(d);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&a](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });
    eigenvalues.resize(d);
    eigenvectors_rows = Matrix(d, d);
    for (std::size_t i = 0; i < d; ++i) {
        eigenvalues[i] = a(order[i], order[i]);
        for (std::size_t k = 0; k < d; ++k) eigenvectors_rows(i, k) = v(k, order[i]);
    }
}

PcaModel pca_fit(const Dataset& ds, std::size_t k) {
    const std::size_t n = ds.size(), d = ds.dim();
    if (k < 1 || k > std::min(n, d))
        throw std::invalid_argument("pca_fit: k must lie in [1, min(N, D)]");

    PcaModel model;
    model.mean.assign(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) model.mean[j] += ds.features(i, j);
    for (double& m : model.mean) m /= static_cast<double>(n);

    Matrix cov(d, d);
    if (n > 1) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t p = 0; p < d; ++p) {
                const double cp = ds.features(i, p) - model.mean[p];
                for (std::size_t q = p; q < d; ++q)
                    cov(p, q) += cp * (ds.features(i, q) - model.mean[q]);
            }
        }
        for (std::size_t p = 0; p < d; ++p)
            for (std::size_t q = p; q < d; ++q) {
                cov(p, q) /= static_cast<double>(n - 1);
                cov(q, p) = cov(p, q);
            }
    }

    std::vector<double> eigenvalues;
    Matrix vectors;
    jacobi_eigen_symmetric(cov, eigenvalues, vectors);
    model.components = Matrix(k, d);
    model.explained_variances.assign(eigenvalues.begin(), eigenvalues.begin() + k);
    for (std::size_t i = 0; i < k; ++i)
        std::copy(vectors.row_ptr(i), vectors.row_ptr(i) + d, model.components.row_ptr(i));
    return model;
}

Dataset pca_transform(const Dataset& ds, const PcaModel& model) {
    if (ds.dim() != model.mean.size())
        throw std::invalid_argument("pca_transform: dimension mismatch");
    const std::size_t k = model.components.rows;
    Dataset out;
    out.labels = ds.labels;
    out.features = Matrix(ds.size(), k);
    for (std::size_t i = 0; i < ds.size(); ++i)
        for (std::size_t c = 0; c < k; ++c) {
            double s = 0.0;
            for (std::size_t j = 0; j < ds.dim(); ++j)
                s += (ds.features(i, j) - model.mean[j]) * model.components(c, j);
            out.features(i, c) = s;
        }
    for (std::size_t c = 0; c < k; ++c) out.feature_names.push_back("pc" + std::to_string(c));
    out.source_tag = ds.source_tag + ";pca(k=" + std::to_string(k) + ")";
    return out;
}

SplitIndices split_indices(const std::vector<int>& labels, const SplitSpec& spec) {
    if (spec.test_fraction <= 0.0 || spec.test_fraction >= 1.0)
        throw std::invalid_argument("split: test_fraction must lie in (0, 1)");
    const std::size_t n = labels.size();
    if (n < 2) throw std::invalid_argument("split: need at least 2 samples");

    SplitIndices out;
    if (spec.stratified) {
        int mx = 0;
        for (int y : labels) mx = std::max(mx, y);
        for (int cls = 0; cls <= mx; ++cls) {
            std::vector<std::size_t> idx;
            for (std::size_t i = 0; i < n; ++i)
                if (labels[i] == cls) idx.push_back(i);
            if (idx.empty()) continue;
            Rng rng(mix_seed(spec.seed, static_cast<std::uint64_t>(cls)));
            rng.shuffle(idx);
            const std::size_t n_test = static_cast<std::size_t>(
                std::lround(static_cast<double>(idx.size()) * spec.test_fraction));
            for (std::size_t i = 0; i < idx.size(); ++i)
                (i < n_test ? out.test : out.train).push_back(idx[i]);
        }
    } else {
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        Rng rng(spec.seed);
        rng.shuffle(idx);
        const std::size_t n_test = static_cast<std::size_t>(
            std::lround(static_cast<double>(n) * spec.test_fraction));
        out.test.assign(idx.begin(), idx.begin() + std::min(n_test, n));
        out.train.assign(idx.begin() + std::min(n_test, n), idx.end());
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.test.begin(), out.test.end());
    if (out.train.empty() || out.test.empty())
        throw std::invalid_argument("split: test_fraction leaves one side empty");
    return out;
}

Dataset subset(const Dataset& ds, const std::vector<std::size_t>& indices) {
    Dataset out;
    out.feature_names = ds.feature_names;
    out.source_tag = ds.source_tag;
    out.features = Matrix(indices.size(), ds.dim());
    out.labels.resize(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        std::copy(ds.features.row_ptr(indices[i]), ds.features.row_ptr(indices[i]) + ds.dim(),
                  out.features.row_ptr(i));
        out.labels[i] = ds.labels[indices[i]];
    }
    return out;
}

std::pair<Dataset, Dataset> split(const Dataset& ds, const SplitSpec& spec) {
    SplitIndices idx = split_indices(ds.labels, spec);
    return {subset(ds, idx.train), subset(ds, idx.test)};
}

}  // namespace uqbench
