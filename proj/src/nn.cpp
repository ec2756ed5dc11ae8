#include "uqbench/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "uqbench/rng.hpp"

namespace uqbench {

namespace {

constexpr double kProbFloor = 1e-12;

double clamp_prob(double p) { return std::min(std::max(p, kProbFloor), 1.0); }

// d/dp log(clamp(p)): zero where the clamp is active.
double dlog_clamped(double p) {
    if (p < kProbFloor || p > 1.0) return 0.0;
    return 1.0 / clamp_prob(p);
}

constexpr std::uint64_t kTagShuffle = 0x5u;
constexpr std::uint64_t kTagMask = 0x6u;
constexpr std::uint64_t kTagValid = 0x7u;

void check_labels(const std::vector<int>& labels, std::size_t batch, std::size_t classes,
                  const char* who) {
    if (labels.size() != batch) throw std::invalid_argument(std::string(who) + ": label count != batch rows");
    for (int y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= classes)
            throw std::invalid_argument(std::string(who) + ": label out of range");
}

struct PassCache {
    Matrix pre1, h1d, pre2, h2d, probs;
};

void affine(const Matrix& x, const Matrix& w, const std::vector<double>& b, Matrix& out) {
    out = matmul(x, w);
    for (std::size_t i = 0; i < out.rows; ++i) {
        double* oi = out.row_ptr(i);
        for (std::size_t j = 0; j < out.cols; ++j) oi[j] += b[j];
    }
}

void relu_mask(const Matrix& pre, const std::vector<double>* mask, Matrix& out) {
    out = Matrix(pre.rows, pre.cols);
    for (std::size_t i = 0; i < pre.rows; ++i) {
        const double* pi = pre.row_ptr(i);
        double* oi = out.row_ptr(i);
        for (std::size_t j = 0; j < pre.cols; ++j) {
            double v = pi[j] > 0.0 ? pi[j] : 0.0;
            oi[j] = mask ? v * (*mask)[j] : v;
        }
    }
}

void softmax_rows(Matrix& m) {
    for (std::size_t i = 0; i < m.rows; ++i) {
        double* r = m.row_ptr(i);
        double mx = r[0];
        for (std::size_t j = 1; j < m.cols; ++j) mx = std::max(mx, r[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < m.cols; ++j) {
            r[j] = std::exp(r[j] - mx);
            sum += r[j];
        }
        for (std::size_t j = 0; j < m.cols; ++j) r[j] /= sum;
    }
}

PassCache forward_detail(const MlpModel& model, const Matrix& batch, const DropoutMask* mask) {
    const MlpConfig& cfg = model.config;
    if (batch.cols != cfg.input_dim) throw std::invalid_argument("forward: batch.cols != input_dim");
    if (mask && (mask->mask1.size() != cfg.l1 || mask->mask2.size() != cfg.l2))
        throw std::invalid_argument("forward: mask lengths do not match hidden widths");

    PassCache c;
    affine(batch, model.w1, model.b1, c.pre1);
    relu_mask(c.pre1, mask ? &mask->mask1 : nullptr, c.h1d);
    affine(c.h1d, model.w2, model.b2, c.pre2);
    relu_mask(c.pre2, mask ? &mask->mask2 : nullptr, c.h2d);
    affine(c.h2d, model.w3, model.b3, c.probs);
    softmax_rows(c.probs);
    return c;
}

// dL/dz from dL/dp through the softmax Jacobian, in place on dp.
void softmax_backprop(const Matrix& probs, Matrix& dp) {
    for (std::size_t i = 0; i < probs.rows; ++i) {
        const double* p = probs.row_ptr(i);
        double* g = dp.row_ptr(i);
        double dot = 0.0;
        for (std::size_t j = 0; j < probs.cols; ++j) dot += g[j] * p[j];
        for (std::size_t j = 0; j < probs.cols; ++j) g[j] = p[j] * (g[j] - dot);
    }
}

void add_colsum(const Matrix& m, std::vector<double>& out) {
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double* r = m.row_ptr(i);
        for (std::size_t j = 0; j < m.cols; ++j) out[j] += r[j];
    }
}

void accumulate(Matrix& acc, const Matrix& g) {
    for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += g.data[i];
}

// Backprop one pass: dp is dL/d(probs of this pass); gradients are accumulated.
void backprop_pass(const MlpModel& model, const Matrix& batch, const PassCache& c,
                   const DropoutMask* mask, Matrix dp, MlpGradients& grads) {
    softmax_backprop(c.probs, dp);  // dp is now dL/dlogits

    accumulate(grads.w3, matmul_at_b(c.h2d, dp));
    add_colsum(dp, grads.b3);
    Matrix dh2 = matmul_a_bt(dp, model.w3);

    for (std::size_t i = 0; i < dh2.rows; ++i) {
        double* r = dh2.row_ptr(i);
        const double* pre = c.pre2.row_ptr(i);
        for (std::size_t j = 0; j < dh2.cols; ++j) {
            double m = mask ? mask->mask2[j] : 1.0;
            r[j] = (pre[j] > 0.0) ? r[j] * m : 0.0;
        }
    }
    accumulate(grads.w2, matmul_at_b(c.h1d, dh2));
    add_colsum(dh2, grads.b2);
    Matrix dh1 = matmul_a_bt(dh2, model.w2);

    for (std::size_t i = 0; i < dh1.rows; ++i) {
        double* r = dh1.row_ptr(i);
        const double* pre = c.pre1.row_ptr(i);
        for (std::size_t j = 0; j < dh1.cols; ++j) {
            double m = mask ? mask->mask1[j] : 1.0;
            r[j] = (pre[j] > 0.0) ? r[j] * m : 0.0;
        }
    }
    accumulate(grads.w1, matmul_at_b(batch, dh1));
    add_colsum(dh1, grads.b1);
}

// Normalized predictive entropy of one probability row and its gradient.
double pe_row(const double* p, std::size_t classes) {
    const double norm = std::log2(static_cast<double>(classes));
    double h = 0.0;
    for (std::size_t c = 0; c < classes; ++c)
        h -= p[c] * std::log2(clamp_prob(p[c]));
    return h / norm;
}

void pe_row_grad(const double* p, std::size_t classes, double scale, double* out) {
    const double ln2 = std::log(2.0);
    const double norm = std::log2(static_cast<double>(classes));
    for (std::size_t c = 0; c < classes; ++c) {
        double g = std::log2(clamp_prob(p[c])) + p[c] * dlog_clamped(p[c]) / ln2;
        out[c] += scale * (-g / norm);
    }
}

struct LossAndGrads {
    double loss = 0.0;
    MlpGradients grads;
};

LossAndGrads backward_with_loss(const MlpModel& model, const Matrix& batch,
                                const std::vector<int>& labels, const LossSpec& spec,
                                const std::vector<DropoutMask>& masks) {
    const std::size_t B = batch.rows;
    const std::size_t C = model.config.num_classes;
    check_labels(labels, B, C, "backward");

    LossAndGrads out;
    out.grads = MlpGradients::zeros_like(model);

    if (spec.kind == LossKind::standard_ce) {
        if (masks.size() > 1)
            throw std::invalid_argument("backward: standard_ce takes at most one mask");
        const DropoutMask* mask = masks.empty() ? nullptr : &masks[0];
        PassCache c = forward_detail(model, batch, mask);

        Matrix dp(B, C);
        for (std::size_t b = 0; b < B; ++b) {
            double p = c.probs(b, labels[b]);
            out.loss -= std::log(clamp_prob(p));
            dp(b, labels[b]) = -dlog_clamped(p) / static_cast<double>(B);
        }
        out.loss /= static_cast<double>(B);
        backprop_pass(model, batch, c, mask, std::move(dp), out.grads);
        return out;
    }

    // uncertainty_aware
    if (C != 2) throw std::invalid_argument("backward: uncertainty_aware loss is binary-only");
    if (masks.empty()) throw std::invalid_argument("backward: uncertainty_aware needs >= 1 mask");
    const std::size_t M = masks.size();

    std::vector<PassCache> caches;
    caches.reserve(M);
    for (const auto& mk : masks) caches.push_back(forward_detail(model, batch, &mk));

    std::vector<double> mu(B, 0.0);  // pass-averaged probability of class 1
    for (std::size_t m = 0; m < M; ++m)
        for (std::size_t b = 0; b < B; ++b) mu[b] += caches[m].probs(b, 1);
    for (double& v : mu) v /= static_cast<double>(M);

    double loss = 0.0;
    std::vector<double> dmu(B, 0.0);
    for (std::size_t b = 0; b < B; ++b) {
        const double y = static_cast<double>(labels[b]);
        loss -= y * std::log(clamp_prob(mu[b])) + (1.0 - y) * std::log(clamp_prob(1.0 - mu[b]));
        dmu[b] = (-y * dlog_clamped(mu[b]) + (1.0 - y) * dlog_clamped(1.0 - mu[b])) /
                 static_cast<double>(B);
    }

    const double pass_w = spec.beta / static_cast<double>(M);
    for (std::size_t m = 0; m < M; ++m) {
        Matrix dp(B, C);
        for (std::size_t b = 0; b < B; ++b) {
            const double* p = caches[m].probs.row_ptr(b);
            loss += pass_w * pe_row(p, C);
            dp(b, 1) += dmu[b] / static_cast<double>(M);
            pe_row_grad(p, C, pass_w / static_cast<double>(B), dp.row_ptr(b));
        }
        backprop_pass(model, batch, caches[m], &masks[m], std::move(dp), out.grads);
    }
    out.loss = loss / static_cast<double>(B);
    return out;
}

}  // namespace

void MlpConfig::validate() const {
    if (l1 < 1 || l2 < 1) throw std::invalid_argument("MlpConfig: hidden widths must be >= 1");
    if (num_classes < 2) throw std::invalid_argument("MlpConfig: num_classes must be >= 2");
    if (p1 < 0.0 || p1 >= 1.0 || p2 < 0.0 || p2 >= 1.0)
        throw std::invalid_argument("MlpConfig: dropout rates must lie in [0, 1)");
    if (input_dim < 1) throw std::invalid_argument("MlpConfig: input_dim must be >= 1");
}

MlpModel MlpModel::init(const MlpConfig& cfg) {
    cfg.validate();
    MlpModel m;
    m.config = cfg;
    Rng rng(cfg.init_seed);
    auto init_layer = [&rng](Matrix& w, std::vector<double>& b, std::size_t in, std::size_t out) {
        w = Matrix(in, out);
        const double lim = std::sqrt(6.0 / static_cast<double>(in + out));
        for (double& v : w.data) v = rng.uniform(-lim, lim);
        b.assign(out, 0.0);
    };
    init_layer(m.w1, m.b1, cfg.input_dim, cfg.l1);
    init_layer(m.w2, m.b2, cfg.l1, cfg.l2);
    init_layer(m.w3, m.b3, cfg.l2, cfg.num_classes);
    return m;
}

bool MlpModel::all_finite() const {
    auto vec_finite = [](const std::vector<double>& v) {
        return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
    };
    return w1.all_finite() && w2.all_finite() && w3.all_finite() && vec_finite(b1) &&
           vec_finite(b2) && vec_finite(b3);
}

DropoutMask DropoutMask::sample(const MlpConfig& cfg, std::uint64_t seed) {
    DropoutMask mask;
    mask.seed = seed;
    Rng rng(seed);
    mask.mask1.resize(cfg.l1);
    mask.mask2.resize(cfg.l2);
    const double s1 = 1.0 / (1.0 - cfg.p1);
    const double s2 = 1.0 / (1.0 - cfg.p2);
    for (double& v : mask.mask1) v = rng.uniform() >= cfg.p1 ? s1 : 0.0;
    for (double& v : mask.mask2) v = rng.uniform() >= cfg.p2 ? s2 : 0.0;
    return mask;
}

MlpGradients MlpGradients::zeros_like(const MlpModel& m) {
    MlpGradients g;
    g.w1 = Matrix(m.w1.rows, m.w1.cols);
    g.w2 = Matrix(m.w2.rows, m.w2.cols);
    g.w3 = Matrix(m.w3.rows, m.w3.cols);
    g.b1.assign(m.b1.size(), 0.0);
    g.b2.assign(m.b2.size(), 0.0);
    g.b3.assign(m.b3.size(), 0.0);
    return g;
}

double MlpGradients::max_abs() const {
    double mx = 0.0;
    auto scan = [&mx](const std::vector<double>& v) {
        for (double x : v) mx = std::max(mx, std::abs(x));
    };
    scan(w1.data);
    scan(w2.data);
    scan(w3.data);
    scan(b1);
    scan(b2);
    scan(b3);
    return mx;
}

Matrix forward(const MlpModel& model, const Matrix& batch, const std::optional<DropoutMask>& mask) {
    return forward_detail(model, batch, mask ? &*mask : nullptr).probs;
}

McPrediction mc_forward(const MlpModel& model, const Matrix& batch, std::size_t t_passes,
                        std::uint64_t seed) {
    if (t_passes == 0) throw std::invalid_argument("mc_forward: t_passes must be >= 1");
    McPrediction mc(t_passes, batch.rows, model.config.num_classes);
    for (std::size_t t = 0; t < t_passes; ++t) {
        DropoutMask mask = DropoutMask::sample(model.config, mix_seed(seed, t));
        mc.set_pass(t, forward(model, batch, mask));
    }
    return mc;
}

double cross_entropy_loss(const Matrix& probs, const std::vector<int>& labels) {
    check_labels(labels, probs.rows, probs.cols, "cross_entropy_loss");
    double loss = 0.0;
    for (std::size_t b = 0; b < probs.rows; ++b)
        loss -= std::log(clamp_prob(probs(b, labels[b])));
    return loss / static_cast<double>(probs.rows);
}

double uncertainty_aware_loss(const McPrediction& pass_probs, const std::vector<int>& labels,
                              double beta) {
    if (pass_probs.classes != 2)
        throw std::invalid_argument("uncertainty_aware_loss: binary classification only");
    if (pass_probs.t_passes == 0)
        throw std::invalid_argument("uncertainty_aware_loss: needs >= 1 pass");
    const std::size_t M = pass_probs.t_passes;
    const std::size_t B = pass_probs.batch;
    check_labels(labels, B, 2, "uncertainty_aware_loss");

    double total = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
        double mu = 0.0;
        double pe_sum = 0.0;
        for (std::size_t m = 0; m < M; ++m) {
            mu += pass_probs.at(m, b, 1);
            double p[2] = {pass_probs.at(m, b, 0), pass_probs.at(m, b, 1)};
            pe_sum += pe_row(p, 2);
        }
        mu /= static_cast<double>(M);
        const double y = static_cast<double>(labels[b]);
        total -= y * std::log(clamp_prob(mu)) + (1.0 - y) * std::log(clamp_prob(1.0 - mu));
        total += beta * pe_sum / static_cast<double>(M);
    }
    return total / static_cast<double>(B);
}

double loss_value(const MlpModel& model, const Matrix& batch, const std::vector<int>& labels,
                  const LossSpec& spec, const std::vector<DropoutMask>& masks) {
    if (spec.kind == LossKind::standard_ce) {
        if (masks.size() > 1)
            throw std::invalid_argument("loss_value: standard_ce takes at most one mask");
        std::optional<DropoutMask> mask;
        if (!masks.empty()) mask = masks[0];
        return cross_entropy_loss(forward(model, batch, mask), labels);
    }
    if (masks.empty()) throw std::invalid_argument("loss_value: uncertainty_aware needs >= 1 mask");
    McPrediction mc(masks.size(), batch.rows, model.config.num_classes);
    for (std::size_t m = 0; m < masks.size(); ++m)
        mc.set_pass(m, forward(model, batch, masks[m]));
    return uncertainty_aware_loss(mc, labels, spec.beta);
}

MlpGradients backward(const MlpModel& model, const Matrix& batch, const std::vector<int>& labels,
                      const LossSpec& spec, const std::vector<DropoutMask>& masks) {
    return backward_with_loss(model, batch, labels, spec, masks).grads;
}

MlpGradients numeric_gradient(const MlpModel& model, const Matrix& batch,
                              const std::vector<int>& labels, const LossSpec& spec,
                              const std::vector<DropoutMask>& masks, double h) {
    if (h <= 0.0) throw std::invalid_argument("numeric_gradient: h must be > 0");
    MlpModel probe = model;
    MlpGradients grads = MlpGradients::zeros_like(model);
    std::vector<std::pair<double*, double*>> params = {
        {probe.w1.data.data(), grads.w1.data.data()}, {probe.b1.data(), grads.b1.data()},
        {probe.w2.data.data(), grads.w2.data.data()}, {probe.b2.data(), grads.b2.data()},
        {probe.w3.data.data(), grads.w3.data.data()}, {probe.b3.data(), grads.b3.data()}};
    std::vector<std::size_t> sizes = {probe.w1.data.size(), probe.b1.size(),
                                      probe.w2.data.size(), probe.b2.size(),
                                      probe.w3.data.size(), probe.b3.size()};
    for (std::size_t blk = 0; blk < params.size(); ++blk) {
        double* p = params[blk].first;
        double* g = params[blk].second;
        for (std::size_t i = 0; i < sizes[blk]; ++i) {
            const double orig = p[i];
            p[i] = orig + h;
            const double up = loss_value(probe, batch, labels, spec, masks);
            p[i] = orig - h;
            const double down = loss_value(probe, batch, labels, spec, masks);
            p[i] = orig;
            g[i] = (up - down) / (2.0 * h);
        }
    }
    return grads;
}

namespace {

void sgd_step(MlpModel& model, const MlpGradients& g, double lr) {
    auto upd_m = [lr](Matrix& w, const Matrix& gw) {
        for (std::size_t i = 0; i < w.data.size(); ++i) w.data[i] -= lr * gw.data[i];
    };
    auto upd_v = [lr](std::vector<double>& b, const std::vector<double>& gb) {
        for (std::size_t i = 0; i < b.size(); ++i) b[i] -= lr * gb[i];
    };
    upd_m(model.w1, g.w1);
    upd_m(model.w2, g.w2);
    upd_m(model.w3, g.w3);
    upd_v(model.b1, g.b1);
    upd_v(model.b2, g.b2);
    upd_v(model.b3, g.b3);
}

Matrix gather_rows(const Matrix& x, const std::vector<std::size_t>& idx, std::size_t begin,
                   std::size_t end) {
    Matrix out(end - begin, x.cols);
    for (std::size_t i = begin; i < end; ++i)
        std::copy(x.row_ptr(idx[i]), x.row_ptr(idx[i]) + x.cols, out.row_ptr(i - begin));
    return out;
}

}  // namespace

TrainResult train(const MlpModel& model, const Matrix& train_x, const std::vector<int>& train_y,
                  const Matrix& valid_x, const std::vector<int>& valid_y, const TrainConfig& cfg) {
    if (train_x.rows == 0 || valid_x.rows == 0)
        throw std::invalid_argument("train: datasets must be nonempty");
    if (train_x.cols != model.config.input_dim)
        throw std::invalid_argument("train: feature dim != config.input_dim");
    if (cfg.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
    if (cfg.loss_kind == LossKind::uncertainty_aware && cfg.train_mc_passes < 1)
        throw std::invalid_argument("train: train_mc_passes must be >= 1");
    check_labels(train_y, train_x.rows, model.config.num_classes, "train");
    check_labels(valid_y, valid_x.rows, model.config.num_classes, "train(valid)");

    TrainResult res;
    res.model = model;
    const std::size_t n = train_x.rows;
    const LossSpec spec{cfg.loss_kind, cfg.pe_penalty_weight};
    const std::size_t n_masks =
        cfg.loss_kind == LossKind::uncertainty_aware ? cfg.train_mc_passes : 1;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng(mix_seed(mix_seed(cfg.seed, kTagShuffle), epoch));
        std::iota(order.begin(), order.end(), std::size_t{0});
        shuffle_rng.shuffle(order);

        double epoch_loss = 0.0;
        std::size_t batch_idx = 0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size, ++batch_idx) {
            const std::size_t end = std::min(start + cfg.batch_size, n);
            Matrix bx = gather_rows(train_x, order, start, end);
            std::vector<int> by(end - start);
            for (std::size_t i = start; i < end; ++i) by[i - start] = train_y[order[i]];

            std::vector<DropoutMask> masks;
            masks.reserve(n_masks);
            const std::uint64_t batch_seed =
                mix_seed(mix_seed(mix_seed(cfg.seed, kTagMask), epoch), batch_idx);
            for (std::size_t m = 0; m < n_masks; ++m)
                masks.push_back(DropoutMask::sample(res.model.config, mix_seed(batch_seed, m)));

            LossAndGrads lg = backward_with_loss(res.model, bx, by, spec, masks);
            sgd_step(res.model, lg.grads, cfg.learning_rate);
            epoch_loss += lg.loss * static_cast<double>(end - start);
        }
        res.history.train_loss.push_back(epoch_loss / static_cast<double>(n));

        double vloss;
        if (cfg.loss_kind == LossKind::standard_ce) {
            vloss = cross_entropy_loss(forward(res.model, valid_x), valid_y);
        } else {
            McPrediction mc = mc_forward(res.model, valid_x, cfg.train_mc_passes,
                                         mix_seed(mix_seed(cfg.seed, kTagValid), epoch));
            vloss = uncertainty_aware_loss(mc, valid_y, cfg.pe_penalty_weight);
        }
        res.history.valid_loss.push_back(vloss);
    }
    return res;
}

}  // namespace uqbench
