#include "uqbench/hyperopt.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "uqbench/metrics.hpp"
#include "uqbench/rng.hpp"

namespace uqbench {

namespace {

constexpr std::uint64_t kTagInit = 0x11u;
constexpr std::uint64_t kTagUpdate = 0x12u;
constexpr std::uint64_t kTagAcq = 0x13u;
constexpr std::uint64_t kTagFitInit = 0x21u;
constexpr std::uint64_t kTagFitTrain = 0x22u;
constexpr std::uint64_t kTagFitEval = 0x23u;

constexpr double kDivergencePenalty = 1e6;

}  // namespace

void SearchSpace::validate() const {
    if (lower.size() != upper.size() || lower.size() != is_integer.size() || lower.empty())
        throw std::invalid_argument("SearchSpace: inconsistent or empty bounds");
    for (std::size_t d = 0; d < lower.size(); ++d)
        if (!(lower[d] < upper[d]))
            throw std::invalid_argument("SearchSpace: lower must be < upper in every dimension");
}

std::vector<double> SearchSpace::clip(std::vector<double> x) const {
    for (std::size_t d = 0; d < dims(); ++d) x[d] = std::min(std::max(x[d], lower[d]), upper[d]);
    return x;
}

SearchSpace SearchSpace::mlp_default() {
    SearchSpace s;
    s.lower = {64.0, 16.0, 0.01, 0.01};
    s.upper = {256.0, 64.0, 0.99, 0.99};
    s.is_integer = {true, true, false, false};
    return s;
}

std::vector<double> decode_values(const std::vector<double>& lambda, const SearchSpace& space) {
    space.validate();
    if (lambda.size() != space.dims())
        throw std::invalid_argument("decode: lambda dimension does not match the search space");
    std::vector<double> v = space.clip(lambda);
    for (std::size_t d = 0; d < v.size(); ++d)
        if (space.is_integer[d]) v[d] = std::floor(v[d] + 0.5);
    return v;
}

DecodedMlp decode_mlp(const std::vector<double>& lambda, const SearchSpace& space) {
    if (space.dims() != 4)
        throw std::invalid_argument("decode_mlp: expected a 4-D (L1, L2, P1, P2) space");
    const std::vector<double> v = decode_values(lambda, space);
    DecodedMlp d;
    d.l1 = static_cast<std::size_t>(v[0]);
    d.l2 = static_cast<std::size_t>(v[1]);
    d.p1 = v[2];
    d.p2 = v[3];
    return d;
}

MlpConfig decode(const std::vector<double>& lambda, const SearchSpace& space,
                 const MlpConfig& base) {
    const DecodedMlp d = decode_mlp(lambda, space);
    MlpConfig cfg = base;
    cfg.l1 = d.l1;
    cfg.l2 = d.l2;
    cfg.p1 = d.p1;
    cfg.p2 = d.p2;
    return cfg;
}

void write_trace_csv(const std::vector<TracePoint>& trace, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_trace_csv: cannot open " + path + " for writing");
    const std::size_t dims = trace.empty() ? 0 : trace.front().best_lambda.size();
    out << "iteration,best_fitness";
    for (std::size_t d = 0; d < dims; ++d) out << ",lambda" << d;
    out << ",fallback_random\n";
    char buf[64];
    for (const auto& p : trace) {
        out << p.iteration;
        std::snprintf(buf, sizeof(buf), "%.6f", p.best_fitness);
        out << ',' << buf;
        for (std::size_t d = 0; d < dims; ++d) {
            std::snprintf(buf, sizeof(buf), "%.6f", p.best_lambda[d]);
            out << ',' << buf;
        }
        out << ',' << (p.fallback_random ? 1 : 0) << '\n';
    }
    if (!out) throw std::runtime_error("write_trace_csv: write failed for " + path);
}

// ---- GWO ----

double gwo_control(std::size_t iter, std::size_t n_iter) {
    if (n_iter <= 1) return 2.0;
    return 2.0 * (1.0 - static_cast<double>(iter) / static_cast<double>(n_iter - 1));
}

double gwo_step(double x_old, double x_alpha, double a, double r1, double r2) {
    const double big_a = 2.0 * a * r1 - a;
    const double big_c = 2.0 * r2;
    return x_alpha - big_a * std::abs(big_c * x_alpha - x_old);
}

std::vector<double> gwo_update_position(const std::vector<double>& x_old,
                                        const std::vector<double>& x_alpha, double a, double r1,
                                        double r2) {
    if (x_old.size() != x_alpha.size())
        throw std::invalid_argument("gwo_update_position: dimension mismatch");
    std::vector<double> out(x_old.size());
    for (std::size_t d = 0; d < x_old.size(); ++d)
        out[d] = gwo_step(x_old[d], x_alpha[d], a, r1, r2);
    return out;
}

GwoResult run_gwo(const Objective& objective, const SearchSpace& space, const GwoParams& params) {
    space.validate();
    if (params.n_agents < 3)
        throw std::invalid_argument("run_gwo: need at least 3 agents (alpha, beta, delta)");

    const std::size_t dims = space.dims();
    Rng rng(mix_seed(params.seed, kTagInit));

    std::vector<std::vector<double>> pos(params.n_agents, std::vector<double>(dims));
    std::vector<double> fit(params.n_agents);
    for (std::size_t i = 0; i < params.n_agents; ++i) {
        for (std::size_t d = 0; d < dims; ++d)
            pos[i][d] = rng.uniform(space.lower[d], space.upper[d]);
        fit[i] = objective(pos[i], 0, i);
    }

    // Leaders are best-so-far records, kept sorted by fitness.
    struct Leader {
        std::vector<double> x;
        double f;
    };
    std::vector<std::size_t> order(params.n_agents);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&fit](std::size_t a, std::size_t b) { return fit[a] < fit[b]; });
    Leader alpha{pos[order[0]], fit[order[0]]};
    Leader beta{pos[order[1]], fit[order[1]]};
    Leader delta{pos[order[2]], fit[order[2]]};

    GwoResult res;
    res.trace.push_back({0, alpha.f, alpha.x, false});

    Rng update_rng(mix_seed(params.seed, kTagUpdate));
    for (std::size_t it = 0; it < params.n_iter; ++it) {
        const double a = gwo_control(it, params.n_iter);
        for (std::size_t i = 0; i < params.n_agents; ++i) {
            std::vector<double> next(dims);
            for (std::size_t d = 0; d < dims; ++d) {
                if (params.three_leader_average) {
                    double acc = 0.0;
                    for (const Leader* ld : {&alpha, &beta, &delta}) {
                        const double r1 = update_rng.uniform();
                        const double r2 = update_rng.uniform();
                        acc += gwo_step(pos[i][d], ld->x[d], a, r1, r2);
                    }
                    next[d] = acc / 3.0;
                } else {
                    const double r1 = update_rng.uniform();
                    const double r2 = update_rng.uniform();
                    next[d] = gwo_step(pos[i][d], alpha.x[d], a, r1, r2);
                }
            }
            pos[i] = space.clip(std::move(next));
            fit[i] = objective(pos[i], it + 1, i);

            if (fit[i] < alpha.f) {
                delta = beta;
                beta = alpha;
                alpha = {pos[i], fit[i]};
            } else if (fit[i] < beta.f) {
                delta = beta;
                beta = {pos[i], fit[i]};
            } else if (fit[i] < delta.f) {
                delta = {pos[i], fit[i]};
            }
        }
        res.trace.push_back({it + 1, alpha.f, alpha.x, false});
        res.diagnostics.push_back({a, alpha.f, beta.f, delta.f});
    }

    res.best_lambda = alpha.x;
    res.best_fitness = alpha.f;
    return res;
}

// ---- PSO ----

std::pair<double, double> pso_step(double v, double x, double p_best, double g_best, double omega,
                                   double c1, double c2, double r1, double r2) {
    const double v_new = omega * v + c1 * r1 * (p_best - x) + c2 * r2 * (g_best - x);
    return {v_new, x + v_new};
}

PsoResult run_pso(const Objective& objective, const SearchSpace& space, const PsoParams& params) {
    space.validate();
    if (params.n_particles < 2) throw std::invalid_argument("run_pso: need at least 2 particles");

    const std::size_t dims = space.dims();
    std::vector<double> vmax(dims);
    for (std::size_t d = 0; d < dims; ++d)
        vmax[d] = params.vmax_fraction * (space.upper[d] - space.lower[d]);

    Rng rng(mix_seed(params.seed, kTagInit));
    std::vector<std::vector<double>> pos(params.n_particles, std::vector<double>(dims));
    std::vector<std::vector<double>> vel(params.n_particles, std::vector<double>(dims, 0.0));
    std::vector<std::vector<double>> pbest(params.n_particles);
    std::vector<double> pbest_f(params.n_particles);

    for (std::size_t i = 0; i < params.n_particles; ++i) {
        for (std::size_t d = 0; d < dims; ++d)
            pos[i][d] = rng.uniform(space.lower[d], space.upper[d]);
        pbest[i] = pos[i];
        pbest_f[i] = objective(pos[i], 0, i);
    }
    std::size_t g_idx = 0;
    for (std::size_t i = 1; i < params.n_particles; ++i)
        if (pbest_f[i] < pbest_f[g_idx]) g_idx = i;
    std::vector<double> gbest = pbest[g_idx];
    double gbest_f = pbest_f[g_idx];

    PsoResult res;
    res.trace.push_back({0, gbest_f, gbest, false});

    Rng update_rng(mix_seed(params.seed, kTagUpdate));
    for (std::size_t it = 0; it < params.n_iter; ++it) {
        double max_ratio = 0.0;
        for (std::size_t i = 0; i < params.n_particles; ++i) {
            for (std::size_t d = 0; d < dims; ++d) {
                const double r1 = update_rng.uniform();
                const double r2 = update_rng.uniform();
                double v_new = pso_step(vel[i][d], pos[i][d], pbest[i][d], gbest[d], params.omega,
                                        params.c1, params.c2, r1, r2)
                                   .first;
                v_new = std::min(std::max(v_new, -vmax[d]), vmax[d]);
                vel[i][d] = v_new;
                pos[i][d] = std::min(std::max(pos[i][d] + v_new, space.lower[d]), space.upper[d]);
                if (vmax[d] > 0.0) max_ratio = std::max(max_ratio, std::abs(v_new) / vmax[d]);
            }
            const double f = objective(pos[i], it + 1, i);
            if (f < pbest_f[i]) {
                pbest_f[i] = f;
                pbest[i] = pos[i];
            }
            if (pbest_f[i] < gbest_f) {
                gbest_f = pbest_f[i];
                gbest = pbest[i];
            }
        }
        res.trace.push_back({it + 1, gbest_f, gbest, false});
        double min_pb = pbest_f[0];
        for (double f : pbest_f) min_pb = std::min(min_pb, f);
        res.diagnostics.push_back({max_ratio, gbest_f, min_pb});
    }

    res.best_lambda = gbest;
    res.best_fitness = gbest_f;
    return res;
}

// ---- LHS ----

std::vector<std::vector<double>> lhs_sample(const SearchSpace& space, std::size_t n_points,
                                            std::uint64_t seed) {
    space.validate();
    if (n_points < 1) throw std::invalid_argument("lhs_sample: n_points must be >= 1");
    const std::size_t dims = space.dims();
    Rng rng(seed);
    std::vector<std::vector<double>> pts(n_points, std::vector<double>(dims));
    std::vector<std::size_t> strata(n_points);
    for (std::size_t d = 0; d < dims; ++d) {
        std::iota(strata.begin(), strata.end(), std::size_t{0});
        rng.shuffle(strata);
        for (std::size_t i = 0; i < n_points; ++i) {
            const double u = (static_cast<double>(strata[i]) + rng.uniform()) /
                             static_cast<double>(n_points);
            pts[i][d] = space.lower[d] + u * (space.upper[d] - space.lower[d]);
        }
    }
    return pts;
}

// ---- Gaussian process ----

namespace {

double sq_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

// Lower-triangular Cholesky; false on a non-positive pivot.
bool cholesky(const Matrix& k, Matrix& l) {
    const std::size_t n = k.rows;
    l = Matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = k(i, j);
            for (std::size_t m = 0; m < j; ++m) s -= l(i, m) * l(j, m);
            if (i == j) {
                if (s <= 0.0) return false;
                l(i, i) = std::sqrt(s);
            } else {
                l(i, j) = s / l(j, j);
            }
        }
    }
    return true;
}

std::vector<double> chol_solve(const Matrix& l, std::vector<double> b) {
    const std::size_t n = l.rows;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < i; ++j) b[i] -= l(i, j) * b[j];
        b[i] /= l(i, i);
    }
    for (std::size_t i = n; i-- > 0;) {
        for (std::size_t j = i + 1; j < n; ++j) b[i] -= l(j, i) * b[j];
        b[i] /= l(i, i);
    }
    return b;
}

}  // namespace

GpModel gp_fit(const std::vector<std::vector<double>>& inputs,
               const std::vector<double>& targets) {
    if (inputs.empty() || inputs.size() != targets.size())
        throw std::invalid_argument("gp_fit: need >= 1 observation with matching targets");
    const std::size_t n = inputs.size();

    GpModel m;
    m.inputs = inputs;
    m.targets = targets;
    m.target_mean = std::accumulate(targets.begin(), targets.end(), 0.0) /
                    static_cast<double>(n);
    double var = 0.0;
    for (double y : targets) var += (y - m.target_mean) * (y - m.target_mean);
    m.signal_variance = std::max(var / static_cast<double>(n), 1e-12);

    std::vector<double> dists;
    dists.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) dists.push_back(std::sqrt(sq_distance(inputs[i], inputs[j])));
    if (dists.empty()) {
        m.length_scale = 1.0;
    } else {
        std::sort(dists.begin(), dists.end());
        const std::size_t h = dists.size() / 2;
        const double med = dists.size() % 2 ? dists[h] : 0.5 * (dists[h - 1] + dists[h]);
        m.length_scale = std::max(med, 1e-9);
    }

    Matrix k(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) {
            const double v = m.signal_variance *
                             std::exp(-sq_distance(inputs[i], inputs[j]) /
                                      (2.0 * m.length_scale * m.length_scale));
            k(i, j) = v;
            k(j, i) = v;
        }

    // Base jitter 1e-10 * sigma^2 keeps noise-free interpolation errors below
    // 1e-6; escalate x10 up to three times if the factorization fails.
    double jitter = 1e-10;
    bool ok = false;
    for (int attempt = 0; attempt < 4 && !ok; ++attempt, jitter *= 10.0) {
        Matrix kj = k;
        for (std::size_t i = 0; i < n; ++i) kj(i, i) += jitter * m.signal_variance;
        if (cholesky(kj, m.chol)) {
            m.jitter = jitter;
            ok = true;
        }
    }
    if (!ok) throw std::runtime_error("gp_fit: kernel matrix not positive definite after jitter escalation");

    std::vector<double> centered(n);
    for (std::size_t i = 0; i < n; ++i) centered[i] = targets[i] - m.target_mean;
    m.alpha = chol_solve(m.chol, std::move(centered));
    return m;
}

std::pair<double, double> gp_predict(const GpModel& model, const std::vector<double>& query) {
    const std::size_t n = model.inputs.size();
    if (n == 0) throw std::invalid_argument("gp_predict: model not fitted");
    if (query.size() != model.inputs.front().size())
        throw std::invalid_argument("gp_predict: query dimension mismatch");

    std::vector<double> kstar(n);
    for (std::size_t i = 0; i < n; ++i)
        kstar[i] = model.signal_variance *
                   std::exp(-sq_distance(model.inputs[i], query) /
                            (2.0 * model.length_scale * model.length_scale));

    double mean = model.target_mean;
    for (std::size_t i = 0; i < n; ++i) mean += kstar[i] * model.alpha[i];

    // variance = k(q, q) - k*^T K^{-1} k*, via one triangular solve
    std::vector<double> z = kstar;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < i; ++j) z[i] -= model.chol(i, j) * z[j];
        z[i] /= model.chol(i, i);
    }
    double var = model.signal_variance;
    for (double v : z) var -= v * v;
    return {mean, std::max(var, 0.0)};
}

double expected_improvement(double mean, double variance, double f_best) {
    if (variance < 0.0) throw std::invalid_argument("expected_improvement: negative variance");
    const double sigma = std::sqrt(variance);
    const double delta = f_best - mean;
    if (sigma == 0.0) return std::max(delta, 0.0);
    const double z = delta / sigma;
    const double inv_sqrt2 = 0.70710678118654752440;
    const double inv_sqrt2pi = 0.39894228040143267794;
    const double cdf = 0.5 * std::erfc(-z * inv_sqrt2);
    const double pdf = inv_sqrt2pi * std::exp(-0.5 * z * z);
    return std::max(delta * cdf + sigma * pdf, 0.0);
}

// ---- BO loop ----

BoResult run_bo(const Objective& objective, const SearchSpace& space, const BoParams& params) {
    space.validate();
    if (params.n_init < 2) throw std::invalid_argument("run_bo: n_init must be >= 2");

    const std::size_t dims = space.dims();
    auto to_unit = [&space, dims](const std::vector<double>& x) {
        std::vector<double> u(dims);
        for (std::size_t d = 0; d < dims; ++d)
            u[d] = (x[d] - space.lower[d]) / (space.upper[d] - space.lower[d]);
        return u;
    };
    auto from_unit = [&space, dims](const std::vector<double>& u) {
        std::vector<double> x(dims);
        for (std::size_t d = 0; d < dims; ++d)
            x[d] = space.lower[d] + u[d] * (space.upper[d] - space.lower[d]);
        return x;
    };

    std::vector<std::vector<double>> xs;
    std::vector<double> ys;
    std::vector<double> best_x;
    double best_f = std::numeric_limits<double>::infinity();

    for (auto& pt : lhs_sample(space, params.n_init, mix_seed(params.seed, kTagInit))) {
        const double f = objective(pt, 0, xs.size());
        xs.push_back(pt);
        ys.push_back(f);
        if (f < best_f) {
            best_f = f;
            best_x = pt;
        }
    }

    BoResult res;
    res.trace.push_back({0, best_f, best_x, false});

    Rng acq_rng(mix_seed(params.seed, kTagAcq));
    for (std::size_t t = 1; t <= params.n_iter; ++t) {
        std::vector<double> proposal;
        bool fallback = false;
        try {
            std::vector<std::vector<double>> unit_xs(xs.size());
            for (std::size_t i = 0; i < xs.size(); ++i) unit_xs[i] = to_unit(xs[i]);
            const GpModel gp = gp_fit(unit_xs, ys);
            const std::vector<double> best_unit = to_unit(best_x);

            double best_ei = -1.0;
            std::vector<double> cand(dims);
            for (std::size_t i = 0; i < params.acq_random + params.acq_local; ++i) {
                if (i < params.acq_random) {
                    for (std::size_t d = 0; d < dims; ++d) cand[d] = acq_rng.uniform();
                } else {
                    for (std::size_t d = 0; d < dims; ++d)
                        cand[d] = std::min(std::max(best_unit[d] +
                                                    acq_rng.normal(0.0, params.local_sigma), 0.0),
                                           1.0);
                }
                auto [mu, var] = gp_predict(gp, cand);
                const double ei = expected_improvement(mu, var, best_f);
                if (ei > best_ei) {
                    best_ei = ei;
                    proposal = cand;
                }
            }
        } catch (const std::runtime_error&) {
            fallback = true;
        }
        if (proposal.empty()) {
            proposal.resize(dims);
            for (std::size_t d = 0; d < dims; ++d) proposal[d] = acq_rng.uniform();
            fallback = true;
        }

        const std::vector<double> x_new = space.clip(from_unit(proposal));
        const double f = objective(x_new, t, 0);
        xs.push_back(x_new);
        ys.push_back(f);
        if (f < best_f) {
            best_f = f;
            best_x = x_new;
        }
        res.trace.push_back({t, best_f, best_x, fallback});
    }

    res.best_lambda = best_x;
    res.best_fitness = best_f;
    return res;
}

// ---- MLP hyperparameter fitness ----

FitnessRecord evaluate_fitness(const Candidate& candidate, const Dataset& train_split,
                               const Dataset& valid_split, const FitnessConfig& cfg,
                               std::uint64_t seed) {
    if (train_split.size() == 0 || valid_split.size() == 0)
        throw std::invalid_argument("evaluate_fitness: splits must be nonempty");

    FitnessRecord rec;
    rec.candidate = candidate;

    MlpConfig mcfg;
    mcfg.input_dim = train_split.dim();
    mcfg.num_classes = 2;
    mcfg.l1 = candidate.decoded.l1;
    mcfg.l2 = candidate.decoded.l2;
    mcfg.p1 = candidate.decoded.p1;
    mcfg.p2 = candidate.decoded.p2;
    mcfg.init_seed = mix_seed(seed, kTagFitInit);

    TrainConfig tcfg = cfg.train;
    tcfg.loss_kind = LossKind::uncertainty_aware;
    tcfg.seed = mix_seed(seed, kTagFitTrain);

    TrainResult tr = train(MlpModel::init(mcfg), train_split.features, train_split.labels,
                           valid_split.features, valid_split.labels, tcfg);

    if (!tr.model.all_finite()) {
        rec.fitness = kDivergencePenalty;
        rec.flagged = true;
        return rec;
    }

    McPrediction mc = mc_forward(tr.model, valid_split.features, cfg.eval_passes,
                                 mix_seed(seed, kTagFitEval));
    const double fitness =
        uncertainty_aware_loss(mc, valid_split.labels, cfg.train.pe_penalty_weight);
    if (!std::isfinite(fitness)) {
        rec.fitness = kDivergencePenalty;
        rec.flagged = true;
        return rec;
    }
    rec.fitness = fitness;

    const Matrix mean = predictive_mean(mc);
    const std::vector<int> pred = classify(mean);
    const std::vector<double> pe = predictive_entropy(mean);
    rec.accuracy = accuracy(pred, valid_split.labels);
    rec.uacc = uacc(uncertainty_confusion(pe, pred, valid_split.labels, cfg.uacc_threshold));
    rec.ece = ece(mean, valid_split.labels, cfg.ece_bins);
    return rec;
}

HyperSearchResult search_hyperparams(OptimizerKind kind, const SearchSpace& space,
                                     const Dataset& train_split, const Dataset& valid_split,
                                     const FitnessConfig& fitness_cfg, const SearchBudget& budget,
                                     std::uint64_t seed) {
    HyperSearchResult out;
    bool have_best = false;

    Objective objective = [&](const std::vector<double>& lambda, std::size_t iteration,
                              std::size_t index) {
        Candidate cand{lambda, decode_mlp(lambda, space)};
        FitnessRecord rec = evaluate_fitness(cand, train_split, valid_split, fitness_cfg,
                                             mix_seed(mix_seed(seed, iteration), index));
        if (!have_best || rec.fitness < out.best.fitness) {
            out.best = rec;
            have_best = true;
        }
        return rec.fitness;
    };

    switch (kind) {
        case OptimizerKind::gwo: {
            GwoParams p;
            p.n_agents = budget.n_agents;
            p.n_iter = budget.n_iter;
            p.seed = seed;
            out.trace = run_gwo(objective, space, p).trace;
            break;
        }
        case OptimizerKind::pso: {
            PsoParams p;
            p.n_particles = budget.n_agents;
            p.n_iter = budget.n_iter;
            p.seed = seed;
            out.trace = run_pso(objective, space, p).trace;
            break;
        }
        case OptimizerKind::bo: {
            BoParams p;
            p.n_init = budget.bo_init;
            p.n_iter = budget.bo_iter;
            p.seed = seed;
            out.trace = run_bo(objective, space, p).trace;
            break;
        }
    }
    return out;
}

}  // namespace uqbench
