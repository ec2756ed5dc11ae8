#include "uqbench/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "uqbench/metrics.hpp"
#include "uqbench/rng.hpp"

namespace uqbench {

namespace {

constexpr std::uint64_t kTagData = 0xD474u;
constexpr std::uint64_t kTagSplit = 0x591Fu;
constexpr std::uint64_t kTagFold = 0xF01Du;
constexpr std::uint64_t kTagSearch = 0x5EA2u;
constexpr std::uint64_t kTagInit = 0x1417u;
constexpr std::uint64_t kTagTrain = 0x7124u;
constexpr std::uint64_t kTagEval = 0xE7A1u;

const char* kMethodNames[] = {"mcd", "mcd_pe", "mcd_gwo", "mcd_bo", "mcd_pso"};

std::string fmt6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt6(*v) : std::string(); }

}  // namespace

const char* method_name(Method m) { return kMethodNames[static_cast<int>(m)]; }

std::optional<Method> parse_method(const std::string& name) {
    for (int i = 0; i < 5; ++i)
        if (name == kMethodNames[i]) return static_cast<Method>(i);
    return std::nullopt;
}

std::vector<Method> all_methods() {
    return {Method::mcd, Method::mcd_pe, Method::mcd_gwo, Method::mcd_bo, Method::mcd_pso};
}

double ExperimentConfig::resolved_learning_rate() const {
    if (learning_rate) return *learning_rate;
    return dataset.kind == DatasetSpec::Kind::circles ? 0.05 : 0.01;
}

void ExperimentConfig::validate() const {
    if (seeds.empty()) throw std::invalid_argument("ExperimentConfig: seeds must be nonempty");
    if (eval_mc_passes < 1)
        throw std::invalid_argument("ExperimentConfig: eval_mc_passes must be >= 1");
    if (test_fraction <= 0.0 || test_fraction >= 1.0)
        throw std::invalid_argument("ExperimentConfig: test_fraction must lie in (0, 1)");
    if (uacc_threshold < 0.0 || uacc_threshold > 1.0)
        throw std::invalid_argument("ExperimentConfig: uacc_threshold must lie in [0, 1]");
}

MethodPlan make_method_plan(const ExperimentConfig& cfg, Method m) {
    MethodPlan plan;
    plan.l1 = cfg.default_l1;
    plan.l2 = cfg.default_l2;
    plan.p1 = cfg.default_p1;
    plan.p2 = cfg.default_p2;
    plan.loss_kind = m == Method::mcd ? LossKind::standard_ce : LossKind::uncertainty_aware;
    plan.uses_search = m == Method::mcd_gwo || m == Method::mcd_bo || m == Method::mcd_pso;
    if (m == Method::mcd_gwo) plan.optimizer = OptimizerKind::gwo;
    if (m == Method::mcd_bo) plan.optimizer = OptimizerKind::bo;
    if (m == Method::mcd_pso) plan.optimizer = OptimizerKind::pso;
    return plan;
}

MetricAggregate aggregate(const std::vector<std::optional<double>>& values) {
    MetricAggregate agg;
    std::vector<double> v;
    for (const auto& x : values)
        if (x) v.push_back(*x);
    agg.count = v.size();
    if (v.empty()) return agg;

    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size());

    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    agg.mean = mean;
    agg.stddev = std::sqrt(var);
    agg.median = v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
    return agg;
}

Dataset build_dataset(const ExperimentConfig& cfg, std::uint64_t seed) {
    if (cfg.dataset.kind == DatasetSpec::Kind::circles) {
        const CirclesSpec& c = cfg.dataset.circles;
        return make_circles(c.n, c.noise, c.factor, mix_seed(seed, kTagData));
    }
    const CsvSpec& c = cfg.dataset.csv;
    return load_csv(c.path, c.label_column, c.has_header);
}

SplitIndices experiment_split(const ExperimentConfig& cfg, std::uint64_t seed,
                              const std::vector<int>& labels) {
    SplitSpec spec;
    spec.test_fraction = cfg.test_fraction;
    spec.seed = mix_seed(seed, kTagSplit);
    spec.stratified = true;
    return split_indices(labels, spec);
}

namespace {

FitnessConfig make_fitness_config(const ExperimentConfig& cfg) {
    FitnessConfig fc;
    fc.train.epochs = cfg.search_epochs;
    fc.train.batch_size = cfg.batch_size;
    fc.train.learning_rate = cfg.resolved_learning_rate();
    fc.train.loss_kind = LossKind::uncertainty_aware;
    fc.train.train_mc_passes = cfg.search_mc_passes;
    fc.train.pe_penalty_weight = cfg.beta;
    fc.eval_passes = cfg.fitness_eval_passes;
    fc.uacc_threshold = cfg.uacc_threshold;
    fc.ece_bins = cfg.ece_bins;
    return fc;
}

HyperSearchResult search_on_train(const ExperimentConfig& cfg, Method method, std::uint64_t seed,
                                  const Dataset& train_std) {
    SplitSpec fold;
    fold.test_fraction = cfg.fold_valid_fraction;
    fold.seed = mix_seed(seed, kTagFold);
    fold.stratified = true;
    SplitIndices fidx = split_indices(train_std.labels, fold);
    const Dataset fit_ds = subset(train_std, fidx.train);
    const Dataset val_ds = subset(train_std, fidx.test);
    const MethodPlan plan = make_method_plan(cfg, method);
    return search_hyperparams(plan.optimizer, SearchSpace::mlp_default(), fit_ds, val_ds,
                              make_fitness_config(cfg), cfg.budget, mix_seed(seed, kTagSearch));
}

}  // namespace

HyperSearchResult run_search_stage(const ExperimentConfig& cfg, std::uint64_t seed,
                                   const Dataset& ds) {
    cfg.validate();
    const MethodPlan plan = make_method_plan(cfg, cfg.method);
    if (!plan.uses_search)
        throw std::invalid_argument("run_search_stage: method has no search stage");
    SplitIndices idx = experiment_split(cfg, seed, ds.labels);
    Dataset train_ds = subset(ds, idx.train);
    const Standardizer st = standardize_fit(train_ds);
    return search_on_train(cfg, cfg.method, seed, standardize_apply(train_ds, st));
}

SeedOutcome run_method_on(const ExperimentConfig& cfg, std::uint64_t seed, const Dataset& ds) {
    cfg.validate();
    if (ds.num_classes() != 2)
        throw std::invalid_argument("run_method: binary datasets only (got " +
                                    std::to_string(ds.num_classes()) + " classes)");

    const SplitIndices idx = experiment_split(cfg, seed, ds.labels);
    Dataset train_ds = subset(ds, idx.train);
    Dataset test_ds = subset(ds, idx.test);
    const Standardizer st = standardize_fit(train_ds);
    train_ds = standardize_apply(train_ds, st);
    test_ds = standardize_apply(test_ds, st);

    const MethodPlan plan = make_method_plan(cfg, cfg.method);
    SeedOutcome out;
    out.record.seed = seed;

    MlpConfig mcfg;
    mcfg.input_dim = train_ds.dim();
    mcfg.num_classes = 2;
    mcfg.l1 = plan.l1;
    mcfg.l2 = plan.l2;
    mcfg.p1 = plan.p1;
    mcfg.p2 = plan.p2;
    mcfg.init_seed = mix_seed(seed, kTagInit);

    if (plan.uses_search) {
        HyperSearchResult search = search_on_train(cfg, cfg.method, seed, train_ds);
        const DecodedMlp& d = search.best.candidate.decoded;
        mcfg.l1 = d.l1;
        mcfg.l2 = d.l2;
        mcfg.p1 = d.p1;
        mcfg.p2 = d.p2;
        out.record.chosen = d;
        out.search_trace = std::move(search.trace);
    }

    TrainConfig tcfg;
    tcfg.epochs = cfg.epochs;
    tcfg.batch_size = cfg.batch_size;
    tcfg.learning_rate = cfg.resolved_learning_rate();
    tcfg.loss_kind = plan.loss_kind;
    tcfg.train_mc_passes = cfg.train_mc_passes;
    tcfg.pe_penalty_weight = cfg.beta;
    tcfg.seed = mix_seed(seed, kTagTrain);

    // History-only validation slice; the test set stays out of training.
    const std::size_t probe = std::min<std::size_t>(128, train_ds.size());
    std::vector<std::size_t> head(probe);
    for (std::size_t i = 0; i < probe; ++i) head[i] = i;
    const Dataset valid_ds = subset(train_ds, head);

    TrainResult tr = train(MlpModel::init(mcfg), train_ds.features, train_ds.labels,
                           valid_ds.features, valid_ds.labels, tcfg);

    const McPrediction mc =
        mc_forward(tr.model, test_ds.features, cfg.eval_mc_passes, mix_seed(seed, kTagEval));
    const Matrix mean = predictive_mean(mc);
    out.predicted = classify(mean);
    out.pe = predictive_entropy(mean);
    out.labels = test_ds.labels;

    out.record.accuracy = accuracy(out.predicted, out.labels);
    std::vector<double> scores(mean.rows);
    for (std::size_t i = 0; i < mean.rows; ++i) scores[i] = mean(i, 1);
    out.record.auc = roc_auc(scores, out.labels);
    out.record.uacc =
        uacc(uncertainty_confusion(out.pe, out.predicted, out.labels, cfg.uacc_threshold));
    out.record.ece = ece(mean, out.labels, cfg.ece_bins);
    const GroupCenters gc = group_centers(out.pe, out.predicted, out.labels);
    out.record.mu1 = gc.mu_incorrect;
    out.record.mu2 = gc.mu_correct;
    out.record.dist = gc.distance;
    return out;
}

SeedOutcome run_method(const ExperimentConfig& cfg, std::uint64_t seed) {
    return run_method_on(cfg, seed, build_dataset(cfg, seed));
}

std::map<Method, std::vector<SeedOutcome>> run_units(const ExperimentConfig& cfg,
                                                     const std::vector<Method>& methods) {
    cfg.validate();
    struct Unit {
        Method method;
        std::uint64_t seed;
    };
    std::vector<Unit> units;
    for (Method m : methods)
        for (std::uint64_t s : cfg.seeds) units.push_back({m, s});

    std::vector<SeedOutcome> results(units.size());
    const std::size_t jobs = std::max<std::size_t>(1, cfg.jobs);
    std::exception_ptr failure;
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};

    auto worker = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= units.size() || failed.load()) break;
            try {
                ExperimentConfig unit_cfg = cfg;
                unit_cfg.method = units[i].method;
                results[i] = run_method(unit_cfg, units[i].seed);
            } catch (...) {
                if (!failed.exchange(true)) failure = std::current_exception();
            }
        }
    };

    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);

    std::map<Method, std::vector<SeedOutcome>> out;
    for (std::size_t i = 0; i < units.size(); ++i)
        out[units[i].method].push_back(std::move(results[i]));
    return out;
}

MethodReport to_report(Method m, const std::vector<SeedOutcome>& outcomes) {
    MethodReport rep;
    rep.method = m;
    for (const auto& o : outcomes) rep.per_seed.push_back(o.record);
    return rep;
}

std::map<Method, MethodReport> run_comparison(const ExperimentConfig& cfg) {
    auto units = run_units(cfg, all_methods());
    std::map<Method, MethodReport> out;
    for (const auto& [m, outcomes] : units) out[m] = to_report(m, outcomes);
    return out;
}

namespace {

struct MetricColumn {
    const char* name;
    std::vector<std::optional<double>> (*extract)(const MethodReport&);
};

std::vector<std::optional<double>> col_accuracy(const MethodReport& r) {
    std::vector<std::optional<double>> v;
    for (const auto& s : r.per_seed) v.emplace_back(s.accuracy);
    return v;
}
std::vector<std::optional<double>> col_auc(const MethodReport& r) {
    std::vector<std::optional<double>> v;
    for (const auto& s : r.per_seed) v.emplace_back(s.auc);
    return v;
}
std::vector<std::optional<double>> col_uacc(const MethodReport& r) {
    std::vector<std::optional<double>> v;
    for (const auto& s : r.per_seed) v.emplace_back(s.uacc);
    return v;
}
std::vector<std::optional<double>> col_ece(const MethodReport& r) {
    std::vector<std::optional<double>> v;
    for (const auto& s : r.per_seed) v.emplace_back(s.ece);
    return v;
}
std::vector<std::optional<double>> col_mu1(const MethodReport& r) {
    std::vector<std::optional<double>> v;
    for (const auto& s : r.per_seed) v.push_back(s.mu1);
    return v;
}
std::vector<std::optional<double>> col_mu2(const MethodReport& r) {
    std::vector<std::optional<double>> v;
    for (const auto& s : r.per_seed) v.push_back(s.mu2);
    return v;
}
std::vector<std::optional<double>> col_dist(const MethodReport& r) {
    std::vector<std::optional<double>> v;
    for (const auto& s : r.per_seed) v.push_back(s.dist);
    return v;
}

const MetricColumn kMetricColumns[] = {
    {"accuracy", col_accuracy}, {"auc", col_auc}, {"uacc", col_uacc}, {"ece", col_ece},
    {"mu1", col_mu1},           {"mu2", col_mu2}, {"dist", col_dist}};

void emit_csv(const std::map<Method, MethodReport>& reports, std::ofstream& out) {
    out << "method,seed,agg,accuracy,auc,uacc,ece,mu1,mu2,dist,l1,l2,p1,p2\n";
    for (const auto& [m, rep] : reports) {
        for (const auto& s : rep.per_seed) {
            out << method_name(m) << ',' << s.seed << ",," << fmt6(s.accuracy) << ','
                << fmt6(s.auc) << ',' << fmt6(s.uacc) << ',' << fmt6(s.ece) << ','
                << fmt_opt(s.mu1) << ',' << fmt_opt(s.mu2) << ',' << fmt_opt(s.dist) << ',';
            if (s.chosen)
                out << s.chosen->l1 << ',' << s.chosen->l2 << ',' << fmt6(s.chosen->p1) << ','
                    << fmt6(s.chosen->p2);
            else
                out << ",,,";
            out << '\n';
        }
        const char* agg_names[] = {"mean", "std", "median"};
        for (int a = 0; a < 3; ++a) {
            out << method_name(m) << ",," << agg_names[a];
            for (const auto& col : kMetricColumns) {
                const MetricAggregate agg = aggregate(col.extract(rep));
                const std::optional<double> v =
                    a == 0 ? agg.mean : (a == 1 ? agg.stddev : agg.median);
                out << ',' << fmt_opt(v);
            }
            out << ",,,,\n";
        }
    }
}

void emit_json(const std::map<Method, MethodReport>& reports, std::ofstream& out) {
    auto opt_json = [](const std::optional<double>& v) {
        return v ? fmt6(*v) : std::string("null");
    };
    out << "{\n  \"methods\": {\n";
    std::size_t mi = 0;
    for (const auto& [m, rep] : reports) {
        out << "    \"" << method_name(m) << "\": {\n      \"per_seed\": [\n";
        for (std::size_t i = 0; i < rep.per_seed.size(); ++i) {
            const SeedRecord& s = rep.per_seed[i];
            out << "        {\"seed\": " << s.seed << ", \"accuracy\": " << fmt6(s.accuracy)
                << ", \"auc\": " << fmt6(s.auc) << ", \"uacc\": " << fmt6(s.uacc)
                << ", \"ece\": " << fmt6(s.ece) << ", \"mu1\": " << opt_json(s.mu1)
                << ", \"mu2\": " << opt_json(s.mu2) << ", \"dist\": " << opt_json(s.dist);
            if (s.chosen)
                out << ", \"l1\": " << s.chosen->l1 << ", \"l2\": " << s.chosen->l2
                    << ", \"p1\": " << fmt6(s.chosen->p1) << ", \"p2\": " << fmt6(s.chosen->p2);
            out << "}" << (i + 1 < rep.per_seed.size() ? "," : "") << "\n";
        }
        out << "      ],\n      \"aggregate\": {\n";
        const std::size_t n_cols = sizeof(kMetricColumns) / sizeof(kMetricColumns[0]);
        for (std::size_t c = 0; c < n_cols; ++c) {
            const MetricAggregate agg = aggregate(kMetricColumns[c].extract(rep));
            out << "        \"" << kMetricColumns[c].name << "\": {\"mean\": "
                << opt_json(agg.mean) << ", \"std\": " << opt_json(agg.stddev)
                << ", \"median\": " << opt_json(agg.median) << ", \"count\": " << agg.count
                << "}" << (c + 1 < n_cols ? "," : "") << "\n";
        }
        out << "      }\n    }" << (++mi < reports.size() ? "," : "") << "\n";
    }
    out << "  }\n}\n";
}

}  // namespace

void emit_report(const std::map<Method, MethodReport>& reports, const std::string& path,
                 ReportFormat format) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("emit_report: cannot open " + path + " for writing");
    if (format == ReportFormat::csv)
        emit_csv(reports, out);
    else
        emit_json(reports, out);
    if (!out) throw std::runtime_error("emit_report: write failed for " + path);
}

std::vector<double> default_threshold_grid() {
    std::vector<double> grid;
    for (int i = 0; i <= 20; ++i) grid.push_back(static_cast<double>(i) * 0.05);
    grid.back() = 1.0;
    return grid;
}

void emit_threshold_curve(const std::vector<CurveInput>& inputs, const std::vector<double>& grid,
                          const std::string& path) {
    if (grid.empty()) throw std::invalid_argument("emit_threshold_curve: empty grid");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("emit_threshold_curve: cannot open " + path);
    out << "method,threshold,uacc\n";
    for (const auto& in : inputs) {
        const auto sweep = threshold_sweep(in.pe, in.predicted, in.labels, grid);
        for (const auto& [t, u] : sweep)
            out << in.method << ',' << fmt6(t) << ',' << fmt6(u) << '\n';
    }
    if (!out) throw std::runtime_error("emit_threshold_curve: write failed for " + path);
}

void emit_pe_histogram(const std::vector<double>& pe, const std::vector<int>& predicted,
                       const std::vector<int>& labels, std::size_t bins, const std::string& path) {
    if (bins < 1) throw std::invalid_argument("emit_pe_histogram: bins must be >= 1");
    if (pe.size() != predicted.size() || pe.size() != labels.size())
        throw std::invalid_argument("emit_pe_histogram: length mismatch");
    std::vector<std::size_t> correct(bins, 0), incorrect(bins, 0);
    for (std::size_t i = 0; i < pe.size(); ++i) {
        std::size_t b = static_cast<std::size_t>(pe[i] * static_cast<double>(bins));
        b = std::min(b, bins - 1);
        if (predicted[i] == labels[i])
            ++correct[b];
        else
            ++incorrect[b];
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("emit_pe_histogram: cannot open " + path);
    out << "bin_low,bin_high,correct_count,incorrect_count\n";
    for (std::size_t b = 0; b < bins; ++b) {
        out << fmt6(static_cast<double>(b) / static_cast<double>(bins)) << ','
            << fmt6(static_cast<double>(b + 1) / static_cast<double>(bins)) << ',' << correct[b]
            << ',' << incorrect[b] << '\n';
    }
    if (!out) throw std::runtime_error("emit_pe_histogram: write failed for " + path);
}

}  // namespace uqbench
