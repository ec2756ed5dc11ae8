#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "uqbench/data.hpp"
#include "uqbench/hyperopt.hpp"
#include "uqbench/nn.hpp"

namespace uqbench {

enum class Method { mcd, mcd_pe, mcd_gwo, mcd_bo, mcd_pso };

const char* method_name(Method m);
std::optional<Method> parse_method(const std::string& name);
std::vector<Method> all_methods();

struct CirclesSpec {
    std::size_t n = 1000;
    double noise = 0.05;
    double factor = 0.8;
};

struct CsvSpec {
    std::string path;
    std::string label_column = "label";
    bool has_header = true;
};

struct DatasetSpec {
    enum class Kind { circles, csv };
    Kind kind = Kind::circles;
    CirclesSpec circles;
    CsvSpec csv;
};

struct ExperimentConfig {
    DatasetSpec dataset;
    Method method = Method::mcd;
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};

    std::size_t eval_mc_passes = 50;  // T
    double uacc_threshold = 0.5;
    std::size_t ece_bins = 10;
    double test_fraction = 0.2;

    // Final training. learning_rate empty = 0.05 for circles, 0.01 for csv data.
    std::size_t epochs = 150;
    std::optional<double> learning_rate;
    std::size_t batch_size = 32;
    std::size_t train_mc_passes = 5;  // M
    double beta = 1.0;

    // Fixed architecture for the non-optimized methods.
    std::size_t default_l1 = 64;
    std::size_t default_l2 = 16;
    double default_p1 = 0.2;
    double default_p2 = 0.2;

    // Hyperparameter search (optimized methods). Fitness evaluations train at a
    // reduced proxy budget; the final model always trains at the full budget.
    SearchBudget budget;
    std::size_t search_epochs = 12;
    std::size_t search_mc_passes = 3;
    std::size_t fitness_eval_passes = 20;
    double fold_valid_fraction = 0.25;  // train split re-split for fitness

    std::size_t jobs = 1;

    double resolved_learning_rate() const;
    void validate() const;
};

/// What a method runs: its loss, whether it searches, and its starting
/// architecture. mcd vs mcd_pe must differ in loss_kind only.
struct MethodPlan {
    LossKind loss_kind = LossKind::standard_ce;
    bool uses_search = false;
    OptimizerKind optimizer = OptimizerKind::gwo;
    std::size_t l1 = 64;
    std::size_t l2 = 16;
    double p1 = 0.2;
    double p2 = 0.2;
};

MethodPlan make_method_plan(const ExperimentConfig& cfg, Method m);

struct SeedRecord {
    std::uint64_t seed = 0;
    double accuracy = 0.0;
    double auc = 0.0;
    double uacc = 0.0;
    double ece = 0.0;
    std::optional<double> mu1;   // mean PE of misclassified
    std::optional<double> mu2;   // mean PE of correctly classified
    std::optional<double> dist;  // |mu2 - mu1|
    std::optional<DecodedMlp> chosen;  // optimized methods only
};

/// Per-seed record plus the raw test-set evaluation needed for curves/histograms.
struct SeedOutcome {
    SeedRecord record;
    std::vector<double> pe;
    std::vector<int> predicted;
    std::vector<int> labels;
    std::vector<TracePoint> search_trace;  // empty for non-optimized methods
};

struct MethodReport {
    Method method = Method::mcd;
    std::vector<SeedRecord> per_seed;
};

struct MetricAggregate {
    std::optional<double> mean;
    std::optional<double> stddev;  // population
    std::optional<double> median;
    std::size_t count = 0;  // seeds with a defined value
};

MetricAggregate aggregate(const std::vector<std::optional<double>>& values);

/// Dataset construction for one experiment seed (circles are regenerated per
/// seed; CSV data is reloaded as-is).
Dataset build_dataset(const ExperimentConfig& cfg, std::uint64_t seed);

/// Train/test indices used by every method at this seed (method-independent, so
/// comparisons share splits).
SplitIndices experiment_split(const ExperimentConfig& cfg, std::uint64_t seed,
                              const std::vector<int>& labels);

/// Hyperparameter-search stage only, on an already-built dataset. The search
/// sees the training side of the split; test rows never reach it.
HyperSearchResult run_search_stage(const ExperimentConfig& cfg, std::uint64_t seed,
                                   const Dataset& ds);

SeedOutcome run_method_on(const ExperimentConfig& cfg, std::uint64_t seed, const Dataset& ds);
SeedOutcome run_method(const ExperimentConfig& cfg, std::uint64_t seed);

std::map<Method, std::vector<SeedOutcome>> run_units(const ExperimentConfig& cfg,
                                                     const std::vector<Method>& methods);

MethodReport to_report(Method m, const std::vector<SeedOutcome>& outcomes);

/// All five methods on identical per-seed splits.
std::map<Method, MethodReport> run_comparison(const ExperimentConfig& cfg);

enum class ReportFormat { csv, json };

/// One row per (method, seed) plus aggregate rows flagged in the `agg` column
/// (CSV), or per-method nesting (JSON). Reals use 6 decimal places; output is
/// byte-identical for identical inputs.
void emit_report(const std::map<Method, MethodReport>& reports, const std::string& path,
                 ReportFormat format);

struct CurveInput {
    std::string method;
    std::vector<double> pe;
    std::vector<int> predicted;
    std::vector<int> labels;
};

std::vector<double> default_threshold_grid();  // 0.0 to 1.0, step 0.05

void emit_threshold_curve(const std::vector<CurveInput>& inputs, const std::vector<double>& grid,
                          const std::string& path);

/// Equal-width PE bins on [0, 1]; per bin, counts of correctly and incorrectly
/// classified samples.
void emit_pe_histogram(const std::vector<double>& pe, const std::vector<int>& predicted,
                       const std::vector<int>& labels, std::size_t bins, const std::string& path);

}  // namespace uqbench
