#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "uqbench/data.hpp"
#include "uqbench/matrix.hpp"
#include "uqbench/nn.hpp"

namespace uqbench {

/// Box-constrained search space; integer dimensions stay continuous during
/// search and are rounded only when decoded.
struct SearchSpace {
    std::vector<double> lower;
    std::vector<double> upper;
    std::vector<bool> is_integer;

    std::size_t dims() const { return lower.size(); }
    void validate() const;
    std::vector<double> clip(std::vector<double> x) const;

    /// (L1, L2, P1, P2): L1 in [64, 256] integer, L2 in [16, 64] integer,
    /// P1 and P2 in [0.01, 0.99].
    static SearchSpace mlp_default();
};

struct DecodedMlp {
    std::size_t l1 = 0;
    std::size_t l2 = 0;
    double p1 = 0.0;
    double p2 = 0.0;
};

/// Clip into bounds, then round integer dimensions half-up.
std::vector<double> decode_values(const std::vector<double>& lambda, const SearchSpace& space);

DecodedMlp decode_mlp(const std::vector<double>& lambda, const SearchSpace& space);

/// Apply a decoded 4-D point onto `base` (input_dim/num_classes/init_seed kept).
MlpConfig decode(const std::vector<double>& lambda, const SearchSpace& space,
                 const MlpConfig& base);

struct Candidate {
    std::vector<double> lambda;
    DecodedMlp decoded;
};

struct FitnessRecord {
    Candidate candidate;
    double fitness = 0.0;   // validation uncertainty-aware loss
    double accuracy = 0.0;  // aux metrics on the validation split
    double uacc = 0.0;
    double ece = 0.0;
    bool flagged = false;   // training diverged; fitness is the 1e6 penalty
};

/// Best-so-far snapshot; entry 0 is the initial population/design.
struct TracePoint {
    std::size_t iteration = 0;
    double best_fitness = 0.0;
    std::vector<double> best_lambda;
    bool fallback_random = false;  // BO: acquisition fell back to a uniform draw
};

/// Objective receives (lambda, iteration, index-within-iteration) so callers can
/// derive per-evaluation seeds; iteration 0 is the initial population.
using Objective =
    std::function<double(const std::vector<double>&, std::size_t, std::size_t)>;

void write_trace_csv(const std::vector<TracePoint>& trace, const std::string& path);

// ---- Grey Wolf Optimizer ----

struct GwoParams {
    std::size_t n_agents = 10;
    std::size_t n_iter = 10;
    std::uint64_t seed = 0;
    bool three_leader_average = false;  // classical GWO update instead of alpha-only
};

struct GwoDiag {
    double a = 0.0;  // control scalar used for this update
    double alpha_fitness = 0.0;
    double beta_fitness = 0.0;
    double delta_fitness = 0.0;
};

struct GwoResult {
    std::vector<double> best_lambda;
    double best_fitness = 0.0;
    std::vector<TracePoint> trace;
    std::vector<GwoDiag> diagnostics;  // one per update iteration
};

/// Exploration schedule: 2*(1 - iter/(n_iter-1)), linear from 2 to 0.
double gwo_control(std::size_t iter, std::size_t n_iter);

/// One-dimensional leader-guided move: X_alpha - A*|C*X_alpha - X_old| with
/// A = 2a*r1 - a and C = 2*r2.
double gwo_step(double x_old, double x_alpha, double a, double r1, double r2);

std::vector<double> gwo_update_position(const std::vector<double>& x_old,
                                        const std::vector<double>& x_alpha, double a, double r1,
                                        double r2);

GwoResult run_gwo(const Objective& objective, const SearchSpace& space, const GwoParams& params);

// ---- Particle Swarm Optimization ----

struct PsoParams {
    std::size_t n_particles = 10;
    std::size_t n_iter = 10;
    std::uint64_t seed = 0;
    double omega = 0.7;
    double c1 = 1.5;
    double c2 = 1.5;
    double vmax_fraction = 0.2;  // v_max = fraction * (upper - lower) per dimension
};

struct PsoDiag {
    double max_velocity_ratio = 0.0;  // max over particles/dims of |v|/v_max
    double gbest_fitness = 0.0;
    double min_pbest_fitness = 0.0;
};

struct PsoResult {
    std::vector<double> best_lambda;
    double best_fitness = 0.0;
    std::vector<TracePoint> trace;
    std::vector<PsoDiag> diagnostics;
};

/// Raw velocity/position update pair (before clamping and bound clipping).
std::pair<double, double> pso_step(double v, double x, double p_best, double g_best, double omega,
                                   double c1, double c2, double r1, double r2);

PsoResult run_pso(const Objective& objective, const SearchSpace& space, const PsoParams& params);

// ---- Latin Hypercube Sampling ----

/// n points; in every dimension the coordinates occupy n distinct equal-width
/// strata, one point per stratum.
std::vector<std::vector<double>> lhs_sample(const SearchSpace& space, std::size_t n_points,
                                            std::uint64_t seed);

// ---- Gaussian process surrogate ----

struct GpModel {
    std::vector<std::vector<double>> inputs;  // expected pre-scaled to the unit cube
    std::vector<double> targets;
    double target_mean = 0.0;
    double signal_variance = 1.0;  // sigma^2, variance of the observed targets
    double length_scale = 1.0;     // median heuristic
    double jitter = 0.0;           // diagonal term actually used (relative to sigma^2)
    Matrix chol;                   // lower-triangular factor of K
    std::vector<double> alpha;     // K^{-1} (y - mean)
};

/// Squared-exponential GP with zero-mean prior on centered targets. Throws
/// std::runtime_error if the kernel matrix stays non-positive-definite after
/// three jitter escalations (x10 each).
GpModel gp_fit(const std::vector<std::vector<double>>& inputs, const std::vector<double>& targets);

/// Posterior (mean, variance) at the query; variance floored at 0.
std::pair<double, double> gp_predict(const GpModel& model, const std::vector<double>& query);

/// Minimization expected improvement: (f_best - mu)*Phi(z) + sigma*phi(z).
double expected_improvement(double mean, double variance, double f_best);

// ---- Bayesian optimization loop ----

struct BoParams {
    std::size_t n_init = 8;
    std::size_t n_iter = 24;
    std::uint64_t seed = 0;
    std::size_t acq_random = 1024;  // uniform acquisition candidates
    std::size_t acq_local = 64;     // Gaussian perturbations of the incumbent
    double local_sigma = 0.05;      // in unit-cube coordinates
};

struct BoResult {
    std::vector<double> best_lambda;
    double best_fitness = 0.0;
    std::vector<TracePoint> trace;
};

BoResult run_bo(const Objective& objective, const SearchSpace& space, const BoParams& params);

// ---- MLP hyperparameter fitness ----

struct FitnessConfig {
    TrainConfig train;             // loss_kind is forced to uncertainty_aware
    std::size_t eval_passes = 20;  // MC passes for the validation fitness
    double uacc_threshold = 0.5;   // aux metrics only
    std::size_t ece_bins = 10;
};

/// Trains a fresh model from the candidate's config with the uncertainty-aware
/// loss and returns the validation uncertainty-aware loss as fitness plus aux
/// metrics. Non-finite results are replaced by a 1e6 penalty and flagged.
FitnessRecord evaluate_fitness(const Candidate& candidate, const Dataset& train_split,
                               const Dataset& valid_split, const FitnessConfig& cfg,
                               std::uint64_t seed);

enum class OptimizerKind { gwo, bo, pso };

struct SearchBudget {
    std::size_t n_agents = 10;  // GWO agents / PSO particles
    std::size_t n_iter = 10;
    std::size_t bo_init = 8;
    std::size_t bo_iter = 24;
};

struct HyperSearchResult {
    FitnessRecord best;
    std::vector<TracePoint> trace;
};

/// Full hyperparameter search over the MLP space with one of the three
/// optimizers; every fitness evaluation is seeded from (seed, iteration, index).
HyperSearchResult search_hyperparams(OptimizerKind kind, const SearchSpace& space,
                                     const Dataset& train_split, const Dataset& valid_split,
                                     const FitnessConfig& fitness_cfg, const SearchBudget& budget,
                                     std::uint64_t seed);

}  // namespace uqbench
