#pragma once

#include <functional>
#include <memory>
#include <string>

#include "approximator.hpp"
#include "dataset.hpp"
#include "maze.hpp"

namespace ota {

// L_2^tau(u) = |tau - 1(u<0)| * u^2
double expectile_loss(double u, double tau);
double expectile_loss_derivative(double u, double tau); // d/du

// V*(d) = -(1 - gamma^d) / (1 - gamma)
double optimal_value(long long d, double gamma);
// Abstracted form with exponent ceil(d/n): the number of option steps a
// shortest path takes under the n-step-or-goal termination rule.
double optimal_value_abstracted(long long d, int n, double gamma);

struct ObjectiveSpec {
    enum class Kind { Iql, Ota, GammaScaled };
    Kind kind = Kind::Iql;
    int n = 1;

    static ObjectiveSpec iql() { return {Kind::Iql, 1}; }
    static ObjectiveSpec ota(int n) { return {Kind::Ota, n}; }
    static ObjectiveSpec gamma_scaled(int n) { return {Kind::GammaScaled, n}; }
    static ObjectiveSpec parse(const std::string& text);

    // Successor horizon used when sampling batches (1 except for ota).
    int sample_n() const { return kind == Kind::Ota ? n : 1; }
    double effective_gamma(double gamma) const;
    std::string name() const;
};

struct ExpectileConfig {
    double tau = 0.7;   // strictly > 0.5 for the asymmetric objective
    double gamma = 0.99;
    double learning_rate = 3e-4;
    int batch_size = 256;

    void validate() const;
};

struct ValueLearnConfig {
    ExpectileConfig base;
    ObjectiveSpec objective;
    OptimizerConfig optimizer = OptimizerConfig::adam(3e-4);
    double target_polyak = 0.005; // per-step polyak rate
    long long hard_sync_every = 0; // >0: hard copy every N steps instead
    bool terminal_bootstrap_mask = false;
};

struct StepStats {
    double mean_loss = 0;
    double mean_residual = 0;
    double pos_residual_frac = 0;
};

// Owns one value net, its target copy, and the optimizer; performs the
// expectile TD regression step for whichever objective it was built with.
class ValueLearner {
public:
    ValueLearner(std::unique_ptr<ValueFn> net, ValueLearnConfig cfg);

    // One gradient step on the empirical loss over the batch. The batch must
    // have been drawn with the objective's sample_n().
    StepStats step(const ValueBatch& batch);

    const ValueFn& net() const { return *net_; }
    ValueFn& net() { return *net_; }
    const ValueFn& target() const { return *target_.net; }
    const ValueLearnConfig& config() const { return cfg_; }
    long long steps_done() const { return steps_; }
    void hard_sync();

private:
    std::unique_ptr<ValueFn> net_;
    TargetCopy target_;
    ValueLearnConfig cfg_;
    Optimizer optimizer_;
    std::vector<double> grad_;
    std::vector<int> scratch_s_, scratch_g_, scratch_succ_;
    std::vector<double> scratch_v_, scratch_boot_, scratch_up_;
    long long steps_ = 0;
};

// One line per logging interval: step,objective,loss,mean_residual,pos_residual_frac
std::string format_training_log_line(long long step, const std::string& objective,
                                     const StepStats& stats);

// Exact synchronous dynamic programming over the deterministic maze for the
// Bellman-style equation matching the objective (max over actions/options).
// Converges to the literal fixed point; used as the oracle in tests.
TabularValue tabular_fixed_point(const GridMaze& maze, ObjectiveSpec objective, double gamma,
                                 double tol = 1e-10, int max_sweeps = 0);

} // namespace ota
