#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "maze.hpp"
#include "rng.hpp"

namespace ota {

struct FeatureSpec {
    enum class Mode { OnehotPair, NormalizedCoords };
    Mode mode = Mode::NormalizedCoords;

    static FeatureSpec parse(const std::string& name);
    std::string name() const;
    // Input width for a (cell, cell) pair on the given maze.
    int dim(const GridMaze& maze) const;
};

// Plain fully connected net: relu hidden layers, linear output. Inputs are
// either dense vectors or a "two-hot" pair of indices (concatenated one-hot
// encodings), for which the first layer takes a sparse fast path.
class MlpCore {
public:
    MlpCore() = default;
    explicit MlpCore(std::vector<int> layer_sizes);

    struct Input {
        const double* dense = nullptr; // used when non-null
        int hot_a = -1;                // otherwise two-hot indices
        int hot_b = -1;
    };

    struct Workspace {
        std::vector<double> acts; // activations of all layers past the input
        std::vector<double> deltas;
    };

    struct BatchWorkspace {
        std::vector<double> acts;   // batch-major per layer
        std::vector<double> deltas;
        std::vector<double> dense_in; // gathered dense inputs when needed
    };

    int param_count() const { return static_cast<int>(params_.size()); }
    std::span<double> params() { return params_; }
    std::span<const double> params() const { return params_; }
    const std::vector<int>& layer_sizes() const { return sizes_; }
    int output_dim() const { return sizes_.back(); }

    void init_random(Rng& rng); // he-style hidden init, zero output layer

    // Returns pointer to the output activations (size output_dim()).
    const double* forward(const Input& in, Workspace& ws) const;
    // Accumulates d(dout . output)/dparams into grad; call right after forward
    // with the same workspace and input.
    void backward(const Input& in, const double* dout, Workspace& ws, double* grad) const;

    // Batched variants; outputs land at output_batch(ws, b). Inputs must all
    // use the same encoding (all dense or all two-hot).
    void forward_batch(const Input* ins, int batch, BatchWorkspace& ws) const;
    const double* output_batch(const BatchWorkspace& ws, int b) const;
    void backward_batch(const Input* ins, int batch, const double* dout, BatchWorkspace& ws,
                        double* grad) const;

private:
    std::vector<int> sizes_;
    std::vector<double> params_;
    std::vector<int> weight_offsets_;
    std::vector<int> bias_offsets_;
};

// Goal-conditioned scalar map over free-cell indices. Tabular and MLP
// learners expose the same surface and are substitutable in learning code.
class ValueFn {
public:
    virtual ~ValueFn() = default;
    virtual double evaluate(int s, int g) const = 0;
    double evaluate(const GridMaze& maze, CellState s, CellState g) const;
    // Adds upstream * dV(s,g)/dparams into grad (size param_count()).
    virtual void accumulate_gradient(int s, int g, double upstream, double* grad) const = 0;
    // Batched hooks; the defaults loop, MLPs override with fused batch passes.
    virtual void evaluate_batch(const int* s, const int* g, int batch, double* out) const;
    virtual void accumulate_gradient_batch(const int* s, const int* g, const double* upstream,
                                           int batch, double* grad) const;
    virtual std::span<double> params() = 0;
    virtual std::span<const double> params() const = 0;
    int param_count() const { return static_cast<int>(params().size()); }
    virtual std::string descriptor() const = 0;
    virtual std::unique_ptr<ValueFn> clone() const = 0;
};

class TabularValue final : public ValueFn {
public:
    explicit TabularValue(int free_cells);
    double evaluate(int s, int g) const override { return table_[index(s, g)]; }
    void accumulate_gradient(int s, int g, double upstream, double* grad) const override {
        grad[index(s, g)] += upstream;
    }
    void set(int s, int g, double v) { table_[index(s, g)] = v; }
    int free_cells() const { return free_cells_; }
    std::span<double> params() override { return table_; }
    std::span<const double> params() const override { return table_; }
    std::string descriptor() const override;
    std::unique_ptr<ValueFn> clone() const override { return std::make_unique<TabularValue>(*this); }

private:
    size_t index(int s, int g) const { return static_cast<size_t>(s) * free_cells_ + g; }
    int free_cells_;
    std::vector<double> table_; // row-major, state-major, zero-initialized
};

class MlpValue final : public ValueFn {
public:
    MlpValue(const GridMaze& maze, FeatureSpec features, const std::vector<int>& hidden, Rng& rng);

    double evaluate(int s, int g) const override;
    void accumulate_gradient(int s, int g, double upstream, double* grad) const override;
    void evaluate_batch(const int* s, const int* g, int batch, double* out) const override;
    void accumulate_gradient_batch(const int* s, const int* g, const double* upstream, int batch,
                                   double* grad) const override;
    std::span<double> params() override { return core_.params(); }
    std::span<const double> params() const override { return core_.params(); }
    std::string descriptor() const override;
    std::unique_ptr<ValueFn> clone() const override { return std::make_unique<MlpValue>(*this); }

    const FeatureSpec& features() const { return features_; }
    const MlpCore& core() const { return core_; }

    // Fills a caller-owned feature buffer; returns the MlpCore input view.
    MlpCore::Input encode(int s, int g, double* buf) const;

private:
    FeatureSpec features_;
    int width_, height_, free_cells_;
    std::vector<CellState> cells_;
    MlpCore core_;
};

// Lagged parameter snapshot used for bootstrap targets.
struct TargetCopy {
    std::unique_ptr<ValueFn> net;
    double polyak_rate = 0.005;

    TargetCopy() = default;
    TargetCopy(const ValueFn& live, double rate) : net(live.clone()), polyak_rate(rate) {}
    TargetCopy(const TargetCopy& o) : net(o.net ? o.net->clone() : nullptr), polyak_rate(o.polyak_rate) {}
    TargetCopy(TargetCopy&&) = default;
    TargetCopy& operator=(TargetCopy&&) = default;
};

// target <- (1-rho)*target + rho*live elementwise; rho = 1 is a hard copy.
void sync_target(const ValueFn& live, TargetCopy& target);
void polyak_update(std::span<double> target, std::span<const double> live, double rho);

struct OptimizerConfig {
    enum class Kind { Sgd, Adam };
    Kind kind = Kind::Adam;
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static OptimizerConfig sgd(double lr) { return {Kind::Sgd, lr, 0, 0, 0}; }
    static OptimizerConfig adam(double lr) { return {Kind::Adam, lr, 0.9, 0.999, 1e-8}; }
};

class Optimizer {
public:
    Optimizer(OptimizerConfig cfg, int param_count);
    // Applies one descent step in place. Throws NumericError on NaN gradients.
    void apply(std::span<double> params, std::span<const double> grad);
    const OptimizerConfig& config() const { return cfg_; }

private:
    OptimizerConfig cfg_;
    long step_ = 0;
    std::vector<double> m_, v_;
};

// Checkpoint file: header line, architecture descriptor line, raw
// little-endian float64 parameters.
void save_checkpoint(const std::string& path, const std::string& descriptor,
                     std::span<const double> params);
// Returns descriptor; fills params.
std::string load_checkpoint(const std::string& path, std::vector<double>& params);

void save_value_checkpoint(const std::string& path, const ValueFn& net);
std::unique_ptr<ValueFn> load_value_checkpoint(const std::string& path, const GridMaze& maze);

// Shared by value/policy loaders: rebuilds an MlpValue/TabularValue-style
// descriptor tail. Defined in approximator.cpp.
std::vector<std::string> split_tokens(const std::string& line);

} // namespace ota
