#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "approximator.hpp"
#include "dataset.hpp"
#include "maze.hpp"
#include "value_learning.hpp"

namespace ota {

enum class PolicyRole { High, Low, Flat };
std::string policy_role_name(PolicyRole role);

// Categorical scorer: logits over num_choices outcomes conditioned on a
// (state, goal-or-subgoal) pair of free-cell indices.
class PolicyFn {
public:
    virtual ~PolicyFn() = default;
    virtual int num_choices() const = 0;
    virtual void logits(int s, int cond, double* out) const = 0;
    virtual void accumulate_logits_gradient(int s, int cond, const double* dlogits,
                                            double* grad) const = 0;
    // Batched hooks (out/dlogits are batch x num_choices, batch-major).
    virtual void logits_batch(const int* s, const int* cond, int batch, double* out) const;
    virtual void accumulate_logits_gradient_batch(const int* s, const int* cond,
                                                  const double* dlogits, int batch,
                                                  double* grad) const;
    virtual std::span<double> params() = 0;
    virtual std::span<const double> params() const = 0;
    int param_count() const { return static_cast<int>(params().size()); }
    virtual std::string descriptor() const = 0;
    virtual std::unique_ptr<PolicyFn> clone() const = 0;

    // Greedy choice; ties broken toward the lowest index.
    int argmax(int s, int cond) const;
    // Softmax sample.
    int sample(int s, int cond, Rng& rng) const;
};

class TabularPolicy final : public PolicyFn {
public:
    TabularPolicy(int free_cells, int num_choices, PolicyRole role);
    int num_choices() const override { return num_choices_; }
    void logits(int s, int cond, double* out) const override;
    void accumulate_logits_gradient(int s, int cond, const double* dlogits,
                                    double* grad) const override;
    std::span<double> params() override { return table_; }
    std::span<const double> params() const override { return table_; }
    std::string descriptor() const override;
    std::unique_ptr<PolicyFn> clone() const override { return std::make_unique<TabularPolicy>(*this); }

private:
    int free_cells_, num_choices_;
    PolicyRole role_;
    std::vector<double> table_;
};

class MlpPolicy final : public PolicyFn {
public:
    MlpPolicy(const GridMaze& maze, FeatureSpec features, const std::vector<int>& hidden,
              int num_choices, PolicyRole role, Rng& rng);
    int num_choices() const override { return core_.output_dim(); }
    void logits(int s, int cond, double* out) const override;
    void accumulate_logits_gradient(int s, int cond, const double* dlogits,
                                    double* grad) const override;
    void logits_batch(const int* s, const int* cond, int batch, double* out) const override;
    void accumulate_logits_gradient_batch(const int* s, const int* cond, const double* dlogits,
                                          int batch, double* grad) const override;
    std::span<double> params() override { return core_.params(); }
    std::span<const double> params() const override { return core_.params(); }
    std::string descriptor() const override;
    std::unique_ptr<PolicyFn> clone() const override { return std::make_unique<MlpPolicy>(*this); }

private:
    MlpCore::Input encode(int s, int cond, double* buf) const;
    FeatureSpec features_;
    int width_, height_, free_cells_;
    std::vector<CellState> cells_;
    PolicyRole role_;
    MlpCore core_;
};

struct AwrConfig {
    double beta_h = 3.0;
    double beta_l = 3.0;
    double weight_clip = 100.0;

    void validate() const;
};

// A^h(s_t, s_{t+k}, g) = V(s_{t+k}, g) - V(s_t, g)
double high_advantage(const ValueFn& value, int s, int sk, int g);
// A^l(s_t, s_{t+1}, w) = V(s_{t+1}, w) - V(s_t, w)
double low_advantage(const ValueFn& value, int s, int s1, int subgoal);

struct AwrStats {
    double mean_loss = 0;   // weighted negative log-likelihood
    double mean_weight = 0;
    double clipped_frac = 0;
};

// One ascent step on the advantage-weighted log-likelihood.
class PolicyLearner {
public:
    PolicyLearner(std::unique_ptr<PolicyFn> net, OptimizerConfig optimizer);

    AwrStats step_high(const HighBatch& batch, const ValueFn& value, double beta,
                       double weight_clip);
    AwrStats step_low(const LowBatch& batch, const ValueFn& value, double beta,
                      double weight_clip);

    const PolicyFn& net() const { return *net_; }
    PolicyFn& net() { return *net_; }

private:
    AwrStats weighted_step(const std::vector<int>& s, const std::vector<int>& cond,
                           const std::vector<int>& target, const std::vector<double>& weight);
    std::unique_ptr<PolicyFn> net_;
    Optimizer optimizer_;
    std::vector<double> grad_;
    std::vector<double> logits_buf_;
};

// High-level component: a learned scorer or the shortest-path oracle that
// emits the cell k steps along the path (the adjacent-cell rule extended to
// horizon k).
struct OracleHigh {
    int k = 1;
};

struct OracleLowGreedy {}; // steps toward the subgoal along a shortest path

class HierarchicalAgent {
public:
    HierarchicalAgent(std::shared_ptr<const GridMaze> maze, int k, int replan_interval);

    void set_high(std::shared_ptr<const PolicyFn> high);
    void set_high_oracle();
    void set_low(std::shared_ptr<const PolicyFn> low);
    void set_low_oracle();
    // Flat mode: the low policy is conditioned directly on the goal.
    void set_flat(std::shared_ptr<const PolicyFn> flat);

    void set_stochastic(bool stochastic) { stochastic_ = stochastic; }
    int k() const { return k_; }
    int replan_interval() const { return replan_interval_; }
    const GridMaze& maze() const { return *maze_; }

    struct RolloutState {
        int steps_since_replan = -1;
        CellState subgoal{};
    };

    // Returns Stay at the goal. Replans every replan_interval steps.
    MoveAction act(CellState s, CellState g, RolloutState& rs, Rng& rng) const;
    CellState current_subgoal(CellState s, CellState g, Rng& rng) const;

private:
    std::shared_ptr<const GridMaze> maze_;
    int k_;
    int replan_interval_;
    bool stochastic_ = false;
    bool flat_ = false;
    bool high_oracle_ = false;
    bool low_oracle_ = false;
    std::shared_ptr<const PolicyFn> high_;
    std::shared_ptr<const PolicyFn> low_;
};

void save_policy_checkpoint(const std::string& path, const PolicyFn& net);
std::unique_ptr<PolicyFn> load_policy_checkpoint(const std::string& path, const GridMaze& maze,
                                                 PolicyRole expected_role);

} // namespace ota
