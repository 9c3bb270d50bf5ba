#pragma once

#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "config.hpp"
#include "dataset.hpp"
#include "diagnostics.hpp"
#include "policy.hpp"
#include "value_learning.hpp"

namespace ota {

struct EvalProtocol {
    int num_goals = 5;
    int rollouts_per_goal = 50;
    std::vector<double> checkpoint_fractions = {0.8, 0.9, 1.0};
    int episode_cap = 0; // resolved to 2 * max shortest distance when 0

    static EvalProtocol from_config(const Config& cfg, const GridMaze& maze);
    int resolved_cap(const GridMaze& maze) const;
};

struct MetricsRecord {
    struct Row {
        std::string checkpoint;
        int goal_id;
        int rollout;
        bool success;
        int episode_len;
    };
    std::vector<Row> rows;
    double success_rate = 0;
    double mean_episode_len = 0;
    std::vector<double> per_goal_success;
    double wall_clock_sec = 0; // reported to the console only; files stay reproducible

    void finalize();
    std::string csv(const std::string& header_comment) const;
    void append(const MetricsRecord& other);
};

// Fixed goals, random start per rollout, exact-cell success within the cap.
MetricsRecord evaluate_agent(const HierarchicalAgent& agent, const EvalProtocol& protocol,
                             std::uint64_t seed, const std::string& checkpoint_label);

struct ValueTrainSpec {
    std::string arch = "mlp"; // tabular | mlp
    FeatureSpec features;
    std::vector<int> hidden = {256, 256};
    ExpectileConfig base;
    ObjectiveSpec objective = ObjectiveSpec::iql();
    long long steps = 20000;
    OptimizerConfig optimizer = OptimizerConfig::adam(3e-4);
    double target_polyak = 0.005;
    long long hard_sync_every = 0;
    bool terminal_bootstrap_mask = false;
    long long log_interval = 1000;
    GoalSamplingConfig goals;

    // Reads keys under `prefix.` (e.g. value.tau) plus [sampling].
    static ValueTrainSpec from_config(const Config& cfg, const std::string& prefix);
};

struct PolicyTrainSpec {
    std::string arch = "mlp"; // tabular | mlp
    FeatureSpec features;
    std::vector<int> hidden = {256, 256};
    int k = 25;
    AwrConfig awr;
    OptimizerConfig optimizer = OptimizerConfig::adam(3e-4);
    int batch_size = 256;
    long long high_steps = 0;
    long long low_steps = 0;
    long long flat_steps = 0;
    int replan_interval = 1;
    long long log_interval = 1000;
    GoalSamplingConfig goals;

    static PolicyTrainSpec from_config(const Config& cfg);
};

using CheckpointSink = std::function<void(double fraction, const ValueFn& net)>;

std::unique_ptr<ValueFn> make_value_net(const GridMaze& maze, const ValueTrainSpec& spec,
                                        std::uint64_t seed);
// Runs the full loop; logs one line per interval to `log` when non-null and
// invokes `sink` at each checkpoint fraction (and at 1.0).
std::unique_ptr<ValueLearner> train_value(const OfflineDataset& dataset,
                                          const ValueTrainSpec& spec, std::uint64_t seed,
                                          const std::vector<double>& checkpoint_fractions,
                                          std::ostream* log, const CheckpointSink& sink);

std::unique_ptr<PolicyFn> make_policy_net(const GridMaze& maze, const PolicyTrainSpec& spec,
                                          PolicyRole role, std::uint64_t seed);
std::unique_ptr<PolicyFn> train_policy(const OfflineDataset& dataset, const PolicyTrainSpec& spec,
                                       PolicyRole role, const ValueFn& value, std::uint64_t seed,
                                       const std::vector<double>& checkpoint_fractions,
                                       std::ostream* log,
                                       const std::function<void(double, const PolicyFn&)>& sink);

// Command implementations behind the CLI. They throw ConfigError for
// configuration problems and other exceptions for runtime failures.
void cmd_gen_data(const Config& cfg, const std::string& out_dir);
void cmd_train(const Config& cfg, const std::string& out_dir);
void cmd_eval(const Config& cfg, const std::string& out_dir);
void cmd_diagnose(const Config& cfg, const std::string& out_dir);
void cmd_sweep(const Config& cfg, const std::string& out_dir);
void cmd_repro(const Config& cfg, const std::string& target, const std::string& out_dir);

// Aggregated outcome of the maze-giant pipeline shared by the bottleneck,
// end-to-end gain, and discount-scaling comparisons.
struct SuiteRow {
    std::string variant; // oracle-high | high-iql | high-ota | high-gamma-scaled
    std::uint64_t seed;
    double success;
    double mean_len;
    double rc; // order-consistency of the variant's value (nan for oracle)
};
struct SuiteResult {
    std::vector<SuiteRow> rows;
    std::string config_hash;

    double mean_success(const std::string& variant) const;
    double mean_rc(const std::string& variant) const;
};

// Runs (or reuses a cached) suite under out_dir; cache key is the config
// hash + seed list embedded in suite_summary.csv.
SuiteResult run_long_horizon_suite(const Config& cfg, const std::string& out_dir);

struct ConsistencyRow {
    std::string objective;
    std::uint64_t seed;
    double rc;
};
std::vector<ConsistencyRow> run_consistency_repro(const Config& cfg, const std::string& out_dir);
std::vector<ConsistencyRow> run_nsweep_repro(const Config& cfg, const std::string& out_dir);

int default_diagnostic_k(const GridMaze& maze);
std::vector<std::uint64_t> config_seeds(const Config& cfg);
std::string artifact_header(const Config& cfg, std::uint64_t seed);
void ensure_dir(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

double mean_of(const std::vector<double>& xs);
double stderr_of(const std::vector<double>& xs);

} // namespace ota
