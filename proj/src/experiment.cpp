#include "experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>

namespace ota {

namespace {

constexpr std::uint64_t kStreamDataset = 11;
constexpr std::uint64_t kStreamValueInit = 21;
constexpr std::uint64_t kStreamValueBatch = 22;
constexpr std::uint64_t kStreamPolicyInit = 31;
constexpr std::uint64_t kStreamPolicyBatch = 32;
constexpr std::uint64_t kStreamEval = 41;

std::string fmt_g(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

std::string fraction_label(double f) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%.2f", f);
    return buf;
}

std::vector<int> to_int_vector(const std::vector<long long>& xs) {
    std::vector<int> out;
    out.reserve(xs.size());
    for (long long x : xs) out.push_back(static_cast<int>(x));
    return out;
}

template <typename T, typename Fn>
std::vector<T> parallel_map(const std::vector<std::uint64_t>& items, int workers, Fn fn) {
    std::vector<T> results(items.size());
    if (workers < 1) workers = 1;
    size_t next = 0;
    while (next < items.size()) {
        const size_t chunk = std::min(static_cast<size_t>(workers), items.size() - next);
        std::vector<std::future<T>> futs;
        futs.reserve(chunk);
        for (size_t i = 0; i < chunk; ++i) {
            const std::uint64_t item = items[next + i];
            futs.push_back(std::async(std::launch::async, [&fn, item] { return fn(item); }));
        }
        for (size_t i = 0; i < chunk; ++i) results[next + i] = futs[i].get();
        next += chunk;
    }
    return results;
}

} // namespace

void ensure_dir(const std::string& path) { std::filesystem::create_directories(path); }

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << content;
    if (!out) throw IoError("failed while writing: " + path);
}

std::string artifact_header(const Config& cfg, std::uint64_t seed) {
    return "# config=" + cfg.hash() + " seed=" + std::to_string(seed) + "\n";
}

double mean_of(const std::vector<double>& xs) {
    double s = 0;
    for (double x : xs) s += x;
    return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

double stderr_of(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    const double m = mean_of(xs);
    double ss = 0;
    for (double x : xs) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(xs.size() - 1)) /
           std::sqrt(static_cast<double>(xs.size()));
}

std::vector<std::uint64_t> config_seeds(const Config& cfg) {
    if (cfg.has("run.seeds")) {
        std::vector<std::uint64_t> seeds;
        for (long long s : cfg.get_int_list("run.seeds", {}))
            seeds.push_back(static_cast<std::uint64_t>(s));
        if (seeds.empty()) throw ConfigError("run.seeds must not be empty");
        return seeds;
    }
    return {static_cast<std::uint64_t>(cfg.get_int("run.seed", 0))};
}

int default_diagnostic_k(const GridMaze& maze) {
    const std::string& id = maze.layout_id();
    if (id == "corridor-300" || id == "maze-giant") return 25;
    if (id == "maze-medium") return 10;
    return std::max(1, std::min(25, maze.max_shortest_distance() / 10));
}

namespace {

std::shared_ptr<const GridMaze> maze_from_config(const Config& cfg) {
    const std::string layout = cfg.require_str("maze.layout");
    const double slip = cfg.get_double("maze.slip", 0.0);
    std::shared_ptr<const GridMaze> maze;
    try {
        maze = GridMaze::named(layout);
    } catch (const std::invalid_argument&) {
        if (!std::filesystem::exists(layout))
            throw ConfigError("maze.layout '" + layout + "' is neither a bundled layout nor a file");
        std::ifstream in(layout);
        std::stringstream buf;
        buf << in.rdbuf();
        maze = std::make_shared<const GridMaze>(GridMaze::parse_layout(
            buf.str(), std::filesystem::path(layout).stem().string()));
    }
    if (slip > 0.0) maze = std::make_shared<const GridMaze>(maze->with_slip(slip));
    return maze;
}

OfflineDataset dataset_from_config(const Config& cfg, std::shared_ptr<const GridMaze> maze,
                                   std::uint64_t seed) {
    if (cfg.has("dataset.path")) return load_dataset(cfg.require_str("dataset.path"), maze);
    GenerateConfig gen;
    gen.regime = regime_from_name(cfg.get_str("dataset.regime", "navigate"));
    gen.num_transitions = cfg.get_int("dataset.num_transitions", 100000);
    gen.noise = cfg.get_double("dataset.noise", -1.0);
    gen.segment_length = static_cast<int>(cfg.get_int("dataset.segment_length", 0));
    gen.episode_cap = static_cast<int>(cfg.get_int("dataset.episode_cap", 0));
    return generate_dataset(std::move(maze), gen, Rng::derive(seed, kStreamDataset).next());
}

GoalSamplingConfig sampling_from_config(const Config& cfg) {
    GoalSamplingConfig goals;
    goals.p_cur = cfg.get_double("sampling.p_cur", 0.2);
    goals.p_traj = cfg.get_double("sampling.p_traj", 0.5);
    goals.p_rand = cfg.get_double("sampling.p_rand", 0.3);
    goals.traj_geometric = cfg.get_double("sampling.traj_geometric_discount", 1.0);
    goals.validate();
    return goals;
}

OptimizerConfig optimizer_from_config(const Config& cfg, const std::string& prefix,
                                      const std::string& fallback_prefix, double lr) {
    const std::string kind =
        cfg.get_str(prefix + ".optimizer", cfg.get_str(fallback_prefix + ".optimizer", "adam"));
    if (kind == "adam") return OptimizerConfig::adam(lr);
    if (kind == "sgd") return OptimizerConfig::sgd(lr);
    throw ConfigError("unknown optimizer '" + kind + "'");
}

// prefix.key with fallback to value.key for secondary learners.
struct Scoped {
    const Config& cfg;
    std::string prefix, fallback;

    std::string str(const std::string& key, const std::string& def) const {
        return cfg.get_str(prefix + "." + key, cfg.get_str(fallback + "." + key, def));
    }
    long long integer(const std::string& key, long long def) const {
        return cfg.get_int(prefix + "." + key, cfg.get_int(fallback + "." + key, def));
    }
    double real(const std::string& key, double def) const {
        return cfg.get_double(prefix + "." + key, cfg.get_double(fallback + "." + key, def));
    }
    bool boolean(const std::string& key, bool def) const {
        return cfg.get_bool(prefix + "." + key, cfg.get_bool(fallback + "." + key, def));
    }
    std::vector<long long> int_list(const std::string& key,
                                    const std::vector<long long>& def) const {
        return cfg.get_int_list(prefix + "." + key, cfg.get_int_list(fallback + "." + key, def));
    }
};

} // namespace

EvalProtocol EvalProtocol::from_config(const Config& cfg, const GridMaze& maze) {
    EvalProtocol proto;
    proto.num_goals = static_cast<int>(cfg.get_int("eval.num_goals", 5));
    proto.rollouts_per_goal = static_cast<int>(cfg.get_int("eval.rollouts_per_goal", 50));
    proto.checkpoint_fractions = cfg.get_double_list("eval.checkpoint_fractions", {0.8, 0.9, 1.0});
    proto.episode_cap = static_cast<int>(cfg.get_int("eval.episode_cap", 0));
    if (proto.num_goals < 1 || proto.rollouts_per_goal < 1)
        throw ConfigError("eval protocol needs positive counts");
    for (double f : proto.checkpoint_fractions)
        if (!(f > 0.0 && f <= 1.0)) throw ConfigError("checkpoint fractions must lie in (0,1]");
    proto.resolved_cap(maze); // validates
    return proto;
}

int EvalProtocol::resolved_cap(const GridMaze& maze) const {
    const int cap = episode_cap > 0 ? episode_cap : 2 * maze.max_shortest_distance();
    if (cap < 1) throw ConfigError("episode cap must be positive");
    return cap;
}

void MetricsRecord::finalize() {
    int goals = 0;
    for (const Row& r : rows) goals = std::max(goals, r.goal_id + 1);
    per_goal_success.assign(static_cast<size_t>(goals), 0.0);
    std::vector<int> per_goal_count(static_cast<size_t>(goals), 0);
    double succ = 0, len = 0;
    for (const Row& r : rows) {
        succ += r.success ? 1.0 : 0.0;
        len += r.episode_len;
        per_goal_success[static_cast<size_t>(r.goal_id)] += r.success ? 1.0 : 0.0;
        per_goal_count[static_cast<size_t>(r.goal_id)] += 1;
    }
    const double n = rows.empty() ? 1.0 : static_cast<double>(rows.size());
    success_rate = succ / n;
    mean_episode_len = len / n;
    for (size_t gi = 0; gi < per_goal_success.size(); ++gi)
        if (per_goal_count[gi] > 0) per_goal_success[gi] /= per_goal_count[gi];
}

void MetricsRecord::append(const MetricsRecord& other) {
    rows.insert(rows.end(), other.rows.begin(), other.rows.end());
}

std::string MetricsRecord::csv(const std::string& header_comment) const {
    std::string out = header_comment + "checkpoint,goal_id,rollout,success,episode_len\n";
    for (const Row& r : rows)
        out += r.checkpoint + "," + std::to_string(r.goal_id) + "," + std::to_string(r.rollout) +
               "," + (r.success ? "1" : "0") + "," + std::to_string(r.episode_len) + "\n";
    return out;
}

MetricsRecord evaluate_agent(const HierarchicalAgent& agent, const EvalProtocol& protocol,
                             std::uint64_t seed, const std::string& checkpoint_label) {
    const GridMaze& maze = agent.maze();
    const int cap = protocol.resolved_cap(maze);
    const auto goals = evaluation_goals(maze, protocol.num_goals);
    const auto t0 = std::chrono::steady_clock::now();
    MetricsRecord record;
    for (int gi = 0; gi < protocol.num_goals; ++gi) {
        const CellState g = goals[static_cast<size_t>(gi)];
        for (int r = 0; r < protocol.rollouts_per_goal; ++r) {
            Rng rng = Rng::derive(seed, kStreamEval + (static_cast<std::uint64_t>(gi) << 20) +
                                            static_cast<std::uint64_t>(r));
            CellState s = maze.cell_at(rng.below_int(maze.free_cell_count()));
            while (s == g) s = maze.cell_at(rng.below_int(maze.free_cell_count()));
            HierarchicalAgent::RolloutState rs;
            bool success = false;
            int len = cap;
            for (int step = 0; step < cap; ++step) {
                const MoveAction a = agent.act(s, g, rs, rng);
                s = maze.step(s, a, rng);
                if (s == g) {
                    success = true;
                    len = step + 1;
                    break;
                }
            }
            record.rows.push_back(MetricsRecord::Row{checkpoint_label, gi, r, success, len});
        }
    }
    record.finalize();
    record.wall_clock_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return record;
}

ValueTrainSpec ValueTrainSpec::from_config(const Config& cfg, const std::string& prefix) {
    Scoped sc{cfg, prefix, "value"};
    ValueTrainSpec spec;
    spec.arch = sc.str("arch", "mlp");
    if (spec.arch != "mlp" && spec.arch != "tabular")
        throw ConfigError(prefix + ".arch must be mlp or tabular");
    spec.features = FeatureSpec::parse(sc.str("features", "normalized-coords"));
    spec.hidden = to_int_vector(sc.int_list("hidden", {256, 256}));
    spec.base.tau = sc.real("tau", 0.7);
    spec.base.gamma = sc.real("gamma", 0.99);
    spec.base.learning_rate = sc.real("lr", 3e-4);
    spec.base.batch_size = static_cast<int>(sc.integer("batch", 256));
    spec.base.validate();
    spec.objective = ObjectiveSpec::parse(sc.str("objective", "iql"));
    spec.steps = sc.integer("steps", 20000);
    if (spec.steps < 1) throw ConfigError(prefix + ".steps must be >= 1");
    spec.optimizer = optimizer_from_config(cfg, prefix, "value", spec.base.learning_rate);
    spec.target_polyak = sc.real("target_polyak", 0.005);
    spec.hard_sync_every = sc.integer("hard_sync_every", 0);
    spec.terminal_bootstrap_mask = sc.boolean("terminal_bootstrap_mask", false);
    spec.log_interval = sc.integer("log_interval", 1000);
    spec.goals = sampling_from_config(cfg);
    return spec;
}

PolicyTrainSpec PolicyTrainSpec::from_config(const Config& cfg) {
    PolicyTrainSpec spec;
    spec.arch = cfg.get_str("policy.arch", "mlp");
    if (spec.arch != "mlp" && spec.arch != "tabular")
        throw ConfigError("policy.arch must be mlp or tabular");
    spec.features = FeatureSpec::parse(cfg.get_str("policy.features", "normalized-coords"));
    spec.hidden = to_int_vector(cfg.get_int_list("policy.hidden", {256, 256}));
    spec.k = static_cast<int>(cfg.get_int("policy.k", 25));
    spec.awr.beta_h = cfg.get_double("policy.beta_h", 3.0);
    spec.awr.beta_l = cfg.get_double("policy.beta_l", 3.0);
    spec.awr.weight_clip = cfg.get_double("policy.weight_clip", 100.0);
    spec.awr.validate();
    const double lr = cfg.get_double("policy.lr", 3e-4);
    spec.optimizer = optimizer_from_config(cfg, "policy", "policy", lr);
    spec.batch_size = static_cast<int>(cfg.get_int("policy.batch", 256));
    spec.high_steps = cfg.get_int("policy.high_steps", 0);
    spec.low_steps = cfg.get_int("policy.low_steps", 0);
    spec.flat_steps = cfg.get_int("policy.flat_steps", 0);
    spec.replan_interval = static_cast<int>(cfg.get_int("policy.replan_interval", 1));
    spec.log_interval = cfg.get_int("policy.log_interval", 1000);
    spec.goals = sampling_from_config(cfg);
    if (spec.k < 1) throw ConfigError("policy.k must be >= 1");
    return spec;
}

std::unique_ptr<ValueFn> make_value_net(const GridMaze& maze, const ValueTrainSpec& spec,
                                        std::uint64_t seed) {
    if (spec.arch == "tabular") return std::make_unique<TabularValue>(maze.free_cell_count());
    Rng rng = Rng::derive(seed, kStreamValueInit);
    return std::make_unique<MlpValue>(maze, spec.features, spec.hidden, rng);
}

std::unique_ptr<ValueLearner> train_value(const OfflineDataset& dataset,
                                          const ValueTrainSpec& spec, std::uint64_t seed,
                                          const std::vector<double>& checkpoint_fractions,
                                          std::ostream* log, const CheckpointSink& sink) {
    ValueLearnConfig lc;
    lc.base = spec.base;
    lc.objective = spec.objective;
    lc.optimizer = spec.optimizer;
    lc.target_polyak = spec.target_polyak;
    lc.hard_sync_every = spec.hard_sync_every;
    lc.terminal_bootstrap_mask = spec.terminal_bootstrap_mask;
    auto learner = std::make_unique<ValueLearner>(make_value_net(dataset.maze(), spec, seed), lc);

    std::vector<double> fractions = checkpoint_fractions;
    std::sort(fractions.begin(), fractions.end());
    fractions.erase(std::unique(fractions.begin(), fractions.end()), fractions.end());

    Rng rng = Rng::derive(seed, kStreamValueBatch);
    const int n = spec.objective.sample_n();
    size_t next_ckpt = 0;
    for (long long step = 1; step <= spec.steps; ++step) {
        const ValueBatch batch =
            dataset.sample_option_batch(spec.goals, n, spec.base.batch_size, rng);
        const StepStats stats = learner->step(batch);
        if (log && (step % spec.log_interval == 0 || step == spec.steps))
            (*log) << format_training_log_line(step, spec.objective.name(), stats) << "\n";
        while (next_ckpt < fractions.size() &&
               step >= static_cast<long long>(fractions[next_ckpt] * spec.steps + 0.5)) {
            if (sink) sink(fractions[next_ckpt], learner->net());
            ++next_ckpt;
        }
    }
    while (next_ckpt < fractions.size()) {
        if (sink) sink(fractions[next_ckpt], learner->net());
        ++next_ckpt;
    }
    return learner;
}

std::unique_ptr<PolicyFn> make_policy_net(const GridMaze& maze, const PolicyTrainSpec& spec,
                                          PolicyRole role, std::uint64_t seed) {
    const int choices = role == PolicyRole::High ? maze.free_cell_count() : kNumActions;
    if (spec.arch == "tabular")
        return std::make_unique<TabularPolicy>(maze.free_cell_count(), choices, role);
    Rng rng = Rng::derive(seed, kStreamPolicyInit + static_cast<std::uint64_t>(role) * 7);
    return std::make_unique<MlpPolicy>(maze, spec.features, spec.hidden, choices, role, rng);
}

std::unique_ptr<PolicyFn> train_policy(const OfflineDataset& dataset, const PolicyTrainSpec& spec,
                                       PolicyRole role, const ValueFn& value, std::uint64_t seed,
                                       const std::vector<double>& checkpoint_fractions,
                                       std::ostream* log,
                                       const std::function<void(double, const PolicyFn&)>& sink) {
    const long long steps = role == PolicyRole::High  ? spec.high_steps
                            : role == PolicyRole::Low ? spec.low_steps
                                                      : spec.flat_steps;
    if (steps < 1) throw ConfigError("policy training steps must be >= 1 for " +
                                     policy_role_name(role));
    PolicyLearner learner(make_policy_net(dataset.maze(), spec, role, seed), spec.optimizer);

    std::vector<double> fractions = checkpoint_fractions;
    std::sort(fractions.begin(), fractions.end());
    fractions.erase(std::unique(fractions.begin(), fractions.end()), fractions.end());

    Rng rng = Rng::derive(seed, kStreamPolicyBatch + static_cast<std::uint64_t>(role) * 13);
    size_t next_ckpt = 0;
    for (long long step = 1; step <= steps; ++step) {
        AwrStats stats;
        if (role == PolicyRole::High) {
            const HighBatch batch =
                dataset.sample_high_batch(spec.goals, spec.k, spec.batch_size, rng);
            stats = learner.step_high(batch, value, spec.awr.beta_h, spec.awr.weight_clip);
        } else if (role == PolicyRole::Low) {
            const LowBatch batch = dataset.sample_low_batch(spec.k, spec.batch_size, rng);
            stats = learner.step_low(batch, value, spec.awr.beta_l, spec.awr.weight_clip);
        } else {
            const LowBatch batch = dataset.sample_flat_batch(spec.goals, spec.batch_size, rng);
            stats = learner.step_low(batch, value, spec.awr.beta_l, spec.awr.weight_clip);
        }
        if (log && (step % spec.log_interval == 0 || step == steps)) {
            char buf[160];
            std::snprintf(buf, sizeof(buf), "%lld,%s,%.9g,%.9g,%.9g", step,
                          policy_role_name(role).c_str(), stats.mean_loss, stats.mean_weight,
                          stats.clipped_frac);
            (*log) << buf << "\n";
        }
        while (next_ckpt < fractions.size() &&
               step >= static_cast<long long>(fractions[next_ckpt] * steps + 0.5)) {
            if (sink) sink(fractions[next_ckpt], learner.net());
            ++next_ckpt;
        }
    }
    while (next_ckpt < fractions.size()) {
        if (sink) sink(fractions[next_ckpt], learner.net());
        ++next_ckpt;
    }
    return learner.net().clone();
}

void cmd_gen_data(const Config& cfg, const std::string& out_dir) {
    ensure_dir(out_dir);
    const std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_int("run.seed", 0));
    auto maze = maze_from_config(cfg);
    const OfflineDataset dataset = dataset_from_config(cfg, maze, seed);
    const std::string path = out_dir + "/dataset.txt";
    save_dataset(dataset, path);
    std::cout << "wrote " << path << " (" << dataset.total_transitions() << " transitions, "
              << dataset.trajectories().size() << " trajectories)\n";
}

void cmd_train(const Config& cfg, const std::string& out_dir) {
    ensure_dir(out_dir);
    const std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_int("run.seed", 0));
    auto maze = maze_from_config(cfg);
    const OfflineDataset dataset = dataset_from_config(cfg, maze, seed);
    if (!cfg.has("dataset.path") && cfg.get_bool("dataset.save", true))
        save_dataset(dataset, out_dir + "/dataset.txt");
    const EvalProtocol protocol = EvalProtocol::from_config(cfg, *maze);

    const ValueTrainSpec vspec = ValueTrainSpec::from_config(cfg, "value");
    std::ofstream vlog(out_dir + "/train_value.log");
    vlog << artifact_header(cfg, seed);
    auto value_sink = [&](const std::string& stem) {
        return [&, stem](double f, const ValueFn& net) {
            save_value_checkpoint(out_dir + "/" + stem + "_" + fraction_label(f) + ".ckpt", net);
            if (f == 1.0) save_value_checkpoint(out_dir + "/" + stem + ".ckpt", net);
        };
    };
    auto learner = train_value(dataset, vspec, seed, protocol.checkpoint_fractions, &vlog,
                               value_sink("value"));

    std::unique_ptr<ValueLearner> high_learner;
    const bool has_high_value = cfg.has("value_high.objective");
    if (has_high_value) {
        const ValueTrainSpec hspec = ValueTrainSpec::from_config(cfg, "value_high");
        std::ofstream hlog(out_dir + "/train_value_high.log");
        hlog << artifact_header(cfg, seed);
        high_learner = train_value(dataset, hspec, seed, protocol.checkpoint_fractions, &hlog,
                                   value_sink("value_high"));
    }

    const PolicyTrainSpec pspec = PolicyTrainSpec::from_config(cfg);
    auto policy_sink = [&](const std::string& stem) {
        return [&, stem](double f, const PolicyFn& net) {
            save_policy_checkpoint(out_dir + "/" + stem + "_" + fraction_label(f) + ".ckpt", net);
            if (f == 1.0) save_policy_checkpoint(out_dir + "/" + stem + ".ckpt", net);
        };
    };
    if (pspec.low_steps > 0) {
        std::ofstream plog(out_dir + "/train_policy_low.log");
        plog << artifact_header(cfg, seed);
        train_policy(dataset, pspec, PolicyRole::Low, learner->net(), seed,
                     protocol.checkpoint_fractions, &plog, policy_sink("policy_low"));
    }
    if (pspec.high_steps > 0) {
        const ValueFn& vh = high_learner ? high_learner->net() : learner->net();
        std::ofstream plog(out_dir + "/train_policy_high.log");
        plog << artifact_header(cfg, seed);
        train_policy(dataset, pspec, PolicyRole::High, vh, seed, protocol.checkpoint_fractions,
                     &plog, policy_sink("policy_high"));
    }
    if (pspec.flat_steps > 0) {
        std::ofstream plog(out_dir + "/train_policy_flat.log");
        plog << artifact_header(cfg, seed);
        train_policy(dataset, pspec, PolicyRole::Flat, learner->net(), seed,
                     protocol.checkpoint_fractions, &plog, policy_sink("policy_flat"));
    }
    std::cout << "training artifacts written to " << out_dir << "\n";
}

namespace {

std::string summary_csv_for(const MetricsRecord& all, const std::string& header) {
    std::string out = header + "checkpoint,success_rate,mean_episode_len,episodes\n";
    std::map<std::string, std::vector<const MetricsRecord::Row*>> by_ckpt;
    for (const auto& r : all.rows) by_ckpt[r.checkpoint].push_back(&r);
    for (const auto& [ckpt, rows] : by_ckpt) {
        double s = 0, l = 0;
        for (const auto* r : rows) {
            s += r->success ? 1 : 0;
            l += r->episode_len;
        }
        const double n = static_cast<double>(rows.size());
        out += ckpt + "," + fmt_g(s / n) + "," + fmt_g(l / n) + "," +
               std::to_string(rows.size()) + "\n";
    }
    out += "all," + fmt_g(all.success_rate) + "," + fmt_g(all.mean_episode_len) + "," +
           std::to_string(all.rows.size()) + "\n";
    return out;
}

} // namespace

void cmd_eval(const Config& cfg, const std::string& out_dir) {
    ensure_dir(out_dir);
    const std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_int("run.seed", 0));
    auto maze = maze_from_config(cfg);
    const EvalProtocol protocol = EvalProtocol::from_config(cfg, *maze);
    const PolicyTrainSpec pspec = PolicyTrainSpec::from_config(cfg);
    const std::string artifacts = cfg.get_str("eval.artifacts", out_dir);
    const std::string high_mode = cfg.get_str("eval.high", "learned");
    const std::string low_mode = cfg.get_str("eval.low", "learned");
    const bool flat = cfg.get_bool("eval.flat", false);

    MetricsRecord all;
    auto eval_one = [&](const std::string& label, const std::string& suffix) {
        HierarchicalAgent agent(maze, pspec.k, pspec.replan_interval);
        if (flat) {
            agent.set_flat(load_policy_checkpoint(artifacts + "/policy_flat" + suffix + ".ckpt",
                                                  *maze, PolicyRole::Flat));
        } else {
            if (high_mode == "oracle")
                agent.set_high_oracle();
            else
                agent.set_high(load_policy_checkpoint(artifacts + "/policy_high" + suffix + ".ckpt",
                                                      *maze, PolicyRole::High));
            if (low_mode == "oracle")
                agent.set_low_oracle();
            else
                agent.set_low(load_policy_checkpoint(artifacts + "/policy_low" + suffix + ".ckpt",
                                                     *maze, PolicyRole::Low));
        }
        MetricsRecord rec = evaluate_agent(agent, protocol, seed, label);
        all.append(rec);
    };

    const bool needs_ckpt = flat || high_mode == "learned" || low_mode == "learned";
    if (!needs_ckpt) {
        eval_one("oracle", "");
    } else {
        for (double f : protocol.checkpoint_fractions)
            eval_one(fraction_label(f), "_" + fraction_label(f));
    }
    all.finalize();
    const std::string header = artifact_header(cfg, seed);
    write_text_file(out_dir + "/metrics.csv", all.csv(header));
    write_text_file(out_dir + "/summary.csv", summary_csv_for(all, header));
    std::cout << "success_rate " << fmt_g(all.success_rate) << " mean_episode_len "
              << fmt_g(all.mean_episode_len) << " (episodes " << all.rows.size() << ", "
              << fmt_g(all.wall_clock_sec) << "s wall)\n";
}

void cmd_diagnose(const Config& cfg, const std::string& out_dir) {
    ensure_dir(out_dir);
    const std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_int("run.seed", 0));
    auto maze = maze_from_config(cfg);
    const std::string ckpt = cfg.get_str("diagnose.checkpoint", out_dir + "/value.ckpt");
    const auto value = load_value_checkpoint(ckpt, *maze);
    const double gamma = cfg.get_double("value.gamma", 0.99);
    const int k = static_cast<int>(cfg.get_int("diagnostics.k", default_diagnostic_k(*maze)));

    Rng rng = Rng::derive(seed, kStreamEval);
    const auto trajs = collect_optimal_trajectories(*maze, diagnostic_pairs(*maze), rng);
    std::vector<ConsistencyReport> reports;
    std::string header = artifact_header(cfg, seed);
    for (size_t i = 0; i < trajs.size(); ++i) {
        reports.push_back(order_consistency_ratio(*value, *maze, trajs[i], k));
        const ValueProfile profile = value_profile(*value, *maze, trajs[i], gamma);
        write_text_file(out_dir + "/profile_" + std::to_string(i) + ".csv",
                        header + profile_csv(profile));
    }
    write_text_file(out_dir + "/consistency.csv", header + consistency_csv(reports));
    std::vector<double> ratios;
    for (const auto& r : reports) ratios.push_back(r.ratio);
    std::cout << "mean r_c " << fmt_g(mean_of(ratios)) << " over " << reports.size()
              << " trajectories (k=" << k << ")\n";
}

namespace {

struct CellOutcome {
    std::string objective;
    std::uint64_t seed;
    double rc;
};

CellOutcome run_value_cell(const Config& cfg, std::shared_ptr<const GridMaze> maze,
                           const ObjectiveSpec& objective, std::uint64_t seed,
                           const std::string& cell_dir, int k) {
    ensure_dir(cell_dir);
    const OfflineDataset dataset = dataset_from_config(cfg, maze, seed);
    ValueTrainSpec spec = ValueTrainSpec::from_config(cfg, "value");
    spec.objective = objective;
    std::ofstream log(cell_dir + "/train_value.log");
    log << artifact_header(cfg, seed);
    auto learner = train_value(dataset, spec, seed, {1.0}, &log,
                               [&](double, const ValueFn& net) {
                                   save_value_checkpoint(cell_dir + "/value.ckpt", net);
                               });
    Rng rng = Rng::derive(seed, kStreamEval);
    const auto trajs = collect_optimal_trajectories(*maze, diagnostic_pairs(*maze), rng);
    std::vector<ConsistencyReport> reports;
    std::vector<double> ratios;
    for (const auto& traj : trajs) {
        reports.push_back(order_consistency_ratio(learner->net(), *maze, traj, k));
        ratios.push_back(reports.back().ratio);
    }
    write_text_file(cell_dir + "/consistency.csv",
                    artifact_header(cfg, seed) + consistency_csv(reports));
    // r^c averaged per trajectory first, then over trajectories.
    return CellOutcome{objective.name(), seed, mean_of(ratios)};
}

} // namespace

void cmd_sweep(const Config& cfg, const std::string& out_dir) {
    ensure_dir(out_dir);
    auto maze = maze_from_config(cfg);
    std::vector<ObjectiveSpec> objectives;
    if (cfg.has("sweep.objectives")) {
        std::istringstream in(cfg.require_str("sweep.objectives"));
        std::string item;
        while (std::getline(in, item, ';')) {
            item.erase(0, item.find_first_not_of(" \t"));
            item.erase(item.find_last_not_of(" \t") + 1);
            if (!item.empty()) objectives.push_back(ObjectiveSpec::parse(item));
        }
    } else if (cfg.has("sweep.n")) {
        for (long long n : cfg.get_int_list("sweep.n", {}))
            objectives.push_back(ObjectiveSpec::ota(static_cast<int>(n)));
    } else {
        throw ConfigError("sweep needs sweep.n or sweep.objectives");
    }
    if (objectives.empty()) throw ConfigError("sweep has no objectives");
    const auto seeds = config_seeds(cfg);
    const int workers = static_cast<int>(cfg.get_int("run.workers", 2));
    const int k = static_cast<int>(cfg.get_int("diagnostics.k", default_diagnostic_k(*maze)));

    std::vector<CellOutcome> outcomes;
    for (const ObjectiveSpec& obj : objectives) {
        auto rows = parallel_map<CellOutcome>(seeds, workers, [&](std::uint64_t seed) {
            const std::string cell_dir =
                out_dir + "/" + obj.name() + "_seed" + std::to_string(seed);
            return run_value_cell(cfg, maze, obj, seed, cell_dir, k);
        });
        outcomes.insert(outcomes.end(), rows.begin(), rows.end());
    }
    std::string csv = "# config=" + cfg.hash() + "\nobjective,seed,r_c\n";
    for (const auto& o : outcomes)
        csv += o.objective + "," + std::to_string(o.seed) + "," + fmt_g(o.rc) + "\n";
    write_text_file(out_dir + "/sweep_summary.csv", csv);
    for (const ObjectiveSpec& obj : objectives) {
        std::vector<double> rcs;
        for (const auto& o : outcomes)
            if (o.objective == obj.name()) rcs.push_back(o.rc);
        std::cout << obj.name() << " mean r_c " << fmt_g(mean_of(rcs)) << " +- "
                  << fmt_g(stderr_of(rcs)) << "\n";
    }
}

std::vector<ConsistencyRow> run_consistency_repro(const Config& cfg, const std::string& out_dir) {
    ensure_dir(out_dir);
    auto maze = maze_from_config(cfg);
    const auto seeds = config_seeds(cfg);
    const int workers = static_cast<int>(cfg.get_int("run.workers", 2));
    const int n = static_cast<int>(cfg.get_int("repro.n", 10));
    const int k = static_cast<int>(cfg.get_int("repro.k", default_diagnostic_k(*maze)));

    struct PairOutcome {
        CellOutcome iql, ota;
    };
    auto rows = parallel_map<PairOutcome>(seeds, workers, [&](std::uint64_t seed) {
        PairOutcome out;
        out.iql = run_value_cell(cfg, maze, ObjectiveSpec::iql(), seed,
                                 out_dir + "/iql_seed" + std::to_string(seed), k);
        out.ota = run_value_cell(cfg, maze, ObjectiveSpec::ota(n), seed,
                                 out_dir + "/ota_seed" + std::to_string(seed), k);
        return out;
    });

    std::vector<ConsistencyRow> result;
    std::vector<double> rc_iql, rc_ota;
    for (const auto& r : rows) {
        result.push_back({r.iql.objective, r.iql.seed, r.iql.rc});
        rc_iql.push_back(r.iql.rc);
    }
    for (const auto& r : rows) {
        result.push_back({r.ota.objective, r.ota.seed, r.ota.rc});
        rc_ota.push_back(r.ota.rc);
    }
    std::string csv = "# config=" + cfg.hash() + "\nobjective,seed,r_c\n";
    for (const auto& r : result)
        csv += r.objective + "," + std::to_string(r.seed) + "," + fmt_g(r.rc) + "\n";
    csv += "iql,mean," + fmt_g(mean_of(rc_iql)) + "\niql,stderr," + fmt_g(stderr_of(rc_iql)) + "\n";
    csv += "ota(" + std::to_string(n) + "),mean," + fmt_g(mean_of(rc_ota)) + "\nota(" +
           std::to_string(n) + "),stderr," + fmt_g(stderr_of(rc_ota)) + "\n";
    write_text_file(out_dir + "/consistency_summary.csv", csv);
    std::cout << "r_c iql " << fmt_g(mean_of(rc_iql)) << " +- " << fmt_g(stderr_of(rc_iql))
              << " | ota(" << n << ") " << fmt_g(mean_of(rc_ota)) << " +- "
              << fmt_g(stderr_of(rc_ota)) << "\n";
    return result;
}

std::vector<ConsistencyRow> run_nsweep_repro(const Config& cfg, const std::string& out_dir) {
    ensure_dir(out_dir);
    auto maze = maze_from_config(cfg);
    const auto seeds = config_seeds(cfg);
    const int workers = static_cast<int>(cfg.get_int("run.workers", 2));
    const int k = static_cast<int>(cfg.get_int("repro.k", default_diagnostic_k(*maze)));
    const auto n_values = cfg.get_int_list("repro.n_values", {1, 2, 3, 5, 10, 20, 50});

    std::vector<ConsistencyRow> result;
    for (long long n : n_values) {
        const ObjectiveSpec obj = ObjectiveSpec::ota(static_cast<int>(n));
        auto rows = parallel_map<CellOutcome>(seeds, workers, [&](std::uint64_t seed) {
            return run_value_cell(cfg, maze, obj, seed,
                                  out_dir + "/n" + std::to_string(n) + "_seed" +
                                      std::to_string(seed),
                                  k);
        });
        for (const auto& r : rows) result.push_back({r.objective, r.seed, r.rc});
    }
    std::string csv = "# config=" + cfg.hash() + "\nn,seed,r_c\n";
    for (const auto& r : result) {
        const ObjectiveSpec obj = ObjectiveSpec::parse(r.objective);
        csv += std::to_string(obj.n) + "," + std::to_string(r.seed) + "," + fmt_g(r.rc) + "\n";
    }
    for (long long n : n_values) {
        std::vector<double> rcs;
        for (const auto& r : result)
            if (ObjectiveSpec::parse(r.objective).n == n) rcs.push_back(r.rc);
        csv += std::to_string(n) + ",mean," + fmt_g(mean_of(rcs)) + "\n";
        std::cout << "n=" << n << " mean r_c " << fmt_g(mean_of(rcs)) << "\n";
    }
    write_text_file(out_dir + "/nsweep_summary.csv", csv);
    return result;
}

double SuiteResult::mean_success(const std::string& variant) const {
    std::vector<double> xs;
    for (const auto& r : rows)
        if (r.variant == variant) xs.push_back(r.success);
    return mean_of(xs);
}

double SuiteResult::mean_rc(const std::string& variant) const {
    std::vector<double> xs;
    for (const auto& r : rows)
        if (r.variant == variant && !std::isnan(r.rc)) xs.push_back(r.rc);
    return mean_of(xs);
}

namespace {

std::string suite_cache_header(const Config& cfg, const std::vector<std::uint64_t>& seeds) {
    std::string line = "# config=" + cfg.hash() + " seeds=";
    for (size_t i = 0; i < seeds.size(); ++i)
        line += (i ? "," : "") + std::to_string(seeds[i]);
    return line;
}

std::vector<SuiteRow> run_suite_seed(const Config& cfg, std::shared_ptr<const GridMaze> maze,
                                     std::uint64_t seed, const std::string& seed_dir) {
    ensure_dir(seed_dir);
    const int n = static_cast<int>(cfg.get_int("repro.n", 10));
    const int rc_k = static_cast<int>(cfg.get_int("repro.k", default_diagnostic_k(*maze)));
    const OfflineDataset dataset = dataset_from_config(cfg, maze, seed);

    auto train_objective = [&](const ObjectiveSpec& obj, const std::string& stem) {
        ValueTrainSpec spec = ValueTrainSpec::from_config(cfg, "value");
        spec.objective = obj;
        std::ofstream log(seed_dir + "/train_" + stem + ".log");
        log << artifact_header(cfg, seed);
        return train_value(dataset, spec, seed, {1.0}, &log, [&](double, const ValueFn& net) {
            save_value_checkpoint(seed_dir + "/" + stem + ".ckpt", net);
        });
    };
    auto v_iql = train_objective(ObjectiveSpec::iql(), "value_iql");
    auto v_ota = train_objective(ObjectiveSpec::ota(n), "value_ota");
    auto v_gs = train_objective(ObjectiveSpec::gamma_scaled(n), "value_gs");

    const PolicyTrainSpec pspec = PolicyTrainSpec::from_config(cfg);
    std::ofstream low_log(seed_dir + "/train_policy_low.log");
    low_log << artifact_header(cfg, seed);
    auto low = train_policy(dataset, pspec, PolicyRole::Low, v_iql->net(), seed, {1.0}, &low_log,
                            [&](double, const PolicyFn& net) {
                                save_policy_checkpoint(seed_dir + "/policy_low.ckpt", net);
                            });

    auto train_high = [&](const ValueFn& value, const std::string& stem) {
        std::ofstream log(seed_dir + "/train_" + stem + ".log");
        log << artifact_header(cfg, seed);
        return train_policy(dataset, pspec, PolicyRole::High, value, seed, {1.0}, &log,
                            [&](double, const PolicyFn& net) {
                                save_policy_checkpoint(seed_dir + "/" + stem + ".ckpt", net);
                            });
    };
    auto high_iql = train_high(v_iql->net(), "policy_high_iql");
    auto high_ota = train_high(v_ota->net(), "policy_high_ota");
    auto high_gs = train_high(v_gs->net(), "policy_high_gs");

    EvalProtocol protocol = EvalProtocol::from_config(cfg, *maze);
    Rng rc_rng = Rng::derive(seed, kStreamEval);
    const auto trajs = collect_optimal_trajectories(*maze, diagnostic_pairs(*maze), rc_rng);
    auto rc_of = [&](const ValueFn& value) {
        std::vector<double> ratios;
        for (const auto& traj : trajs)
            ratios.push_back(order_consistency_ratio(value, *maze, traj, rc_k).ratio);
        return mean_of(ratios);
    };
    const double rc_iql = rc_of(v_iql->net());
    const double rc_ota = rc_of(v_ota->net());
    const double rc_gs = rc_of(v_gs->net());

    std::shared_ptr<const PolicyFn> low_shared(std::move(low));
    auto eval_variant = [&](const std::string& name, const PolicyFn* high, double rc) {
        HierarchicalAgent agent(maze, pspec.k, pspec.replan_interval);
        if (high)
            agent.set_high(std::shared_ptr<const PolicyFn>(high->clone().release()));
        else
            agent.set_high_oracle();
        agent.set_low(low_shared);
        MetricsRecord rec = evaluate_agent(agent, protocol, seed, "final");
        write_text_file(seed_dir + "/metrics_" + name + ".csv",
                        rec.csv(artifact_header(cfg, seed)));
        return SuiteRow{name, seed, rec.success_rate, rec.mean_episode_len, rc};
    };
    std::vector<SuiteRow> rows;
    rows.push_back(eval_variant("oracle-high", nullptr, std::nan("")));
    rows.push_back(eval_variant("high-iql", high_iql.get(), rc_iql));
    rows.push_back(eval_variant("high-ota", high_ota.get(), rc_ota));
    rows.push_back(eval_variant("high-gamma-scaled", high_gs.get(), rc_gs));
    return rows;
}

} // namespace

SuiteResult run_long_horizon_suite(const Config& cfg, const std::string& out_dir) {
    ensure_dir(out_dir);
    const auto seeds = config_seeds(cfg);
    const std::string cache_path = out_dir + "/suite_summary.csv";
    const std::string expected_header = suite_cache_header(cfg, seeds);

    SuiteResult result;
    result.config_hash = cfg.hash();
    {
        std::ifstream in(cache_path);
        if (in) {
            std::string first;
            std::getline(in, first);
            if (first == expected_header) {
                std::string line;
                std::getline(in, line); // column header
                while (std::getline(in, line)) {
                    if (line.empty()) continue;
                    std::istringstream row(line);
                    std::string variant, seed_s, succ_s, len_s, rc_s;
                    std::getline(row, variant, ',');
                    std::getline(row, seed_s, ',');
                    std::getline(row, succ_s, ',');
                    std::getline(row, len_s, ',');
                    std::getline(row, rc_s, ',');
                    result.rows.push_back(SuiteRow{variant, std::stoull(seed_s),
                                                   std::stod(succ_s), std::stod(len_s),
                                                   rc_s.empty() ? std::nan("") : std::stod(rc_s)});
                }
                if (!result.rows.empty()) return result;
                result.rows.clear();
            }
        }
    }

    auto maze = maze_from_config(cfg);
    const int workers = static_cast<int>(cfg.get_int("run.workers", 2));
    auto per_seed = parallel_map<std::vector<SuiteRow>>(seeds, workers, [&](std::uint64_t seed) {
        return run_suite_seed(cfg, maze, seed, out_dir + "/seed" + std::to_string(seed));
    });
    for (const auto& rows : per_seed)
        result.rows.insert(result.rows.end(), rows.begin(), rows.end());

    std::string csv = expected_header + "\nvariant,seed,success,mean_len,r_c\n";
    for (const auto& r : result.rows)
        csv += r.variant + "," + std::to_string(r.seed) + "," + fmt_g(r.success) + "," +
               fmt_g(r.mean_len) + "," + (std::isnan(r.rc) ? "" : fmt_g(r.rc)) + "\n";
    write_text_file(cache_path, csv);
    return result;
}

void cmd_repro(const Config& cfg_in, const std::string& target, const std::string& out_dir) {
    Config cfg = cfg_in;
    auto default_key = [&](const std::string& key, const std::string& value) {
        if (!cfg.has(key)) cfg.set(key, value);
    };
    if (target == "consistency" || target == "n-sweep") {
        default_key("maze.layout", "corridor-300");
        default_key("dataset.regime", "navigate");
    } else if (target == "bottleneck" || target == "gamma") {
        default_key("maze.layout", "maze-giant");
        default_key("dataset.regime", "stitch");
    } else {
        throw ConfigError("unknown repro target '" + target +
                          "' (expected bottleneck|consistency|n-sweep|gamma)");
    }

    if (target == "consistency") {
        run_consistency_repro(cfg, out_dir);
        return;
    }
    if (target == "n-sweep") {
        run_nsweep_repro(cfg, out_dir);
        return;
    }
    const SuiteResult suite = run_long_horizon_suite(cfg, out_dir);
    if (target == "bottleneck") {
        std::string csv = "# config=" + cfg.hash() + "\nvariant,mean_success\n";
        for (const std::string v : {"oracle-high", "high-iql", "high-ota"})
            csv += std::string(v) + "," + fmt_g(suite.mean_success(v)) + "\n";
        write_text_file(out_dir + "/bottleneck_summary.csv", csv);
        std::cout << "oracle-high " << fmt_g(suite.mean_success("oracle-high")) << " | high-iql "
                  << fmt_g(suite.mean_success("high-iql")) << " | high-ota "
                  << fmt_g(suite.mean_success("high-ota")) << "\n";
    } else { // gamma
        std::string csv = "# config=" + cfg.hash() + "\nvariant,mean_success,mean_r_c\n";
        for (const std::string v : {"high-ota", "high-gamma-scaled", "high-iql"})
            csv += std::string(v) + "," + fmt_g(suite.mean_success(v)) + "," +
                   fmt_g(suite.mean_rc(v)) + "\n";
        write_text_file(out_dir + "/gamma_summary.csv", csv);
        std::cout << "ota success " << fmt_g(suite.mean_success("high-ota")) << " r_c "
                  << fmt_g(suite.mean_rc("high-ota")) << " | gamma-scaled success "
                  << fmt_g(suite.mean_success("high-gamma-scaled")) << " r_c "
                  << fmt_g(suite.mean_rc("high-gamma-scaled")) << "\n";
    }
}

} // namespace ota
