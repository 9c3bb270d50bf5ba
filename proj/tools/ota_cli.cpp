// Command-line front end. Links only the public C API.

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "otagcrl.h"

namespace {

struct CommonArgs {
    std::string config_path;
    long long seed = -1;
    std::string out_dir = "out";
    int workers = -1;
    std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "config file (key = value with [sections])");
    cmd->add_option("--seed", args.seed, "seed; overrides run.seed");
    cmd->add_option("--out", args.out_dir, "output directory")->capture_default_str();
    cmd->add_option("--workers", args.workers, "parallel workers; overrides run.workers");
    cmd->add_option("--override", args.overrides, "extra key=value settings (repeatable)");
}

// Builds the config handle from file + flags. Returns nullptr after printing
// the error.
ota_config* build_config(const CommonArgs& args) {
    ota_config* cfg = args.config_path.empty() ? ota_config_create()
                                               : ota_config_load(args.config_path.c_str());
    if (!cfg) {
        std::fprintf(stderr, "error: %s\n", ota_last_error());
        return nullptr;
    }
    if (args.seed >= 0)
        ota_config_set(cfg, "run.seed", std::to_string(args.seed).c_str());
    if (args.workers >= 1)
        ota_config_set(cfg, "run.workers", std::to_string(args.workers).c_str());
    for (const std::string& kv : args.overrides) {
        const size_t eq = kv.find('=');
        if (eq == std::string::npos) {
            std::fprintf(stderr, "error: --override expects key=value, got '%s'\n", kv.c_str());
            ota_config_destroy(cfg);
            return nullptr;
        }
        const std::string key = kv.substr(0, eq);
        const std::string value = kv.substr(eq + 1);
        if (ota_config_set(cfg, key.c_str(), value.c_str()) != OTA_OK) {
            std::fprintf(stderr, "error: %s\n", ota_last_error());
            ota_config_destroy(cfg);
            return nullptr;
        }
    }
    return cfg;
}

int exit_code_for(int status) {
    if (status == OTA_OK) return 0;
    if (status == OTA_ERR_CONFIG || status == OTA_ERR_INVALID_ARGUMENT) return 2;
    return 3;
}

int run_command(const CommonArgs& args, int (*fn)(const ota_config*, const char*)) {
    ota_config* cfg = build_config(args);
    if (!cfg) return 2;
    const int status = fn(cfg, args.out_dir.c_str());
    if (status != OTA_OK) std::fprintf(stderr, "error: %s\n", ota_last_error());
    ota_config_destroy(cfg);
    return exit_code_for(status);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"offline goal-conditioned RL laboratory on gridworld mazes"};
    app.require_subcommand(1);
    app.set_version_flag("--version", ota_version());

    CommonArgs gen_args, train_args, eval_args, diag_args, sweep_args, repro_args;
    CLI::App* gen = app.add_subcommand("gen-data", "generate an offline dataset");
    add_common(gen, gen_args);
    CLI::App* train = app.add_subcommand("train", "train value functions and policies");
    add_common(train, train_args);
    CLI::App* eval = app.add_subcommand("eval", "evaluate an agent with the fixed-goal protocol");
    add_common(eval, eval_args);
    CLI::App* diag = app.add_subcommand("diagnose", "order-consistency and value profiles");
    add_common(diag, diag_args);
    CLI::App* sweep = app.add_subcommand("sweep", "cross product of objectives x seeds");
    add_common(sweep, sweep_args);
    CLI::App* repro =
        app.add_subcommand("repro", "bundled end-to-end recipes with comparison tables");
    std::string repro_target;
    repro->add_option("target", repro_target, "bottleneck | consistency | n-sweep | gamma")
        ->required();
    add_common(repro, repro_args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    if (gen->parsed()) return run_command(gen_args, ota_run_gen_data);
    if (train->parsed()) return run_command(train_args, ota_run_train);
    if (eval->parsed()) return run_command(eval_args, ota_run_eval);
    if (diag->parsed()) return run_command(diag_args, ota_run_diagnose);
    if (sweep->parsed()) return run_command(sweep_args, ota_run_sweep);
    if (repro->parsed()) {
        ota_config* cfg = build_config(repro_args);
        if (!cfg) return 2;
        const int status = ota_run_repro(cfg, repro_target.c_str(), repro_args.out_dir.c_str());
        if (status != OTA_OK) std::fprintf(stderr, "error: %s\n", ota_last_error());
        ota_config_destroy(cfg);
        return exit_code_for(status);
    }
    return 2;
}
