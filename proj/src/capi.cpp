#include "otagcrl.h"

#include <cmath>
#include <cstring>
#include <memory>
#include <string>

#include "config.hpp"
#include "dataset.hpp"
#include "diagnostics.hpp"
#include "experiment.hpp"
#include "maze.hpp"
#include "value_learning.hpp"

using namespace ota;

namespace {

thread_local std::string g_last_error;

void set_error(const std::string& message) { g_last_error = message; }

int status_of(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return OTA_ERR_CONFIG;
    if (dynamic_cast<const IoError*>(&e)) return OTA_ERR_IO;
    if (dynamic_cast<const NumericError*>(&e)) return OTA_ERR_NUMERIC;
    if (dynamic_cast<const std::invalid_argument*>(&e)) return OTA_ERR_INVALID_ARGUMENT;
    return OTA_ERR_UNKNOWN;
}

template <typename Fn>
auto guard_ptr(Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const std::exception& e) {
        set_error(e.what());
        return nullptr;
    }
}

template <typename Fn>
int guard_status(Fn&& fn) {
    try {
        fn();
        return OTA_OK;
    } catch (const std::exception& e) {
        set_error(e.what());
        return status_of(e);
    }
}

} // namespace

struct ota_maze {
    std::shared_ptr<const GridMaze> maze;
};
struct ota_rng {
    Rng rng;
};
struct ota_dataset {
    std::shared_ptr<const OfflineDataset> dataset;
};
struct ota_value {
    std::unique_ptr<ValueFn> value;
};
struct ota_config {
    Config cfg;
    mutable std::string scratch;
};

extern "C" {

const char* ota_version(void) { return "otagcrl 1.0"; }

const char* ota_last_error(void) { return g_last_error.c_str(); }

ota_rng* ota_rng_create(uint64_t seed) { return new ota_rng{Rng(seed)}; }
void ota_rng_destroy(ota_rng* rng) { delete rng; }

ota_maze* ota_maze_create_named(const char* name) {
    return guard_ptr([&]() -> ota_maze* {
        if (!name) throw std::invalid_argument("name is null");
        return new ota_maze{GridMaze::named(name)};
    });
}

ota_maze* ota_maze_parse_layout(const char* text, const char* layout_id, double slip_prob) {
    return guard_ptr([&]() -> ota_maze* {
        if (!text || !layout_id) throw std::invalid_argument("layout text/id is null");
        return new ota_maze{std::make_shared<const GridMaze>(
            GridMaze::parse_layout(text, layout_id, slip_prob))};
    });
}

void ota_maze_destroy(ota_maze* maze) { delete maze; }

int ota_maze_width(const ota_maze* maze) { return maze ? maze->maze->width() : -1; }
int ota_maze_height(const ota_maze* maze) { return maze ? maze->maze->height() : -1; }
int ota_maze_free_cells(const ota_maze* maze) { return maze ? maze->maze->free_cell_count() : -1; }

int ota_maze_is_wall(const ota_maze* maze, int x, int y) {
    if (!maze || !maze->maze->in_bounds(x, y)) {
        set_error("cell out of bounds");
        return -1;
    }
    return maze->maze->is_wall(x, y) ? 1 : 0;
}

long ota_maze_render_layout(const ota_maze* maze, char* buf, size_t buf_size) {
    if (!maze) {
        set_error("maze is null");
        return -1;
    }
    const std::string text = maze->maze->render_layout();
    if (buf && buf_size > 0) {
        const size_t n = std::min(buf_size - 1, text.size());
        std::memcpy(buf, text.data(), n);
        buf[n] = '\0';
    }
    return static_cast<long>(text.size() + 1);
}

int ota_maze_step(const ota_maze* maze, int x, int y, int action, ota_rng* rng, int* out_x,
                  int* out_y) {
    return guard_status([&] {
        if (!maze || !rng || !out_x || !out_y) throw std::invalid_argument("null argument");
        if (action < 0 || action >= kNumActions) throw std::invalid_argument("bad action");
        const CellState next =
            maze->maze->step(CellState{x, y}, static_cast<MoveAction>(action), rng->rng);
        *out_x = next.x;
        *out_y = next.y;
    });
}

int ota_maze_shortest_distance(const ota_maze* maze, int sx, int sy, int gx, int gy) {
    int d = -1;
    const int rc = guard_status([&] {
        if (!maze) throw std::invalid_argument("maze is null");
        maze->maze->require_free(CellState{sx, sy}, "state");
        maze->maze->require_free(CellState{gx, gy}, "goal");
        d = maze->maze->shortest_distance(CellState{sx, sy}, CellState{gx, gy});
    });
    return rc == OTA_OK ? d : -1;
}

int ota_maze_oracle_subgoal(const ota_maze* maze, int sx, int sy, int gx, int gy, int* out_x,
                            int* out_y) {
    return guard_status([&] {
        if (!maze || !out_x || !out_y) throw std::invalid_argument("null argument");
        const CellState w = maze->maze->oracle_subgoal(CellState{sx, sy}, CellState{gx, gy});
        *out_x = w.x;
        *out_y = w.y;
    });
}

ota_dataset* ota_dataset_generate(const ota_maze* maze, const char* regime,
                                  long long num_transitions, double noise, int segment_length,
                                  uint64_t seed) {
    return guard_ptr([&]() -> ota_dataset* {
        if (!maze || !regime) throw std::invalid_argument("null argument");
        GenerateConfig gen;
        gen.regime = regime_from_name(regime);
        gen.num_transitions = num_transitions;
        gen.noise = noise;
        gen.segment_length = segment_length;
        return new ota_dataset{std::make_shared<const OfflineDataset>(
            generate_dataset(maze->maze, gen, seed))};
    });
}

int ota_dataset_save(const ota_dataset* dataset, const char* path) {
    return guard_status([&] {
        if (!dataset || !path) throw std::invalid_argument("null argument");
        save_dataset(*dataset->dataset, path);
    });
}

ota_dataset* ota_dataset_load(const char* path, const ota_maze* maze) {
    return guard_ptr([&]() -> ota_dataset* {
        if (!path) throw std::invalid_argument("path is null");
        return new ota_dataset{std::make_shared<const OfflineDataset>(
            load_dataset(path, maze ? maze->maze : nullptr))};
    });
}

void ota_dataset_destroy(ota_dataset* dataset) { delete dataset; }

long long ota_dataset_num_transitions(const ota_dataset* dataset) {
    return dataset ? dataset->dataset->total_transitions() : -1;
}

long long ota_dataset_num_trajectories(const ota_dataset* dataset) {
    return dataset ? static_cast<long long>(dataset->dataset->trajectories().size()) : -1;
}

double ota_expectile_loss(double u, double tau) { return expectile_loss(u, tau); }

double ota_optimal_value(long long d, double gamma) {
    try {
        return optimal_value(d, gamma);
    } catch (const std::exception& e) {
        set_error(e.what());
        return std::nan("");
    }
}

double ota_optimal_value_abstracted(long long d, int n, double gamma) {
    try {
        return optimal_value_abstracted(d, n, gamma);
    } catch (const std::exception& e) {
        set_error(e.what());
        return std::nan("");
    }
}

double ota_temporal_distance(double value, double gamma, int* saturated) {
    try {
        const TemporalDistance td = temporal_distance(value, gamma);
        if (saturated) *saturated = td.saturated ? 1 : 0;
        return td.d;
    } catch (const std::exception& e) {
        set_error(e.what());
        return std::nan("");
    }
}

ota_value* ota_value_solve_fixed_point(const ota_maze* maze, const char* objective, int n,
                                       double gamma) {
    return guard_ptr([&]() -> ota_value* {
        if (!maze || !objective) throw std::invalid_argument("null argument");
        ObjectiveSpec spec;
        const std::string name(objective);
        if (name == "iql")
            spec = ObjectiveSpec::iql();
        else if (name == "ota")
            spec = ObjectiveSpec::ota(n);
        else if (name == "gamma_scaled")
            spec = ObjectiveSpec::gamma_scaled(n);
        else
            throw std::invalid_argument("objective must be iql|ota|gamma_scaled");
        return new ota_value{std::make_unique<TabularValue>(
            tabular_fixed_point(*maze->maze, spec, gamma))};
    });
}

ota_value* ota_value_load(const char* ckpt_path, const ota_maze* maze) {
    return guard_ptr([&]() -> ota_value* {
        if (!ckpt_path || !maze) throw std::invalid_argument("null argument");
        return new ota_value{load_value_checkpoint(ckpt_path, *maze->maze)};
    });
}

int ota_value_save(const ota_value* value, const char* path) {
    return guard_status([&] {
        if (!value || !path) throw std::invalid_argument("null argument");
        save_value_checkpoint(path, *value->value);
    });
}

void ota_value_destroy(ota_value* value) { delete value; }

double ota_value_evaluate(const ota_value* value, const ota_maze* maze, int sx, int sy, int gx,
                          int gy) {
    try {
        if (!value || !maze) throw std::invalid_argument("null argument");
        return value->value->evaluate(*maze->maze, CellState{sx, sy}, CellState{gx, gy});
    } catch (const std::exception& e) {
        set_error(e.what());
        return std::nan("");
    }
}

double ota_order_consistency(const ota_value* value, const ota_maze* maze, int sx, int sy, int gx,
                             int gy, int k) {
    try {
        if (!value || !maze) throw std::invalid_argument("null argument");
        const OptimalTrajectory traj =
            rollout_optimal_trajectory(*maze->maze, CellState{sx, sy}, CellState{gx, gy});
        return order_consistency_ratio(*value->value, *maze->maze, traj, k).ratio;
    } catch (const std::exception& e) {
        set_error(e.what());
        return -1.0;
    }
}

ota_config* ota_config_create(void) { return new ota_config{Config{}, std::string{}}; }

ota_config* ota_config_load(const char* path) {
    return guard_ptr([&]() -> ota_config* {
        if (!path) throw std::invalid_argument("path is null");
        return new ota_config{Config::parse_file(path)};
    });
}

int ota_config_set(ota_config* cfg, const char* key, const char* value) {
    return guard_status([&] {
        if (!cfg || !key || !value) throw std::invalid_argument("null argument");
        cfg->cfg.set(key, value);
    });
}

const char* ota_config_get(const ota_config* cfg, const char* key) {
    if (!cfg || !key || !cfg->cfg.has(key)) return nullptr;
    cfg->scratch = cfg->cfg.get_str(key, "");
    return cfg->scratch.c_str();
}

void ota_config_destroy(ota_config* cfg) { delete cfg; }

int ota_run_gen_data(const ota_config* cfg, const char* out_dir) {
    return guard_status([&] {
        if (!cfg || !out_dir) throw std::invalid_argument("null argument");
        cmd_gen_data(cfg->cfg, out_dir);
    });
}

int ota_run_train(const ota_config* cfg, const char* out_dir) {
    return guard_status([&] {
        if (!cfg || !out_dir) throw std::invalid_argument("null argument");
        cmd_train(cfg->cfg, out_dir);
    });
}

int ota_run_eval(const ota_config* cfg, const char* out_dir) {
    return guard_status([&] {
        if (!cfg || !out_dir) throw std::invalid_argument("null argument");
        cmd_eval(cfg->cfg, out_dir);
    });
}

int ota_run_diagnose(const ota_config* cfg, const char* out_dir) {
    return guard_status([&] {
        if (!cfg || !out_dir) throw std::invalid_argument("null argument");
        cmd_diagnose(cfg->cfg, out_dir);
    });
}

int ota_run_sweep(const ota_config* cfg, const char* out_dir) {
    return guard_status([&] {
        if (!cfg || !out_dir) throw std::invalid_argument("null argument");
        cmd_sweep(cfg->cfg, out_dir);
    });
}

int ota_run_repro(const ota_config* cfg, const char* target, const char* out_dir) {
    return guard_status([&] {
        if (!cfg || !target || !out_dir) throw std::invalid_argument("null argument");
        cmd_repro(cfg->cfg, target, out_dir);
    });
}

} // extern "C"
