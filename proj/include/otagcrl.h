/* otagcrl — offline goal-conditioned RL laboratory on gridworld mazes.
 *
 * C API over the C++ core: opaque handles, integer status codes, and a
 * thread-local error message. All functions returning a pointer yield NULL
 * on failure; functions returning int yield OTA_OK (0) on success. Call
 * ota_last_error() for the failure message of the current thread's last
 * failing call.
 */
#ifndef OTAGCRL_H
#define OTAGCRL_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef struct ota_maze ota_maze;
typedef struct ota_rng ota_rng;
typedef struct ota_dataset ota_dataset;
typedef struct ota_value ota_value;
typedef struct ota_config ota_config;

enum ota_status {
    OTA_OK = 0,
    OTA_ERR_INVALID_ARGUMENT = 1,
    OTA_ERR_CONFIG = 2,
    OTA_ERR_IO = 3,
    OTA_ERR_NUMERIC = 4,
    OTA_ERR_UNKNOWN = 5
};

/* Actions, in the order used everywhere: N, E, S, W, Stay. */
enum ota_action {
    OTA_ACTION_NORTH = 0,
    OTA_ACTION_EAST = 1,
    OTA_ACTION_SOUTH = 2,
    OTA_ACTION_WEST = 3,
    OTA_ACTION_STAY = 4
};

const char* ota_version(void);
const char* ota_last_error(void);

/* ---- randomness ---- */
ota_rng* ota_rng_create(uint64_t seed);
void ota_rng_destroy(ota_rng* rng);

/* ---- mazes ---- */
ota_maze* ota_maze_create_named(const char* name);
/* '#' walls / '.' free cells, one row per line. */
ota_maze* ota_maze_parse_layout(const char* text, const char* layout_id, double slip_prob);
void ota_maze_destroy(ota_maze* maze);
int ota_maze_width(const ota_maze* maze);
int ota_maze_height(const ota_maze* maze);
int ota_maze_free_cells(const ota_maze* maze);
int ota_maze_is_wall(const ota_maze* maze, int x, int y); /* 1/0, -1 on error */
/* Writes the layout text into buf (nul-terminated); returns required size
 * including the terminator, or -1 on error. */
long ota_maze_render_layout(const ota_maze* maze, char* buf, size_t buf_size);
int ota_maze_step(const ota_maze* maze, int x, int y, int action, ota_rng* rng, int* out_x,
                  int* out_y);
int ota_maze_shortest_distance(const ota_maze* maze, int sx, int sy, int gx, int gy);
int ota_maze_oracle_subgoal(const ota_maze* maze, int sx, int sy, int gx, int gy, int* out_x,
                            int* out_y);

/* ---- datasets ---- */
ota_dataset* ota_dataset_generate(const ota_maze* maze, const char* regime,
                                  long long num_transitions, double noise, int segment_length,
                                  uint64_t seed);
int ota_dataset_save(const ota_dataset* dataset, const char* path);
/* maze may be NULL: the bundled layout named in the file header is used. */
ota_dataset* ota_dataset_load(const char* path, const ota_maze* maze);
void ota_dataset_destroy(ota_dataset* dataset);
long long ota_dataset_num_transitions(const ota_dataset* dataset);
long long ota_dataset_num_trajectories(const ota_dataset* dataset);

/* ---- value functions ---- */
double ota_expectile_loss(double u, double tau);
double ota_optimal_value(long long d, double gamma);
double ota_optimal_value_abstracted(long long d, int n, double gamma);
/* Returns the estimated temporal distance; sets *saturated to 1 and returns
 * +inf when the value sits at or below the -1/(1-gamma) asymptote. */
double ota_temporal_distance(double value, double gamma, int* saturated);

/* Exact DP fixed point of the objective ("iql", "ota", "gamma_scaled") on a
 * deterministic maze (<= 2500 free cells). n is ignored for "iql". */
ota_value* ota_value_solve_fixed_point(const ota_maze* maze, const char* objective, int n,
                                       double gamma);
ota_value* ota_value_load(const char* ckpt_path, const ota_maze* maze);
int ota_value_save(const ota_value* value, const char* path);
void ota_value_destroy(ota_value* value);
double ota_value_evaluate(const ota_value* value, const ota_maze* maze, int sx, int sy, int gx,
                          int gy);

/* Order-consistency ratio of a value function along the shortest path from
 * (sx,sy) to (gx,gy); -1.0 on error. */
double ota_order_consistency(const ota_value* value, const ota_maze* maze, int sx, int sy, int gx,
                             int gy, int k);

/* ---- configs and experiment commands ---- */
ota_config* ota_config_create(void);
ota_config* ota_config_load(const char* path);
int ota_config_set(ota_config* cfg, const char* key, const char* value);
/* Returns NULL when the key is absent; the pointer stays valid until the next
 * mutation of cfg. */
const char* ota_config_get(const ota_config* cfg, const char* key);
void ota_config_destroy(ota_config* cfg);

int ota_run_gen_data(const ota_config* cfg, const char* out_dir);
int ota_run_train(const ota_config* cfg, const char* out_dir);
int ota_run_eval(const ota_config* cfg, const char* out_dir);
int ota_run_diagnose(const ota_config* cfg, const char* out_dir);
int ota_run_sweep(const ota_config* cfg, const char* out_dir);
/* target: bottleneck | consistency | n-sweep | gamma */
int ota_run_repro(const ota_config* cfg, const char* target, const char* out_dir);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* OTAGCRL_H */
