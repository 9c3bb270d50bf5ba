#pragma once

#include <string>
#include <vector>

#include "approximator.hpp"
#include "maze.hpp"

namespace ota {

// States along a shortest path; strictly decreasing distance to the final
// state, which is the goal.
struct OptimalTrajectory {
    std::vector<CellState> states;

    static OptimalTrajectory from_states(const GridMaze& maze, std::vector<CellState> states);
    CellState goal() const { return states.back(); }
    int length() const { return static_cast<int>(states.size()) - 1; } // transitions
};

struct ConsistencyReport {
    double ratio = 0.0;
    int k_used = 0;
    int trajectory_length = 0;
    std::vector<bool> per_step_flags; // size trajectory_length - k + 1
};

// r^c = sum_t 1{V(s_{t+k},g) > V(s_t,g)} / (T-k+1), strict inequality.
ConsistencyReport order_consistency_ratio(const ValueFn& value, const GridMaze& maze,
                                          const OptimalTrajectory& traj, int k);

struct TemporalDistance {
    double d = 0.0; // +infinity when saturated
    bool saturated = false;
};

// d^h = log(1 + (1-gamma) V) / log gamma; exact inverse of optimal_value.
TemporalDistance temporal_distance(double value, double gamma);

struct ProfileRow {
    int t;
    int d_star;
    double v_learned;
    double d_hat; // +inf when saturated
    double v_opt;
};

struct ValueProfile {
    std::vector<ProfileRow> rows;
    std::vector<double> v_learned_norm;
    std::vector<double> v_opt_norm;
    std::vector<double> d_hat_norm;
    std::vector<double> d_star_norm;
    bool learned_degenerate = false; // constant series normalized to zeros
    bool any_saturated = false;
};

ValueProfile value_profile(const ValueFn& value, const GridMaze& maze,
                           const OptimalTrajectory& traj, double gamma);

// Fraction of (s_t, s_{t+k}, g) windows with A^h <= 0; per trajectory it is
// exactly 1 - r^c, and the aggregate averages per-trajectory rates.
double advantage_sign_error_rate(const ValueFn& value, const GridMaze& maze,
                                 const std::vector<OptimalTrajectory>& trajs, int k);

OptimalTrajectory rollout_optimal_trajectory(const GridMaze& maze, CellState s, CellState g);
std::vector<OptimalTrajectory> collect_optimal_trajectories(
    const GridMaze& maze, const std::vector<std::pair<CellState, CellState>>& pairs, Rng& rng);

// Five deterministic start/goal pairs spread over the free-cell order; used
// by diagnostics and evaluation.
std::vector<std::pair<CellState, CellState>> diagnostic_pairs(const GridMaze& maze);
std::vector<CellState> evaluation_goals(const GridMaze& maze, int num_goals);

// CSV: t,d_star,v_learned,d_hat,v_opt,v_learned_norm,v_opt_norm,d_hat_norm,d_star_norm
std::string profile_csv(const ValueProfile& profile);
// CSV: traj_id,length,k,r_c
std::string consistency_csv(const std::vector<ConsistencyReport>& reports);

} // namespace ota
