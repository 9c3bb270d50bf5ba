#include "diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "value_learning.hpp"

namespace ota {

OptimalTrajectory OptimalTrajectory::from_states(const GridMaze& maze,
                                                 std::vector<CellState> states) {
    if (states.size() < 2) throw std::invalid_argument("optimal trajectory needs >= 2 states");
    OptimalTrajectory traj{std::move(states)};
    const CellState g = traj.states.back();
    int prev = -1;
    for (size_t i = 0; i < traj.states.size(); ++i) {
        const CellState s = traj.states[i];
        maze.require_free(s, "trajectory state");
        if (i > 0) {
            const CellState p = traj.states[i - 1];
            if (std::abs(s.x - p.x) + std::abs(s.y - p.y) != 1)
                throw std::invalid_argument("trajectory states are not adjacent at step " +
                                            std::to_string(i));
        }
        const int d = maze.shortest_distance(s, g);
        if (i > 0 && d >= prev)
            throw std::invalid_argument("distance to goal does not strictly decrease at step " +
                                        std::to_string(i));
        prev = d;
    }
    if (prev != 0) throw std::invalid_argument("trajectory does not end at its goal");
    return traj;
}

ConsistencyReport order_consistency_ratio(const ValueFn& value, const GridMaze& maze,
                                          const OptimalTrajectory& traj, int k) {
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    const int t_len = traj.length();
    if (t_len < k)
        throw std::invalid_argument("trajectory length " + std::to_string(t_len) +
                                    " is shorter than k=" + std::to_string(k));
    const int gi = maze.cell_index(traj.goal());
    ConsistencyReport report;
    report.k_used = k;
    report.trajectory_length = t_len;
    report.per_step_flags.reserve(static_cast<size_t>(t_len - k + 1));
    int hits = 0;
    for (int t = 0; t + k <= t_len; ++t) {
        const double v_t = value.evaluate(maze.cell_index(traj.states[static_cast<size_t>(t)]), gi);
        const double v_tk =
            value.evaluate(maze.cell_index(traj.states[static_cast<size_t>(t + k)]), gi);
        const bool ok = v_tk > v_t; // strict: ties count as inconsistent
        report.per_step_flags.push_back(ok);
        if (ok) ++hits;
    }
    report.ratio = static_cast<double>(hits) / static_cast<double>(t_len - k + 1);
    return report;
}

TemporalDistance temporal_distance(double value, double gamma) {
    if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in (0,1)");
    const double arg = (1.0 - gamma) * value;
    if (1.0 + arg <= 0.0)
        return TemporalDistance{std::numeric_limits<double>::infinity(), true};
    return TemporalDistance{std::log1p(arg) / std::log(gamma), false};
}

namespace {

// Min-max over finite entries; constant series map to all zeros.
std::vector<double> minmax_normalize(const std::vector<double>& xs, bool* degenerate) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (double x : xs) {
        if (!std::isfinite(x)) continue;
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    std::vector<double> out(xs.size(), 0.0);
    const bool flat = !(hi > lo);
    if (degenerate) *degenerate = flat;
    for (size_t i = 0; i < xs.size(); ++i) {
        if (!std::isfinite(xs[i]))
            out[i] = xs[i];
        else
            out[i] = flat ? 0.0 : (xs[i] - lo) / (hi - lo);
    }
    return out;
}

} // namespace

ValueProfile value_profile(const ValueFn& value, const GridMaze& maze,
                           const OptimalTrajectory& traj, double gamma) {
    ValueProfile profile;
    const int gi = maze.cell_index(traj.goal());
    std::vector<double> v_learned, v_opt, d_hat, d_star;
    for (int t = 0; t < static_cast<int>(traj.states.size()); ++t) {
        const CellState s = traj.states[static_cast<size_t>(t)];
        const int d = maze.shortest_distance(s, traj.goal());
        const double v = value.evaluate(maze.cell_index(s), gi);
        const TemporalDistance td = temporal_distance(v, gamma);
        if (td.saturated) profile.any_saturated = true;
        profile.rows.push_back(ProfileRow{t, d, v, td.d, optimal_value(d, gamma)});
        v_learned.push_back(v);
        v_opt.push_back(profile.rows.back().v_opt);
        d_hat.push_back(td.d);
        d_star.push_back(static_cast<double>(d));
    }
    profile.v_learned_norm = minmax_normalize(v_learned, &profile.learned_degenerate);
    profile.v_opt_norm = minmax_normalize(v_opt, nullptr);
    profile.d_hat_norm = minmax_normalize(d_hat, nullptr);
    profile.d_star_norm = minmax_normalize(d_star, nullptr);
    return profile;
}

double advantage_sign_error_rate(const ValueFn& value, const GridMaze& maze,
                                 const std::vector<OptimalTrajectory>& trajs, int k) {
    if (trajs.empty()) throw std::invalid_argument("no trajectories given");
    double total = 0.0;
    for (const OptimalTrajectory& traj : trajs)
        total += 1.0 - order_consistency_ratio(value, maze, traj, k).ratio;
    return total / static_cast<double>(trajs.size());
}

OptimalTrajectory rollout_optimal_trajectory(const GridMaze& maze, CellState s, CellState g) {
    if (s == g) throw std::invalid_argument("optimal trajectory needs s != g");
    std::vector<CellState> states{s};
    while (!(states.back() == g)) states.push_back(maze.oracle_subgoal(states.back(), g));
    return OptimalTrajectory::from_states(maze, std::move(states));
}

std::vector<OptimalTrajectory> collect_optimal_trajectories(
    const GridMaze& maze, const std::vector<std::pair<CellState, CellState>>& pairs, Rng&) {
    std::vector<OptimalTrajectory> out;
    out.reserve(pairs.size());
    for (const auto& [s, g] : pairs) out.push_back(rollout_optimal_trajectory(maze, s, g));
    return out;
}

std::vector<std::pair<CellState, CellState>> diagnostic_pairs(const GridMaze& maze) {
    const int f = maze.free_cell_count();
    std::vector<std::pair<CellState, CellState>> pairs;
    for (int i = 0; i < 5; ++i) {
        const int a = static_cast<int>(static_cast<long long>(i) * (f - 1) / 9);
        const int b = static_cast<int>(static_cast<long long>(9 - i) * (f - 1) / 9);
        const CellState s = maze.cell_at(a);
        const CellState g = maze.cell_at(b);
        if (s == g) continue;
        pairs.emplace_back(s, g);
    }
    if (pairs.empty()) throw std::invalid_argument("maze too small for diagnostic pairs");
    return pairs;
}

std::vector<CellState> evaluation_goals(const GridMaze& maze, int num_goals) {
    if (num_goals < 1) throw std::invalid_argument("need at least one goal");
    const int f = maze.free_cell_count();
    std::vector<CellState> goals;
    const auto pairs = diagnostic_pairs(maze);
    for (int i = 0; i < num_goals; ++i) {
        if (i < static_cast<int>(pairs.size())) {
            goals.push_back(pairs[static_cast<size_t>(i)].second);
        } else {
            goals.push_back(maze.cell_at(static_cast<int>(
                static_cast<long long>(i) * (f - 1) / std::max(1, num_goals - 1))));
        }
    }
    return goals;
}

namespace {
std::string fmt_double(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}
} // namespace

std::string profile_csv(const ValueProfile& profile) {
    std::string out =
        "t,d_star,v_learned,d_hat,v_opt,v_learned_norm,v_opt_norm,d_hat_norm,d_star_norm\n";
    for (size_t i = 0; i < profile.rows.size(); ++i) {
        const ProfileRow& r = profile.rows[i];
        out += std::to_string(r.t) + "," + std::to_string(r.d_star) + "," + fmt_double(r.v_learned) +
               "," + fmt_double(r.d_hat) + "," + fmt_double(r.v_opt) + "," +
               fmt_double(profile.v_learned_norm[i]) + "," + fmt_double(profile.v_opt_norm[i]) +
               "," + fmt_double(profile.d_hat_norm[i]) + "," + fmt_double(profile.d_star_norm[i]) +
               "\n";
    }
    return out;
}

std::string consistency_csv(const std::vector<ConsistencyReport>& reports) {
    std::string out = "traj_id,length,k,r_c\n";
    for (size_t i = 0; i < reports.size(); ++i) {
        const ConsistencyReport& r = reports[i];
        out += std::to_string(i) + "," + std::to_string(r.trajectory_length) + "," +
               std::to_string(r.k_used) + "," + fmt_double(r.ratio) + "\n";
    }
    return out;
}

} // namespace ota
