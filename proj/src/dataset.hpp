#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "errors.hpp"
#include "maze.hpp"
#include "rng.hpp"

namespace ota {

enum class Regime { Navigate, Stitch, Explore };
std::string regime_name(Regime r);
Regime regime_from_name(const std::string& name);

struct Transition {
    CellState state;
    MoveAction action;
    CellState next_state;
};

struct Trajectory {
    std::vector<Transition> transitions;
    std::optional<Regime> behavior_tag; // generation metadata, not serialized
    CellState intended_goal;

    int length() const { return static_cast<int>(transitions.size()); }
    // i in [0, length()]: state visited at step i.
    CellState state_at(int i) const {
        return i < length() ? transitions[static_cast<size_t>(i)].state
                            : transitions.back().next_state;
    }
};

struct GoalSamplingConfig {
    double p_cur = 0.2;
    double p_traj = 0.5;
    double p_rand = 0.3;
    double traj_geometric = 1.0; // (0,1]; 1 = uniform over future states

    void validate() const;
};

// Batch entries carry free-cell indices; reward = -1 when the anchor state
// differs from the goal (the sparse convention whose fixed point is the
// closed-form optimal value).
struct ValueEntry {
    int state;
    int successor; // 1-step successor, or the option successor
    int goal;
    double reward;
};
struct ValueBatch {
    std::vector<ValueEntry> entries;
    int abstraction = 1; // n used when sampling successors
};

struct HighEntry {
    int state;
    int subgoal; // s_{t+k}, clipped to the trajectory end
    int goal;
};
struct HighBatch {
    std::vector<HighEntry> entries;
    int k = 1;
};

struct LowEntry {
    int state;
    MoveAction action;
    int next_state;
    int subgoal; // s_{t+k} (or the sampled goal, for the flat baseline)
};
struct LowBatch {
    std::vector<LowEntry> entries;
    int k = 1;
};

class OfflineDataset {
public:
    OfflineDataset(std::shared_ptr<const GridMaze> maze, std::vector<Trajectory> trajectories);

    const GridMaze& maze() const { return *maze_; }
    std::shared_ptr<const GridMaze> maze_ptr() const { return maze_; }
    const std::vector<Trajectory>& trajectories() const { return trajectories_; }
    long long total_transitions() const { return total_transitions_; }

    // Uniform over all transitions in the dataset.
    std::pair<int, int> sample_anchor(Rng& rng) const; // (trajectory, position)
    // Uniform over all visited states (trajectory finals included).
    CellState sample_state(Rng& rng) const;

    CellState sample_goal(int traj, int pos, const GoalSamplingConfig& cfg, Rng& rng) const;

    ValueBatch sample_value_batch(const GoalSamplingConfig& cfg, int batch_size, Rng& rng) const;
    ValueBatch sample_option_batch(const GoalSamplingConfig& cfg, int abstraction, int batch_size,
                                   Rng& rng) const;
    HighBatch sample_high_batch(const GoalSamplingConfig& cfg, int k, int batch_size, Rng& rng) const;
    LowBatch sample_low_batch(int k, int batch_size, Rng& rng) const;
    // Flat-baseline batch: low-batch layout with a sampled goal in the
    // subgoal slot.
    LowBatch sample_flat_batch(const GoalSamplingConfig& cfg, int batch_size, Rng& rng) const;

private:
    std::shared_ptr<const GridMaze> maze_;
    std::vector<Trajectory> trajectories_;
    long long total_transitions_ = 0;
    std::vector<std::pair<int, int>> transition_index_; // global -> (traj, pos)
    std::vector<std::pair<int, int>> state_index_;      // global -> (traj, pos incl. final)
};

struct GenerateConfig {
    Regime regime = Regime::Navigate;
    long long num_transitions = 10000;
    double noise = -1.0;     // <0 picks the regime default (0.2 navigate/stitch, 0.8 explore)
    int segment_length = 0;  // <=0 picks the default (20% of the episode cap) for stitch
    int episode_cap = 0;     // <=0 picks 2 * max shortest distance
};

OfflineDataset generate_dataset(std::shared_ptr<const GridMaze> maze, const GenerateConfig& cfg,
                                std::uint64_t seed);

// Text format: header "OTAGCRL-DATASET v1 <layout_id> <width> <height>", then
// one trajectory per line as x:y:a triplets (last action is the X pad),
// terminated by |gx:gy.
void save_dataset(const OfflineDataset& dataset, const std::string& path);
OfflineDataset load_dataset(const std::string& path,
                            std::shared_ptr<const GridMaze> maze = nullptr);

} // namespace ota
