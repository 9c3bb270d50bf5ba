#include "dataset.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "approximator.hpp" // split_tokens

namespace ota {

std::string regime_name(Regime r) {
    switch (r) {
        case Regime::Navigate: return "navigate";
        case Regime::Stitch: return "stitch";
        case Regime::Explore: return "explore";
    }
    throw std::invalid_argument("unknown regime");
}

Regime regime_from_name(const std::string& name) {
    if (name == "navigate") return Regime::Navigate;
    if (name == "stitch") return Regime::Stitch;
    if (name == "explore") return Regime::Explore;
    throw std::invalid_argument("unknown dataset regime '" + name + "'");
}

void GoalSamplingConfig::validate() const {
    if (p_cur < 0 || p_traj < 0 || p_rand < 0)
        throw std::invalid_argument("goal sampling weights must be nonnegative");
    const double sum = p_cur + p_traj + p_rand;
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("goal sampling weights must sum to 1, got " + std::to_string(sum));
    if (traj_geometric <= 0.0 || traj_geometric > 1.0)
        throw std::invalid_argument("traj_geometric_discount must lie in (0,1]");
}

OfflineDataset::OfflineDataset(std::shared_ptr<const GridMaze> maze,
                               std::vector<Trajectory> trajectories)
    : maze_(std::move(maze)), trajectories_(std::move(trajectories)) {
    if (!maze_) throw std::invalid_argument("dataset requires a maze");
    for (int t = 0; t < static_cast<int>(trajectories_.size()); ++t) {
        const Trajectory& traj = trajectories_[static_cast<size_t>(t)];
        if (traj.transitions.empty())
            throw std::invalid_argument("trajectory " + std::to_string(t) + " is empty");
        for (int p = 0; p < traj.length(); ++p) {
            const Transition& tr = traj.transitions[static_cast<size_t>(p)];
            maze_->require_free(tr.state, "trajectory state");
            maze_->require_free(tr.next_state, "trajectory state");
            const int dx = tr.next_state.x - tr.state.x;
            const int dy = tr.next_state.y - tr.state.y;
            if (std::abs(dx) + std::abs(dy) > 1)
                throw std::invalid_argument("transition is not a single step");
            if (p + 1 < traj.length() &&
                !(traj.transitions[static_cast<size_t>(p + 1)].state == tr.next_state))
                throw std::invalid_argument("trajectory " + std::to_string(t) +
                                            " does not chain at step " + std::to_string(p));
            transition_index_.emplace_back(t, p);
            state_index_.emplace_back(t, p);
        }
        state_index_.emplace_back(t, traj.length());
        total_transitions_ += traj.length();
    }
    if (total_transitions_ == 0) throw std::invalid_argument("dataset has no transitions");
}

std::pair<int, int> OfflineDataset::sample_anchor(Rng& rng) const {
    return transition_index_[static_cast<size_t>(rng.below(transition_index_.size()))];
}

CellState OfflineDataset::sample_state(Rng& rng) const {
    const auto [t, p] = state_index_[static_cast<size_t>(rng.below(state_index_.size()))];
    return trajectories_[static_cast<size_t>(t)].state_at(p);
}

CellState OfflineDataset::sample_goal(int traj, int pos, const GoalSamplingConfig& cfg,
                                      Rng& rng) const {
    const Trajectory& tr = trajectories_[static_cast<size_t>(traj)];
    if (pos < 0 || pos > tr.length())
        throw std::invalid_argument("goal anchor position out of range");
    const double u = rng.uniform();
    if (u < cfg.p_cur) return tr.state_at(pos);
    if (u < cfg.p_cur + cfg.p_traj) {
        const int remaining = tr.length() - pos;
        if (remaining <= 0) return tr.state_at(pos); // final state: only future is itself
        int offset;
        if (cfg.traj_geometric >= 1.0) {
            offset = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(remaining)));
        } else {
            const double lambda = cfg.traj_geometric;
            const double total = (1.0 - std::pow(lambda, remaining)) / (1.0 - lambda);
            double x = rng.uniform() * total;
            offset = 1;
            double w = 1.0;
            while (offset < remaining && x >= w) {
                x -= w;
                w *= lambda;
                ++offset;
            }
        }
        return tr.state_at(pos + offset);
    }
    return sample_state(rng);
}

ValueBatch OfflineDataset::sample_option_batch(const GoalSamplingConfig& cfg, int abstraction,
                                               int batch_size, Rng& rng) const {
    if (abstraction < 1) throw std::invalid_argument("abstraction factor must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
    cfg.validate();
    ValueBatch batch;
    batch.abstraction = abstraction;
    batch.entries.reserve(static_cast<size_t>(batch_size));
    for (int i = 0; i < batch_size; ++i) {
        const auto [t, p] = sample_anchor(rng);
        const Trajectory& tr = trajectories_[static_cast<size_t>(t)];
        const CellState s = tr.state_at(p);
        const CellState g = sample_goal(t, p, cfg, rng);
        // First of {goal hit, s_{t+n}, trajectory end} scanning forward.
        CellState succ = tr.state_at(std::min(p + abstraction, tr.length()));
        for (int j = 1; j <= abstraction && p + j <= tr.length(); ++j) {
            if (tr.state_at(p + j) == g) {
                succ = g;
                break;
            }
        }
        const double reward = (s == g) ? 0.0 : -1.0;
        batch.entries.push_back(ValueEntry{maze_->cell_index(s), maze_->cell_index(succ),
                                           maze_->cell_index(g), reward});
    }
    return batch;
}

ValueBatch OfflineDataset::sample_value_batch(const GoalSamplingConfig& cfg, int batch_size,
                                              Rng& rng) const {
    return sample_option_batch(cfg, 1, batch_size, rng);
}

HighBatch OfflineDataset::sample_high_batch(const GoalSamplingConfig& cfg, int k, int batch_size,
                                            Rng& rng) const {
    if (k < 1) throw std::invalid_argument("subgoal horizon k must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
    cfg.validate();
    HighBatch batch;
    batch.k = k;
    batch.entries.reserve(static_cast<size_t>(batch_size));
    for (int i = 0; i < batch_size; ++i) {
        const auto [t, p] = sample_anchor(rng);
        const Trajectory& tr = trajectories_[static_cast<size_t>(t)];
        const CellState g = sample_goal(t, p, cfg, rng);
        const CellState sk = tr.state_at(std::min(p + k, tr.length()));
        batch.entries.push_back(HighEntry{maze_->cell_index(tr.state_at(p)),
                                          maze_->cell_index(sk), maze_->cell_index(g)});
    }
    return batch;
}

LowBatch OfflineDataset::sample_low_batch(int k, int batch_size, Rng& rng) const {
    if (k < 1) throw std::invalid_argument("subgoal horizon k must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
    LowBatch batch;
    batch.k = k;
    batch.entries.reserve(static_cast<size_t>(batch_size));
    for (int i = 0; i < batch_size; ++i) {
        const auto [t, p] = sample_anchor(rng);
        const Trajectory& tr = trajectories_[static_cast<size_t>(t)];
        const Transition& trans = tr.transitions[static_cast<size_t>(p)];
        const CellState sk = tr.state_at(std::min(p + k, tr.length()));
        batch.entries.push_back(LowEntry{maze_->cell_index(trans.state), trans.action,
                                         maze_->cell_index(trans.next_state),
                                         maze_->cell_index(sk)});
    }
    return batch;
}

LowBatch OfflineDataset::sample_flat_batch(const GoalSamplingConfig& cfg, int batch_size,
                                           Rng& rng) const {
    if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
    cfg.validate();
    LowBatch batch;
    batch.k = 0;
    batch.entries.reserve(static_cast<size_t>(batch_size));
    for (int i = 0; i < batch_size; ++i) {
        const auto [t, p] = sample_anchor(rng);
        const Trajectory& tr = trajectories_[static_cast<size_t>(t)];
        const Transition& trans = tr.transitions[static_cast<size_t>(p)];
        const CellState g = sample_goal(t, p, cfg, rng);
        batch.entries.push_back(LowEntry{maze_->cell_index(trans.state), trans.action,
                                         maze_->cell_index(trans.next_state),
                                         maze_->cell_index(g)});
    }
    return batch;
}

namespace {

MoveAction direction_of(CellState from, CellState to) {
    if (to.y == from.y - 1 && to.x == from.x) return MoveAction::North;
    if (to.x == from.x + 1 && to.y == from.y) return MoveAction::East;
    if (to.y == from.y + 1 && to.x == from.x) return MoveAction::South;
    if (to.x == from.x - 1 && to.y == from.y) return MoveAction::West;
    return MoveAction::Stay;
}

CellState uniform_free_cell(const GridMaze& maze, Rng& rng) {
    return maze.cell_at(rng.below_int(maze.free_cell_count()));
}

} // namespace

OfflineDataset generate_dataset(std::shared_ptr<const GridMaze> maze, const GenerateConfig& cfg,
                                std::uint64_t seed) {
    if (!maze) throw std::invalid_argument("generate_dataset requires a maze");
    if (cfg.num_transitions < 1) throw std::invalid_argument("num_transitions must be >= 1");
    const double default_noise = cfg.regime == Regime::Explore ? 0.8 : 0.2;
    const double noise = cfg.noise < 0 ? default_noise : cfg.noise;
    if (noise < 0.0 || noise >= 1.0) throw std::invalid_argument("noise must lie in [0,1)");

    const int cap = cfg.episode_cap > 0 ? cfg.episode_cap : 2 * maze->max_shortest_distance();
    if (cap < 1) throw std::invalid_argument("degenerate episode cap; num_transitions unreachable");
    int segment = cfg.segment_length;
    if (cfg.regime == Regime::Stitch) {
        if (segment <= 0) segment = std::max(1, cap / 5);
    } else {
        segment = cap;
    }
    const int episode_limit = std::min(cap, segment);

    std::vector<Trajectory> trajectories;
    long long total = 0;
    std::uint64_t episode = 0;
    while (total < cfg.num_transitions) {
        Rng rng = Rng::derive(seed, episode++);
        Trajectory traj;
        traj.behavior_tag = cfg.regime;
        CellState s = uniform_free_cell(*maze, rng);
        CellState goal = uniform_free_cell(*maze, rng);
        while (goal == s) goal = uniform_free_cell(*maze, rng);
        traj.intended_goal = goal;

        MoveAction drift = static_cast<MoveAction>(rng.below_int(4)); // explore only
        for (int step = 0; step < episode_limit; ++step) {
            if (cfg.regime != Regime::Explore && s == goal) break;
            MoveAction a;
            if (cfg.regime == Regime::Explore) {
                a = rng.bernoulli(noise) ? static_cast<MoveAction>(rng.below_int(kNumActions))
                                         : drift;
            } else {
                const MoveAction expert = direction_of(s, maze->oracle_subgoal(s, goal));
                a = rng.bernoulli(noise) ? static_cast<MoveAction>(rng.below_int(kNumActions))
                                         : expert;
            }
            const CellState next = maze->step(s, a, rng);
            traj.transitions.push_back(Transition{s, a, next});
            s = next;
            if (total + traj.length() >= cfg.num_transitions) break;
        }
        if (traj.transitions.empty()) continue; // started at goal; redraw
        total += traj.length();
        trajectories.push_back(std::move(traj));
    }
    return OfflineDataset(std::move(maze), std::move(trajectories));
}

void save_dataset(const OfflineDataset& dataset, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open dataset for writing: " + path);
    const GridMaze& maze = dataset.maze();
    out << "OTAGCRL-DATASET v1 " << maze.layout_id() << " " << maze.width() << " "
        << maze.height() << "\n";
    for (const Trajectory& traj : dataset.trajectories()) {
        for (const Transition& tr : traj.transitions)
            out << tr.state.x << ":" << tr.state.y << ":" << action_char(tr.action) << ",";
        const CellState last = traj.transitions.back().next_state;
        out << last.x << ":" << last.y << ":X|" << traj.intended_goal.x << ":"
            << traj.intended_goal.y << "\n";
    }
    if (!out) throw IoError("failed while writing dataset: " + path);
}

namespace {

CellState parse_cell(const std::string& sx, const std::string& sy) {
    return CellState{std::stoi(sx), std::stoi(sy)};
}

} // namespace

OfflineDataset load_dataset(const std::string& path, std::shared_ptr<const GridMaze> maze) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open dataset: " + path);
    std::string header;
    if (!std::getline(in, header)) throw IoError("empty dataset file: " + path);
    const auto toks = split_tokens(header);
    if (toks.size() != 5 || toks[0] != "OTAGCRL-DATASET" || toks[1] != "v1")
        throw IoError("bad dataset header in " + path);
    const std::string layout_id = toks[2];
    const int width = std::stoi(toks[3]);
    const int height = std::stoi(toks[4]);
    if (!maze) maze = GridMaze::named(layout_id);
    if (maze->layout_id() != layout_id || maze->width() != width || maze->height() != height)
        throw IoError("maze-layout mismatch: file is for " + layout_id + " " + toks[3] + "x" +
                      toks[4] + ", maze is " + maze->layout_id());

    std::vector<Trajectory> trajectories;
    std::string line;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const size_t bar = line.find('|');
        if (bar == std::string::npos)
            throw IoError("dataset line " + std::to_string(line_no) + " lacks the |goal suffix");
        Trajectory traj;
        {
            const std::string goal_part = line.substr(bar + 1);
            const size_t colon = goal_part.find(':');
            if (colon == std::string::npos)
                throw IoError("malformed goal on dataset line " + std::to_string(line_no));
            traj.intended_goal = parse_cell(goal_part.substr(0, colon), goal_part.substr(colon + 1));
        }
        std::vector<std::pair<CellState, MoveAction>> points;
        std::istringstream triplets(line.substr(0, bar));
        std::string item;
        while (std::getline(triplets, item, ',')) {
            const size_t c1 = item.find(':');
            const size_t c2 = item.find(':', c1 + 1);
            if (c1 == std::string::npos || c2 == std::string::npos || item.size() != c2 + 2)
                throw IoError("malformed triplet '" + item + "' on dataset line " +
                              std::to_string(line_no));
            points.emplace_back(parse_cell(item.substr(0, c1), item.substr(c1 + 1, c2 - c1 - 1)),
                                action_from_char(item[c2 + 1]));
        }
        if (points.size() < 2)
            throw IoError("dataset line " + std::to_string(line_no) + " has fewer than 2 states");
        if (points.back().second != MoveAction::Stay)
            throw IoError("dataset line " + std::to_string(line_no) + " lacks the final X pad");
        for (size_t i = 0; i + 1 < points.size(); ++i)
            traj.transitions.push_back(
                Transition{points[i].first, points[i].second, points[i + 1].first});
        trajectories.push_back(std::move(traj));
    }
    return OfflineDataset(std::move(maze), std::move(trajectories)); // validates states/chaining
}

} // namespace ota
