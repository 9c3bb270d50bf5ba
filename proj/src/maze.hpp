#pragma once

#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "rng.hpp"

namespace ota {

struct CellState {
    int x = 0;
    int y = 0;
    friend bool operator==(const CellState&, const CellState&) = default;
};

enum class MoveAction { North = 0, East = 1, South = 2, West = 3, Stay = 4 };
inline constexpr int kNumActions = 5;

char action_char(MoveAction a);
MoveAction action_from_char(char c);

// Discrete maze, immutable after construction. Free space is guaranteed to be
// a single connected component, so shortest distances are always finite.
class GridMaze {
public:
    // '#' = wall, '.' = free, one row per line. Row 0 is y = 0 (north edge).
    static GridMaze parse_layout(const std::string& text, std::string layout_id,
                                 double slip_prob = 0.0);

    static std::shared_ptr<const GridMaze> named(const std::string& name);
    static std::vector<std::string> named_layouts();

    int width() const { return width_; }
    int height() const { return height_; }
    double slip_prob() const { return slip_prob_; }
    const std::string& layout_id() const { return layout_id_; }

    bool in_bounds(int x, int y) const { return x >= 0 && x < width_ && y >= 0 && y < height_; }
    bool is_wall(int x, int y) const { return walls_[static_cast<size_t>(y) * width_ + x] != 0; }
    bool is_free(CellState s) const { return in_bounds(s.x, s.y) && !is_wall(s.x, s.y); }

    int free_cell_count() const { return static_cast<int>(free_cells_.size()); }
    // Index of a free cell in row-major order; -1 for walls / out of bounds.
    int cell_index(CellState s) const;
    CellState cell_at(int index) const { return free_cells_[static_cast<size_t>(index)]; }

    void require_free(CellState s, const char* what) const;

    // Deterministic single move: blocked moves and Stay return s unchanged.
    CellState move(CellState s, MoveAction a) const;
    // Environment transition. Consumes randomness only when slip_prob > 0.
    CellState step(CellState s, MoveAction a, Rng& rng) const;

    int shortest_distance(CellState s, CellState g) const;
    // BFS distance field indexed by free-cell index, computed once per goal.
    const std::vector<int>& distances_from(CellState g) const;

    // Neighbor of s strictly closer to g; ties broken in N,E,S,W order.
    CellState oracle_subgoal(CellState s, CellState g) const;

    // Largest shortest-path distance over all free cell pairs.
    int max_shortest_distance() const;

    std::string render_layout() const;

    GridMaze with_slip(double slip_prob) const;

    GridMaze(const GridMaze& other);
    GridMaze& operator=(const GridMaze&) = delete;

private:
    GridMaze() = default;

    int width_ = 0;
    int height_ = 0;
    double slip_prob_ = 0.0;
    std::string layout_id_;
    std::vector<std::uint8_t> walls_;
    std::vector<CellState> free_cells_;
    std::vector<int> cell_index_; // width*height -> free index or -1

    mutable std::mutex cache_mutex_;
    mutable std::vector<std::unique_ptr<std::vector<int>>> distance_cache_; // per goal index
    mutable int max_distance_ = -1;
};

} // namespace ota
