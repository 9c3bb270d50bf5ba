#include "maze.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <sstream>
#include <stdexcept>

namespace ota {

char action_char(MoveAction a) {
    switch (a) {
        case MoveAction::North: return 'N';
        case MoveAction::East: return 'E';
        case MoveAction::South: return 'S';
        case MoveAction::West: return 'W';
        case MoveAction::Stay: return 'X';
    }
    throw std::invalid_argument("unknown action");
}

MoveAction action_from_char(char c) {
    switch (c) {
        case 'N': return MoveAction::North;
        case 'E': return MoveAction::East;
        case 'S': return MoveAction::South;
        case 'W': return MoveAction::West;
        case 'X': return MoveAction::Stay;
    }
    throw std::invalid_argument(std::string("unknown action character '") + c + "'");
}

namespace {
constexpr int kDx[kNumActions] = {0, 1, 0, -1, 0};
constexpr int kDy[kNumActions] = {-1, 0, 1, 0, 0};
} // namespace

GridMaze GridMaze::parse_layout(const std::string& text, std::string layout_id, double slip_prob) {
    if (slip_prob < 0.0 || slip_prob >= 1.0)
        throw std::invalid_argument("slip_prob must lie in [0,1)");

    std::vector<std::string> rows;
    std::string line;
    std::istringstream in(text);
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        rows.push_back(line);
    }
    while (!rows.empty() && rows.back().empty()) rows.pop_back();
    if (rows.empty()) throw std::invalid_argument("layout is empty");

    const int height = static_cast<int>(rows.size());
    const int width = static_cast<int>(rows[0].size());
    if (width == 0) throw std::invalid_argument("layout row 0 is empty");
    if (static_cast<long long>(width) * height > 10000)
        throw std::invalid_argument("layout exceeds the 10,000 cell bound");

    GridMaze maze;
    maze.width_ = width;
    maze.height_ = height;
    maze.slip_prob_ = slip_prob;
    maze.layout_id_ = std::move(layout_id);
    maze.walls_.assign(static_cast<size_t>(width) * height, 0);
    maze.cell_index_.assign(static_cast<size_t>(width) * height, -1);

    for (int y = 0; y < height; ++y) {
        if (static_cast<int>(rows[y].size()) != width)
            throw std::invalid_argument("layout is not rectangular: row " + std::to_string(y) +
                                        " has width " + std::to_string(rows[y].size()) +
                                        ", expected " + std::to_string(width));
        for (int x = 0; x < width; ++x) {
            const char c = rows[y][static_cast<size_t>(x)];
            if (c == '#') {
                maze.walls_[static_cast<size_t>(y) * width + x] = 1;
            } else if (c == '.') {
                maze.cell_index_[static_cast<size_t>(y) * width + x] =
                    static_cast<int>(maze.free_cells_.size());
                maze.free_cells_.push_back(CellState{x, y});
            } else {
                throw std::invalid_argument(std::string("unexpected layout character '") + c +
                                            "' at (" + std::to_string(x) + "," + std::to_string(y) + ")");
            }
        }
    }
    if (maze.free_cells_.empty()) throw std::invalid_argument("layout has no free cells");

    // Connectivity check: every free cell reachable from the first one.
    std::vector<std::uint8_t> seen(maze.free_cells_.size(), 0);
    std::deque<int> frontier{0};
    seen[0] = 1;
    size_t reached = 1;
    while (!frontier.empty()) {
        const CellState s = maze.free_cells_[static_cast<size_t>(frontier.front())];
        frontier.pop_front();
        for (int a = 0; a < 4; ++a) {
            const CellState t{s.x + kDx[a], s.y + kDy[a]};
            if (!maze.is_free(t)) continue;
            const int ti = maze.cell_index(t);
            if (!seen[static_cast<size_t>(ti)]) {
                seen[static_cast<size_t>(ti)] = 1;
                ++reached;
                frontier.push_back(ti);
            }
        }
    }
    if (reached != maze.free_cells_.size()) {
        std::string missing;
        for (size_t i = 0; i < seen.size() && missing.size() < 60; ++i) {
            if (!seen[i])
                missing += "(" + std::to_string(maze.free_cells_[i].x) + "," +
                           std::to_string(maze.free_cells_[i].y) + ") ";
        }
        throw std::invalid_argument("free cells are disconnected; unreachable from (" +
                                    std::to_string(maze.free_cells_[0].x) + "," +
                                    std::to_string(maze.free_cells_[0].y) + "): " + missing);
    }
    maze.distance_cache_.resize(maze.free_cells_.size());
    return maze;
}

GridMaze::GridMaze(const GridMaze& other)
    : width_(other.width_),
      height_(other.height_),
      slip_prob_(other.slip_prob_),
      layout_id_(other.layout_id_),
      walls_(other.walls_),
      free_cells_(other.free_cells_),
      cell_index_(other.cell_index_) {
    distance_cache_.resize(free_cells_.size());
}

GridMaze GridMaze::with_slip(double slip_prob) const {
    if (slip_prob < 0.0 || slip_prob >= 1.0)
        throw std::invalid_argument("slip_prob must lie in [0,1)");
    GridMaze copy(*this);
    copy.slip_prob_ = slip_prob;
    return copy;
}

int GridMaze::cell_index(CellState s) const {
    if (!in_bounds(s.x, s.y)) return -1;
    return cell_index_[static_cast<size_t>(s.y) * width_ + s.x];
}

void GridMaze::require_free(CellState s, const char* what) const {
    if (!is_free(s))
        throw std::invalid_argument(std::string(what) + " (" + std::to_string(s.x) + "," +
                                    std::to_string(s.y) + ") is not a free cell of " + layout_id_);
}

CellState GridMaze::move(CellState s, MoveAction a) const {
    const int ai = static_cast<int>(a);
    const CellState t{s.x + kDx[ai], s.y + kDy[ai]};
    return is_free(t) ? t : s;
}

CellState GridMaze::step(CellState s, MoveAction a, Rng& rng) const {
    require_free(s, "state");
    if (slip_prob_ > 0.0 && rng.uniform() < slip_prob_)
        a = static_cast<MoveAction>(rng.below_int(kNumActions));
    return move(s, a);
}

const std::vector<int>& GridMaze::distances_from(CellState g) const {
    require_free(g, "goal");
    const int gi = cell_index(g);
    {
        std::lock_guard<std::mutex> lock(cache_mutex_);
        if (distance_cache_[static_cast<size_t>(gi)])
            return *distance_cache_[static_cast<size_t>(gi)];
    }
    auto field = std::make_unique<std::vector<int>>(free_cells_.size(), -1);
    std::deque<int> frontier{gi};
    (*field)[static_cast<size_t>(gi)] = 0;
    while (!frontier.empty()) {
        const int ci = frontier.front();
        frontier.pop_front();
        const CellState s = free_cells_[static_cast<size_t>(ci)];
        const int d = (*field)[static_cast<size_t>(ci)];
        for (int a = 0; a < 4; ++a) {
            const CellState t{s.x + kDx[a], s.y + kDy[a]};
            if (!is_free(t)) continue;
            const int ti = cell_index(t);
            if ((*field)[static_cast<size_t>(ti)] < 0) {
                (*field)[static_cast<size_t>(ti)] = d + 1;
                frontier.push_back(ti);
            }
        }
    }
    std::lock_guard<std::mutex> lock(cache_mutex_);
    auto& slot = distance_cache_[static_cast<size_t>(gi)];
    if (!slot) slot = std::move(field);
    return *slot;
}

int GridMaze::shortest_distance(CellState s, CellState g) const {
    require_free(s, "state");
    const auto& field = distances_from(g);
    return field[static_cast<size_t>(cell_index(s))];
}

CellState GridMaze::oracle_subgoal(CellState s, CellState g) const {
    require_free(s, "state");
    require_free(g, "goal");
    if (s == g) throw std::invalid_argument("oracle_subgoal requires s != g");
    const auto& field = distances_from(g);
    const int d = field[static_cast<size_t>(cell_index(s))];
    for (int a = 0; a < 4; ++a) { // N,E,S,W tie order
        const CellState t = move(s, static_cast<MoveAction>(a));
        if (t == s) continue;
        if (field[static_cast<size_t>(cell_index(t))] < d) return t;
    }
    throw std::logic_error("no descending neighbor; connectivity invariant violated");
}

int GridMaze::max_shortest_distance() const {
    {
        std::lock_guard<std::mutex> lock(cache_mutex_);
        if (max_distance_ >= 0) return max_distance_;
    }
    int best = 0;
    for (const CellState& g : free_cells_) {
        const auto& field = distances_from(g);
        best = std::max(best, *std::max_element(field.begin(), field.end()));
    }
    std::lock_guard<std::mutex> lock(cache_mutex_);
    max_distance_ = best;
    return best;
}

std::string GridMaze::render_layout() const {
    std::string out;
    out.reserve(static_cast<size_t>(height_) * (width_ + 1));
    for (int y = 0; y < height_; ++y) {
        for (int x = 0; x < width_; ++x) out += is_wall(x, y) ? '#' : '.';
        out += '\n';
    }
    return out;
}

namespace {

std::string open_row(int n) { return std::string(static_cast<size_t>(n), '.'); }

std::string serpentine_layout(int width, int height) {
    // Free rows at even y; odd rows are walls with a single gap alternating
    // between the east and west ends, which folds one long corridor into the
    // square and maximizes detour length.
    std::string text;
    for (int y = 0; y < height; ++y) {
        if (y % 2 == 0) {
            text += open_row(width);
        } else {
            std::string row(static_cast<size_t>(width), '#');
            row[(y % 4 == 1) ? static_cast<size_t>(width - 1) : 0] = '.';
            text += row;
        }
        text += '\n';
    }
    return text;
}

const std::string kMazeMedium =
    "....#................\n"
    "..#.#.#########.###.#\n"
    "..#.#.#.......#...#..\n"
    "..#.#.#.#####.###.##.\n"
    "..#.#.#.#...#...#....\n"
    "..#.#.#.#.#.###.####.\n"
    "..#.#.#.#.#...#....#.\n"
    "..#.#.#.#.###.####.#.\n"
    "..#...#.#...#....#.#.\n"
    "..#####.###.####.#.#.\n"
    "..#.....#...#....#.#.\n"
    "..#.#####.###.####.#.\n"
    "..#.#...#.#...#....#.\n"
    "..#.#.#.#.#.###.####.\n"
    "....#.#.#.#...#.....#\n"
    "#####.#.#.###.#####.#\n"
    "......#.#...#.#.....#\n"
    ".######.###.#.#.#####\n"
    ".#......#...#.#.....#\n"
    ".#.######.###.#####.#\n"
    "..........#..........\n";

std::map<std::string, std::shared_ptr<const GridMaze>>& registry() {
    static std::map<std::string, std::shared_ptr<const GridMaze>> mazes = [] {
        std::map<std::string, std::shared_ptr<const GridMaze>> m;
        auto add = [&m](const std::string& name, const std::string& text) {
            m[name] = std::make_shared<const GridMaze>(GridMaze::parse_layout(text, name));
        };
        add("chain-50", open_row(50) + "\n");
        add("corridor-300", open_row(300) + "\n");
        add("maze-medium", kMazeMedium);
        add("maze-giant", serpentine_layout(41, 41));
        return m;
    }();
    return mazes;
}

} // namespace

std::shared_ptr<const GridMaze> GridMaze::named(const std::string& name) {
    const auto& m = registry();
    const auto it = m.find(name);
    if (it == m.end()) throw std::invalid_argument("unknown layout '" + name + "'");
    return it->second;
}

std::vector<std::string> GridMaze::named_layouts() {
    std::vector<std::string> names;
    for (const auto& [name, maze] : registry()) names.push_back(name);
    return names;
}

} // namespace ota
