#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>

#include "maze.hpp"

using namespace ota;

namespace {

GridMaze open_maze(int w, int h) {
    std::string text;
    for (int y = 0; y < h; ++y) text += std::string(static_cast<size_t>(w), '.') + "\n";
    return GridMaze::parse_layout(text, "open");
}

// Exhaustive simple-path enumeration; independent oracle for BFS distances on
// tiny layouts.
int min_path_by_enumeration(const GridMaze& maze, CellState s, CellState g) {
    std::set<std::pair<int, int>> visited;
    int best = 1 << 20;
    auto dfs = [&](auto&& self, CellState c, int len) -> void {
        if (len >= best) return;
        if (c == g) {
            best = len;
            return;
        }
        visited.insert({c.x, c.y});
        const int dx[4] = {0, 1, 0, -1};
        const int dy[4] = {-1, 0, 1, 0};
        for (int a = 0; a < 4; ++a) {
            const CellState t{c.x + dx[a], c.y + dy[a]};
            if (!maze.is_free(t) || visited.count({t.x, t.y})) continue;
            self(self, t, len + 1);
        }
        visited.erase({c.x, c.y});
    };
    dfs(dfs, s, 0);
    return best;
}

} // namespace

TEST_CASE("step moves, blocks on walls and boundaries") {
    const GridMaze maze = open_maze(3, 3);
    Rng rng(1);
    CHECK(maze.step({1, 1}, MoveAction::North, rng) == CellState{1, 0});
    CHECK(maze.step({1, 1}, MoveAction::East, rng) == CellState{2, 1});
    CHECK(maze.step({1, 1}, MoveAction::South, rng) == CellState{1, 2});
    CHECK(maze.step({1, 1}, MoveAction::West, rng) == CellState{0, 1});
    CHECK(maze.step({1, 1}, MoveAction::Stay, rng) == CellState{1, 1});
    CHECK(maze.step({0, 0}, MoveAction::West, rng) == CellState{0, 0});
    CHECK(maze.step({0, 0}, MoveAction::North, rng) == CellState{0, 0});

    const GridMaze corridor = GridMaze::parse_layout("....\n..#.\n....\n", "wall-corridor");
    CHECK(corridor.step({1, 1}, MoveAction::East, rng) == CellState{1, 1});
}

TEST_CASE("step rejects invalid states") {
    const GridMaze maze = GridMaze::parse_layout("..\n.#\n", "l-shape");
    Rng rng(1);
    CHECK_THROWS_AS(maze.step({1, 1}, MoveAction::North, rng), std::invalid_argument);
    CHECK_THROWS_AS(maze.step({5, 0}, MoveAction::North, rng), std::invalid_argument);
}

TEST_CASE("step with slip 0 is pure and consumes no randomness") {
    const GridMaze maze = open_maze(4, 4);
    Rng a(7), b(7);
    for (int i = 0; i < 20; ++i)
        CHECK(maze.step({1, 1}, MoveAction::East, a) == CellState{2, 1});
    // a must not have consumed anything: identical next draws.
    CHECK(a.next() == b.next());
}

TEST_CASE("slip replaces the action at the configured rate") {
    const GridMaze maze = open_maze(9, 9).with_slip(0.5);
    Rng rng(123);
    int slipped = 0;
    const int trials = 4000;
    for (int i = 0; i < trials; ++i) {
        const CellState next = maze.step({4, 4}, MoveAction::East, rng);
        if (!(next == CellState{5, 4})) ++slipped;
    }
    // Slip draws a uniform action, so 1/5 of slips still move east:
    // P(next != east-neighbor) = 0.5 * 4/5 = 0.4.
    CHECK(slipped > trials * 0.35);
    CHECK(slipped < trials * 0.45);
}

TEST_CASE("shortest_distance basics") {
    const GridMaze maze = open_maze(6, 6);
    CHECK(maze.shortest_distance({1, 1}, {1, 1}) == 0);
    CHECK(maze.shortest_distance({0, 0}, {3, 0}) == 3);
    CHECK(maze.shortest_distance({0, 0}, {3, 3}) == 6);
}

TEST_CASE("shortest_distance matches exhaustive enumeration on a U detour") {
    // Wall column splits the first three rows; the detour runs through y=3.
    const GridMaze maze = GridMaze::parse_layout(".#.\n.#.\n.#.\n...\n", "u-shape");
    const CellState s{0, 1}, g{2, 0};
    const int enumerated = min_path_by_enumeration(maze, s, g);
    CHECK(enumerated == 7);
    CHECK(maze.shortest_distance(s, g) == enumerated);
    for (const CellState a : {CellState{0, 0}, CellState{0, 3}, CellState{2, 2}})
        CHECK(maze.shortest_distance(a, g) == min_path_by_enumeration(maze, a, g));
}

TEST_CASE("shortest_distance is symmetric and satisfies the triangle inequality") {
    const auto maze = GridMaze::named("maze-medium");
    Rng rng(5);
    for (int i = 0; i < 200; ++i) {
        const CellState a = maze->cell_at(rng.below_int(maze->free_cell_count()));
        const CellState b = maze->cell_at(rng.below_int(maze->free_cell_count()));
        const CellState c = maze->cell_at(rng.below_int(maze->free_cell_count()));
        const int ab = maze->shortest_distance(a, b);
        CHECK(ab == maze->shortest_distance(b, a));
        CHECK(ab <= maze->shortest_distance(a, c) + maze->shortest_distance(c, b));
        CHECK((ab == 0) == (a == b));
    }
}

TEST_CASE("oracle_subgoal descends with N,E,S,W tie order") {
    const GridMaze maze = open_maze(6, 6);
    CHECK(maze.oracle_subgoal({0, 0}, {0, 5}) == CellState{0, 1});
    // From (1,1) toward (3,3) both East (2,1) and South (1,2) descend; East
    // precedes South in the tie order.
    CHECK(maze.oracle_subgoal({1, 1}, {3, 3}) == CellState{2, 1});
    // From the corner, North is out of bounds, so East wins the tie.
    CHECK(maze.oracle_subgoal({0, 0}, {3, 3}) == CellState{1, 0});
    // North beats East when both descend.
    CHECK(maze.oracle_subgoal({1, 1}, {3, 0}) == CellState{1, 0});
    // Adjacent goal.
    CHECK(maze.oracle_subgoal({2, 0}, {3, 0}) == CellState{3, 0});
    CHECK_THROWS_AS(maze.oracle_subgoal({2, 2}, {2, 2}), std::invalid_argument);
}

TEST_CASE("oracle_subgoal chains reach the goal in exactly d steps") {
    for (const char* name : {"maze-medium", "chain-50"}) {
        const auto maze = GridMaze::named(name);
        Rng rng(11);
        for (int i = 0; i < 50; ++i) {
            CellState s = maze->cell_at(rng.below_int(maze->free_cell_count()));
            const CellState g = maze->cell_at(rng.below_int(maze->free_cell_count()));
            const int d = maze->shortest_distance(s, g);
            int steps = 0;
            while (!(s == g)) {
                s = maze->oracle_subgoal(s, g);
                ++steps;
            }
            CHECK(steps == d);
        }
    }
}

TEST_CASE("parse_layout accepts valid grids") {
    const GridMaze a = GridMaze::parse_layout("..\n..\n", "two-by-two");
    CHECK(a.width() == 2);
    CHECK(a.height() == 2);
    CHECK(a.free_cell_count() == 4);

    const GridMaze b = GridMaze::parse_layout(".#.\n...\n", "notch");
    CHECK(b.width() == 3);
    CHECK(b.height() == 2);
    CHECK(b.is_wall(1, 0));
    CHECK(b.free_cell_count() == 5);
}

TEST_CASE("parse_layout rejects malformed input") {
    CHECK_THROWS_AS(GridMaze::parse_layout("..\n...\n", "ragged"), std::invalid_argument);
    CHECK_THROWS_AS(GridMaze::parse_layout(".#.\n.#.\n", "split"), std::invalid_argument);
    CHECK_THROWS_AS(GridMaze::parse_layout("##\n##\n", "solid"), std::invalid_argument);
    CHECK_THROWS_AS(GridMaze::parse_layout("..\n.x\n", "badchar"), std::invalid_argument);
    CHECK_THROWS_AS(GridMaze::parse_layout("", "empty"), std::invalid_argument);
    CHECK_THROWS_AS(GridMaze::parse_layout("..\n..\n", "slip", 1.0), std::invalid_argument);
}

TEST_CASE("render_layout round trips") {
    for (const char* name : {"chain-50", "corridor-300", "maze-medium", "maze-giant"}) {
        const auto maze = GridMaze::named(name);
        const GridMaze reparsed = GridMaze::parse_layout(maze->render_layout(), maze->layout_id());
        CHECK(reparsed.render_layout() == maze->render_layout());
        CHECK(reparsed.free_cell_count() == maze->free_cell_count());
    }
}

TEST_CASE("bundled layouts have the documented shapes") {
    const auto chain = GridMaze::named("chain-50");
    CHECK(chain->width() == 50);
    CHECK(chain->height() == 1);
    CHECK(chain->free_cell_count() == 50);
    CHECK(chain->max_shortest_distance() == 49);

    const auto corridor = GridMaze::named("corridor-300");
    CHECK(corridor->width() == 300);
    CHECK(corridor->free_cell_count() == 300);
    CHECK(corridor->max_shortest_distance() == 299);

    const auto medium = GridMaze::named("maze-medium");
    CHECK(medium->width() == 21);
    CHECK(medium->height() == 21);
    CHECK(medium->free_cell_count() == 248);

    const auto giant = GridMaze::named("maze-giant");
    CHECK(giant->width() == 41);
    CHECK(giant->height() == 41);
    CHECK(giant->free_cell_count() == 881);
    CHECK(giant->max_shortest_distance() == 880);

    CHECK_THROWS_AS(GridMaze::named("no-such-maze"), std::invalid_argument);
}

TEST_CASE("cell indexing round trips") {
    const auto maze = GridMaze::named("maze-medium");
    for (int i = 0; i < maze->free_cell_count(); ++i)
        CHECK(maze->cell_index(maze->cell_at(i)) == i);
    CHECK(maze->cell_index(CellState{4, 0}) == -1); // wall in maze-medium
}
