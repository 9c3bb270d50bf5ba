#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "dataset.hpp"

using namespace ota;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::string temp_dir() {
    const std::string dir = (std::filesystem::temp_directory_path() / "ota_dataset_test").string();
    std::filesystem::create_directories(dir);
    return dir;
}

double total_variation(const std::map<std::pair<int, int>, double>& a,
                       const std::map<std::pair<int, int>, double>& b) {
    double tv = 0;
    std::set<std::pair<int, int>> keys;
    for (const auto& [k, v] : a) keys.insert(k);
    for (const auto& [k, v] : b) keys.insert(k);
    for (const auto& k : keys) {
        const double pa = a.count(k) ? a.at(k) : 0.0;
        const double pb = b.count(k) ? b.at(k) : 0.0;
        tv += std::fabs(pa - pb);
    }
    return tv / 2.0;
}

} // namespace

TEST_CASE("noise-free navigate trajectories are shortest paths to their goals") {
    const auto maze = GridMaze::named("chain-50");
    GenerateConfig gen;
    gen.regime = Regime::Navigate;
    gen.num_transitions = 5000;
    gen.noise = 0.0;
    const OfflineDataset data = generate_dataset(maze, gen, 7);
    CHECK(data.total_transitions() == 5000);
    for (const Trajectory& traj : data.trajectories()) {
        // Monotone toward the goal, ending at it (except a possibly trimmed tail).
        const CellState g = traj.intended_goal;
        int prev = maze->shortest_distance(traj.state_at(0), g);
        for (int i = 1; i <= traj.length(); ++i) {
            const int d = maze->shortest_distance(traj.state_at(i), g);
            CHECK(d == prev - 1);
            prev = d;
        }
        if (&traj != &data.trajectories().back()) {
            CHECK(traj.state_at(traj.length()) == g);
            CHECK(traj.length() == maze->shortest_distance(traj.state_at(0), g));
        }
    }
}

TEST_CASE("stitch truncates episodes at the segment length") {
    const auto maze = GridMaze::named("chain-50");
    GenerateConfig gen;
    gen.regime = Regime::Stitch;
    gen.num_transitions = 2000;
    gen.noise = 0.2;
    gen.segment_length = 5;
    const OfflineDataset data = generate_dataset(maze, gen, 3);
    CHECK(data.total_transitions() == 2000);
    for (const Trajectory& traj : data.trajectories()) CHECK(traj.length() <= 5);
}

TEST_CASE("explore covers most of the corridor") {
    const auto maze = GridMaze::named("corridor-300");
    GenerateConfig gen;
    gen.regime = Regime::Explore;
    gen.num_transitions = 100000;
    const OfflineDataset data = generate_dataset(maze, gen, 11);
    std::set<int> visited;
    for (const Trajectory& traj : data.trajectories())
        for (int i = 0; i <= traj.length(); ++i) visited.insert(maze->cell_index(traj.state_at(i)));
    const double coverage = static_cast<double>(visited.size()) / maze->free_cell_count();
    CHECK(coverage >= 0.90);
    // Regression pin of the measured value for this seed.
    CHECK(visited.size() == 300);
}

TEST_CASE("generation is bit-reproducible for a fixed seed") {
    const auto maze = GridMaze::named("maze-medium");
    GenerateConfig gen;
    gen.regime = Regime::Navigate;
    gen.num_transitions = 3000;
    const OfflineDataset a = generate_dataset(maze, gen, 99);
    const OfflineDataset b = generate_dataset(maze, gen, 99);
    REQUIRE(a.trajectories().size() == b.trajectories().size());
    for (size_t t = 0; t < a.trajectories().size(); ++t) {
        const Trajectory& ta = a.trajectories()[t];
        const Trajectory& tb = b.trajectories()[t];
        REQUIRE(ta.length() == tb.length());
        CHECK(ta.intended_goal == tb.intended_goal);
        for (int i = 0; i < ta.length(); ++i) {
            CHECK(ta.transitions[static_cast<size_t>(i)].state ==
                  tb.transitions[static_cast<size_t>(i)].state);
            CHECK(ta.transitions[static_cast<size_t>(i)].action ==
                  tb.transitions[static_cast<size_t>(i)].action);
        }
    }
}

TEST_CASE("generate validates its arguments") {
    const auto maze = GridMaze::named("chain-50");
    GenerateConfig gen;
    gen.num_transitions = 0;
    CHECK_THROWS_AS(generate_dataset(maze, gen, 1), std::invalid_argument);
    gen.num_transitions = 10;
    gen.noise = 1.0;
    CHECK_THROWS_AS(generate_dataset(maze, gen, 1), std::invalid_argument);
}

TEST_CASE("sample_goal honors the three distributions") {
    const auto maze = GridMaze::named("chain-50");
    GenerateConfig gen;
    gen.regime = Regime::Navigate;
    gen.num_transitions = 4000;
    const OfflineDataset data = generate_dataset(maze, gen, 21);
    Rng rng(5);

    // Dirac at the current state.
    for (int i = 0; i < 50; ++i) {
        const auto [t, p] = data.sample_anchor(rng);
        const CellState g = data.sample_goal(t, p, {1.0, 0.0, 0.0, 1.0}, rng);
        CHECK(g == data.trajectories()[static_cast<size_t>(t)].state_at(p));
    }

    // Future-only: never a strictly earlier state of the same trajectory, and
    // the final anchor yields itself.
    for (int i = 0; i < 300; ++i) {
        const auto [t, p] = data.sample_anchor(rng);
        const Trajectory& traj = data.trajectories()[static_cast<size_t>(t)];
        const CellState g = data.sample_goal(t, p, {0.0, 1.0, 0.0, 1.0}, rng);
        bool in_future = false;
        for (int j = p + 1; j <= traj.length(); ++j)
            if (traj.state_at(j) == g) in_future = true;
        CHECK(in_future);
    }
    const int last_t = static_cast<int>(data.trajectories().size()) - 1;
    const int last_pos = data.trajectories().back().length();
    const CellState g_final =
        data.sample_goal(last_t, last_pos, {0.0, 1.0, 0.0, 1.0}, rng);
    CHECK(g_final == data.trajectories().back().state_at(last_pos));
}

TEST_CASE("p_rand matches the dataset state distribution within TV 0.02") {
    const auto maze = GridMaze::named("chain-50");
    GenerateConfig gen;
    gen.regime = Regime::Navigate;
    gen.num_transitions = 6000;
    const OfflineDataset data = generate_dataset(maze, gen, 31);

    std::map<std::pair<int, int>, double> exact;
    double total = 0;
    for (const Trajectory& traj : data.trajectories())
        for (int i = 0; i <= traj.length(); ++i) {
            exact[{traj.state_at(i).x, traj.state_at(i).y}] += 1.0;
            total += 1.0;
        }
    for (auto& [k, v] : exact) v /= total;

    Rng rng(17);
    std::map<std::pair<int, int>, double> empirical;
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) {
        const auto [t, p] = data.sample_anchor(rng);
        const CellState g = data.sample_goal(t, p, {0.0, 0.0, 1.0, 1.0}, rng);
        empirical[{g.x, g.y}] += 1.0 / draws;
    }
    CHECK(total_variation(exact, empirical) < 0.02);
}

TEST_CASE("high-batch anchor positions are uniform over transitions within TV 0.02") {
    // One long east-walk makes the anchor position observable as s.x.
    const auto maze = GridMaze::named("corridor-300");
    Trajectory traj;
    for (int i = 0; i < 200; ++i)
        traj.transitions.push_back(
            Transition{CellState{i, 0}, MoveAction::East, CellState{i + 1, 0}});
    traj.intended_goal = CellState{200, 0};
    OfflineDataset data(maze, {traj});

    Rng rng(29);
    const int draws = 100000;
    const HighBatch batch = data.sample_high_batch({0.2, 0.5, 0.3, 1.0}, 5, draws, rng);
    std::map<std::pair<int, int>, double> empirical, exact;
    for (const HighEntry& e : batch.entries)
        empirical[{maze->cell_at(e.state).x, 0}] += 1.0 / draws;
    for (int t = 0; t < 200; ++t) exact[{t, 0}] = 1.0 / 200.0;
    CHECK(total_variation(exact, empirical) < 0.02);
}

TEST_CASE("option batches implement the forward-scan successor rule") {
    // Hand-built trajectory s_0..s_10 walking east along the corridor.
    const auto maze = GridMaze::named("corridor-300");
    Trajectory traj;
    for (int i = 0; i < 10; ++i)
        traj.transitions.push_back(
            Transition{CellState{i, 0}, MoveAction::East, CellState{i + 1, 0}});
    traj.intended_goal = CellState{10, 0};
    OfflineDataset data(maze, {traj});

    // Exhaustive re-scan over all anchors and a spread of goals.
    for (int n : {1, 3, 5, 8}) {
        Rng rng(1000 + n);
        const ValueBatch batch = data.sample_option_batch({0.2, 0.5, 0.3, 1.0}, n, 512, rng);
        for (const ValueEntry& e : batch.entries) {
            const CellState s = maze->cell_at(e.state);
            const CellState g = maze->cell_at(e.goal);
            const int t = s.x; // position equals x on this trajectory
            CellState expect = traj.state_at(std::min(t + n, traj.length()));
            for (int j = 1; j <= n && t + j <= traj.length(); ++j) {
                if (traj.state_at(t + j) == g) {
                    expect = g;
                    break;
                }
            }
            CHECK(maze->cell_at(e.successor) == expect);
            CHECK(e.reward == (s == g ? 0.0 : -1.0));
        }
    }

    // Spec cases: t=3, n=5, goal s_6 -> successor s_6; t=8, n=5, off-path
    // goal -> clipped to s_10.
    {
        Rng rng(1);
        (void)rng;
        // direct scan via the public sampler is exercised above; check the
        // two pinned cases through a crafted scan.
        const int n = 5;
        int t = 3;
        CellState g{6, 0};
        CellState expect = traj.state_at(std::min(t + n, traj.length()));
        for (int j = 1; j <= n && t + j <= traj.length(); ++j)
            if (traj.state_at(t + j) == g) {
                expect = g;
                break;
            }
        CHECK(expect == CellState{6, 0});
        t = 8;
        g = CellState{250, 0};
        expect = traj.state_at(std::min(t + n, traj.length()));
        for (int j = 1; j <= n && t + j <= traj.length(); ++j)
            if (traj.state_at(t + j) == g) {
                expect = g;
                break;
            }
        CHECK(expect == CellState{10, 0});
    }
}

TEST_CASE("option batches reduce to value batches at n=1, bitwise") {
    const auto maze = GridMaze::named("chain-50");
    GenerateConfig gen;
    gen.regime = Regime::Navigate;
    gen.num_transitions = 2000;
    const OfflineDataset data = generate_dataset(maze, gen, 55);
    Rng a(9), b(9);
    const ValueBatch va = data.sample_value_batch({0.2, 0.5, 0.3, 1.0}, 256, a);
    const ValueBatch vb = data.sample_option_batch({0.2, 0.5, 0.3, 1.0}, 1, 256, b);
    REQUIRE(va.entries.size() == vb.entries.size());
    for (size_t i = 0; i < va.entries.size(); ++i) {
        CHECK(va.entries[i].state == vb.entries[i].state);
        CHECK(va.entries[i].successor == vb.entries[i].successor);
        CHECK(va.entries[i].goal == vb.entries[i].goal);
        CHECK(va.entries[i].reward == vb.entries[i].reward);
    }
    CHECK(a.next() == b.next());
}

TEST_CASE("value batch pairs are consecutive states of stored trajectories") {
    const auto maze = GridMaze::named("maze-medium");
    GenerateConfig gen;
    gen.regime = Regime::Navigate;
    gen.num_transitions = 2000;
    const OfflineDataset data = generate_dataset(maze, gen, 17);
    Rng rng(3);
    const ValueBatch batch = data.sample_value_batch({0.2, 0.5, 0.3, 1.0}, 512, rng);
    std::set<std::pair<int, int>> pairs;
    for (const Trajectory& traj : data.trajectories())
        for (const Transition& tr : traj.transitions)
            pairs.insert({maze->cell_index(tr.state), maze->cell_index(tr.next_state)});
    for (const ValueEntry& e : batch.entries) CHECK(pairs.count({e.state, e.successor}) == 1);
}

TEST_CASE("high and low batches clip s_{t+k} to the trajectory end") {
    const auto maze = GridMaze::named("corridor-300");
    Trajectory traj;
    for (int i = 0; i < 10; ++i)
        traj.transitions.push_back(
            Transition{CellState{i, 0}, MoveAction::East, CellState{i + 1, 0}});
    traj.intended_goal = CellState{10, 0};
    OfflineDataset data(maze, {traj});

    Rng rng(5);
    const HighBatch high = data.sample_high_batch({0.0, 1.0, 0.0, 1.0}, 25, 64, rng);
    for (const HighEntry& e : high.entries) CHECK(maze->cell_at(e.subgoal) == CellState{10, 0});

    const LowBatch low = data.sample_low_batch(25, 64, rng);
    for (const LowEntry& e : low.entries) {
        CHECK(maze->cell_at(e.subgoal) == CellState{10, 0});
        const CellState s = maze->cell_at(e.state);
        CHECK(maze->cell_at(e.next_state) == CellState{s.x + 1, 0});
        CHECK(e.action == MoveAction::East);
    }

    // k=1 on a 1-step trajectory: subgoal is the final state.
    Trajectory tiny;
    tiny.transitions.push_back(Transition{CellState{0, 0}, MoveAction::East, CellState{1, 0}});
    tiny.intended_goal = CellState{1, 0};
    OfflineDataset tiny_data(maze, {tiny});
    const HighBatch hb = tiny_data.sample_high_batch({0.0, 1.0, 0.0, 1.0}, 1, 8, rng);
    for (const HighEntry& e : hb.entries) CHECK(maze->cell_at(e.subgoal) == CellState{1, 0});
}

TEST_CASE("dataset save/load round trips all three regimes") {
    const auto maze = GridMaze::named("maze-medium");
    const std::string dir = temp_dir();
    for (Regime regime : {Regime::Navigate, Regime::Stitch, Regime::Explore}) {
        GenerateConfig gen;
        gen.regime = regime;
        gen.num_transitions = 1500;
        const OfflineDataset data = generate_dataset(maze, gen, 77);
        const std::string path = dir + "/" + regime_name(regime) + ".txt";
        save_dataset(data, path);
        const OfflineDataset loaded = load_dataset(path, maze);
        REQUIRE(loaded.trajectories().size() == data.trajectories().size());
        CHECK(loaded.total_transitions() == data.total_transitions());
        for (size_t t = 0; t < data.trajectories().size(); ++t) {
            const Trajectory& ta = data.trajectories()[t];
            const Trajectory& tb = loaded.trajectories()[t];
            REQUIRE(ta.length() == tb.length());
            CHECK(ta.intended_goal == tb.intended_goal);
            for (int i = 0; i < ta.length(); ++i) {
                CHECK(ta.transitions[static_cast<size_t>(i)].state ==
                      tb.transitions[static_cast<size_t>(i)].state);
                CHECK(ta.transitions[static_cast<size_t>(i)].action ==
                      tb.transitions[static_cast<size_t>(i)].action);
                CHECK(ta.transitions[static_cast<size_t>(i)].next_state ==
                      tb.transitions[static_cast<size_t>(i)].next_state);
            }
        }
        // Re-saving the loaded dataset is byte-identical.
        save_dataset(loaded, path + ".resave");
        CHECK(read_file(path) == read_file(path + ".resave"));
    }
}

TEST_CASE("dataset loader resolves bundled layouts and rejects mismatches") {
    const auto chain = GridMaze::named("chain-50");
    GenerateConfig gen;
    gen.regime = Regime::Navigate;
    gen.num_transitions = 100;
    const OfflineDataset data = generate_dataset(chain, gen, 1);
    const std::string path = temp_dir() + "/named.txt";
    save_dataset(data, path);

    const OfflineDataset by_name = load_dataset(path); // registry lookup
    CHECK(by_name.maze().layout_id() == "chain-50");

    const auto other = GridMaze::named("maze-medium");
    CHECK_THROWS_AS(load_dataset(path, other), IoError);
    CHECK_THROWS_AS(load_dataset(temp_dir() + "/missing.txt"), IoError);
}

TEST_CASE("dataset loader rejects malformed files") {
    const std::string dir = temp_dir();
    auto write = [&](const std::string& name, const std::string& content) {
        std::ofstream out(dir + "/" + name, std::ios::binary);
        out << content;
        return dir + "/" + name;
    };
    CHECK_THROWS_AS(load_dataset(write("bad1.txt", "NOT-A-HEADER\n")), IoError);
    CHECK_THROWS_AS(
        load_dataset(write("bad2.txt", "OTAGCRL-DATASET v1 chain-50 50 1\n0:0:E,1:0:X\n")),
        IoError); // missing |goal
    CHECK_THROWS_AS(
        load_dataset(write("bad3.txt", "OTAGCRL-DATASET v1 chain-50 50 1\n0:0:E|1:0\n")),
        IoError); // single state
    CHECK_THROWS_AS(
        load_dataset(write("bad4.txt", "OTAGCRL-DATASET v1 chain-50 50 1\n0:0:E,5:0:X|5:0\n")),
        std::exception); // non-adjacent hop
}
