#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "approximator.hpp"
#include "maze.hpp"

using namespace ota;

namespace {

GridMaze open_maze(int w, int h) {
    std::string text;
    for (int y = 0; y < h; ++y) text += std::string(static_cast<size_t>(w), '.') + "\n";
    return GridMaze::parse_layout(text, "open");
}

// Central finite differences over every parameter.
std::vector<double> fd_gradient(MlpValue& net, int s, int g, double upstream, double h) {
    std::vector<double> grad(net.params().size());
    auto params = net.params();
    for (size_t i = 0; i < params.size(); ++i) {
        const double keep = params[i];
        params[i] = keep + h;
        const double up = net.evaluate(s, g);
        params[i] = keep - h;
        const double dn = net.evaluate(s, g);
        params[i] = keep;
        grad[i] = upstream * (up - dn) / (2 * h);
    }
    return grad;
}

} // namespace

TEST_CASE("tabular value stores and retrieves exactly") {
    TabularValue v(10);
    for (int s = 0; s < 10; ++s)
        for (int g = 0; g < 10; ++g) CHECK(v.evaluate(s, g) == 0.0);
    v.set(3, 7, -3.5);
    CHECK(v.evaluate(3, 7) == -3.5);
    CHECK(v.evaluate(7, 3) == 0.0);
}

TEST_CASE("fresh MLPs evaluate to zero everywhere") {
    const GridMaze maze = open_maze(5, 4);
    Rng rng(3);
    for (const FeatureSpec spec : {FeatureSpec{FeatureSpec::Mode::NormalizedCoords},
                                   FeatureSpec{FeatureSpec::Mode::OnehotPair}}) {
        MlpValue net(maze, spec, {16, 16}, rng);
        for (int s = 0; s < maze.free_cell_count(); ++s)
            CHECK(net.evaluate(s, (s * 7 + 1) % maze.free_cell_count()) == 0.0);
    }
}

TEST_CASE("gradient of a zero upstream is zero") {
    const GridMaze maze = open_maze(4, 4);
    Rng rng(5);
    MlpValue net(maze, {FeatureSpec::Mode::NormalizedCoords}, {8}, rng);
    std::vector<double> grad(net.params().size(), 0.0);
    net.accumulate_gradient(2, 3, 0.0, grad.data());
    for (double v : grad) CHECK(v == 0.0);
}

TEST_CASE("single linear layer gradient equals the feature vector") {
    const GridMaze maze = open_maze(4, 4);
    Rng rng(5);
    MlpValue net(maze, {FeatureSpec::Mode::NormalizedCoords}, {}, rng); // 6 -> 1
    REQUIRE(net.params().size() == 7);
    for (size_t i = 0; i < 7; ++i) net.params()[i] = 0.25 * static_cast<double>(i) - 0.5;
    double features[6];
    const MlpCore::Input in = net.encode(5, 10, features);
    REQUIRE(in.dense != nullptr);
    std::vector<double> grad(7, 0.0);
    net.accumulate_gradient(5, 10, 1.0, grad.data());
    for (int i = 0; i < 6; ++i)
        CHECK(grad[static_cast<size_t>(i)] == doctest::Approx(features[i]).epsilon(1e-12));
    CHECK(grad[6] == doctest::Approx(1.0).epsilon(1e-12)); // bias
}

TEST_CASE("reverse-mode gradients match central finite differences") {
    const GridMaze maze = open_maze(6, 5);
    for (const FeatureSpec spec : {FeatureSpec{FeatureSpec::Mode::NormalizedCoords},
                                   FeatureSpec{FeatureSpec::Mode::OnehotPair}}) {
        for (int draw = 0; draw < 3; ++draw) {
            Rng rng(100 + draw);
            MlpValue net(maze, spec, {12, 12}, rng);
            auto params = net.params();
            for (size_t i = 0; i < params.size(); ++i)
                params[i] = 0.8 * (2.0 * rng.uniform() - 1.0);
            const int s = rng.below_int(maze.free_cell_count());
            const int g = rng.below_int(maze.free_cell_count());
            std::vector<double> grad(params.size(), 0.0);
            net.accumulate_gradient(s, g, 1.3, grad.data());
            const std::vector<double> fd = fd_gradient(net, s, g, 1.3, 1e-5);
            for (size_t i = 0; i < grad.size(); ++i) {
                const double scale = std::max({1.0, std::fabs(grad[i]), std::fabs(fd[i])});
                CHECK(std::fabs(grad[i] - fd[i]) / scale <= 1e-4);
            }
        }
    }
}

TEST_CASE("batched evaluate and gradient match the per-sample path") {
    const GridMaze maze = open_maze(6, 6);
    Rng rng(42);
    MlpValue net(maze, {FeatureSpec::Mode::OnehotPair}, {16, 16}, rng);
    auto params = net.params();
    for (size_t i = 0; i < params.size(); ++i) params[i] = 0.3 * (2.0 * rng.uniform() - 1.0);

    const int b = 17;
    std::vector<int> s(static_cast<size_t>(b)), g(static_cast<size_t>(b));
    std::vector<double> up(static_cast<size_t>(b));
    for (int i = 0; i < b; ++i) {
        s[static_cast<size_t>(i)] = rng.below_int(maze.free_cell_count());
        g[static_cast<size_t>(i)] = rng.below_int(maze.free_cell_count());
        up[static_cast<size_t>(i)] = rng.uniform() - 0.5;
    }
    std::vector<double> out(static_cast<size_t>(b));
    net.evaluate_batch(s.data(), g.data(), b, out.data());
    for (int i = 0; i < b; ++i)
        CHECK(out[static_cast<size_t>(i)] ==
              doctest::Approx(net.evaluate(s[static_cast<size_t>(i)], g[static_cast<size_t>(i)]))
                  .epsilon(1e-14));

    std::vector<double> grad_batch(params.size(), 0.0), grad_loop(params.size(), 0.0);
    net.accumulate_gradient_batch(s.data(), g.data(), up.data(), b, grad_batch.data());
    for (int i = 0; i < b; ++i)
        net.accumulate_gradient(s[static_cast<size_t>(i)], g[static_cast<size_t>(i)],
                                up[static_cast<size_t>(i)], grad_loop.data());
    for (size_t i = 0; i < params.size(); ++i)
        CHECK(grad_batch[i] == doctest::Approx(grad_loop[i]).epsilon(1e-12));
}

TEST_CASE("sgd applies the exact step and zero gradient is a fixed point") {
    TabularValue v(3);
    v.set(1, 2, 1.0);
    Optimizer opt(OptimizerConfig::sgd(0.1), v.param_count());
    std::vector<double> grad(v.params().size(), 0.0);
    grad[static_cast<size_t>(1) * 3 + 2] = 2.0;
    opt.apply(v.params(), grad);
    CHECK(v.evaluate(1, 2) == doctest::Approx(1.0 - 0.1 * 2.0).epsilon(1e-15));
    const std::vector<double> before(v.params().begin(), v.params().end());
    std::fill(grad.begin(), grad.end(), 0.0);
    opt.apply(v.params(), grad);
    for (size_t i = 0; i < before.size(); ++i) CHECK(v.params()[i] == before[i]);
}

TEST_CASE("adam first step is the bias-corrected sign-like move") {
    TabularValue v(2);
    OptimizerConfig cfg = OptimizerConfig::adam(0.01);
    Optimizer opt(cfg, v.param_count());
    std::vector<double> grad(v.params().size(), 0.0);
    grad[0] = 0.7;
    grad[3] = -2.5;
    opt.apply(v.params(), grad);
    // With zero state, mhat = g and vhat = g^2, so the first step is
    // -lr * g / (|g| + eps) coordinatewise.
    const double expect0 = -0.01 * 0.7 / (std::sqrt(0.7 * 0.7) + cfg.eps);
    const double expect3 = -0.01 * -2.5 / (std::sqrt(2.5 * 2.5) + cfg.eps);
    CHECK(v.params()[0] == doctest::Approx(expect0).epsilon(1e-12));
    CHECK(v.params()[3] == doctest::Approx(expect3).epsilon(1e-12));
    CHECK(v.params()[1] == 0.0);
}

TEST_CASE("NaN gradients abort with a diagnostic") {
    TabularValue v(2);
    Optimizer opt(OptimizerConfig::adam(0.01), v.param_count());
    std::vector<double> grad(v.params().size(), 0.0);
    grad[2] = std::nan("");
    CHECK_THROWS_AS(opt.apply(v.params(), grad), NumericError);
}

TEST_CASE("target sync: hard copy, polyak geometric series, idempotence") {
    TabularValue live(2);
    for (size_t i = 0; i < live.params().size(); ++i) live.params()[i] = 4.0;

    TargetCopy hard(live, 1.0);
    for (auto& p : hard.net->params()) p = 0.0;
    sync_target(live, hard);
    for (double p : hard.net->params()) CHECK(p == 4.0);

    TargetCopy soft(live, 0.005);
    for (auto& p : soft.net->params()) p = 0.0;
    sync_target(live, soft);
    sync_target(live, soft);
    const double expect = 4.0 * (1.0 - std::pow(1.0 - 0.005, 2));
    for (double p : soft.net->params()) CHECK(p == doctest::Approx(expect).epsilon(1e-12));

    TargetCopy same(live, 0.005);
    sync_target(live, same);
    for (double p : same.net->params()) CHECK(p == 4.0);

    TabularValue other(3);
    CHECK_THROWS_AS(polyak_update(other.params(), live.params(), 0.5), std::invalid_argument);
}

TEST_CASE("value checkpoints round trip for tabular and mlp") {
    const auto maze = GridMaze::named("chain-50");
    const std::string dir = (std::filesystem::temp_directory_path() / "ota_ckpt_test").string();
    std::filesystem::create_directories(dir);

    TabularValue tab(maze->free_cell_count());
    tab.set(4, 9, -2.25);
    save_value_checkpoint(dir + "/tab.ckpt", tab);
    const auto tab2 = load_value_checkpoint(dir + "/tab.ckpt", *maze);
    CHECK(tab2->evaluate(4, 9) == -2.25);
    CHECK(tab2->descriptor() == tab.descriptor());

    Rng rng(9);
    MlpValue mlp(*maze, {FeatureSpec::Mode::NormalizedCoords}, {8, 8}, rng);
    for (auto& p : mlp.params()) p = rng.uniform() - 0.5;
    save_value_checkpoint(dir + "/mlp.ckpt", mlp);
    const auto mlp2 = load_value_checkpoint(dir + "/mlp.ckpt", *maze);
    CHECK(mlp2->descriptor() == mlp.descriptor());
    for (int s = 0; s < 10; ++s) CHECK(mlp2->evaluate(s, 49 - s) == mlp.evaluate(s, 49 - s));

    const auto other = GridMaze::named("maze-medium");
    CHECK_THROWS_AS(load_value_checkpoint(dir + "/tab.ckpt", *other), IoError);
    CHECK_THROWS_AS(load_value_checkpoint(dir + "/missing.ckpt", *maze), IoError);
}
