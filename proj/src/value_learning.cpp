#include "value_learning.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <stdexcept>

namespace ota {

double expectile_loss(double u, double tau) {
    const double w = std::fabs(tau - (u < 0.0 ? 1.0 : 0.0));
    return w * u * u;
}

double expectile_loss_derivative(double u, double tau) {
    const double w = std::fabs(tau - (u < 0.0 ? 1.0 : 0.0));
    return 2.0 * w * u;
}

double optimal_value(long long d, double gamma) {
    if (d < 0) throw std::invalid_argument("distance must be nonnegative");
    return -(1.0 - std::pow(gamma, static_cast<double>(d))) / (1.0 - gamma);
}

double optimal_value_abstracted(long long d, int n, double gamma) {
    if (d < 0) throw std::invalid_argument("distance must be nonnegative");
    if (n < 1) throw std::invalid_argument("abstraction factor must be >= 1");
    const long long macro_steps = (d + n - 1) / n;
    return -(1.0 - std::pow(gamma, static_cast<double>(macro_steps))) / (1.0 - gamma);
}

ObjectiveSpec ObjectiveSpec::parse(const std::string& text) {
    auto parse_n = [&](size_t open) {
        const size_t close = text.find(')', open);
        if (close == std::string::npos) throw std::invalid_argument("objective missing ')'");
        return std::stoi(text.substr(open + 1, close - open - 1));
    };
    if (text == "iql") return iql();
    if (text.rfind("ota", 0) == 0) {
        if (text == "ota") throw std::invalid_argument("ota objective needs (n)");
        return ota(parse_n(3));
    }
    if (text.rfind("gamma_scaled", 0) == 0) {
        if (text == "gamma_scaled") throw std::invalid_argument("gamma_scaled objective needs (n)");
        return gamma_scaled(parse_n(12));
    }
    throw std::invalid_argument("unknown objective '" + text + "'");
}

double ObjectiveSpec::effective_gamma(double gamma) const {
    if (kind == Kind::GammaScaled) return std::pow(gamma, 1.0 / n);
    return gamma;
}

std::string ObjectiveSpec::name() const {
    switch (kind) {
        case Kind::Iql: return "iql";
        case Kind::Ota: return "ota(" + std::to_string(n) + ")";
        case Kind::GammaScaled: return "gamma_scaled(" + std::to_string(n) + ")";
    }
    return "?";
}

void ExpectileConfig::validate() const {
    if (!(tau > 0.5 && tau < 1.0))
        throw std::invalid_argument("tau must lie strictly in (0.5, 1)");
    if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in (0,1)");
    if (learning_rate <= 0.0) throw std::invalid_argument("learning rate must be positive");
    if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
}

ValueLearner::ValueLearner(std::unique_ptr<ValueFn> net, ValueLearnConfig cfg)
    : net_(std::move(net)),
      target_(*net_, cfg.target_polyak),
      cfg_(cfg),
      optimizer_(cfg.optimizer, net_->param_count()),
      grad_(static_cast<size_t>(net_->param_count()), 0.0) {
    if (cfg_.objective.n < 1) throw std::invalid_argument("abstraction factor must be >= 1");
    if (!(cfg_.base.gamma > 0.0 && cfg_.base.gamma < 1.0))
        throw std::invalid_argument("gamma must lie in (0,1)");
    if (!(cfg_.base.tau > 0.0 && cfg_.base.tau < 1.0))
        throw std::invalid_argument("tau must lie in (0,1)");
}

void ValueLearner::hard_sync() { polyak_update(target_.net->params(), net_->params(), 1.0); }

StepStats ValueLearner::step(const ValueBatch& batch) {
    if (batch.entries.empty()) throw std::invalid_argument("empty batch");
    if (batch.abstraction != cfg_.objective.sample_n())
        throw std::invalid_argument("batch sampled with n=" + std::to_string(batch.abstraction) +
                                    " but objective is " + cfg_.objective.name());
    const double gamma = cfg_.objective.effective_gamma(cfg_.base.gamma);
    const double tau = cfg_.base.tau;
    const int b = static_cast<int>(batch.entries.size());
    const double inv_b = 1.0 / static_cast<double>(b);

    scratch_s_.resize(static_cast<size_t>(b));
    scratch_g_.resize(static_cast<size_t>(b));
    scratch_succ_.resize(static_cast<size_t>(b));
    scratch_v_.resize(static_cast<size_t>(b));
    scratch_boot_.resize(static_cast<size_t>(b));
    scratch_up_.resize(static_cast<size_t>(b));
    for (int i = 0; i < b; ++i) {
        const ValueEntry& e = batch.entries[static_cast<size_t>(i)];
        scratch_s_[static_cast<size_t>(i)] = e.state;
        scratch_g_[static_cast<size_t>(i)] = e.goal;
        scratch_succ_[static_cast<size_t>(i)] = e.successor;
    }
    target_.net->evaluate_batch(scratch_succ_.data(), scratch_g_.data(), b, scratch_boot_.data());
    net_->evaluate_batch(scratch_s_.data(), scratch_g_.data(), b, scratch_v_.data());

    std::fill(grad_.begin(), grad_.end(), 0.0);
    StepStats stats;
    for (int i = 0; i < b; ++i) {
        const ValueEntry& e = batch.entries[static_cast<size_t>(i)];
        double bootstrap = scratch_boot_[static_cast<size_t>(i)];
        if (cfg_.terminal_bootstrap_mask && e.successor == e.goal) bootstrap = 0.0;
        const double u = e.reward + gamma * bootstrap - scratch_v_[static_cast<size_t>(i)];
        stats.mean_loss += expectile_loss(u, tau);
        stats.mean_residual += u;
        if (u > 0.0) stats.pos_residual_frac += 1.0;
        // dLoss/dV(s,g) = -L'(u); averaged over the batch
        scratch_up_[static_cast<size_t>(i)] = -expectile_loss_derivative(u, tau) * inv_b;
    }
    net_->accumulate_gradient_batch(scratch_s_.data(), scratch_g_.data(), scratch_up_.data(), b,
                                    grad_.data());
    stats.mean_loss *= inv_b;
    stats.mean_residual *= inv_b;
    stats.pos_residual_frac *= inv_b;
    if (!std::isfinite(stats.mean_loss))
        throw NumericError("non-finite loss " + std::to_string(stats.mean_loss) + " at step " +
                           std::to_string(steps_));

    optimizer_.apply(net_->params(), grad_);
    ++steps_;
    if (cfg_.hard_sync_every > 0) {
        if (steps_ % cfg_.hard_sync_every == 0) hard_sync();
    } else {
        sync_target(*net_, target_);
    }
    return stats;
}

std::string format_training_log_line(long long step, const std::string& objective,
                                     const StepStats& stats) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%lld,%s,%.9g,%.9g,%.9g", step, objective.c_str(),
                  stats.mean_loss, stats.mean_residual, stats.pos_residual_frac);
    return std::string(buf);
}

TabularValue tabular_fixed_point(const GridMaze& maze, ObjectiveSpec objective, double gamma,
                                 double tol, int max_sweeps) {
    const int f = maze.free_cell_count();
    if (f > 2500)
        throw std::invalid_argument("tabular_fixed_point is limited to 2500 free cells, got " +
                                    std::to_string(f));
    if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in (0,1)");
    const double geff = objective.effective_gamma(gamma);
    const int hop = objective.kind == ObjectiveSpec::Kind::Ota ? objective.n : 1;

    // Per-state successor sets: the one-step neighbors, or the radius-n BFS
    // ball for options (Stay makes every depth <= n realizable; a max backup
    // over the ball equals the max over true option outcomes).
    std::vector<std::vector<int>> succ(static_cast<size_t>(f));
    for (int si = 0; si < f; ++si) {
        const CellState s = maze.cell_at(si);
        if (hop == 1) {
            for (int a = 0; a < kNumActions; ++a) {
                const int ti = maze.cell_index(maze.move(s, static_cast<MoveAction>(a)));
                if (std::find(succ[si].begin(), succ[si].end(), ti) == succ[si].end())
                    succ[si].push_back(ti);
            }
        } else {
            std::vector<int> depth(static_cast<size_t>(f), -1);
            std::deque<int> frontier{si};
            depth[static_cast<size_t>(si)] = 0;
            succ[si].push_back(si);
            while (!frontier.empty()) {
                const int ci = frontier.front();
                frontier.pop_front();
                if (depth[static_cast<size_t>(ci)] == hop) continue;
                const CellState c = maze.cell_at(ci);
                for (int a = 0; a < 4; ++a) {
                    const CellState t = maze.move(c, static_cast<MoveAction>(a));
                    const int ti = maze.cell_index(t);
                    if (ti == ci || depth[static_cast<size_t>(ti)] >= 0) continue;
                    depth[static_cast<size_t>(ti)] = depth[static_cast<size_t>(ci)] + 1;
                    succ[si].push_back(ti);
                    frontier.push_back(ti);
                }
            }
        }
    }

    if (max_sweeps <= 0) max_sweeps = 4 * f / hop + 200;
    TabularValue value(f);
    std::vector<double> next(static_cast<size_t>(f) * f, 0.0);
    auto table = value.params();
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double delta = 0.0;
        for (int si = 0; si < f; ++si) {
            for (int gi = 0; gi < f; ++gi) {
                double best = -1e300;
                for (int ti : succ[static_cast<size_t>(si)])
                    best = std::max(best, table[static_cast<size_t>(ti) * f + gi]);
                const double r = (si == gi) ? 0.0 : -1.0;
                const double v = r + geff * best;
                next[static_cast<size_t>(si) * f + gi] = v;
                delta = std::max(delta, std::fabs(v - table[static_cast<size_t>(si) * f + gi]));
            }
        }
        std::copy(next.begin(), next.end(), table.begin());
        if (delta <= tol) return value;
    }
    throw NumericError("tabular_fixed_point did not converge within " +
                       std::to_string(max_sweeps) + " sweeps");
}

} // namespace ota
