#include "policy.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ota {

std::string policy_role_name(PolicyRole role) {
    switch (role) {
        case PolicyRole::High: return "policy-high";
        case PolicyRole::Low: return "policy-low";
        case PolicyRole::Flat: return "policy-flat";
    }
    throw std::invalid_argument("unknown policy role");
}

namespace {
PolicyRole role_from_name(const std::string& name) {
    if (name == "policy-high") return PolicyRole::High;
    if (name == "policy-low") return PolicyRole::Low;
    if (name == "policy-flat") return PolicyRole::Flat;
    throw IoError("unknown policy role '" + name + "'");
}
} // namespace

void PolicyFn::logits_batch(const int* s, const int* cond, int batch, double* out) const {
    const int a = num_choices();
    for (int i = 0; i < batch; ++i) logits(s[i], cond[i], out + static_cast<size_t>(i) * a);
}

void PolicyFn::accumulate_logits_gradient_batch(const int* s, const int* cond,
                                                const double* dlogits, int batch,
                                                double* grad) const {
    const int a = num_choices();
    for (int i = 0; i < batch; ++i)
        accumulate_logits_gradient(s[i], cond[i], dlogits + static_cast<size_t>(i) * a, grad);
}

int PolicyFn::argmax(int s, int cond) const {
    std::vector<double> z(static_cast<size_t>(num_choices()));
    logits(s, cond, z.data());
    return static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
}

int PolicyFn::sample(int s, int cond, Rng& rng) const {
    std::vector<double> z(static_cast<size_t>(num_choices()));
    logits(s, cond, z.data());
    const double zmax = *std::max_element(z.begin(), z.end());
    double total = 0.0;
    for (double& v : z) {
        v = std::exp(v - zmax);
        total += v;
    }
    double x = rng.uniform() * total;
    for (size_t i = 0; i < z.size(); ++i) {
        x -= z[i];
        if (x < 0.0) return static_cast<int>(i);
    }
    return num_choices() - 1;
}

TabularPolicy::TabularPolicy(int free_cells, int num_choices, PolicyRole role)
    : free_cells_(free_cells), num_choices_(num_choices), role_(role) {
    table_.assign(static_cast<size_t>(free_cells) * free_cells * num_choices, 0.0);
}

void TabularPolicy::logits(int s, int cond, double* out) const {
    const double* row =
        table_.data() + (static_cast<size_t>(s) * free_cells_ + cond) * num_choices_;
    std::copy(row, row + num_choices_, out);
}

void TabularPolicy::accumulate_logits_gradient(int s, int cond, const double* dlogits,
                                               double* grad) const {
    double* row = grad + (static_cast<size_t>(s) * free_cells_ + cond) * num_choices_;
    for (int c = 0; c < num_choices_; ++c) row[c] += dlogits[c];
}

std::string TabularPolicy::descriptor() const {
    return policy_role_name(role_) + " tabular " + std::to_string(free_cells_) + " " +
           std::to_string(num_choices_);
}

MlpPolicy::MlpPolicy(const GridMaze& maze, FeatureSpec features, const std::vector<int>& hidden,
                     int num_choices, PolicyRole role, Rng& rng)
    : features_(features),
      width_(maze.width()),
      height_(maze.height()),
      free_cells_(maze.free_cell_count()),
      role_(role) {
    cells_.reserve(static_cast<size_t>(free_cells_));
    for (int i = 0; i < free_cells_; ++i) cells_.push_back(maze.cell_at(i));
    std::vector<int> sizes;
    sizes.push_back(features_.mode == FeatureSpec::Mode::OnehotPair ? 2 * free_cells_ : 6);
    for (int h : hidden) sizes.push_back(h);
    sizes.push_back(num_choices);
    core_ = MlpCore(sizes);
    core_.init_random(rng);
}

namespace {
thread_local MlpCore::Workspace tls_policy_ws;
}

MlpCore::Input MlpPolicy::encode(int s, int cond, double* buf) const {
    if (features_.mode == FeatureSpec::Mode::OnehotPair)
        return MlpCore::Input{nullptr, s, free_cells_ + cond};
    const CellState cs = cells_[static_cast<size_t>(s)];
    const CellState cc = cells_[static_cast<size_t>(cond)];
    const double sx = width_ > 1 ? 1.0 / (width_ - 1) : 1.0;
    const double sy = height_ > 1 ? 1.0 / (height_ - 1) : 1.0;
    buf[0] = cs.x * sx;
    buf[1] = cs.y * sy;
    buf[2] = cc.x * sx;
    buf[3] = cc.y * sy;
    buf[4] = (cc.x - cs.x) * sx;
    buf[5] = (cc.y - cs.y) * sy;
    return MlpCore::Input{buf, -1, -1};
}

void MlpPolicy::logits(int s, int cond, double* out) const {
    double buf[6];
    const MlpCore::Input in = encode(s, cond, buf);
    const double* o = core_.forward(in, tls_policy_ws);
    std::copy(o, o + core_.output_dim(), out);
}

void MlpPolicy::accumulate_logits_gradient(int s, int cond, const double* dlogits,
                                           double* grad) const {
    double buf[6];
    const MlpCore::Input in = encode(s, cond, buf);
    core_.forward(in, tls_policy_ws);
    core_.backward(in, dlogits, tls_policy_ws, grad);
}

namespace {
thread_local MlpCore::BatchWorkspace tls_policy_batch_ws;
thread_local std::vector<MlpCore::Input> tls_policy_inputs;
thread_local std::vector<double> tls_policy_features;
} // namespace

void MlpPolicy::logits_batch(const int* s, const int* cond, int batch, double* out) const {
    tls_policy_inputs.resize(static_cast<size_t>(batch));
    tls_policy_features.resize(static_cast<size_t>(batch) * 6);
    for (int i = 0; i < batch; ++i)
        tls_policy_inputs[static_cast<size_t>(i)] =
            encode(s[i], cond[i], tls_policy_features.data() + 6 * i);
    core_.forward_batch(tls_policy_inputs.data(), batch, tls_policy_batch_ws);
    const int a = core_.output_dim();
    for (int i = 0; i < batch; ++i) {
        const double* o = core_.output_batch(tls_policy_batch_ws, i);
        std::copy(o, o + a, out + static_cast<size_t>(i) * a);
    }
}

void MlpPolicy::accumulate_logits_gradient_batch(const int* s, const int* cond,
                                                 const double* dlogits, int batch,
                                                 double* grad) const {
    tls_policy_inputs.resize(static_cast<size_t>(batch));
    tls_policy_features.resize(static_cast<size_t>(batch) * 6);
    for (int i = 0; i < batch; ++i)
        tls_policy_inputs[static_cast<size_t>(i)] =
            encode(s[i], cond[i], tls_policy_features.data() + 6 * i);
    core_.forward_batch(tls_policy_inputs.data(), batch, tls_policy_batch_ws);
    core_.backward_batch(tls_policy_inputs.data(), batch, dlogits, tls_policy_batch_ws, grad);
}

std::string MlpPolicy::descriptor() const {
    std::ostringstream out;
    out << policy_role_name(role_) << " mlp " << features_.name() << " " << width_ << " "
        << height_ << " " << free_cells_;
    for (int s : core_.layer_sizes()) out << " " << s;
    return out.str();
}

void AwrConfig::validate() const {
    if (beta_h <= 0.0 || beta_l <= 0.0)
        throw std::invalid_argument("inverse temperatures must be positive");
    if (weight_clip < 1.0) throw std::invalid_argument("weight_clip must be >= 1");
}

double high_advantage(const ValueFn& value, int s, int sk, int g) {
    return value.evaluate(sk, g) - value.evaluate(s, g);
}

double low_advantage(const ValueFn& value, int s, int s1, int subgoal) {
    return value.evaluate(s1, subgoal) - value.evaluate(s, subgoal);
}

PolicyLearner::PolicyLearner(std::unique_ptr<PolicyFn> net, OptimizerConfig optimizer)
    : net_(std::move(net)),
      optimizer_(optimizer, net_->param_count()),
      grad_(static_cast<size_t>(net_->param_count()), 0.0) {}

AwrStats PolicyLearner::weighted_step(const std::vector<int>& s, const std::vector<int>& cond,
                                      const std::vector<int>& target,
                                      const std::vector<double>& weight) {
    const int b = static_cast<int>(s.size());
    const int a = net_->num_choices();
    logits_buf_.resize(static_cast<size_t>(b) * a);
    net_->logits_batch(s.data(), cond.data(), b, logits_buf_.data());

    std::fill(grad_.begin(), grad_.end(), 0.0);
    AwrStats stats;
    const double inv_b = 1.0 / static_cast<double>(b);
    // logits_buf_ is reused in place as the dlogits buffer.
    for (int i = 0; i < b; ++i) {
        double* z = logits_buf_.data() + static_cast<size_t>(i) * a;
        const double zmax = *std::max_element(z, z + a);
        double total = 0.0;
        for (int c = 0; c < a; ++c) total += std::exp(z[c] - zmax);
        const double logz = zmax + std::log(total);
        const double logp = z[target[static_cast<size_t>(i)]] - logz;
        stats.mean_loss += -weight[static_cast<size_t>(i)] * logp;
        // d(-w*logp)/dz = w * (softmax - onehot)
        const double w = weight[static_cast<size_t>(i)] * inv_b;
        for (int c = 0; c < a; ++c) z[c] = w * std::exp(z[c] - logz);
        z[target[static_cast<size_t>(i)]] -= w;
    }
    net_->accumulate_logits_gradient_batch(s.data(), cond.data(), logits_buf_.data(), b,
                                           grad_.data());
    stats.mean_loss *= inv_b;
    if (!std::isfinite(stats.mean_loss)) throw NumericError("non-finite policy loss");
    optimizer_.apply(net_->params(), grad_);
    return stats;
}

AwrStats PolicyLearner::step_high(const HighBatch& batch, const ValueFn& value, double beta,
                                  double weight_clip) {
    const size_t b = batch.entries.size();
    if (b == 0) throw std::invalid_argument("empty high batch");
    std::vector<int> s(b), cond(b), target(b);
    std::vector<double> weight(b), v_s(b), v_sk(b);
    for (size_t i = 0; i < b; ++i) {
        const HighEntry& e = batch.entries[i];
        s[i] = e.state;
        cond[i] = e.goal;
        target[i] = e.subgoal;
    }
    value.evaluate_batch(s.data(), cond.data(), static_cast<int>(b), v_s.data());
    value.evaluate_batch(target.data(), cond.data(), static_cast<int>(b), v_sk.data());
    double wsum = 0, clipped = 0;
    for (size_t i = 0; i < b; ++i) {
        const double adv = v_sk[i] - v_s[i];
        double w = std::exp(beta * adv);
        if (!(w <= weight_clip)) { // also catches NaN
            if (std::isnan(w)) throw NumericError("NaN advantage weight in high batch");
            w = weight_clip;
            clipped += 1.0;
        }
        weight[i] = w;
        wsum += w;
    }
    AwrStats stats = weighted_step(s, cond, target, weight);
    stats.mean_weight = wsum / static_cast<double>(b);
    stats.clipped_frac = clipped / static_cast<double>(b);
    return stats;
}

AwrStats PolicyLearner::step_low(const LowBatch& batch, const ValueFn& value, double beta,
                                 double weight_clip) {
    const size_t b = batch.entries.size();
    if (b == 0) throw std::invalid_argument("empty low batch");
    std::vector<int> s(b), cond(b), target(b), next(b);
    std::vector<double> weight(b), v_s(b), v_next(b);
    for (size_t i = 0; i < b; ++i) {
        const LowEntry& e = batch.entries[i];
        s[i] = e.state;
        cond[i] = e.subgoal;
        target[i] = static_cast<int>(e.action);
        next[i] = e.next_state;
    }
    value.evaluate_batch(s.data(), cond.data(), static_cast<int>(b), v_s.data());
    value.evaluate_batch(next.data(), cond.data(), static_cast<int>(b), v_next.data());
    double wsum = 0, clipped = 0;
    for (size_t i = 0; i < b; ++i) {
        const double adv = v_next[i] - v_s[i];
        double w = std::exp(beta * adv);
        if (!(w <= weight_clip)) {
            if (std::isnan(w)) throw NumericError("NaN advantage weight in low batch");
            w = weight_clip;
            clipped += 1.0;
        }
        weight[i] = w;
        wsum += w;
    }
    AwrStats stats = weighted_step(s, cond, target, weight);
    stats.mean_weight = wsum / static_cast<double>(b);
    stats.clipped_frac = clipped / static_cast<double>(b);
    return stats;
}

HierarchicalAgent::HierarchicalAgent(std::shared_ptr<const GridMaze> maze, int k,
                                     int replan_interval)
    : maze_(std::move(maze)), k_(k), replan_interval_(replan_interval) {
    if (k_ < 1) throw std::invalid_argument("subgoal horizon k must be >= 1");
    if (replan_interval_ < 1) throw std::invalid_argument("replan_interval must be >= 1");
}

void HierarchicalAgent::set_high(std::shared_ptr<const PolicyFn> high) {
    high_ = std::move(high);
    high_oracle_ = false;
    flat_ = false;
}
void HierarchicalAgent::set_high_oracle() {
    high_.reset();
    high_oracle_ = true;
    flat_ = false;
}
void HierarchicalAgent::set_low(std::shared_ptr<const PolicyFn> low) {
    low_ = std::move(low);
    low_oracle_ = false;
}
void HierarchicalAgent::set_low_oracle() {
    low_.reset();
    low_oracle_ = true;
}
void HierarchicalAgent::set_flat(std::shared_ptr<const PolicyFn> flat) {
    low_ = std::move(flat);
    low_oracle_ = false;
    flat_ = true;
    high_.reset();
    high_oracle_ = false;
}

CellState HierarchicalAgent::current_subgoal(CellState s, CellState g, Rng& rng) const {
    if (flat_) return g;
    if (high_oracle_) {
        CellState w = s;
        for (int i = 0; i < k_ && !(w == g); ++i) w = maze_->oracle_subgoal(w, g);
        return w;
    }
    if (!high_) throw std::invalid_argument("agent has no high-level component");
    const int si = maze_->cell_index(s);
    const int gi = maze_->cell_index(g);
    const int wi = stochastic_ ? high_->sample(si, gi, rng) : high_->argmax(si, gi);
    return maze_->cell_at(wi);
}

MoveAction HierarchicalAgent::act(CellState s, CellState g, RolloutState& rs, Rng& rng) const {
    maze_->require_free(s, "state");
    maze_->require_free(g, "goal");
    if (s == g) return MoveAction::Stay;
    if (rs.steps_since_replan < 0 || rs.steps_since_replan >= replan_interval_) {
        rs.subgoal = current_subgoal(s, g, rng);
        rs.steps_since_replan = 0;
    }
    ++rs.steps_since_replan;
    const CellState w = rs.subgoal;
    if (low_oracle_) {
        if (s == w) return MoveAction::Stay;
        const CellState n = maze_->oracle_subgoal(s, w);
        if (n.y == s.y - 1) return MoveAction::North;
        if (n.x == s.x + 1) return MoveAction::East;
        if (n.y == s.y + 1) return MoveAction::South;
        return MoveAction::West;
    }
    if (!low_) throw std::invalid_argument("agent has no low-level component");
    const int si = maze_->cell_index(s);
    const int wi = maze_->cell_index(w);
    const int a = stochastic_ ? low_->sample(si, wi, rng) : low_->argmax(si, wi);
    return static_cast<MoveAction>(a);
}

void save_policy_checkpoint(const std::string& path, const PolicyFn& net) {
    save_checkpoint(path, net.descriptor(), net.params());
}

std::unique_ptr<PolicyFn> load_policy_checkpoint(const std::string& path, const GridMaze& maze,
                                                 PolicyRole expected_role) {
    std::vector<double> params;
    const std::string descriptor = load_checkpoint(path, params);
    const auto toks = split_tokens(descriptor);
    if (toks.size() < 4) throw IoError("malformed policy descriptor: " + descriptor);
    const PolicyRole role = role_from_name(toks[0]);
    if (role != expected_role)
        throw IoError("checkpoint " + path + " holds " + toks[0] + ", expected " +
                      policy_role_name(expected_role));
    std::unique_ptr<PolicyFn> net;
    if (toks[1] == "tabular") {
        const int f = std::stoi(toks[2]);
        const int a = std::stoi(toks[3]);
        if (f != maze.free_cell_count())
            throw IoError("tabular policy sized for " + toks[2] + " cells, maze has " +
                          std::to_string(maze.free_cell_count()));
        net = std::make_unique<TabularPolicy>(f, a, role);
    } else if (toks[1] == "mlp") {
        if (toks.size() < 9) throw IoError("malformed mlp policy descriptor: " + descriptor);
        const FeatureSpec spec = FeatureSpec::parse(toks[2]);
        const int w = std::stoi(toks[3]), h = std::stoi(toks[4]), f = std::stoi(toks[5]);
        if (w != maze.width() || h != maze.height() || f != maze.free_cell_count())
            throw IoError("mlp policy geometry mismatch for maze " + maze.layout_id());
        std::vector<int> hidden;
        for (size_t i = 7; i + 1 < toks.size(); ++i) hidden.push_back(std::stoi(toks[i]));
        const int out = std::stoi(toks.back());
        Rng rng(0);
        net = std::make_unique<MlpPolicy>(maze, spec, hidden, out, role, rng);
    } else {
        throw IoError("unknown policy architecture '" + toks[1] + "' in " + path);
    }
    if (params.size() != net->params().size())
        throw IoError("parameter count mismatch in " + path);
    std::copy(params.begin(), params.end(), net->params().begin());
    return net;
}

} // namespace ota
