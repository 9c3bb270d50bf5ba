#include "approximator.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ota {

FeatureSpec FeatureSpec::parse(const std::string& name) {
    if (name == "onehot-pair") return {Mode::OnehotPair};
    if (name == "normalized-coords") return {Mode::NormalizedCoords};
    throw std::invalid_argument("unknown feature mode '" + name + "'");
}

std::string FeatureSpec::name() const {
    return mode == Mode::OnehotPair ? "onehot-pair" : "normalized-coords";
}

int FeatureSpec::dim(const GridMaze& maze) const {
    return mode == Mode::OnehotPair ? 2 * maze.free_cell_count() : 6;
}

MlpCore::MlpCore(std::vector<int> layer_sizes) : sizes_(std::move(layer_sizes)) {
    if (sizes_.size() < 2) throw std::invalid_argument("MLP needs at least input and output layers");
    if (sizes_.size() > 16) throw std::invalid_argument("MLP depth capped at 15 layers");
    int total = 0;
    for (size_t l = 1; l < sizes_.size(); ++l) {
        weight_offsets_.push_back(total);
        total += sizes_[l] * sizes_[l - 1];
        bias_offsets_.push_back(total);
        total += sizes_[l];
    }
    params_.assign(static_cast<size_t>(total), 0.0);
}

void MlpCore::init_random(Rng& rng) {
    // Uniform he-style init for hidden layers; the output layer stays zero so
    // fresh nets evaluate to zero everywhere, matching tabular zero init.
    for (size_t l = 1; l + 1 < sizes_.size(); ++l) {
        const int fan_in = sizes_[l - 1];
        const double bound = std::sqrt(6.0 / fan_in);
        double* w = params_.data() + weight_offsets_[l - 1];
        for (int i = 0; i < sizes_[l] * sizes_[l - 1]; ++i)
            w[i] = (2.0 * rng.uniform() - 1.0) * bound;
    }
}

const double* MlpCore::forward(const Input& in, Workspace& ws) const {
    int act_total = 0;
    for (size_t l = 1; l < sizes_.size(); ++l) act_total += sizes_[l];
    ws.acts.resize(static_cast<size_t>(act_total));

    const int num_layers = static_cast<int>(sizes_.size()) - 1;
    double* out = ws.acts.data();
    const double* prev = nullptr;
    for (int l = 0; l < num_layers; ++l) {
        const int rows = sizes_[l + 1];
        const int cols = sizes_[l];
        const double* w = params_.data() + weight_offsets_[l];
        const double* b = params_.data() + bias_offsets_[l];
        if (l == 0 && in.dense == nullptr) {
            for (int r = 0; r < rows; ++r)
                out[r] = b[r] + w[static_cast<size_t>(r) * cols + in.hot_a] +
                         w[static_cast<size_t>(r) * cols + in.hot_b];
        } else {
            const double* x = (l == 0) ? in.dense : prev;
            for (int r = 0; r < rows; ++r) {
                const double* wr = w + static_cast<size_t>(r) * cols;
                double acc = b[r];
                for (int c = 0; c < cols; ++c) acc += wr[c] * x[c];
                out[r] = acc;
            }
        }
        if (l + 1 < num_layers) { // relu on hidden layers only
            for (int r = 0; r < rows; ++r)
                if (out[r] < 0.0) out[r] = 0.0;
        }
        prev = out;
        out += rows;
    }
    return prev;
}

void MlpCore::backward(const Input& in, const double* dout, Workspace& ws, double* grad) const {
    const int num_layers = static_cast<int>(sizes_.size()) - 1;
    int delta_total = 0;
    for (size_t l = 1; l < sizes_.size(); ++l) delta_total += sizes_[l];
    ws.deltas.resize(static_cast<size_t>(delta_total));

    // Activation offsets per layer (outputs of layer l at acts[off[l]]).
    int off[16];
    int acc = 0;
    for (int l = 0; l < num_layers; ++l) {
        off[l] = acc;
        acc += sizes_[l + 1];
    }

    double* delta = ws.deltas.data() + off[num_layers - 1];
    std::memcpy(delta, dout, sizeof(double) * static_cast<size_t>(sizes_.back()));

    for (int l = num_layers - 1; l >= 0; --l) {
        const int rows = sizes_[l + 1];
        const int cols = sizes_[l];
        const double* w = params_.data() + weight_offsets_[l];
        double* gw = grad + weight_offsets_[l];
        double* gb = grad + bias_offsets_[l];
        const double* d = ws.deltas.data() + off[l];

        for (int r = 0; r < rows; ++r) gb[r] += d[r];

        if (l == 0 && in.dense == nullptr) {
            for (int r = 0; r < rows; ++r) {
                gw[static_cast<size_t>(r) * cols + in.hot_a] += d[r];
                gw[static_cast<size_t>(r) * cols + in.hot_b] += d[r];
            }
            return;
        }
        const double* x = (l == 0) ? in.dense : ws.acts.data() + off[l - 1];
        for (int r = 0; r < rows; ++r) {
            const double dr = d[r];
            if (dr == 0.0) continue;
            double* gwr = gw + static_cast<size_t>(r) * cols;
            for (int c = 0; c < cols; ++c) gwr[c] += dr * x[c];
        }
        if (l == 0) return;

        double* dprev = ws.deltas.data() + off[l - 1];
        std::memset(dprev, 0, sizeof(double) * static_cast<size_t>(cols));
        for (int r = 0; r < rows; ++r) {
            const double dr = d[r];
            if (dr == 0.0) continue;
            const double* wr = w + static_cast<size_t>(r) * cols;
            for (int c = 0; c < cols; ++c) dprev[c] += dr * wr[c];
        }
        // relu mask of the previous hidden layer
        const double* aprev = ws.acts.data() + off[l - 1];
        for (int c = 0; c < cols; ++c)
            if (aprev[c] <= 0.0) dprev[c] = 0.0;
    }
}

void MlpCore::forward_batch(const Input* ins, int batch, BatchWorkspace& ws) const {
    const int num_layers = static_cast<int>(sizes_.size()) - 1;
    int act_total = 0;
    for (size_t l = 1; l < sizes_.size(); ++l) act_total += sizes_[l];
    ws.acts.resize(static_cast<size_t>(act_total) * batch);

    int off = 0;
    const double* prev = nullptr;
    int prev_rows = 0;
    for (int l = 0; l < num_layers; ++l) {
        const int rows = sizes_[l + 1];
        const int cols = sizes_[l];
        const double* w = params_.data() + weight_offsets_[l];
        const double* bias = params_.data() + bias_offsets_[l];
        double* out = ws.acts.data() + static_cast<size_t>(off) * batch;

        if (l == 0 && ins[0].dense == nullptr) {
            for (int b = 0; b < batch; ++b) {
                double* ob = out + static_cast<size_t>(b) * rows;
                const int ia = ins[b].hot_a, ib = ins[b].hot_b;
                for (int r = 0; r < rows; ++r)
                    ob[r] = bias[r] + w[static_cast<size_t>(r) * cols + ia] +
                            w[static_cast<size_t>(r) * cols + ib];
            }
        } else if (l == 0) {
            for (int b = 0; b < batch; ++b) {
                const double* x = ins[b].dense;
                double* ob = out + static_cast<size_t>(b) * rows;
                for (int r = 0; r < rows; ++r) {
                    const double* wr = w + static_cast<size_t>(r) * cols;
                    double acc = bias[r];
                    for (int c = 0; c < cols; ++c) acc += wr[c] * x[c];
                    ob[r] = acc;
                }
            }
        } else {
            for (int b = 0; b < batch; ++b) {
                const double* x = prev + static_cast<size_t>(b) * prev_rows;
                double* ob = out + static_cast<size_t>(b) * rows;
                for (int r = 0; r < rows; ++r) {
                    const double* wr = w + static_cast<size_t>(r) * cols;
                    double acc = bias[r];
                    for (int c = 0; c < cols; ++c) acc += wr[c] * x[c];
                    ob[r] = acc;
                }
            }
        }
        if (l + 1 < num_layers) {
            for (int i = 0; i < rows * batch; ++i)
                if (out[i] < 0.0) out[i] = 0.0;
        }
        prev = out;
        prev_rows = rows;
        off += rows;
    }
}

const double* MlpCore::output_batch(const BatchWorkspace& ws, int b) const {
    int act_total = 0;
    for (size_t l = 1; l < sizes_.size(); ++l) act_total += sizes_[l];
    const int out_dim = sizes_.back();
    const int batch = static_cast<int>(ws.acts.size()) / act_total;
    const size_t out_off = static_cast<size_t>(act_total - out_dim) * batch;
    return ws.acts.data() + out_off + static_cast<size_t>(b) * out_dim;
}

void MlpCore::backward_batch(const Input* ins, int batch, const double* dout, BatchWorkspace& ws,
                             double* grad) const {
    const int num_layers = static_cast<int>(sizes_.size()) - 1;
    int off[16];
    int acc = 0;
    for (int l = 0; l < num_layers; ++l) {
        off[l] = acc;
        acc += sizes_[l + 1];
    }
    ws.deltas.resize(static_cast<size_t>(acc) * batch);

    std::memcpy(ws.deltas.data() + static_cast<size_t>(off[num_layers - 1]) * batch, dout,
                sizeof(double) * static_cast<size_t>(sizes_.back()) * batch);

    for (int l = num_layers - 1; l >= 0; --l) {
        const int rows = sizes_[l + 1];
        const int cols = sizes_[l];
        const double* w = params_.data() + weight_offsets_[l];
        double* gw = grad + weight_offsets_[l];
        double* gb = grad + bias_offsets_[l];
        const double* d = ws.deltas.data() + static_cast<size_t>(off[l]) * batch;

        for (int b = 0; b < batch; ++b) {
            const double* db = d + static_cast<size_t>(b) * rows;
            for (int r = 0; r < rows; ++r) gb[r] += db[r];
        }

        if (l == 0 && ins[0].dense == nullptr) {
            for (int b = 0; b < batch; ++b) {
                const double* db = d + static_cast<size_t>(b) * rows;
                const int ia = ins[b].hot_a, ib = ins[b].hot_b;
                for (int r = 0; r < rows; ++r) {
                    gw[static_cast<size_t>(r) * cols + ia] += db[r];
                    gw[static_cast<size_t>(r) * cols + ib] += db[r];
                }
            }
            return;
        }

        const double* x_base = (l == 0) ? nullptr : ws.acts.data() + static_cast<size_t>(off[l - 1]) * batch;
        for (int b = 0; b < batch; ++b) {
            const double* db = d + static_cast<size_t>(b) * rows;
            const double* x = (l == 0) ? ins[b].dense : x_base + static_cast<size_t>(b) * cols;
            for (int r = 0; r < rows; ++r) {
                const double dr = db[r];
                if (dr == 0.0) continue;
                double* gwr = gw + static_cast<size_t>(r) * cols;
                for (int c = 0; c < cols; ++c) gwr[c] += dr * x[c];
            }
        }
        if (l == 0) return;

        double* dprev = ws.deltas.data() + static_cast<size_t>(off[l - 1]) * batch;
        std::memset(dprev, 0, sizeof(double) * static_cast<size_t>(cols) * batch);
        for (int b = 0; b < batch; ++b) {
            const double* db = d + static_cast<size_t>(b) * rows;
            double* dp = dprev + static_cast<size_t>(b) * cols;
            for (int r = 0; r < rows; ++r) {
                const double dr = db[r];
                if (dr == 0.0) continue;
                const double* wr = w + static_cast<size_t>(r) * cols;
                for (int c = 0; c < cols; ++c) dp[c] += dr * wr[c];
            }
            const double* ap = x_base + static_cast<size_t>(b) * cols;
            for (int c = 0; c < cols; ++c)
                if (ap[c] <= 0.0) dp[c] = 0.0;
        }
    }
}

void ValueFn::evaluate_batch(const int* s, const int* g, int batch, double* out) const {
    for (int i = 0; i < batch; ++i) out[i] = evaluate(s[i], g[i]);
}

void ValueFn::accumulate_gradient_batch(const int* s, const int* g, const double* upstream,
                                        int batch, double* grad) const {
    for (int i = 0; i < batch; ++i) accumulate_gradient(s[i], g[i], upstream[i], grad);
}

double ValueFn::evaluate(const GridMaze& maze, CellState s, CellState g) const {
    maze.require_free(s, "state");
    maze.require_free(g, "goal");
    return evaluate(maze.cell_index(s), maze.cell_index(g));
}

TabularValue::TabularValue(int free_cells) : free_cells_(free_cells) {
    table_.assign(static_cast<size_t>(free_cells) * free_cells, 0.0);
}

std::string TabularValue::descriptor() const {
    return "value tabular " + std::to_string(free_cells_);
}

namespace {
thread_local MlpCore::Workspace tls_workspace;
}

MlpValue::MlpValue(const GridMaze& maze, FeatureSpec features, const std::vector<int>& hidden,
                   Rng& rng)
    : features_(features),
      width_(maze.width()),
      height_(maze.height()),
      free_cells_(maze.free_cell_count()) {
    cells_.reserve(static_cast<size_t>(free_cells_));
    for (int i = 0; i < free_cells_; ++i) cells_.push_back(maze.cell_at(i));
    std::vector<int> sizes;
    sizes.push_back(features_.mode == FeatureSpec::Mode::OnehotPair ? 2 * free_cells_ : 6);
    for (int h : hidden) {
        if (h < 1) throw std::invalid_argument("hidden layer width must be >= 1");
        sizes.push_back(h);
    }
    sizes.push_back(1);
    core_ = MlpCore(sizes);
    core_.init_random(rng);
}

MlpCore::Input MlpValue::encode(int s, int g, double* buf) const {
    if (features_.mode == FeatureSpec::Mode::OnehotPair)
        return MlpCore::Input{nullptr, s, free_cells_ + g};
    const CellState cs = cells_[static_cast<size_t>(s)];
    const CellState cg = cells_[static_cast<size_t>(g)];
    const double sx = width_ > 1 ? 1.0 / (width_ - 1) : 1.0;
    const double sy = height_ > 1 ? 1.0 / (height_ - 1) : 1.0;
    buf[0] = cs.x * sx;
    buf[1] = cs.y * sy;
    buf[2] = cg.x * sx;
    buf[3] = cg.y * sy;
    buf[4] = (cg.x - cs.x) * sx;
    buf[5] = (cg.y - cs.y) * sy;
    return MlpCore::Input{buf, -1, -1};
}

double MlpValue::evaluate(int s, int g) const {
    double buf[6];
    const MlpCore::Input in = encode(s, g, buf);
    return core_.forward(in, tls_workspace)[0];
}

void MlpValue::accumulate_gradient(int s, int g, double upstream, double* grad) const {
    double buf[6];
    const MlpCore::Input in = encode(s, g, buf);
    core_.forward(in, tls_workspace);
    core_.backward(in, &upstream, tls_workspace, grad);
}

namespace {
thread_local MlpCore::BatchWorkspace tls_batch_ws;
thread_local std::vector<MlpCore::Input> tls_inputs;
thread_local std::vector<double> tls_feature_buf;
} // namespace

void MlpValue::evaluate_batch(const int* s, const int* g, int batch, double* out) const {
    tls_inputs.resize(static_cast<size_t>(batch));
    tls_feature_buf.resize(static_cast<size_t>(batch) * 6);
    for (int i = 0; i < batch; ++i)
        tls_inputs[static_cast<size_t>(i)] = encode(s[i], g[i], tls_feature_buf.data() + 6 * i);
    core_.forward_batch(tls_inputs.data(), batch, tls_batch_ws);
    for (int i = 0; i < batch; ++i) out[i] = core_.output_batch(tls_batch_ws, i)[0];
}

void MlpValue::accumulate_gradient_batch(const int* s, const int* g, const double* upstream,
                                         int batch, double* grad) const {
    tls_inputs.resize(static_cast<size_t>(batch));
    tls_feature_buf.resize(static_cast<size_t>(batch) * 6);
    for (int i = 0; i < batch; ++i)
        tls_inputs[static_cast<size_t>(i)] = encode(s[i], g[i], tls_feature_buf.data() + 6 * i);
    core_.forward_batch(tls_inputs.data(), batch, tls_batch_ws);
    core_.backward_batch(tls_inputs.data(), batch, upstream, tls_batch_ws, grad);
}

std::string MlpValue::descriptor() const {
    std::ostringstream out;
    out << "value mlp " << features_.name() << " " << width_ << " " << height_ << " "
        << free_cells_;
    for (int s : core_.layer_sizes()) out << " " << s;
    return out.str();
}

void polyak_update(std::span<double> target, std::span<const double> live, double rho) {
    if (target.size() != live.size())
        throw std::invalid_argument("target/live parameter shape mismatch");
    if (rho == 1.0) {
        std::memcpy(target.data(), live.data(), sizeof(double) * live.size());
        return;
    }
    const double keep = 1.0 - rho;
    for (size_t i = 0; i < target.size(); ++i) target[i] = keep * target[i] + rho * live[i];
}

void sync_target(const ValueFn& live, TargetCopy& target) {
    polyak_update(target.net->params(), live.params(), target.polyak_rate);
}

Optimizer::Optimizer(OptimizerConfig cfg, int param_count) : cfg_(cfg) {
    if (cfg_.kind == OptimizerConfig::Kind::Adam) {
        m_.assign(static_cast<size_t>(param_count), 0.0);
        v_.assign(static_cast<size_t>(param_count), 0.0);
    }
}

void Optimizer::apply(std::span<double> params, std::span<const double> grad) {
    if (params.size() != grad.size())
        throw std::invalid_argument("parameter/gradient shape mismatch");
    for (size_t i = 0; i < grad.size(); ++i) {
        if (std::isnan(grad[i]))
            throw NumericError("NaN gradient at parameter " + std::to_string(i));
    }
    if (cfg_.kind == OptimizerConfig::Kind::Sgd) {
        for (size_t i = 0; i < params.size(); ++i) params[i] -= cfg_.lr * grad[i];
        return;
    }
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (size_t i = 0; i < params.size(); ++i) {
        m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
        v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
        const double mhat = m_[i] / bc1;
        const double vhat = v_[i] / bc2;
        params[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
}

namespace {

constexpr const char* kCkptMagic = "OTAGCRL-CKPT v1";

void write_doubles_le(std::ofstream& out, std::span<const double> values) {
    static_assert(sizeof(double) == 8);
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(values.data()),
                  static_cast<std::streamsize>(values.size() * 8));
    } else {
        for (double v : values) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, 8);
            char b[8];
            for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
            out.write(b, 8);
        }
    }
}

void read_doubles_le(std::ifstream& in, std::vector<double>& values) {
    if constexpr (std::endian::native == std::endian::little) {
        in.read(reinterpret_cast<char*>(values.data()),
                static_cast<std::streamsize>(values.size() * 8));
    } else {
        for (double& v : values) {
            char b[8];
            in.read(b, 8);
            std::uint64_t bits = 0;
            for (int i = 0; i < 8; ++i)
                bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
            std::memcpy(&v, &bits, 8);
        }
    }
}

} // namespace

std::vector<std::string> split_tokens(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream in(line);
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

void save_checkpoint(const std::string& path, const std::string& descriptor,
                     std::span<const double> params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    out << kCkptMagic << "\n" << descriptor << "\n";
    write_doubles_le(out, params);
    if (!out) throw IoError("failed while writing checkpoint: " + path);
}

std::string load_checkpoint(const std::string& path, std::vector<double>& params) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    std::string magic, descriptor;
    std::getline(in, magic);
    if (magic != kCkptMagic) throw IoError("bad checkpoint header in " + path);
    if (!std::getline(in, descriptor)) throw IoError("missing descriptor line in " + path);
    const std::streampos payload_start = in.tellg();
    in.seekg(0, std::ios::end);
    const std::streamoff payload_bytes = in.tellg() - payload_start;
    if (payload_bytes < 0 || payload_bytes % 8 != 0)
        throw IoError("truncated checkpoint payload in " + path);
    in.seekg(payload_start);
    params.resize(static_cast<size_t>(payload_bytes / 8));
    read_doubles_le(in, params);
    if (!in) throw IoError("failed while reading checkpoint: " + path);
    return descriptor;
}

void save_value_checkpoint(const std::string& path, const ValueFn& net) {
    save_checkpoint(path, net.descriptor(), net.params());
}

std::unique_ptr<ValueFn> load_value_checkpoint(const std::string& path, const GridMaze& maze) {
    std::vector<double> params;
    const std::string descriptor = load_checkpoint(path, params);
    const auto toks = split_tokens(descriptor);
    if (toks.size() < 3 || toks[0] != "value")
        throw IoError("checkpoint " + path + " does not hold a value function: " + descriptor);
    if (toks[1] == "tabular") {
        const int f = std::stoi(toks[2]);
        if (f != maze.free_cell_count())
            throw IoError("tabular checkpoint sized for " + toks[2] + " cells, maze has " +
                          std::to_string(maze.free_cell_count()));
        auto net = std::make_unique<TabularValue>(f);
        if (params.size() != net->params().size()) throw IoError("parameter count mismatch in " + path);
        std::copy(params.begin(), params.end(), net->params().begin());
        return net;
    }
    if (toks[1] == "mlp") {
        if (toks.size() < 8) throw IoError("malformed mlp descriptor: " + descriptor);
        const FeatureSpec spec = FeatureSpec::parse(toks[2]);
        const int w = std::stoi(toks[3]), h = std::stoi(toks[4]), f = std::stoi(toks[5]);
        if (w != maze.width() || h != maze.height() || f != maze.free_cell_count())
            throw IoError("mlp checkpoint geometry mismatch for maze " + maze.layout_id());
        std::vector<int> hidden;
        for (size_t i = 7; i + 1 < toks.size(); ++i) hidden.push_back(std::stoi(toks[i]));
        Rng rng(0);
        auto net = std::make_unique<MlpValue>(maze, spec, hidden, rng);
        if (params.size() != net->params().size()) throw IoError("parameter count mismatch in " + path);
        std::copy(params.begin(), params.end(), net->params().begin());
        return net;
    }
    throw IoError("unknown value architecture '" + toks[1] + "' in " + path);
}

} // namespace ota
