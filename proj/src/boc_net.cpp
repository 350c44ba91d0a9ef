#include "cqa/boc_net.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "cqa/errors.hpp"

namespace cqa::boc {

std::vector<int> OrdinalScheme::encode(int y) const {
    if (y < 0 || y >= K) throw DomainError("label " + std::to_string(y) + " outside 0..K-1");
    std::vector<int> out(static_cast<std::size_t>(K - 1));
    for (int k = 1; k < K; ++k) out[static_cast<std::size_t>(k - 1)] = y >= k ? 1 : 0;
    return out;
}

int OrdinalScheme::decode(std::span<const int> coded) {
    return std::accumulate(coded.begin(), coded.end(), 0);
}

std::string to_string(Backbone b) { return b == Backbone::small_cnn ? "small_cnn" : "mlp_features"; }

Backbone backbone_from_string(const std::string& s) {
    if (s == "mlp_features") return Backbone::mlp_features;
    if (s == "small_cnn") return Backbone::small_cnn;
    throw ConfigError("unknown backbone: " + s);
}

void NetworkConfig::validate() const {
    if (K < 2) throw ConfigError("K must be >= 2");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout_rate must be in [0, 1)");
    for (int h : hidden) {
        if (h < 1) throw ConfigError("hidden widths must be positive");
    }
    if (backbone == Backbone::mlp_features) {
        if (input_dim < 1) throw ConfigError("input_dim must be positive");
        if (hidden.size() != 2) throw ConfigError("mlp_features needs exactly two hidden widths");
    } else {
        if (in_channels < 1 || in_rows < 4 || in_cols < 4)
            throw ConfigError("small_cnn needs at least a 1x4x4 input grid");
        if (conv1_channels < 1 || conv2_channels < 1) throw ConfigError("conv channels must be positive");
        if (hidden.empty()) throw ConfigError("small_cnn needs one dense width");
    }
}

std::size_t NetworkConfig::input_size() const {
    if (backbone == Backbone::mlp_features) return static_cast<std::size_t>(input_dim);
    return static_cast<std::size_t>(in_channels) * in_rows * in_cols;
}

std::string NetworkConfig::to_json() const {
    nlohmann::ordered_json j;
    j["backbone"] = to_string(backbone);
    j["input_dim"] = input_dim;
    j["in_channels"] = in_channels;
    j["in_rows"] = in_rows;
    j["in_cols"] = in_cols;
    j["conv1_channels"] = conv1_channels;
    j["conv2_channels"] = conv2_channels;
    j["hidden"] = hidden;
    j["dropout_rate"] = dropout_rate;
    j["K"] = K;
    return j.dump();
}

NetworkConfig NetworkConfig::from_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        NetworkConfig c;
        c.backbone = backbone_from_string(j.at("backbone").get<std::string>());
        c.input_dim = j.at("input_dim").get<int>();
        c.in_channels = j.at("in_channels").get<int>();
        c.in_rows = j.at("in_rows").get<int>();
        c.in_cols = j.at("in_cols").get<int>();
        c.conv1_channels = j.at("conv1_channels").get<int>();
        c.conv2_channels = j.at("conv2_channels").get<int>();
        c.hidden = j.at("hidden").get<std::vector<int>>();
        c.dropout_rate = j.at("dropout_rate").get<double>();
        c.K = j.at("K").get<int>();
        c.validate();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad network config JSON: ") + e.what());
    }
}

std::uint64_t NetworkConfig::hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : to_json()) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::size_t ModelParameters::parameter_count() const {
    std::size_t n = 0;
    for (const auto& g : groups)
        for (const auto& t : g.tensors) n += t.values.size();
    return n;
}

std::vector<std::string> ModelParameters::group_names() const {
    std::vector<std::string> names;
    for (const auto& g : groups) names.push_back(g.name);
    return names;
}

bool ModelParameters::all_finite() const {
    for (const auto& g : groups)
        for (const auto& t : g.tensors)
            for (double v : t.values)
                if (!std::isfinite(v)) return false;
    return true;
}

void round_to_float(ModelParameters& p) {
    for (auto& g : p.groups)
        for (auto& t : g.tensors)
            for (auto& v : t.values) v = static_cast<double>(static_cast<float>(v));
}

namespace {

enum class OpKind { dense, conv, relu, dropout, pool };

struct Op {
    OpKind kind;
    int group = -1;
    int weight = -1;
    int bias = -1;
    // Input and output activation geometry (channels x rows x cols; dense ops use c only).
    int in_c = 0, in_h = 1, in_w = 1;
    int out_c = 0, out_h = 1, out_w = 1;
    std::size_t in_size() const { return static_cast<std::size_t>(in_c) * in_h * in_w; }
    std::size_t out_size() const { return static_cast<std::size_t>(out_c) * out_h * out_w; }
};

Tensor make_tensor(std::string name, std::vector<int> shape, bool bias) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return Tensor{std::move(name), std::move(shape), std::vector<double>(n, 0.0), bias};
}

std::vector<Op> build_ops(const NetworkConfig& cfg) {
    std::vector<Op> ops;
    auto same = [&](OpKind k) {
        Op prev = ops.back();
        Op op{k};
        op.in_c = op.out_c = prev.out_c;
        op.in_h = op.out_h = prev.out_h;
        op.in_w = op.out_w = prev.out_w;
        ops.push_back(op);
    };
    auto dense = [&](int group, int in, int out) {
        Op op{OpKind::dense, group, 0, 1};
        op.in_c = in;
        op.out_c = out;
        ops.push_back(op);
    };
    const int heads = cfg.K - 1;
    if (cfg.backbone == Backbone::mlp_features) {
        dense(0, cfg.input_dim, cfg.hidden[0]);
        same(OpKind::relu);
        same(OpKind::dropout);
        dense(1, cfg.hidden[0], cfg.hidden[1]);
        same(OpKind::relu);
        same(OpKind::dropout);
        dense(2, cfg.hidden[1], heads);
        return ops;
    }
    auto conv = [&](int weight, int in_c, int h, int w, int out_c) {
        Op op{OpKind::conv, 0, weight, weight + 1};
        op.in_c = in_c;
        op.in_h = op.out_h = h;
        op.in_w = op.out_w = w;
        op.out_c = out_c;
        ops.push_back(op);
    };
    auto pool = [&]() {
        Op prev = ops.back();
        Op op{OpKind::pool};
        op.in_c = op.out_c = prev.out_c;
        op.in_h = prev.out_h;
        op.in_w = prev.out_w;
        op.out_h = prev.out_h / 2;
        op.out_w = prev.out_w / 2;
        ops.push_back(op);
    };
    conv(0, cfg.in_channels, cfg.in_rows, cfg.in_cols, cfg.conv1_channels);
    same(OpKind::relu);
    same(OpKind::dropout);
    pool();
    conv(2, cfg.conv1_channels, ops.back().out_h, ops.back().out_w, cfg.conv2_channels);
    same(OpKind::relu);
    same(OpKind::dropout);
    pool();
    dense(1, static_cast<int>(ops.back().out_size()), cfg.hidden[0]);
    same(OpKind::relu);
    same(OpKind::dropout);
    dense(2, cfg.hidden[0], heads);
    return ops;
}

struct Trace {
    std::vector<std::vector<double>> acts;   // acts[i] is the input of op i
    std::vector<std::vector<double>> masks;  // dropout scale per element (empty when inactive)
};

const std::vector<double>& weights(const ModelParameters& p, const Op& op) {
    return p.groups[static_cast<std::size_t>(op.group)].tensors[static_cast<std::size_t>(op.weight)].values;
}
const std::vector<double>& biases(const ModelParameters& p, const Op& op) {
    return p.groups[static_cast<std::size_t>(op.group)].tensors[static_cast<std::size_t>(op.bias)].values;
}
std::vector<double>& weights(ModelParameters& p, const Op& op) {
    return p.groups[static_cast<std::size_t>(op.group)].tensors[static_cast<std::size_t>(op.weight)].values;
}
std::vector<double>& biases(ModelParameters& p, const Op& op) {
    return p.groups[static_cast<std::size_t>(op.group)].tensors[static_cast<std::size_t>(op.bias)].values;
}

void conv_forward(const Op& op, const std::vector<double>& W, const std::vector<double>& b,
                  const std::vector<double>& x, std::vector<double>& y) {
    const int H = op.in_h, Wd = op.in_w;
    y.assign(op.out_size(), 0.0);
    for (int co = 0; co < op.out_c; ++co) {
        double* yo = y.data() + static_cast<std::size_t>(co) * H * Wd;
        std::fill(yo, yo + static_cast<std::size_t>(H) * Wd, b[static_cast<std::size_t>(co)]);
        for (int ci = 0; ci < op.in_c; ++ci) {
            const double* xi = x.data() + static_cast<std::size_t>(ci) * H * Wd;
            const double* k = W.data() + (static_cast<std::size_t>(co) * op.in_c + ci) * 9;
            for (int kr = 0; kr < 3; ++kr) {
                for (int kc = 0; kc < 3; ++kc) {
                    const double w = k[kr * 3 + kc];
                    const int r_lo = std::max(0, 1 - kr), r_hi = std::min(H, H + 1 - kr);
                    const int c_lo = std::max(0, 1 - kc), c_hi = std::min(Wd, Wd + 1 - kc);
                    for (int r = r_lo; r < r_hi; ++r) {
                        const double* xr = xi + static_cast<std::size_t>(r + kr - 1) * Wd + (kc - 1);
                        double* yr = yo + static_cast<std::size_t>(r) * Wd;
                        for (int c = c_lo; c < c_hi; ++c) yr[c] += w * xr[c];
                    }
                }
            }
        }
    }
}

void conv_backward(const Op& op, const std::vector<double>& W, const std::vector<double>& x,
                   const std::vector<double>& dy, std::vector<double>& gW, std::vector<double>& gb,
                   std::vector<double>& dx) {
    const int H = op.in_h, Wd = op.in_w;
    dx.assign(op.in_size(), 0.0);
    for (int co = 0; co < op.out_c; ++co) {
        const double* g = dy.data() + static_cast<std::size_t>(co) * H * Wd;
        double sum = 0.0;
        for (std::size_t i = 0; i < static_cast<std::size_t>(H) * Wd; ++i) sum += g[i];
        gb[static_cast<std::size_t>(co)] += sum;
        for (int ci = 0; ci < op.in_c; ++ci) {
            const double* xi = x.data() + static_cast<std::size_t>(ci) * H * Wd;
            double* dxi = dx.data() + static_cast<std::size_t>(ci) * H * Wd;
            const std::size_t kbase = (static_cast<std::size_t>(co) * op.in_c + ci) * 9;
            for (int kr = 0; kr < 3; ++kr) {
                for (int kc = 0; kc < 3; ++kc) {
                    const double w = W[kbase + kr * 3 + kc];
                    double gw = 0.0;
                    const int r_lo = std::max(0, 1 - kr), r_hi = std::min(H, H + 1 - kr);
                    const int c_lo = std::max(0, 1 - kc), c_hi = std::min(Wd, Wd + 1 - kc);
                    for (int r = r_lo; r < r_hi; ++r) {
                        const std::size_t src = static_cast<std::size_t>(r + kr - 1) * Wd + (kc - 1);
                        const double* gr = g + static_cast<std::size_t>(r) * Wd;
                        for (int c = c_lo; c < c_hi; ++c) {
                            gw += gr[c] * xi[src + c];
                            dxi[src + c] += w * gr[c];
                        }
                    }
                    gW[kbase + kr * 3 + kc] += gw;
                }
            }
        }
    }
}

Trace run_forward(const ModelParameters& p, const std::vector<Op>& ops, std::span<const double> input,
                  Mode mode, Rng& rng) {
    const double rate = p.config.dropout_rate;
    const bool stochastic = mode != Mode::deterministic && rate > 0.0;
    Trace t;
    t.acts.reserve(ops.size() + 1);
    t.masks.resize(ops.size());
    t.acts.emplace_back(input.begin(), input.end());
    for (std::size_t i = 0; i < ops.size(); ++i) {
        const Op& op = ops[i];
        const auto& x = t.acts.back();
        std::vector<double> y;
        switch (op.kind) {
            case OpKind::dense: {
                const auto& W = weights(p, op);
                const auto& b = biases(p, op);
                y.assign(b.begin(), b.end());
                for (int o = 0; o < op.out_c; ++o) {
                    const double* row = W.data() + static_cast<std::size_t>(o) * op.in_c;
                    double s = 0.0;
                    for (int k = 0; k < op.in_c; ++k) s += row[k] * x[static_cast<std::size_t>(k)];
                    y[static_cast<std::size_t>(o)] += s;
                }
                break;
            }
            case OpKind::conv:
                conv_forward(op, weights(p, op), biases(p, op), x, y);
                break;
            case OpKind::relu:
                y.resize(x.size());
                for (std::size_t k = 0; k < x.size(); ++k) y[k] = x[k] > 0.0 ? x[k] : 0.0;
                break;
            case OpKind::dropout:
                // Inverted dropout: kept units are scaled by 1/(1-rate), so the
                // deterministic mode is the identity.
                if (stochastic) {
                    auto& m = t.masks[i];
                    m.resize(x.size());
                    const double keep_scale = 1.0 / (1.0 - rate);
                    y.resize(x.size());
                    for (std::size_t k = 0; k < x.size(); ++k) {
                        m[k] = rng.uniform() < rate ? 0.0 : keep_scale;
                        y[k] = x[k] * m[k];
                    }
                } else {
                    y = x;
                }
                break;
            case OpKind::pool: {
                y.assign(op.out_size(), 0.0);
                for (int c = 0; c < op.out_c; ++c)
                    for (int r = 0; r < op.out_h; ++r)
                        for (int q = 0; q < op.out_w; ++q) {
                            const std::size_t base = (static_cast<std::size_t>(c) * op.in_h + 2 * r) * op.in_w + 2 * q;
                            y[(static_cast<std::size_t>(c) * op.out_h + r) * op.out_w + q] =
                                0.25 * (x[base] + x[base + 1] + x[base + op.in_w] + x[base + op.in_w + 1]);
                        }
                break;
            }
        }
        t.acts.push_back(std::move(y));
    }
    return t;
}

// Accumulates parameter gradients for d(loss)/d(logits) = dlogits.
void run_backward(const ModelParameters& p, const std::vector<Op>& ops, const Trace& t,
                  std::vector<double> dy, ModelParameters& grad) {
    for (std::size_t i = ops.size(); i-- > 0;) {
        const Op& op = ops[i];
        const auto& x = t.acts[i];
        std::vector<double> dx;
        switch (op.kind) {
            case OpKind::dense: {
                const auto& W = weights(p, op);
                auto& gW = weights(grad, op);
                auto& gb = biases(grad, op);
                dx.assign(x.size(), 0.0);
                for (int o = 0; o < op.out_c; ++o) {
                    const double g = dy[static_cast<std::size_t>(o)];
                    gb[static_cast<std::size_t>(o)] += g;
                    if (g == 0.0) continue;
                    const std::size_t row = static_cast<std::size_t>(o) * op.in_c;
                    for (int k = 0; k < op.in_c; ++k) {
                        gW[row + k] += g * x[static_cast<std::size_t>(k)];
                        dx[static_cast<std::size_t>(k)] += W[row + k] * g;
                    }
                }
                break;
            }
            case OpKind::conv:
                if (i == 0) {
                    // Input gradient is not needed for the first layer.
                    std::vector<double> scratch;
                    conv_backward(op, weights(p, op), x, dy, weights(grad, op), biases(grad, op), scratch);
                    return;
                }
                conv_backward(op, weights(p, op), x, dy, weights(grad, op), biases(grad, op), dx);
                break;
            case OpKind::relu:
                dx.resize(x.size());
                for (std::size_t k = 0; k < x.size(); ++k) dx[k] = x[k] > 0.0 ? dy[k] : 0.0;
                break;
            case OpKind::dropout: {
                const auto& m = t.masks[i];
                dx = dy;
                if (!m.empty())
                    for (std::size_t k = 0; k < dx.size(); ++k) dx[k] *= m[k];
                break;
            }
            case OpKind::pool:
                dx.assign(op.in_size(), 0.0);
                for (int c = 0; c < op.out_c; ++c)
                    for (int r = 0; r < op.out_h; ++r)
                        for (int q = 0; q < op.out_w; ++q) {
                            const double g = 0.25 * dy[(static_cast<std::size_t>(c) * op.out_h + r) * op.out_w + q];
                            const std::size_t base = (static_cast<std::size_t>(c) * op.in_h + 2 * r) * op.in_w + 2 * q;
                            dx[base] += g;
                            dx[base + 1] += g;
                            dx[base + op.in_w] += g;
                            dx[base + op.in_w + 1] += g;
                        }
                break;
        }
        dy = std::move(dx);
    }
}

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// Binary cross-entropy on a logit, numerically stable.
double bce_logit(double z, double target) {
    return std::max(z, 0.0) - z * target + std::log1p(std::exp(-std::abs(z)));
}

void check_input(const ModelParameters& p, std::span<const double> input) {
    if (input.size() != p.config.input_size())
        throw DimensionError("input has " + std::to_string(input.size()) + " values, network expects " +
                             std::to_string(p.config.input_size()));
}

}  // namespace

ModelParameters zero_parameters(const NetworkConfig& cfg) {
    cfg.validate();
    ModelParameters p;
    p.config = cfg;
    const int heads = cfg.K - 1;
    if (cfg.backbone == Backbone::mlp_features) {
        p.groups.push_back({"dense1", {make_tensor("dense1.weight", {cfg.hidden[0], cfg.input_dim}, false),
                                       make_tensor("dense1.bias", {cfg.hidden[0]}, true)}});
        p.groups.push_back({"dense2", {make_tensor("dense2.weight", {cfg.hidden[1], cfg.hidden[0]}, false),
                                       make_tensor("dense2.bias", {cfg.hidden[1]}, true)}});
        p.groups.push_back({"head", {make_tensor("head.weight", {heads, cfg.hidden[1]}, false),
                                     make_tensor("head.bias", {heads}, true)}});
        return p;
    }
    const auto ops = build_ops(cfg);
    const int flat = ops[8].in_c;
    p.groups.push_back(
        {"conv_block",
         {make_tensor("conv1.weight", {cfg.conv1_channels, cfg.in_channels, 3, 3}, false),
          make_tensor("conv1.bias", {cfg.conv1_channels}, true),
          make_tensor("conv2.weight", {cfg.conv2_channels, cfg.conv1_channels, 3, 3}, false),
          make_tensor("conv2.bias", {cfg.conv2_channels}, true)}});
    p.groups.push_back({"dense1", {make_tensor("dense1.weight", {cfg.hidden[0], flat}, false),
                                   make_tensor("dense1.bias", {cfg.hidden[0]}, true)}});
    p.groups.push_back({"head", {make_tensor("head.weight", {heads, cfg.hidden[0]}, false),
                                 make_tensor("head.bias", {heads}, true)}});
    return p;
}

ModelParameters init_parameters(const NetworkConfig& cfg, std::uint64_t seed) {
    ModelParameters p = zero_parameters(cfg);
    Rng rng(seed);
    for (auto& g : p.groups) {
        for (auto& t : g.tensors) {
            if (t.is_bias) continue;
            std::size_t fan_in = 1;
            for (std::size_t d = 1; d < t.shape.size(); ++d) fan_in *= static_cast<std::size_t>(t.shape[d]);
            const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
            for (auto& v : t.values) v = rng.uniform(-limit, limit);
        }
    }
    round_to_float(p);
    return p;
}

std::vector<double> forward(const ModelParameters& params, std::span<const double> input, Mode mode,
                            Rng& rng) {
    check_input(params, input);
    const auto ops = build_ops(params.config);
    const auto t = run_forward(params, ops, input, mode, rng);
    std::vector<double> out(t.acts.back().size());
    std::transform(t.acts.back().begin(), t.acts.back().end(), out.begin(), sigmoid);
    return out;
}

LossResult corn_loss(const ModelParameters& params, std::span<const Example> batch,
                     const LossOptions& options) {
    if (batch.empty()) throw EmptyInputError("CORN loss needs a nonempty batch");
    const int K = params.config.K;
    const auto ops = build_ops(params.config);
    LossResult res;
    res.gradient = zero_parameters(params.config);
    res.subset_sizes.assign(static_cast<std::size_t>(K - 1), 0);

    Rng rng(options.seed);
    double bce_sum = 0.0;
    for (const auto& ex : batch) {
        check_input(params, ex.x);
        if (ex.y < 0 || ex.y >= K) throw DomainError("label " + std::to_string(ex.y) + " outside 0..K-1");
        const auto t = run_forward(params, ops, ex.x, options.mode, rng);
        const auto& logits = t.acts.back();
        std::vector<double> dlogits(logits.size(), 0.0);
        bool any = false;
        for (int k = 1; k < K; ++k) {
            // Unit k is trained only on samples that reached rank k-1.
            if (ex.y < k - 1) continue;
            const double target = ex.y >= k ? 1.0 : 0.0;
            const double z = logits[static_cast<std::size_t>(k - 1)];
            bce_sum += bce_logit(z, target);
            dlogits[static_cast<std::size_t>(k - 1)] = sigmoid(z) - target;
            ++res.subset_sizes[static_cast<std::size_t>(k - 1)];
            any = true;
        }
        if (any) run_backward(params, ops, t, std::move(dlogits), res.gradient);
    }
    const double n = static_cast<double>(
        std::accumulate(res.subset_sizes.begin(), res.subset_sizes.end(), std::size_t{0}));
    res.data_loss = bce_sum / n;
    double penalty = 0.0;
    for (std::size_t g = 0; g < params.groups.size(); ++g) {
        for (std::size_t ti = 0; ti < params.groups[g].tensors.size(); ++ti) {
            const auto& pt = params.groups[g].tensors[ti];
            auto& gt = res.gradient.groups[g].tensors[ti];
            for (std::size_t k = 0; k < gt.values.size(); ++k) {
                gt.values[k] /= n;
                if (!pt.is_bias && options.weight_decay != 0.0) {
                    gt.values[k] += options.weight_decay * pt.values[k];
                    penalty += pt.values[k] * pt.values[k];
                }
            }
        }
    }
    res.loss = res.data_loss + 0.5 * options.weight_decay * penalty;
    return res;
}

void TrainConfig::validate() const {
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(base_lr >= 0.0)) throw ConfigError("learning rate must be >= 0");
    for (std::size_t i = 1; i < milestones.size(); ++i) {
        if (milestones[i] <= milestones[i - 1]) throw ConfigError("schedule epochs must be strictly increasing");
    }
    if (!(gamma > 0.0)) throw ConfigError("schedule gamma must be positive");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be >= 0");
}

double TrainConfig::rate_factor(int epoch) const {
    double f = 1.0;
    for (int m : milestones) {
        if (epoch >= m) f *= gamma;
    }
    return f;
}

namespace {

TrainResult run_training(ModelParameters params, const std::vector<double>& group_rates,
                         const TrainConfig& config, std::span<const Example> data,
                         std::span<const Example> validation) {
    config.validate();
    if (data.empty()) throw EmptyInputError("training set is empty");
    const int K = params.config.K;
    for (const auto& ex : data) {
        check_input(params, ex.x);
        if (ex.y < 0 || ex.y >= K) throw DomainError("label " + std::to_string(ex.y) + " outside 0..K-1");
    }

    TrainResult result;
    {
        std::vector<std::size_t> hist(static_cast<std::size_t>(K), 0);
        for (const auto& ex : data) ++hist[static_cast<std::size_t>(ex.y)];
        const auto populated = std::count_if(hist.begin(), hist.end(), [](std::size_t c) { return c > 0; });
        if (populated == 1) result.warnings.push_back("degenerate data: every training label is the same class");
        if (hist[0] == data.size()) result.warnings.push_back("degenerate data: no sample of rank >= 1; unit 2 receives no signal");
    }

    struct Moments {
        std::vector<double> m, v;
    };
    std::vector<std::vector<Moments>> adam(params.groups.size());
    for (std::size_t g = 0; g < params.groups.size(); ++g)
        for (const auto& t : params.groups[g].tensors)
            adam[g].push_back({std::vector<double>(t.values.size(), 0.0), std::vector<double>(t.values.size(), 0.0)});

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(config.seed, 1));
    const std::uint64_t dropout_master = derive_seed(config.seed, 2);

    ModelParameters best = params;
    double best_val = std::numeric_limits<double>::infinity();
    std::uint64_t step = 0;
    std::vector<Example> batch;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);
        const double factor = config.rate_factor(epoch);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            batch.clear();
            for (std::size_t i = start; i < end; ++i) batch.push_back(data[order[i]]);
            const auto lr = corn_loss(params, batch,
                                      {Mode::train_stochastic, derive_seed(dropout_master, step), config.weight_decay});
            epoch_loss += lr.loss * static_cast<double>(batch.size());
            ++step;
            const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
            for (std::size_t g = 0; g < params.groups.size(); ++g) {
                const double rate = group_rates[g] * factor;
                for (std::size_t ti = 0; ti < params.groups[g].tensors.size(); ++ti) {
                    auto& w = params.groups[g].tensors[ti].values;
                    const auto& grad = lr.gradient.groups[g].tensors[ti].values;
                    auto& st = adam[g][ti];
                    for (std::size_t k = 0; k < w.size(); ++k) {
                        st.m[k] = config.beta1 * st.m[k] + (1.0 - config.beta1) * grad[k];
                        st.v[k] = config.beta2 * st.v[k] + (1.0 - config.beta2) * grad[k] * grad[k];
                        const double mhat = st.m[k] / bc1, vhat = st.v[k] / bc2;
                        w[k] -= rate * mhat / (std::sqrt(vhat) + config.adam_eps);
                    }
                }
            }
        }
        result.loss_trace.push_back(epoch_loss / static_cast<double>(data.size()));
        if (!validation.empty()) {
            ModelParameters snapshot = params;
            round_to_float(snapshot);
            const double v = corn_loss(snapshot, validation, {Mode::deterministic, 0, 0.0}).data_loss;
            result.val_loss_trace.push_back(v);
            if (v < best_val) {
                best_val = v;
                best = std::move(snapshot);
                result.best_epoch = epoch;
            }
        }
    }
    if (!validation.empty() && result.best_epoch >= 0) {
        result.params = std::move(best);
    } else {
        result.params = std::move(params);
        round_to_float(result.params);
        result.best_epoch = config.epochs - 1;
    }
    if (!result.params.all_finite()) throw DomainError("training diverged: non-finite parameters");
    return result;
}

}  // namespace

TrainResult train(const TrainConfig& config, const NetworkConfig& net, std::span<const Example> data,
                  std::span<const Example> validation) {
    net.validate();
    auto params = init_parameters(net, derive_seed(config.seed, 0));
    std::vector<double> rates(params.groups.size(), config.base_lr);
    return run_training(std::move(params), rates, config, data, validation);
}

TrainResult fine_tune(const ModelParameters& pretrained, const std::vector<GroupRate>& lr_groups,
                      const TrainConfig& config, std::span<const Example> data,
                      std::span<const Example> validation) {
    std::vector<double> rates(pretrained.groups.size(), 0.0);
    std::vector<bool> seen(pretrained.groups.size(), false);
    for (const auto& gr : lr_groups) {
        auto it = std::find_if(pretrained.groups.begin(), pretrained.groups.end(),
                               [&](const LayerGroup& g) { return g.name == gr.group; });
        if (it == pretrained.groups.end()) throw ConfigError("unknown layer group: " + gr.group);
        const auto idx = static_cast<std::size_t>(it - pretrained.groups.begin());
        if (seen[idx]) throw ConfigError("layer group listed twice: " + gr.group);
        if (!(gr.rate >= 0.0)) throw ConfigError("group learning rate must be >= 0");
        seen[idx] = true;
        rates[idx] = gr.rate;
    }
    for (std::size_t i = 0; i < seen.size(); ++i) {
        if (!seen[i]) throw ConfigError("no learning rate for layer group: " + pretrained.groups[i].name);
    }
    return run_training(pretrained, rates, config, data, validation);
}

std::vector<std::vector<double>> mc_forward_raw(const ModelParameters& params, std::span<const double> input,
                                                int T, std::uint64_t seed) {
    if (T < 1) throw DomainError("MC dropout needs T >= 1");
    check_input(params, input);
    const auto ops = build_ops(params.config);
    std::vector<std::vector<double>> out;
    out.reserve(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
        const auto tr = run_forward(params, ops, input, Mode::eval_stochastic, rng);
        std::vector<double> probs(tr.acts.back().size());
        std::transform(tr.acts.back().begin(), tr.acts.back().end(), probs.begin(), sigmoid);
        out.push_back(std::move(probs));
    }
    return out;
}

uq::McProbs mc_forward(const ModelParameters& params, std::span<const double> input, int T, std::uint64_t seed) {
    if (params.config.K != 3) throw ConfigError("McProbs requires K = 3");
    uq::McProbs mc;
    for (const auto& p : mc_forward_raw(params, input, T, seed)) mc.pairs.push_back({p[0], p[1]});
    return mc;
}

}  // namespace cqa::boc
