#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "alsim/errors.hpp"
#include "alsim/rng.hpp"
#include "alsim/text.hpp"

namespace alsim {

enum class dropout_mode { none, a, b, c };
enum class loss_kind { mse, heteroscedastic };

constexpr double kLeakySlope = 0.01;
// Log-variance clamp applied before exponentiation.
constexpr double kAlphaClamp = 10.0;

inline std::string to_string(dropout_mode m) {
    switch (m) {
        case dropout_mode::none: return "none";
        case dropout_mode::a: return "a";
        case dropout_mode::b: return "b";
        case dropout_mode::c: return "c";
    }
    return "?";
}

inline std::string to_string(loss_kind k) {
    return k == loss_kind::mse ? "mse" : "heteroscedastic";
}

struct layer {
    int in = 0;
    int out = 0;
    std::vector<double> w; // row-major, out x in
    std::vector<double> b; // out

    bool present() const { return out > 0; }

    void resize(int in_dim, int out_dim) {
        in = in_dim;
        out = out_dim;
        w.assign(static_cast<std::size_t>(in) * out, 0.0);
        b.assign(static_cast<std::size_t>(out), 0.0);
    }

    // y = W x + b
    void apply(std::span<const double> x, std::span<double> y) const {
        for (int o = 0; o < out; ++o) {
            const double* row = w.data() + static_cast<std::size_t>(o) * in;
            double acc = b[static_cast<std::size_t>(o)];
            for (int i = 0; i < in; ++i) acc += row[i] * x[static_cast<std::size_t>(i)];
            y[static_cast<std::size_t>(o)] = acc;
        }
    }
};

// Feedforward regressor: leaky-relu hidden stack, linear mean head and, when
// heteroscedastic, a linear log-variance head reading the same final features.
// Dropout placement:
//   a    - after every hidden activation
//   b    - after the last hidden activation and after the head outputs
//   c    - after every hidden activation and after the head outputs
struct model_params {
    std::vector<layer> hidden;
    layer mean_head;
    layer alpha_head; // absent (out == 0) for plain-MSE heads
    dropout_mode mode = dropout_mode::a;
    double dropout_rate = 0.1;
    int joints = 0;
    bool alpha_per_coord = false;

    bool heteroscedastic() const { return alpha_head.present(); }

    int feature_dim() const { return hidden.empty() ? mean_head.in : hidden.front().in; }
    int output_dim() const { return mean_head.out; }

    void validate() const {
        int cur = feature_dim();
        for (std::size_t i = 0; i < hidden.size(); ++i) {
            if (hidden[i].in != cur) {
                throw shape_error("layer " + std::to_string(i) + ": input dim " +
                                  std::to_string(hidden[i].in) + " != previous output " +
                                  std::to_string(cur));
            }
            cur = hidden[i].out;
        }
        if (mean_head.in != cur) {
            throw shape_error("mean head: input dim " + std::to_string(mean_head.in) +
                              " != previous output " + std::to_string(cur));
        }
        if (alpha_head.present() && alpha_head.in != cur) {
            throw shape_error("alpha head: input dim " + std::to_string(alpha_head.in) +
                              " != previous output " + std::to_string(cur));
        }
        if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
            throw validation_error("dropout_rate must lie in [0, 1)");
        }
    }
};

inline bool hidden_site_active(dropout_mode m, std::size_t layer_idx, std::size_t n_hidden) {
    switch (m) {
        case dropout_mode::none: return false;
        case dropout_mode::a: return true;
        case dropout_mode::b: return layer_idx + 1 == n_hidden;
        case dropout_mode::c: return true;
    }
    return false;
}

inline bool head_site_active(dropout_mode m) {
    return m == dropout_mode::b || m == dropout_mode::c;
}

// Fan-in scaled symmetric uniform init for weights and biases. A nonzero
// bias keeps preactivations off the leaky-relu kink even when dropout zeroes
// a whole input vector. Heads draw after the hidden stack, so two nets
// sharing a seed share every common parameter regardless of whether the
// alpha head exists.
inline model_params make_mlp(int feature_dim, const std::vector<int>& hidden_dims, int joints,
                             bool heteroscedastic, dropout_mode mode, double dropout_rate,
                             bool alpha_per_coord, std::uint64_t seed) {
    if (feature_dim <= 0) throw validation_error("make_mlp: feature_dim must be positive");
    if (joints <= 0) throw validation_error("make_mlp: joints must be positive");
    model_params p;
    p.mode = mode;
    p.dropout_rate = dropout_rate;
    p.joints = joints;
    p.alpha_per_coord = alpha_per_coord;

    rng g(derive_seed(seed, 0x1417));
    auto fill = [&g](layer& l, int in_dim, int out_dim) {
        l.resize(in_dim, out_dim);
        const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
        for (double& v : l.w) v = g.uniform(-bound, bound);
        for (double& v : l.b) v = g.uniform(-bound, bound);
    };

    int cur = feature_dim;
    for (int h : hidden_dims) {
        if (h <= 0) throw validation_error("make_mlp: hidden width must be positive");
        layer l;
        fill(l, cur, h);
        p.hidden.push_back(std::move(l));
        cur = h;
    }
    fill(p.mean_head, cur, 3 * joints);
    if (heteroscedastic) fill(p.alpha_head, cur, alpha_per_coord ? 3 * joints : joints);
    p.validate();
    return p;
}

// ---------------------------------------------------------------------------
// Forward pass

struct net_output {
    std::vector<double> mean;
    std::vector<double> alpha; // empty when the head is absent
};

// Activations and masks of one pass, kept for backprop. Buffers are reused
// across samples.
struct forward_workspace {
    std::vector<std::vector<double>> pre;  // per hidden layer
    std::vector<std::vector<double>> act;  // per hidden layer, post-activation post-mask
    std::vector<std::vector<double>> mask; // per hidden layer, empty when site inactive
    std::vector<double> mean;
    std::vector<double> alpha;
    std::vector<double> mean_mask;  // empty when head site inactive
    std::vector<double> alpha_mask;
};

namespace detail {

inline void draw_mask(std::vector<double>& mask, std::size_t n, double p, rng& g) {
    mask.resize(n);
    const double scale = 1.0 / (1.0 - p);
    for (std::size_t i = 0; i < n; ++i) {
        mask[i] = g.uniform() >= p ? scale : 0.0;
    }
}

} // namespace detail

// Single pass. Mask draw order is pinned: hidden sites front to back, one
// uniform per unit, then mean-head coordinates, then alpha-head coordinates.
inline void forward_into(const model_params& p, std::span<const double> x, bool stochastic,
                         rng* gen, forward_workspace& ws) {
    if (static_cast<int>(x.size()) != p.feature_dim()) {
        throw shape_error("forward: input length " + std::to_string(x.size()) +
                          " != layer 0 input dim " + std::to_string(p.feature_dim()));
    }
    if (stochastic && gen == nullptr) {
        throw validation_error("forward: stochastic pass requires an rng");
    }

    const std::size_t nh = p.hidden.size();
    ws.pre.resize(nh);
    ws.act.resize(nh);
    ws.mask.resize(nh);

    std::span<const double> cur = x;
    for (std::size_t i = 0; i < nh; ++i) {
        const layer& l = p.hidden[i];
        auto& pre = ws.pre[i];
        auto& act = ws.act[i];
        pre.resize(static_cast<std::size_t>(l.out));
        act.resize(static_cast<std::size_t>(l.out));
        l.apply(cur, pre);
        for (int o = 0; o < l.out; ++o) {
            const double a = pre[static_cast<std::size_t>(o)];
            act[static_cast<std::size_t>(o)] = a > 0.0 ? a : kLeakySlope * a;
        }
        if (stochastic && hidden_site_active(p.mode, i, nh)) {
            detail::draw_mask(ws.mask[i], act.size(), p.dropout_rate, *gen);
            for (std::size_t o = 0; o < act.size(); ++o) act[o] *= ws.mask[i][o];
        } else {
            ws.mask[i].clear();
        }
        cur = act;
    }

    ws.mean.resize(static_cast<std::size_t>(p.mean_head.out));
    p.mean_head.apply(cur, ws.mean);
    if (p.alpha_head.present()) {
        ws.alpha.resize(static_cast<std::size_t>(p.alpha_head.out));
        p.alpha_head.apply(cur, ws.alpha);
    } else {
        ws.alpha.clear();
    }

    if (stochastic && head_site_active(p.mode)) {
        detail::draw_mask(ws.mean_mask, ws.mean.size(), p.dropout_rate, *gen);
        for (std::size_t o = 0; o < ws.mean.size(); ++o) ws.mean[o] *= ws.mean_mask[o];
        if (!ws.alpha.empty()) {
            detail::draw_mask(ws.alpha_mask, ws.alpha.size(), p.dropout_rate, *gen);
            for (std::size_t o = 0; o < ws.alpha.size(); ++o) ws.alpha[o] *= ws.alpha_mask[o];
        } else {
            ws.alpha_mask.clear();
        }
    } else {
        ws.mean_mask.clear();
        ws.alpha_mask.clear();
    }
}

inline net_output forward(const model_params& p, std::span<const double> x,
                          bool stochastic = false, rng* gen = nullptr) {
    forward_workspace ws;
    forward_into(p, x, stochastic, gen, ws);
    return net_output{ws.mean, ws.alpha};
}

// ---------------------------------------------------------------------------
// Losses and gradients

struct gradients {
    std::vector<layer> hidden;
    layer mean_head;
    layer alpha_head;

    static gradients zeros_like(const model_params& p) {
        gradients g;
        g.hidden.resize(p.hidden.size());
        for (std::size_t i = 0; i < p.hidden.size(); ++i) {
            g.hidden[i].resize(p.hidden[i].in, p.hidden[i].out);
        }
        g.mean_head.resize(p.mean_head.in, p.mean_head.out);
        if (p.alpha_head.present()) g.alpha_head.resize(p.alpha_head.in, p.alpha_head.out);
        return g;
    }

    void zero() {
        for (auto& l : hidden) {
            std::fill(l.w.begin(), l.w.end(), 0.0);
            std::fill(l.b.begin(), l.b.end(), 0.0);
        }
        std::fill(mean_head.w.begin(), mean_head.w.end(), 0.0);
        std::fill(mean_head.b.begin(), mean_head.b.end(), 0.0);
        std::fill(alpha_head.w.begin(), alpha_head.w.end(), 0.0);
        std::fill(alpha_head.b.begin(), alpha_head.b.end(), 0.0);
    }
};

namespace detail {

inline double clamp_alpha(double a) {
    return a < -kAlphaClamp ? -kAlphaClamp : (a > kAlphaClamp ? kAlphaClamp : a);
}

// Per-sample loss and head deltas.
//   mse:  (1/K) sum_k |y_k - m_k|^2
//   het:  (1/K) sum_k [ 1/2 exp(-clamp(a_k)) |y_k - m_k|^2 + 1/2 a_k ]
// with a shared per joint (3 coordinates) unless alpha_per_coord is set.
// alpha_frozen pins a == 0, reducing het to mse/2 with no alpha gradient.
inline double head_loss_and_delta(const model_params& p, std::span<const double> mean,
                                  std::span<const double> alpha, std::span<const double> y,
                                  loss_kind kind, bool alpha_frozen,
                                  std::vector<double>* dmean, std::vector<double>* dalpha) {
    const int K = p.joints;
    const double invk = 1.0 / static_cast<double>(K);
    if (dmean) dmean->assign(mean.size(), 0.0);
    if (dalpha) dalpha->assign(alpha.size(), 0.0);

    double loss = 0.0;
    if (kind == loss_kind::mse) {
        for (std::size_t c = 0; c < mean.size(); ++c) {
            const double r = y[c] - mean[c];
            loss += r * r;
            if (dmean) (*dmean)[c] = -2.0 * r * invk;
        }
        return loss * invk;
    }

    if (alpha_frozen) {
        for (std::size_t c = 0; c < mean.size(); ++c) {
            const double r = y[c] - mean[c];
            loss += 0.5 * r * r;
            if (dmean) (*dmean)[c] = -r * invk;
        }
        return loss * invk;
    }

    if (p.alpha_per_coord) {
        for (std::size_t c = 0; c < mean.size(); ++c) {
            const double r = y[c] - mean[c];
            const double a = alpha[c];
            const double ca = clamp_alpha(a);
            const double w = std::exp(-ca);
            loss += 0.5 * w * r * r + 0.5 * a;
            if (dmean) (*dmean)[c] = -w * r * invk;
            if (dalpha) {
                const double ind = (a > -kAlphaClamp && a < kAlphaClamp) ? 1.0 : 0.0;
                (*dalpha)[c] = (-0.5 * w * r * r * ind + 0.5) * invk;
            }
        }
        return loss * invk;
    }

    for (int k = 0; k < K; ++k) {
        const std::size_t base = static_cast<std::size_t>(3 * k);
        double rsq = 0.0;
        for (std::size_t c = base; c < base + 3; ++c) {
            const double r = y[c] - mean[c];
            rsq += r * r;
        }
        const double a = alpha[static_cast<std::size_t>(k)];
        const double ca = clamp_alpha(a);
        const double w = std::exp(-ca);
        loss += 0.5 * w * rsq + 0.5 * a;
        if (dmean) {
            for (std::size_t c = base; c < base + 3; ++c) {
                (*dmean)[c] = -w * (y[c] - mean[c]) * invk;
            }
        }
        if (dalpha) {
            const double ind = (a > -kAlphaClamp && a < kAlphaClamp) ? 1.0 : 0.0;
            (*dalpha)[static_cast<std::size_t>(k)] = (-0.5 * w * rsq * ind + 0.5) * invk;
        }
    }
    return loss * invk;
}

} // namespace detail

// Mean loss over the batch and, when `out` is given, the exact reverse-mode
// gradient of that mean. With `mask_seed` set, forward passes are stochastic
// and sample i in the batch uses the mask stream derive_seed(*mask_seed, i),
// so the differentiated function is deterministic in the parameters.
template <class View>
double loss_and_grad(const model_params& p, const View& data,
                     std::span<const std::size_t> rows, loss_kind kind,
                     std::optional<std::uint64_t> mask_seed, bool alpha_frozen,
                     gradients* out) {
    if (rows.empty()) throw validation_error("loss: empty batch");
    if (kind == loss_kind::heteroscedastic && !p.heteroscedastic() && !alpha_frozen) {
        throw contract_error("loss: heteroscedastic loss requires a log-variance head");
    }
    if (3 * p.joints != p.output_dim()) {
        throw shape_error("loss: mean head width " + std::to_string(p.output_dim()) +
                          " != 3*K = " + std::to_string(3 * p.joints));
    }
    if (out) out->zero();

    forward_workspace ws;
    std::vector<double> dmean, dalpha, dz, dprev;
    const std::size_t nh = p.hidden.size();

    double total = 0.0;
    for (std::size_t s = 0; s < rows.size(); ++s) {
        const auto x = data.features(rows[s]);
        const auto y = data.target(rows[s]);
        if (mask_seed) {
            rng g(derive_seed(*mask_seed, s));
            forward_into(p, x, true, &g, ws);
        } else {
            forward_into(p, x, false, nullptr, ws);
        }
        total += detail::head_loss_and_delta(p, ws.mean, ws.alpha, y, kind, alpha_frozen,
                                             out ? &dmean : nullptr, out ? &dalpha : nullptr);
        if (!out) continue;

        // Backward. Head masks scale the outputs, so deltas pick up the mask.
        if (!ws.mean_mask.empty()) {
            for (std::size_t c = 0; c < dmean.size(); ++c) dmean[c] *= ws.mean_mask[c];
        }
        if (!ws.alpha_mask.empty()) {
            for (std::size_t c = 0; c < dalpha.size(); ++c) dalpha[c] *= ws.alpha_mask[c];
        }

        std::span<const double> last = nh ? std::span<const double>(ws.act[nh - 1])
                                          : std::span<const double>(x);
        dz.assign(last.size(), 0.0);
        {
            const layer& l = p.mean_head;
            layer& g = out->mean_head;
            for (int o = 0; o < l.out; ++o) {
                const double d = dmean[static_cast<std::size_t>(o)];
                if (d == 0.0) continue;
                const double* wrow = l.w.data() + static_cast<std::size_t>(o) * l.in;
                double* grow = g.w.data() + static_cast<std::size_t>(o) * l.in;
                for (int i = 0; i < l.in; ++i) {
                    grow[i] += d * last[static_cast<std::size_t>(i)];
                    dz[static_cast<std::size_t>(i)] += d * wrow[i];
                }
                g.b[static_cast<std::size_t>(o)] += d;
            }
        }
        if (p.alpha_head.present() && !alpha_frozen && kind == loss_kind::heteroscedastic) {
            const layer& l = p.alpha_head;
            layer& g = out->alpha_head;
            for (int o = 0; o < l.out; ++o) {
                const double d = dalpha[static_cast<std::size_t>(o)];
                if (d == 0.0) continue;
                const double* wrow = l.w.data() + static_cast<std::size_t>(o) * l.in;
                double* grow = g.w.data() + static_cast<std::size_t>(o) * l.in;
                for (int i = 0; i < l.in; ++i) {
                    grow[i] += d * last[static_cast<std::size_t>(i)];
                    dz[static_cast<std::size_t>(i)] += d * wrow[i];
                }
                g.b[static_cast<std::size_t>(o)] += d;
            }
        }

        for (std::size_t ii = nh; ii-- > 0;) {
            const layer& l = p.hidden[ii];
            layer& g = out->hidden[ii];
            if (!ws.mask[ii].empty()) {
                for (std::size_t o = 0; o < dz.size(); ++o) dz[o] *= ws.mask[ii][o];
            }
            for (int o = 0; o < l.out; ++o) {
                const double slope = ws.pre[ii][static_cast<std::size_t>(o)] > 0.0
                                         ? 1.0
                                         : kLeakySlope;
                dz[static_cast<std::size_t>(o)] *= slope;
            }
            std::span<const double> prev = ii ? std::span<const double>(ws.act[ii - 1])
                                              : std::span<const double>(x);
            dprev.assign(prev.size(), 0.0);
            for (int o = 0; o < l.out; ++o) {
                const double d = dz[static_cast<std::size_t>(o)];
                if (d == 0.0) continue;
                const double* wrow = l.w.data() + static_cast<std::size_t>(o) * l.in;
                double* grow = g.w.data() + static_cast<std::size_t>(o) * l.in;
                for (int i = 0; i < l.in; ++i) {
                    grow[i] += d * prev[static_cast<std::size_t>(i)];
                    dprev[static_cast<std::size_t>(i)] += d * wrow[i];
                }
                g.b[static_cast<std::size_t>(o)] += d;
            }
            dz.swap(dprev);
        }
    }

    const double inv_n = 1.0 / static_cast<double>(rows.size());
    if (out) {
        auto scale_layer = [inv_n](layer& l) {
            for (double& v : l.w) v *= inv_n;
            for (double& v : l.b) v *= inv_n;
        };
        for (auto& l : out->hidden) scale_layer(l);
        scale_layer(out->mean_head);
        scale_layer(out->alpha_head);
    }
    return total * inv_n;
}

// Loss value only; the batch-position mask convention matches loss_and_grad.
template <class View>
double loss_value(const model_params& p, const View& data, std::span<const std::size_t> rows,
                  loss_kind kind, std::optional<std::uint64_t> mask_seed = std::nullopt,
                  bool alpha_frozen = false) {
    return loss_and_grad(p, data, rows, kind, mask_seed, alpha_frozen, nullptr);
}

// Deterministic-pass evaluation losses.
template <class View>
double loss_mse(const model_params& p, const View& data, std::span<const std::size_t> rows) {
    return loss_value(p, data, rows, loss_kind::mse);
}

template <class View>
double loss_heteroscedastic(const model_params& p, const View& data,
                            std::span<const std::size_t> rows) {
    return loss_value(p, data, rows, loss_kind::heteroscedastic);
}

// ---------------------------------------------------------------------------
// Checkpoint format: line-oriented text, exact round-trip via shortest-form
// doubles. load_model(save_model(p)) reproduces p bit for bit.

namespace detail {

inline void write_layer(std::ostream& out, const std::string& name, const layer& l) {
    out << name << " in=" << l.in << " out=" << l.out << "\n";
    out << "w";
    for (double v : l.w) out << ' ' << fmt_double(v);
    out << "\nb";
    for (double v : l.b) out << ' ' << fmt_double(v);
    out << "\n";
}

inline layer read_layer(std::istream& in, const std::string& expect, std::size_t& line_no) {
    std::string line;
    if (!std::getline(in, line)) throw parse_error("model file: unexpected end of file");
    ++line_no;
    std::istringstream h(line);
    std::string name, in_tok, out_tok;
    h >> name >> in_tok >> out_tok;
    if (name != expect || !in_tok.starts_with("in=") || !out_tok.starts_with("out=")) {
        throw parse_error("model file line " + std::to_string(line_no) + ": expected '" +
                          expect + " in=<n> out=<n>'");
    }
    layer l;
    l.resize(static_cast<int>(parse_int(in_tok.substr(3), line_no)),
             static_cast<int>(parse_int(out_tok.substr(4), line_no)));
    auto read_values = [&](char tag, std::vector<double>& dst) {
        if (!std::getline(in, line)) throw parse_error("model file: unexpected end of file");
        ++line_no;
        const auto cells = split(trim(line), ' ');
        if (cells.empty() || cells[0].size() != 1 || cells[0][0] != tag ||
            cells.size() != dst.size() + 1) {
            throw parse_error("model file line " + std::to_string(line_no) +
                              ": malformed value row");
        }
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = parse_double(cells[i + 1], line_no);
    };
    read_values('w', l.w);
    read_values('b', l.b);
    return l;
}

} // namespace detail

inline void save_model(const model_params& p, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw parse_error("cannot open '" + path + "' for writing");
    out << "alsim-model 1\n";
    out << "joints=" << p.joints << " mode=" << to_string(p.mode)
        << " rate=" << fmt_double(p.dropout_rate)
        << " alpha_per_coord=" << (p.alpha_per_coord ? 1 : 0)
        << " hidden=" << p.hidden.size() << "\n";
    for (std::size_t i = 0; i < p.hidden.size(); ++i) {
        detail::write_layer(out, "hidden", p.hidden[i]);
    }
    detail::write_layer(out, "mean_head", p.mean_head);
    detail::write_layer(out, "alpha_head", p.alpha_head);
}

inline model_params load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw parse_error("cannot open model file '" + path + "'");
    std::string line;
    std::size_t line_no = 1;
    if (!std::getline(in, line) || trim(line) != "alsim-model 1") {
        throw parse_error("model file line 1: bad magic");
    }
    if (!std::getline(in, line)) throw parse_error("model file: missing header");
    ++line_no;
    model_params p;
    std::size_t n_hidden = 0;
    for (const auto tok : split(trim(line), ' ')) {
        const auto kv = split(tok, '=');
        if (kv.size() != 2) throw parse_error("model file line 2: malformed header token");
        const std::string key(kv[0]);
        if (key == "joints") {
            p.joints = static_cast<int>(parse_int(kv[1], line_no));
        } else if (key == "mode") {
            if (kv[1] == "none") p.mode = dropout_mode::none;
            else if (kv[1] == "a") p.mode = dropout_mode::a;
            else if (kv[1] == "b") p.mode = dropout_mode::b;
            else if (kv[1] == "c") p.mode = dropout_mode::c;
            else throw parse_error("model file line 2: unknown dropout mode");
        } else if (key == "rate") {
            p.dropout_rate = parse_double(kv[1], line_no);
        } else if (key == "alpha_per_coord") {
            p.alpha_per_coord = parse_int(kv[1], line_no) != 0;
        } else if (key == "hidden") {
            n_hidden = static_cast<std::size_t>(parse_int(kv[1], line_no));
        } else {
            throw parse_error("model file line 2: unknown header key '" + key + "'");
        }
    }
    for (std::size_t i = 0; i < n_hidden; ++i) {
        p.hidden.push_back(detail::read_layer(in, "hidden", line_no));
    }
    p.mean_head = detail::read_layer(in, "mean_head", line_no);
    p.alpha_head = detail::read_layer(in, "alpha_head", line_no);
    p.validate();
    return p;
}

} // namespace alsim
