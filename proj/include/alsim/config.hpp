#pragma once

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "alsim/acquisition.hpp"
#include "alsim/dataset.hpp"
#include "alsim/errors.hpp"
#include "alsim/model.hpp"

namespace alsim {

// Fully resolved experiment description. Every field has a default; the
// config file only overrides. Unknown keys are a hard error.
struct experiment_config {
    // data
    std::string source = "synthetic"; // "synthetic" or a dataset file path
    synthetic_spec synth;             // n is the training universe size
    std::size_t test_n = 1000;

    // model
    std::vector<int> hidden = {64, 64, 64};
    dropout_mode mode = dropout_mode::a;
    double dropout_rate = 0.1;
    loss_kind loss = loss_kind::heteroscedastic;
    int mc_passes = 40;
    bool alpha_per_coord = false;

    // training
    double learning_rate = 1e-3;
    int batch_size = 128;
    int epochs = 100;

    // active learning
    std::size_t budget = 100;
    int stages = 10;
    double subset_fraction = 0.10;
    int trials = 5;
    std::vector<strategy> strategies = {strategy::random, strategy::uncertainty,
                                        strategy::coreset, strategy::cke};
    double eta = 0.3;
    std::size_t seed_size = 0; // 0 -> budget
    bool share_subsets = true;
    cke_scoring scoring = cke_scoring::upper_at_lower_nearest;

    // run
    std::uint64_t master_seed = 1;
    std::string output_dir = "out";
    int jobs = 1;

    std::size_t resolved_seed_size() const { return seed_size == 0 ? budget : seed_size; }
};

namespace detail {

struct config_line {
    std::string key;
    std::string value;
    std::size_t line_no;
};

[[noreturn]] inline void bad_value(const config_line& l, const std::string& why) {
    throw parse_error("config line " + std::to_string(l.line_no) + ": key '" + l.key + "': " +
                      why);
}

inline double to_double(const config_line& l) {
    try {
        return parse_double(l.value, l.line_no);
    } catch (const parse_error&) {
        bad_value(l, "expected a number, got '" + l.value + "'");
    }
}

inline long long to_int(const config_line& l) {
    try {
        return parse_int(l.value, l.line_no);
    } catch (const parse_error&) {
        bad_value(l, "expected an integer, got '" + l.value + "'");
    }
}

inline bool to_bool(const config_line& l) {
    if (l.value == "true" || l.value == "1") return true;
    if (l.value == "false" || l.value == "0") return false;
    bad_value(l, "expected true/false");
}

inline void apply_key(experiment_config& cfg, const config_line& l) {
    const std::string& k = l.key;
    if (k == "data.source") {
        if (l.value.empty()) bad_value(l, "must be 'synthetic' or a file path");
        cfg.source = l.value;
    } else if (k == "data.n") {
        const long long v = to_int(l);
        if (v < 1) bad_value(l, "must be >= 1");
        cfg.synth.n = static_cast<std::size_t>(v);
    } else if (k == "data.test_n") {
        const long long v = to_int(l);
        if (v < 1) bad_value(l, "must be >= 1");
        cfg.test_n = static_cast<std::size_t>(v);
    } else if (k == "data.features") {
        const long long v = to_int(l);
        if (v < 1) bad_value(l, "must be >= 1");
        cfg.synth.feature_dim = static_cast<int>(v);
    } else if (k == "data.joints") {
        const long long v = to_int(l);
        if (v < 1) bad_value(l, "must be >= 1");
        cfg.synth.joints = static_cast<int>(v);
    } else if (k == "data.noise") {
        if (l.value == "constant") cfg.synth.noise.kind = noise_kind::constant;
        else if (l.value == "ramp") cfg.synth.noise.kind = noise_kind::ramp;
        else bad_value(l, "expected constant|ramp");
    } else if (k == "data.noise_sd") {
        const double v = to_double(l);
        if (v < 0.0) bad_value(l, "must be >= 0");
        cfg.synth.noise.sd = v;
    } else if (k == "data.noise_lo") {
        const double v = to_double(l);
        if (v < 0.0) bad_value(l, "must be >= 0");
        cfg.synth.noise.lo = v;
    } else if (k == "data.noise_hi") {
        const double v = to_double(l);
        if (v < 0.0) bad_value(l, "must be >= 0");
        cfg.synth.noise.hi = v;
    } else if (k == "data.noise_feature") {
        const long long v = to_int(l);
        if (v < 0) bad_value(l, "must be >= 0");
        cfg.synth.noise.feature = static_cast<int>(v);
    } else if (k == "data.target_fn_seed") {
        cfg.synth.target_fn_seed = static_cast<std::uint64_t>(to_int(l));
    } else if (k == "model.hidden") {
        std::vector<int> dims;
        if (l.value != "none") {
            for (const auto tok : split(l.value, ',')) {
                long long v = 0;
                try {
                    v = parse_int(tok, l.line_no);
                } catch (const parse_error&) {
                    bad_value(l, "expected comma-separated widths or 'none'");
                }
                if (v < 1) bad_value(l, "hidden widths must be >= 1");
                dims.push_back(static_cast<int>(v));
            }
        }
        cfg.hidden = std::move(dims);
    } else if (k == "model.dropout_mode") {
        if (l.value == "none") cfg.mode = dropout_mode::none;
        else if (l.value == "a") cfg.mode = dropout_mode::a;
        else if (l.value == "b") cfg.mode = dropout_mode::b;
        else if (l.value == "c") cfg.mode = dropout_mode::c;
        else bad_value(l, "expected a|b|c|none");
    } else if (k == "model.dropout_rate") {
        const double v = to_double(l);
        if (v < 0.0 || v >= 1.0) bad_value(l, "must lie in [0, 1)");
        cfg.dropout_rate = v;
    } else if (k == "model.loss") {
        if (l.value == "mse") cfg.loss = loss_kind::mse;
        else if (l.value == "heteroscedastic") cfg.loss = loss_kind::heteroscedastic;
        else bad_value(l, "expected mse|heteroscedastic");
    } else if (k == "model.mc_passes") {
        const long long v = to_int(l);
        if (v < 1) bad_value(l, "must be >= 1");
        cfg.mc_passes = static_cast<int>(v);
    } else if (k == "model.alpha_per_coord") {
        cfg.alpha_per_coord = to_bool(l);
    } else if (k == "train.learning_rate") {
        const double v = to_double(l);
        if (v <= 0.0) bad_value(l, "must be > 0");
        cfg.learning_rate = v;
    } else if (k == "train.batch_size") {
        const long long v = to_int(l);
        if (v < 1) bad_value(l, "must be >= 1");
        cfg.batch_size = static_cast<int>(v);
    } else if (k == "train.epochs") {
        const long long v = to_int(l);
        if (v < 1) bad_value(l, "must be >= 1");
        cfg.epochs = static_cast<int>(v);
    } else if (k == "al.budget") {
        const long long v = to_int(l);
        if (v < 0) bad_value(l, "must be >= 0");
        cfg.budget = static_cast<std::size_t>(v);
    } else if (k == "al.stages") {
        const long long v = to_int(l);
        if (v < 0) bad_value(l, "must be >= 0");
        cfg.stages = static_cast<int>(v);
    } else if (k == "al.subset_fraction") {
        const double v = to_double(l);
        if (v <= 0.0 || v > 1.0) bad_value(l, "must lie in (0, 1]");
        cfg.subset_fraction = v;
    } else if (k == "al.trials") {
        const long long v = to_int(l);
        if (v < 1) bad_value(l, "must be >= 1");
        cfg.trials = static_cast<int>(v);
    } else if (k == "al.strategies") {
        std::vector<strategy> ss;
        for (const auto tok : split(l.value, ',')) {
            try {
                ss.push_back(parse_strategy(trim(tok)));
            } catch (const validation_error&) {
                bad_value(l, "unknown strategy '" + std::string(trim(tok)) + "'");
            }
        }
        if (ss.empty()) bad_value(l, "needs at least one strategy");
        cfg.strategies = std::move(ss);
    } else if (k == "al.eta") {
        const double v = to_double(l);
        if (v < 0.0) bad_value(l, "must be >= 0");
        cfg.eta = v;
    } else if (k == "al.seed_size") {
        const long long v = to_int(l);
        if (v < 0) bad_value(l, "must be >= 0");
        cfg.seed_size = static_cast<std::size_t>(v);
    } else if (k == "al.share_subsets") {
        cfg.share_subsets = to_bool(l);
    } else if (k == "al.cke_scoring") {
        if (l.value == "lower_nearest") cfg.scoring = cke_scoring::upper_at_lower_nearest;
        else if (l.value == "min_upper") cfg.scoring = cke_scoring::upper_min;
        else bad_value(l, "expected lower_nearest|min_upper");
    } else if (k == "seed") {
        cfg.master_seed = static_cast<std::uint64_t>(to_int(l));
    } else if (k == "output_dir") {
        if (l.value.empty()) bad_value(l, "must be non-empty");
        cfg.output_dir = l.value;
    } else if (k == "jobs") {
        const long long v = to_int(l);
        if (v < 1) bad_value(l, "must be >= 1");
        cfg.jobs = static_cast<int>(v);
    } else {
        throw parse_error("config line " + std::to_string(l.line_no) + ": unknown key '" + k +
                          "'");
    }
}

} // namespace detail

// Key = value lines, '#' comments, dotted section prefixes.
inline experiment_config parse_config_text(const std::string& text) {
    experiment_config cfg;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string_view body = trim(line);
        if (body.empty()) continue;
        const std::size_t eq = body.find('=');
        if (eq == std::string_view::npos) {
            throw parse_error("config line " + std::to_string(line_no) +
                              ": expected 'key = value'");
        }
        detail::config_line cl{std::string(trim(body.substr(0, eq))),
                               std::string(trim(body.substr(eq + 1))), line_no};
        if (cl.key.empty()) {
            throw parse_error("config line " + std::to_string(line_no) + ": empty key");
        }
        detail::apply_key(cfg, cl);
    }
    return cfg;
}

// ALSIM_SEED and ALSIM_OUTPUT_DIR take precedence over the file. Applied by
// the CLI entry points, not by the parser, so parsing stays pure.
inline void apply_env_overrides(experiment_config& cfg) {
    if (const char* env_seed = std::getenv("ALSIM_SEED")) {
        detail::config_line cl{"seed", env_seed, 0};
        detail::apply_key(cfg, cl);
    }
    if (const char* env_out = std::getenv("ALSIM_OUTPUT_DIR")) {
        cfg.output_dir = env_out;
    }
}

inline experiment_config parse_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw parse_error("cannot open config file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

// Canonical echo of a resolved config; parse_config_text(emit_config(c))
// reproduces c exactly.
inline std::string emit_config(const experiment_config& cfg) {
    std::ostringstream out;
    out << "data.source = " << cfg.source << "\n";
    out << "data.n = " << cfg.synth.n << "\n";
    out << "data.test_n = " << cfg.test_n << "\n";
    out << "data.features = " << cfg.synth.feature_dim << "\n";
    out << "data.joints = " << cfg.synth.joints << "\n";
    out << "data.noise = " << (cfg.synth.noise.kind == noise_kind::constant ? "constant" : "ramp")
        << "\n";
    out << "data.noise_sd = " << fmt_double(cfg.synth.noise.sd) << "\n";
    out << "data.noise_lo = " << fmt_double(cfg.synth.noise.lo) << "\n";
    out << "data.noise_hi = " << fmt_double(cfg.synth.noise.hi) << "\n";
    out << "data.noise_feature = " << cfg.synth.noise.feature << "\n";
    out << "data.target_fn_seed = " << cfg.synth.target_fn_seed << "\n";
    out << "model.hidden = ";
    if (cfg.hidden.empty()) {
        out << "none";
    } else {
        for (std::size_t i = 0; i < cfg.hidden.size(); ++i) {
            if (i) out << ',';
            out << cfg.hidden[i];
        }
    }
    out << "\n";
    out << "model.dropout_mode = " << to_string(cfg.mode) << "\n";
    out << "model.dropout_rate = " << fmt_double(cfg.dropout_rate) << "\n";
    out << "model.loss = " << to_string(cfg.loss) << "\n";
    out << "model.mc_passes = " << cfg.mc_passes << "\n";
    out << "model.alpha_per_coord = " << (cfg.alpha_per_coord ? "true" : "false") << "\n";
    out << "train.learning_rate = " << fmt_double(cfg.learning_rate) << "\n";
    out << "train.batch_size = " << cfg.batch_size << "\n";
    out << "train.epochs = " << cfg.epochs << "\n";
    out << "al.budget = " << cfg.budget << "\n";
    out << "al.stages = " << cfg.stages << "\n";
    out << "al.subset_fraction = " << fmt_double(cfg.subset_fraction) << "\n";
    out << "al.trials = " << cfg.trials << "\n";
    out << "al.strategies = ";
    for (std::size_t i = 0; i < cfg.strategies.size(); ++i) {
        if (i) out << ',';
        out << to_string(cfg.strategies[i]);
    }
    out << "\n";
    out << "al.eta = " << fmt_double(cfg.eta) << "\n";
    out << "al.seed_size = " << cfg.seed_size << "\n";
    out << "al.share_subsets = " << (cfg.share_subsets ? "true" : "false") << "\n";
    out << "al.cke_scoring = "
        << (cfg.scoring == cke_scoring::upper_at_lower_nearest ? "lower_nearest" : "min_upper")
        << "\n";
    out << "seed = " << cfg.master_seed << "\n";
    out << "output_dir = " << cfg.output_dir << "\n";
    out << "jobs = " << cfg.jobs << "\n";
    return out.str();
}

} // namespace alsim
