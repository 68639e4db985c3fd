#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "alsim/errors.hpp"
#include "alsim/rng.hpp"
#include "alsim/text.hpp"

namespace alsim {

struct sample {
    std::vector<double> features;
    std::vector<double> target; // flattened joints x 3, length 3*K
};

// Ordered, rectangular collection of samples. Row i keeps its index for the
// whole run; acquisition bookkeeping relies on that stability.
class dataset {
public:
    dataset() = default;
    dataset(int feature_dim, int joints) : feature_dim_(feature_dim), joints_(joints) {
        if (feature_dim <= 0) throw validation_error("dataset: feature_dim must be positive");
        if (joints <= 0) throw validation_error("dataset: joints must be positive");
    }

    int feature_dim() const { return feature_dim_; }
    int joints() const { return joints_; }
    int target_dim() const { return 3 * joints_; }
    std::size_t size() const { return n_; }
    bool empty() const { return n_ == 0; }

    std::span<const double> features(std::size_t i) const {
        return {xs_.data() + i * static_cast<std::size_t>(feature_dim_),
                static_cast<std::size_t>(feature_dim_)};
    }

    std::span<const double> target(std::size_t i) const {
        return {ys_.data() + i * static_cast<std::size_t>(target_dim()),
                static_cast<std::size_t>(target_dim())};
    }

    std::span<double> mutable_target(std::size_t i) {
        return {ys_.data() + i * static_cast<std::size_t>(target_dim()),
                static_cast<std::size_t>(target_dim())};
    }

    void append(const sample& s) {
        if (static_cast<int>(s.features.size()) != feature_dim_) {
            throw validation_error("dataset: sample feature length " +
                                   std::to_string(s.features.size()) + " != D=" +
                                   std::to_string(feature_dim_));
        }
        if (static_cast<int>(s.target.size()) != target_dim()) {
            throw validation_error("dataset: sample target length " +
                                   std::to_string(s.target.size()) + " != 3*K=" +
                                   std::to_string(target_dim()));
        }
        for (double v : s.features) {
            if (!std::isfinite(v)) throw validation_error("dataset: non-finite feature value");
        }
        for (double v : s.target) {
            if (!std::isfinite(v)) throw validation_error("dataset: non-finite target value");
        }
        xs_.insert(xs_.end(), s.features.begin(), s.features.end());
        ys_.insert(ys_.end(), s.target.begin(), s.target.end());
        ++n_;
    }

    sample row(std::size_t i) const {
        const auto x = features(i);
        const auto y = target(i);
        return sample{{x.begin(), x.end()}, {y.begin(), y.end()}};
    }

private:
    int feature_dim_ = 0;
    int joints_ = 0;
    std::size_t n_ = 0;
    std::vector<double> xs_;
    std::vector<double> ys_;
};

// Read-only window that exposes features for every sample but targets only
// for annotated indices. The training and acquisition code work through this
// type, so unlabeled targets are unreachable before annotation.
class labeled_view {
public:
    labeled_view(const dataset& ds, std::vector<std::size_t> labeled)
        : ds_(&ds), labeled_(std::move(labeled)),
          labeled_set_(labeled_.begin(), labeled_.end()) {}

    int feature_dim() const { return ds_->feature_dim(); }
    int joints() const { return ds_->joints(); }
    int target_dim() const { return ds_->target_dim(); }

    std::span<const double> features(std::size_t i) const { return ds_->features(i); }

    std::span<const double> target(std::size_t i) const {
        if (!is_labeled(i)) {
            throw contract_error("labeled_view: target of unlabeled index " + std::to_string(i) +
                                 " requested before annotation");
        }
        return ds_->target(i);
    }

    bool is_labeled(std::size_t i) const { return labeled_set_.count(i) != 0; }
    const std::vector<std::size_t>& labeled_indices() const { return labeled_; }

private:
    const dataset* ds_;
    std::vector<std::size_t> labeled_;
    std::unordered_set<std::size_t> labeled_set_;
};

// ---------------------------------------------------------------------------
// Synthetic task generation

enum class noise_kind { constant, ramp };

// Per-sample noise standard deviation, identical across target coordinates.
// The ramp variant ramps along one feature so noise level is learnable from x.
struct noise_profile {
    noise_kind kind = noise_kind::constant;
    double sd = 0.05;              // constant
    double lo = 0.02, hi = 0.30;   // ramp endpoints
    int feature = 0;               // ramp driver

    double sd_at(std::span<const double> x) const {
        if (kind == noise_kind::constant) return sd;
        const double t = std::clamp((x[static_cast<std::size_t>(feature)] + 2.0) / 4.0, 0.0, 1.0);
        return lo + (hi - lo) * t;
    }

    void validate(int feature_dim) const {
        if (kind == noise_kind::constant) {
            if (sd < 0.0) throw validation_error("synthetic_spec: noise sd must be >= 0");
        } else {
            if (lo < 0.0) throw validation_error("synthetic_spec: noise lo must be >= 0");
            if (hi < 0.0) throw validation_error("synthetic_spec: noise hi must be >= 0");
            if (feature < 0 || feature >= feature_dim) {
                throw validation_error("synthetic_spec: noise feature index out of range");
            }
        }
    }
};

struct synthetic_spec {
    std::size_t n = 4000;
    int feature_dim = 16;
    int joints = 21;
    noise_profile noise;
    std::uint64_t target_fn_seed = 7;

    void validate() const {
        if (n == 0) throw validation_error("synthetic_spec: n must be positive");
        if (feature_dim <= 0) throw validation_error("synthetic_spec: feature_dim must be positive");
        if (joints <= 0) throw validation_error("synthetic_spec: joints must be positive");
        noise.validate(feature_dim);
    }
};

// Fixed random one-hidden-layer tanh map; the seed is the task identity.
class target_fn {
public:
    static constexpr int hidden = 32;

    target_fn(int feature_dim, int out_dim, std::uint64_t seed)
        : d_(feature_dim), out_(out_dim), a_(static_cast<std::size_t>(hidden) * d_),
          bias_(hidden), c_(static_cast<std::size_t>(out_) * hidden) {
        rng g(derive_seed(seed, 0xf00d));
        const double in_scale = 1.0 / std::sqrt(static_cast<double>(d_));
        for (double& v : a_) v = g.normal() * in_scale;
        for (double& v : bias_) v = g.uniform(-1.0, 1.0);
        const double out_scale = 1.0 / std::sqrt(static_cast<double>(hidden));
        for (double& v : c_) v = g.normal() * out_scale;
    }

    void eval(std::span<const double> x, std::span<double> y) const {
        double h[hidden];
        for (int j = 0; j < hidden; ++j) {
            double acc = bias_[static_cast<std::size_t>(j)];
            const double* row = a_.data() + static_cast<std::size_t>(j) * d_;
            for (int i = 0; i < d_; ++i) acc += row[i] * x[static_cast<std::size_t>(i)];
            h[j] = std::tanh(acc);
        }
        for (int o = 0; o < out_; ++o) {
            double acc = 0.0;
            const double* row = c_.data() + static_cast<std::size_t>(o) * hidden;
            for (int j = 0; j < hidden; ++j) acc += row[j] * h[j];
            y[static_cast<std::size_t>(o)] = acc;
        }
    }

private:
    int d_;
    int out_;
    std::vector<double> a_;    // hidden x D
    std::vector<double> bias_; // hidden
    std::vector<double> c_;    // out x hidden
};

// Ground truth retained for oracle tests only. Never handed to the learner.
struct synthetic_truth {
    std::vector<double> clean; // n x 3K noiseless targets
    std::vector<double> sd;    // n  true noise standard deviation
};

struct synthetic_data {
    dataset data;
    synthetic_truth truth;
};

// Features form a Zipf-weighted mixture of Gaussian clusters whose geometry
// derives from target_fn_seed, so it is part of the task identity. The rare
// clusters give pool-based selection something real to discover: uniform
// sampling under-covers them for many acquisition rounds.
inline synthetic_data generate_synthetic(const synthetic_spec& spec, std::uint64_t seed) {
    spec.validate();
    const int out_dim = 3 * spec.joints;
    target_fn fn(spec.feature_dim, out_dim, spec.target_fn_seed);

    constexpr int kClusters = 20;
    constexpr double kZipf = 1.6;
    constexpr double kCenterScale = 2.0;
    constexpr double kSpread = 0.35;
    rng geo(derive_seed(spec.target_fn_seed, 0xc1a5));
    std::vector<double> centers(static_cast<std::size_t>(kClusters) * spec.feature_dim);
    for (double& v : centers) v = kCenterScale * geo.normal();
    double cum[kClusters];
    double total = 0.0;
    for (int j = 0; j < kClusters; ++j) total += std::pow(j + 1.0, -kZipf);
    double acc = 0.0;
    for (int j = 0; j < kClusters; ++j) {
        acc += std::pow(j + 1.0, -kZipf) / total;
        cum[j] = acc;
    }

    synthetic_data result;
    result.data = dataset(spec.feature_dim, spec.joints);
    result.truth.clean.reserve(spec.n * static_cast<std::size_t>(out_dim));
    result.truth.sd.reserve(spec.n);

    rng g(derive_seed(seed, 0xda7a));
    sample s;
    s.features.resize(static_cast<std::size_t>(spec.feature_dim));
    s.target.resize(static_cast<std::size_t>(out_dim));
    std::vector<double> clean(static_cast<std::size_t>(out_dim));
    for (std::size_t i = 0; i < spec.n; ++i) {
        const double u = g.uniform();
        int cluster = 0;
        while (cluster + 1 < kClusters && u > cum[cluster]) ++cluster;
        const double* center =
            centers.data() + static_cast<std::size_t>(cluster) * spec.feature_dim;
        for (int d = 0; d < spec.feature_dim; ++d) {
            s.features[static_cast<std::size_t>(d)] = center[d] + kSpread * g.normal();
        }
        fn.eval(s.features, clean);
        const double sd = spec.noise.sd_at(s.features);
        for (int c = 0; c < out_dim; ++c) {
            s.target[static_cast<std::size_t>(c)] =
                clean[static_cast<std::size_t>(c)] + sd * g.normal();
        }
        result.data.append(s);
        result.truth.clean.insert(result.truth.clean.end(), clean.begin(), clean.end());
        result.truth.sd.push_back(sd);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Target normalization

// Per-coordinate min-max mapping into [0,1]. A zero-range coordinate maps to
// 0.5 and inverts back to its constant value.
struct norm_stats {
    std::vector<double> lo;
    std::vector<double> hi;

    double normalize_coord(double v, std::size_t c) const {
        const double range = hi[c] - lo[c];
        if (range == 0.0) return 0.5;
        return (v - lo[c]) / range;
    }

    double denormalize_coord(double v, std::size_t c) const {
        return lo[c] + v * (hi[c] - lo[c]);
    }
};

inline norm_stats fit_norm_stats(const dataset& ds) {
    if (ds.empty()) throw validation_error("fit_norm_stats: dataset is empty");
    const std::size_t dim = static_cast<std::size_t>(ds.target_dim());
    norm_stats st;
    st.lo.assign(dim, std::numeric_limits<double>::infinity());
    st.hi.assign(dim, -std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto y = ds.target(i);
        for (std::size_t c = 0; c < dim; ++c) {
            st.lo[c] = std::min(st.lo[c], y[c]);
            st.hi[c] = std::max(st.hi[c], y[c]);
        }
    }
    return st;
}

inline std::pair<dataset, norm_stats> normalize_targets(const dataset& ds) {
    const norm_stats st = fit_norm_stats(ds);
    dataset out(ds.feature_dim(), ds.joints());
    sample s;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        s = ds.row(i);
        for (std::size_t c = 0; c < s.target.size(); ++c) {
            s.target[c] = st.normalize_coord(s.target[c], c);
        }
        out.append(s);
    }
    return {std::move(out), st};
}

// ---------------------------------------------------------------------------
// Dataset file format: UTF-8 CSV, header "D=<int>,K=<int>", then one row per
// sample holding D features followed by 3K target coordinates.

inline void save_dataset(const dataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw parse_error("cannot open '" + path + "' for writing");
    out << "D=" << ds.feature_dim() << ",K=" << ds.joints() << "\n";
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto x = ds.features(i);
        const auto y = ds.target(i);
        for (std::size_t c = 0; c < x.size(); ++c) {
            if (c) out << ',';
            out << fmt_double(x[c]);
        }
        for (std::size_t c = 0; c < y.size(); ++c) {
            out << ',' << fmt_double(y[c]);
        }
        out << '\n';
    }
}

inline dataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw parse_error("cannot open dataset file '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw parse_error("line 1: empty dataset file");

    const auto header = split(trim(line), ',');
    if (header.size() != 2 || !header[0].starts_with("D=") || !header[1].starts_with("K=")) {
        throw parse_error("line 1: expected header 'D=<int>,K=<int>', got '" + line + "'");
    }
    const long long d = parse_int(header[0].substr(2), 1);
    const long long k = parse_int(header[1].substr(2), 1);
    if (d <= 0 || k <= 0) throw parse_error("line 1: D and K must be positive");

    dataset ds(static_cast<int>(d), static_cast<int>(k));
    const std::size_t ncols = static_cast<std::size_t>(d + 3 * k);
    sample s;
    s.features.resize(static_cast<std::size_t>(d));
    s.target.resize(static_cast<std::size_t>(3 * k));
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto cells = split(trim(line), ',');
        if (cells.size() != ncols) {
            throw parse_error("line " + std::to_string(line_no) + ": expected " +
                              std::to_string(ncols) + " values, got " +
                              std::to_string(cells.size()));
        }
        for (std::size_t c = 0; c < static_cast<std::size_t>(d); ++c) {
            s.features[c] = parse_double(cells[c], line_no);
        }
        for (std::size_t c = 0; c < static_cast<std::size_t>(3 * k); ++c) {
            s.target[c] = parse_double(cells[static_cast<std::size_t>(d) + c], line_no);
        }
        ds.append(s);
    }
    return ds;
}

} // namespace alsim
