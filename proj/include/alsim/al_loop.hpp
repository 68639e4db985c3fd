#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <mutex>
#include <numeric>
#include <span>
#include <string>
#include <thread>
#include <tuple>
#include <unordered_set>
#include <utility>
#include <vector>

#include "alsim/acquisition.hpp"
#include "alsim/config.hpp"
#include "alsim/dataset.hpp"
#include "alsim/model.hpp"
#include "alsim/predict.hpp"
#include "alsim/train.hpp"

namespace alsim {

// Seed-stream salts. Subset and training seeds depend only on (trial, stage),
// never on the strategy, so strategies within a trial share the seed set,
// the per-stage candidate draw and the training randomness.
namespace salt {
constexpr std::uint64_t data = 0x01;
constexpr std::uint64_t trial = 0x02;
constexpr std::uint64_t seed_set = 0x03;
constexpr std::uint64_t init = 0x04;
constexpr std::uint64_t train = 0x05;
constexpr std::uint64_t subset = 0x06;
constexpr std::uint64_t mc_pool = 0x07;
constexpr std::uint64_t mc_labeled = 0x08;
constexpr std::uint64_t acquire = 0x09;
constexpr std::uint64_t eval = 0x0a;
} // namespace salt

// Labeled / unlabeled split of the training universe.
struct al_state {
    std::vector<std::size_t> labeled; // seed order, then acquisition order
    std::vector<std::size_t> pool;    // remaining candidates, stable order
    std::size_t initial_pool_size = 0;
    int stage = 0;
};

struct stage_record {
    int stage = 0;
    std::size_t labeled_count = 0;
    double test_mse = 0.0;
    double train_loss_final = 0.0;
    double wall_time = 0.0; // seconds, excluded from report files
    bool pool_exhausted = false;
};

struct stage_trace {
    std::vector<std::size_t> subset;
    pool_predictions subset_preds;
    pool_predictions labeled_preds;
    selection_result selection;
};

// Immutable context shared by every stage of a run. Training targets are
// normalized; the test set keeps raw targets and predictions are denormalized
// before scoring.
struct experiment_env {
    const dataset* train = nullptr;
    const dataset* test = nullptr;
    const norm_stats* stats = nullptr;
    const experiment_config* cfg = nullptr;
};

namespace detail {

inline model_params fresh_model(const experiment_config& cfg, int feature_dim, int joints,
                                std::uint64_t init_seed) {
    return make_mlp(feature_dim, cfg.hidden, joints, cfg.loss == loss_kind::heteroscedastic,
                    cfg.mode, cfg.dropout_rate, cfg.alpha_per_coord, init_seed);
}

// Averaged per-joint squared error in raw target units. Bayesian models are
// scored on their MC-mean prediction, deterministic models on the plain pass.
inline double test_mse_denormalized(const experiment_env& env, const model_params& params,
                                    std::uint64_t eval_seed) {
    const dataset& test = *env.test;
    const norm_stats& st = *env.stats;
    const int k = test.joints();
    const std::size_t dim = static_cast<std::size_t>(test.target_dim());
    const bool bayesian = params.mode != dropout_mode::none;

    double total = 0.0;
    std::vector<double> pred;
    for (std::size_t i = 0; i < test.size(); ++i) {
        if (bayesian) {
            pred = mc_predict(params, test.features(i), env.cfg->mc_passes,
                              derive_seed(eval_seed, i))
                       .mean;
        } else {
            pred = predict_mean(params, test.features(i));
        }
        const auto y = test.target(i);
        double acc = 0.0;
        for (std::size_t c = 0; c < dim; ++c) {
            const double r = y[c] - st.denormalize_coord(pred[c], c);
            acc += r * r;
        }
        total += acc / static_cast<double>(k);
    }
    return total / static_cast<double>(test.size());
}

// MC summaries (means and epistemic sds) for a set of global rows; every row
// derives its own seed from its index, so any evaluation order agrees.
inline pool_predictions predict_rows(const experiment_env& env, const model_params& params,
                                     std::span<const std::size_t> rows, std::uint64_t base_seed) {
    pool_predictions out;
    out.dim = static_cast<std::size_t>(env.train->target_dim());
    out.indices.assign(rows.begin(), rows.end());
    out.means.resize(rows.size() * out.dim);
    out.epistemic_sd.resize(rows.size() * out.dim);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const prediction pred = mc_predict(params, env.train->features(rows[r]),
                                           env.cfg->mc_passes, derive_seed(base_seed, rows[r]));
        for (std::size_t c = 0; c < out.dim; ++c) {
            out.means[r * out.dim + c] = pred.mean[c];
            out.epistemic_sd[r * out.dim + c] = std::sqrt(pred.epistemic_var[c]);
        }
    }
    return out;
}

} // namespace detail

inline al_state make_initial_state(const experiment_env& env, std::uint64_t trial_seed) {
    const std::size_t n = env.train->size();
    const std::size_t seed_size = std::min(env.cfg->resolved_seed_size(), n);
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});

    rng g(derive_seed(trial_seed, salt::seed_set));
    al_state st;
    st.labeled = g.sample_without_replacement(all, seed_size);

    std::unordered_set<std::size_t> labeled_set(st.labeled.begin(), st.labeled.end());
    st.pool.reserve(n - st.labeled.size());
    for (std::size_t i = 0; i < n; ++i) {
        if (!labeled_set.count(i)) st.pool.push_back(i);
    }
    st.initial_pool_size = st.pool.size();
    return st;
}

// One protocol stage: retrain from scratch on the labeled set, score the test
// set, then (while stages remain) draw a fresh candidate subset, run the
// strategy and annotate its picks. Targets of pool rows stay unreadable until
// they move to the labeled side.
inline std::tuple<al_state, stage_record, model_params> run_stage(const experiment_env& env,
                                                                  al_state state, strategy strat,
                                                                  std::uint64_t trial_seed,
                                                                  stage_trace* trace = nullptr) {
    const experiment_config& cfg = *env.cfg;
    const auto t0 = std::chrono::steady_clock::now();
    const std::uint64_t stage_u = static_cast<std::uint64_t>(state.stage);

    model_params params = detail::fresh_model(
        cfg, env.train->feature_dim(), env.train->joints(),
        derive_seed(trial_seed, salt::init, stage_u));
    labeled_view view(*env.train, state.labeled);

    train_config tc;
    tc.learning_rate = cfg.learning_rate;
    tc.batch_size = cfg.batch_size;
    tc.epochs = cfg.epochs;
    tc.loss = cfg.loss;
    tc.seed = derive_seed(trial_seed, salt::train, stage_u);
    train_result tr = train(std::move(params), view, view.labeled_indices(), tc);

    stage_record rec;
    rec.stage = state.stage;
    rec.labeled_count = state.labeled.size();
    rec.train_loss_final = tr.epoch_loss.back();
    rec.test_mse =
        detail::test_mse_denormalized(env, tr.params, derive_seed(trial_seed, salt::eval, stage_u));

    const bool acquire = state.stage < cfg.stages && cfg.budget > 0;
    if (acquire && !state.pool.empty()) {
        rec.pool_exhausted = state.pool.size() < cfg.budget;

        std::size_t subset_size = static_cast<std::size_t>(
            std::ceil(cfg.subset_fraction * static_cast<double>(state.initial_pool_size)));
        subset_size = std::max<std::size_t>(1, std::min(subset_size, state.pool.size()));
        // A nearly exhausted pool is annotated in full.
        if (state.pool.size() <= cfg.budget) subset_size = state.pool.size();
        std::uint64_t subset_seed = derive_seed(trial_seed, salt::subset, stage_u);
        if (!cfg.share_subsets) {
            subset_seed = derive_seed(subset_seed, static_cast<std::uint64_t>(strat));
        }
        rng subset_rng(subset_seed);
        const std::vector<std::size_t> subset =
            subset_rng.sample_without_replacement(state.pool, subset_size);

        selection_result sel;
        pool_predictions subset_preds;
        pool_predictions labeled_preds;
        switch (strat) {
            case strategy::random: {
                rng g(derive_seed(trial_seed, salt::acquire, stage_u));
                sel = select_random(subset, cfg.budget, g);
                break;
            }
            case strategy::uncertainty: {
                subset_preds = detail::predict_rows(env, tr.params, subset,
                                                    derive_seed(trial_seed, salt::mc_pool, stage_u));
                sel = select_uncertainty(subset_preds, cfg.budget);
                break;
            }
            case strategy::coreset:
            case strategy::cke: {
                subset_preds = detail::predict_rows(env, tr.params, subset,
                                                    derive_seed(trial_seed, salt::mc_pool, stage_u));
                labeled_preds = detail::predict_rows(
                    env, tr.params, state.labeled,
                    derive_seed(trial_seed, salt::mc_labeled, stage_u));
                sel = strat == strategy::coreset
                          ? select_coreset(labeled_preds, subset_preds, cfg.budget)
                          : select_cke(labeled_preds, subset_preds, cfg.budget, cfg.eta,
                                       cfg.scoring);
                break;
            }
        }

        // Annotation: only here do chosen rows become readable targets.
        std::unordered_set<std::size_t> chosen_set(sel.chosen.begin(), sel.chosen.end());
        std::vector<std::size_t> remaining;
        remaining.reserve(state.pool.size() - sel.chosen.size());
        for (std::size_t idx : state.pool) {
            if (!chosen_set.count(idx)) remaining.push_back(idx);
        }
        state.pool = std::move(remaining);
        state.labeled.insert(state.labeled.end(), sel.chosen.begin(), sel.chosen.end());

        if (trace) {
            trace->subset = subset;
            trace->subset_preds = std::move(subset_preds);
            trace->labeled_preds = std::move(labeled_preds);
            trace->selection = std::move(sel);
        }
    } else if (acquire) {
        rec.pool_exhausted = true;
    }

    state.stage += 1;
    rec.wall_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {std::move(state), rec, std::move(tr.params)};
}

// ---------------------------------------------------------------------------
// Whole experiment

struct report_row {
    strategy strat;
    int trial = 0;
    stage_record rec;
};

struct summary_row {
    strategy strat;
    int stage = 0;
    std::size_t labeled_count = 0;
    double mean_mse = 0.0;
    double std_mse = 0.0; // across-trial sample standard deviation
};

struct report {
    std::vector<report_row> rows;       // (strategy, trial, stage), canonical order
    std::vector<summary_row> summary;   // (strategy, stage)
};

inline std::vector<summary_row> aggregate_rows(const std::vector<report_row>& rows) {
    // Group by (strategy, stage) preserving first-appearance order.
    std::vector<summary_row> out;
    std::vector<std::vector<double>> groups;
    auto slot = [&](strategy s, int stage, std::size_t labeled) -> std::vector<double>& {
        for (std::size_t i = 0; i < out.size(); ++i) {
            if (out[i].strat == s && out[i].stage == stage) return groups[i];
        }
        out.push_back(summary_row{s, stage, labeled, 0.0, 0.0});
        groups.emplace_back();
        return groups.back();
    };
    for (const auto& r : rows) slot(r.strat, r.rec.stage, r.rec.labeled_count).push_back(r.rec.test_mse);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto& v = groups[i];
        const double n = static_cast<double>(v.size());
        const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
        double var = 0.0;
        if (v.size() > 1) {
            for (double x : v) var += (x - mean) * (x - mean);
            var /= (n - 1.0);
        }
        out[i].mean_mse = mean;
        out[i].std_mse = std::sqrt(var);
    }
    return out;
}

// Invoked after every completed stage; may be called from worker threads but
// never concurrently for the same (strategy, trial).
using stage_sink = std::function<void(strategy, int trial, const stage_record&)>;

// Runs strategies x trials. Trial t of every strategy derives the same trial
// seed, hence the same seed set; records are assembled in canonical
// (strategy, trial, stage) order no matter the schedule. `external` supplies
// the dataset when cfg.source is a file path.
inline report run_experiment(const experiment_config& cfg, const dataset* external = nullptr,
                             stage_sink sink = {}) {
    if (cfg.strategies.empty()) throw validation_error("run_experiment: no strategies");
    if (cfg.trials < 1) throw validation_error("run_experiment: trials must be >= 1");

    // Assemble train/test: last test_n rows of the universe are held out.
    dataset full;
    if (cfg.source == "synthetic") {
        synthetic_spec spec = cfg.synth;
        spec.n = cfg.synth.n + cfg.test_n;
        full = generate_synthetic(spec, derive_seed(cfg.master_seed, salt::data)).data;
    } else {
        if (external == nullptr) {
            full = load_dataset(cfg.source);
        } else {
            full = *external;
        }
        if (full.size() <= cfg.test_n) {
            throw validation_error("run_experiment: dataset smaller than test_n");
        }
    }
    const std::size_t n_train = full.size() - cfg.test_n;

    dataset train_raw(full.feature_dim(), full.joints());
    dataset test(full.feature_dim(), full.joints());
    for (std::size_t i = 0; i < full.size(); ++i) {
        (i < n_train ? train_raw : test).append(full.row(i));
    }
    auto [train_norm, stats] = normalize_targets(train_raw);

    experiment_env env;
    env.train = &train_norm;
    env.test = &test;
    env.stats = &stats;
    env.cfg = &cfg;

    struct unit {
        strategy strat;
        int trial;
    };
    std::vector<unit> units;
    for (strategy s : cfg.strategies) {
        for (int t = 0; t < cfg.trials; ++t) units.push_back({s, t});
    }

    std::vector<std::vector<stage_record>> unit_records(units.size());
    auto run_unit = [&](std::size_t u) {
        const auto [strat, trial] = units[u];
        const std::uint64_t trial_seed =
            derive_seed(cfg.master_seed, salt::trial, static_cast<std::uint64_t>(trial));
        al_state state = make_initial_state(env, trial_seed);
        for (int stage = 0; stage <= cfg.stages; ++stage) {
            auto [next_state, rec, params] = run_stage(env, std::move(state), strat, trial_seed);
            state = std::move(next_state);
            unit_records[u].push_back(rec);
            if (sink) sink(strat, trial, rec);
        }
    };

    const int jobs = std::max(1, std::min<int>(cfg.jobs, static_cast<int>(units.size())));
    if (jobs == 1) {
        for (std::size_t u = 0; u < units.size(); ++u) run_unit(u);
    } else {
        std::atomic<std::size_t> next{0};
        std::exception_ptr first_error;
        std::mutex error_mu;
        std::vector<std::thread> workers;
        for (int j = 0; j < jobs; ++j) {
            workers.emplace_back([&] {
                while (true) {
                    const std::size_t u = next.fetch_add(1);
                    if (u >= units.size()) return;
                    try {
                        run_unit(u);
                    } catch (...) {
                        std::lock_guard<std::mutex> lock(error_mu);
                        if (!first_error) first_error = std::current_exception();
                        return;
                    }
                }
            });
        }
        for (auto& w : workers) w.join();
        if (first_error) std::rethrow_exception(first_error);
    }

    report rep;
    for (std::size_t u = 0; u < units.size(); ++u) {
        for (const auto& rec : unit_records[u]) {
            rep.rows.push_back(report_row{units[u].strat, units[u].trial, rec});
        }
    }
    rep.summary = aggregate_rows(rep.rows);
    return rep;
}

} // namespace alsim
