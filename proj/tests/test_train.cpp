#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>
#include <vector>

#include "alsim/dataset.hpp"
#include "alsim/model.hpp"
#include "alsim/predict.hpp"
#include "alsim/train.hpp"
#include "test_util.hpp"

using namespace alsim;

namespace {

std::vector<std::size_t> iota_rows(std::size_t n) {
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return rows;
}

// y = (2x, 2x, 2x), one joint.
dataset linear_task(std::size_t n, std::uint64_t seed) {
    dataset ds(1, 1);
    rng g(seed);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = g.uniform(-1.0, 1.0);
        ds.append(sample{{x}, {2.0 * x, 2.0 * x, 2.0 * x}});
    }
    return ds;
}

bool params_equal(const model_params& a, const model_params& b) {
    if (a.hidden.size() != b.hidden.size()) return false;
    for (std::size_t i = 0; i < a.hidden.size(); ++i) {
        if (a.hidden[i].w != b.hidden[i].w || a.hidden[i].b != b.hidden[i].b) return false;
    }
    return a.mean_head.w == b.mean_head.w && a.mean_head.b == b.mean_head.b &&
           a.alpha_head.w == b.alpha_head.w && a.alpha_head.b == b.alpha_head.b;
}

} // namespace

TEST_CASE("zero learning rate leaves parameters bitwise unchanged") {
    const dataset ds = linear_task(16, 1);
    model_params p = make_mlp(1, {4}, 1, false, dropout_mode::a, 0.2, false, 7);
    const model_params before = p;
    train_config cfg;
    cfg.learning_rate = 0.0;
    cfg.epochs = 1;
    cfg.batch_size = 4;
    cfg.loss = loss_kind::mse;
    cfg.seed = 11;
    const train_result res = train(std::move(p), ds, iota_rows(ds.size()), cfg);
    REQUIRE(params_equal(res.params, before));
}

TEST_CASE("training is deterministic per seed") {
    const dataset ds = linear_task(32, 2);
    train_config cfg;
    cfg.epochs = 5;
    cfg.batch_size = 8;
    cfg.loss = loss_kind::heteroscedastic;
    cfg.seed = 999;
    auto run = [&] {
        model_params p = make_mlp(1, {6}, 1, true, dropout_mode::a, 0.1, false, 3);
        return train(std::move(p), ds, iota_rows(ds.size()), cfg);
    };
    const train_result a = run();
    const train_result b = run();
    REQUIRE(params_equal(a.params, b.params));
    REQUIRE(a.epoch_loss == b.epoch_loss);
}

TEST_CASE("linear task converges to under 1% of the initial loss") {
    const dataset ds = linear_task(64, 3);
    model_params p = make_mlp(1, {}, 1, false, dropout_mode::none, 0.0, false, 5);
    const double initial = loss_mse(p, ds, iota_rows(ds.size()));

    train_config cfg;
    cfg.learning_rate = 0.05;
    cfg.epochs = 200;
    cfg.batch_size = 16;
    cfg.loss = loss_kind::mse;
    cfg.seed = 4;
    const train_result res = train(std::move(p), ds, iota_rows(ds.size()), cfg);
    const double final = loss_mse(res.params, ds, iota_rows(ds.size()));
    REQUIRE(final < 0.01 * initial);
}

TEST_CASE("diverging training aborts naming epoch and batch") {
    const dataset ds = linear_task(16, 6);
    model_params p = make_mlp(1, {4}, 1, false, dropout_mode::none, 0.0, false, 8);
    train_config cfg;
    cfg.learning_rate = 1e300;
    cfg.epochs = 50;
    cfg.batch_size = 8;
    cfg.loss = loss_kind::mse;
    REQUIRE_THROWS_MATCHES(train(std::move(p), ds, iota_rows(ds.size()), cfg), validation_error,
                           Catch::Matchers::MessageMatches(
                               Catch::Matchers::ContainsSubstring("epoch")));
}

TEST_CASE("empty labeled set is rejected") {
    const dataset ds = linear_task(4, 9);
    model_params p = make_mlp(1, {}, 1, false, dropout_mode::none, 0.0, false, 1);
    train_config cfg;
    REQUIRE_THROWS_AS(train(std::move(p), ds, std::vector<std::size_t>{}, cfg),
                      validation_error);
}

TEST_CASE("frozen-alpha heteroscedastic training tracks mse training") {
    // Gradients of the frozen objective are exactly half the mse gradients;
    // trajectories agree up to the Adam epsilon, which is set tiny here.
    synthetic_spec spec;
    spec.n = 48;
    spec.feature_dim = 3;
    spec.joints = 2;
    spec.noise.sd = 0.02;
    const auto gen = generate_synthetic(spec, 12);
    const auto rows = iota_rows(gen.data.size());

    train_config base;
    base.epochs = 6;
    base.batch_size = 16;
    base.learning_rate = 5e-3;
    base.adam_eps = 1e-12;
    base.seed = 77;

    model_params p_mse = make_mlp(3, {8}, 2, false, dropout_mode::a, 0.1, false, 21);
    model_params p_het = make_mlp(3, {8}, 2, true, dropout_mode::a, 0.1, false, 21);
    // Shared draw order: every common parameter starts identical.
    REQUIRE(p_mse.hidden[0].w == p_het.hidden[0].w);
    REQUIRE(p_mse.mean_head.w == p_het.mean_head.w);

    train_config cfg_mse = base;
    cfg_mse.loss = loss_kind::mse;
    train_config cfg_het = base;
    cfg_het.loss = loss_kind::heteroscedastic;
    cfg_het.alpha_frozen = true;

    const train_result r_mse = train(std::move(p_mse), gen.data, rows, cfg_mse);
    const train_result r_het = train(std::move(p_het), gen.data, rows, cfg_het);

    // Later batches are evaluated at slightly diverged parameters (epsilon in
    // the Adam denominator), so the exact 1/2 factor blurs past ~1e-12.
    for (std::size_t e = 0; e < r_mse.epoch_loss.size(); ++e) {
        REQUIRE(r_het.epoch_loss[e] ==
                Catch::Approx(0.5 * r_mse.epoch_loss[e]).epsilon(1e-9));
    }
    auto rel_close = [](const std::vector<double>& a, const std::vector<double>& b) {
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double denom = std::max({std::abs(a[i]), std::abs(b[i]), 1e-3});
            if (std::abs(a[i] - b[i]) / denom > 1e-6) return false;
        }
        return true;
    };
    REQUIRE(rel_close(r_mse.params.hidden[0].w, r_het.params.hidden[0].w));
    REQUIRE(rel_close(r_mse.params.hidden[0].b, r_het.params.hidden[0].b));
    REQUIRE(rel_close(r_mse.params.mean_head.w, r_het.params.mean_head.w));
    REQUIRE(rel_close(r_mse.params.mean_head.b, r_het.params.mean_head.b));
}

TEST_CASE("mc_predict") {
    SECTION("M = 1 gives zero epistemic variance") {
        model_params p = make_mlp(2, {4}, 1, true, dropout_mode::a, 0.3, false, 13);
        const std::vector<double> x = {0.5, -0.5};
        const prediction pred = mc_predict(p, x, 1, 5);
        for (double v : pred.epistemic_var) REQUIRE(v == 0.0);
        for (std::size_t c = 0; c < pred.combined_var.size(); ++c) {
            REQUIRE(pred.combined_var[c] == pred.aleatoric_var[c]);
        }
    }

    SECTION("dropout mode none makes all passes identical") {
        model_params p = make_mlp(2, {4}, 1, false, dropout_mode::none, 0.0, false, 14);
        const std::vector<double> x = {1.0, 2.0};
        const prediction pred = mc_predict(p, x, 7, 3);
        const std::vector<double> det = predict_mean(p, x);
        // mean-of-squares minus square-of-mean leaves ~ulp^1 residue even for
        // identical passes; anything above that indicates a real spread.
        for (std::size_t c = 0; c < det.size(); ++c) {
            REQUIRE(pred.mean[c] == Catch::Approx(det[c]).margin(1e-15));
            REQUIRE(pred.epistemic_var[c] < 1e-15);
        }
    }

    SECTION("hand reduction over passes {1, 3}") {
        const std::vector<double> passes = {1.0, 3.0};
        const prediction pred = reduce_mc_passes(passes, {}, 2, 1);
        REQUIRE(pred.mean[0] == 2.0);
        REQUIRE(pred.epistemic_var[0] == 1.0);
        REQUIRE(pred.aleatoric_var[0] == 0.0);
        REQUIRE(pred.combined_var[0] == 1.0);
    }

    SECTION("combined variance is the coordinate-wise sum") {
        model_params p = make_mlp(3, {6}, 2, true, dropout_mode::a, 0.2, false, 15);
        const std::vector<double> x = {0.1, 0.2, 0.3};
        const prediction pred = mc_predict(p, x, 25, 8);
        for (std::size_t c = 0; c < pred.mean.size(); ++c) {
            REQUIRE(pred.combined_var[c] == pred.epistemic_var[c] + pred.aleatoric_var[c]);
            REQUIRE(pred.epistemic_var[c] >= 0.0);
        }
    }

    SECTION("per-joint alpha broadcasts to its three coordinates") {
        model_params p;
        p.joints = 2;
        p.mode = dropout_mode::none;
        p.mean_head.resize(1, 6);
        p.alpha_head.resize(1, 2);
        p.alpha_head.b = {std::log(0.25), std::log(4.0)};
        const std::vector<double> x = {0.0};
        const prediction pred = mc_predict(p, x, 3, 1);
        for (int c = 0; c < 3; ++c) {
            REQUIRE(pred.aleatoric_var[c] == Catch::Approx(0.25).epsilon(1e-12));
            REQUIRE(pred.aleatoric_var[3 + c] == Catch::Approx(4.0).epsilon(1e-12));
        }
    }

    SECTION("same seed gives the same prediction, M < 1 is rejected") {
        model_params p = make_mlp(2, {4}, 1, false, dropout_mode::a, 0.4, false, 16);
        const std::vector<double> x = {0.7, -0.1};
        const prediction a = mc_predict(p, x, 11, 77);
        const prediction b = mc_predict(p, x, 11, 77);
        REQUIRE(a.mean == b.mean);
        REQUIRE(a.epistemic_var == b.epistemic_var);
        REQUIRE_THROWS_AS(mc_predict(p, x, 0, 1), validation_error);
    }
}
