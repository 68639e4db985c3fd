#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "alsim/errors.hpp"
#include "alsim/model.hpp"
#include "alsim/rng.hpp"

namespace alsim {

struct train_config {
    double learning_rate = 1e-3;
    int batch_size = 128;
    int epochs = 100;
    loss_kind loss = loss_kind::heteroscedastic;
    std::uint64_t seed = 0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    // Diagnostic switch: pins alpha to 0 during training, which reduces the
    // heteroscedastic objective to exactly half the MSE objective.
    bool alpha_frozen = false;

    void validate() const {
        if (learning_rate < 0.0) throw validation_error("train: learning_rate must be >= 0");
        if (batch_size < 1) throw validation_error("train: batch_size must be >= 1");
        if (epochs < 1) throw validation_error("train: epochs must be >= 1");
    }
};

struct train_result {
    model_params params;
    std::vector<double> epoch_loss; // mean stochastic training loss per epoch
};

namespace detail {

struct adam_state {
    gradients m;
    gradients v;
    long long step = 0;

    explicit adam_state(const model_params& p)
        : m(gradients::zeros_like(p)), v(gradients::zeros_like(p)) {}
};

inline void adam_update_layer(layer& p, const layer& g, layer& m, layer& v, double lr,
                              double b1, double b2, double eps, double bc1, double bc2) {
    for (std::size_t i = 0; i < p.w.size(); ++i) {
        m.w[i] = b1 * m.w[i] + (1.0 - b1) * g.w[i];
        v.w[i] = b2 * v.w[i] + (1.0 - b2) * g.w[i] * g.w[i];
        p.w[i] -= lr * (m.w[i] / bc1) / (std::sqrt(v.w[i] / bc2) + eps);
    }
    for (std::size_t i = 0; i < p.b.size(); ++i) {
        m.b[i] = b1 * m.b[i] + (1.0 - b1) * g.b[i];
        v.b[i] = b2 * v.b[i] + (1.0 - b2) * g.b[i] * g.b[i];
        p.b[i] -= lr * (m.b[i] / bc1) / (std::sqrt(v.b[i] / bc2) + eps);
    }
}

} // namespace detail

// Minibatch Adam on the configured loss with dropout active. Fully
// deterministic given cfg.seed: the epoch shuffles come from one derived
// stream and every batch gets its own derived mask seed.
template <class View>
train_result train(model_params params, const View& data, std::span<const std::size_t> rows,
                   const train_config& cfg) {
    cfg.validate();
    params.validate();
    if (rows.empty()) throw validation_error("train: empty labeled set");
    if (cfg.loss == loss_kind::heteroscedastic && !params.heteroscedastic() &&
        !cfg.alpha_frozen) {
        throw contract_error("train: heteroscedastic loss requires a log-variance head");
    }

    detail::adam_state st(params);
    gradients grads = gradients::zeros_like(params);
    rng shuffle_rng(derive_seed(cfg.seed, 0x5f0f));

    std::vector<std::size_t> order(rows.begin(), rows.end());
    const std::size_t n = order.size();
    const std::size_t bsz = static_cast<std::size_t>(cfg.batch_size);
    const std::size_t n_batches = (n + bsz - 1) / bsz;

    train_result result;
    result.epoch_loss.reserve(static_cast<std::size_t>(cfg.epochs));

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        for (std::size_t b = 0; b < n_batches; ++b) {
            const std::size_t lo = b * bsz;
            const std::size_t hi = std::min(lo + bsz, n);
            const std::span<const std::size_t> batch(order.data() + lo, hi - lo);
            const std::uint64_t mask_seed =
                derive_seed(cfg.seed, 0xba7c, static_cast<std::uint64_t>(epoch) * n_batches + b);
            const double loss = loss_and_grad(params, data, batch, cfg.loss, mask_seed,
                                              cfg.alpha_frozen, &grads);
            if (!std::isfinite(loss)) {
                throw validation_error("train: non-finite loss at epoch " +
                                       std::to_string(epoch) + ", batch " + std::to_string(b));
            }
            ++st.step;
            const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(st.step));
            const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(st.step));
            for (std::size_t i = 0; i < params.hidden.size(); ++i) {
                detail::adam_update_layer(params.hidden[i], grads.hidden[i], st.m.hidden[i],
                                          st.v.hidden[i], cfg.learning_rate, cfg.adam_beta1,
                                          cfg.adam_beta2, cfg.adam_eps, bc1, bc2);
            }
            detail::adam_update_layer(params.mean_head, grads.mean_head, st.m.mean_head,
                                      st.v.mean_head, cfg.learning_rate, cfg.adam_beta1,
                                      cfg.adam_beta2, cfg.adam_eps, bc1, bc2);
            if (params.alpha_head.present() && !cfg.alpha_frozen &&
                cfg.loss == loss_kind::heteroscedastic) {
                detail::adam_update_layer(params.alpha_head, grads.alpha_head, st.m.alpha_head,
                                          st.v.alpha_head, cfg.learning_rate, cfg.adam_beta1,
                                          cfg.adam_beta2, cfg.adam_eps, bc1, bc2);
            }
            loss_sum += loss * static_cast<double>(hi - lo);
        }
        result.epoch_loss.push_back(loss_sum / static_cast<double>(n));
    }
    result.params = std::move(params);
    return result;
}

} // namespace alsim
