#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "alsim/errors.hpp"
#include "alsim/model.hpp"
#include "alsim/rng.hpp"

namespace alsim {

// Monte-Carlo dropout summary for one input.
struct prediction {
    std::vector<double> mean;          // average of the stochastic passes
    std::vector<double> epistemic_var; // spread of the passes, population form
    std::vector<double> aleatoric_var; // average exp(alpha) per coordinate
    std::vector<double> combined_var;  // epistemic + aleatoric
    int passes = 0;
};

// Variance of the passes in the literal population form, mean of squares
// minus square of mean. Tiny negative cancellation residue clamps to zero.
inline prediction reduce_mc_passes(std::span<const double> pass_means,
                                   std::span<const double> pass_alvars, int m,
                                   std::size_t dim) {
    if (m < 1) throw validation_error("reduce_mc_passes: need at least one pass");
    prediction out;
    out.passes = m;
    out.mean.assign(dim, 0.0);
    out.epistemic_var.assign(dim, 0.0);
    out.aleatoric_var.assign(dim, 0.0);
    out.combined_var.assign(dim, 0.0);

    const double inv_m = 1.0 / static_cast<double>(m);
    for (std::size_t c = 0; c < dim; ++c) {
        double sum = 0.0, sum_sq = 0.0, sum_al = 0.0;
        for (int pass = 0; pass < m; ++pass) {
            const double y = pass_means[static_cast<std::size_t>(pass) * dim + c];
            sum += y;
            sum_sq += y * y;
            if (!pass_alvars.empty()) {
                sum_al += pass_alvars[static_cast<std::size_t>(pass) * dim + c];
            }
        }
        const double mu = sum * inv_m;
        double ep = sum_sq * inv_m - mu * mu;
        if (ep < 0.0) ep = 0.0;
        out.mean[c] = mu;
        out.epistemic_var[c] = ep;
        out.aleatoric_var[c] = sum_al * inv_m;
        out.combined_var[c] = ep + out.aleatoric_var[c];
    }
    return out;
}

// M stochastic passes from one seeded stream. A per-joint alpha head is
// broadcast to its three coordinates before averaging.
inline prediction mc_predict(const model_params& p, std::span<const double> x, int m,
                             std::uint64_t seed) {
    if (m < 1) throw validation_error("mc_predict: M must be >= 1");
    const std::size_t dim = static_cast<std::size_t>(p.output_dim());
    std::vector<double> pass_means(static_cast<std::size_t>(m) * dim);
    std::vector<double> pass_alvars;
    if (p.heteroscedastic()) pass_alvars.assign(static_cast<std::size_t>(m) * dim, 0.0);

    rng g(derive_seed(seed, 0x6d63));
    forward_workspace ws;
    for (int pass = 0; pass < m; ++pass) {
        forward_into(p, x, true, &g, ws);
        double* mrow = pass_means.data() + static_cast<std::size_t>(pass) * dim;
        for (std::size_t c = 0; c < dim; ++c) mrow[c] = ws.mean[c];
        if (p.heteroscedastic()) {
            double* arow = pass_alvars.data() + static_cast<std::size_t>(pass) * dim;
            if (p.alpha_per_coord) {
                for (std::size_t c = 0; c < dim; ++c) {
                    arow[c] = std::exp(detail::clamp_alpha(ws.alpha[c]));
                }
            } else {
                for (int k = 0; k < p.joints; ++k) {
                    const double av =
                        std::exp(detail::clamp_alpha(ws.alpha[static_cast<std::size_t>(k)]));
                    for (int c = 0; c < 3; ++c) {
                        arow[static_cast<std::size_t>(3 * k + c)] = av;
                    }
                }
            }
        }
    }
    return reduce_mc_passes(pass_means, pass_alvars, m, dim);
}

// Deterministic point prediction (no dropout masks).
inline std::vector<double> predict_mean(const model_params& p, std::span<const double> x) {
    forward_workspace ws;
    forward_into(p, x, false, nullptr, ws);
    return ws.mean;
}

} // namespace alsim
