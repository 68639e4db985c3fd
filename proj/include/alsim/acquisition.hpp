#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "alsim/errors.hpp"
#include "alsim/rng.hpp"

namespace alsim {

// MC-dropout summaries for a set of samples, addressed by global dataset
// index. Means and per-coordinate epistemic standard deviations, row-major.
struct pool_predictions {
    std::vector<std::size_t> indices;
    std::size_t dim = 0;
    std::vector<double> means;
    std::vector<double> epistemic_sd;

    std::size_t size() const { return indices.size(); }

    std::span<const double> mean_row(std::size_t r) const {
        return {means.data() + r * dim, dim};
    }
    std::span<const double> sd_row(std::size_t r) const {
        return {epistemic_sd.data() + r * dim, dim};
    }

    void validate() const {
        if (means.size() != indices.size() * dim || epistemic_sd.size() != indices.size() * dim) {
            throw shape_error("pool_predictions: row count does not match index count");
        }
        for (double v : means) {
            if (!std::isfinite(v)) throw validation_error("pool_predictions: non-finite mean");
        }
        for (double v : epistemic_sd) {
            if (!std::isfinite(v) || v < 0.0) {
                throw validation_error("pool_predictions: epistemic sd must be finite and >= 0");
            }
        }
    }
};

// Budgeted pick; `chosen` preserves selection order, `scores` holds the
// winning score of each greedy step where the strategy has one.
struct selection_result {
    std::vector<std::size_t> chosen;
    std::vector<double> scores;
};

// Which value CKE maximises in its selection step. The default evaluates the
// upper-shifted distance at the lower-shifted nearest center; the alternative
// maximises the upper-shifted minimum itself.
enum class cke_scoring { upper_at_lower_nearest, upper_min };

enum class strategy { random, uncertainty, coreset, cke };

inline std::string to_string(strategy s) {
    switch (s) {
        case strategy::random: return "random";
        case strategy::uncertainty: return "uncertainty";
        case strategy::coreset: return "coreset";
        case strategy::cke: return "cke";
    }
    return "?";
}

inline strategy parse_strategy(std::string_view name) {
    if (name == "random") return strategy::random;
    if (name == "uncertainty") return strategy::uncertainty;
    if (name == "coreset") return strategy::coreset;
    if (name == "cke") return strategy::cke;
    throw validation_error("unknown strategy '" + std::string(name) + "'");
}

inline selection_result select_random(std::span<const std::size_t> subset, std::size_t budget,
                                      rng& gen) {
    if (subset.empty()) throw validation_error("select_random: empty candidate subset");
    if (budget < 1) throw validation_error("select_random: budget must be >= 1");
    selection_result res;
    res.chosen = gen.sample_without_replacement({subset.begin(), subset.end()}, budget);
    return res;
}

inline selection_result select_uncertainty(const pool_predictions& pool, std::size_t budget) {
    if (pool.size() == 0) throw validation_error("select_uncertainty: empty pool");
    if (budget < 1) throw validation_error("select_uncertainty: budget must be >= 1");
    pool.validate();

    struct scored {
        double score;
        std::size_t index;
    };
    std::vector<scored> rows(pool.size());
    for (std::size_t r = 0; r < pool.size(); ++r) {
        double sum = 0.0;
        for (double v : pool.sd_row(r)) sum += v;
        rows[r] = {sum, pool.indices[r]};
    }
    std::sort(rows.begin(), rows.end(), [](const scored& a, const scored& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.index < b.index;
    });

    selection_result res;
    const std::size_t take = std::min(budget, rows.size());
    for (std::size_t i = 0; i < take; ++i) {
        res.chosen.push_back(rows[i].index);
        res.scores.push_back(rows[i].score);
    }
    return res;
}

namespace detail {

inline double sq_dist(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t c = 0; c < a.size(); ++c) {
        const double d = a[c] - b[c];
        acc += d * d;
    }
    return acc;
}

} // namespace detail

// k-Center Greedy over Euclidean distance in prediction space. The labeled
// means are the initial centers; each step promotes the pool point farthest
// from its nearest center (ties to the lower global index). Min distances are
// cached per pool item and refreshed only against the newly added center.
inline selection_result select_coreset(const pool_predictions& labeled,
                                       const pool_predictions& pool, std::size_t budget) {
    if (labeled.size() == 0) throw validation_error("select_coreset: empty labeled set");
    if (pool.size() == 0) throw validation_error("select_coreset: empty pool");
    if (budget < 1) throw validation_error("select_coreset: budget must be >= 1");
    if (labeled.dim != pool.dim) {
        throw shape_error("select_coreset: labeled and pool prediction widths differ");
    }
    labeled.validate();
    pool.validate();

    const std::size_t n = pool.size();
    std::vector<double> min_sq(n, std::numeric_limits<double>::infinity());
    std::vector<char> taken(n, 0);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < labeled.size(); ++j) {
            min_sq[r] = std::min(min_sq[r], detail::sq_dist(pool.mean_row(r), labeled.mean_row(j)));
        }
    }

    selection_result res;
    const std::size_t take = std::min(budget, n);
    for (std::size_t pick = 0; pick < take; ++pick) {
        std::size_t best = n;
        for (std::size_t r = 0; r < n; ++r) {
            if (taken[r]) continue;
            if (best == n || min_sq[r] > min_sq[best] ||
                (min_sq[r] == min_sq[best] && pool.indices[r] < pool.indices[best])) {
                best = r;
            }
        }
        taken[best] = 1;
        res.chosen.push_back(pool.indices[best]);
        res.scores.push_back(std::sqrt(min_sq[best]));
        for (std::size_t r = 0; r < n; ++r) {
            if (taken[r]) continue;
            min_sq[r] = std::min(min_sq[r], detail::sq_dist(pool.mean_row(r), pool.mean_row(best)));
        }
    }
    return res;
}

// k-Center Greedy on epistemically shifted points. Every item carries an
// upper image mean + (eta/2)*sd and a lower image mean - (eta/2)*sd; the
// nearest center is found among lower images, and the selection score is the
// upper-image distance to that center (or the upper-image minimum under the
// alternative reading). eta = 0 collapses both images onto the means and the
// selection reduces to select_coreset exactly.
inline selection_result select_cke(const pool_predictions& labeled, const pool_predictions& pool,
                                   std::size_t budget, double eta,
                                   cke_scoring scoring = cke_scoring::upper_at_lower_nearest) {
    if (labeled.size() == 0) throw validation_error("select_cke: empty labeled set");
    if (pool.size() == 0) throw validation_error("select_cke: empty pool");
    if (budget < 1) throw validation_error("select_cke: budget must be >= 1");
    if (eta < 0.0) throw validation_error("select_cke: eta must be >= 0");
    if (labeled.dim != pool.dim) {
        throw shape_error("select_cke: labeled and pool prediction widths differ");
    }
    labeled.validate();
    pool.validate();

    const std::size_t dim = pool.dim;
    const double h = eta / 2.0;
    auto shift = [dim, h](const pool_predictions& p, bool upper) {
        std::vector<double> out(p.means.size());
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = upper ? p.means[i] + h * p.epistemic_sd[i]
                           : p.means[i] - h * p.epistemic_sd[i];
        }
        return out;
    };

    const std::vector<double> pool_up = shift(pool, true);
    const std::vector<double> pool_lo = shift(pool, false);
    // Center images, labeled block first; picked pool images are appended.
    std::vector<double> centers_up = shift(labeled, true);
    std::vector<double> centers_lo = shift(labeled, false);

    auto center_up = [&](std::size_t j) {
        return std::span<const double>(centers_up.data() + j * dim, dim);
    };
    auto center_lo = [&](std::size_t j) {
        return std::span<const double>(centers_lo.data() + j * dim, dim);
    };
    auto pool_up_row = [&](std::size_t r) {
        return std::span<const double>(pool_up.data() + r * dim, dim);
    };
    auto pool_lo_row = [&](std::size_t r) {
        return std::span<const double>(pool_lo.data() + r * dim, dim);
    };

    const std::size_t n = pool.size();
    std::vector<double> lo_min_sq(n, std::numeric_limits<double>::infinity());
    std::vector<double> up_min_sq(n, std::numeric_limits<double>::infinity());
    std::vector<std::size_t> lo_arg(n, 0);
    std::vector<char> taken(n, 0);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < labeled.size(); ++j) {
            const double dl = detail::sq_dist(pool_lo_row(r), center_lo(j));
            if (dl < lo_min_sq[r]) {
                lo_min_sq[r] = dl;
                lo_arg[r] = j;
            }
            up_min_sq[r] = std::min(up_min_sq[r], detail::sq_dist(pool_up_row(r), center_up(j)));
        }
    }

    auto score_of = [&](std::size_t r) {
        if (scoring == cke_scoring::upper_min) return up_min_sq[r];
        return detail::sq_dist(pool_up_row(r), center_up(lo_arg[r]));
    };

    selection_result res;
    const std::size_t take = std::min(budget, n);
    for (std::size_t pick = 0; pick < take; ++pick) {
        std::size_t best = n;
        double best_score = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            if (taken[r]) continue;
            const double s = score_of(r);
            if (best == n || s > best_score ||
                (s == best_score && pool.indices[r] < pool.indices[best])) {
                best = r;
                best_score = s;
            }
        }
        taken[best] = 1;
        res.chosen.push_back(pool.indices[best]);
        res.scores.push_back(std::sqrt(best_score));

        const std::size_t new_center = centers_up.size() / dim;
        centers_up.insert(centers_up.end(), pool_up_row(best).begin(), pool_up_row(best).end());
        centers_lo.insert(centers_lo.end(), pool_lo_row(best).begin(), pool_lo_row(best).end());
        for (std::size_t r = 0; r < n; ++r) {
            if (taken[r]) continue;
            const double dl = detail::sq_dist(pool_lo_row(r), center_lo(new_center));
            if (dl < lo_min_sq[r]) {
                lo_min_sq[r] = dl;
                lo_arg[r] = new_center;
            }
            up_min_sq[r] =
                std::min(up_min_sq[r], detail::sq_dist(pool_up_row(r), center_up(new_center)));
        }
    }
    return res;
}

} // namespace alsim
