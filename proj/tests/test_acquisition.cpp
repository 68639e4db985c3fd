#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <set>
#include <vector>

#include "alsim/acquisition.hpp"
#include "test_util.hpp"

using namespace alsim;

namespace {

pool_predictions make_preds(std::vector<std::size_t> indices,
                            std::vector<std::vector<double>> means,
                            std::vector<std::vector<double>> sds) {
    pool_predictions p;
    p.indices = std::move(indices);
    p.dim = means.empty() ? 0 : means[0].size();
    for (const auto& row : means) p.means.insert(p.means.end(), row.begin(), row.end());
    if (sds.empty()) {
        p.epistemic_sd.assign(p.means.size(), 0.0);
    } else {
        for (const auto& row : sds) {
            p.epistemic_sd.insert(p.epistemic_sd.end(), row.begin(), row.end());
        }
    }
    return p;
}

} // namespace

TEST_CASE("select_random") {
    SECTION("budget equal to subset size returns a seeded permutation") {
        const std::vector<std::size_t> subset = {10, 11, 12, 13, 14};
        rng g(42);
        const selection_result res = select_random(subset, 5, g);
        REQUIRE(res.chosen.size() == 5);
        std::set<std::size_t> unique(res.chosen.begin(), res.chosen.end());
        REQUIRE(unique == std::set<std::size_t>(subset.begin(), subset.end()));
    }

    SECTION("deterministic per seed") {
        const std::vector<std::size_t> subset = {1, 2, 3, 4, 5, 6, 7};
        rng g1(9), g2(9);
        REQUIRE(select_random(subset, 3, g1).chosen == select_random(subset, 3, g2).chosen);
    }

    SECTION("single draws from a pair are near-uniform over many seeds") {
        const std::vector<std::size_t> subset = {0, 1};
        std::size_t count_a = 0;
        const int draws = 100000;
        for (int i = 0; i < draws; ++i) {
            rng g(static_cast<std::uint64_t>(i) + 1);
            if (select_random(subset, 1, g).chosen[0] == 0) ++count_a;
        }
        const double freq = static_cast<double>(count_a) / draws;
        REQUIRE(freq > 0.49);
        REQUIRE(freq < 0.51);
    }

    SECTION("error contracts") {
        rng g(1);
        REQUIRE_THROWS_AS(select_random({}, 1, g), validation_error);
        const std::vector<std::size_t> subset = {3};
        REQUIRE_THROWS_AS(select_random(subset, 0, g), validation_error);
    }
}

TEST_CASE("select_uncertainty") {
    SECTION("equal scores fall back to ascending global index") {
        auto pool = make_preds({9, 4, 7, 1}, {{0.0}, {0.0}, {0.0}, {0.0}},
                               {{0.5}, {0.5}, {0.5}, {0.5}});
        const selection_result res = select_uncertainty(pool, 3);
        REQUIRE(res.chosen == std::vector<std::size_t>{1, 4, 7});
    }

    SECTION("a dominant row wins") {
        auto pool = make_preds({5, 6, 7}, {{0, 0}, {0, 0}, {0, 0}},
                               {{0, 0}, {1, 1}, {0, 0}});
        REQUIRE(select_uncertainty(pool, 1).chosen == std::vector<std::size_t>{6});
    }

    SECTION("matches a full descending sort of row sums") {
        rng g(2024);
        auto pool = testutil::random_preds(g, 20, 6, 100, 1.0);
        const selection_result res = select_uncertainty(pool, 5);

        std::vector<std::pair<double, std::size_t>> oracle;
        for (std::size_t r = 0; r < pool.size(); ++r) {
            double s = 0.0;
            for (double v : pool.sd_row(r)) s += v;
            oracle.emplace_back(s, pool.indices[r]);
        }
        std::sort(oracle.begin(), oracle.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        for (std::size_t i = 0; i < 5; ++i) REQUIRE(res.chosen[i] == oracle[i].second);
    }

    SECTION("empty pool is rejected") {
        pool_predictions pool;
        pool.dim = 1;
        REQUIRE_THROWS_AS(select_uncertainty(pool, 1), validation_error);
    }
}

TEST_CASE("select_coreset") {
    SECTION("hand trace: labeled {0}, pool {1, 5, 3}, budget 2") {
        auto labeled = make_preds({100}, {{0.0}}, {});
        auto pool = make_preds({0, 1, 2}, {{1.0}, {5.0}, {3.0}}, {});
        const selection_result res = select_coreset(labeled, pool, 2);
        // First pick: farthest from 0 is 5. Then distances to {0,5}: 1 -> 1, 3 -> 2.
        REQUIRE(res.chosen == std::vector<std::size_t>{1, 2});
        REQUIRE(res.scores[0] == 5.0);
        REQUIRE(res.scores[1] == 2.0);
    }

    SECTION("a pool point coincident with a labeled center is never preferred") {
        auto labeled = make_preds({50}, {{2.0, 2.0}}, {});
        auto pool = make_preds({0, 1}, {{2.0, 2.0}, {2.5, 2.0}}, {});
        REQUIRE(select_coreset(labeled, pool, 1).chosen == std::vector<std::size_t>{1});
    }

    SECTION("budget covering the pool returns a permutation") {
        rng g(7);
        auto labeled = testutil::random_preds(g, 3, 4, 0, 0.0);
        auto pool = testutil::random_preds(g, 12, 4, 10, 0.0);
        const selection_result res = select_coreset(labeled, pool, 50);
        REQUIRE(res.chosen.size() == 12);
        std::set<std::size_t> got(res.chosen.begin(), res.chosen.end());
        REQUIRE(got == std::set<std::size_t>(pool.indices.begin(), pool.indices.end()));
    }

    SECTION("matches the brute-force greedy oracle exactly") {
        rng g(31);
        for (int inst = 0; inst < 300; ++inst) {
            const std::size_t n_lab = 1 + g.index(8);
            const std::size_t n_pool = 2 + g.index(49);
            const std::size_t dim = 1 + g.index(5);
            auto labeled = testutil::random_preds(g, n_lab, dim, 0, 0.3);
            auto pool = testutil::random_preds(g, n_pool, dim, 1000, 0.3);
            const std::size_t budget = 1 + g.index(n_pool);
            const selection_result fast = select_coreset(labeled, pool, budget);
            const auto slow = testutil::brute_coreset(labeled, pool, budget);
            REQUIRE(fast.chosen == slow);
        }
    }

    SECTION("adding a labeled center never raises a min-distance score") {
        rng g(77);
        auto labeled = testutil::random_preds(g, 4, 3, 0, 0.0);
        auto pool = testutil::random_preds(g, 30, 3, 100, 0.0);
        const selection_result base = select_coreset(labeled, pool, 1);

        auto more = labeled;
        more.indices.push_back(99);
        for (std::size_t c = 0; c < more.dim; ++c) {
            more.means.push_back(g.uniform(-1, 1));
            more.epistemic_sd.push_back(0.0);
        }
        const selection_result bigger = select_coreset(more, pool, 1);
        REQUIRE(bigger.scores[0] <= base.scores[0]);
    }

    SECTION("error contracts") {
        auto pool = make_preds({0}, {{1.0}}, {});
        pool_predictions empty;
        empty.dim = 1;
        REQUIRE_THROWS_AS(select_coreset(empty, pool, 1), validation_error);
        REQUIRE_THROWS_AS(select_coreset(pool, empty, 1), validation_error);
    }
}

TEST_CASE("select_cke") {
    SECTION("eta = 0 collapses to select_coreset exactly") {
        rng g(55);
        for (int inst = 0; inst < 300; ++inst) {
            const std::size_t n_lab = 1 + g.index(6);
            const std::size_t n_pool = 2 + g.index(40);
            const std::size_t dim = 1 + g.index(4);
            auto labeled = testutil::random_preds(g, n_lab, dim, 0, 0.5);
            auto pool = testutil::random_preds(g, n_pool, dim, 500, 0.5);
            const std::size_t budget = 1 + g.index(n_pool);
            const selection_result coreset = select_coreset(labeled, pool, budget);
            const selection_result cke = select_cke(labeled, pool, budget, 0.0);
            REQUIRE(cke.chosen == coreset.chosen);
        }
    }

    SECTION("constant sd vectors preserve the coreset ordering") {
        rng g(66);
        auto labeled = testutil::random_preds(g, 3, 3, 0, 0.0);
        auto pool = testutil::random_preds(g, 25, 3, 100, 0.0);
        for (auto& v : labeled.epistemic_sd) v = 0.37;
        for (auto& v : pool.epistemic_sd) v = 0.37;
        const selection_result coreset = select_coreset(labeled, pool, 6);
        const selection_result cke = select_cke(labeled, pool, 6, 0.8);
        REQUIRE(cke.chosen == coreset.chosen);
    }

    SECTION("hand trace: the nearer but uncertain point wins") {
        auto labeled = make_preds({0}, {{0.0}}, {{0.0}});
        auto pool = make_preds({1, 2}, {{2.0}, {2.1}}, {{0.0}, {1.0}});
        const selection_result res = select_cke(labeled, pool, 1, 1.0);
        // Upper images: 2 and 2.6; lower images: 2 and 1.6; center at 0 both ways.
        // Scores 2 vs 2.6, so index 2 wins despite the closer mean.
        REQUIRE(res.chosen == std::vector<std::size_t>{2});
        REQUIRE(res.scores[0] == Catch::Approx(2.6).epsilon(1e-12));
    }

    SECTION("matches the brute-force oracle under both line-6 readings") {
        rng g(88);
        for (int inst = 0; inst < 150; ++inst) {
            const std::size_t n_lab = 1 + g.index(5);
            const std::size_t n_pool = 2 + g.index(30);
            const std::size_t dim = 1 + g.index(4);
            auto labeled = testutil::random_preds(g, n_lab, dim, 0, 0.4);
            auto pool = testutil::random_preds(g, n_pool, dim, 200, 0.4);
            const std::size_t budget = 1 + g.index(n_pool);
            const double eta = g.uniform(0.0, 1.0);
            for (auto scoring :
                 {cke_scoring::upper_at_lower_nearest, cke_scoring::upper_min}) {
                const selection_result fast = select_cke(labeled, pool, budget, eta, scoring);
                const auto slow = testutil::brute_cke(labeled, pool, budget, eta, scoring);
                REQUIRE(fast.chosen == slow);
            }
        }
    }

    SECTION("negative eta is rejected") {
        auto labeled = make_preds({0}, {{0.0}}, {});
        auto pool = make_preds({1}, {{1.0}}, {});
        REQUIRE_THROWS_AS(select_cke(labeled, pool, 1, -0.1), validation_error);
    }
}

TEST_CASE("translation invariance of the geometric selectors") {
    rng g(99);
    for (int inst = 0; inst < 50; ++inst) {
        const std::size_t dim = 1 + g.index(4);
        auto labeled = testutil::random_preds(g, 2 + g.index(4), dim, 0, 0.4);
        auto pool = testutil::random_preds(g, 5 + g.index(20), dim, 100, 0.4);
        const std::size_t budget = 1 + g.index(5);

        std::vector<double> offset(dim);
        for (auto& v : offset) v = g.uniform(-3.0, 3.0);
        auto shift = [&](pool_predictions p) {
            for (std::size_t r = 0; r < p.size(); ++r) {
                for (std::size_t c = 0; c < dim; ++c) p.means[r * dim + c] += offset[c];
            }
            return p;
        };
        const auto labeled_shift = shift(labeled);
        const auto pool_shift = shift(pool);

        REQUIRE(select_coreset(labeled, pool, budget).chosen ==
                select_coreset(labeled_shift, pool_shift, budget).chosen);
        REQUIRE(select_cke(labeled, pool, budget, 0.3).chosen ==
                select_cke(labeled_shift, pool_shift, budget, 0.3).chosen);
    }
}

TEST_CASE("selectors are pure functions of their inputs") {
    rng g(123);
    auto labeled = testutil::random_preds(g, 3, 2, 0, 0.2);
    auto pool = testutil::random_preds(g, 15, 2, 50, 0.2);
    REQUIRE(select_coreset(labeled, pool, 4).chosen == select_coreset(labeled, pool, 4).chosen);
    REQUIRE(select_cke(labeled, pool, 4, 0.3).chosen == select_cke(labeled, pool, 4, 0.3).chosen);
    REQUIRE(select_uncertainty(pool, 4).chosen == select_uncertainty(pool, 4).chosen);
}
