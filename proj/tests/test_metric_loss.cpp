#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "more/error.hpp"
#include "more/metric_loss.hpp"
#include "support.hpp"

#include <numeric>

using namespace more;
using more::test::brute_force_rll;

namespace {

// Places points on a line inside R^2 so distances are exact differences.
Matrix on_line(std::initializer_list<double> xs) {
    Matrix m(xs.size(), 2);
    std::size_t i = 0;
    for (double x : xs) m(i++, 0) = x;
    return m;
}

} // namespace

TEST_CASE("pairwise distances: identical rows, antipodes, brute force") {
    Matrix x(3, 2);
    x(0, 0) = 1.0;
    x(1, 0) = 1.0;
    x(2, 0) = -1.0;
    const auto d = pairwise_distances(x);
    CHECK(d(0, 1) == 0.0);
    CHECK(d(0, 2) == doctest::Approx(2.0).epsilon(1e-15));

    std::mt19937_64 rng(11);
    const Matrix r = more::test::random_unit_rows(5, 8, rng);
    const auto dr = pairwise_distances(r);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(dr(i, i) == 0.0);
        for (std::size_t j = 0; j < 5; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < 8; ++k) s += (r(i, k) - r(j, k)) * (r(i, k) - r(j, k));
            CHECK(std::abs(dr(i, j) - std::sqrt(s)) <= 1e-12);
            CHECK(dr(i, j) == dr(j, i));
            CHECK(dr(i, j) <= 2.0 + 1e-9);
        }
    }
}

TEST_CASE("negative weights") {
    LossConfig cfg;
    // anchor 0 at the origin; negatives at 1.0 and 1.1
    const auto d = pairwise_distances(on_line({0.0, 1.0, 1.1, 0.5}));
    const std::vector<std::size_t> two{1, 2};
    const auto w = negative_weights(0, d, two, cfg);
    CHECK(w[0] == doctest::Approx(0.7311).epsilon(1e-4));
    CHECK(w[1] == doctest::Approx(0.2689).epsilon(1e-4));
    CHECK(w[0] == doctest::Approx(std::exp(2.0) / (std::exp(2.0) + std::exp(1.0))).epsilon(1e-13));

    SUBCASE("zero temperature is uniform") {
        cfg.temperature = 0.0;
        const std::vector<std::size_t> three{1, 2, 3};
        for (double v : negative_weights(0, d, three, cfg)) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    }
    SUBCASE("singleton") {
        const std::vector<std::size_t> one{2};
        CHECK(negative_weights(0, d, one, cfg) == std::vector<double>{1.0});
    }
    SUBCASE("empty set is an error") {
        CHECK_THROWS_WITH_AS(negative_weights(0, d, std::vector<std::size_t>{}, cfg), "no informative negatives",
                             ValidationError);
    }
    SUBCASE("hardest negative's weight grows with temperature") {
        double prev = 0.0;
        for (double t : {0.0, 1.0, 5.0, 10.0, 50.0, 200.0, 1000.0}) {
            cfg.temperature = t;
            const double w0 = negative_weights(0, d, two, cfg)[0];
            CHECK(w0 >= prev);
            prev = w0;
        }
        CHECK(prev == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("rll_anchor hand cases") {
    const LossConfig cfg;
    const std::vector<std::int32_t> y{0, 0, 1};

    SUBCASE("inside both boundaries contributes nothing") {
        const auto d = pairwise_distances(on_line({0.0, 0.5, 1.5}));
        const auto b = rll_anchor(0, d, y, cfg);
        CHECK(b.positive_loss == 0.0);
        CHECK(b.negative_loss == 0.0);
        CHECK(b.positives.empty());
        CHECK(b.negatives.empty());
    }
    SUBCASE("one violating positive and one violating negative at d = 1") {
        // anchor at 0, positive at +1, negative at -1
        const auto d = pairwise_distances(on_line({0.0, 1.0, -1.0}));
        const auto b = rll_anchor(0, d, y, cfg);
        CHECK(b.positive_loss == doctest::Approx(0.2).epsilon(1e-14));
        CHECK(b.negative_loss == doctest::Approx(0.2).epsilon(1e-14));
        CHECK(b.weights == std::vector<double>{1.0});
        CHECK(b.combined(cfg) == doctest::Approx(0.2).epsilon(1e-14));
    }
    SUBCASE("boundary points are not informative") {
        const auto d = pairwise_distances(on_line({0.0, 0.8, 1.2}));
        const auto b = rll_anchor(0, d, y, cfg);
        CHECK(b.positives.empty());
        CHECK(b.negatives.empty());
    }
    SUBCASE("margin between boundaries") {
        CHECK(cfg.alpha_n - cfg.alpha_p == doctest::Approx(0.4).epsilon(1e-15));
    }
}

TEST_CASE("rll_batch hand cases") {
    const LossConfig cfg;
    SUBCASE("three collinear points") {
        // a=0 (L0), b=+1 (L0), c=-1 (L1): d_ab = d_ac = 1, d_bc = 2.
        const Matrix x = on_line({0.0, 1.0, -1.0});
        const std::vector<std::int32_t> y{0, 0, 1};
        // anchor a: 0.5*0.2 + 0.5*0.2; anchor b: positive 0.2 -> 0.1, negative at 2 -> 0;
        // anchor c: negatives at 1 (a) and 2 (b) -> only a, 0.2 -> 0.1.
        const double expected = 0.2 + 0.1 + 0.1;
        CHECK(rll_batch(x, y, cfg).loss == doctest::Approx(expected).epsilon(1e-14));
        CHECK(brute_force_rll(x, y, cfg) == doctest::Approx(expected).epsilon(1e-14));
    }
    SUBCASE("collapsed same-label points have zero loss and zero gradient") {
        Matrix x(5, 3, 0.0);
        for (std::size_t i = 0; i < 5; ++i) x(i, 1) = 1.0;
        const std::vector<std::int32_t> y(5, 7);
        const auto r = rll_batch(x, y, cfg);
        CHECK(r.loss == 0.0);
        for (double g : r.grad.data) CHECK(g == 0.0);
    }
}

TEST_CASE("rll_batch matches the brute-force evaluator") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 200; ++trial) {
        std::uniform_int_distribution<std::size_t> md(2, 12), dd(1, 8);
        const std::size_t m = md(rng), d = dd(rng);
        const Matrix x = more::test::random_unit_rows(m, d, rng);
        std::uniform_int_distribution<std::int32_t> ld(0, 3);
        std::vector<std::int32_t> y(m);
        for (auto& v : y) v = ld(rng);
        LossConfig cfg;
        std::uniform_real_distribution<double> u(0.0, 1.0);
        cfg.alpha_p = 0.2 + 0.8 * u(rng);
        cfg.alpha_n = cfg.alpha_p + 0.1 + u(rng);
        cfg.lambda = u(rng);
        cfg.temperature = 20.0 * u(rng);
        CHECK(std::abs(rll_batch(x, y, cfg).loss - brute_force_rll(x, y, cfg)) <= 1e-10);
    }
}

TEST_CASE("rll properties") {
    std::mt19937_64 rng(77);
    const LossConfig cfg;
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t m = 8;
        const Matrix x = more::test::random_unit_rows(m, 4, rng);
        std::vector<std::int32_t> y(m);
        for (std::size_t i = 0; i < m; ++i) y[i] = static_cast<std::int32_t>(rng() % 3);
        const auto base = rll_batch(x, y, cfg);
        CHECK(base.loss >= 0.0);

        // zero iff every pair satisfies its boundary
        const auto d = pairwise_distances(x);
        bool satisfied = true;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j)
                if (i != j) satisfied &= (y[i] == y[j]) ? d(i, j) <= cfg.alpha_p : d(i, j) >= cfg.alpha_n;
        CHECK((base.loss == 0.0) == satisfied);

        // weight normalisation per anchor
        for (std::size_t i = 0; i < m; ++i) {
            const auto b = rll_anchor(i, d, y, cfg);
            if (!b.weights.empty()) {
                CHECK(std::abs(std::accumulate(b.weights.begin(), b.weights.end(), 0.0) - 1.0) <= 1e-12);
                for (double w : b.weights) CHECK(w > 0.0);
            }
        }

        // label permutation equivariance
        std::vector<std::int32_t> relabeled(y);
        for (auto& v : relabeled) v = (v + 1) % 3 + 10;
        CHECK(rll_batch(x, relabeled, cfg).loss == doctest::Approx(base.loss).epsilon(1e-13));

        // row permutation invariance, gradient rows follow the rows
        std::vector<std::size_t> perm(m);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        Matrix xp(m, x.cols);
        std::vector<std::int32_t> yp(m);
        for (std::size_t i = 0; i < m; ++i) {
            std::copy(x.row(perm[i]).begin(), x.row(perm[i]).end(), xp.row(i).begin());
            yp[i] = y[perm[i]];
        }
        const auto permuted = rll_batch(xp, yp, cfg);
        CHECK(permuted.loss == doctest::Approx(base.loss).epsilon(1e-13));
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t k = 0; k < x.cols; ++k)
                CHECK(permuted.grad(i, k) == doctest::Approx(base.grad(perm[i], k)).epsilon(1e-12));
    }
}

TEST_CASE("rll gradient matches central differences with frozen weights") {
    for (std::uint64_t seed = 1; seed <= 12; ++seed) {
        CAPTURE(seed);
        CHECK(more::test::rll_gradient_error(seed) < 1e-4);
    }
}

TEST_CASE("serial and parallel rll agree bit for bit") {
    std::mt19937_64 rng(5);
    const Matrix x = more::test::random_unit_rows(40, 16, rng);
    std::vector<std::int32_t> y(40);
    for (std::size_t i = 0; i < 40; ++i) y[i] = static_cast<std::int32_t>(i / 5);
    const auto a = rll_batch(x, y, LossConfig{}, Exec::serial);
    const auto b = rll_batch(x, y, LossConfig{}, Exec::parallel);
    CHECK(a.loss == b.loss);
    CHECK(a.grad == b.grad);
}

TEST_CASE("loss config validation names the key") {
    LossConfig c;
    c.alpha_n = 0.5;
    try {
        c.validate();
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.key().rfind("loss.", 0) == 0);
    }
    c = LossConfig{};
    c.lambda = 1.5;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = LossConfig{};
    c.temperature = -1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}
