#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "ecofair/audit.hpp"
#include "ecofair/error.hpp"
#include "ecofair/postprocess.hpp"
#include "ecofair/rng.hpp"

using namespace ecofair;

namespace {

StratumMasses random_masses(std::uint64_t seed, std::uint64_t i) {
    StratumMasses m;
    double total = 0.0;
    for (int a = 0; a < 2; ++a)
        for (int y = 0; y < 2; ++y)
            for (int p = 0; p < 2; ++p) {
                m.w[a][y][p] = 0.02 + counter_uniform(seed, static_cast<std::uint64_t>(4 * a + 2 * y + p), i);
                total += m.w[a][y][p];
            }
    for (auto& g : m.w)
        for (auto& y : g)
            for (double& v : y) v /= total;
    return m;
}

// Brute-force grid: three free entries, the fourth solved from equal TPR.
double grid_best_loss(const StratumMasses& m, int steps) {
    double best = 2.0;
    const double pos0 = m.deserving(0), pos1 = m.deserving(1);
    for (int a = 0; a <= steps; ++a)
        for (int b = 0; b <= steps; ++b)
            for (int c = 0; c <= steps; ++c) {
                DerivedPolicy p;
                p.p[0] = {a / static_cast<double>(steps), b / static_cast<double>(steps)};
                p.p[1][0] = c / static_cast<double>(steps);
                const double tpr0 = (m.w[0][1][0] * p.p[0][0] + m.w[0][1][1] * p.p[0][1]) / pos0;
                const double d = (tpr0 * pos1 - m.w[1][1][0] * p.p[1][0]) / m.w[1][1][1];
                if (d < 0.0 || d > 1.0) continue;
                p.p[1][1] = d;
                best = std::min(best, expected_loss(p, m));
            }
    return best;
}

}  // namespace

TEST_CASE("derived rates") {
    DerivedPolicy p;
    p.p[0] = {0.2, 0.9};
    const RatePoint r = p.derive(0, {0.1, 0.8});
    CHECK(r.fpr == doctest::Approx(0.9 * 0.1 + 0.2 * 0.9));
    CHECK(r.tpr == doctest::Approx(0.9 * 0.8 + 0.2 * 0.2));
    CHECK(DerivedPolicy::identity().is_identity());
    p.p[1][1] = 1.5;
    CHECK_THROWS_AS(p.validate(), Error);
}

TEST_CASE("flip candidates on the uniform instance") {
    const auto c = uniform_flip_candidates(0.2, 0.1, 0.1, 0.1);
    CHECK(c[0].cost == doctest::Approx(0.1375).epsilon(1e-13));
    CHECK(c[1].cost == doctest::Approx(0.025).epsilon(1e-13));
    CHECK(c[0].common_fn_rate == doctest::Approx(0.1));
    CHECK(c[1].common_fn_rate == doctest::Approx(0.2));

    const StratumMasses m = uniform_masses(0.2, 0.1, 0.1, 0.1);
    for (const auto& cand : c) {
        CHECK(1.0 - true_positive_rate(cand.policy, m, 0) == doctest::Approx(cand.common_fn_rate).epsilon(1e-13));
        CHECK(1.0 - true_positive_rate(cand.policy, m, 1) == doctest::Approx(cand.common_fn_rate).epsilon(1e-13));
    }
    const PolicyFitReport fit = fit_eo_policy(m);
    for (int a = 0; a < 2; ++a)
        for (int y = 0; y < 2; ++y) CHECK(fit.policy.at(a, y) == doctest::Approx(c[1].policy.at(a, y)).epsilon(1e-12));
}

TEST_CASE("already fair lender keeps the identity") {
    const StratumMasses m = uniform_masses(0.15, 0.15, 0.1, 0.3);
    const PolicyFitReport fit = fit_eo_policy(m);
    CHECK(fit.policy.is_identity());
    CHECK(fit.candidates_examined == 1);
}

TEST_CASE("vertex fit beats a coarse grid and equalizes tpr") {
    for (std::uint64_t i = 0; i < 20; ++i) {
        const StratumMasses m = random_masses(5, i);
        const PolicyFitReport fit = fit_eo_policy(m);
        CHECK(std::abs(true_positive_rate(fit.policy, m, 0) - true_positive_rate(fit.policy, m, 1)) <= 1e-9);
        CHECK(fit.expected_loss <= grid_best_loss(m, 25) + 1e-12);
        CHECK(fit.expected_loss == doctest::Approx(expected_loss(fit.policy, m)).epsilon(1e-14));
    }
}

TEST_CASE("fitting from a table") {
    PredictionTable t(1);
    const std::uint8_t s = 1;
    auto add = [&](int g, int y, double p) { t.add_row("r", g, y, {&s, 1}, {&p, 1}); };
    for (int i = 0; i < 10; ++i) {
        add(0, 1, i < 8 ? 1.0 : 0.0);
        add(1, 1, i < 5 ? 1.0 : 0.0);
        add(0, 0, i < 2 ? 1.0 : 0.0);
        add(1, 0, i < 1 ? 1.0 : 0.0);
    }
    const PolicyFitReport fit = fit_eo_policy(t, 0);
    const PredictionTable adjusted = apply_policy(fit.policy, t, 0);
    CHECK(empirical_fairness(adjusted).eo_per_lender[0] <= 1e-12);
    CHECK(empirical_fairness(t).eo_per_lender[0] == doctest::Approx(0.3));
}

TEST_CASE("unfittable strata") {
    PredictionTable t(1);
    const std::uint8_t s = 1;
    const double one = 1.0;
    t.add_row("a", 0, 1, {&s, 1}, {&one, 1});
    t.add_row("b", 1, 0, {&s, 1}, {&one, 1});
    try {
        (void)fit_eo_policy(t, 0);
        FAIL("expected UnfittableStratum");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::UnfittableStratum);
    }
    PredictionTable none(1);
    const std::uint8_t off = 0;
    const double zero = 0.0;
    none.add_row("a", 0, 1, {&off, 1}, {&zero, 1});
    CHECK_THROWS_AS(fit_eo_policy(none, 0), Error);
}

TEST_CASE("apply policy maps offer probabilities") {
    PredictionTable t(2);
    const std::vector<std::uint8_t> s{1, 0};
    t.add_row("a", 1, 1, s, std::vector<double>{0.4, 0.0});
    DerivedPolicy p;
    p.p[1] = {0.5, 0.9};
    const PredictionTable out = apply_policy(p, t, 0);
    CHECK(out.offer_prob(0, 0) == doctest::Approx(0.9 * 0.4 + 0.5 * 0.6));
    CHECK(apply_policy(p, t, 1).offer_prob(0, 1) == 0.0);
}

TEST_CASE("policy json round trip") {
    DerivedPolicy p;
    p.p = {{{0.1, 0.7}, {0.0, 1.0}}};
    CHECK(policy_from_json(policy_to_json(p)) == p);
    CHECK_THROWS_AS(policy_from_json(nlohmann::json::parse(R"({"p":{"g0_pred0":0.1}})")), Error);
    CHECK_THROWS_AS(policy_from_json(nlohmann::json::parse(
                        R"({"p":{"g0_pred0":2,"g0_pred1":1,"g1_pred0":0,"g1_pred1":1}})")),
                    Error);
}
