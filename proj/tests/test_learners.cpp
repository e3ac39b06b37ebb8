#include <doctest.h>

#include <cmath>
#include <vector>

#include "ecofair/error.hpp"
#include "ecofair/learners.hpp"
#include "ecofair/rng.hpp"

using namespace ecofair;

namespace {

// Two features; label follows x1 + 0.5 x2 > 0 with a little flip noise.
Dataset linear_data(std::size_t n, std::uint64_t seed) {
    Dataset ds;
    ds.feature_names = {"x1", "x2"};
    for (std::size_t i = 0; i < n; ++i) {
        const double x1 = 4.0 * counter_uniform(seed, 0, i) - 2.0;
        const double x2 = 4.0 * counter_uniform(seed, 1, i) - 2.0;
        int y = x1 + 0.5 * x2 > 0.0 ? 1 : 0;
        if (counter_uniform(seed, 2, i) < 0.05) y = 1 - y;
        const std::vector<double> x{x1, x2};
        ds.add_row(x, counter_uniform(seed, 3, i) < 0.5 ? 1 : 0, y);
    }
    return ds;
}

double accuracy(const Dataset& ds, const Predictions& p) {
    double hit = 0.0;
    for (std::size_t i = 0; i < ds.rows(); ++i) hit += p.labels[i] == ds.label[i];
    return hit / static_cast<double>(ds.rows());
}

}  // namespace

TEST_CASE("dataset basics") {
    Dataset ds;
    ds.feature_names = {"a"};
    const std::vector<double> x{1.0};
    ds.add_row(x, 0, 1);
    ds.add_row(x, 1, 0);
    const std::vector<double> wide{1.0, 2.0};
    CHECK_THROWS_AS(ds.add_row(wide, 0, 0), Error);
    const std::vector<std::size_t> pick{1};
    const Dataset sub = ds.subset(pick);
    CHECK(sub.rows() == 1);
    CHECK(sub.group[0] == 1);
}

TEST_CASE("logistic regression fits a linear rule") {
    const Dataset train_ds = linear_data(2000, 1);
    const Dataset test_ds = linear_data(2000, 2);
    LearnerConfig cfg;
    const FittedModel m = train(train_ds, cfg, 3);
    CHECK(m.arity == 3);
    CHECK(accuracy(test_ds, predict(m, test_ds)) > 0.9);
    CHECK(m.coefficients[0] > 0.0);
    CHECK(m.coefficients[0] > m.coefficients[1]);
    for (std::size_t i = 1; i < m.loss_trace.size(); ++i) CHECK(m.loss_trace[i] <= m.loss_trace[i - 1] + 1e-12);
    CHECK(train(train_ds, cfg, 3) == m);
    CHECK(m.training_seed == 3);
}

TEST_CASE("tree learns a threshold and respects depth") {
    Dataset ds;
    ds.feature_names = {"x"};
    for (int i = 0; i < 100; ++i) {
        const std::vector<double> x{static_cast<double>(i)};
        ds.add_row(x, i % 2, i >= 37 ? 1 : 0);
    }
    LearnerConfig cfg;
    cfg.kind = LearnerKind::tree;
    cfg.use_protected_feature = false;
    const FittedModel m = train(ds, cfg);
    CHECK(m.nodes[0].feature == 0);
    CHECK(m.nodes[0].threshold == doctest::Approx(36.5));
    CHECK(accuracy(ds, predict(m, ds)) == 1.0);

    const Dataset noisy = linear_data(1000, 4);
    for (int depth : {1, 2, 4}) {
        cfg.max_depth = depth;
        CHECK(train(noisy, cfg).depth() <= depth);
    }
}

TEST_CASE("prediction arity is checked") {
    const Dataset ds = linear_data(200, 5);
    const FittedModel m = train(ds, LearnerConfig{});
    Dataset other;
    other.feature_names = {"only"};
    const std::vector<double> x{0.0};
    other.add_row(x, 0, 0);
    try {
        (void)predict(m, other);
        FAIL("expected ArityMismatch");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ArityMismatch);
    }
}

TEST_CASE("model json round trip") {
    const Dataset ds = linear_data(500, 6);
    for (LearnerKind kind : {LearnerKind::logistic, LearnerKind::tree}) {
        LearnerConfig cfg;
        cfg.kind = kind;
        const FittedModel m = train(ds, cfg, 11);
        const FittedModel back = fitted_model_from_json(model_to_json(m));
        CHECK(predict(back, ds).scores == predict(m, ds).scores);
    }
    CHECK(learner_kind_from_string("tree") == LearnerKind::tree);
    CHECK_THROWS_AS(learner_kind_from_string("svm"), Error);
}

TEST_CASE("config validation") {
    LearnerConfig cfg;
    cfg.threshold = 1.5;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = LearnerConfig{};
    cfg.min_leaf = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
}
