#include "ecofair/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ecofair/error.hpp"

namespace ecofair {

namespace {

constexpr double kLossTie = 1e-12;
constexpr double kBoxSlack = 1e-12;
constexpr double kEqualTpr = 1e-12;

using Vertex = std::array<double, 4>;  // (p00, p01, p10, p11)

DerivedPolicy to_policy(const Vertex& x) {
    DerivedPolicy policy;
    policy.p = {{{x[0], x[1]}, {x[2], x[3]}}};
    return policy;
}

void require_rate(double r, const char* what) {
    ECOFAIR_REQUIRE(std::isfinite(r) && r >= 0.0 && r <= 1.0, ErrorCode::InvalidArgument,
                    std::string(what) + " must lie in [0,1]");
}

}  // namespace

RatePoint DerivedPolicy::derive(int group, RatePoint base) const {
    const double p0 = at(group, 0);
    const double p1 = at(group, 1);
    return {p1 * base.fpr + p0 * (1.0 - base.fpr), p1 * base.tpr + p0 * (1.0 - base.tpr)};
}

bool DerivedPolicy::is_identity() const { return *this == identity(); }

void DerivedPolicy::validate() const {
    for (const auto& row : p) {
        for (double v : row) {
            ECOFAIR_REQUIRE(std::isfinite(v) && v >= 0.0 && v <= 1.0, ErrorCode::InvalidArgument,
                            "policy entries must lie in [0,1]");
        }
    }
}

StratumMasses stratum_masses(const PredictionTable& table, std::size_t lender) {
    ECOFAIR_REQUIRE(lender < table.lenders(), ErrorCode::InvalidArgument,
                    "lender index " + std::to_string(lender + 1) + " out of range");
    StratumMasses m;
    double total = 0.0;
    for (std::size_t i = 0; i < table.size(); ++i) {
        if (!table.served(i, lender)) continue;
        const double p = table.offer_prob(i, lender);
        auto& cell = m.w[table.group(i)][table.label(i)];
        cell[1] += p;
        cell[0] += 1.0 - p;
        total += 1.0;
    }
    ECOFAIR_REQUIRE(total > 0.0, ErrorCode::UnfittableStratum,
                    "lender " + std::to_string(lender + 1) + " serves no rows");
    for (auto& g : m.w)
        for (auto& y : g)
            for (double& v : y) v /= total;
    return m;
}

StratumMasses uniform_masses(double fn_rate_g0, double fn_rate_g1, double fp_rate_g0, double fp_rate_g1) {
    require_rate(fn_rate_g0, "fn_rate_g0");
    require_rate(fn_rate_g1, "fn_rate_g1");
    require_rate(fp_rate_g0, "fp_rate_g0");
    require_rate(fp_rate_g1, "fp_rate_g1");
    StratumMasses m;
    const std::array<double, 2> fn{fn_rate_g0, fn_rate_g1};
    const std::array<double, 2> fp{fp_rate_g0, fp_rate_g1};
    for (int a = 0; a < 2; ++a) {
        m.w[a][1] = {0.25 * fn[a], 0.25 * (1.0 - fn[a])};
        m.w[a][0] = {0.25 * (1.0 - fp[a]), 0.25 * fp[a]};
    }
    return m;
}

double expected_loss(const DerivedPolicy& policy, const StratumMasses& masses) {
    double loss = 0.0;
    for (int a = 0; a < 2; ++a) {
        for (int yhat = 0; yhat < 2; ++yhat) {
            const double p = policy.at(a, yhat);
            loss += masses.w[a][0][yhat] * p + masses.w[a][1][yhat] * (1.0 - p);
        }
    }
    return loss;
}

double true_positive_rate(const DerivedPolicy& policy, const StratumMasses& masses, int group) {
    const double pos = masses.deserving(group);
    ECOFAIR_REQUIRE(pos > 0.0, ErrorCode::UnfittableStratum,
                    "no deserving mass in group " + std::to_string(group));
    return (masses.w[group][1][1] * policy.at(group, 1) + masses.w[group][1][0] * policy.at(group, 0)) / pos;
}

PolicyFitReport fit_eo_policy(const StratumMasses& masses) {
    for (int a = 0; a < 2; ++a) {
        ECOFAIR_REQUIRE(masses.deserving(a) > 0.0, ErrorCode::UnfittableStratum,
                        "no deserving rows in group " + std::to_string(a));
    }
    PolicyFitReport report;
    for (int a = 0; a < 2; ++a)
        for (int y = 0; y < 2; ++y)
            if (masses.w[a][y][0] == 0.0 || masses.w[a][y][1] == 0.0) report.degenerate_base = true;

    const DerivedPolicy base = DerivedPolicy::identity();
    if (std::abs(true_positive_rate(base, masses, 0) - true_positive_rate(base, masses, 1)) <= kEqualTpr) {
        report.policy = base;
        report.achieved_tpr = true_positive_rate(base, masses, 0);
        report.expected_loss = expected_loss(base, masses);
        report.candidates_examined = 1;
        return report;
    }

    // TPR(group 0) - TPR(group 1) = coeff . x
    const double pos0 = masses.deserving(0);
    const double pos1 = masses.deserving(1);
    const Vertex coeff{masses.w[0][1][0] / pos0, masses.w[0][1][1] / pos0, -masses.w[1][1][0] / pos1,
                       -masses.w[1][1][1] / pos1};

    bool have_best = false;
    Vertex best{};
    double best_loss = 0.0;
    auto consider = [&](const Vertex& x) {
        ++report.candidates_examined;
        const double loss = expected_loss(to_policy(x), masses);
        if (!have_best || loss < best_loss - kLossTie ||
            (loss <= best_loss + kLossTie && std::lexicographical_compare(x.begin(), x.end(), best.begin(), best.end()))) {
            have_best = true;
            best = x;
            best_loss = loss;
        }
    };

    // Box vertices lying on the hyperplane.
    for (unsigned bits = 0; bits < 16; ++bits) {
        Vertex x{};
        double gap = 0.0;
        for (std::size_t i = 0; i < 4; ++i) {
            x[i] = (bits >> (3 - i)) & 1U;
            gap += coeff[i] * x[i];
        }
        if (std::abs(gap) <= kEqualTpr) consider(x);
    }
    // Box edges crossing the hyperplane: one free coordinate.
    for (std::size_t free = 0; free < 4; ++free) {
        if (coeff[free] == 0.0) continue;
        for (unsigned bits = 0; bits < 8; ++bits) {
            Vertex x{};
            double rest = 0.0;
            unsigned shift = 2;
            for (std::size_t i = 0; i < 4; ++i) {
                if (i == free) continue;
                x[i] = (bits >> shift) & 1U;
                --shift;
                rest += coeff[i] * x[i];
            }
            const double v = -rest / coeff[free];
            if (v < -kBoxSlack || v > 1.0 + kBoxSlack) continue;
            x[free] = std::clamp(v, 0.0, 1.0);
            consider(x);
        }
    }
    // The all-zero policy always satisfies the constraint, so a best exists.
    report.policy = to_policy(best);
    report.expected_loss = best_loss;
    report.achieved_tpr = true_positive_rate(report.policy, masses, 0);
    return report;
}

PolicyFitReport fit_eo_policy(const PredictionTable& table, std::size_t lender) {
    return fit_eo_policy(stratum_masses(table, lender));
}

std::array<FlipCandidate, 2> uniform_flip_candidates(double fn_rate_g0, double fn_rate_g1, double fp_rate_g0,
                                                double fp_rate_g1) {
    require_rate(fn_rate_g0, "fn_rate_g0");
    require_rate(fn_rate_g1, "fn_rate_g1");
    require_rate(fp_rate_g0, "fp_rate_g0");
    require_rate(fp_rate_g1, "fp_rate_g1");
    const std::array<double, 2> fn{fn_rate_g0, fn_rate_g1};
    const std::array<double, 2> fp{fp_rate_g0, fp_rate_g1};
    if (fn[0] == fn[1]) {
        return {FlipCandidate{DerivedPolicy::identity(), 0.0, fn[0]},
                FlipCandidate{DerivedPolicy::identity(), 0.0, fn[0]}};
    }
    const int worse = fn[0] > fn[1] ? 0 : 1;
    const int better = 1 - worse;
    const double hi = fn[worse];
    const double lo = fn[better];

    FlipCandidate raise;
    const double delta_raise = (hi - lo) / hi;
    raise.policy.p[worse][0] = delta_raise;
    raise.cost = delta_raise * (1.0 - fp[worse] + hi) / 4.0;
    raise.common_fn_rate = lo;

    FlipCandidate lower;
    const double delta_lower = (hi - lo) / (1.0 - lo);
    lower.policy.p[better][1] = 1.0 - delta_lower;
    lower.cost = delta_lower * (fp[better] + 1.0 - hi) / 4.0;
    lower.common_fn_rate = hi;
    return {raise, lower};
}

PredictionTable apply_policy(const DerivedPolicy& policy, const PredictionTable& table, std::size_t lender) {
    policy.validate();
    ECOFAIR_REQUIRE(lender < table.lenders(), ErrorCode::InvalidArgument,
                    "lender index " + std::to_string(lender + 1) + " out of range");
    PredictionTable out = table;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!out.served(i, lender)) continue;
        const double old = out.offer_prob(i, lender);
        const int a = out.group(i);
        out.set_offer_prob(i, lender, policy.at(a, 1) * old + policy.at(a, 0) * (1.0 - old));
    }
    return out;
}

nlohmann::json policy_to_json(const DerivedPolicy& policy) {
    return {{"p",
             {{"g0_pred0", policy.at(0, 0)},
              {"g0_pred1", policy.at(0, 1)},
              {"g1_pred0", policy.at(1, 0)},
              {"g1_pred1", policy.at(1, 1)}}}};
}

DerivedPolicy policy_from_json(const nlohmann::json& doc) {
    try {
        const auto& p = doc.at("p");
        DerivedPolicy policy;
        policy.p = {{{p.at("g0_pred0").get<double>(), p.at("g0_pred1").get<double>()},
                     {p.at("g1_pred0").get<double>(), p.at("g1_pred1").get<double>()}}};
        policy.validate();
        return policy;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseFailure, std::string("policy JSON: ") + e.what());
    }
}

}  // namespace ecofair
