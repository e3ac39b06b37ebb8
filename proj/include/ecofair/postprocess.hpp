#pragma once

// Derived Equal-Opportunity classifiers: post-processing that depends only on
// the group and the base classifier's binary prediction.

#include <array>

#include <json.hpp>

#include "ecofair/table.hpp"

namespace ecofair {

struct RatePoint {
    double fpr = 0.0;
    double tpr = 0.0;
};

/// p[group][base prediction] = probability the derived classifier emits 1.
struct DerivedPolicy {
    std::array<std::array<double, 2>, 2> p{{{0.0, 1.0}, {0.0, 1.0}}};

    static DerivedPolicy identity() { return {}; }
    double at(int group, int base_prediction) const {
        return p[static_cast<std::size_t>(group)][static_cast<std::size_t>(base_prediction)];
    }
    // Rate point of the derived classifier on one group.
    RatePoint derive(int group, RatePoint base) const;
    bool is_identity() const;
    void validate() const;

    friend bool operator==(const DerivedPolicy&, const DerivedPolicy&) = default;
};

/// Probability mass of each (group, label, base prediction) stratum in the
/// fitting distribution; normalized to sum to one.
struct StratumMasses {
    std::array<std::array<std::array<double, 2>, 2>, 2> w{};  // [group][label][prediction]

    double deserving(int group) const { return w[group][1][0] + w[group][1][1]; }
};

// Masses over the rows a lender serves. Randomized entries contribute
// fractional mass to both predictions.
StratumMasses stratum_masses(const PredictionTable& table, std::size_t lender);

// Uniform (group, label) distribution with the given per-group rates.
StratumMasses uniform_masses(double fn_rate_g0, double fn_rate_g1, double fp_rate_g0, double fp_rate_g1);

double expected_loss(const DerivedPolicy& policy, const StratumMasses& masses);
double true_positive_rate(const DerivedPolicy& policy, const StratumMasses& masses, int group);

struct PolicyFitReport {
    DerivedPolicy policy;
    double achieved_tpr = 0.0;
    double expected_loss = 0.0;
    std::size_t candidates_examined = 0;
    bool degenerate_base = false;  // some group-label stratum has constant base predictions
};

// Minimizes expected 0/1 loss subject to equal true-positive rates across
// groups. The feasible set is the policy box cut by one hyperplane, so the
// optimum sits on a vertex: three coordinates at 0/1 and the fourth solved
// from the equality, or an all-binary point on the hyperplane. Equal-loss
// vertices are broken lexicographically on (p00, p01, p10, p11). A base
// classifier that already has equal true-positive rates is left unchanged.
PolicyFitReport fit_eo_policy(const StratumMasses& masses);
PolicyFitReport fit_eo_policy(const PredictionTable& table, std::size_t lender);

struct FlipCandidate {
    DerivedPolicy policy;
    double cost = 0.0;            // fraction of the uniform population whose output is flipped
    double common_fn_rate = 0.0;  // false-negative rate on both groups after the flip
};

// The two vertex policies for a uniform population: [0] raises the worse
// group's true-positive rate by flipping some of its negatives to positive,
// [1] lowers the better group's rate by flipping some of its positives.
std::array<FlipCandidate, 2> uniform_flip_candidates(double fn_rate_g0, double fn_rate_g1, double fp_rate_g0,
                                                double fp_rate_g1);

// New offer probability for the lender: p(a,1) * p_old + p(a,0) * (1 - p_old).
// Other lenders and unserved rows are untouched.
PredictionTable apply_policy(const DerivedPolicy& policy, const PredictionTable& table, std::size_t lender);

nlohmann::json policy_to_json(const DerivedPolicy& policy);
DerivedPolicy policy_from_json(const nlohmann::json& doc);

}  // namespace ecofair
