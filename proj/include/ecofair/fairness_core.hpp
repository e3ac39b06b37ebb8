#pragma once

// Closed-form fairness levels for ecosystems of competing classifiers.
//
// Conventions used throughout:
//   beta  - false-negative rate of a classifier, Pr[c = 0 | Y = 1]
//   eta   - approval rate of a classifier, Pr[c = 1]
//   rho   - Pearson correlation between two classifiers' outputs within a group
//   sigma - sqrt(beta (1 - beta)), the standard deviation of a classifier's output
//
// All functions here are pure.

#include <cstdint>
#include <span>
#include <vector>

namespace ecofair {

struct Tolerances {
    double identity = 1e-12;     // exact-formula identities
    double feasibility = 1e-9;   // slack on feasibility checks
};

class GroupLabel {
public:
    explicit GroupLabel(int value);
    int value() const noexcept { return value_; }
    friend bool operator==(GroupLabel, GroupLabel) = default;

private:
    int value_;
};

struct ErrorProfile {
    double fn_rate_g0 = 0.0;
    double fn_rate_g1 = 0.0;
    double fp_rate_g0 = 0.0;
    double fp_rate_g1 = 0.0;

    void validate() const;
    bool is_equal_opportunity(double tol = 1e-12) const;
};

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    bool contains(double x, double slack = 0.0) const { return x >= lo - slack && x <= hi + slack; }
};

struct CorrelationPair {
    double rho_g0 = 0.0;
    double rho_g1 = 0.0;
};

/// Service footprint of two lenders within one group: the fraction served by
/// lender 1, by lender 2, and by both. Every borrower is served by someone,
/// so served_by_1 + served_by_2 - served_by_both == 1.
struct OverlapRow {
    double served_by_1 = 1.0;
    double served_by_2 = 1.0;
    double served_by_both = 1.0;

    void validate(double tol = 1e-12) const;
};

/// 0-1-k preferences: utility 0 for no offer, 1 for one offer, k for two or more.
/// k == 1 recovers the plain "at least one offer" criterion.
struct UtilityKind {
    double k = 1.0;

    void validate() const;
    double value(std::size_t offers) const noexcept {
        return offers == 0 ? 0.0 : (offers == 1 ? 1.0 : k);
    }
};

/// Per-lender and ecosystem fairness levels. Levels are absolute gaps; the
/// *_signed fields keep (group 0) - (group 1) so the disadvantaged group is
/// visible.
struct FairnessLevels {
    std::vector<double> eo_per_lender;
    std::vector<double> ed_per_lender;
    std::vector<double> dp_per_lender;
    double eoc = 0.0;
    double veoc = 0.0;
    double edc = 0.0;
    double dpc = 0.0;

    double eoc_signed = 0.0;   // offer rate among deserving, g0 - g1
    double veoc_signed = 0.0;  // deserving welfare, g0 - g1
    double dpc_signed = 0.0;
};

double sigma(double rate);

// Pearson-correlation range admissible for two Bernoulli outputs with the given
// miss rates. Throws DegenerateRate when either rate is 0 or 1.
Interval correlation_feasible_range(double beta1, double beta2);

double eoc_correlation_level(double beta1, double beta2, CorrelationPair corr,
                             const Tolerances& tol = {});
double eoc_correlation_worst_case(double beta1, double beta2);

double veoc_correlation_level(UtilityKind util, double beta1, double beta2, CorrelationPair corr,
                              const Tolerances& tol = {});
double veoc_worst_case(UtilityKind util, double beta1, double beta2);

// Worst case over all couplings of n equal-opportunity classifiers.
double eoc_worst_case_n(std::span<const double> betas);

double eoc_overlap_level(double beta1, double beta2, const OverlapRow& g0, const OverlapRow& g1,
                         const Tolerances& tol = {});
double eoc_overlap_worst_case(double beta1, double beta2);

// Demographic-parity analogues; eta is the approval rate, so the role of the
// miss rate is played by 1 - eta.
double dpc_correlation_level(double eta1, double eta2, CorrelationPair corr,
                             const Tolerances& tol = {});
double dpc_correlation_worst_case(double eta1, double eta2);
double dpc_overlap_level(double eta1, double eta2, const OverlapRow& g0, const OverlapRow& g1,
                         const Tolerances& tol = {});
double dpc_overlap_worst_case(double eta1, double eta2);

// Equalized odds under competition is never below equal opportunity under
// competition; returns levels.eoc after checking that ordering.
double edc_lower_bound(const FairnessLevels& levels, const Tolerances& tol = {});

}  // namespace ecofair
