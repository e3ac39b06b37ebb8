#include "ecofair/fairness_core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ecofair/error.hpp"

namespace ecofair {

namespace {

void require_probability(double p, const char* name) {
    ECOFAIR_REQUIRE(std::isfinite(p) && p >= 0.0 && p <= 1.0, ErrorCode::InvalidArgument,
                    std::string(name) + " must lie in [0,1], got " + std::to_string(p));
}

void require_feasible(double beta1, double beta2, CorrelationPair corr, const Tolerances& tol) {
    const Interval range = correlation_feasible_range(beta1, beta2);
    for (double rho : {corr.rho_g0, corr.rho_g1}) {
        ECOFAIR_REQUIRE(std::isfinite(rho) && range.contains(rho, tol.feasibility),
                        ErrorCode::InfeasibleCorrelation,
                        "rho=" + std::to_string(rho) + " outside [" + std::to_string(range.lo) + ", " +
                            std::to_string(range.hi) + "]");
    }
}

// Probability that both classifiers miss, at its Frechet-Hoeffding extremes.
double both_miss_upper(double b1, double b2) { return std::min(b1, b2); }
double both_miss_lower(double b1, double b2) { return std::max(0.0, b1 + b2 - 1.0); }

}  // namespace

GroupLabel::GroupLabel(int value) : value_(value) {
    ECOFAIR_REQUIRE(value == 0 || value == 1, ErrorCode::InvalidArgument,
                    "group label must be 0 or 1, got " + std::to_string(value));
}

void ErrorProfile::validate() const {
    require_probability(fn_rate_g0, "fn_rate_g0");
    require_probability(fn_rate_g1, "fn_rate_g1");
    require_probability(fp_rate_g0, "fp_rate_g0");
    require_probability(fp_rate_g1, "fp_rate_g1");
}

bool ErrorProfile::is_equal_opportunity(double tol) const {
    return std::abs(fn_rate_g0 - fn_rate_g1) <= tol;
}

void OverlapRow::validate(double tol) const {
    for (double g : {served_by_1, served_by_2, served_by_both}) {
        ECOFAIR_REQUIRE(std::isfinite(g) && g >= -tol && g <= 1.0 + tol, ErrorCode::InvalidOverlap,
                        "overlap fractions must lie in [0,1]");
    }
    ECOFAIR_REQUIRE(std::abs(served_by_1 + served_by_2 - served_by_both - 1.0) <= tol,
                    ErrorCode::InvalidOverlap,
                    "served_by_1 + served_by_2 - served_by_both must equal 1");
    ECOFAIR_REQUIRE(served_by_both <= std::min(served_by_1, served_by_2) + tol, ErrorCode::InvalidOverlap,
                    "served_by_both exceeds a single lender's share");
}

void UtilityKind::validate() const {
    ECOFAIR_REQUIRE(std::isfinite(k) && k >= 1.0, ErrorCode::InvalidArgument,
                    "utility multiplier k must be >= 1");
}

double sigma(double rate) { return std::sqrt(rate * (1.0 - rate)); }

Interval correlation_feasible_range(double beta1, double beta2) {
    require_probability(beta1, "beta1");
    require_probability(beta2, "beta2");
    ECOFAIR_REQUIRE(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0, ErrorCode::DegenerateRate,
                    "correlation is undefined for rates in {0,1}");
    const double s = sigma(beta1) * sigma(beta2);
    const double prod = beta1 * beta2;
    return {(both_miss_lower(beta1, beta2) - prod) / s, (both_miss_upper(beta1, beta2) - prod) / s};
}

double eoc_correlation_level(double beta1, double beta2, CorrelationPair corr, const Tolerances& tol) {
    require_feasible(beta1, beta2, corr, tol);
    return sigma(beta1) * sigma(beta2) * std::abs(corr.rho_g0 - corr.rho_g1);
}

double eoc_correlation_worst_case(double beta1, double beta2) {
    require_probability(beta1, "beta1");
    require_probability(beta2, "beta2");
    return both_miss_upper(beta1, beta2) - both_miss_lower(beta1, beta2);
}

double veoc_correlation_level(UtilityKind util, double beta1, double beta2, CorrelationPair corr,
                              const Tolerances& tol) {
    util.validate();
    require_feasible(beta1, beta2, corr, tol);
    return sigma(beta1) * sigma(beta2) * std::abs((util.k - 2.0) * (corr.rho_g0 - corr.rho_g1));
}

double veoc_worst_case(UtilityKind util, double beta1, double beta2) {
    util.validate();
    return std::abs(util.k - 2.0) * eoc_correlation_worst_case(beta1, beta2);
}

double eoc_worst_case_n(std::span<const double> betas) {
    ECOFAIR_REQUIRE(betas.size() >= 2, ErrorCode::InvalidArgument, "need at least two classifiers");
    for (double b : betas) require_probability(b, "beta");
    const double n = static_cast<double>(betas.size());
    const double all_miss_max = *std::min_element(betas.begin(), betas.end());
    // Correct sets laid end to end: everyone is covered once the correct
    // masses sum to at least one.
    const double all_miss_min =
        std::max(0.0, std::accumulate(betas.begin(), betas.end(), 0.0) - (n - 1.0));
    return all_miss_max - all_miss_min;
}

double eoc_overlap_level(double beta1, double beta2, const OverlapRow& g0, const OverlapRow& g1,
                         const Tolerances& tol) {
    require_probability(beta1, "beta1");
    require_probability(beta2, "beta2");
    g0.validate(tol.identity);
    g1.validate(tol.identity);
    return std::abs((g0.served_by_2 - g1.served_by_2) * beta1 + (g0.served_by_1 - g1.served_by_1) * beta2 +
                    (g1.served_by_both - g0.served_by_both) * beta1 * beta2);
}

double eoc_overlap_worst_case(double beta1, double beta2) {
    require_probability(beta1, "beta1");
    require_probability(beta2, "beta2");
    return std::max(beta1, beta2) - beta1 * beta2;
}

double dpc_correlation_level(double eta1, double eta2, CorrelationPair corr, const Tolerances& tol) {
    require_feasible(1.0 - eta1, 1.0 - eta2, corr, tol);
    return sigma(eta1) * sigma(eta2) * std::abs(corr.rho_g0 - corr.rho_g1);
}

double dpc_correlation_worst_case(double eta1, double eta2) {
    require_probability(eta1, "eta1");
    require_probability(eta2, "eta2");
    return std::min(1.0 - eta1, 1.0 - eta2) - std::max(0.0, 1.0 - eta1 - eta2);
}

double dpc_overlap_level(double eta1, double eta2, const OverlapRow& g0, const OverlapRow& g1,
                         const Tolerances& tol) {
    require_probability(eta1, "eta1");
    require_probability(eta2, "eta2");
    return eoc_overlap_level(1.0 - eta1, 1.0 - eta2, g0, g1, tol);
}

double dpc_overlap_worst_case(double eta1, double eta2) {
    require_probability(eta1, "eta1");
    require_probability(eta2, "eta2");
    return eoc_overlap_worst_case(1.0 - eta1, 1.0 - eta2);
}

double edc_lower_bound(const FairnessLevels& levels, const Tolerances& tol) {
    ECOFAIR_REQUIRE(levels.edc >= levels.eoc - tol.identity, ErrorCode::InvalidArgument,
                    "EDC level below EOC level: levels are inconsistent");
    return levels.eoc;
}

}  // namespace ecofair
