#include "ecofair/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>

#include "ecofair/error.hpp"
#include "ecofair/fairness_core.hpp"
#include "ecofair/joint_model.hpp"
#include "ecofair/postprocess.hpp"
#include "ecofair/rng.hpp"

namespace ecofair {

namespace {

std::string fmt(const char* pattern, double a, double b = 0.0) {
    char buf[160];
    std::snprintf(buf, sizeof buf, pattern, a, b);
    return buf;
}

// Uniform draw in (lo, hi) from the counter stream.
double draw(std::uint64_t seed, std::uint64_t stream, std::uint64_t i, double lo, double hi) {
    return lo + (hi - lo) * counter_uniform(seed, stream, i);
}

// Both-miss mass range over all couplings of two Bernoulli misses, by scanning
// p00 on a grid and keeping the values whose four cells are nonnegative.
std::pair<double, double> both_miss_range_grid(double b1, double b2, int steps) {
    double lo = 2.0, hi = -1.0;
    for (int s = 0; s <= steps; ++s) {
        const double p00 = static_cast<double>(s) / steps;
        const double p01 = b1 - p00, p10 = b2 - p00, p11 = 1.0 - b1 - b2 + p00;
        if (p01 < -1e-15 || p10 < -1e-15 || p11 < -1e-15) continue;
        lo = std::min(lo, p00);
        hi = std::max(hi, p00);
    }
    return {lo, hi};
}

void check_frechet(std::vector<CheckResult>& out, std::uint64_t seed, double tol) {
    const int draws = 40;
    const int steps = 20000;
    double worst = 0.0;
    for (int i = 0; i < draws; ++i) {
        const double b1 = draw(seed, 11, i, 0.02, 0.98);
        const double b2 = draw(seed, 12, i, 0.02, 0.98);
        const auto [lo, hi] = both_miss_range_grid(b1, b2, steps);
        const double s = sigma(b1) * sigma(b2);
        const Interval range = correlation_feasible_range(b1, b2);
        worst = std::max(worst, std::abs((lo - b1 * b2) / s - range.lo) * s);
        worst = std::max(worst, std::abs((hi - b1 * b2) / s - range.hi) * s);
    }
    // Grid resolution bounds the achievable agreement.
    out.push_back({"frechet", "feasible correlation range vs p00 grid scan", worst <= 1.0 / steps + tol,
                   fmt("max endpoint error %.3g (grid step %.3g)", worst, 1.0 / steps)});

    double worst_pmf = 0.0;
    for (int i = 0; i < draws; ++i) {
        const double b1 = draw(seed, 13, i, 0.02, 0.98);
        const double b2 = draw(seed, 14, i, 0.02, 0.98);
        const Interval range = correlation_feasible_range(b1, b2);
        for (double rho : {range.lo, range.hi, 0.5 * (range.lo + range.hi)}) {
            const JointPmf pmf = pair_pmf_from_correlation(b1, b2, rho);
            worst_pmf = std::max({worst_pmf, std::abs(pmf.miss_marginal(0) - b1), std::abs(pmf.miss_marginal(1) - b2),
                                  std::abs(pmf.pearson(0, 1) - rho)});
        }
    }
    out.push_back({"frechet", "pmf from correlation keeps marginals and correlation", worst_pmf <= 1e-9,
                   fmt("max deviation %.3g", worst_pmf)});
}

void check_worst_case(std::vector<CheckResult>& out, std::uint64_t seed, double tol) {
    // Two lenders: extremal couplings attain the bound, a coupling grid never exceeds it.
    double attain = 0.0, exceed = -1.0;
    for (int i = 0; i < 40; ++i) {
        const double b1 = draw(seed, 21, i, 0.01, 0.99);
        const double b2 = draw(seed, 22, i, 0.01, 0.99);
        const std::array<double, 2> betas{b1, b2};
        const double bound = eoc_correlation_worst_case(b1, b2);
        const double hi = extremal_pmf(betas, Coupling::max_overlap).no_offer_mass();
        const double lo = extremal_pmf(betas, Coupling::min_overlap).no_offer_mass();
        attain = std::max(attain, std::abs((hi - lo) - bound));
        const auto [glo, ghi] = both_miss_range_grid(b1, b2, 200);
        exceed = std::max(exceed, (ghi - glo) - bound);
    }
    out.push_back({"worst-case", "two-lender extremal couplings attain the bound", attain <= tol,
                   fmt("max error %.3g", attain)});
    out.push_back({"worst-case", "two-lender coupling grid never exceeds the bound", exceed <= tol,
                   fmt("max excess %.3g", exceed)});

    double attain_n = 0.0;
    for (int i = 0; i < 40; ++i) {
        const std::size_t n = 2 + static_cast<std::size_t>(i % 4);
        std::vector<double> betas(n);
        for (std::size_t l = 0; l < n; ++l) betas[l] = draw(seed, 23 + l, i, 0.01, 0.99);
        const double gap = extremal_pmf(betas, Coupling::max_overlap).no_offer_mass() -
                           extremal_pmf(betas, Coupling::min_overlap).no_offer_mass();
        attain_n = std::max(attain_n, std::abs(gap - eoc_worst_case_n(betas)));
    }
    out.push_back({"worst-case", "n-lender extremal couplings attain the bound", attain_n <= tol,
                   fmt("max error %.3g", attain_n)});

    double over_exceed = -1.0, over_attain = 0.0;
    const int steps = 20;
    for (int i = 0; i < 10; ++i) {
        const double b1 = draw(seed, 31, i, 0.01, 0.99);
        const double b2 = draw(seed, 32, i, 0.01, 0.99);
        double lo = 2.0, hi = -1.0;
        for (int s = 0; s <= steps; ++s) {
            for (int t = s; t <= steps; ++t) {
                const double both = static_cast<double>(s) / steps;
                const double by1 = static_cast<double>(t) / steps;
                const OverlapRow row{by1, 1.0 + both - by1, both};
                const double none = overlap_pmf(b1, b2, row, row)[0].no_offer_mass();
                lo = std::min(lo, none);
                hi = std::max(hi, none);
            }
        }
        const double bound = eoc_overlap_worst_case(b1, b2);
        over_exceed = std::max(over_exceed, (hi - lo) - bound);
        over_attain = std::max(over_attain, std::abs((hi - lo) - bound));
    }
    out.push_back({"worst-case", "overlap profile grid never exceeds the bound", over_exceed <= tol,
                   fmt("max excess %.3g", over_exceed)});
    out.push_back({"worst-case", "overlap bound attained on the profile grid", over_attain <= tol,
                   fmt("max error %.3g", over_attain)});
}

void check_lp(std::vector<CheckResult>& out, std::uint64_t seed, double tol) {
    const int instances = 30;
    const int steps = 40;
    double excess = -1.0, gap = 0.0;
    for (int i = 0; i < instances; ++i) {
        StratumMasses m;
        double total = 0.0;
        for (int a = 0; a < 2; ++a)
            for (int y = 0; y < 2; ++y)
                for (int p = 0; p < 2; ++p) {
                    m.w[a][y][p] = draw(seed, 41 + static_cast<std::uint64_t>(4 * a + 2 * y + p), i, 0.01, 1.0);
                    total += m.w[a][y][p];
                }
        for (auto& g : m.w)
            for (auto& y : g)
                for (double& v : y) v /= total;
        const PolicyFitReport fit = fit_eo_policy(m);
        gap = std::max(gap, std::abs(true_positive_rate(fit.policy, m, 0) - true_positive_rate(fit.policy, m, 1)));
        // Grid over three coordinates; the fourth is solved from the constraint.
        const double pos0 = m.deserving(0), pos1 = m.deserving(1);
        double best = 2.0;
        for (int a = 0; a <= steps; ++a)
            for (int b = 0; b <= steps; ++b)
                for (int c = 0; c <= steps; ++c) {
                    DerivedPolicy pol;
                    pol.p[0] = {static_cast<double>(a) / steps, static_cast<double>(b) / steps};
                    pol.p[1][0] = static_cast<double>(c) / steps;
                    const double tpr0 = (m.w[0][1][0] * pol.p[0][0] + m.w[0][1][1] * pol.p[0][1]) / pos0;
                    const double d = (tpr0 * pos1 - m.w[1][1][0] * pol.p[1][0]) / m.w[1][1][1];
                    if (d < 0.0 || d > 1.0) continue;
                    pol.p[1][1] = d;
                    best = std::min(best, expected_loss(pol, m));
                }
        excess = std::max(excess, fit.expected_loss - best);
    }
    out.push_back({"lp", "vertex fit loss never above the grid oracle", excess <= 1e-9 + tol,
                   fmt("max excess %.3g", excess)});
    out.push_back({"lp", "vertex fit equalizes true positive rates", gap <= 1e-9, fmt("max gap %.3g", gap)});
}

void check_dpc(std::vector<CheckResult>& out, std::uint64_t seed, double tol) {
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const double e1 = draw(seed, 51, i, 0.02, 0.98);
        const double e2 = draw(seed, 52, i, 0.02, 0.98);
        const Interval r = correlation_feasible_range(1.0 - e1, 1.0 - e2);
        const CorrelationPair corr{draw(seed, 53, i, r.lo, r.hi), draw(seed, 54, i, r.lo, r.hi)};
        worst = std::max(worst, std::abs(dpc_correlation_level(e1, e2, corr) -
                                         eoc_correlation_level(1.0 - e1, 1.0 - e2, corr)));
        worst = std::max(worst, std::abs(dpc_correlation_worst_case(e1, e2) -
                                         eoc_correlation_worst_case(1.0 - e1, 1.0 - e2)));
        const double both = draw(seed, 55, i, 0.0, 1.0);
        const double by1 = draw(seed, 56, i, both, 1.0);
        const OverlapRow g0{by1, 1.0 + both - by1, both};
        const OverlapRow g1{1.0, 1.0, 1.0};
        worst = std::max(worst, std::abs(dpc_overlap_level(e1, e2, g0, g1) -
                                         eoc_overlap_level(1.0 - e1, 1.0 - e2, g0, g1)));
    }
    out.push_back({"dpc", "demographic parity forms equal the opportunity forms with beta = 1 - eta",
                   worst <= tol, fmt("max difference %.3g", worst)});
}

void check_edc(std::vector<CheckResult>& out, std::uint64_t seed, double tol) {
    double worst = 1.0;
    for (int i = 0; i < 200; ++i) {
        std::array<std::vector<double>, 4> cells;
        for (int k = 0; k < 4; ++k) {
            cells[k].resize(4);
            double sum = 0.0;
            for (int c = 0; c < 4; ++c) {
                cells[k][c] = draw(seed, 61 + static_cast<std::uint64_t>(4 * k + c), i, 0.0, 1.0);
                sum += cells[k][c];
            }
            for (double& v : cells[k]) v /= sum;
        }
        const EcosystemModel model{{JointPmf(2, cells[0]), JointPmf(2, cells[1])},
                                   {JointPmf(2, cells[2]), JointPmf(2, cells[3])},
                                   {draw(seed, 77, i, 0.05, 0.95), draw(seed, 78, i, 0.05, 0.95)}};
        const FairnessLevels levels = pmf_fairness_levels(model);
        worst = std::min(worst, levels.edc - levels.eoc);
    }
    out.push_back({"edc", "ecosystem equalized odds level never below the opportunity level", worst >= -tol,
                   fmt("min edc - eoc %.3g", worst)});
}

}  // namespace

std::vector<std::string> verify_suite_names() { return {"frechet", "worst-case", "lp", "dpc", "edc"}; }

std::vector<CheckResult> run_verify_suite(const std::string& suite, std::uint64_t seed, double tolerance) {
    const std::vector<std::pair<std::string, std::function<void(std::vector<CheckResult>&, std::uint64_t, double)>>>
        suites{{"frechet", check_frechet},
               {"worst-case", check_worst_case},
               {"lp", check_lp},
               {"dpc", check_dpc},
               {"edc", check_edc}};
    std::vector<CheckResult> out;
    bool found = false;
    for (const auto& [name, fn] : suites) {
        if (suite != "all" && suite != name) continue;
        found = true;
        fn(out, seed, tolerance);
    }
    ECOFAIR_REQUIRE(found, ErrorCode::InvalidArgument, "unknown verify suite '" + suite + "'");
    return out;
}

}  // namespace ecofair
