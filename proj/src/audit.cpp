#include "ecofair/audit.hpp"

#include <cmath>
#include <string>

#include "ecofair/error.hpp"

namespace ecofair {

namespace {

struct RowOutcome {
    double offer_any;
    double welfare;
};

// Offer-count distribution under independent randomization, truncated at 2.
RowOutcome row_outcome(std::span<const double> probs, UtilityKind util) {
    double none = 1.0, one = 0.0, many = 0.0;
    for (double p : probs) {
        many = many + one * p;
        one = one * (1.0 - p) + none * p;
        none = none * (1.0 - p);
    }
    return {1.0 - none, one * util.value(1) + many * util.value(2)};
}

std::string stratum_name(int a, int y) {
    return "(group " + std::to_string(a) + ", label " + std::to_string(y) + ")";
}

}  // namespace

std::array<std::array<StratumStats, 2>, 2> stratum_stats(const PredictionTable& table, UtilityKind util) {
    util.validate();
    const std::size_t n = table.lenders();
    std::array<std::array<StratumStats, 2>, 2> stats;
    std::array<std::array<std::vector<double>, 2>, 2> served_rows;
    for (int a = 0; a < 2; ++a) {
        for (int y = 0; y < 2; ++y) {
            stats[a][y].mean_offer_prob.assign(n, 0.0);
            served_rows[a][y].assign(n, 0.0);
        }
    }
    for (std::size_t i = 0; i < table.size(); ++i) {
        auto& s = stats[table.group(i)][table.label(i)];
        auto& served = served_rows[table.group(i)][table.label(i)];
        const RowOutcome o = row_outcome(table.offer_probs(i), util);
        ++s.rows;
        s.mean_offer_any += o.offer_any;
        s.mean_welfare += o.welfare;
        for (std::size_t l = 0; l < n; ++l) {
            if (!table.served(i, l)) continue;
            s.mean_offer_prob[l] += table.offer_prob(i, l);
            served[l] += 1.0;
        }
    }
    for (int a = 0; a < 2; ++a) {
        for (int y = 0; y < 2; ++y) {
            auto& s = stats[a][y];
            if (s.rows == 0) continue;
            s.mean_offer_any /= static_cast<double>(s.rows);
            s.mean_welfare /= static_cast<double>(s.rows);
            for (std::size_t l = 0; l < n; ++l) {
                if (served_rows[a][y][l] > 0.0) s.mean_offer_prob[l] /= served_rows[a][y][l];
            }
        }
    }
    return stats;
}

FairnessLevels empirical_fairness(const PredictionTable& table, UtilityKind util) {
    const auto stats = stratum_stats(table, util);
    for (int a = 0; a < 2; ++a) {
        for (int y = 1; y >= 0; --y) {
            ECOFAIR_REQUIRE(stats[a][y].rows > 0, ErrorCode::EmptyGroup, "no rows in stratum " + stratum_name(a, y));
        }
    }
    const std::size_t n = table.lenders();

    // Per-lender rates are taken over the rows the lender serves. A lender that
    // serves only one group has no cross-group gap and reports 0.
    std::vector<std::array<std::array<double, 2>, 2>> served_count(n), offer_sum(n);
    for (std::size_t i = 0; i < table.size(); ++i) {
        for (std::size_t l = 0; l < n; ++l) {
            if (!table.served(i, l)) continue;
            served_count[l][table.group(i)][table.label(i)] += 1.0;
            offer_sum[l][table.group(i)][table.label(i)] += table.offer_prob(i, l);
        }
    }

    FairnessLevels out;
    std::array<double, 2> approval{};
    for (int a = 0; a < 2; ++a) {
        const double pos = static_cast<double>(stats[a][1].rows);
        const double neg = static_cast<double>(stats[a][0].rows);
        approval[a] = (pos * stats[a][1].mean_offer_any + neg * stats[a][0].mean_offer_any) / (pos + neg);
    }
    out.eoc_signed = stats[0][1].mean_offer_any - stats[1][1].mean_offer_any;
    out.veoc_signed = stats[0][1].mean_welfare - stats[1][1].mean_welfare;
    out.dpc_signed = approval[0] - approval[1];
    out.eoc = std::abs(out.eoc_signed);
    out.veoc = std::abs(out.veoc_signed);
    out.edc = std::max(out.eoc, std::abs(stats[0][0].mean_offer_any - stats[1][0].mean_offer_any));
    out.dpc = std::abs(out.dpc_signed);

    for (std::size_t l = 0; l < n; ++l) {
        const auto& cnt = served_count[l];
        const auto& sum = offer_sum[l];
        auto gap = [&](int y) {
            if (cnt[0][y] == 0.0 || cnt[1][y] == 0.0) return 0.0;
            return std::abs(sum[0][y] / cnt[0][y] - sum[1][y] / cnt[1][y]);
        };
        const double eo = gap(1);
        out.eo_per_lender.push_back(eo);
        out.ed_per_lender.push_back(std::max(eo, gap(0)));
        const double g0 = cnt[0][0] + cnt[0][1];
        const double g1 = cnt[1][0] + cnt[1][1];
        out.dp_per_lender.push_back(g0 == 0.0 || g1 == 0.0
                                        ? 0.0
                                        : std::abs((sum[0][0] + sum[0][1]) / g0 - (sum[1][0] + sum[1][1]) / g1));
    }
    return out;
}

double eoc_standard_error(const PredictionTable& table) {
    const auto stats = stratum_stats(table);
    double var = 0.0;
    for (int a = 0; a < 2; ++a) {
        const auto& s = stats[a][1];
        ECOFAIR_REQUIRE(s.rows > 0, ErrorCode::EmptyGroup, "no rows in stratum " + stratum_name(a, 1));
        var += s.mean_offer_any * (1.0 - s.mean_offer_any) / static_cast<double>(s.rows);
    }
    return std::sqrt(var);
}

CorrelationMatrices empirical_correlation(const PredictionTable& table) {
    const std::size_t n = table.lenders();
    CorrelationMatrices out;
    out.lenders = n;
    for (int a = 0; a < 2; ++a) {
        auto& mat = out.by_group[static_cast<std::size_t>(a)];
        mat.assign(n * n, 0.0);
        for (std::size_t l = 0; l < n; ++l) mat[l * n + l] = 1.0;
        for (std::size_t l = 0; l < n; ++l) {
            for (std::size_t m = l + 1; m < n; ++m) {
                double rows = 0.0, sl = 0.0, sm = 0.0, slm = 0.0;
                for (std::size_t i = 0; i < table.size(); ++i) {
                    if (table.group(i) != a || table.label(i) != 1) continue;
                    if (!table.served(i, l) || !table.served(i, m)) continue;
                    const double pl = table.offer_prob(i, l);
                    const double pm = table.offer_prob(i, m);
                    rows += 1.0;
                    sl += pl;
                    sm += pm;
                    slm += pl * pm;
                }
                ECOFAIR_REQUIRE(rows >= 2.0, ErrorCode::EmptyGroup,
                                "fewer than two deserving rows served by lenders " + std::to_string(l + 1) +
                                    " and " + std::to_string(m + 1) + " in group " + std::to_string(a));
                const double ml = sl / rows;
                const double mm = sm / rows;
                const double var_l = ml * (1.0 - ml);
                const double var_m = mm * (1.0 - mm);
                ECOFAIR_REQUIRE(var_l > 0.0 && var_m > 0.0, ErrorCode::DegenerateVariance,
                                "constant predictions for lender " + std::to_string(var_l > 0.0 ? m + 1 : l + 1) +
                                    " among deserving rows of group " + std::to_string(a));
                const double rho = (slm / rows - ml * mm) / std::sqrt(var_l * var_m);
                mat[l * n + m] = rho;
                mat[m * n + l] = rho;
            }
        }
    }
    return out;
}

}  // namespace ecofair
