#pragma once

// Empirical fairness levels from observed prediction tables.
//
// Randomization devices of different lenders are taken to be independent given
// the row, so a row's probability of receiving at least one offer is
// 1 - prod_l (1 - p_l). A borrower that nobody serves receives no offer.

#include <array>
#include <vector>

#include "ecofair/fairness_core.hpp"
#include "ecofair/table.hpp"

namespace ecofair {

struct StratumStats {
    std::size_t rows = 0;
    double mean_offer_any = 0.0;   // mean of d
    double mean_welfare = 0.0;     // mean of E[v(count)]
    std::vector<double> mean_offer_prob;  // per lender
};

// Per (group, label) stratum summaries; strata with zero rows report rows == 0.
std::array<std::array<StratumStats, 2>, 2> stratum_stats(const PredictionTable& table, UtilityKind util = {});

// Throws EmptyGroup naming the missing (group, label) stratum.
FairnessLevels empirical_fairness(const PredictionTable& table, UtilityKind util = {});

// Standard error of the empirical EOC estimate for a deterministic table.
double eoc_standard_error(const PredictionTable& table);

/// Per-group Pearson correlation matrices between lenders, over deserving rows
/// served by both lenders of each pair. Diagonal entries are 1.
struct CorrelationMatrices {
    std::size_t lenders = 0;
    std::array<std::vector<double>, 2> by_group;  // row-major lenders x lenders

    double at(int group, std::size_t l, std::size_t m) const {
        return by_group[static_cast<std::size_t>(group)][l * lenders + m];
    }
};

CorrelationMatrices empirical_correlation(const PredictionTable& table);

}  // namespace ecofair
