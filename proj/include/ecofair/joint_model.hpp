#pragma once

// Exact joint distributions of n competing classifiers' outputs, conditioned on
// (group, label), and the exact fairness levels they induce.
//
// Output vectors are encoded as bit masks: bit l set means lender l+1 made an
// offer. Cell 0 is therefore "nobody offered".

#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ecofair/fairness_core.hpp"
#include "ecofair/table.hpp"

namespace ecofair {

inline constexpr std::size_t kMaxExactLenders = 16;

class JointPmf {
public:
    // Cells within 1e-15 below zero are clamped; the sum is renormalized only
    // when it is within 1e-9 of one. Anything else throws InvalidModel.
    JointPmf(std::size_t lenders, std::vector<double> cells);

    static JointPmf product(std::span<const double> offer_probs);

    std::size_t lenders() const noexcept { return lenders_; }
    std::span<const double> cells() const noexcept { return cells_; }
    double operator[](std::uint32_t mask) const { return cells_[mask]; }

    double offer_marginal(std::size_t lender) const;
    double miss_marginal(std::size_t lender) const { return 1.0 - offer_marginal(lender); }
    double no_offer_mass() const noexcept { return cells_[0]; }
    double pearson(std::size_t l, std::size_t m) const;

    // Expected utility of the offer count under 0-1-k preferences.
    double expected_utility(UtilityKind util) const;

    // Independent post-hoc randomization of each lender's output:
    // new Pr[offer] = keep_if_one * b + flip_if_zero * (1 - b), per lender.
    JointPmf randomized(std::span<const double> keep_if_one, std::span<const double> flip_if_zero) const;

private:
    std::size_t lenders_;
    std::vector<double> cells_;
};

/// Exact sufficient statistics of an ecosystem: one joint pmf per (group,
/// label) and the per-group base rate Pr[Y=1 | A=a].
struct EcosystemModel {
    std::array<JointPmf, 2> positive;  // conditional on Y = 1, indexed by group
    std::array<JointPmf, 2> negative;  // conditional on Y = 0
    std::array<double, 2> base_rate{0.5, 0.5};

    const JointPmf& pmf(int group, int label) const {
        return label == 1 ? positive[static_cast<std::size_t>(group)] : negative[static_cast<std::size_t>(group)];
    }
    std::size_t lenders() const noexcept { return positive[0].lenders(); }
    void validate() const;
};

// Label-0 side defaults to independent products of the given false-positive
// rates (one per lender, per group).
EcosystemModel make_model(JointPmf positive_g0, JointPmf positive_g1, std::span<const double> fp_rates_g0,
                          std::span<const double> fp_rates_g1, std::array<double, 2> base_rate = {0.5, 0.5});

JointPmf pair_pmf_from_correlation(double beta1, double beta2, double rho, const Tolerances& tol = {});

enum class Coupling { max_overlap, min_overlap };

// max_overlap nests the miss sets (all-miss mass = min beta); min_overlap lays
// the correct sets end to end (all-miss mass = max(0, sum beta - (n - 1))).
JointPmf extremal_pmf(std::span<const double> betas, Coupling mode);

// Group 0: every lender shares one classifier. Group 1: independent misses.
std::pair<JointPmf, JointPmf> monoculture_pmf(double beta, std::size_t lenders);

// Two lenders with overlapping service: within one group, the exclusive region
// of each lender sees only that lender (the absent lender outputs 0), and the
// shared region sees independent misses. Returns the label-1 pmfs per group.
std::array<JointPmf, 2> overlap_pmf(double beta1, double beta2, const OverlapRow& g0, const OverlapRow& g1,
                                    const Tolerances& tol = {});

FairnessLevels pmf_fairness_levels(const EcosystemModel& model, UtilityKind util = {});

struct SampleBatch {
    std::size_t lenders = 0;
    std::uint64_t total = 0;
    std::uint64_t seed = 0;
    // counts[group][label][mask]
    std::array<std::array<std::vector<std::uint64_t>, 2>, 2> counts;

    std::uint64_t stratum_total(int group, int label) const;
};

// Draws `total` individuals: group 1 with probability group1_share, label from
// the group's base rate, then the output vector. Index i uses counter-based
// draws keyed by (seed, i), so `workers` does not change the result.
SampleBatch sample(const EcosystemModel& model, std::uint64_t total, std::uint64_t seed,
                   double group1_share = 0.5, unsigned workers = 1);

// Deterministic proportional expansion: each cell count is
// units * Pr[A=a] * Pr[Y=y | a] * pmf cell, which must be integral (1e-6).
SampleBatch exact_expansion(const EcosystemModel& model, std::uint64_t units, double group1_share = 0.5);

// serving[group][lender] == false marks that lender as not serving the group;
// the corresponding output bits must be zero in every nonempty cell.
using ServingMask = std::array<std::vector<std::uint8_t>, 2>;
PredictionTable batch_to_table(const SampleBatch& batch, const ServingMask& serving = {});

nlohmann::json model_to_json(const EcosystemModel& model);
EcosystemModel model_from_json(const nlohmann::json& doc);

}  // namespace ecofair
