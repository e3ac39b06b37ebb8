#pragma once

// Experiment pipeline: per replicate, draw training data according to the
// mode, train each lender, audit a held-out evaluation split, post-process
// every lender toward equal opportunity, and audit again.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ecofair/fairness_core.hpp"
#include "ecofair/learners.hpp"

namespace ecofair {

struct SyntheticSpec {
    std::size_t n_rows = 20000;
    std::size_t feature_dim = 4;
    double group1_share = 0.5;
    // Ground-truth logistic signal per group: latent = intercept + weights . x.
    std::array<std::vector<double>, 2> weights{std::vector<double>{1.0, 1.0, 1.0, 1.0},
                                               std::vector<double>{1.0, 1.0, 1.0, 1.0}};
    std::array<double, 2> intercept{0.0, 0.0};
    // Group 0's informative features collapse into column 0 (standardized);
    // the remaining columns are zero for that group.
    bool shared_proxy = false;
    double noise = 1.0;          // scale of the logistic label noise; 0 = deterministic labels
    bool term_column = true;     // append an uninformative binary "term" column

    void validate() const;
};

Dataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

struct CsvSchema {
    std::vector<std::string> feature_columns;
    std::vector<std::string> categorical_columns;  // one-hot expanded, levels sorted
    std::string group_column;
    std::string group_positive;  // cell value meaning group 1
    std::string label_column;
    std::string label_positive;  // cell value meaning label 1
};

Dataset load_csv(std::istream& in, const CsvSchema& schema);
Dataset load_csv(const std::string& path, const CsvSchema& schema);

enum class ExperimentMode { shared_data, split_by_column, independent_samples, subset_serving, third_party };
enum class FitSplit { training, calibration };

ExperimentMode experiment_mode_from_string(const std::string& name);
std::string to_string(ExperimentMode mode);

struct LenderSpec {
    LearnerConfig learner;
    int serves_group = -1;      // subset-serving: -1 serves everyone, 0/1 serves one group
    double split_value = 0.0;   // split-by-column: rows whose split column equals this value
    std::string note;           // free-form provenance, e.g. a substituted learner
};

struct ExperimentConfig {
    std::optional<SyntheticSpec> synthetic;
    std::string csv_path;
    CsvSchema schema;

    ExperimentMode mode = ExperimentMode::shared_data;
    std::string split_column = "term";
    int shared_group = 0;        // third-party: the group scored by the shared model
    LearnerConfig third_party_learner;
    std::vector<LenderSpec> lenders;

    std::size_t train_size = 300;
    std::size_t replicates = 500;
    std::size_t eval_size = 5000;
    FitSplit fit_split = FitSplit::training;
    std::uint64_t base_seed = 0;

    void validate() const;
};

ExperimentConfig experiment_config_from_json(const nlohmann::json& doc);
nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg);

struct ReplicateResult {
    std::size_t index = 0;
    bool ok = false;
    std::string error;
    double eoc_before = 0.0;
    double eoc_after = 0.0;
    std::vector<double> eo_before;      // per lender, evaluation split
    std::vector<double> eo_after;
    std::vector<double> eo_fit_before;  // per lender, on the split the policy was fitted on
    std::vector<double> eo_fit_after;
    bool harmed = false;                // eoc_after > eoc_before, strictly
    std::optional<double> ratio;        // eoc_after / eoc_before when eoc_before > 1e-12

    friend bool operator==(const ReplicateResult&, const ReplicateResult&) = default;
};

inline constexpr double kRatioFloor = 1e-12;

// Replicate r uses seed derive_seed(base_seed, r); results are identical for
// any worker count.
std::vector<ReplicateResult> run_experiment(const ExperimentConfig& cfg, unsigned workers = 1);
std::vector<ReplicateResult> run_experiment(const ExperimentConfig& cfg, const Dataset& data, unsigned workers = 1);

enum class IntervalMethod { normal, wilson };

struct IntervalEstimate {
    double point = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    std::size_t n = 0;
    IntervalMethod method = IntervalMethod::normal;
};

struct EffectSizeEstimate {
    IntervalEstimate interval;
    std::size_t excluded_count = 0;  // harmed replicates with eoc_before <= kRatioFloor
};

// Fraction of successful replicates in which the ecosystem level rose.
IntervalEstimate harm_likelihood(const std::vector<ReplicateResult>& results,
                                 IntervalMethod method = IntervalMethod::normal);
IntervalEstimate proportion_interval(std::size_t successes, std::size_t n,
                                     IntervalMethod method = IntervalMethod::normal);

// Mean increase factor among harmed replicates with a nonzero baseline.
EffectSizeEstimate effect_size(const std::vector<ReplicateResult>& results);

void write_results_csv(std::ostream& out, const std::vector<ReplicateResult>& results, std::size_t lenders);
nlohmann::json experiment_summary(const ExperimentConfig& cfg, const std::vector<ReplicateResult>& results,
                                  IntervalMethod method = IntervalMethod::normal);

}  // namespace ecofair
