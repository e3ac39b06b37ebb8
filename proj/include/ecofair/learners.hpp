#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace ecofair {

/// Feature matrix (row-major) with per-row group and label.
struct Dataset {
    std::vector<std::string> feature_names;
    std::vector<double> features;
    std::vector<std::uint8_t> group;
    std::vector<std::uint8_t> label;

    std::size_t rows() const noexcept { return group.size(); }
    std::size_t cols() const noexcept { return feature_names.size(); }
    double at(std::size_t r, std::size_t c) const { return features[r * cols() + c]; }
    std::span<const double> row(std::size_t r) const { return {features.data() + r * cols(), cols()}; }

    void add_row(std::span<const double> x, int group_value, int label_value);
    Dataset subset(std::span<const std::size_t> indices) const;
    void validate() const;
};

enum class LearnerKind { logistic, tree };

struct LearnerConfig {
    LearnerKind kind = LearnerKind::logistic;
    // logistic
    int max_iterations = 50;
    double ridge = 1e-6;
    double tolerance = 1e-8;
    // tree
    int max_depth = 5;
    int min_leaf = 10;
    // both
    double threshold = 0.5;
    bool use_protected_feature = true;

    void validate() const;
};

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;     // taken when x[feature] <= threshold
    int right = -1;
    double positive_rate = 0.0;

    friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct FittedModel {
    LearnerKind kind = LearnerKind::logistic;
    std::size_t arity = 0;  // number of inputs including the protected feature when used
    bool use_protected_feature = true;
    double threshold = 0.5;
    std::vector<double> coefficients;
    double intercept = 0.0;
    std::vector<TreeNode> nodes;
    std::uint64_t training_seed = 0;
    int iterations = 0;
    std::vector<double> loss_trace;  // logistic objective after each accepted step

    int depth() const;
    friend bool operator==(const FittedModel&, const FittedModel&) = default;
};

struct Predictions {
    std::vector<double> scores;
    std::vector<std::uint8_t> labels;  // score >= threshold
};

// Deterministic given (ds, cfg, seed). The seed is recorded with the model;
// both learners break ties by feature order, not randomness.
FittedModel train(const Dataset& ds, const LearnerConfig& cfg, std::uint64_t seed = 0);
Predictions predict(const FittedModel& model, const Dataset& ds);

nlohmann::json model_to_json(const FittedModel& model);
FittedModel fitted_model_from_json(const nlohmann::json& doc);

LearnerKind learner_kind_from_string(const std::string& name);
std::string to_string(LearnerKind kind);

}  // namespace ecofair
