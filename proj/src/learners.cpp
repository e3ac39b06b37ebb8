#include "ecofair/learners.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include <Eigen/Dense>

#include "ecofair/error.hpp"

namespace ecofair {

namespace {

std::size_t input_arity(const Dataset& ds, bool use_protected) { return ds.cols() + (use_protected ? 1 : 0); }

// Row-major design matrix; the protected attribute is appended as the last input.
Eigen::MatrixXd design_matrix(const Dataset& ds, bool use_protected) {
    const std::size_t k = input_arity(ds, use_protected);
    Eigen::MatrixXd x(static_cast<Eigen::Index>(ds.rows()), static_cast<Eigen::Index>(k));
    for (std::size_t r = 0; r < ds.rows(); ++r) {
        for (std::size_t c = 0; c < ds.cols(); ++c) x(r, c) = ds.at(r, c);
        if (use_protected) x(r, k - 1) = ds.group[r];
    }
    return x;
}

double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }
double logistic(double z) { return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

// Mean negative log-likelihood plus ridge on the slopes (the intercept is the
// last entry of w and is not penalized).
double logistic_objective(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                          double ridge) {
    const Eigen::Index k = x.cols();
    const Eigen::VectorXd z = x * w.head(k) + Eigen::VectorXd::Constant(x.rows(), w(k));
    double loss = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) loss += softplus(z(i)) - y(i) * z(i);
    return loss / static_cast<double>(x.rows()) + 0.5 * ridge * w.head(k).squaredNorm();
}

FittedModel train_logistic(const Dataset& ds, const LearnerConfig& cfg) {
    ECOFAIR_REQUIRE(ds.rows() >= 2, ErrorCode::EmptyData, "logistic regression needs at least two rows");
    const bool has_pos = std::find(ds.label.begin(), ds.label.end(), 1) != ds.label.end();
    const bool has_neg = std::find(ds.label.begin(), ds.label.end(), 0) != ds.label.end();
    ECOFAIR_REQUIRE(has_pos && has_neg, ErrorCode::EmptyData, "logistic regression needs both labels");

    const Eigen::MatrixXd x = design_matrix(ds, cfg.use_protected_feature);
    const Eigen::Index n = x.rows();
    const Eigen::Index k = x.cols();
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) y(i) = ds.label[static_cast<std::size_t>(i)];

    Eigen::MatrixXd xa(n, k + 1);
    xa << x, Eigen::VectorXd::Ones(n);
    Eigen::VectorXd w = Eigen::VectorXd::Zero(k + 1);
    Eigen::VectorXd penalty = Eigen::VectorXd::Constant(k + 1, cfg.ridge);
    penalty(k) = 0.0;

    FittedModel model;
    double loss = logistic_objective(x, y, w, cfg.ridge);
    model.loss_trace.push_back(loss);
    for (int it = 0; it < cfg.max_iterations; ++it) {
        const Eigen::VectorXd z = xa * w;
        Eigen::VectorXd p(n), s(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            p(i) = logistic(z(i));
            s(i) = std::max(p(i) * (1.0 - p(i)), 1e-12);
        }
        const Eigen::VectorXd grad = xa.transpose() * (p - y) / static_cast<double>(n) + penalty.cwiseProduct(w);
        Eigen::MatrixXd hess = xa.transpose() * s.asDiagonal() * xa / static_cast<double>(n);
        hess.diagonal() += penalty;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
        Eigen::VectorXd step = ldlt.solve(grad);
        if (ldlt.info() != Eigen::Success || !step.allFinite()) {
            // Ridge rescue on every coordinate before giving up.
            hess.diagonal().array() += std::max(cfg.ridge, 1e-8);
            ldlt.compute(hess);
            step = ldlt.solve(grad);
            ECOFAIR_REQUIRE(ldlt.info() == Eigen::Success && step.allFinite(), ErrorCode::SingularFit,
                            "Newton system is singular");
        }

        // Damping: halve until the objective does not increase.
        double t = 1.0;
        Eigen::VectorXd next;
        double next_loss = loss;
        bool accepted = false;
        for (int half = 0; half < 40; ++half, t *= 0.5) {
            next = w - t * step;
            next_loss = logistic_objective(x, y, next, cfg.ridge);
            if (std::isfinite(next_loss) && next_loss <= loss) {
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
        const double change = loss - next_loss;
        const double step_size = (t * step).lpNorm<Eigen::Infinity>();
        w = next;
        loss = next_loss;
        model.loss_trace.push_back(loss);
        model.iterations = it + 1;
        if (change <= cfg.tolerance * std::max(1.0, std::abs(loss)) || step_size <= cfg.tolerance) break;
    }
    ECOFAIR_REQUIRE(w.allFinite(), ErrorCode::SingularFit, "non-finite coefficients");

    model.kind = LearnerKind::logistic;
    model.coefficients.assign(w.data(), w.data() + k);
    model.intercept = w(k);
    return model;
}

struct SplitChoice {
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
};

double gini(double pos, double total) {
    if (total <= 0.0) return 0.0;
    const double q = pos / total;
    return 2.0 * q * (1.0 - q);
}

class TreeBuilder {
public:
    TreeBuilder(const Eigen::MatrixXd& x, const std::vector<std::uint8_t>& y, const LearnerConfig& cfg)
        : x_(x), y_(y), cfg_(cfg) {}

    std::vector<TreeNode> build() {
        std::vector<std::size_t> all(static_cast<std::size_t>(x_.rows()));
        std::iota(all.begin(), all.end(), std::size_t{0});
        grow(all, 0);
        return std::move(nodes_);
    }

private:
    int grow(std::vector<std::size_t>& rows, int depth) {
        const int id = static_cast<int>(nodes_.size());
        nodes_.emplace_back();
        double pos = 0.0;
        for (std::size_t r : rows) pos += y_[r];
        const double total = static_cast<double>(rows.size());
        nodes_[id].positive_rate = total > 0.0 ? pos / total : 0.0;

        if (depth >= cfg_.max_depth || rows.size() < 2 * static_cast<std::size_t>(cfg_.min_leaf) || pos == 0.0 ||
            pos == total) {
            return id;
        }
        const SplitChoice split = best_split(rows, pos);
        if (split.feature < 0) return id;

        std::vector<std::size_t> left, right;
        for (std::size_t r : rows) (x_(r, split.feature) <= split.threshold ? left : right).push_back(r);
        rows.clear();
        rows.shrink_to_fit();
        nodes_[id].feature = split.feature;
        nodes_[id].threshold = split.threshold;
        const int l = grow(left, depth + 1);
        nodes_[id].left = l;
        const int r = grow(right, depth + 1);
        nodes_[id].right = r;
        return id;
    }

    // Scans features in index order and thresholds in increasing order; only a
    // strictly better gain replaces the incumbent, so ties keep the lowest
    // (feature, threshold).
    SplitChoice best_split(const std::vector<std::size_t>& rows, double pos) const {
        const double total = static_cast<double>(rows.size());
        const double parent = gini(pos, total);
        const std::size_t min_leaf = static_cast<std::size_t>(cfg_.min_leaf);
        SplitChoice best;
        std::vector<std::size_t> order(rows);
        for (Eigen::Index f = 0; f < x_.cols(); ++f) {
            std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                const double va = x_(a, f), vb = x_(b, f);
                return va < vb || (va == vb && a < b);
            });
            double left_pos = 0.0;
            for (std::size_t i = 0; i + 1 < order.size(); ++i) {
                left_pos += y_[order[i]];
                const double v = x_(order[i], f);
                const double next = x_(order[i + 1], f);
                if (v == next) continue;
                const std::size_t nl = i + 1;
                const std::size_t nr = order.size() - nl;
                if (nl < min_leaf || nr < min_leaf) continue;
                const double dl = static_cast<double>(nl);
                const double dr = static_cast<double>(nr);
                const double child = (dl * gini(left_pos, dl) + dr * gini(pos - left_pos, dr)) / total;
                const double gain = parent - child;
                if (gain > best.gain + 1e-12) {
                    best.feature = static_cast<int>(f);
                    best.threshold = 0.5 * (v + next);
                    best.gain = gain;
                }
            }
        }
        return best;
    }

    const Eigen::MatrixXd& x_;
    const std::vector<std::uint8_t>& y_;
    const LearnerConfig& cfg_;
    std::vector<TreeNode> nodes_;
};

double tree_score(const std::vector<TreeNode>& nodes, const Eigen::MatrixXd& x, Eigen::Index r) {
    int id = 0;
    while (nodes[static_cast<std::size_t>(id)].feature >= 0) {
        const TreeNode& node = nodes[static_cast<std::size_t>(id)];
        id = x(r, node.feature) <= node.threshold ? node.left : node.right;
    }
    return nodes[static_cast<std::size_t>(id)].positive_rate;
}

}  // namespace

void Dataset::add_row(std::span<const double> x, int group_value, int label_value) {
    ECOFAIR_REQUIRE(x.size() == cols(), ErrorCode::ArityMismatch, "row width does not match feature count");
    ECOFAIR_REQUIRE((group_value == 0 || group_value == 1) && (label_value == 0 || label_value == 1),
                    ErrorCode::InvalidArgument, "group and label must be 0 or 1");
    features.insert(features.end(), x.begin(), x.end());
    group.push_back(static_cast<std::uint8_t>(group_value));
    label.push_back(static_cast<std::uint8_t>(label_value));
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    Dataset out;
    out.feature_names = feature_names;
    out.features.reserve(indices.size() * cols());
    out.group.reserve(indices.size());
    out.label.reserve(indices.size());
    for (std::size_t i : indices) {
        ECOFAIR_REQUIRE(i < rows(), ErrorCode::InvalidArgument, "row index out of range");
        const auto r = row(i);
        out.features.insert(out.features.end(), r.begin(), r.end());
        out.group.push_back(group[i]);
        out.label.push_back(label[i]);
    }
    return out;
}

void Dataset::validate() const {
    ECOFAIR_REQUIRE(label.size() == group.size() && features.size() == group.size() * cols(),
                    ErrorCode::ArityMismatch, "inconsistent dataset dimensions");
    for (double v : features) {
        ECOFAIR_REQUIRE(std::isfinite(v), ErrorCode::InvalidArgument, "non-finite feature value");
    }
}

void LearnerConfig::validate() const {
    ECOFAIR_REQUIRE(max_iterations > 0 && max_depth > 0 && min_leaf > 0, ErrorCode::InvalidArgument,
                    "iteration, depth and leaf bounds must be positive");
    ECOFAIR_REQUIRE(ridge >= 0.0 && tolerance > 0.0, ErrorCode::InvalidArgument, "invalid ridge or tolerance");
    ECOFAIR_REQUIRE(threshold > 0.0 && threshold < 1.0, ErrorCode::InvalidArgument, "threshold must lie in (0,1)");
}

int FittedModel::depth() const {
    if (nodes.empty()) return 0;
    std::function<int(int)> walk = [&](int id) -> int {
        const TreeNode& node = nodes[static_cast<std::size_t>(id)];
        if (node.feature < 0) return 0;
        return 1 + std::max(walk(node.left), walk(node.right));
    };
    return walk(0);
}

FittedModel train(const Dataset& ds, const LearnerConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ds.validate();
    ECOFAIR_REQUIRE(ds.rows() >= 1, ErrorCode::EmptyData, "no training rows");
    FittedModel model;
    if (cfg.kind == LearnerKind::logistic) {
        model = train_logistic(ds, cfg);
    } else {
        const Eigen::MatrixXd x = design_matrix(ds, cfg.use_protected_feature);
        model.kind = LearnerKind::tree;
        model.nodes = TreeBuilder(x, ds.label, cfg).build();
    }
    model.arity = input_arity(ds, cfg.use_protected_feature);
    model.use_protected_feature = cfg.use_protected_feature;
    model.threshold = cfg.threshold;
    model.training_seed = seed;
    return model;
}

Predictions predict(const FittedModel& model, const Dataset& ds) {
    ECOFAIR_REQUIRE(input_arity(ds, model.use_protected_feature) == model.arity, ErrorCode::ArityMismatch,
                    "model expects " + std::to_string(model.arity) + " inputs");
    const Eigen::MatrixXd x = design_matrix(ds, model.use_protected_feature);
    Predictions out;
    out.scores.resize(ds.rows());
    out.labels.resize(ds.rows());
    if (model.kind == LearnerKind::logistic) {
        const Eigen::Map<const Eigen::VectorXd> w(model.coefficients.data(),
                                                  static_cast<Eigen::Index>(model.coefficients.size()));
        const Eigen::VectorXd z = x * w;
        for (std::size_t r = 0; r < ds.rows(); ++r) out.scores[r] = logistic(z(static_cast<Eigen::Index>(r)) + model.intercept);
    } else {
        for (std::size_t r = 0; r < ds.rows(); ++r) out.scores[r] = tree_score(model.nodes, x, static_cast<Eigen::Index>(r));
    }
    for (std::size_t r = 0; r < ds.rows(); ++r) out.labels[r] = out.scores[r] >= model.threshold ? 1 : 0;
    return out;
}

LearnerKind learner_kind_from_string(const std::string& name) {
    if (name == "logistic") return LearnerKind::logistic;
    if (name == "tree") return LearnerKind::tree;
    throw Error(ErrorCode::InvalidArgument, "unknown learner kind '" + name + "'");
}

std::string to_string(LearnerKind kind) { return kind == LearnerKind::logistic ? "logistic" : "tree"; }

nlohmann::json model_to_json(const FittedModel& model) {
    nlohmann::json doc{{"kind", to_string(model.kind)},
                       {"arity", model.arity},
                       {"use_protected_feature", model.use_protected_feature},
                       {"threshold", model.threshold},
                       {"training_seed", model.training_seed}};
    if (model.kind == LearnerKind::logistic) {
        doc["coefficients"] = model.coefficients;
        doc["intercept"] = model.intercept;
    } else {
        nlohmann::json nodes = nlohmann::json::array();
        for (const TreeNode& n : model.nodes) {
            nodes.push_back({{"feature", n.feature},
                             {"threshold", n.threshold},
                             {"left", n.left},
                             {"right", n.right},
                             {"positive_rate", n.positive_rate}});
        }
        doc["nodes"] = std::move(nodes);
    }
    return doc;
}

FittedModel fitted_model_from_json(const nlohmann::json& doc) {
    try {
        FittedModel model;
        model.kind = learner_kind_from_string(doc.at("kind").get<std::string>());
        model.arity = doc.at("arity").get<std::size_t>();
        model.use_protected_feature = doc.at("use_protected_feature").get<bool>();
        model.threshold = doc.at("threshold").get<double>();
        model.training_seed = doc.at("training_seed").get<std::uint64_t>();
        if (model.kind == LearnerKind::logistic) {
            model.coefficients = doc.at("coefficients").get<std::vector<double>>();
            model.intercept = doc.at("intercept").get<double>();
        } else {
            for (const auto& n : doc.at("nodes")) {
                model.nodes.push_back({n.at("feature").get<int>(), n.at("threshold").get<double>(),
                                       n.at("left").get<int>(), n.at("right").get<int>(),
                                       n.at("positive_rate").get<double>()});
            }
        }
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseFailure, std::string("model JSON: ") + e.what());
    }
}

}  // namespace ecofair
