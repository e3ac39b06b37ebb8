#include "ecofair/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <thread>

#include "ecofair/audit.hpp"
#include "ecofair/error.hpp"
#include "ecofair/postprocess.hpp"
#include "ecofair/rng.hpp"
#include "ecofair/table.hpp"

namespace ecofair {

namespace {

constexpr double kZ95 = 1.959963984540054;
constexpr std::uint64_t kEvalSplitStream = 0xe7a1ULL;

double gaussian(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
    const double u1 = counter_uniform(seed, stream, index);
    const double u2 = counter_uniform(seed, stream + 1, index);
    return std::sqrt(-2.0 * std::log1p(-u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// Quote-aware CSV splitting (RFC 4180 double quotes).
std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cell.push_back('"');
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cell.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            cells.push_back(std::move(cell));
            cell.clear();
        } else if (c != '\r') {
            cell.push_back(c);
        }
    }
    cells.push_back(std::move(cell));
    return cells;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

// ---------------------------------------------------------------- config io

LearnerConfig learner_from_json(const nlohmann::json& j, std::string* note) {
    LearnerConfig cfg;
    const std::string kind = j.value("kind", std::string("logistic"));
    if (kind == "forest") {
        // No ensemble learner is provided; a deeper single tree stands in.
        cfg.kind = LearnerKind::tree;
        cfg.max_depth = 8;
        cfg.min_leaf = 5;
        if (note) *note = "random forest substituted by a single tree (max_depth 8, min_leaf 5)";
    } else {
        cfg.kind = learner_kind_from_string(kind);
    }
    cfg.max_iterations = j.value("max_iterations", cfg.max_iterations);
    cfg.ridge = j.value("ridge", cfg.ridge);
    cfg.tolerance = j.value("tolerance", cfg.tolerance);
    cfg.max_depth = j.value("max_depth", cfg.max_depth);
    cfg.min_leaf = j.value("min_leaf", cfg.min_leaf);
    cfg.threshold = j.value("threshold", cfg.threshold);
    cfg.use_protected_feature = j.value("use_protected_feature", cfg.use_protected_feature);
    return cfg;
}

nlohmann::json learner_to_json(const LearnerConfig& cfg) {
    return {{"kind", to_string(cfg.kind)},
            {"max_iterations", cfg.max_iterations},
            {"ridge", cfg.ridge},
            {"tolerance", cfg.tolerance},
            {"max_depth", cfg.max_depth},
            {"min_leaf", cfg.min_leaf},
            {"threshold", cfg.threshold},
            {"use_protected_feature", cfg.use_protected_feature}};
}

SyntheticSpec synthetic_from_json(const nlohmann::json& j) {
    SyntheticSpec s;
    s.n_rows = j.value("n_rows", s.n_rows);
    s.feature_dim = j.value("feature_dim", s.feature_dim);
    s.group1_share = j.value("group1_share", s.group1_share);
    if (j.contains("weights")) {
        s.weights[0] = j.at("weights").at(0).get<std::vector<double>>();
        s.weights[1] = j.at("weights").at(1).get<std::vector<double>>();
    } else {
        s.weights = {std::vector<double>(s.feature_dim, 1.0), std::vector<double>(s.feature_dim, 1.0)};
    }
    if (j.contains("intercept")) s.intercept = j.at("intercept").get<std::array<double, 2>>();
    s.shared_proxy = j.value("shared_proxy", s.shared_proxy);
    s.noise = j.value("noise", s.noise);
    s.term_column = j.value("term_column", s.term_column);
    return s;
}

nlohmann::json synthetic_to_json(const SyntheticSpec& s) {
    return {{"n_rows", s.n_rows},         {"feature_dim", s.feature_dim}, {"group1_share", s.group1_share},
            {"weights", s.weights},       {"intercept", s.intercept},     {"shared_proxy", s.shared_proxy},
            {"noise", s.noise},           {"term_column", s.term_column}};
}

// ---------------------------------------------------------------- replicate

struct PreparedExperiment {
    const ExperimentConfig& cfg;
    const Dataset& data;
    Dataset eval;
    std::vector<std::vector<std::size_t>> candidates;  // per lender
    std::vector<std::size_t> pool;
};

std::vector<std::size_t> draw(std::vector<std::size_t> from, std::size_t k, std::mt19937_64& rng) {
    ECOFAIR_REQUIRE(k <= from.size(), ErrorCode::InvalidArgument,
                    "cannot draw " + std::to_string(k) + " rows from " + std::to_string(from.size()));
    for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, from.size() - 1);
        std::swap(from[i], from[pick(rng)]);
    }
    from.resize(k);
    return from;
}

bool serves(const LenderSpec& lender, int group) { return lender.serves_group < 0 || lender.serves_group == group; }

struct LenderState {
    FittedModel model;
    std::vector<std::size_t> fit_rows;
};

class ReplicateRunner {
public:
    explicit ReplicateRunner(const PreparedExperiment& prep) : prep_(prep), cfg_(prep.cfg) {}

    ReplicateResult run(std::size_t index) const {
        ReplicateResult out;
        out.index = index;
        try {
            run_inner(index, out);
            out.ok = true;
        } catch (const std::exception& e) {
            out = ReplicateResult{};
            out.index = index;
            out.ok = false;
            out.error = e.what();
        }
        return out;
    }

private:
    std::vector<std::uint8_t> lender_predictions(std::size_t l, const std::vector<LenderState>& lenders,
                                                 const std::optional<FittedModel>& shared,
                                                 const Dataset& ds) const {
        std::vector<std::uint8_t> labels = predict(lenders[l].model, ds).labels;
        if (shared) {
            const auto shared_labels = predict(*shared, ds).labels;
            for (std::size_t r = 0; r < ds.rows(); ++r) {
                if (ds.group[r] == cfg_.shared_group) labels[r] = shared_labels[r];
            }
        }
        return labels;
    }

    void run_inner(std::size_t index, ReplicateResult& out) const {
        const std::size_t n = cfg_.lenders.size();
        std::mt19937_64 rng(derive_seed(cfg_.base_seed, index));
        const bool calibrate = cfg_.fit_split == FitSplit::calibration;
        const std::size_t per_draw = cfg_.train_size * (calibrate ? 2 : 1);

        std::vector<LenderState> lenders(n);
        std::vector<std::vector<std::size_t>> train_rows(n);
        auto assign = [&](std::size_t l, std::vector<std::size_t> rows) {
            train_rows[l].assign(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(cfg_.train_size));
            if (calibrate) {
                lenders[l].fit_rows.assign(rows.begin() + static_cast<std::ptrdiff_t>(cfg_.train_size), rows.end());
            } else {
                lenders[l].fit_rows = train_rows[l];
            }
        };

        std::optional<FittedModel> shared;
        if (cfg_.mode == ExperimentMode::shared_data) {
            const auto rows = draw(prep_.pool, per_draw, rng);
            for (std::size_t l = 0; l < n; ++l) assign(l, rows);
        } else {
            if (cfg_.mode == ExperimentMode::third_party) {
                const auto rows = draw(prep_.pool, cfg_.train_size, rng);
                shared = train(prep_.data.subset(rows), cfg_.third_party_learner, derive_seed(rng(), 0));
            }
            for (std::size_t l = 0; l < n; ++l) assign(l, draw(prep_.candidates[l], per_draw, rng));
        }
        for (std::size_t l = 0; l < n; ++l) {
            lenders[l].model = train(prep_.data.subset(train_rows[l]), cfg_.lenders[l].learner,
                                     derive_seed(cfg_.base_seed ^ index, l));
        }

        // Evaluation table.
        const Dataset& eval = prep_.eval;
        PredictionTable table(n);
        {
            std::vector<std::vector<std::uint8_t>> preds(n);
            for (std::size_t l = 0; l < n; ++l) preds[l] = lender_predictions(l, lenders, shared, eval);
            table.reserve(eval.rows());
            std::vector<std::uint8_t> served(n);
            std::vector<double> probs(n);
            for (std::size_t r = 0; r < eval.rows(); ++r) {
                for (std::size_t l = 0; l < n; ++l) {
                    served[l] = serves(cfg_.lenders[l], eval.group[r]) ? 1 : 0;
                    probs[l] = served[l] ? static_cast<double>(preds[l][r]) : 0.0;
                }
                table.add_row(std::to_string(r), eval.group[r], eval.label[r], served, probs);
            }
        }
        const FairnessLevels before = empirical_fairness(table);

        out.eo_fit_before.assign(n, 0.0);
        out.eo_fit_after.assign(n, 0.0);
        for (std::size_t l = 0; l < n; ++l) {
            if (cfg_.lenders[l].serves_group >= 0) continue;  // single-group lender: nothing to equalize
            const Dataset fit = prep_.data.subset(lenders[l].fit_rows);
            const auto labels = lender_predictions(l, lenders, shared, fit);
            PredictionTable fit_table(1);
            fit_table.reserve(fit.rows());
            const std::uint8_t served = 1;
            for (std::size_t r = 0; r < fit.rows(); ++r) {
                const double p = labels[r];
                fit_table.add_row(std::to_string(r), fit.group[r], fit.label[r], {&served, 1}, {&p, 1});
            }
            const StratumMasses masses = stratum_masses(fit_table, 0);
            const PolicyFitReport report = fit_eo_policy(masses);
            const DerivedPolicy identity = DerivedPolicy::identity();
            out.eo_fit_before[l] =
                std::abs(true_positive_rate(identity, masses, 0) - true_positive_rate(identity, masses, 1));
            out.eo_fit_after[l] = std::abs(true_positive_rate(report.policy, masses, 0) -
                                           true_positive_rate(report.policy, masses, 1));
            table = apply_policy(report.policy, table, l);
        }
        const FairnessLevels after = empirical_fairness(table);

        out.eoc_before = before.eoc;
        out.eoc_after = after.eoc;
        out.eo_before = before.eo_per_lender;
        out.eo_after = after.eo_per_lender;
        out.harmed = out.eoc_after > out.eoc_before;
        if (out.eoc_before > kRatioFloor) out.ratio = out.eoc_after / out.eoc_before;
    }

    const PreparedExperiment& prep_;
    const ExperimentConfig& cfg_;
};

PreparedExperiment prepare(const ExperimentConfig& cfg, const Dataset& data) {
    cfg.validate();
    data.validate();
    PreparedExperiment prep{cfg, data, {}, {}, {}};
    ECOFAIR_REQUIRE(cfg.eval_size < data.rows(), ErrorCode::InvalidArgument,
                    "evaluation split must leave rows for training");

    // One fixed evaluation split per experiment, drawn before any partitioning.
    std::vector<std::size_t> perm(data.rows());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::mt19937_64 rng(derive_seed(cfg.base_seed, kEvalSplitStream));
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::size_t> eval_rows(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(cfg.eval_size));
    std::sort(eval_rows.begin(), eval_rows.end());
    prep.eval = data.subset(eval_rows);
    prep.pool.assign(perm.begin() + static_cast<std::ptrdiff_t>(cfg.eval_size), perm.end());
    std::sort(prep.pool.begin(), prep.pool.end());

    const std::size_t n = cfg.lenders.size();
    const std::size_t per_draw = cfg.train_size * (cfg.fit_split == FitSplit::calibration ? 2 : 1);
    std::size_t split_col = 0;
    if (cfg.mode == ExperimentMode::split_by_column) {
        const auto it = std::find(data.feature_names.begin(), data.feature_names.end(), cfg.split_column);
        ECOFAIR_REQUIRE(it != data.feature_names.end(), ErrorCode::MissingColumn,
                        "split column '" + cfg.split_column + "' not among features");
        split_col = static_cast<std::size_t>(it - data.feature_names.begin());
    }
    prep.candidates.resize(n);
    for (std::size_t l = 0; l < n; ++l) {
        auto& cand = prep.candidates[l];
        for (std::size_t r : prep.pool) {
            bool keep = true;
            if (cfg.mode == ExperimentMode::split_by_column) keep = data.at(r, split_col) == cfg.lenders[l].split_value;
            if (cfg.mode == ExperimentMode::subset_serving) keep = serves(cfg.lenders[l], data.group[r]);
            if (keep) cand.push_back(r);
        }
        ECOFAIR_REQUIRE(cand.size() >= per_draw, ErrorCode::InvalidArgument,
                        "lender " + std::to_string(l + 1) + " has " + std::to_string(cand.size()) +
                            " candidate training rows, needs " + std::to_string(per_draw));
    }
    return prep;
}

}  // namespace

// ---------------------------------------------------------------- synthetic data

void SyntheticSpec::validate() const {
    ECOFAIR_REQUIRE(feature_dim >= 1, ErrorCode::InvalidArgument, "feature_dim must be at least 1");
    ECOFAIR_REQUIRE(n_rows >= 1, ErrorCode::InvalidArgument, "n_rows must be at least 1");
    ECOFAIR_REQUIRE(group1_share >= 0.0 && group1_share <= 1.0, ErrorCode::InvalidArgument,
                    "group1_share must lie in [0,1]");
    ECOFAIR_REQUIRE(weights[0].size() == feature_dim && weights[1].size() == feature_dim, ErrorCode::ArityMismatch,
                    "one signal weight per feature and group");
    ECOFAIR_REQUIRE(noise >= 0.0 && std::isfinite(noise), ErrorCode::InvalidArgument, "noise must be >= 0");
}

Dataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
    spec.validate();
    Dataset ds;
    for (std::size_t j = 0; j < spec.feature_dim; ++j) ds.feature_names.push_back("x" + std::to_string(j + 1));
    if (spec.term_column) ds.feature_names.push_back("term");
    ds.features.reserve(spec.n_rows * ds.cols());
    std::vector<double> x(ds.cols());
    for (std::size_t i = 0; i < spec.n_rows; ++i) {
        const int a = counter_uniform(seed, 0, i) < spec.group1_share ? 1 : 0;
        const auto& w = spec.weights[static_cast<std::size_t>(a)];
        double signal = 0.0;
        for (std::size_t j = 0; j < spec.feature_dim; ++j) {
            x[j] = gaussian(seed, 100 + 2 * j, i);
            signal += w[j] * x[j];
        }
        if (spec.shared_proxy && a == 0) {
            const double norm = std::sqrt(std::inner_product(w.begin(), w.end(), w.begin(), 0.0));
            x[0] = norm > 0.0 ? signal / norm : 0.0;
            std::fill(x.begin() + 1, x.begin() + static_cast<std::ptrdiff_t>(spec.feature_dim), 0.0);
        }
        if (spec.term_column) x[spec.feature_dim] = counter_uniform(seed, 50, i) < 0.5 ? 0.0 : 1.0;
        double latent = spec.intercept[static_cast<std::size_t>(a)] + signal;
        if (spec.noise > 0.0) {
            const double u = counter_uniform(seed, 1, i);
            latent += spec.noise * std::log(u / (1.0 - u));
        }
        ds.add_row(x, a, latent > 0.0 ? 1 : 0);
    }
    return ds;
}

// ---------------------------------------------------------------- csv ingestion

Dataset load_csv(std::istream& in, const CsvSchema& schema) {
    std::string line;
    ECOFAIR_REQUIRE(static_cast<bool>(std::getline(in, line)), ErrorCode::ParseFailure, "missing header row");
    const auto header = split_csv(line);
    std::map<std::string, std::size_t> col;
    for (std::size_t c = 0; c < header.size(); ++c) col[trim(header[c])] = c;
    auto index_of = [&](const std::string& name) {
        const auto it = col.find(name);
        ECOFAIR_REQUIRE(it != col.end(), ErrorCode::MissingColumn, "column '" + name + "' not in header");
        return it->second;
    };
    std::vector<std::size_t> numeric;
    for (const auto& name : schema.feature_columns) numeric.push_back(index_of(name));
    std::vector<std::size_t> categorical;
    for (const auto& name : schema.categorical_columns) categorical.push_back(index_of(name));
    const std::size_t group_col = index_of(schema.group_column);
    const std::size_t label_col = index_of(schema.label_column);

    struct RawRow {
        std::vector<double> numeric;
        std::vector<std::string> categorical;
        int group;
        int label;
    };
    std::vector<RawRow> rows;
    std::vector<std::set<std::string>> levels(categorical.size());
    std::size_t row_number = 0;
    while (std::getline(in, line)) {
        ++row_number;
        if (trim(line).empty() || line == "\r") continue;
        const auto cells = split_csv(line);
        ECOFAIR_REQUIRE(cells.size() == header.size(), ErrorCode::ParseFailure,
                        "row " + std::to_string(row_number) + ": expected " + std::to_string(header.size()) +
                            " cells, got " + std::to_string(cells.size()));
        RawRow raw;
        for (std::size_t k = 0; k < numeric.size(); ++k) {
            const std::string cell = trim(cells[numeric[k]]);
            double v = 0.0;
            const char* end = cell.data() + cell.size();
            auto [ptr, ec] = std::from_chars(cell.data(), end, v);
            ECOFAIR_REQUIRE(!cell.empty() && ec == std::errc() && ptr == end && std::isfinite(v),
                            ErrorCode::ParseFailure,
                            "row " + std::to_string(row_number) + ", column " + schema.feature_columns[k] + ": '" +
                                cell + "'");
            raw.numeric.push_back(v);
        }
        for (std::size_t k = 0; k < categorical.size(); ++k) {
            raw.categorical.push_back(trim(cells[categorical[k]]));
            levels[k].insert(raw.categorical.back());
        }
        raw.group = trim(cells[group_col]) == schema.group_positive ? 1 : 0;
        raw.label = trim(cells[label_col]) == schema.label_positive ? 1 : 0;
        rows.push_back(std::move(raw));
    }

    Dataset ds;
    ds.feature_names = schema.feature_columns;
    std::vector<std::vector<std::string>> level_list;
    for (std::size_t k = 0; k < categorical.size(); ++k) {
        level_list.emplace_back(levels[k].begin(), levels[k].end());
        for (const auto& lv : level_list.back()) ds.feature_names.push_back(schema.categorical_columns[k] + "=" + lv);
    }
    std::vector<double> x;
    for (const auto& raw : rows) {
        x = raw.numeric;
        for (std::size_t k = 0; k < categorical.size(); ++k) {
            for (const auto& lv : level_list[k]) x.push_back(raw.categorical[k] == lv ? 1.0 : 0.0);
        }
        ds.add_row(x, raw.group, raw.label);
    }
    return ds;
}

Dataset load_csv(const std::string& path, const CsvSchema& schema) {
    std::ifstream in(path);
    ECOFAIR_REQUIRE(in.good(), ErrorCode::ParseFailure, "cannot open '" + path + "'");
    return load_csv(in, schema);
}

// ---------------------------------------------------------------- config

ExperimentMode experiment_mode_from_string(const std::string& name) {
    if (name == "shared-data") return ExperimentMode::shared_data;
    if (name == "split-by-column") return ExperimentMode::split_by_column;
    if (name == "independent-samples") return ExperimentMode::independent_samples;
    if (name == "subset-serving") return ExperimentMode::subset_serving;
    if (name == "third-party") return ExperimentMode::third_party;
    throw Error(ErrorCode::InvalidArgument, "unknown experiment mode '" + name + "'");
}

std::string to_string(ExperimentMode mode) {
    switch (mode) {
        case ExperimentMode::shared_data: return "shared-data";
        case ExperimentMode::split_by_column: return "split-by-column";
        case ExperimentMode::independent_samples: return "independent-samples";
        case ExperimentMode::subset_serving: return "subset-serving";
        case ExperimentMode::third_party: return "third-party";
    }
    return "unknown";
}

void ExperimentConfig::validate() const {
    ECOFAIR_REQUIRE(lenders.size() == 2 || lenders.size() == 3, ErrorCode::InvalidArgument,
                    "experiments support 2 or 3 lenders");
    ECOFAIR_REQUIRE(replicates >= 1, ErrorCode::InvalidArgument, "replicates must be at least 1");
    ECOFAIR_REQUIRE(train_size >= 2, ErrorCode::InvalidArgument, "train_size must be at least 2");
    ECOFAIR_REQUIRE(eval_size >= 4, ErrorCode::InvalidArgument, "eval_size must be at least 4");
    ECOFAIR_REQUIRE(shared_group == 0 || shared_group == 1, ErrorCode::InvalidArgument, "shared_group must be 0 or 1");
    for (const auto& l : lenders) {
        l.learner.validate();
        ECOFAIR_REQUIRE(l.serves_group >= -1 && l.serves_group <= 1, ErrorCode::InvalidArgument,
                        "serves_group must be -1, 0 or 1");
        ECOFAIR_REQUIRE(mode == ExperimentMode::subset_serving || l.serves_group == -1, ErrorCode::InvalidArgument,
                        "serving restrictions require subset-serving mode");
    }
    if (mode == ExperimentMode::subset_serving) {
        ECOFAIR_REQUIRE(std::any_of(lenders.begin(), lenders.end(), [](const LenderSpec& l) { return l.serves_group < 0; }) ||
                            (std::any_of(lenders.begin(), lenders.end(), [](const LenderSpec& l) { return l.serves_group == 0; }) &&
                             std::any_of(lenders.begin(), lenders.end(), [](const LenderSpec& l) { return l.serves_group == 1; })),
                        ErrorCode::InvalidArgument, "every group must be served by some lender");
    }
    if (mode == ExperimentMode::third_party) third_party_learner.validate();
    ECOFAIR_REQUIRE(synthetic.has_value() != !csv_path.empty(), ErrorCode::InvalidArgument,
                    "exactly one data source (synthetic or csv) is required");
    if (synthetic) {
        synthetic->validate();
        const std::size_t per_draw = train_size * (fit_split == FitSplit::calibration ? 2 : 1);
        const bool disjoint = mode == ExperimentMode::split_by_column;
        const std::size_t needed = (disjoint ? per_draw * lenders.size() : per_draw) + eval_size;
        ECOFAIR_REQUIRE(needed <= synthetic->n_rows, ErrorCode::InvalidArgument,
                        "configuration needs " + std::to_string(needed) + " rows, data has " +
                            std::to_string(synthetic->n_rows));
    }
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& doc) {
    try {
        ExperimentConfig cfg;
        const auto& data = doc.at("data");
        if (data.contains("synthetic")) {
            cfg.synthetic = synthetic_from_json(data.at("synthetic"));
        } else {
            const auto& csv = data.at("csv");
            cfg.csv_path = csv.at("path").get<std::string>();
            cfg.schema.feature_columns = csv.value("features", std::vector<std::string>{});
            cfg.schema.categorical_columns = csv.value("categorical", std::vector<std::string>{});
            cfg.schema.group_column = csv.at("group_column").get<std::string>();
            cfg.schema.group_positive = csv.at("group_positive").get<std::string>();
            cfg.schema.label_column = csv.at("label_column").get<std::string>();
            cfg.schema.label_positive = csv.at("label_positive").get<std::string>();
        }
        cfg.mode = experiment_mode_from_string(doc.value("mode", std::string("shared-data")));
        cfg.split_column = doc.value("split_column", cfg.split_column);
        cfg.shared_group = doc.value("shared_group", cfg.shared_group);
        if (doc.contains("third_party_learner")) cfg.third_party_learner = learner_from_json(doc.at("third_party_learner"), nullptr);
        for (const auto& l : doc.at("lenders")) {
            LenderSpec spec;
            spec.learner = learner_from_json(l.value("learner", nlohmann::json::object()), &spec.note);
            spec.serves_group = l.value("serves_group", -1);
            spec.split_value = l.value("split_value", 0.0);
            cfg.lenders.push_back(std::move(spec));
        }
        cfg.train_size = doc.value("train_size", cfg.train_size);
        cfg.replicates = doc.value("replicates", cfg.replicates);
        cfg.eval_size = doc.value("eval_size", cfg.eval_size);
        const std::string fit = doc.value("fit_split", std::string("training"));
        ECOFAIR_REQUIRE(fit == "training" || fit == "calibration", ErrorCode::InvalidArgument,
                        "fit_split must be training or calibration");
        cfg.fit_split = fit == "training" ? FitSplit::training : FitSplit::calibration;
        cfg.base_seed = doc.value("base_seed", cfg.base_seed);
        cfg.validate();
        return cfg;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseFailure, std::string("experiment config: ") + e.what());
    }
}

nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg) {
    nlohmann::json doc;
    if (cfg.synthetic) {
        doc["data"] = {{"synthetic", synthetic_to_json(*cfg.synthetic)}};
    } else {
        doc["data"] = {{"csv",
                        {{"path", cfg.csv_path},
                         {"features", cfg.schema.feature_columns},
                         {"categorical", cfg.schema.categorical_columns},
                         {"group_column", cfg.schema.group_column},
                         {"group_positive", cfg.schema.group_positive},
                         {"label_column", cfg.schema.label_column},
                         {"label_positive", cfg.schema.label_positive}}}};
    }
    doc["mode"] = to_string(cfg.mode);
    doc["split_column"] = cfg.split_column;
    doc["shared_group"] = cfg.shared_group;
    doc["third_party_learner"] = learner_to_json(cfg.third_party_learner);
    nlohmann::json lenders = nlohmann::json::array();
    for (const auto& l : cfg.lenders) {
        lenders.push_back({{"learner", learner_to_json(l.learner)},
                           {"serves_group", l.serves_group},
                           {"split_value", l.split_value}});
    }
    doc["lenders"] = std::move(lenders);
    doc["train_size"] = cfg.train_size;
    doc["replicates"] = cfg.replicates;
    doc["eval_size"] = cfg.eval_size;
    doc["fit_split"] = cfg.fit_split == FitSplit::training ? "training" : "calibration";
    doc["base_seed"] = cfg.base_seed;
    return doc;
}

// ---------------------------------------------------------------- run

std::vector<ReplicateResult> run_experiment(const ExperimentConfig& cfg, const Dataset& data, unsigned workers) {
    const PreparedExperiment prep = prepare(cfg, data);
    const ReplicateRunner runner(prep);
    std::vector<ReplicateResult> results(cfg.replicates);
    const unsigned threads = std::max(1U, std::min<unsigned>(workers, static_cast<unsigned>(cfg.replicates)));
    if (threads == 1) {
        for (std::size_t r = 0; r < cfg.replicates; ++r) results[r] = runner.run(r);
        return results;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (std::size_t r = next++; r < cfg.replicates; r = next++) results[r] = runner.run(r);
        });
    }
    for (auto& t : pool) t.join();
    return results;
}

std::vector<ReplicateResult> run_experiment(const ExperimentConfig& cfg, unsigned workers) {
    cfg.validate();
    const Dataset data = cfg.synthetic ? generate_synthetic(*cfg.synthetic, cfg.base_seed)
                                       : load_csv(cfg.csv_path, cfg.schema);
    return run_experiment(cfg, data, workers);
}

// ---------------------------------------------------------------- statistics

IntervalEstimate proportion_interval(std::size_t successes, std::size_t n, IntervalMethod method) {
    ECOFAIR_REQUIRE(n >= 1, ErrorCode::NoReplicates, "no successful replicates");
    IntervalEstimate est;
    est.n = n;
    est.method = method;
    const double dn = static_cast<double>(n);
    const double p = static_cast<double>(successes) / dn;
    est.point = p;
    if (method == IntervalMethod::normal) {
        const double half = kZ95 * std::sqrt(p * (1.0 - p) / dn);
        est.lo = std::max(0.0, p - half);
        est.hi = std::min(1.0, p + half);
    } else {
        const double z2 = kZ95 * kZ95;
        const double center = (p + z2 / (2.0 * dn)) / (1.0 + z2 / dn);
        const double half = kZ95 * std::sqrt(p * (1.0 - p) / dn + z2 / (4.0 * dn * dn)) / (1.0 + z2 / dn);
        est.lo = std::max(0.0, center - half);
        est.hi = std::min(1.0, center + half);
    }
    return est;
}

IntervalEstimate harm_likelihood(const std::vector<ReplicateResult>& results, IntervalMethod method) {
    std::size_t ok = 0, harmed = 0;
    for (const auto& r : results) {
        if (!r.ok) continue;
        ++ok;
        if (r.harmed) ++harmed;
    }
    return proportion_interval(harmed, ok, method);
}

EffectSizeEstimate effect_size(const std::vector<ReplicateResult>& results) {
    EffectSizeEstimate est;
    std::vector<double> ratios;
    for (const auto& r : results) {
        if (!r.ok || !r.harmed) continue;
        if (!r.ratio) {
            ++est.excluded_count;
            continue;
        }
        ratios.push_back(*r.ratio);
    }
    ECOFAIR_REQUIRE(ratios.size() >= 2, ErrorCode::InsufficientRatios,
                    "need at least two harmed replicates with a nonzero baseline, have " +
                        std::to_string(ratios.size()));
    const double m = static_cast<double>(ratios.size());
    const double mean = std::accumulate(ratios.begin(), ratios.end(), 0.0) / m;
    double ss = 0.0;
    for (double r : ratios) ss += (r - mean) * (r - mean);
    const double half = kZ95 * std::sqrt(ss / (m - 1.0)) / std::sqrt(m);
    est.interval = {mean, mean - half, mean + half, ratios.size(), IntervalMethod::normal};
    return est;
}

void write_results_csv(std::ostream& out, const std::vector<ReplicateResult>& results, std::size_t lenders) {
    out << "replicate,status,eoc_before,eoc_after,harmed,ratio";
    for (std::size_t l = 1; l <= lenders; ++l) out << ",eo_before_" << l;
    for (std::size_t l = 1; l <= lenders; ++l) out << ",eo_after_" << l;
    out << ",error\n";
    for (const auto& r : results) {
        out << r.index << ',' << (r.ok ? "ok" : "failed") << ',';
        if (r.ok) {
            out << format_double(r.eoc_before) << ',' << format_double(r.eoc_after) << ',' << (r.harmed ? 1 : 0) << ','
                << (r.ratio ? format_double(*r.ratio) : std::string());
            for (std::size_t l = 0; l < lenders; ++l) out << ',' << format_double(r.eo_before[l]);
            for (std::size_t l = 0; l < lenders; ++l) out << ',' << format_double(r.eo_after[l]);
            out << ",\n";
        } else {
            out << ",,,";
            for (std::size_t l = 0; l < 2 * lenders; ++l) out << ',';
            std::string msg = r.error;
            std::replace(msg.begin(), msg.end(), ',', ';');
            std::replace(msg.begin(), msg.end(), '\n', ' ');
            out << ',' << msg << '\n';
        }
    }
}

namespace {

nlohmann::json interval_json(const IntervalEstimate& e) {
    return {{"point", e.point},
            {"lo", e.lo},
            {"hi", e.hi},
            {"n", e.n},
            {"method", e.method == IntervalMethod::normal ? "normal" : "wilson"}};
}

}  // namespace

nlohmann::json experiment_summary(const ExperimentConfig& cfg, const std::vector<ReplicateResult>& results,
                                  IntervalMethod method) {
    nlohmann::json doc;
    std::size_t failures = 0, harmed = 0;
    for (const auto& r : results) {
        if (!r.ok) ++failures;
        else if (r.harmed) ++harmed;
    }
    doc["replicates"] = results.size();
    doc["harmed"] = harmed;
    doc["failures"] = failures;
    try {
        doc["harm_ci"] = interval_json(harm_likelihood(results, method));
    } catch (const Error&) {
        doc["harm_ci"] = nullptr;
    }
    std::size_t excluded = 0;
    try {
        const auto eff = effect_size(results);
        doc["effect_ci"] = interval_json(eff.interval);
        excluded = eff.excluded_count;
    } catch (const Error&) {
        doc["effect_ci"] = nullptr;
        for (const auto& r : results)
            if (r.ok && r.harmed && !r.ratio) ++excluded;
    }
    doc["excluded_count"] = excluded;
    nlohmann::json notes = nlohmann::json::array();
    for (std::size_t l = 0; l < cfg.lenders.size(); ++l) {
        if (!cfg.lenders[l].note.empty()) notes.push_back("lender " + std::to_string(l + 1) + ": " + cfg.lenders[l].note);
    }
    doc["metadata"] = {{"mode", to_string(cfg.mode)},
                       {"base_seed", cfg.base_seed},
                       {"train_size", cfg.train_size},
                       {"eval_size", cfg.eval_size},
                       {"lenders", cfg.lenders.size()},
                       {"fit_split", cfg.fit_split == FitSplit::training ? "training" : "calibration"},
                       {"notes", notes}};
    return doc;
}

}  // namespace ecofair
