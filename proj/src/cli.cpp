#include "ecofair/cli.hpp"

#include <algorithm>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ecofair/audit.hpp"
#include "ecofair/error.hpp"
#include "ecofair/fairness_core.hpp"
#include "ecofair/harness.hpp"
#include "ecofair/joint_model.hpp"
#include "ecofair/postprocess.hpp"
#include "ecofair/table.hpp"
#include "ecofair/verify.hpp"

namespace ecofair {

namespace {

using nlohmann::json;

struct GlobalOptions {
    std::uint64_t seed = 0;
    std::string format = "json";
    std::optional<double> tolerance;
};

void flatten(const json& j, const std::string& prefix, std::vector<std::pair<std::string, std::string>>& rows) {
    if (j.is_object()) {
        for (auto it = j.begin(); it != j.end(); ++it) flatten(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), rows);
    } else if (j.is_array()) {
        for (std::size_t i = 0; i < j.size(); ++i) flatten(j[i], prefix + "." + std::to_string(i + 1), rows);
    } else if (j.is_number_float()) {
        rows.emplace_back(prefix, format_double(j.get<double>()));
    } else if (j.is_string()) {
        rows.emplace_back(prefix, j.get<std::string>());
    } else {
        rows.emplace_back(prefix, j.dump());
    }
}

void emit(const json& doc, const GlobalOptions& g, std::ostream& out) {
    if (g.format == "csv") {
        std::vector<std::pair<std::string, std::string>> rows;
        flatten(doc, "", rows);
        out << "key,value\n";
        for (const auto& [k, v] : rows) out << k << ',' << v << '\n';
    } else {
        out << doc.dump(2) << '\n';
    }
}

Tolerances tolerances(const GlobalOptions& g) {
    Tolerances tol;
    if (g.tolerance) tol.feasibility = *g.tolerance;
    return tol;
}

json levels_json(const FairnessLevels& f) {
    return {{"eo_per_lender", f.eo_per_lender},
            {"ed_per_lender", f.ed_per_lender},
            {"dp_per_lender", f.dp_per_lender},
            {"eoc", f.eoc},
            {"veoc", f.veoc},
            {"edc", f.edc},
            {"dpc", f.dpc}};
}

OverlapRow parse_overlap(const std::vector<double>& v, const char* name) {
    ECOFAIR_REQUIRE(v.size() == 3, ErrorCode::InvalidArgument,
                    std::string(name) + " needs three values: served_by_1,served_by_2,served_by_both");
    return {v[0], v[1], v[2]};
}

// ---------------------------------------------------------------- analytic

struct AnalyticArgs {
    double beta1 = 0.0, beta2 = 0.0, eta1 = 0.0, eta2 = 0.0, rho0 = 0.0, rho1 = 0.0, k = 1.0;
    std::vector<double> betas, g0, g1;
};

json run_analytic(const std::string& which, const AnalyticArgs& a, const GlobalOptions& g) {
    const Tolerances tol = tolerances(g);
    json doc;
    if (which == "eoc-corr") {
        doc["formula"] = "eoc-correlation";
        doc["eoc"] = eoc_correlation_level(a.beta1, a.beta2, {a.rho0, a.rho1}, tol);
        doc["worst_case"] = eoc_correlation_worst_case(a.beta1, a.beta2);
    } else if (which == "veoc-corr") {
        doc["formula"] = "veoc-correlation-0-1-k";
        doc["k"] = a.k;
        doc["veoc"] = veoc_correlation_level(UtilityKind{a.k}, a.beta1, a.beta2, {a.rho0, a.rho1}, tol);
        doc["worst_case"] = veoc_worst_case(UtilityKind{a.k}, a.beta1, a.beta2);
    } else if (which == "eoc-n") {
        doc["formula"] = "eoc-worst-case-n-lenders";
        doc["lenders"] = a.betas.size();
        doc["worst_case"] = eoc_worst_case_n(a.betas);
    } else if (which == "eoc-overlap") {
        doc["formula"] = "eoc-overlap";
        const OverlapRow r0 = parse_overlap(a.g0, "--g0"), r1 = parse_overlap(a.g1, "--g1");
        doc["eoc"] = eoc_overlap_level(a.beta1, a.beta2, r0, r1, tol);
        doc["worst_case"] = eoc_overlap_worst_case(a.beta1, a.beta2);
    } else if (which == "dpc-corr") {
        doc["formula"] = "dpc-correlation";
        doc["dpc"] = dpc_correlation_level(a.eta1, a.eta2, {a.rho0, a.rho1}, tol);
        doc["worst_case"] = dpc_correlation_worst_case(a.eta1, a.eta2);
    } else if (which == "dpc-overlap") {
        doc["formula"] = "dpc-overlap";
        const OverlapRow r0 = parse_overlap(a.g0, "--g0"), r1 = parse_overlap(a.g1, "--g1");
        doc["dpc"] = dpc_overlap_level(a.eta1, a.eta2, r0, r1, tol);
        doc["worst_case"] = dpc_overlap_worst_case(a.eta1, a.eta2);
    } else if (which == "feasible-range") {
        doc["formula"] = "correlation-feasible-range";
        const Interval r = correlation_feasible_range(a.beta1, a.beta2);
        doc["lo"] = r.lo;
        doc["hi"] = r.hi;
    }
    return doc;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
    std::string scenario;
    std::string model_path;
    std::string phase = "before";
    double beta = 0.2;
    double alpha = 0.1;
    std::size_t lenders = 2;
    std::uint64_t samples = 100000;
    unsigned workers = 1;
};

struct Scenario {
    std::optional<EcosystemModel> model;
    ServingMask serving;
    json notes = json::object();
};

// Applies a derived policy to one lender's output inside every pmf.
EcosystemModel apply_policy_to_model(const EcosystemModel& model, const DerivedPolicy& policy, std::size_t lender) {
    EcosystemModel out = model;
    const std::size_t n = model.lenders();
    for (int a = 0; a < 2; ++a) {
        std::vector<double> keep(n, 1.0), flip(n, 0.0);
        keep[lender] = policy.at(a, 1);
        flip[lender] = policy.at(a, 0);
        out.positive[a] = model.positive[a].randomized(keep, flip);
        out.negative[a] = model.negative[a].randomized(keep, flip);
    }
    return out;
}

Scenario build_scenario(const SimulateArgs& s) {
    ECOFAIR_REQUIRE(s.phase == "before" || s.phase == "after", ErrorCode::InvalidArgument,
                    "--phase must be before or after");
    Scenario sc;
    if (!s.model_path.empty()) {
        std::ifstream in(s.model_path);
        ECOFAIR_REQUIRE(in.good(), ErrorCode::ParseFailure, "cannot open '" + s.model_path + "'");
        json doc;
        try {
            in >> doc;
        } catch (const json::exception& e) {
            throw Error(ErrorCode::InvalidModel, std::string("model JSON: ") + e.what());
        }
        sc.model = model_from_json(doc);
        return sc;
    }
    if (s.scenario == "example1" || s.scenario == "monoculture") {
        const double beta = s.scenario == "example1" ? 0.1 : s.beta;
        const std::size_t n = s.scenario == "example1" ? 2 : s.lenders;
        auto [shared, independent] = monoculture_pmf(beta, n);
        const std::vector<double> fp(n, s.alpha);
        sc.model = make_model(shared, independent, fp, fp);
        sc.notes = {{"beta", beta}, {"lenders", n}, {"shared_classifier_group", 0}};
        return sc;
    }
    if (s.scenario == "example3") {
        // Group 0: identical classifiers. Group 1: correlated, higher miss rate.
        const JointPmf g0 = pair_pmf_from_correlation(0.1, 0.1, 1.0);
        const JointPmf g1 = pair_pmf_from_correlation(0.2, 0.2, 0.375);
        const std::vector<double> fp{s.alpha, s.alpha};
        sc.model = make_model(g0, g1, fp, fp);
        if (s.phase == "after") {
            // Each lender independently turns half of its group-1 rejections into offers.
            DerivedPolicy policy;
            policy.p[1][0] = 0.5;
            sc.model = apply_policy_to_model(apply_policy_to_model(*sc.model, policy, 0), policy, 1);
            sc.notes["policy"] = policy_to_json(policy);
        }
        return sc;
    }
    if (s.scenario == "example4") {
        // Lender 2 serves group 1 only and is perfect there; lender 1 misses a
        // beta share of deserving group-1 borrowers.
        const double beta = s.beta;
        const JointPmf g0(2, {0.0, 1.0, 0.0, 0.0});
        const JointPmf g1(2, {0.0, 0.0, beta, 1.0 - beta});
        const std::vector<double> fp0{s.alpha, 0.0}, fp1{s.alpha, s.alpha};
        sc.model = make_model(g0, g1, fp0, fp1);
        sc.serving = {std::vector<std::uint8_t>{1, 0}, std::vector<std::uint8_t>{1, 1}};
        sc.notes = {{"beta", beta}};
        if (s.phase == "after") {
            const auto cands = uniform_flip_candidates(0.0, beta, s.alpha, s.alpha);
            const FlipCandidate& pick = cands[1];  // common miss rate = beta
            sc.model = apply_policy_to_model(*sc.model, pick.policy, 0);
            sc.notes["policy"] = policy_to_json(pick.policy);
            sc.notes["candidate_cost"] = pick.cost;
            sc.notes["common_fn_rate"] = pick.common_fn_rate;
        }
        return sc;
    }
    throw Error(ErrorCode::InvalidArgument, "unknown scenario '" + s.scenario + "'");
}

// A lender serving only one group reports zero per-lender gaps.
void apply_serving(FairnessLevels& f, const ServingMask& serving) {
    for (std::size_t l = 0; l < f.eo_per_lender.size(); ++l) {
        const bool s0 = serving[0].empty() || serving[0][l];
        const bool s1 = serving[1].empty() || serving[1][l];
        if (s0 && s1) continue;
        f.eo_per_lender[l] = 0.0;
        f.ed_per_lender[l] = 0.0;
        f.dp_per_lender[l] = 0.0;
    }
}

json run_simulate(const SimulateArgs& s, const GlobalOptions& g) {
    const Scenario sc = build_scenario(s);
    FairnessLevels exact = pmf_fairness_levels(*sc.model);
    apply_serving(exact, sc.serving);
    json doc;
    doc["scenario"] = s.model_path.empty() ? s.scenario : "model";
    doc["phase"] = s.phase;
    doc["seed"] = g.seed;
    doc["samples"] = s.samples;
    doc["parameters"] = sc.notes;
    doc["eoc_exact"] = exact.eoc;
    doc["exact"] = levels_json(exact);
    if (s.samples > 0) {
        const SampleBatch batch = sample(*sc.model, s.samples, g.seed, 0.5, s.workers);
        const PredictionTable table = batch_to_table(batch, sc.serving);
        const FairnessLevels sampled = empirical_fairness(table);
        doc["eoc_sampled"] = sampled.eoc;
        doc["eoc_se"] = eoc_standard_error(table);
        doc["sampled"] = levels_json(sampled);
    }
    return doc;
}

// ---------------------------------------------------------------- audit / adjust

PredictionTable read_table(const std::string& path) {
    std::ifstream in(path);
    ECOFAIR_REQUIRE(in.good(), ErrorCode::ParseFailure, "cannot open '" + path + "'");
    PredictionTable t = PredictionTable::read_csv(in);
    t.validate();
    return t;
}

json run_audit(const std::string& path, double k) {
    const PredictionTable table = read_table(path);
    const FairnessLevels f = empirical_fairness(table, UtilityKind{k});
    json doc = levels_json(f);
    doc["rows"] = table.size();
    doc["lenders"] = table.lenders();
    doc["k"] = k;
    doc["eoc_se"] = eoc_standard_error(table);
    return doc;
}

struct AdjustArgs {
    std::string table;
    std::size_t lender = 1;
    std::string policy_out;
    std::string table_out;
};

json run_adjust(const AdjustArgs& a) {
    const PredictionTable table = read_table(a.table);
    ECOFAIR_REQUIRE(a.lender >= 1 && a.lender <= table.lenders(), ErrorCode::InvalidArgument,
                    "--lender must be between 1 and " + std::to_string(table.lenders()));
    const std::size_t l = a.lender - 1;
    const PolicyFitReport fit = fit_eo_policy(table, l);
    const PredictionTable adjusted = apply_policy(fit.policy, table, l);
    const FairnessLevels before = empirical_fairness(table);
    const FairnessLevels after = empirical_fairness(adjusted);
    json doc;
    doc["lender"] = a.lender;
    doc["policy"] = policy_to_json(fit.policy)["p"];
    doc["identity"] = fit.policy.is_identity();
    doc["achieved_tpr"] = fit.achieved_tpr;
    doc["expected_loss"] = fit.expected_loss;
    doc["candidates_examined"] = fit.candidates_examined;
    doc["degenerate_base"] = fit.degenerate_base;
    doc["eo_before"] = before.eo_per_lender[l];
    doc["eo_after"] = after.eo_per_lender[l];
    doc["eoc_before"] = before.eoc;
    doc["eoc_after"] = after.eoc;
    if (!a.policy_out.empty()) {
        std::ofstream out(a.policy_out);
        ECOFAIR_REQUIRE(out.good(), ErrorCode::InvalidArgument, "cannot write '" + a.policy_out + "'");
        out << policy_to_json(fit.policy).dump(2) << '\n';
    }
    if (!a.table_out.empty()) {
        std::ofstream out(a.table_out);
        ECOFAIR_REQUIRE(out.good(), ErrorCode::InvalidArgument, "cannot write '" + a.table_out + "'");
        adjusted.write_csv(out);
    }
    return doc;
}

// ---------------------------------------------------------------- experiment

struct ExperimentArgs {
    std::string config;
    unsigned workers = 1;
    std::string results_out;
    std::string summary_out;
    bool wilson = false;
};

json run_experiment_command(const ExperimentArgs& a, const GlobalOptions& g, std::ostream& out) {
    std::ifstream in(a.config);
    ECOFAIR_REQUIRE(in.good(), ErrorCode::ParseFailure, "cannot open '" + a.config + "'");
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseFailure, std::string("experiment config: ") + e.what());
    }
    ExperimentConfig cfg = experiment_config_from_json(doc);
    if (g.seed != 0 && !doc.contains("base_seed")) cfg.base_seed = g.seed;
    const auto results = run_experiment(cfg, a.workers);
    const json summary = experiment_summary(cfg, results, a.wilson ? IntervalMethod::wilson : IntervalMethod::normal);
    if (!a.results_out.empty()) {
        std::ofstream f(a.results_out);
        ECOFAIR_REQUIRE(f.good(), ErrorCode::InvalidArgument, "cannot write '" + a.results_out + "'");
        write_results_csv(f, results, cfg.lenders.size());
    }
    if (!a.summary_out.empty()) {
        std::ofstream f(a.summary_out);
        ECOFAIR_REQUIRE(f.good(), ErrorCode::InvalidArgument, "cannot write '" + a.summary_out + "'");
        f << summary.dump(2) << '\n';
    }
    if (g.format == "csv") {
        write_results_csv(out, results, cfg.lenders.size());
        return nullptr;
    }
    return summary;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Ecosystem-level fairness analysis for competing lenders"};
    app.name("ecofair");
    app.require_subcommand(1);

    GlobalOptions g;
    app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
    app.add_option("--format", g.format, "Output format")->check(CLI::IsMember({"json", "csv"}))->capture_default_str();
    app.add_option("--tolerance", g.tolerance, "Numeric tolerance override");

    // analytic
    auto* analytic = app.add_subcommand("analytic", "Closed-form levels and worst-case bounds");
    analytic->require_subcommand(1);
    AnalyticArgs aa;
    std::string analytic_which;
    auto add_beta_pair = [&](CLI::App* c) {
        c->add_option("--beta1", aa.beta1, "Miss rate of lender 1")->required();
        c->add_option("--beta2", aa.beta2, "Miss rate of lender 2")->required();
    };
    auto add_eta_pair = [&](CLI::App* c) {
        c->add_option("--eta1", aa.eta1, "Approval rate of lender 1")->required();
        c->add_option("--eta2", aa.eta2, "Approval rate of lender 2")->required();
    };
    auto add_rho = [&](CLI::App* c) {
        c->add_option("--rho0", aa.rho0, "Correlation in group 0")->required();
        c->add_option("--rho1", aa.rho1, "Correlation in group 1")->required();
    };
    auto add_overlap = [&](CLI::App* c) {
        c->add_option("--g0", aa.g0, "Group 0 overlap: by1,by2,both")->delimiter(',')->required();
        c->add_option("--g1", aa.g1, "Group 1 overlap: by1,by2,both")->delimiter(',')->required();
    };
    auto* eoc_corr = analytic->add_subcommand("eoc-corr", "EOC level from per-group correlation");
    add_beta_pair(eoc_corr);
    add_rho(eoc_corr);
    auto* veoc_corr = analytic->add_subcommand("veoc-corr", "Welfare EOC level under 0-1-k utility");
    add_beta_pair(veoc_corr);
    add_rho(veoc_corr);
    veoc_corr->add_option("--k", aa.k, "Utility of two or more offers")->required();
    auto* eoc_n = analytic->add_subcommand("eoc-n", "Worst-case EOC for n lenders");
    eoc_n->add_option("--betas", aa.betas, "Comma-separated miss rates")->delimiter(',')->required();
    auto* eoc_overlap = analytic->add_subcommand("eoc-overlap", "EOC level from overlap profiles");
    add_beta_pair(eoc_overlap);
    add_overlap(eoc_overlap);
    auto* dpc_corr = analytic->add_subcommand("dpc-corr", "DPC level from per-group correlation");
    add_eta_pair(dpc_corr);
    add_rho(dpc_corr);
    auto* dpc_overlap = analytic->add_subcommand("dpc-overlap", "DPC level from overlap profiles");
    add_eta_pair(dpc_overlap);
    add_overlap(dpc_overlap);
    auto* feasible = analytic->add_subcommand("feasible-range", "Feasible correlation range");
    add_beta_pair(feasible);

    // simulate
    auto* simulate = app.add_subcommand("simulate", "Exact and Monte-Carlo levels for a joint model");
    SimulateArgs sa;
    auto* scen = simulate->add_option("--scenario", sa.scenario, "Named scenario")
                     ->check(CLI::IsMember({"example1", "example3", "example4", "monoculture"}));
    auto* model_opt = simulate->add_option("--model", sa.model_path, "Model JSON file");
    scen->excludes(model_opt);
    simulate->add_option("--phase", sa.phase, "before or after adjustment")->capture_default_str();
    simulate->add_option("--beta", sa.beta, "Miss rate (monoculture, example4)")->capture_default_str();
    simulate->add_option("--alpha", sa.alpha, "False-positive rate")->capture_default_str();
    simulate->add_option("--n", sa.lenders, "Number of lenders (monoculture)")->capture_default_str();
    simulate->add_option("--samples", sa.samples, "Monte-Carlo sample size (0 skips)")->capture_default_str();
    simulate->add_option("--workers", sa.workers, "Sampling threads")->capture_default_str();

    // audit
    auto* audit = app.add_subcommand("audit", "Fairness levels of a prediction table");
    std::string audit_table;
    double audit_k = 1.0;
    audit->add_option("--table", audit_table, "Prediction table CSV")->required();
    audit->add_option("--k", audit_k, "Utility of two or more offers")->capture_default_str();

    // adjust
    auto* adjust = app.add_subcommand("adjust", "Fit and apply an equal-opportunity policy for one lender");
    AdjustArgs ad;
    adjust->add_option("--table", ad.table, "Prediction table CSV")->required();
    adjust->add_option("--lender", ad.lender, "Lender index (1-based)")->capture_default_str();
    adjust->add_option("--policy-out", ad.policy_out, "Write the policy JSON here");
    adjust->add_option("--table-out", ad.table_out, "Write the adjusted table CSV here");

    // experiment
    auto* experiment = app.add_subcommand("experiment", "Run a replicate experiment");
    ExperimentArgs ea;
    experiment->add_option("--config", ea.config, "Experiment config JSON")->required();
    experiment->add_option("--workers", ea.workers, "Worker threads")->capture_default_str();
    experiment->add_option("--results", ea.results_out, "Write per-replicate CSV here");
    experiment->add_option("--summary", ea.summary_out, "Write summary JSON here");
    experiment->add_flag("--wilson", ea.wilson, "Wilson instead of normal intervals");

    // verify
    auto* verify = app.add_subcommand("verify", "Run the built-in oracle checks");
    std::string suite = "all";
    std::vector<std::string> suites{"all"};
    for (const auto& s : verify_suite_names()) suites.push_back(s);
    verify->add_option("--suite", suite, "Suite to run")->check(CLI::IsMember(suites))->capture_default_str();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        if (analytic->parsed()) {
            for (auto* sub : analytic->get_subcommands()) analytic_which = sub->get_name();
            emit(run_analytic(analytic_which, aa, g), g, out);
        } else if (simulate->parsed()) {
            ECOFAIR_REQUIRE(!sa.scenario.empty() || !sa.model_path.empty(), ErrorCode::InvalidArgument,
                            "simulate needs --scenario or --model");
            emit(run_simulate(sa, g), g, out);
        } else if (audit->parsed()) {
            emit(run_audit(audit_table, audit_k), g, out);
        } else if (adjust->parsed()) {
            emit(run_adjust(ad), g, out);
        } else if (experiment->parsed()) {
            const json summary = run_experiment_command(ea, g, out);
            if (!summary.is_null()) emit(summary, g, out);
        } else if (verify->parsed()) {
            const double tol = g.tolerance.value_or(1e-12);
            const auto checks = run_verify_suite(suite, g.seed, tol);
            json doc;
            doc["suite"] = suite;
            doc["seed"] = g.seed;
            doc["checks"] = json::array();
            bool all = true;
            for (const auto& c : checks) {
                doc["checks"].push_back({{"suite", c.suite}, {"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
                all = all && c.pass;
            }
            doc["passed"] = all;
            emit(doc, g, out);
            return all ? 0 : 1;
        }
    } catch (const Error& e) {
        err << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}

}  // namespace ecofair
