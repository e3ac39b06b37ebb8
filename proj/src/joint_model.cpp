#include "ecofair/joint_model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <string>
#include <thread>

#include "ecofair/error.hpp"
#include "ecofair/rng.hpp"

namespace ecofair {

namespace {

constexpr double kClampSlack = 1e-15;
constexpr double kRenormSlack = 1e-9;

std::size_t cell_count(std::size_t lenders) { return std::size_t{1} << lenders; }

void require_lender_count(std::size_t n) {
    ECOFAIR_REQUIRE(n >= 1 && n <= kMaxExactLenders, ErrorCode::InvalidArgument,
                    "exact enumeration supports 1.." + std::to_string(kMaxExactLenders) + " lenders, got " +
                        std::to_string(n));
}

void require_probability(double p, const char* what) {
    ECOFAIR_REQUIRE(std::isfinite(p) && p >= 0.0 && p <= 1.0, ErrorCode::InvalidArgument,
                    std::string(what) + " must lie in [0,1]");
}

double offer_rate(const JointPmf& pmf) { return 1.0 - pmf.no_offer_mass(); }

}  // namespace

JointPmf::JointPmf(std::size_t lenders, std::vector<double> cells) : lenders_(lenders), cells_(std::move(cells)) {
    require_lender_count(lenders);
    ECOFAIR_REQUIRE(cells_.size() == cell_count(lenders), ErrorCode::InvalidModel,
                    "pmf over " + std::to_string(lenders) + " lenders needs " +
                        std::to_string(cell_count(lenders)) + " cells");
    double sum = 0.0;
    for (double& c : cells_) {
        ECOFAIR_REQUIRE(std::isfinite(c) && c >= -kClampSlack, ErrorCode::InvalidModel,
                        "negative pmf cell " + std::to_string(c));
        if (c < 0.0) c = 0.0;
        sum += c;
    }
    ECOFAIR_REQUIRE(std::abs(sum - 1.0) <= kRenormSlack, ErrorCode::InvalidModel,
                    "pmf cells sum to " + std::to_string(sum));
    if (sum != 1.0) {
        for (double& c : cells_) c /= sum;
    }
}

JointPmf JointPmf::product(std::span<const double> offer_probs) {
    const std::size_t n = offer_probs.size();
    require_lender_count(n);
    for (double p : offer_probs) require_probability(p, "offer probability");
    std::vector<double> cells(cell_count(n), 1.0);
    for (std::uint32_t mask = 0; mask < cells.size(); ++mask) {
        for (std::size_t l = 0; l < n; ++l) {
            cells[mask] *= (mask >> l & 1U) ? offer_probs[l] : 1.0 - offer_probs[l];
        }
    }
    return JointPmf(n, std::move(cells));
}

double JointPmf::offer_marginal(std::size_t lender) const {
    double m = 0.0;
    for (std::uint32_t mask = 0; mask < cells_.size(); ++mask) {
        if (mask >> lender & 1U) m += cells_[mask];
    }
    return m;
}

double JointPmf::pearson(std::size_t l, std::size_t m) const {
    const double pl = offer_marginal(l);
    const double pm = offer_marginal(m);
    double both = 0.0;
    for (std::uint32_t mask = 0; mask < cells_.size(); ++mask) {
        if ((mask >> l & 1U) && (mask >> m & 1U)) both += cells_[mask];
    }
    const double denom = sigma(pl) * sigma(pm);
    ECOFAIR_REQUIRE(denom > 0.0, ErrorCode::DegenerateVariance, "constant lender output");
    return (both - pl * pm) / denom;
}

double JointPmf::expected_utility(UtilityKind util) const {
    double w = 0.0;
    for (std::uint32_t mask = 0; mask < cells_.size(); ++mask) {
        w += cells_[mask] * util.value(static_cast<std::size_t>(std::popcount(mask)));
    }
    return w;
}

JointPmf JointPmf::randomized(std::span<const double> keep_if_one, std::span<const double> flip_if_zero) const {
    ECOFAIR_REQUIRE(keep_if_one.size() == lenders_ && flip_if_zero.size() == lenders_, ErrorCode::ArityMismatch,
                    "one randomization pair per lender");
    std::vector<double> out(cells_.size(), 0.0);
    for (std::uint32_t from = 0; from < cells_.size(); ++from) {
        if (cells_[from] == 0.0) continue;
        for (std::uint32_t to = 0; to < cells_.size(); ++to) {
            double p = cells_[from];
            for (std::size_t l = 0; l < lenders_ && p > 0.0; ++l) {
                const double offer = (from >> l & 1U) ? keep_if_one[l] : flip_if_zero[l];
                p *= (to >> l & 1U) ? offer : 1.0 - offer;
            }
            out[to] += p;
        }
    }
    return JointPmf(lenders_, std::move(out));
}

void EcosystemModel::validate() const {
    const std::size_t n = positive[0].lenders();
    for (const JointPmf* p : {&positive[1], &negative[0], &negative[1]}) {
        ECOFAIR_REQUIRE(p->lenders() == n, ErrorCode::InvalidModel, "all pmfs must share the lender count");
    }
    for (double pi : base_rate) {
        ECOFAIR_REQUIRE(std::isfinite(pi) && pi >= 0.0 && pi <= 1.0, ErrorCode::InvalidModel,
                        "base rates must lie in [0,1]");
    }
}

EcosystemModel make_model(JointPmf positive_g0, JointPmf positive_g1, std::span<const double> fp_rates_g0,
                          std::span<const double> fp_rates_g1, std::array<double, 2> base_rate) {
    EcosystemModel model{{std::move(positive_g0), std::move(positive_g1)},
                         {JointPmf::product(fp_rates_g0), JointPmf::product(fp_rates_g1)},
                         base_rate};
    model.validate();
    return model;
}

JointPmf pair_pmf_from_correlation(double beta1, double beta2, double rho, const Tolerances& tol) {
    const Interval range = correlation_feasible_range(beta1, beta2);
    ECOFAIR_REQUIRE(std::isfinite(rho) && range.contains(rho, tol.feasibility), ErrorCode::InfeasibleCorrelation,
                    "rho=" + std::to_string(rho) + " outside [" + std::to_string(range.lo) + ", " +
                        std::to_string(range.hi) + "]");
    rho = std::clamp(rho, range.lo, range.hi);
    const double cov = rho * sigma(beta1) * sigma(beta2);
    std::vector<double> cells(4);
    cells[0b00] = cov + beta1 * beta2;                  // both miss
    cells[0b01] = beta2 * (1.0 - beta1) - cov;          // only lender 1 offers
    cells[0b10] = beta1 * (1.0 - beta2) - cov;          // only lender 2 offers
    cells[0b11] = cov + (1.0 - beta1) * (1.0 - beta2);  // both offer
    try {
        return JointPmf(2, std::move(cells));
    } catch (const Error& e) {
        throw Error(ErrorCode::InfeasibleCorrelation, e.what());
    }
}

JointPmf extremal_pmf(std::span<const double> betas, Coupling mode) {
    const std::size_t n = betas.size();
    ECOFAIR_REQUIRE(n >= 2, ErrorCode::InvalidArgument, "need at least two classifiers");
    require_lender_count(n);
    for (double b : betas) require_probability(b, "beta");

    // Each lender's correct set is a subset of the unit interval; the pmf is
    // read off the elementary segments between breakpoints.
    std::vector<double> start(n), length(n);
    std::vector<double> breaks{0.0, 1.0};
    double cursor = 0.0;
    for (std::size_t l = 0; l < n; ++l) {
        length[l] = 1.0 - betas[l];
        if (mode == Coupling::max_overlap) {
            start[l] = betas[l];
            breaks.push_back(betas[l]);
        } else {
            start[l] = cursor - std::floor(cursor);
            cursor += length[l];
            breaks.push_back(start[l]);
            const double end = start[l] + length[l];
            breaks.push_back(end - std::floor(end));
        }
    }
    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());

    std::vector<double> cells(cell_count(n), 0.0);
    for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
        const double lo = breaks[i];
        const double hi = breaks[i + 1];
        if (hi <= lo) continue;
        const double mid = 0.5 * (lo + hi);
        std::uint32_t mask = 0;
        for (std::size_t l = 0; l < n; ++l) {
            bool correct;
            if (length[l] >= 1.0) {
                correct = true;
            } else if (mode == Coupling::max_overlap) {
                correct = mid >= start[l];
            } else {
                double offset = mid - start[l];
                offset -= std::floor(offset);
                correct = offset < length[l];
            }
            if (correct) mask |= 1U << l;
        }
        cells[mask] += hi - lo;
    }
    return JointPmf(n, std::move(cells));
}

std::pair<JointPmf, JointPmf> monoculture_pmf(double beta, std::size_t lenders) {
    require_probability(beta, "beta");
    ECOFAIR_REQUIRE(lenders >= 2, ErrorCode::InvalidArgument, "monoculture needs at least two lenders");
    require_lender_count(lenders);
    std::vector<double> shared(cell_count(lenders), 0.0);
    shared.front() = beta;
    shared.back() = 1.0 - beta;
    std::vector<double> offers(lenders, 1.0 - beta);
    return {JointPmf(lenders, std::move(shared)), JointPmf::product(offers)};
}

std::array<JointPmf, 2> overlap_pmf(double beta1, double beta2, const OverlapRow& g0, const OverlapRow& g1,
                                    const Tolerances& tol) {
    require_probability(beta1, "beta1");
    require_probability(beta2, "beta2");
    auto build = [&](const OverlapRow& row) {
        row.validate(tol.identity);
        const double only1 = 1.0 - row.served_by_2;
        const double only2 = 1.0 - row.served_by_1;
        const double both = row.served_by_both;
        std::vector<double> cells(4, 0.0);
        cells[0b00] = only1 * beta1 + only2 * beta2 + both * beta1 * beta2;
        cells[0b01] = only1 * (1.0 - beta1) + both * (1.0 - beta1) * beta2;
        cells[0b10] = only2 * (1.0 - beta2) + both * beta1 * (1.0 - beta2);
        cells[0b11] = both * (1.0 - beta1) * (1.0 - beta2);
        return JointPmf(2, std::move(cells));
    };
    return {build(g0), build(g1)};
}

FairnessLevels pmf_fairness_levels(const EcosystemModel& model, UtilityKind util) {
    model.validate();
    util.validate();
    const std::size_t n = model.lenders();
    FairnessLevels out;

    std::array<double, 2> deserving_offer{}, undeserving_offer{}, welfare{}, approval{};
    for (int a = 0; a < 2; ++a) {
        const double pi = model.base_rate[static_cast<std::size_t>(a)];
        deserving_offer[a] = offer_rate(model.pmf(a, 1));
        undeserving_offer[a] = offer_rate(model.pmf(a, 0));
        welfare[a] = model.pmf(a, 1).expected_utility(util);
        approval[a] = pi * deserving_offer[a] + (1.0 - pi) * undeserving_offer[a];
    }
    out.eoc_signed = deserving_offer[0] - deserving_offer[1];
    out.veoc_signed = welfare[0] - welfare[1];
    out.dpc_signed = approval[0] - approval[1];
    out.eoc = std::abs(out.eoc_signed);
    out.veoc = std::abs(out.veoc_signed);
    out.edc = std::max(out.eoc, std::abs(undeserving_offer[0] - undeserving_offer[1]));
    out.dpc = std::abs(out.dpc_signed);

    for (std::size_t l = 0; l < n; ++l) {
        std::array<double, 2> tpr{}, fpr{}, rate{};
        for (int a = 0; a < 2; ++a) {
            const double pi = model.base_rate[static_cast<std::size_t>(a)];
            tpr[a] = model.pmf(a, 1).offer_marginal(l);
            fpr[a] = model.pmf(a, 0).offer_marginal(l);
            rate[a] = pi * tpr[a] + (1.0 - pi) * fpr[a];
        }
        const double eo = std::abs(tpr[0] - tpr[1]);
        out.eo_per_lender.push_back(eo);
        out.ed_per_lender.push_back(std::max(eo, std::abs(fpr[0] - fpr[1])));
        out.dp_per_lender.push_back(std::abs(rate[0] - rate[1]));
    }
    return out;
}

std::uint64_t SampleBatch::stratum_total(int group, int label) const {
    const auto& c = counts[static_cast<std::size_t>(group)][static_cast<std::size_t>(label)];
    return std::accumulate(c.begin(), c.end(), std::uint64_t{0});
}

SampleBatch sample(const EcosystemModel& model, std::uint64_t total, std::uint64_t seed, double group1_share,
                   unsigned workers) {
    model.validate();
    ECOFAIR_REQUIRE(total >= 1, ErrorCode::EmptySample, "sample size must be at least 1");
    require_probability(group1_share, "group1_share");
    const std::size_t n = model.lenders();
    const std::size_t cells = cell_count(n);

    std::array<std::array<std::vector<double>, 2>, 2> cdf;
    for (int a = 0; a < 2; ++a) {
        for (int y = 0; y < 2; ++y) {
            auto& c = cdf[a][y];
            const auto src = model.pmf(a, y).cells();
            c.assign(src.begin(), src.end());
            std::partial_sum(c.begin(), c.end(), c.begin());
        }
    }

    auto draw_range = [&](std::uint64_t begin, std::uint64_t end) {
        std::array<std::array<std::vector<std::uint64_t>, 2>, 2> local;
        for (auto& g : local)
            for (auto& v : g) v.assign(cells, 0);
        for (std::uint64_t i = begin; i < end; ++i) {
            const int a = counter_uniform(seed, 0, i) < group1_share ? 1 : 0;
            const int y = counter_uniform(seed, 1, i) < model.base_rate[static_cast<std::size_t>(a)] ? 1 : 0;
            const double u = counter_uniform(seed, 2, i);
            const auto& c = cdf[a][y];
            auto it = std::upper_bound(c.begin(), c.end(), u);
            std::size_t mask = static_cast<std::size_t>(it - c.begin());
            if (mask >= cells) mask = cells - 1;
            // Skip zero-mass cells that upper_bound can land on through rounding.
            while (model.pmf(a, y)[static_cast<std::uint32_t>(mask)] == 0.0 && mask > 0) --mask;
            ++local[a][y][mask];
        }
        return local;
    };

    SampleBatch batch;
    batch.lenders = n;
    batch.total = total;
    batch.seed = seed;
    for (auto& g : batch.counts)
        for (auto& v : g) v.assign(cells, 0);

    const unsigned chunks = std::max(1U, workers);
    std::vector<decltype(draw_range(0, 0))> partial(chunks);
    std::vector<std::thread> threads;
    for (unsigned w = 0; w < chunks; ++w) {
        const std::uint64_t begin = total * w / chunks;
        const std::uint64_t end = total * (w + 1) / chunks;
        if (chunks == 1) {
            partial[w] = draw_range(begin, end);
        } else {
            threads.emplace_back([&, w, begin, end] { partial[w] = draw_range(begin, end); });
        }
    }
    for (auto& t : threads) t.join();
    for (const auto& p : partial)
        for (int a = 0; a < 2; ++a)
            for (int y = 0; y < 2; ++y)
                for (std::size_t m = 0; m < cells; ++m) batch.counts[a][y][m] += p[a][y][m];
    return batch;
}

SampleBatch exact_expansion(const EcosystemModel& model, std::uint64_t units, double group1_share) {
    model.validate();
    require_probability(group1_share, "group1_share");
    const std::size_t cells = cell_count(model.lenders());
    SampleBatch batch;
    batch.lenders = model.lenders();
    batch.seed = 0;
    for (int a = 0; a < 2; ++a) {
        const double share = a == 1 ? group1_share : 1.0 - group1_share;
        for (int y = 0; y < 2; ++y) {
            const double pi = model.base_rate[static_cast<std::size_t>(a)];
            const double stratum = share * (y == 1 ? pi : 1.0 - pi);
            auto& out = batch.counts[a][y];
            out.assign(cells, 0);
            for (std::uint32_t m = 0; m < cells; ++m) {
                const double x = static_cast<double>(units) * stratum * model.pmf(a, y)[m];
                const double r = std::round(x);
                ECOFAIR_REQUIRE(std::abs(x - r) <= 1e-6, ErrorCode::InvalidArgument,
                                "expansion with " + std::to_string(units) + " units is not integral");
                out[m] = static_cast<std::uint64_t>(r);
                batch.total += out[m];
            }
        }
    }
    ECOFAIR_REQUIRE(batch.total >= 1, ErrorCode::EmptySample, "expansion produced no rows");
    return batch;
}

PredictionTable batch_to_table(const SampleBatch& batch, const ServingMask& serving) {
    const std::size_t n = batch.lenders;
    PredictionTable table(n);
    table.reserve(batch.total);
    std::vector<std::uint8_t> served(n, 1);
    std::vector<double> probs(n);
    std::uint64_t next_id = 0;
    for (int a = 0; a < 2; ++a) {
        const auto& mask_for_group = serving[static_cast<std::size_t>(a)];
        ECOFAIR_REQUIRE(mask_for_group.empty() || mask_for_group.size() == n, ErrorCode::ArityMismatch,
                        "serving mask must list every lender");
        for (std::size_t l = 0; l < n; ++l) served[l] = mask_for_group.empty() ? 1 : mask_for_group[l];
        for (int y = 0; y < 2; ++y) {
            const auto& counts = batch.counts[a][y];
            for (std::uint32_t m = 0; m < counts.size(); ++m) {
                if (counts[m] == 0) continue;
                for (std::size_t l = 0; l < n; ++l) {
                    probs[l] = (m >> l & 1U) ? 1.0 : 0.0;
                    ECOFAIR_REQUIRE(served[l] || probs[l] == 0.0, ErrorCode::InvalidArgument,
                                    "unserved lender " + std::to_string(l + 1) + " has offers in group " +
                                        std::to_string(a));
                }
                for (std::uint64_t k = 0; k < counts[m]; ++k) {
                    table.add_row("r" + std::to_string(next_id++), a, y, served, probs);
                }
            }
        }
    }
    return table;
}

namespace {

std::string mask_to_bits(std::uint32_t mask, std::size_t n) {
    std::string s(n, '0');
    for (std::size_t l = 0; l < n; ++l) {
        if (mask >> l & 1U) s[l] = '1';
    }
    return s;
}

std::uint32_t bits_to_mask(const std::string& bits, std::size_t n) {
    ECOFAIR_REQUIRE(bits.size() == n, ErrorCode::InvalidModel, "output vector '" + bits + "' has wrong length");
    std::uint32_t mask = 0;
    for (std::size_t l = 0; l < n; ++l) {
        ECOFAIR_REQUIRE(bits[l] == '0' || bits[l] == '1', ErrorCode::InvalidModel,
                        "output vector '" + bits + "' is not a bitstring");
        if (bits[l] == '1') mask |= 1U << l;
    }
    return mask;
}

const char* pmf_key(int a, int y) {
    static const char* keys[2][2] = {{"g0y0", "g0y1"}, {"g1y0", "g1y1"}};
    return keys[a][y];
}

}  // namespace

nlohmann::json model_to_json(const EcosystemModel& model) {
    const std::size_t n = model.lenders();
    nlohmann::json doc;
    doc["n"] = n;
    doc["base_rates"] = {model.base_rate[0], model.base_rate[1]};
    nlohmann::json pmfs = nlohmann::json::object();
    for (int a = 0; a < 2; ++a) {
        for (int y = 1; y >= 0; --y) {
            nlohmann::json cells = nlohmann::json::object();
            const auto& pmf = model.pmf(a, y);
            for (std::uint32_t m = 0; m < pmf.cells().size(); ++m) cells[mask_to_bits(m, n)] = pmf[m];
            pmfs[pmf_key(a, y)] = std::move(cells);
        }
    }
    doc["pmf"] = std::move(pmfs);
    return doc;
}

EcosystemModel model_from_json(const nlohmann::json& doc) {
    try {
        const std::size_t n = doc.at("n").get<std::size_t>();
        require_lender_count(n);
        const auto rates = doc.at("base_rates").get<std::vector<double>>();
        ECOFAIR_REQUIRE(rates.size() == 2, ErrorCode::InvalidModel, "base_rates needs two entries");
        const auto& pmfs = doc.at("pmf");

        auto read_pmf = [&](const nlohmann::json& cells) {
            std::vector<double> out(cell_count(n), 0.0);
            for (const auto& [key, value] : cells.items()) out[bits_to_mask(key, n)] = value.get<double>();
            return JointPmf(n, std::move(out));
        };
        auto read_side = [&](int a, int y) -> JointPmf {
            if (pmfs.contains(pmf_key(a, y))) return read_pmf(pmfs.at(pmf_key(a, y)));
            ECOFAIR_REQUIRE(y == 0 && doc.contains("fp_rates"), ErrorCode::InvalidModel,
                            std::string("missing pmf ") + pmf_key(a, y));
            const auto fp = doc.at("fp_rates").at(a == 0 ? "g0" : "g1").get<std::vector<double>>();
            ECOFAIR_REQUIRE(fp.size() == n, ErrorCode::InvalidModel, "fp_rates needs one entry per lender");
            return JointPmf::product(fp);
        };
        EcosystemModel model{{read_side(0, 1), read_side(1, 1)}, {read_side(0, 0), read_side(1, 0)},
                             {rates[0], rates[1]}};
        model.validate();
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidModel, e.what());
    }
}

}  // namespace ecofair
