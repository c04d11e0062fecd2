#pragma once

// Evidential value of published ANOVA cell means for the hypothesis that the
// underlying raw data carry positive error correlation (i.e. were fabricated
// by copying), against the ordinary independent-errors model.
//
// Pooled model: one correlation rho shared by all I cells. With
//   SS   = sum_k sum_{i in k} (x_i - xbar_k)^2      (within-group scatter)
//   S    = n SS / (I sigma2)
//   chi(rho) = [(1+(I-1)rho)(1-rho)^{I-1}]^{-1/2}
//              exp( -n rho / (2 sigma2 (1-rho)) * SS )
// the likelihood ratio sup_rho chi(rho) has a closed form: it is 1 when
// S >= (sqrt(I)-1)/(sqrt(I)+1), and max{chi(rho_hat), 1} otherwise, where
//   rho_hat = (1-S)/2 * [1 + sqrt(1 - 4S/((I-1)(1-S)^2))].
//
// Per-group model: each group carries its own rho_k; groups are independent
// and the evidential value is the product of per-group suprema.
//
// Everything runs in log space; the value is exponentiated only for
// reporting, with +infinity as the sentinel once log V exceeds 700 or the
// within-group scatter is exactly zero (chi diverges as rho -> 1).

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "evanova/equicorr.hpp"
#include "evanova/study.hpp"

namespace evanova {

inline constexpr double kLogVOverflow = 700.0;

enum class EvidenceModel { pooled, per_group };

inline const char* to_string(EvidenceModel m) {
    return m == EvidenceModel::pooled ? "pooled" : "per-group";
}

// Scatter level above which the correlation MLE is undefined and the
// evidential value collapses to 1.
inline double s_threshold(int dim) {
    if (dim < 2) throw std::invalid_argument("s_threshold: dim must be >= 2");
    const double r = std::sqrt(static_cast<double>(dim));
    return (r - 1.0) / (r + 1.0);
}

// Arithmetic mean of cell means within each group, in grouping order.
inline std::vector<double> group_means(const CellTable& table, const Grouping& grouping) {
    const auto groups = resolve_groups(table, grouping);
    std::vector<double> out;
    out.reserve(groups.size());
    for (const auto& g : groups) {
        double sum = 0.0;
        for (std::size_t i : g) sum += table.cells[i].mean;
        out.push_back(sum / static_cast<double>(g.size()));
    }
    return out;
}

// sum_k sum_{i in k} (x_i - xbar_k)^2
inline double within_group_ss(const CellTable& table, const Grouping& grouping) {
    const auto groups = resolve_groups(table, grouping);
    const auto means = group_means(table, grouping);
    double ss = 0.0;
    for (std::size_t k = 0; k < groups.size(); ++k)
        for (std::size_t i : groups[k]) {
            const double d = table.cells[i].mean - means[k];
            ss += d * d;
        }
    return ss;
}

// S = n * ss / (dim * sigma2)
inline double s_statistic(double ss, int dim, double n, double sigma2) {
    if (dim < 1) throw std::invalid_argument("s_statistic: dim must be >= 1");
    if (!(n > 0.0)) throw std::invalid_argument("s_statistic: n must be > 0");
    if (!(sigma2 > 0.0)) throw std::invalid_argument("s_statistic: sigma2 must be > 0");
    if (!(ss >= 0.0)) throw std::invalid_argument("s_statistic: ss must be >= 0");
    return n * ss / (dim * sigma2);
}

// Correlation MLE; absent when s exceeds the threshold (the discriminant
// turns negative there). Discriminant values in [-1e-12, 0) caused by
// floating point at the boundary are clamped to 0.
inline std::optional<double> rho_hat(double s, int dim) {
    if (dim < 2) throw std::invalid_argument("rho_hat: dim must be >= 2 (correlation undefined)");
    if (!(s >= 0.0)) throw std::invalid_argument("rho_hat: s must be >= 0");
    if (s >= 1.0) return std::nullopt;  // scatter far beyond any threshold in [0,1)
    const double one_minus = 1.0 - s;
    double disc = 1.0 - 4.0 * s / ((dim - 1) * one_minus * one_minus);
    if (disc < 0.0) {
        if (disc < -1e-12) return std::nullopt;
        disc = 0.0;
    }
    return 0.5 * one_minus * (1.0 + std::sqrt(disc));
}

// log chi(rho) with the within-group scatter passed in as `ss`.
inline double log_chi(double rho, double ss, int dim, double n, double sigma2) {
    require_rho(rho);
    if (!(ss >= 0.0)) throw std::invalid_argument("log_chi: ss must be >= 0");
    if (dim < 1) throw std::invalid_argument("log_chi: dim must be >= 1");
    if (!(n > 0.0) || !(sigma2 > 0.0))
        throw std::invalid_argument("log_chi: n and sigma2 must be > 0");
    return -0.5 * equicorr_logdet(dim, rho) - n * rho / (2.0 * sigma2 * (1.0 - rho)) * ss;
}

inline double chi(double rho, double ss, int dim, double n, double sigma2) {
    return std::exp(log_chi(rho, ss, dim, n, sigma2));
}

struct GroupEvidence {
    double ss = 0.0;        // within-group scatter of this group
    double s = 0.0;         // S statistic
    double rho = 0.0;       // rho-hat (0 when the indicator trips), clamped below 1
    double chi_value = 1.0; // chi at rho; +infinity when degenerate
    double log_factor = 0.0;// log of this group's contribution to V (clamped >= 0)
    bool degenerate = false;
};

struct EvidenceReport {
    EvidenceModel model = EvidenceModel::pooled;
    std::vector<double> s_values;
    std::vector<double> rho_hats;
    std::vector<double> chi_values;
    std::vector<bool> degenerate;
    double log_v = 0.0;  // +infinity for degenerate inputs
    double v = 1.0;      // exp(log_v); +infinity sentinel past the overflow bound

    // inputs echo, so every number in a report is auditable
    double sigma2 = 0.0;
    double n = 0.0;
    std::string grouping_digest;

    bool is_degenerate() const {
        for (bool d : degenerate)
            if (d) return true;
        return false;
    }
};

inline std::string grouping_digest(const Grouping& grouping) {
    // FNV-1a over ids with group separators
    std::uint64_t h = 1469598103934665603ull;
    auto eat = [&h](char c) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    };
    for (const auto& g : grouping.groups) {
        for (const auto& id : g) {
            for (char c : id) eat(c);
            eat('\x1f');
        }
        eat('\x1e');
    }
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

namespace detail {

// One group's contribution: S, rho-hat with indicator, and the supremum of
// chi over rho in (0,1), which is 1 above the threshold and
// max{chi(rho_hat), 1} below it.
inline GroupEvidence group_evidence(double ss, int dim, double n, double sigma2) {
    GroupEvidence g;
    g.ss = ss;
    g.s = s_statistic(ss, dim, n, sigma2);
    if (ss == 0.0) {
        // chi diverges as rho -> 1: no scatter at all within the group
        g.rho = kRhoMax;
        g.chi_value = std::numeric_limits<double>::infinity();
        g.log_factor = std::numeric_limits<double>::infinity();
        g.degenerate = true;
        return g;
    }
    const double thr = s_threshold(dim);
    if (g.s >= thr) {
        g.rho = 0.0;
        g.chi_value = 1.0;
        g.log_factor = 0.0;
        return g;
    }
    const auto estimate = rho_hat(g.s, dim);
    if (!estimate) {  // floating-point tie at the threshold: V = 1 branch
        g.rho = 0.0;
        g.chi_value = 1.0;
        g.log_factor = 0.0;
        return g;
    }
    double rho = *estimate;
    if (rho > kRhoMax) {
        rho = kRhoMax;
        g.degenerate = true;
    }
    g.rho = rho;
    const double lc = log_chi(rho, ss, dim, n, sigma2);
    g.chi_value = std::exp(lc);
    g.log_factor = std::max(lc, 0.0);
    return g;
}

inline double exp_or_sentinel(double log_v) {
    if (std::isinf(log_v) || log_v > kLogVOverflow)
        return std::numeric_limits<double>::infinity();
    return std::exp(log_v);
}

}  // namespace detail

// Pooled-dependence evidential value: one rho across all cells.
inline EvidenceReport evidence_pooled(const StudySummary& study, double sigma2,
                                      std::optional<double> n_override = std::nullopt) {
    if (!(sigma2 > 0.0)) throw std::invalid_argument("evidence_pooled: sigma2 must be > 0");
    const int dim = static_cast<int>(study.table.cells.size());
    if (dim < 2) throw std::invalid_argument("evidence_pooled: at least two cells required");
    const double n = n_override.value_or(study.table.per_cell_count());
    if (!(n > 0.0)) throw std::invalid_argument("evidence_pooled: n must be > 0");

    const double ss = within_group_ss(study.table, study.grouping);
    const auto g = detail::group_evidence(ss, dim, n, sigma2);

    EvidenceReport rep;
    rep.model = EvidenceModel::pooled;
    rep.s_values = {g.s};
    rep.rho_hats = {g.rho};
    rep.chi_values = {g.chi_value};
    rep.degenerate = {g.degenerate};
    rep.log_v = g.log_factor;
    rep.v = detail::exp_or_sentinel(rep.log_v);
    rep.sigma2 = sigma2;
    rep.n = n;
    rep.grouping_digest = grouping_digest(study.grouping);
    return rep;
}

// Per-group dependence: each group carries its own rho_k; V is the product
// of the per-group suprema. Every group needs at least two cells.
inline EvidenceReport evidence_pergroup(const StudySummary& study, double sigma2,
                                        std::optional<double> n_override = std::nullopt) {
    if (!(sigma2 > 0.0)) throw std::invalid_argument("evidence_pergroup: sigma2 must be > 0");
    const double n = n_override.value_or(study.table.per_cell_count());
    if (!(n > 0.0)) throw std::invalid_argument("evidence_pergroup: n must be > 0");

    const auto groups = resolve_groups(study.table, study.grouping);
    const auto means = group_means(study.table, study.grouping);
    for (std::size_t k = 0; k < groups.size(); ++k)
        if (groups[k].size() < 2) {
            std::ostringstream os;
            os << "evidence_pergroup: group " << k + 1 << " has a single cell ('"
               << study.grouping.groups[k].front()
               << "'); per-group correlation is undefined there";
            throw std::invalid_argument(os.str());
        }

    EvidenceReport rep;
    rep.model = EvidenceModel::per_group;
    double log_v = 0.0;
    for (std::size_t k = 0; k < groups.size(); ++k) {
        double ss = 0.0;
        for (std::size_t i : groups[k]) {
            const double d = study.table.cells[i].mean - means[k];
            ss += d * d;
        }
        const auto g =
            detail::group_evidence(ss, static_cast<int>(groups[k].size()), n, sigma2);
        rep.s_values.push_back(g.s);
        rep.rho_hats.push_back(g.rho);
        rep.chi_values.push_back(g.chi_value);
        rep.degenerate.push_back(g.degenerate);
        log_v += g.log_factor;
    }
    rep.log_v = log_v;
    rep.v = detail::exp_or_sentinel(log_v);
    rep.sigma2 = sigma2;
    rep.n = n;
    rep.grouping_digest = grouping_digest(study.grouping);
    return rep;
}

// Evidential values of independent studies combine by multiplication;
// +infinity absorbs. Values below 1 are impossible and rejected.
inline double combine_studies(std::span<const double> values) {
    double product = 1.0;
    for (double v : values) {
        if (!(v >= 1.0)) throw std::invalid_argument("combine_studies: every value must be >= 1");
        product *= v;
    }
    return product;
}

struct OddsInput {
    double prior_odds = 1.0;
};

struct PosteriorOdds {
    double value = 0.0;
    bool exceeds_one = false;  // the disqualification threshold
};

inline PosteriorOdds posterior_odds(const OddsInput& prior, double v) {
    if (!(prior.prior_odds > 0.0))
        throw std::invalid_argument("posterior_odds: prior odds must be > 0");
    PosteriorOdds out;
    out.value = prior.prior_odds * v;
    out.exceeds_one = out.value > 1.0;
    return out;
}

}  // namespace evanova
