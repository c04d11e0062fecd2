#pragma once

// Recovery of the error-variance estimate from published F-statistics and
// cell means, with rounding-uncertainty propagation.
//
// For a balanced full factorial with M observations per cell, the mean
// square of an effect e is computed from cell means alone:
//
//   r_e(cell) = sum over subsets s of e of (-1)^{|e|-|s|} * mean of all
//               cells agreeing with `cell` on the factors in s
//   MS_e      = M * sum_cells r_e(cell)^2 / df_e,   df_e = prod (levels-1)
//
// Dividing MS_e by the published F-value for that effect recovers the mean
// square for error, i.e. an estimate of sigma^2. Because the published cell
// means are rounded, the recovered value is only known up to an interval;
// MS_e is a convex quadratic of the mean vector, so its maximum over the
// rounding box sits at a box vertex while its minimum may be interior.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "evanova/study.hpp"

namespace evanova {

struct EffectMeanSquare {
    std::vector<std::string> effect;
    int df = 0;
    double value = 0.0;
    double m_per_cell = 0.0;
};

// Recovered sigma^2 with provenance.
struct VarianceEstimate {
    double value = 0.0;
    std::optional<Interval> interval;      // rounding interval, when known
    std::vector<std::size_t> sources;      // indices into the study's f_statistics
    std::string method;                    // pooling descriptor
};

// Indices of cells matching every restriction (empty subset = all cells).
inline std::vector<std::size_t> subset_cells(const CellTable& table,
                                             std::span<const FactorRestriction> subset) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < table.cells.size(); ++i) {
        bool match = true;
        for (const auto& r : subset) {
            const auto fi = table.design.factor_index(r.factor);
            if (!fi) throw ValidationError("subset names unknown factor '" + r.factor + "'");
            const auto& level = table.cells[i].coords[*fi];
            if (std::find(r.levels.begin(), r.levels.end(), level) == r.levels.end()) {
                match = false;
                break;
            }
        }
        if (match) out.push_back(i);
    }
    return out;
}

namespace detail {

// Effect residual operator on a cell subset: given the subset's cell means,
// produce the signed inclusion-exclusion residual per cell. Linear in the
// mean vector, so it can be applied to arbitrary candidate means.
class EffectResidual {
public:
    EffectResidual(const CellTable& table, std::span<const FactorRestriction> subset,
                   std::span<const std::string> effect)
        : cells_(subset_cells(table, subset)) {
        if (effect.empty())
            throw std::invalid_argument("effect must name at least one factor");

        std::size_t expected = 1;
        std::vector<std::size_t> factor_idx;
        df_ = 1;
        for (const auto& f : table.design.factors) {
            std::size_t count = 0;
            {
                FStatRecord probe;
                probe.subset.assign(subset.begin(), subset.end());
                count = probe.restricted_levels(table.design, f.name).size();
            }
            expected *= count;
        }
        if (cells_.size() != expected)
            throw ValidationError("subset does not form a complete balanced sub-design");

        for (const auto& name : effect) {
            const auto fi = table.design.factor_index(name);
            if (!fi) throw ValidationError("effect names unknown factor '" + name + "'");
            if (std::find(factor_idx.begin(), factor_idx.end(), *fi) != factor_idx.end())
                throw std::invalid_argument("effect repeats factor '" + name + "'");
            factor_idx.push_back(*fi);
            FStatRecord probe;
            probe.subset.assign(subset.begin(), subset.end());
            const auto levels = probe.restricted_levels(table.design, name).size();
            if (levels < 2)
                throw ValidationError("effect factor '" + name +
                                      "' has fewer than 2 levels in the subset");
            df_ *= static_cast<int>(levels) - 1;
        }

        // For every subset s of the effect factors, partition cells by their
        // levels on s; averaging within a part gives the marginal mean m_s.
        const std::size_t e = factor_idx.size();
        for (std::size_t mask = 0; mask < (1u << e); ++mask) {
            Term term;
            term.sign = ((e - std::popcount(mask)) % 2 == 0) ? 1.0 : -1.0;
            std::map<std::vector<std::string>, std::vector<std::size_t>> parts;
            for (std::size_t j = 0; j < cells_.size(); ++j) {
                std::vector<std::string> key;
                for (std::size_t b = 0; b < e; ++b)
                    if (mask & (1u << b)) key.push_back(table.cells[cells_[j]].coords[factor_idx[b]]);
                parts[key].push_back(j);
            }
            for (auto& [key, members] : parts) term.parts.push_back(std::move(members));
            terms_.push_back(std::move(term));
        }
    }

    const std::vector<std::size_t>& cells() const { return cells_; }
    int df() const { return df_; }

    // Residual vector for subset-cell means x (x[j] belongs to cells()[j]).
    std::vector<double> apply(std::span<const double> x) const {
        std::vector<double> r(x.size(), 0.0);
        for (const auto& term : terms_) {
            for (const auto& part : term.parts) {
                double sum = 0.0;
                for (std::size_t j : part) sum += x[j];
                const double mean = sum / static_cast<double>(part.size());
                for (std::size_t j : part) r[j] += term.sign * mean;
            }
        }
        return r;
    }

    double sum_sq(std::span<const double> x) const {
        double ss = 0.0;
        for (double v : apply(x)) ss += v * v;
        return ss;
    }

private:
    struct Term {
        double sign = 1.0;
        std::vector<std::vector<std::size_t>> parts;
    };
    std::vector<std::size_t> cells_;
    std::vector<Term> terms_;
    int df_ = 1;
};

}  // namespace detail

inline EffectMeanSquare effect_mean_square(const CellTable& table,
                                           std::span<const FactorRestriction> subset,
                                           std::span<const std::string> effect,
                                           double subset_observations) {
    if (!(subset_observations > 0.0))
        throw std::invalid_argument("subset_observations must be > 0");
    detail::EffectResidual op(table, subset, effect);
    std::vector<double> x(op.cells().size());
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = table.cells[op.cells()[j]].mean;
    const double m = subset_observations / static_cast<double>(op.cells().size());
    EffectMeanSquare ms;
    ms.effect.assign(effect.begin(), effect.end());
    ms.df = op.df();
    ms.value = m * op.sum_sq(x) / ms.df;
    ms.m_per_cell = m;
    return ms;
}

inline EffectMeanSquare effect_mean_square_for(const CellTable& table, const FStatRecord& f) {
    return effect_mean_square(table, f.subset, f.effect, f.subset_observations);
}

// MS / F. Guards against pairing a mean square with the wrong statistic.
inline double sigma2_from_f(const EffectMeanSquare& ms, const FStatRecord& f) {
    if (!(f.value > 0.0)) throw std::invalid_argument("F value must be > 0");
    auto a = ms.effect;
    auto b = f.effect;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    if (a != b) throw std::invalid_argument("effect mismatch between mean square and F-statistic");
    if (ms.df != f.df1) {
        std::ostringstream os;
        os << "df mismatch: mean square has " << ms.df << " df, F-statistic has df1 = " << f.df1;
        throw std::invalid_argument(os.str());
    }
    return ms.value / f.value;
}

namespace detail {

// Exact box-constrained minimum of |r(x)|^2 by cyclic coordinate descent.
// The objective is a convex differentiable quadratic and the box is a
// product of intervals, so the fixpoint is the global minimum.
inline double min_sum_sq_over_box(const EffectResidual& op, std::span<const Interval> box,
                                  std::span<const double> start) {
    const std::size_t m = box.size();
    std::vector<double> x(start.begin(), start.end());
    std::vector<double> r = op.apply(x);

    // Columns of the residual operator (it is linear).
    std::vector<std::vector<double>> col(m);
    std::vector<double> col_norm2(m);
    {
        std::vector<double> e(m, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
            e[i] = 1.0;
            col[i] = op.apply(e);
            e[i] = 0.0;
            col_norm2[i] = 0.0;
            for (double v : col[i]) col_norm2[i] += v * v;
        }
    }

    for (int sweep = 0; sweep < 1000; ++sweep) {
        double max_move = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            if (col_norm2[i] <= 0.0) continue;
            double dot = 0.0;
            for (std::size_t j = 0; j < m; ++j) dot += col[i][j] * r[j];
            double target = x[i] - dot / col_norm2[i];
            target = std::clamp(target, box[i].lo, box[i].hi);
            const double step = target - x[i];
            if (step != 0.0) {
                for (std::size_t j = 0; j < m; ++j) r[j] += step * col[i][j];
                x[i] = target;
                max_move = std::max(max_move, std::abs(step));
            }
        }
        if (max_move < 1e-14) break;
    }

    double ss = 0.0;
    for (double v : r) ss += v * v;
    return ss;
}

inline double max_sum_sq_over_vertices(const EffectResidual& op, std::span<const Interval> box) {
    const std::size_t m = box.size();
    if (m > 20)
        throw std::invalid_argument(
            "rounding box has more than 20 cells; vertex enumeration refused");
    std::vector<double> x(m);
    double best = -1.0;
    for (std::size_t mask = 0; mask < (std::size_t{1} << m); ++mask) {
        for (std::size_t i = 0; i < m; ++i) x[i] = (mask & (std::size_t{1} << i)) ? box[i].hi : box[i].lo;
        best = std::max(best, op.sum_sq(x));
    }
    return best;
}

}  // namespace detail

// Interval of sigma^2 values compatible with the published rounding:
// [min, max] of MS_effect over the per-cell rounding box, divided by the
// F value. A zero-width box collapses to the point estimate.
inline Interval sigma2_interval(const CellTable& table, std::span<const FactorRestriction> subset,
                                std::span<const std::string> effect, const FStatRecord& f) {
    if (!(f.value > 0.0)) throw std::invalid_argument("F value must be > 0");
    detail::EffectResidual op(table, subset, effect);
    const auto full_box = rounding_box(table);
    std::vector<Interval> box;
    std::vector<double> point;
    for (std::size_t j : op.cells()) {
        box.push_back(full_box[j]);
        point.push_back(table.cells[j].mean);
    }
    const double m = f.subset_observations / static_cast<double>(op.cells().size());
    const double scale = m / (op.df() * f.value);

    if (!table.rounding_decimals) {
        const double v = scale * op.sum_sq(point);
        return {v, v};
    }
    const double lo = scale * detail::min_sum_sq_over_box(op, box, point);
    const double hi = scale * detail::max_sum_sq_over_vertices(op, box);
    return {lo, hi};
}

// Unweighted arithmetic mean by default; optional positive weights.
inline double pool_sigma2(std::span<const double> estimates,
                          std::span<const double> weights = {}) {
    if (estimates.empty()) throw std::invalid_argument("pool_sigma2: empty estimate list");
    if (!weights.empty() && weights.size() != estimates.size())
        throw std::invalid_argument("pool_sigma2: weight count must match estimate count");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < estimates.size(); ++i) {
        const double w = weights.empty() ? 1.0 : weights[i];
        if (!(w > 0.0)) throw std::invalid_argument("pool_sigma2: weights must be > 0");
        num += w * estimates[i];
        den += w;
    }
    return num / den;
}

// Estimates whose distance from the mean of the remaining estimates exceeds
// 50% of that mean are flagged (guards against misprinted F values).
inline std::vector<bool> flag_outliers(std::span<const double> estimates) {
    std::vector<bool> flags(estimates.size(), false);
    if (estimates.size() < 2) return flags;
    double total = 0.0;
    for (double v : estimates) total += v;
    for (std::size_t i = 0; i < estimates.size(); ++i) {
        const double others = (total - estimates[i]) / static_cast<double>(estimates.size() - 1);
        if (others > 0.0 && std::abs(estimates[i] - others) > 0.5 * others) flags[i] = true;
    }
    return flags;
}

// The mean vector inside the rounding box maximizing the within-group sum of
// squares sum_k sum_{i in k} (x_i - xbar_k)^2. The objective is convex and
// separates over groups, so each group's maximizer is a vertex of its own
// sub-box; found by exact per-group vertex enumeration. The returned table
// carries exact means (its entries are chosen points, not rounded data).
inline CellTable worst_case_table(const CellTable& table, const Grouping& grouping) {
    grouping.validate_against(table);
    const auto groups = resolve_groups(table, grouping);
    const auto box = rounding_box(table);

    CellTable out = table;
    for (const auto& group : groups) {
        const std::size_t m = group.size();
        if (m > 25) {
            std::ostringstream os;
            os << "group of " << m << " cells exceeds the 25-cell enumeration bound; "
               << "subdivide the grouping or supply exact means";
            throw std::invalid_argument(os.str());
        }
        std::vector<double> x(m), best_x(m);
        double best = -1.0;
        for (std::size_t mask = 0; mask < (std::size_t{1} << m); ++mask) {
            double sum = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                x[i] = (mask & (std::size_t{1} << i)) ? box[group[i]].hi : box[group[i]].lo;
                sum += x[i];
            }
            const double mean = sum / static_cast<double>(m);
            double ss = 0.0;
            for (std::size_t i = 0; i < m; ++i) ss += (x[i] - mean) * (x[i] - mean);
            if (ss > best) {
                best = ss;
                best_x = x;
            }
        }
        for (std::size_t i = 0; i < m; ++i) out.cells[group[i]].mean = best_x[i];
    }
    out.rounding_decimals = std::nullopt;
    return out;
}

// Per-record variance recovery over a whole study, with outlier flags and an
// unweighted pooled estimate of the unflagged records.
struct SigmaRecordResult {
    std::size_t index = 0;
    EffectMeanSquare mean_square;
    double estimate = 0.0;
    std::optional<Interval> interval;
    bool failed = false;       // record could not be evaluated (df/effect problems)
    std::string error;
    bool outlier = false;
};

struct SigmaRecovery {
    std::vector<SigmaRecordResult> records;
    std::optional<VarianceEstimate> pooled;
};

inline SigmaRecovery recover_sigma2(const StudySummary& study, bool with_intervals = true) {
    SigmaRecovery out;
    std::vector<double> usable;
    std::vector<std::size_t> usable_index;
    for (std::size_t i = 0; i < study.f_stats.size(); ++i) {
        const auto& f = study.f_stats[i];
        SigmaRecordResult rec;
        rec.index = i;
        try {
            rec.mean_square = effect_mean_square_for(study.table, f);
            rec.estimate = sigma2_from_f(rec.mean_square, f);
            if (with_intervals && study.table.rounding_decimals)
                rec.interval = sigma2_interval(study.table, f.subset, f.effect, f);
            usable.push_back(rec.estimate);
            usable_index.push_back(out.records.size());
        } catch (const std::exception& e) {
            rec.failed = true;
            rec.error = e.what();
        }
        out.records.push_back(std::move(rec));
    }

    const auto flags = flag_outliers(usable);
    std::vector<double> kept;
    std::vector<std::size_t> kept_sources;
    for (std::size_t j = 0; j < usable.size(); ++j) {
        out.records[usable_index[j]].outlier = flags[j];
        if (!flags[j]) {
            kept.push_back(usable[j]);
            kept_sources.push_back(out.records[usable_index[j]].index);
        }
    }
    if (!kept.empty()) {
        VarianceEstimate pooled;
        pooled.value = pool_sigma2(kept);
        pooled.sources = kept_sources;
        pooled.method = "unweighted mean of per-F recoveries, outliers excluded";
        out.pooled = pooled;
    }
    return out;
}

}  // namespace evanova
