#pragma once

// Data model for a published ANOVA summary: the factorial design, per-cell
// sample means with their rounding precision, the equal-mean grouping the
// study concluded, and the published F-statistics.
//
// Everything is a plain value type. Construction is cheap; validation is
// explicit (validate()) and names the offending field or cell id so a
// caller can report file problems precisely. Once validated, instances are
// treated as immutable and are safe to share across threads.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace evanova {

// Study document did not match the file schema.
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Document matched the schema but violates a model invariant.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Factor {
    std::string name;
    std::vector<std::string> levels;

    bool operator==(const Factor&) const = default;
};

struct FactorDesign {
    std::vector<Factor> factors;

    bool operator==(const FactorDesign&) const = default;

    std::size_t cell_count() const {
        std::size_t n = 1;
        for (const auto& f : factors) n *= f.levels.size();
        return n;
    }

    std::optional<std::size_t> factor_index(std::string_view name) const {
        for (std::size_t i = 0; i < factors.size(); ++i)
            if (factors[i].name == name) return i;
        return std::nullopt;
    }

    void validate() const {
        if (factors.empty()) throw ValidationError("design: at least one factor required");
        std::set<std::string> names;
        for (const auto& f : factors) {
            if (f.name.empty()) throw ValidationError("design: factor name must be nonempty");
            if (!names.insert(f.name).second)
                throw ValidationError("design: duplicate factor name '" + f.name + "'");
            if (f.levels.size() < 2)
                throw ValidationError("design: factor '" + f.name + "' needs at least 2 levels");
            std::set<std::string> lvls(f.levels.begin(), f.levels.end());
            if (lvls.size() != f.levels.size())
                throw ValidationError("design: factor '" + f.name + "' has duplicate levels");
        }
    }
};

// Canonical id used when a cell does not carry one: "factor=level,..."
inline std::string default_cell_id(const FactorDesign& design,
                                   std::span<const std::string> coords) {
    std::string id;
    for (std::size_t i = 0; i < design.factors.size(); ++i) {
        if (i > 0) id += ',';
        id += design.factors[i].name;
        id += '=';
        id += coords[i];
    }
    return id;
}

struct Cell {
    std::string id;
    std::vector<std::string> coords;  // one level per design factor, in order
    double mean = 0.0;                // published sample mean, score units

    bool operator==(const Cell&) const = default;
};

// Closed interval; zero width encodes an exactly known value.
struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    bool operator==(const Interval&) const = default;
    double width() const { return hi - lo; }
    bool contains(double x) const { return lo <= x && x <= hi; }
};

struct CellTable {
    FactorDesign design;
    std::vector<Cell> cells;
    double total_observations = 0.0;
    // Decimal places the published means were rounded to; nullopt means the
    // values are exact (zero-width rounding boxes).
    std::optional<int> rounding_decimals;

    bool operator==(const CellTable&) const = default;

    double per_cell_count() const {
        return total_observations / static_cast<double>(cells.size());
    }

    std::size_t index_of(std::string_view id) const {
        for (std::size_t i = 0; i < cells.size(); ++i)
            if (cells[i].id == id) return i;
        throw ValidationError("unknown cell id '" + std::string(id) + "'");
    }

    void validate() const {
        design.validate();
        if (cells.size() != design.cell_count()) {
            std::ostringstream os;
            os << "cells: expected " << design.cell_count() << " cells for this design, got "
               << cells.size();
            throw ValidationError(os.str());
        }
        std::set<std::string> ids;
        std::set<std::vector<std::string>> coord_set;
        for (const auto& c : cells) {
            if (c.id.empty()) throw ValidationError("cells: empty cell id");
            if (!ids.insert(c.id).second)
                throw ValidationError("cells: duplicate cell id '" + c.id + "'");
            if (c.coords.size() != design.factors.size())
                throw ValidationError("cells: cell '" + c.id + "' must name one level per factor");
            for (std::size_t i = 0; i < c.coords.size(); ++i) {
                const auto& lv = design.factors[i].levels;
                if (std::find(lv.begin(), lv.end(), c.coords[i]) == lv.end())
                    throw ValidationError("cells: cell '" + c.id + "' has unknown level '" +
                                          c.coords[i] + "' for factor '" +
                                          design.factors[i].name + "'");
            }
            if (!std::isfinite(c.mean))
                throw ValidationError("cells: cell '" + c.id + "' mean must be finite");
            if (!coord_set.insert(c.coords).second)
                throw ValidationError("cells: duplicate coordinates at cell '" + c.id + "'");
        }
        if (!(total_observations > 0.0))
            throw ValidationError("total_observations must be > 0");
        if (!(per_cell_count() > 1.0))
            throw ValidationError("per-cell count must exceed 1 (total_observations too small)");
        if (rounding_decimals && *rounding_decimals < 0)
            throw ValidationError("rounding_decimals must be >= 0");
    }
};

// Per-cell closed intervals the true means must lie in, given the published
// rounding. A value printed as v with d decimals lies in [v-h, v+h] with
// h = 0.5 * 10^-d; both endpoints are attainable and kept closed so the
// optimization box includes them.
inline std::vector<Interval> rounding_box(const CellTable& table) {
    std::vector<Interval> box(table.cells.size());
    const double h =
        table.rounding_decimals ? 0.5 * std::pow(10.0, -*table.rounding_decimals) : 0.0;
    for (std::size_t i = 0; i < table.cells.size(); ++i) {
        const double v = table.cells[i].mean;
        box[i] = {v - h, v + h};
    }
    return box;
}

// Ordered partition of cell ids into equal-population-mean groups. Group
// membership is explicit data, never inferred from factor columns, so any
// published cell relabelling is representable as-is.
struct Grouping {
    std::vector<std::vector<std::string>> groups;

    bool operator==(const Grouping&) const = default;

    void validate_against(const CellTable& table) const {
        if (groups.empty()) throw ValidationError("groups: at least one group required");
        std::set<std::string> seen;
        for (std::size_t k = 0; k < groups.size(); ++k) {
            if (groups[k].empty()) {
                std::ostringstream os;
                os << "groups[" << k << "]: group must be nonempty";
                throw ValidationError(os.str());
            }
            for (const auto& id : groups[k]) {
                bool known = false;
                for (const auto& c : table.cells)
                    if (c.id == id) { known = true; break; }
                if (!known)
                    throw ValidationError("groups: unknown cell id '" + id + "'");
                if (!seen.insert(id).second)
                    throw ValidationError("groups: cell id '" + id + "' appears twice");
            }
        }
        if (seen.size() != table.cells.size()) {
            std::string missing;
            for (const auto& c : table.cells)
                if (!seen.count(c.id)) {
                    if (!missing.empty()) missing += ", ";
                    missing += "'" + c.id + "'";
                }
            throw ValidationError("groups: not a partition; missing cell ids " + missing);
        }
    }
};

// Restriction of one factor to a subset of its levels. A record's subset is
// the conjunction of its restrictions; factors not named keep all levels.
struct FactorRestriction {
    std::string factor;
    std::vector<std::string> levels;

    bool operator==(const FactorRestriction&) const = default;
};

struct FStatRecord {
    std::vector<std::string> effect;  // factor names of the tested effect
    int df1 = 0;
    int df2 = 0;
    double value = 0.0;
    std::vector<FactorRestriction> subset;  // empty: whole table
    double subset_observations = 0.0;

    bool operator==(const FStatRecord&) const = default;

    // Levels of `factor` available inside this record's subset.
    std::vector<std::string> restricted_levels(const FactorDesign& design,
                                               std::string_view factor) const {
        for (const auto& r : subset)
            if (r.factor == factor) return r.levels;
        const auto idx = design.factor_index(factor);
        if (!idx) throw ValidationError("f_statistics: unknown factor '" + std::string(factor) + "'");
        return design.factors[*idx].levels;
    }

    void validate_against(const CellTable& table, std::size_t record_index) const {
        std::ostringstream where;
        where << "f_statistics[" << record_index << "]";
        const std::string at = where.str();

        if (!(value > 0.0)) throw ValidationError(at + ": value must be > 0");
        if (df1 < 1) throw ValidationError(at + ": df1 must be >= 1");
        if (df2 < 1) throw ValidationError(at + ": df2 must be >= 1");
        if (!(subset_observations > 0.0))
            throw ValidationError(at + ": subset_observations must be > 0");

        std::set<std::string> restricted;
        for (const auto& r : subset) {
            const auto idx = table.design.factor_index(r.factor);
            if (!idx) throw ValidationError(at + ": subset names unknown factor '" + r.factor + "'");
            if (!restricted.insert(r.factor).second)
                throw ValidationError(at + ": subset restricts factor '" + r.factor + "' twice");
            if (r.levels.empty())
                throw ValidationError(at + ": subset for factor '" + r.factor + "' is empty");
            std::set<std::string> seen;
            for (const auto& lvl : r.levels) {
                const auto& lv = table.design.factors[*idx].levels;
                if (std::find(lv.begin(), lv.end(), lvl) == lv.end())
                    throw ValidationError(at + ": subset level '" + lvl + "' unknown for factor '" +
                                          r.factor + "'");
                if (!seen.insert(lvl).second)
                    throw ValidationError(at + ": subset repeats level '" + lvl + "'");
            }
        }

        if (effect.empty()) throw ValidationError(at + ": effect must name at least one factor");
        std::set<std::string> eff;
        long expected_df1 = 1;
        for (const auto& name : effect) {
            if (!table.design.factor_index(name))
                throw ValidationError(at + ": effect names unknown factor '" + name + "'");
            if (!eff.insert(name).second)
                throw ValidationError(at + ": effect repeats factor '" + name + "'");
            const auto lv = restricted_levels(table.design, name);
            if (lv.size() < 2)
                throw ValidationError(at + ": effect factor '" + name +
                                      "' has fewer than 2 levels in the subset");
            expected_df1 *= static_cast<long>(lv.size()) - 1;
        }
        if (expected_df1 != df1) {
            std::ostringstream os;
            os << at << ": df1 is " << df1 << " but the effect has " << expected_df1
               << " degrees of freedom in this subset";
            throw ValidationError(os.str());
        }
    }
};

struct StudySummary {
    CellTable table;
    Grouping grouping;
    std::vector<FStatRecord> f_stats;
    std::optional<double> sigma2_override;

    bool operator==(const StudySummary&) const = default;

    void validate() const {
        table.validate();
        grouping.validate_against(table);
        for (std::size_t i = 0; i < f_stats.size(); ++i) f_stats[i].validate_against(table, i);
        if (sigma2_override && !(*sigma2_override > 0.0))
            throw ValidationError("sigma2_override must be > 0");
    }
};

// Grouping as cell indices into table.cells, in grouping order.
inline std::vector<std::vector<std::size_t>> resolve_groups(const CellTable& table,
                                                            const Grouping& grouping) {
    std::vector<std::vector<std::size_t>> out;
    out.reserve(grouping.groups.size());
    for (const auto& g : grouping.groups) {
        std::vector<std::size_t> idx;
        idx.reserve(g.size());
        for (const auto& id : g) idx.push_back(table.index_of(id));
        out.push_back(std::move(idx));
    }
    return out;
}

inline std::vector<double> cell_mean_vector(const CellTable& table) {
    std::vector<double> m(table.cells.size());
    for (std::size_t i = 0; i < table.cells.size(); ++i) m[i] = table.cells[i].mean;
    return m;
}

}  // namespace evanova
