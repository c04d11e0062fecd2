#pragma once

// Study-file ingestion and serialization.
//
// A study file is a UTF-8 JSON document:
//
// {
//   "design": [ {"name": "prime", "levels": ["positive", "negative"]}, ... ],
//   "cells": [ {"id": "a", "coords": {"prime": "positive", ...}, "mean": 2.3}, ... ],
//   "total_observations": 338,
//   "rounding_decimals": 1,            // or "exact"
//   "groups": [ ["a", "b"], ["c"] ],
//   "f_statistics": [ {"effect": ["prime"], "df1": 2, "df2": 326, "value": 3.21,
//                      "subset": {"person": ["personal"]},
//                      "subset_observations": 168}, ... ],   // optional
//   "sigma2_override": 1.1             // optional
// }
//
// Unknown keys are rejected. parse(serialize(s)) == s for every valid study.

#include <fstream>
#include <string>

#include "json.hpp"

#include "evanova/study.hpp"

namespace evanova {

namespace detail {

using njson = nlohmann::json;

inline void reject_unknown_keys(const njson& obj, std::initializer_list<const char*> allowed,
                                const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) { ok = true; break; }
        if (!ok) throw ParseError(where + ": unknown key '" + it.key() + "'");
    }
}

inline const njson& require_key(const njson& obj, const char* key, const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end()) throw ParseError(where + ": missing key '" + key + "'");
    return *it;
}

inline std::string as_string(const njson& v, const std::string& where) {
    if (!v.is_string()) throw ParseError(where + ": expected a string");
    return v.get<std::string>();
}

inline double as_number(const njson& v, const std::string& where) {
    if (!v.is_number()) throw ParseError(where + ": expected a number");
    return v.get<double>();
}

inline int as_int(const njson& v, const std::string& where) {
    if (!v.is_number_integer()) throw ParseError(where + ": expected an integer");
    return v.get<int>();
}

inline std::vector<std::string> as_string_array(const njson& v, const std::string& where) {
    if (!v.is_array()) throw ParseError(where + ": expected an array of strings");
    std::vector<std::string> out;
    out.reserve(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        out.push_back(as_string(v[i], where + "[" + std::to_string(i) + "]"));
    return out;
}

}  // namespace detail

inline StudySummary parse_study(const std::string& text) {
    using detail::njson;
    njson doc;
    try {
        doc = njson::parse(text);
    } catch (const njson::parse_error& e) {
        throw ParseError(std::string("study file is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ParseError("study file: top level must be an object");
    detail::reject_unknown_keys(doc,
                                {"design", "cells", "total_observations", "rounding_decimals",
                                 "groups", "f_statistics", "sigma2_override"},
                                "study file");

    StudySummary study;

    // design
    {
        const auto& d = detail::require_key(doc, "design", "study file");
        if (!d.is_array()) throw ParseError("design: expected an array");
        for (std::size_t i = 0; i < d.size(); ++i) {
            const std::string where = "design[" + std::to_string(i) + "]";
            if (!d[i].is_object()) throw ParseError(where + ": expected an object");
            detail::reject_unknown_keys(d[i], {"name", "levels"}, where);
            Factor f;
            f.name = detail::as_string(detail::require_key(d[i], "name", where), where + ".name");
            f.levels = detail::as_string_array(detail::require_key(d[i], "levels", where),
                                               where + ".levels");
            study.table.design.factors.push_back(std::move(f));
        }
    }

    // cells
    {
        const auto& cs = detail::require_key(doc, "cells", "study file");
        if (!cs.is_array()) throw ParseError("cells: expected an array");
        for (std::size_t i = 0; i < cs.size(); ++i) {
            const std::string where = "cells[" + std::to_string(i) + "]";
            if (!cs[i].is_object()) throw ParseError(where + ": expected an object");
            detail::reject_unknown_keys(cs[i], {"id", "coords", "mean"}, where);
            Cell c;
            const auto& coords = detail::require_key(cs[i], "coords", where);
            if (!coords.is_object())
                throw ParseError(where + ".coords: expected an object of factor -> level");
            for (const auto& f : study.table.design.factors) {
                auto it = coords.find(f.name);
                if (it == coords.end())
                    throw ParseError(where + ".coords: missing factor '" + f.name + "'");
                c.coords.push_back(detail::as_string(*it, where + ".coords." + f.name));
            }
            if (coords.size() != study.table.design.factors.size())
                for (auto it = coords.begin(); it != coords.end(); ++it)
                    if (!study.table.design.factor_index(it.key()))
                        throw ParseError(where + ".coords: unknown factor '" + it.key() + "'");
            c.mean = detail::as_number(detail::require_key(cs[i], "mean", where), where + ".mean");
            if (auto it = cs[i].find("id"); it != cs[i].end())
                c.id = detail::as_string(*it, where + ".id");
            else
                c.id = default_cell_id(study.table.design, c.coords);
            study.table.cells.push_back(std::move(c));
        }
    }

    study.table.total_observations = detail::as_number(
        detail::require_key(doc, "total_observations", "study file"), "total_observations");

    // rounding_decimals: integer, or the string "exact"
    {
        const auto& r = detail::require_key(doc, "rounding_decimals", "study file");
        if (r.is_string()) {
            if (r.get<std::string>() != "exact")
                throw ParseError("rounding_decimals: expected an integer or \"exact\"");
            study.table.rounding_decimals = std::nullopt;
        } else {
            study.table.rounding_decimals = detail::as_int(r, "rounding_decimals");
        }
    }

    // groups
    {
        const auto& gs = detail::require_key(doc, "groups", "study file");
        if (!gs.is_array()) throw ParseError("groups: expected an array of arrays");
        for (std::size_t k = 0; k < gs.size(); ++k)
            study.grouping.groups.push_back(
                detail::as_string_array(gs[k], "groups[" + std::to_string(k) + "]"));
    }

    // f_statistics (optional)
    if (auto it = doc.find("f_statistics"); it != doc.end()) {
        if (!it->is_array()) throw ParseError("f_statistics: expected an array");
        for (std::size_t i = 0; i < it->size(); ++i) {
            const std::string where = "f_statistics[" + std::to_string(i) + "]";
            const auto& rec = (*it)[i];
            if (!rec.is_object()) throw ParseError(where + ": expected an object");
            detail::reject_unknown_keys(
                rec, {"effect", "df1", "df2", "value", "subset", "subset_observations"}, where);
            FStatRecord f;
            f.effect = detail::as_string_array(detail::require_key(rec, "effect", where),
                                               where + ".effect");
            f.df1 = detail::as_int(detail::require_key(rec, "df1", where), where + ".df1");
            f.df2 = detail::as_int(detail::require_key(rec, "df2", where), where + ".df2");
            f.value = detail::as_number(detail::require_key(rec, "value", where), where + ".value");
            f.subset_observations =
                detail::as_number(detail::require_key(rec, "subset_observations", where),
                                  where + ".subset_observations");
            if (auto s = rec.find("subset"); s != rec.end()) {
                if (!s->is_object())
                    throw ParseError(where + ".subset: expected an object of factor -> levels");
                for (auto r = s->begin(); r != s->end(); ++r)
                    f.subset.push_back(
                        {r.key(), detail::as_string_array(*r, where + ".subset." + r.key())});
            }
            study.f_stats.push_back(std::move(f));
        }
    }

    if (auto it = doc.find("sigma2_override"); it != doc.end())
        study.sigma2_override = detail::as_number(*it, "sigma2_override");

    study.validate();
    return study;
}

inline StudySummary parse_study_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open study file '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_study(text);
}

inline std::string serialize_study(const StudySummary& study) {
    using detail::njson;
    njson doc;

    doc["design"] = njson::array();
    for (const auto& f : study.table.design.factors)
        doc["design"].push_back({{"name", f.name}, {"levels", f.levels}});

    doc["cells"] = njson::array();
    for (const auto& c : study.table.cells) {
        njson coords = njson::object();
        for (std::size_t i = 0; i < c.coords.size(); ++i)
            coords[study.table.design.factors[i].name] = c.coords[i];
        doc["cells"].push_back({{"id", c.id}, {"coords", coords}, {"mean", c.mean}});
    }

    doc["total_observations"] = study.table.total_observations;
    if (study.table.rounding_decimals)
        doc["rounding_decimals"] = *study.table.rounding_decimals;
    else
        doc["rounding_decimals"] = "exact";

    doc["groups"] = study.grouping.groups;

    if (!study.f_stats.empty()) {
        doc["f_statistics"] = njson::array();
        for (const auto& f : study.f_stats) {
            njson rec = {{"effect", f.effect},
                         {"df1", f.df1},
                         {"df2", f.df2},
                         {"value", f.value},
                         {"subset_observations", f.subset_observations}};
            if (!f.subset.empty()) {
                njson subset = njson::object();
                for (const auto& r : f.subset) subset[r.factor] = r.levels;
                rec["subset"] = subset;
            }
            doc["f_statistics"].push_back(rec);
        }
    }

    if (study.sigma2_override) doc["sigma2_override"] = *study.sigma2_override;

    return doc.dump(2) + "\n";
}

}  // namespace evanova
