// evanova: evidential value of published ANOVA summaries.
//
// Subcommands:
//   analyze      evidence report for a study file
//   sigma        recover the error variance from published F-statistics
//   sensitivity  worst-case (rounding-adversarial) re-analysis
//   combine      multiply evidential values of independent studies
//   simulate     draw raw data under the copying model
//   calibrate    null distribution of V by Monte Carlo
//
// Exit codes: 0 success, 1 validation/domain error, 2 unresolvable inputs.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "evanova/evidence.hpp"
#include "evanova/simulate.hpp"
#include "evanova/study_io.hpp"
#include "evanova/variance.hpp"

namespace {

using nlohmann::json;
using namespace evanova;

constexpr int kSchemaVersion = 1;

// Input that cannot be resolved into a runnable analysis (missing file,
// no way to obtain sigma^2, ...): exit code 2.
struct UnresolvableError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string fmt4(double x) {
    if (std::isinf(x)) return "infinity";
    char buf[64];
    const double a = std::abs(x);
    if (x == 0.0 || (a >= 1e-3 && a < 1e6))
        std::snprintf(buf, sizeof(buf), "%.4f", x);
    else
        std::snprintf(buf, sizeof(buf), "%.4g", x);
    return buf;
}

// +infinity serializes as the literal string "infinity", never as a float.
json json_num(double x) {
    if (std::isinf(x)) return "infinity";
    return x;
}

StudySummary load_study(const std::string& path) {
    std::ifstream probe(path);
    if (!probe) throw UnresolvableError("cannot open study file '" + path + "'");
    return parse_study_file(path);
}

struct ResolvedSigma2 {
    double value = 0.0;
    std::string source;
    std::optional<SigmaRecovery> recovery;
};

ResolvedSigma2 resolve_sigma2(const StudySummary& study, std::optional<double> flag_value) {
    if (flag_value) {
        if (!(*flag_value > 0.0)) throw std::invalid_argument("--sigma2 must be > 0");
        return {*flag_value, "--sigma2 flag", std::nullopt};
    }
    if (study.sigma2_override) return {*study.sigma2_override, "study file override", std::nullopt};
    if (!study.f_stats.empty()) {
        auto rec = recover_sigma2(study);
        if (rec.pooled)
            return {rec.pooled->value, "recovered from F-statistics", std::move(rec)};
    }
    throw UnresolvableError(
        "sigma2 is unresolvable: no --sigma2 flag, no file override, no usable F-statistics");
}

json evidence_json(const EvidenceReport& rep) {
    json groups = json::array();
    for (std::size_t k = 0; k < rep.s_values.size(); ++k)
        groups.push_back({{"s", json_num(rep.s_values[k])},
                          {"rho_hat", rep.rho_hats[k]},
                          {"chi", json_num(rep.chi_values[k])},
                          {"degenerate", static_cast<bool>(rep.degenerate[k])}});
    json out = {{"model", to_string(rep.model)},
                {"groups", groups},
                {"log_v", json_num(rep.log_v)},
                {"v", json_num(rep.v)},
                {"degenerate", rep.is_degenerate()}};
    return out;
}

void print_evidence_text(const EvidenceReport& rep) {
    std::printf("model: %s\n", to_string(rep.model));
    for (std::size_t k = 0; k < rep.s_values.size(); ++k) {
        if (rep.model == EvidenceModel::per_group)
            std::printf("  group %zu: ", k + 1);
        else
            std::printf("  ");
        std::printf("S = %s   rho-hat = %s   chi = %s%s\n", fmt4(rep.s_values[k]).c_str(),
                    fmt4(rep.rho_hats[k]).c_str(), fmt4(rep.chi_values[k]).c_str(),
                    rep.degenerate[k] ? "   [degenerate: zero within-group scatter]" : "");
    }
    std::printf("  V = %s\n", fmt4(rep.v).c_str());
}

json inputs_json(const std::string& path, const StudySummary& study, const ResolvedSigma2& sigma,
                 double n) {
    return {{"study", path},
            {"n", n},
            {"sigma2", sigma.value},
            {"sigma2_source", sigma.source},
            {"grouping_digest", grouping_digest(study.grouping)}};
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

int cmd_analyze(const std::string& path, const std::string& model,
                std::optional<double> sigma2_flag, std::optional<double> n_flag,
                std::optional<double> prior, const std::string& format) {
    const auto study = load_study(path);
    const auto sigma = resolve_sigma2(study, sigma2_flag);
    const double n = n_flag.value_or(study.table.per_cell_count());

    std::optional<EvidenceReport> pooled, per_group;
    if (model == "pooled" || model == "both") pooled = evidence_pooled(study, sigma.value, n);
    if (model == "per-group" || model == "both")
        per_group = evidence_pergroup(study, sigma.value, n);

    const EvidenceReport& head = pooled ? *pooled : *per_group;
    std::optional<PosteriorOdds> odds;
    if (prior) odds = posterior_odds({*prior}, head.v);

    std::vector<std::string> flags;
    if ((pooled && pooled->is_degenerate()) || (per_group && per_group->is_degenerate()))
        flags.push_back("degenerate: zero within-group scatter; V reported as infinity");
    if (sigma.recovery)
        for (const auto& r : sigma.recovery->records)
            if (r.outlier)
                flags.push_back("F-statistic record " + std::to_string(r.index) +
                                " excluded from sigma2 pooling as an outlier");

    if (format == "json") {
        json doc = {{"version", kSchemaVersion},
                    {"command", "analyze"},
                    {"inputs", inputs_json(path, study, sigma, n)},
                    {"sigma2", sigma.value},
                    {"evidence", json::object()},
                    {"flags", flags}};
        if (pooled) doc["evidence"]["pooled"] = evidence_json(*pooled);
        if (per_group) doc["evidence"]["per_group"] = evidence_json(*per_group);
        if (odds)
            doc["odds"] = {{"prior", *prior},
                           {"posterior", json_num(odds->value)},
                           {"exceeds_one", odds->exceeds_one}};
        std::printf("%s\n", doc.dump(2).c_str());
        return 0;
    }

    std::printf("study: %s\n", path.c_str());
    std::printf("sigma2 = %s (source: %s)\n", fmt4(sigma.value).c_str(), sigma.source.c_str());
    std::printf("n per cell = %s\n", fmt4(n).c_str());
    if (pooled) print_evidence_text(*pooled);
    if (per_group) print_evidence_text(*per_group);
    if (odds)
        std::printf("posterior odds = %s (prior %s); exceeds 1: %s\n", fmt4(odds->value).c_str(),
                    fmt4(*prior).c_str(), odds->exceeds_one ? "yes" : "no");
    for (const auto& f : flags) std::printf("note: %s\n", f.c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// sigma
// ---------------------------------------------------------------------------

std::string effect_label(const std::vector<std::string>& effect) {
    std::string out;
    for (std::size_t i = 0; i < effect.size(); ++i) {
        if (i) out += " x ";
        out += effect[i];
    }
    return out;
}

int cmd_sigma(const std::string& path, const std::string& format) {
    const auto study = load_study(path);
    if (study.f_stats.empty())
        throw UnresolvableError("study file carries no F-statistics to recover sigma2 from");
    const auto rec = recover_sigma2(study);

    if (format == "json") {
        json records = json::array();
        for (const auto& r : rec.records) {
            json rj = {{"index", r.index},
                       {"effect", study.f_stats[r.index].effect},
                       {"f_value", study.f_stats[r.index].value},
                       {"df1", study.f_stats[r.index].df1},
                       {"df2", study.f_stats[r.index].df2}};
            if (r.failed) {
                rj["error"] = r.error;
            } else {
                rj["mean_square"] = r.mean_square.value;
                rj["estimate"] = r.estimate;
                rj["outlier"] = r.outlier;
                if (r.interval) rj["interval"] = {r.interval->lo, r.interval->hi};
            }
            records.push_back(rj);
        }
        json doc = {{"version", kSchemaVersion},
                    {"command", "sigma"},
                    {"inputs", {{"study", path}}},
                    {"records", records}};
        if (rec.pooled) {
            doc["pooled"] = rec.pooled->value;
            doc["pooled_method"] = rec.pooled->method;
            doc["pooled_sources"] = rec.pooled->sources;
        }
        std::printf("%s\n", doc.dump(2).c_str());
        return 0;
    }

    std::printf("study: %s\n", path.c_str());
    for (const auto& r : rec.records) {
        const auto& f = study.f_stats[r.index];
        std::printf("[%zu] effect %-28s F(%d,%d) = %-8s", r.index,
                    effect_label(f.effect).c_str(), f.df1, f.df2, fmt4(f.value).c_str());
        if (r.failed) {
            std::printf(" skipped: %s\n", r.error.c_str());
            continue;
        }
        std::printf(" MS = %-9s sigma2 = %-9s", fmt4(r.mean_square.value).c_str(),
                    fmt4(r.estimate).c_str());
        if (r.interval)
            std::printf(" interval [%s, %s]", fmt4(r.interval->lo).c_str(),
                        fmt4(r.interval->hi).c_str());
        if (r.outlier) std::printf("  OUTLIER");
        std::printf("\n");
    }
    if (rec.pooled)
        std::printf("pooled sigma2 = %s (%s)\n", fmt4(rec.pooled->value).c_str(),
                    rec.pooled->method.c_str());
    else
        std::printf("pooled sigma2: no usable records\n");
    return 0;
}

// ---------------------------------------------------------------------------
// sensitivity
// ---------------------------------------------------------------------------

int cmd_sensitivity(const std::string& path, const std::string& model,
                    std::optional<double> sigma2_flag, std::optional<double> worst_sigma2_flag,
                    const std::string& format) {
    const auto study = load_study(path);
    if (!study.table.rounding_decimals)
        throw std::invalid_argument(
            "sensitivity requires rounded cell means (rounding_decimals is \"exact\")");

    const auto sigma = resolve_sigma2(study, sigma2_flag);

    StudySummary worst = study;
    worst.table = worst_case_table(study.table, study.grouping);

    ResolvedSigma2 worst_sigma;
    if (worst_sigma2_flag) {
        if (!(*worst_sigma2_flag > 0.0))
            throw std::invalid_argument("--worst-sigma2 must be > 0");
        worst_sigma = {*worst_sigma2_flag, "--worst-sigma2 flag", std::nullopt};
    } else if (!worst.f_stats.empty()) {
        auto rec = recover_sigma2(worst);
        if (rec.pooled)
            worst_sigma = {rec.pooled->value, "re-recovered from F-statistics on the worst-case table",
                           std::move(rec)};
        else
            worst_sigma = {sigma.value, sigma.source + " (reused: no usable F-statistics)",
                           std::nullopt};
    } else {
        worst_sigma = {sigma.value, sigma.source + " (reused: no F-statistics)", std::nullopt};
    }

    const bool want_pooled = (model == "pooled" || model == "both");
    const bool want_groups = (model == "per-group" || model == "both");

    std::optional<EvidenceReport> orig_pooled, orig_groups, worst_pooled, worst_groups;
    if (want_pooled) {
        orig_pooled = evidence_pooled(study, sigma.value);
        worst_pooled = evidence_pooled(worst, worst_sigma.value);
    }
    if (want_groups) {
        orig_groups = evidence_pergroup(study, sigma.value);
        worst_groups = evidence_pergroup(worst, worst_sigma.value);
    }

    if (format == "json") {
        json cells = json::array();
        for (const auto& c : worst.table.cells) cells.push_back({{"id", c.id}, {"mean", c.mean}});
        json doc = {{"version", kSchemaVersion},
                    {"command", "sensitivity"},
                    {"inputs", inputs_json(path, study, sigma, study.table.per_cell_count())},
                    {"sigma2", sigma.value},
                    {"original", json::object()},
                    {"worst_case",
                     {{"sigma2", worst_sigma.value},
                      {"sigma2_source", worst_sigma.source},
                      {"cells", cells}}}};
        if (orig_pooled) doc["original"]["pooled"] = evidence_json(*orig_pooled);
        if (orig_groups) doc["original"]["per_group"] = evidence_json(*orig_groups);
        if (worst_pooled) doc["worst_case"]["pooled"] = evidence_json(*worst_pooled);
        if (worst_groups) doc["worst_case"]["per_group"] = evidence_json(*worst_groups);
        std::printf("%s\n", doc.dump(2).c_str());
        return 0;
    }

    std::printf("study: %s\n", path.c_str());
    std::printf("original sigma2 = %s (source: %s)\n", fmt4(sigma.value).c_str(),
                sigma.source.c_str());
    std::printf("worst-case sigma2 = %s (source: %s)\n", fmt4(worst_sigma.value).c_str(),
                worst_sigma.source.c_str());
    std::printf("worst-case cell means (within the rounding boxes):\n");
    for (const auto& c : worst.table.cells)
        std::printf("  %-16s %s\n", c.id.c_str(), fmt4(c.mean).c_str());
    if (orig_pooled) {
        std::printf("original ");
        print_evidence_text(*orig_pooled);
        std::printf("worst-case ");
        print_evidence_text(*worst_pooled);
    }
    if (orig_groups) {
        std::printf("original ");
        print_evidence_text(*orig_groups);
        std::printf("worst-case ");
        print_evidence_text(*worst_groups);
    }
    return 0;
}

// ---------------------------------------------------------------------------
// combine
// ---------------------------------------------------------------------------

double value_from_report_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UnresolvableError("cannot open report file '" + path + "'");
    json doc;
    try {
        in >> doc;
    } catch (const json::parse_error& e) {
        throw std::invalid_argument("report file '" + path + "' is not valid JSON: " + e.what());
    }
    auto read_v = [](const json& node) -> std::optional<double> {
        if (!node.contains("v")) return std::nullopt;
        const auto& v = node["v"];
        if (v.is_string() && v.get<std::string>() == "infinity")
            return std::numeric_limits<double>::infinity();
        if (v.is_number()) return v.get<double>();
        return std::nullopt;
    };
    if (doc.contains("evidence")) {
        if (doc["evidence"].contains("pooled"))
            if (auto v = read_v(doc["evidence"]["pooled"])) return *v;
        if (doc["evidence"].contains("per_group"))
            if (auto v = read_v(doc["evidence"]["per_group"])) return *v;
    }
    throw std::invalid_argument("report file '" + path + "' carries no evidential value");
}

int cmd_combine(const std::vector<std::string>& args, std::optional<double> prior,
                const std::string& format) {
    std::vector<double> values;
    for (const auto& a : args) {
        try {
            std::size_t pos = 0;
            const double v = std::stod(a, &pos);
            if (pos == a.size()) {
                values.push_back(v);
                continue;
            }
        } catch (const std::exception&) {
            // not a number: treat as a report file below
        }
        values.push_back(value_from_report_file(a));
    }
    const double combined = combine_studies(values);
    std::optional<PosteriorOdds> odds;
    if (prior) odds = posterior_odds({*prior}, combined);

    if (format == "json") {
        json vals = json::array();
        for (double v : values) vals.push_back(json_num(v));
        json doc = {{"version", kSchemaVersion},
                    {"command", "combine"},
                    {"values", vals},
                    {"combined", json_num(combined)}};
        if (odds)
            doc["odds"] = {{"prior", *prior},
                           {"posterior", json_num(odds->value)},
                           {"exceeds_one", odds->exceeds_one}};
        std::printf("%s\n", doc.dump(2).c_str());
        return 0;
    }

    std::printf("combined evidential value = %s\n", fmt4(combined).c_str());
    if (odds)
        std::printf("posterior odds = %s (prior %s); exceeds 1: %s\n", fmt4(odds->value).c_str(),
                    fmt4(*prior).c_str(), odds->exceeds_one ? "yes" : "no");
    return 0;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

int cmd_simulate(int cells, int per_cell, double rho, double sigma2, std::uint64_t seed,
                 std::uint64_t stream, std::vector<double> mu, const std::string& out_path,
                 const std::string& format) {
    if (mu.empty()) mu.assign(cells, 0.0);
    if (static_cast<int>(mu.size()) != cells)
        throw std::invalid_argument("--mu must list one value per cell");
    const auto data = fabricate(cells, per_cell, mu, sigma2, rho, seed, stream);

    // moment summary: mean pairwise cross-cell error correlation, pooled
    // error variance, and the MSE estimate
    double corr_sum = 0.0;
    int pairs = 0;
    for (int i = 0; i < cells; ++i)
        for (int h = i + 1; h < cells; ++h) {
            std::vector<double> a(per_cell), b(per_cell);
            for (int j = 0; j < per_cell; ++j) {
                a[j] = data.at(i, j) - mu[i];
                b[j] = data.at(h, j) - mu[h];
            }
            double ma = 0.0, mb = 0.0;
            for (int j = 0; j < per_cell; ++j) {
                ma += a[j] / per_cell;
                mb += b[j] / per_cell;
            }
            double saa = 0.0, sbb = 0.0, sab = 0.0;
            for (int j = 0; j < per_cell; ++j) {
                saa += (a[j] - ma) * (a[j] - ma);
                sbb += (b[j] - mb) * (b[j] - mb);
                sab += (a[j] - ma) * (b[j] - mb);
            }
            corr_sum += sab / std::sqrt(saa * sbb);
            ++pairs;
        }
    const double mean_corr = pairs ? corr_sum / pairs : 0.0;

    double var_sum = 0.0;
    for (int i = 0; i < cells; ++i)
        for (int j = 0; j < per_cell; ++j) {
            const double e = data.at(i, j) - mu[i];
            var_sum += e * e;
        }
    const double var = var_sum / (static_cast<double>(cells) * per_cell);
    const double mse = mse_estimate(data);

    json doc = {{"version", kSchemaVersion},
                {"command", "simulate"},
                {"params",
                 {{"cells", cells},
                  {"per_cell", per_cell},
                  {"rho", rho},
                  {"sigma2", sigma2},
                  {"seed", seed},
                  {"stream", stream},
                  {"generator", data.generator}}},
                {"empirical",
                 {{"cross_cell_correlation", mean_corr},
                  {"error_variance", var},
                  {"mse_estimate", mse}}}};

    if (!out_path.empty()) {
        json values = json::array();
        for (int i = 0; i < cells; ++i) {
            json row = json::array();
            for (int j = 0; j < per_cell; ++j) row.push_back(data.at(i, j));
            values.push_back(row);
        }
        json file = doc;
        file["values"] = values;
        file["mu"] = mu;
        std::ofstream out(out_path);
        if (!out) throw UnresolvableError("cannot write dataset file '" + out_path + "'");
        out << file.dump(2) << "\n";
        doc["dataset_file"] = out_path;
    }

    if (format == "json") {
        std::printf("%s\n", doc.dump(2).c_str());
        return 0;
    }
    std::printf("copying-model draw: %d cells x %d observations, rho = %s, sigma2 = %s\n", cells,
                per_cell, fmt4(rho).c_str(), fmt4(sigma2).c_str());
    std::printf("seed = %llu, stream = %llu\n", static_cast<unsigned long long>(seed),
                static_cast<unsigned long long>(stream));
    std::printf("empirical cross-cell correlation = %s\n", fmt4(mean_corr).c_str());
    std::printf("empirical error variance = %s\n", fmt4(var).c_str());
    std::printf("MSE estimate of sigma2 = %s\n", fmt4(mse).c_str());
    if (!out_path.empty()) std::printf("dataset written to %s\n", out_path.c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// calibrate
// ---------------------------------------------------------------------------

int cmd_calibrate(const std::string& path, int reps, std::uint64_t seed,
                  std::optional<double> sigma2_flag, std::optional<double> v0,
                  const std::string& format) {
    const auto study = load_study(path);
    const auto sigma = resolve_sigma2(study, sigma2_flag);
    const auto cal = null_calibration(study, sigma.value, reps, seed);

    auto quantiles = [&](const std::vector<double>& v) {
        json q;
        q["0.5"] = json_num(CalibrationResult::quantile(v, 0.5));
        q["0.9"] = json_num(CalibrationResult::quantile(v, 0.9));
        q["0.95"] = json_num(CalibrationResult::quantile(v, 0.95));
        q["0.99"] = json_num(CalibrationResult::quantile(v, 0.99));
        return q;
    };
    auto ge_one = [](const std::vector<double>& v) {
        std::size_t c = 0;
        for (double x : v) c += (x >= 1.0);
        return static_cast<double>(c) / v.size();
    };

    json doc = {{"version", kSchemaVersion},
                {"command", "calibrate"},
                {"inputs", inputs_json(path, study, sigma, study.table.per_cell_count())},
                {"reps", reps},
                {"seed", seed},
                {"per_cell_count", cal.per_cell},
                {"p_v_ge_1",
                 {{"pooled", ge_one(cal.v_pooled)}, {"per_group", ge_one(cal.v_per_group)}}},
                {"quantiles",
                 {{"pooled", quantiles(cal.v_pooled)}, {"per_group", quantiles(cal.v_per_group)}}}};
    if (v0) {
        const auto [pp, sep] = CalibrationResult::exceedance(cal.v_pooled, *v0);
        const auto [pg, seg] = CalibrationResult::exceedance(cal.v_per_group, *v0);
        doc["exceedance"] = {{"v0", *v0},
                             {"pooled", {{"p", pp}, {"se", sep}}},
                             {"per_group", {{"p", pg}, {"se", seg}}}};
    }
    if (cal.single_rep_warning)
        doc["warning"] = "single replicate: the reported distribution is a point mass";

    if (format == "json") {
        std::printf("%s\n", doc.dump(2).c_str());
        return 0;
    }
    std::printf("null calibration of %s\n", path.c_str());
    std::printf("sigma2 = %s (source: %s), reps = %d, seed = %llu, n per cell = %d\n",
                fmt4(sigma.value).c_str(), sigma.source.c_str(), reps,
                static_cast<unsigned long long>(seed), cal.per_cell);
    std::printf("P(V >= 1): pooled = %s, per-group = %s\n",
                fmt4(ge_one(cal.v_pooled)).c_str(), fmt4(ge_one(cal.v_per_group)).c_str());
    std::printf("pooled quantiles: median %s, 90%% %s, 95%% %s, 99%% %s\n",
                fmt4(CalibrationResult::quantile(cal.v_pooled, 0.5)).c_str(),
                fmt4(CalibrationResult::quantile(cal.v_pooled, 0.9)).c_str(),
                fmt4(CalibrationResult::quantile(cal.v_pooled, 0.95)).c_str(),
                fmt4(CalibrationResult::quantile(cal.v_pooled, 0.99)).c_str());
    std::printf("per-group quantiles: median %s, 90%% %s, 95%% %s, 99%% %s\n",
                fmt4(CalibrationResult::quantile(cal.v_per_group, 0.5)).c_str(),
                fmt4(CalibrationResult::quantile(cal.v_per_group, 0.9)).c_str(),
                fmt4(CalibrationResult::quantile(cal.v_per_group, 0.95)).c_str(),
                fmt4(CalibrationResult::quantile(cal.v_per_group, 0.99)).c_str());
    if (v0) {
        const auto [pp, sep] = CalibrationResult::exceedance(cal.v_pooled, *v0);
        const auto [pg, seg] = CalibrationResult::exceedance(cal.v_per_group, *v0);
        std::printf("P(V > %s): pooled = %s +/- %s, per-group = %s +/- %s\n", fmt4(*v0).c_str(),
                    fmt4(pp).c_str(), fmt4(sep).c_str(), fmt4(pg).c_str(), fmt4(seg).c_str());
    }
    if (cal.single_rep_warning)
        std::printf("warning: single replicate; the distribution is a point mass\n");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"evidential value of published ANOVA summaries"};
    app.set_version_flag("--version", "evanova 1.0.0");
    app.require_subcommand(1);

    // analyze
    auto* analyze = app.add_subcommand("analyze", "evidence report for a study file");
    std::string an_path, an_model = "both", an_format = "text";
    double an_sigma2 = 0.0, an_n = 0.0, an_prior = 0.0;
    analyze->add_option("study", an_path, "study file (JSON)")->required();
    analyze->add_option("--model", an_model, "pooled | per-group | both")
        ->check(CLI::IsMember({"pooled", "per-group", "both"}));
    auto* an_s = analyze->add_option("--sigma2", an_sigma2, "error variance override");
    auto* an_no = analyze->add_option("--n", an_n, "per-cell observation count override");
    auto* an_p = analyze->add_option("--prior-odds", an_prior, "prior odds for posterior odds");
    analyze->add_option("--format", an_format, "text | json")
        ->check(CLI::IsMember({"text", "json"}));

    // sigma
    auto* sigma = app.add_subcommand("sigma", "recover sigma2 from published F-statistics");
    std::string sg_path, sg_format = "text";
    sigma->add_option("study", sg_path, "study file (JSON)")->required();
    sigma->add_option("--format", sg_format, "text | json")
        ->check(CLI::IsMember({"text", "json"}));

    // sensitivity
    auto* sens = app.add_subcommand("sensitivity", "worst-case re-analysis over rounding boxes");
    std::string se_path, se_model = "both", se_format = "text";
    double se_sigma2 = 0.0, se_worst_sigma2 = 0.0;
    sens->add_option("study", se_path, "study file (JSON)")->required();
    sens->add_option("--model", se_model, "pooled | per-group | both")
        ->check(CLI::IsMember({"pooled", "per-group", "both"}));
    auto* se_s = sens->add_option("--sigma2", se_sigma2, "error variance for the original table");
    auto* se_w =
        sens->add_option("--worst-sigma2", se_worst_sigma2, "error variance for the worst case");
    sens->add_option("--format", se_format, "text | json")
        ->check(CLI::IsMember({"text", "json"}));

    // combine
    auto* comb = app.add_subcommand("combine", "multiply evidential values of independent studies");
    std::vector<std::string> cb_args;
    std::string cb_format = "text";
    double cb_prior = 0.0;
    comb->add_option("values", cb_args, "evidential values or report files")->required();
    auto* cb_p = comb->add_option("--prior-odds", cb_prior, "prior odds for posterior odds");
    comb->add_option("--format", cb_format, "text | json")
        ->check(CLI::IsMember({"text", "json"}));

    // simulate
    auto* sim = app.add_subcommand("simulate", "draw raw data under the copying model");
    int sm_cells = 2, sm_per_cell = 2;
    double sm_rho = 0.0, sm_sigma2 = 1.0;
    std::uint64_t sm_seed = 0, sm_stream = 0;
    std::vector<double> sm_mu;
    std::string sm_out, sm_format = "text";
    sim->add_option("--cells", sm_cells, "number of cells I")->required();
    sim->add_option("--per-cell", sm_per_cell, "observations per cell n")->required();
    sim->add_option("--rho", sm_rho, "error correlation in [0,1)")->required();
    sim->add_option("--sigma2", sm_sigma2, "error variance");
    sim->add_option("--seed", sm_seed, "random seed")->required();
    sim->add_option("--stream", sm_stream, "stream id (replicate index)");
    sim->add_option("--mu", sm_mu, "cell means (one per cell; default all zero)");
    sim->add_option("--out", sm_out, "write the full dataset to this file");
    sim->add_option("--format", sm_format, "text | json")
        ->check(CLI::IsMember({"text", "json"}));

    // calibrate
    auto* cal = app.add_subcommand("calibrate", "null distribution of V by Monte Carlo");
    std::string cl_path, cl_format = "text";
    int cl_reps = 1000;
    std::uint64_t cl_seed = 0;
    double cl_sigma2 = 0.0, cl_v0 = 0.0;
    cal->add_option("study", cl_path, "template study file (JSON)")->required();
    cal->add_option("--reps", cl_reps, "number of replicates")->required();
    cal->add_option("--seed", cl_seed, "random seed")->required();
    auto* cl_s = cal->add_option("--sigma2", cl_sigma2, "true error variance for simulation");
    auto* cl_v = cal->add_option("--v0", cl_v0, "report the exceedance probability P(V > v0)");
    cal->add_option("--format", cl_format, "text | json")
        ->check(CLI::IsMember({"text", "json"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        auto opt = [](const CLI::Option* o, double v) {
            return o->count() ? std::optional<double>(v) : std::nullopt;
        };
        if (*analyze)
            return cmd_analyze(an_path, an_model, opt(an_s, an_sigma2), opt(an_no, an_n),
                               opt(an_p, an_prior), an_format);
        if (*sigma) return cmd_sigma(sg_path, sg_format);
        if (*sens)
            return cmd_sensitivity(se_path, se_model, opt(se_s, se_sigma2),
                                   opt(se_w, se_worst_sigma2), se_format);
        if (*comb) return cmd_combine(cb_args, opt(cb_p, cb_prior), cb_format);
        if (*sim)
            return cmd_simulate(sm_cells, sm_per_cell, sm_rho, sm_sigma2, sm_seed, sm_stream,
                                sm_mu, sm_out, sm_format);
        if (*cal)
            return cmd_calibrate(cl_path, cl_reps, cl_seed, opt(cl_s, cl_sigma2),
                                 opt(cl_v, cl_v0), cl_format);
    } catch (const UnresolvableError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
