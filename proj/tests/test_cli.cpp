#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

#include "evanova/evidence.hpp"
#include "evanova/study_io.hpp"

using nlohmann::json;

namespace {

const std::string kCli = EVANOVA_CLI_PATH;
const std::string kFixtureDir = EVANOVA_FIXTURE_DIR;
const std::string kStudy = kFixtureDir + "/study_3x2x2.json";
const std::string kWorst = kFixtureDir + "/study_3x2x2_worst_case.json";

struct RunResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

RunResult run(const std::string& args) {
    static int counter = 0;
    const std::string out_path = "cli_out_" + std::to_string(counter) + ".txt";
    const std::string err_path = "cli_err_" + std::to_string(counter) + ".txt";
    ++counter;
    const std::string cmd = kCli + " " + args + " > " + out_path + " 2> " + err_path;
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    auto slurp = [](const std::string& p) {
        std::ifstream in(p);
        std::ostringstream os;
        os << in.rdbuf();
        return os.str();
    };
    r.out = slurp(out_path);
    r.err = slurp(err_path);
    std::remove(out_path.c_str());
    std::remove(err_path.c_str());
    return r;
}

json run_json(const std::string& args, int expected_exit = 0) {
    const auto r = run(args);
    REQUIRE(r.exit_code == expected_exit);
    return json::parse(r.out);
}

std::string write_temp(const std::string& name, const std::string& content) {
    std::ofstream out(name);
    out << content;
    return name;
}

}  // namespace

TEST_CASE("analyze reproduces the published evidential values") {
    const auto doc = run_json("analyze " + kStudy + " --model both --sigma2 1.134 --format json");
    CHECK(doc["version"] == 1);
    CHECK(doc["inputs"]["sigma2_source"] == "--sigma2 flag");
    const double v_pooled = doc["evidence"]["pooled"]["v"].get<double>();
    const double v_groups = doc["evidence"]["per_group"]["v"].get<double>();
    CHECK(std::abs(v_pooled - 56.88) <= 0.2);
    CHECK(std::abs(v_groups - 14.49) <= 0.05);
}

TEST_CASE("analyze applies prior odds and reports the threshold flag") {
    const auto doc =
        run_json("analyze " + kStudy + " --model pooled --sigma2 1.134 --prior-odds 1 --format json");
    const double v = doc["evidence"]["pooled"]["v"].get<double>();
    CHECK(doc["odds"]["posterior"].get<double>() == doctest::Approx(v));
    CHECK(doc["odds"]["exceeds_one"] == true);

    const auto small = run_json(
        "analyze " + kStudy + " --model pooled --sigma2 1.134 --prior-odds 1e-9 --format json");
    CHECK(small["odds"]["exceeds_one"] == false);
}

TEST_CASE("analyze falls back to F-statistic recovery and echoes the source") {
    const auto doc = run_json("analyze " + kStudy + " --model pooled --format json");
    CHECK(doc["inputs"]["sigma2_source"] == "recovered from F-statistics");
    // three unflagged recoveries around 1.095, 1.223, 1.217
    CHECK(doc["inputs"]["sigma2"].get<double>() == doctest::Approx(1.178).epsilon(0.001));
    // the misprint-sized record is excluded and flagged
    bool excluded_note = false;
    for (const auto& f : doc["flags"])
        if (f.get<std::string>().find("outlier") != std::string::npos) excluded_note = true;
    CHECK(excluded_note);
}

TEST_CASE("analyze exit codes: unresolvable sigma2 and invalid files") {
    using namespace evanova;
    auto study = parse_study_file(kStudy);
    study.f_stats.clear();
    const auto path = write_temp("cli_no_f.json", serialize_study(study));
    const auto r = run("analyze " + path);
    CHECK(r.exit_code == 2);
    CHECK(r.err.find("unresolvable") != std::string::npos);
    std::remove(path.c_str());

    const auto missing = run("analyze does_not_exist.json --sigma2 1");
    CHECK(missing.exit_code == 2);

    const auto broken = write_temp("cli_broken.json", "{\"design\": []");
    CHECK(run("analyze " + broken + " --sigma2 1").exit_code == 1);
    std::remove(broken.c_str());

    // partition violation -> validation error -> exit 1
    std::string text;
    {
        std::ifstream in(kStudy);
        std::ostringstream os;
        os << in.rdbuf();
        text = os.str();
    }
    auto bad = json::parse(text);
    bad["groups"][0].erase(0);
    const auto bad_path = write_temp("cli_bad_groups.json", bad.dump());
    CHECK(run("analyze " + bad_path + " --sigma2 1").exit_code == 1);
    std::remove(bad_path.c_str());
}

TEST_CASE("sigma lists per-record recoveries and the pooled value") {
    const auto doc = run_json("sigma " + kStudy + " --format json");
    REQUIRE(doc["records"].size() == 4);
    CHECK(doc["records"][0]["estimate"].get<double>() == doctest::Approx(2.420).epsilon(5e-4));
    CHECK(doc["records"][0]["outlier"] == true);
    CHECK(doc["records"][1]["estimate"].get<double>() == doctest::Approx(1.095).epsilon(5e-4));
    CHECK(doc["records"][2]["estimate"].get<double>() == doctest::Approx(1.223).epsilon(5e-4));
    CHECK(doc["records"][3]["estimate"].get<double>() == doctest::Approx(1.217).epsilon(5e-4));
    // rounding intervals bracket every estimate
    for (const auto& r : doc["records"]) {
        REQUIRE(r.contains("interval"));
        CHECK(r["interval"][0].get<double>() <= r["estimate"].get<double>());
        CHECK(r["estimate"].get<double>() <= r["interval"][1].get<double>());
    }
}

TEST_CASE("sigma pools the lower-half recoveries to 1.220") {
    using namespace evanova;
    auto study = parse_study_file(kStudy);
    study.f_stats = {study.f_stats[2], study.f_stats[3]};
    const auto path = write_temp("cli_lower_half.json", serialize_study(study));
    const auto doc = run_json("sigma " + path + " --format json");
    CHECK(doc["pooled"].get<double>() == doctest::Approx(1.220).epsilon(5e-4));
    std::remove(path.c_str());
}

TEST_CASE("sigma without F-statistics exits with code 2") {
    using namespace evanova;
    auto study = parse_study_file(kStudy);
    study.f_stats.clear();
    const auto path = write_temp("cli_sigma_empty.json", serialize_study(study));
    CHECK(run("sigma " + path).exit_code == 2);
    std::remove(path.c_str());
}

TEST_CASE("sensitivity reproduces the worst-case table and the V drop") {
    const auto doc = run_json("sensitivity " + kStudy +
                              " --sigma2 1.134 --worst-sigma2 1.168 --format json");
    const auto expected = evanova::parse_study_file(kWorst);
    REQUIRE(doc["worst_case"]["cells"].size() == 12);
    for (std::size_t i = 0; i < 12; ++i) {
        CHECK(doc["worst_case"]["cells"][i]["id"] == expected.table.cells[i].id);
        CHECK(std::abs(doc["worst_case"]["cells"][i]["mean"].get<double>() -
                       expected.table.cells[i].mean) < 1e-12);
    }
    const double v_orig = doc["original"]["pooled"]["v"].get<double>();
    const double v_worst = doc["worst_case"]["pooled"]["v"].get<double>();
    CHECK(std::abs(v_orig - 56.88) <= 0.2);
    CHECK(std::abs(v_worst - 1.92) <= 0.02);
    CHECK(v_worst < v_orig);
}

TEST_CASE("sensitivity on exact tables is rejected") {
    CHECK(run("sensitivity " + kWorst + " --sigma2 1.168").exit_code == 1);
}

TEST_CASE("sensitivity never raises the pooled V at fixed sigma2") {
    const auto doc =
        run_json("sensitivity " + kStudy + " --sigma2 1.134 --worst-sigma2 1.134 --format json");
    CHECK(doc["worst_case"]["pooled"]["v"].get<double>() <=
          doc["original"]["pooled"]["v"].get<double>());
}

TEST_CASE("combine multiplies values and rejects impossible ones") {
    const auto doc = run_json("combine 56.88 1.92 --format json");
    CHECK(doc["combined"].get<double>() == doctest::Approx(109.2096).epsilon(1e-10));

    const auto with_one = run_json("combine 1 3.7 --format json");
    CHECK(with_one["combined"].get<double>() == doctest::Approx(3.7));

    CHECK(run("combine 0.5 2.0").exit_code == 1);
}

TEST_CASE("combine accepts report files") {
    const auto r =
        run("analyze " + kStudy + " --model pooled --sigma2 1.134 --format json");
    REQUIRE(r.exit_code == 0);
    const auto path = write_temp("cli_report.json", r.out);
    const auto doc = run_json("combine " + path + " 2.0 --format json");
    const double v = json::parse(r.out)["evidence"]["pooled"]["v"].get<double>();
    CHECK(doc["combined"].get<double>() == doctest::Approx(2.0 * v).epsilon(1e-12));
    std::remove(path.c_str());
}

TEST_CASE("simulate reports moments that match the requested correlation") {
    const auto doc = run_json(
        "simulate --cells 2 --per-cell 100000 --rho 0.49 --sigma2 1 --seed 42 --format json");
    CHECK(std::abs(doc["empirical"]["cross_cell_correlation"].get<double>() - 0.49) < 0.01);
    CHECK(std::abs(doc["empirical"]["error_variance"].get<double>() - 1.0) < 0.02);
}

TEST_CASE("simulate is byte-identical for a fixed seed") {
    const auto a = run("simulate --cells 3 --per-cell 500 --rho 0.25 --sigma2 2 --seed 7 --format json");
    const auto b = run("simulate --cells 3 --per-cell 500 --rho 0.25 --sigma2 2 --seed 7 --format json");
    CHECK(a.exit_code == 0);
    CHECK(a.out == b.out);
    const auto c = run("simulate --cells 3 --per-cell 500 --rho 0.25 --sigma2 2 --seed 8 --format json");
    CHECK(a.out != c.out);
}

TEST_CASE("simulate rejects invalid parameter domains") {
    CHECK(run("simulate --cells 2 --per-cell 100 --rho 1.0 --seed 1").exit_code == 1);
    CHECK(run("simulate --cells 2 --per-cell 1 --rho 0.2 --seed 1").exit_code == 1);
}

TEST_CASE("calibrate: P(V >= 1) is exactly one and reruns are byte-identical") {
    const auto args = "calibrate " + kStudy + " --reps 200 --seed 11 --sigma2 1.134 --v0 56.88 --format json";
    const auto doc = run_json(args);
    CHECK(doc["p_v_ge_1"]["pooled"].get<double>() == 1.0);
    CHECK(doc["p_v_ge_1"]["per_group"].get<double>() == 1.0);
    CHECK(doc["exceedance"]["pooled"].contains("se"));
    CHECK(doc["seed"] == 11);

    const auto a = run(args);
    const auto b = run(args);
    CHECK(a.out == b.out);
}

TEST_CASE("degenerate scatter serializes V as the string \"infinity\"") {
    using namespace evanova;
    auto study = parse_study_file(kStudy);
    // collapse every group onto its mean: zero within-group scatter
    const auto groups = resolve_groups(study.table, study.grouping);
    const auto means = group_means(study.table, study.grouping);
    for (std::size_t k = 0; k < groups.size(); ++k)
        for (auto i : groups[k]) study.table.cells[i].mean = means[k];
    const auto path = write_temp("cli_degenerate.json", serialize_study(study));
    const auto doc = run_json("analyze " + path + " --model pooled --sigma2 1.134 --format json");
    CHECK(doc["evidence"]["pooled"]["v"] == "infinity");
    CHECK(doc["evidence"]["pooled"]["log_v"] == "infinity");
    CHECK(doc["evidence"]["pooled"]["degenerate"] == true);
    bool degenerate_note = false;
    for (const auto& f : doc["flags"])
        if (f.get<std::string>().find("degenerate") != std::string::npos) degenerate_note = true;
    CHECK(degenerate_note);
    std::remove(path.c_str());
}

TEST_CASE("calibrate with a single replicate warns") {
    const auto doc =
        run_json("calibrate " + kStudy + " --reps 1 --seed 3 --sigma2 1.134 --format json");
    CHECK(doc.contains("warning"));
}
