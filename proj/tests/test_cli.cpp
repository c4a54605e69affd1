#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "doctest.h"

namespace fs = std::filesystem;
using json = nlohmann::json;
using nbcoll::cli::run;

namespace {

fs::path scratch(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("nbcoll_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path write_config(const fs::path& dir, const std::string& text) {
    fs::path p = dir / "config.json";
    std::ofstream(p) << text;
    return p;
}

int run_cmd(std::vector<std::string> args) {
    args.insert(args.begin(), "nbcoll");
    return run(args);
}

}  // namespace

TEST_CASE("cli config: strict parse names the offending field") {
    using nbcoll::cli::ConfigError;
    using nbcoll::cli::parse_config;
    auto field_of = [](const std::string& text) {
        try {
            parse_config(text);
        } catch (const ConfigError& e) {
            return e.field();
        }
        return std::string("<none>");
    };
    CHECK(field_of(R"({"schema": 1, "integrator": {"rel_tol": "tight"}})") == "integrator.rel_tol");
    CHECK(field_of(R"({"schema": 1, "integrator": {"reltol": 1e-12}})") == "integrator.reltol");
    CHECK(field_of(R"({"schema": 2})") == "schema");
    CHECK(field_of(R"({"scenario": {"preset": "kepler_pair"}})") == "schema");
    CHECK(field_of(R"({"schema": 1, "scenario": {"preset": "nope"}})") == "scenario.preset");
    CHECK(field_of(R"({"schema": 1, "scenario": {"masses": [1, 1], "positions": [[0, 0], [0, 0]],
                      "velocities": [[0, 0], [0, 0]], "focus": [0, 1]}})") == "scenario.positions");
    CHECK(field_of(R"({"schema": 1, "scenario": {"masses": [1, -1], "positions": [[0, 0], [1, 0]],
                      "velocities": [[0, 0], [0, 0]], "focus": [0, 1]}})") == "scenario.masses");
    CHECK(field_of(R"({"schema": 1, "analysis": {"window": [1e-4, 1e-8]}})") == "analysis.window");
    CHECK(field_of(R"({"schema": 1, "segment": {"mode": "other"}})") == "segment.mode");
    CHECK(field_of(R"({"schema": 1, "output": {"csv_every": 0}})") == "output.csv_every");
    CHECK_THROWS_AS(parse_config("{\"schema\": 1,"), ConfigError);

    auto cfg = parse_config(R"({"schema": 1, "integrator": {"precision": "double"}})");
    CHECK(cfg.effective_rel_tol() == 1e-12);
    CHECK(parse_config(R"({"schema": 1})").effective_rel_tol() == 1e-16);
}

TEST_CASE("cli format_double round-trips") {
    for (double x : {0.1, 1.0 / 3.0, std::numbers::pi, 1e-300, -2.5e17}) {
        std::string s = nbcoll::cli::format_double(x);
        CHECK(std::stod(s) == x);
    }
    CHECK(nbcoll::cli::format_double(0.5) == "0.5");
}

TEST_CASE("cli: malformed config exits 2 with an error document") {
    auto dir = scratch("malformed");
    auto cfg = write_config(dir, R"({"schema": 1, "integrator": {"rel_tol": "tight"}})");
    int code = run_cmd({"simulate", "--config", cfg.string(), "--out", dir.string()});
    CHECK(code == nbcoll::cli::kExitUsage);
    auto doc = json::parse(slurp(dir / "summary.json"));
    CHECK(doc["status"] == "error");
    CHECK(doc["error_kind"] == "config");
    CHECK(doc["reason"].get<std::string>().find("integrator.rel_tol") != std::string::npos);

    CHECK(run_cmd({"frobnicate"}) == nbcoll::cli::kExitUsage);
    CHECK(run_cmd({"simulate", "--out", dir.string()}) == nbcoll::cli::kExitUsage);  // no scenario
}

TEST_CASE("cli simulate: Kepler collision time and byte-identical reruns") {
    auto dir = scratch("kepler");
    auto cfg = write_config(dir, R"({"schema": 1, "scenario": {"preset": "kepler_pair"}, "output": {"csv_every": 50}})");
    auto a = dir / "a", b = dir / "b";
    REQUIRE(run_cmd({"simulate", "--config", cfg.string(), "--out", a.string()}) == 0);
    REQUIRE(run_cmd({"simulate", "--config", cfg.string(), "--out", b.string()}) == 0);
    auto doc = json::parse(slurp(a / "summary.json"));
    CHECK(std::abs(doc["T_est"].get<double>() - std::numbers::pi / std::sqrt(2.0)) < 1e-12);
    CHECK(doc["outcome"] == "collision");
    CHECK(slurp(a / "summary.json") == slurp(b / "summary.json"));
    CHECK(slurp(a / "trajectory.csv") == slurp(b / "trajectory.csv"));
    CHECK(slurp(a / "trajectory.csv").rfind("#csv_schema=1\n", 0) == 0);

    // spin of a pair on a fixed line is identically zero
    REQUIRE(run_cmd({"spin", "--config", cfg.string(), "--out", a.string()}) == 0);
    auto spin = json::parse(slurp(a / "spin.json"));
    CHECK(spin["spin_total"].get<double>() == 0.0);
    for (const auto& row : spin["halvings"]) CHECK(row["variation"].get<double>() == 0.0);
}

TEST_CASE("cli simulate and rates: Lagrange homothetic") {
    auto dir = scratch("lagrange");
    auto cfg = write_config(dir, R"({"schema": 1, "scenario": {"preset": "lagrange_homothetic"}})");
    REQUIRE(run_cmd({"simulate", "--config", cfg.string(), "--out", dir.string()}) == 0);
    auto doc = json::parse(slurp(dir / "summary.json"));
    CHECK(doc["terminal_cc_distance"].get<double>() < 1e-10);

    // rates from the written trajectory agree with a fresh run
    auto from_csv = dir / "csv";
    REQUIRE(run_cmd({"rates", "--config", cfg.string(), "--trajectory", (dir / "trajectory.csv").string(), "--out",
                     from_csv.string()}) == 0);
    REQUIRE(run_cmd({"rates", "--config", cfg.string(), "--out", dir.string()}) == 0);
    auto r1 = json::parse(slurp(from_csv / "rates.json"))["rates"];
    auto r2 = json::parse(slurp(dir / "rates.json"))["rates"];
    CHECK(r1["A_hat"].get<double>() == doctest::Approx(r2["A_hat"].get<double>()).epsilon(1e-12));
    for (const auto& c : r2["ratio_checks"])
        CHECK(std::abs(c["limit"].get<double>() / c["target"].get<double>() - 1.0) < 1e-2);
}

TEST_CASE("cli rates: a window beyond the data exits 1") {
    auto dir = scratch("window");
    auto cfg = write_config(dir, R"({"schema": 1, "scenario": {"preset": "kepler_pair"},
                                     "integrator": {"stop_fraction": 1e-3}, "analysis": {"window": [1e-12, 1e-10]}})");
    CHECK(run_cmd({"rates", "--config", cfg.string(), "--out", dir.string()}) == nbcoll::cli::kExitFailure);
    auto doc = json::parse(slurp(dir / "rates.json"));
    CHECK(doc["status"] == "error");
}

TEST_CASE("cli cc: equal masses and idempotence") {
    auto dir = scratch("cc");
    REQUIRE(run_cmd({"cc", "--masses", "1,1,1", "--out", dir.string()}) == 0);
    auto doc = json::parse(slurp(dir / "cc.json"));
    CHECK(doc["catalog"].size() == 5);
    CHECK(doc["label_classes"] == 2);

    auto a = dir / "a", b = dir / "b";
    REQUIRE(run_cmd({"cc", "--masses", "1,1,1,1", "--out", a.string()}) == 0);
    REQUIRE(run_cmd({"cc", "--masses", "1,1,1,1", "--out", b.string()}) == 0);
    CHECK(slurp(a / "cc.json") == slurp(b / "cc.json"));
    bool square = false;
    auto four = json::parse(slurp(a / "cc.json"));
    for (const auto& c : four["catalog"])
        if (std::abs(c["lambda"].get<double>() - (2.0 + 4.0 * std::sqrt(2.0))) < 1e-10 && c["residual"] < 1e-10)
            square = true;
    CHECK(square);

    CHECK(run_cmd({"cc", "--masses", "1,x,1", "--out", dir.string()}) == nbcoll::cli::kExitUsage);
}

TEST_CASE("cli segment: self-test and ring scenario") {
    auto dir = scratch("segment");
    REQUIRE(run_cmd({"segment", "--self-test", "--out", dir.string()}) == 0);
    auto doc = json::parse(slurp(dir / "segment.json"));
    CHECK(doc["verified"] == true);
    CHECK(doc["closed_form_max_rel_error"].get<double>() < 1e-12);

    auto cfg = write_config(dir, R"({"schema": 1, "scenario": {"preset": "lagrange_in_ring"}})");
    REQUIRE(run_cmd({"segment", "--config", cfg.string(), "--out", dir.string()}) == 0);
    doc = json::parse(slurp(dir / "segment.json"));
    CHECK(doc["cone"]["cone_condition"] == true);
    CHECK(doc["verified"] == true);
    CHECK(doc["tube"]["alpha"].get<double>() < doc["tube"]["gamma"].get<double>());
}
