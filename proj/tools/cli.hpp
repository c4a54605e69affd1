#pragma once
// Command-line front end: simulate, rates, cc, segment, spin.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nbcoll/nbody.hpp"
#include "nbcoll/presets.hpp"

namespace nbcoll::cli {

inline constexpr int kConfigSchema = 1;
inline constexpr int kCsvSchema = 1;

// Exit codes: 0 success, 1 run or analysis failure, 2 usage or config error.
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string field, const std::string& what)
        : std::runtime_error(field.empty() ? what : "field '" + field + "': " + what), field_(std::move(field)) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

struct AnalysisToggles {
    bool rates = true;
    bool perturbation = true;
    bool spin = true;
    bool cc_residual = true;
    double window_lo = 1e-8, window_hi = 1e-4;
    double decay_from = 1e-2;  // T - t where the perturbation fit starts
};

struct SegmentSettings {
    std::string mode = "scenario";  // or "linear_saddle"
    double R = 1e-2;
    std::optional<double> gamma, alpha, radius, tau_begin;
    int time_slices = 64;
    int sphere_points = 256;
};

struct RunConfig {
    bool has_scenario = false;
    Scenario scenario;
    Precision precision = Precision::DoubleDouble;
    std::optional<double> rel_tol;
    double stop_fraction = 1e-10;
    double t_max = 100.0;
    long max_steps = 5'000'000;
    double param_tol = 1e-28;
    int shoot_max_iter = 200;
    AnalysisToggles analysis;
    std::vector<double> cc_masses;
    int cc_multistart = 40;
    SegmentSettings segment;
    int csv_every = 1;

    double effective_rel_tol() const;
};

// Strict parse: unknown fields, wrong types and a missing or unsupported
// "schema" raise ConfigError naming the field.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

// Shortest decimal that reads back to the same double.
std::string format_double(double x);

// Full command line, argv[0] included. Output goes to files under --out
// (default ".") and a human-readable table on stdout.
int run(const std::vector<std::string>& args);
int main(int argc, char** argv);

}  // namespace nbcoll::cli
