#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mvlab/adjoint.hpp"
#include "mvlab/derivative_checks.hpp"
#include "mvlab/pmp.hpp"
#include "mvlab/variation.hpp"

namespace mvlab::cli {

/// Invalid configuration. `field` is the dotted path of the offending entry, e.g. "grid.M".
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string field, const std::string& message)
        : std::runtime_error(field + ": " + message), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

struct RateSettings {
    int bootstrap_replicates = 2000;
    double ci_level = 0.9;
    std::map<std::string, std::pair<double, double>> bands;  // slope band per series
    double zeta_min = 2.0;
};

struct AdjointCheckSettings {
    int test_sources = 3;
    int test_pairs = 2;
    std::uint64_t source_seed = 11;
    double source_scale = 0.5;
    double max_relative = 0.05;
    double max_rmse = 0.05;
    std::vector<double> horizons;
    double max_factor = 0.5;
};

struct SmpSettings {
    int N = 10000;
    int grid_points = 9;
    double se_multiplier = 3.0;
    bool optimize_first = true;
};

struct ExpandSettings {
    int N = 20000;
    bool antithetic = true;
};

struct OptimizeSettings {
    int iterations = 30;
    double relaxation = 1.0;
    int golden_iterations = 48;
    double tolerance = 1e-7;
};

struct LionsSettings {
    int ensemble_size = 32;
    int fd_samples = 8;
    double fd_radius = 2.0;
    SweepCriteria criteria;
};

/// A validated experiment. Everything random derives from `seeds`: single-run commands use
/// seeds[0] as the master seed, the rate suite uses every entry as one replicate.
struct ExperimentConfig {
    nlohmann::json effective;  // the full configuration with every default filled in
    std::filesystem::path base_dir;

    GalerkinSpace space{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1)};
    TimeGrid grid{1.0, 1};
    int N = 1;
    ModelPtr model;
    std::string family;
    InitialSampler sampler;
    Control ubar;
    Control pert;
    double offset = 0.25;
    std::vector<double> eps;
    std::vector<std::uint64_t> seeds;
    int workers = 1;
    std::filesystem::path output;
    AdjointOptions adjoint;

    RateSettings rates;
    AdjointCheckSettings adjoint_check;
    SmpSettings smp;
    ExpandSettings expand;
    OptimizeSettings optimize;
    LionsSettings lions;

    /// Warnings raised while validating (e.g. eps values that are not multiples of dt).
    std::vector<std::string> warnings;

    std::uint64_t master_seed() const { return seeds.front(); }
};

/// Parses and validates. Missing keys take the defaults of the reference configuration;
/// unknown keys are rejected. Relative file paths resolve against base_dir.
ExperimentConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);
ExperimentConfig load_config(const std::filesystem::path& path);

/// The configuration with every default spelled out (the content of configs/reference.json).
nlohmann::json default_config();

/// Replaces the seed list by master, master + 1, ... keeping its length.
void override_seed(nlohmann::json& doc, std::uint64_t master);

}  // namespace mvlab::cli
