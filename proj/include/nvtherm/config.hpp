#pragma once

/**
 * @file config.hpp
 * @brief Line-oriented `key = value` experiment configuration.
 *
 * Every field has a default, so an empty file is a valid configuration.
 * Pressures are given in hPa here and converted to Pa by the accessors.
 * `condition` and `psd` are the only repeatable/structured keys; they tie a
 * particle's data files to the conditions they were recorded under.
 */

#include "nvtherm/least_squares.hpp"
#include "nvtherm/physics.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace nvtherm::pipeline {

using Json = nlohmann::ordered_json;

struct ConditionSpec {
    double intensity = 0.0;     // W/m^2
    double pressure_hpa = 0.0;
    std::string esr_path;
};

struct PsdSpec {
    double pressure_hpa = 0.0;
    std::string path;
};

struct ExperimentConfig {
    // gas and particle constants
    double t0 = 294.0;
    double c_bar = 503.0;
    double gamma_ratio = 1.4;
    double alpha_acc = 1.0;
    double density = 3500.0;
    double molar_mass = 0.02897;
    double wavelength = 1550e-9;
    double eps_real = 5.7;

    // thermometer
    double zfs_a0 = 2.8697e9;
    double zfs_a1 = 9.7e4;
    double zfs_a2 = -3.7e2;
    double zfs_a3 = 0.17;

    std::uint64_t seed = 1;

    // ensemble synthesis
    int particle_count = 46;
    double radius_min = 40e-9;
    double radius_max = 160e-9;
    double a_h = 4.0e3;        // 1/m
    double sigma_log = 1.27;

    // per-particle synthesis
    double particle_sigma_abs = 4e-18;
    double particle_r_hydro = 100e-9;
    double synth_d_strain = 0.0;
    bool synth_noise = true;
    std::vector<double> synth_intensities{0.5e10, 1e10, 2e10};
    std::vector<double> synth_pressures_hpa{20.0, 40.0};
    bool synth_rescale_intensity = true;
    double synth_target_temperature = 500.0;
    double guard_max_temperature = 550.0;
    double guard_min_pressure_hpa = 15.0;

    // ESR line and scan
    double esr_span = 80e6;
    int esr_points = 200;
    double esr_dwell = 1.5;
    double esr_contrast = 0.07;
    double esr_linewidth = 10e6;
    double esr_count_rate = 2e5;
    double esr_e_split = 5e6;
    double sensitivity_slope = -74e3;  // Hz/K

    // motion PSD
    double psd_trap_frequency = 50e3;
    double psd_pressure_hpa = 15.0;
    double psd_f_min = 100.0;
    double psd_f_max = 200e3;
    int psd_points = 2000;
    int psd_averages = 200;

    // fitting
    int fit_max_iterations = 200;
    double fit_step_tol = 1e-10;
    double fit_gradient_tol = 1e-12;
    double fit_cost_tol = 1e-15;

    int hist_bins = 10;

    std::vector<ConditionSpec> conditions;
    std::optional<PsdSpec> psd;

    // Directory that relative data paths are resolved against. Not echoed.
    std::filesystem::path base_dir;

    void validate() const;

    physics::ZfsPolynomial zfs() const;
    physics::GasConditions gas(double pressure_pa) const;
    estimation::SolverTolerances tolerances() const;
    std::filesystem::path resolve(const std::string& path) const;
};

ExperimentConfig parse_config(std::string_view text, const std::string& source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

/// Text that parse_config reads back to an identical configuration.
std::string format_config(const ExperimentConfig& config);

Json config_to_json(const ExperimentConfig& config);

std::string format_double(double value);

}  // namespace nvtherm::pipeline
