#pragma once

/**
 * @file pipeline.hpp
 * @brief Single-particle and ensemble runs over synthetic or recorded data.
 *
 * Per particle: ESR fit per heating condition, inversion to temperature,
 * heating fit, PSD fit, hydrodynamic radius, absorption cross-section.
 * Stage failures surface as PipelineError naming the stage and its input.
 */

#include "nvtherm/config.hpp"
#include "nvtherm/fits.hpp"
#include "nvtherm/io.hpp"
#include "nvtherm/spectral.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace nvtherm::pipeline {

struct ConditionData {
    double intensity = 0.0;  // W/m^2
    double pressure = 0.0;   // Pa
    spectral::EsrSpectrum spectrum;
    std::string label;       // file name or synthetic tag, used in errors
};

struct ParticleData {
    std::vector<ConditionData> conditions;
    spectral::MotionPsd psd;
    double psd_pressure = 0.0;  // Pa
    std::string psd_label;
};

struct ConditionResult {
    double intensity = 0.0;
    double pressure = 0.0;
    double d_hat = 0.0;
    double sigma_d = 0.0;
    double e_split = 0.0;
    bool degenerate = false;
    double t_apparent = 0.0;  // inverted without strain correction
    double t_measured = 0.0;  // inverted after removing the fitted strain offset
    double sigma_t = 0.0;
    double t_model = 0.0;     // t0 + beta I / p
};

struct ParticleResult {
    std::vector<ConditionResult> conditions;
    estimation::HeatingFitResult heating;
    spectral::PsdFit psd;
    double r_hydro = 0.0;
    double r_hydro_sigma = 0.0;
    double sigma_abs = 0.0;
    double sigma_abs_sigma = 0.0;
};

struct ParticleTruth {
    double r_hydro = 0.0;
    double sigma_abs = 0.0;
    double beta_heat = 0.0;
    double d_strain = 0.0;
    double gamma = 0.0;
    std::vector<double> intensities;   // W/m^2
    std::vector<double> pressures;     // Pa
    std::vector<double> temperatures;  // K
};

struct SyntheticParticle {
    ParticleTruth truth;
    ParticleData data;
};

struct OutputFile {
    std::string name;
    std::string content;
};

/// Generates the ESR spectra and PSD of one particle. Noise follows config.synth_noise.
SyntheticParticle synthesize_particle(const ExperimentConfig& config, double r_hydro, double sigma_abs,
                                      std::uint64_t seed);

ParticleResult analyze_particle(const ExperimentConfig& config, const ParticleData& data);

/// Reads the condition and psd files listed in the config.
ParticleData load_particle_data(const ExperimentConfig& config);

ParticleResult run_particle(const ExperimentConfig& config);

Json particle_report(const ExperimentConfig& config, const ParticleResult& result);

/// Data files plus a `particle.cfg` that `run_particle` accepts; truth goes to `truth.json`.
std::vector<OutputFile> synthetic_particle_outputs(const ExperimentConfig& config, const SyntheticParticle& particle);

struct ParticleOutcome {
    int particle_id = 0;
    ParticleTruth truth;
    std::optional<ParticleResult> result;
    std::string failure_stage;
    std::string failure_message;
};

struct OpticsEstimate {
    std::string label;
    double amplitude = 0.0;          // 1/m
    double sigma_over_volume = 0.0;  // 1/m
    std::optional<double> eps_imag;
    std::optional<double> bulk_absorption;  // 1/m
    std::string note;
};

struct EnsembleResult {
    std::vector<ParticleOutcome> particles;
    std::vector<EnsembleRecord> records;
    estimation::ExponentComparison comparison;
    estimation::ConfidenceBand band;  // around the n = 3 fit
    std::vector<OpticsEstimate> optics;
};

/// Synthesizes and analyzes config.particle_count particles. Output does not depend on `threads`.
EnsembleResult run_ensemble(const ExperimentConfig& config, unsigned threads = 0);

Json ensemble_report(const ExperimentConfig& config, const EnsembleResult& result);

/// Report JSON plus the plot-ready CSV tables.
std::vector<OutputFile> ensemble_outputs(const ExperimentConfig& config, const EnsembleResult& result);

/// Creates `dir` if needed and writes each file atomically.
void write_outputs(const std::filesystem::path& dir, const std::vector<OutputFile>& files);

std::string dump_json(const Json& j);

}  // namespace nvtherm::pipeline
