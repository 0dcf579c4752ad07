#pragma once

/**
 * @file io.hpp
 * @brief CSV readers and writers for the on-disk tables.
 *
 * Schemas (header line required, `#` lines are comments):
 *   ESR          frequency_hz,counts              plus a `# dwell_s=<seconds>` line
 *   PSD          frequency_hz,psd_m2_per_hz
 *   heating      intensity_w_m2,pressure_pa,d_hz,sigma_d_hz
 *   calibration  t_set_k,d_hz
 *   ensemble     particle_id,beta_heat,r_hydro_m,sigma_abs_m2[,beta_uncertainty,sigma_abs_uncertainty_m2]
 *
 * Parsers throw ParseError with the 1-based line and column of the first problem.
 * Emitters write doubles in shortest round-trip form.
 */

#include "nvtherm/fits.hpp"
#include "nvtherm/spectral.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace nvtherm::pipeline {

struct EnsembleRecord {
    int particle_id = 0;
    double beta_heat = 0.0;         // K Pa m^2 / W
    double beta_uncertainty = 0.0;
    double r_hydro = 0.0;           // m
    double sigma_abs = 0.0;         // m^2
    double sigma_abs_uncertainty = 0.0;

    bool operator==(const EnsembleRecord&) const = default;
};

spectral::EsrSpectrum parse_esr(std::string_view text, const std::string& source);
spectral::MotionPsd parse_psd(std::string_view text, const std::string& source);
std::vector<estimation::HeatingPoint> parse_heating_table(std::string_view text, const std::string& source);
std::vector<estimation::CalibrationPair> parse_calibration_table(std::string_view text, const std::string& source);
std::vector<EnsembleRecord> parse_ensemble(std::string_view text, const std::string& source);

spectral::EsrSpectrum ingest_esr(const std::filesystem::path& path);
spectral::MotionPsd ingest_psd(const std::filesystem::path& path);
std::vector<estimation::HeatingPoint> ingest_heating_table(const std::filesystem::path& path);
std::vector<estimation::CalibrationPair> ingest_calibration_table(const std::filesystem::path& path);
std::vector<EnsembleRecord> ingest_ensemble(const std::filesystem::path& path);

std::string format_esr(const spectral::EsrSpectrum& spectrum);
std::string format_psd(const spectral::MotionPsd& psd);
std::string format_heating_table(const std::vector<estimation::HeatingPoint>& points);
std::string format_calibration_table(const std::vector<estimation::CalibrationPair>& pairs);
std::string format_ensemble(const std::vector<EnsembleRecord>& records);

std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace nvtherm::pipeline
