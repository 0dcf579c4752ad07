#pragma once

/**
 * @file spectral.hpp
 * @brief Forward models and fits for ESR dip spectra and motional PSDs.
 */

#include "nvtherm/least_squares.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace nvtherm::spectral {

/// Two-dip ESR line: dips at d_center -/+ e_split, widths are FWHM.
struct EsrLineParams {
    double d_center = 2.87e9;      // Hz
    double e_split = 5e6;          // Hz
    double contrast_minus = 0.07;
    double contrast_plus = 0.07;
    double width_minus = 10e6;     // Hz
    double width_plus = 10e6;      // Hz
    double base_rate = 2e5;        // counts/s

    void validate() const;
    double f_minus() const { return d_center - e_split; }
    double f_plus() const { return d_center + e_split; }
};

struct EsrSpectrum {
    std::vector<double> frequencies;      // Hz, strictly increasing
    std::vector<std::uint64_t> counts;
    double dwell_per_point = 1.5;         // s

    void validate() const;
    std::size_t size() const { return frequencies.size(); }
};

struct OscillatorParams {
    double resonance_omega = 2.0 * 3.14159265358979323846 * 50e3;  // rad/s
    double damping_gamma = 6.56e4;                                 // 1/s
    double mass = 1.466e-17;                                       // kg
    double temperature_cm = 294.0;                                 // K

    void validate() const;
    bool underdamped() const { return resonance_omega > damping_gamma / 2.0; }
};

struct MotionPsd {
    std::vector<double> frequencies;  // Hz, one-sided, strictly increasing
    std::vector<double> psd_values;   // m^2/Hz

    void validate() const;
};

struct EsrFit {
    EsrLineParams params;
    estimation::Matrix covariance;  // order: D, E, c-, c+, w-, w+, R
    double sigma_d = 0.0;           // Hz
    bool degenerate = false;        // merged dips fitted as one line, E reported as 0
    double chi_square = 0.0;
    int degrees_of_freedom = 0;
    int iterations = 0;
};

struct PsdFit {
    OscillatorParams params;        // mass is implied from the amplitude at the assumed temperature
    double gamma = 0.0;             // 1/s
    double gamma_sigma = 0.0;
    double omega_sigma = 0.0;
    double amplitude = 0.0;         // m^2/Hz * (rad/s)^4
    estimation::Matrix covariance;  // order: Omega0, Gamma, log amplitude
    std::size_t window_points = 0;
    std::string note;
};

inline constexpr std::size_t kMinEsrPoints = 8;

/// Unit-peak Lorentzian with full width at half maximum `fwhm`.
double lorentzian(double f, double center, double fwhm);

double esr_model(const EsrLineParams& params, double f);

/// d rate / d(D, E, c-, c+, w-, w+, R).
std::array<double, 7> esr_model_gradient(const EsrLineParams& params, double f);

std::vector<double> uniform_grid(double start, double stop, std::size_t points);

EsrSpectrum synthesize_esr(const EsrLineParams& params, std::span<const double> scan, double dwell,
                           std::uint64_t seed);

/// Counts rounded from the model mean; the noiseless counterpart of synthesize_esr.
EsrSpectrum expected_esr_spectrum(const EsrLineParams& params, std::span<const double> scan, double dwell);

EsrFit fit_esr(const EsrSpectrum& spectrum, const estimation::SolverTolerances& tolerances = {});

/// One-sided displacement PSD in m^2/Hz; integrates to k_B T / (m Omega0^2) over f in [0, inf).
double psd_model(const OscillatorParams& params, double f);

MotionPsd synthesize_psd(const OscillatorParams& params, std::span<const double> grid, int n_averages,
                         std::uint64_t seed);

MotionPsd expected_psd(const OscillatorParams& params, std::span<const double> grid);

PsdFit fit_psd(const MotionPsd& psd, double assumed_temperature_cm = 294.0,
               const estimation::SolverTolerances& tolerances = {});

}  // namespace nvtherm::spectral
