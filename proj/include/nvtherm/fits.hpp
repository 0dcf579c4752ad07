#pragma once

/**
 * @file fits.hpp
 * @brief Named fits built on the least-squares engine.
 */

#include "nvtherm/least_squares.hpp"
#include "nvtherm/physics.hpp"

#include <optional>
#include <span>
#include <vector>

namespace nvtherm::estimation {

struct CalibrationPair {
    double t_set;       // K
    double d_measured;  // Hz
};

/// D(T) = a0 + a1 (alpha T) + a2 (alpha T)^2 + a3 (alpha T)^3 with a1..a3 held fixed.
struct CalibrationFit {
    double a0 = 0.0;
    double alpha = 1.0;
    Matrix covariance;  // order: a0, alpha
    double d_strain = 0.0;  // a0 minus the reference a0
    std::vector<double> corrected_temperatures;
    double residual_norm = 0.0;
    int iterations = 0;
};

CalibrationFit fit_calibration_alpha(std::span<const CalibrationPair> pairs,
                                     const physics::ZfsPolynomial& reference = physics::ZfsPolynomial::toyli(),
                                     const SolverTolerances& tolerances = {});

struct HeatingPoint {
    double intensity;   // W/m^2
    double pressure;    // Pa
    double d_measured;  // Hz
    double sigma_d;     // Hz; <= 0 means unknown
};

struct HeatingFitResult {
    double beta_heat = 0.0;   // K Pa m^2 / W
    double d_strain = 0.0;    // Hz
    Matrix covariance;        // order: beta_heat, d_strain
    std::vector<double> fitted_temperatures;
    std::vector<double> residuals;  // weighted
    double chi_square = 0.0;
    int degrees_of_freedom = 0;
    bool absolute_sigma = false;  // covariance from supplied sigma_d, not rescaled
    int iterations = 0;

    double beta_sigma() const;
    double d_strain_sigma() const;
};

/// Predicted D for one heating condition: D_poly(T0 + beta I / p) + d_strain.
double heating_model(const physics::ZfsPolynomial& poly, const physics::GasConditions& gas, double beta_heat,
                     double d_strain, double intensity, double pressure);

HeatingFitResult fit_heating(std::span<const HeatingPoint> points, const physics::ZfsPolynomial& poly,
                             const physics::GasConditions& gas, const SolverTolerances& tolerances = {});

struct PowerLawRecord {
    double r_hydro;    // m
    double sigma_abs;  // m^2
};

enum class ExponentMode { free, fixed };

struct PowerLawFit {
    double amplitude = 0.0;      // a, in m^(2-n)
    double exponent = 0.0;       // n
    bool exponent_fixed = false;
    double log_amplitude_sigma = 0.0;
    double exponent_sigma = 0.0;  // zero when fixed
    double residual_sum = 0.0;    // sum of squared log residuals
    double sigma_log = 0.0;       // standard deviation of log residuals
    double a_minus = 0.0;
    double a_plus = 0.0;
    std::size_t records = 0;

    double predict(double r_hydro) const;
};

/// Linear least squares on (log r, log sigma). `fixed_exponent` is required in fixed mode.
PowerLawFit fit_power_law(std::span<const PowerLawRecord> records, ExponentMode mode,
                          std::optional<double> fixed_exponent = std::nullopt);

struct ConfidenceBand {
    double a_minus;
    double a_plus;
    double sigma_log;
};

/// a+- = a exp(+-2 sigma_log), sigma_log the sample standard deviation of the log residuals.
ConfidenceBand confidence_band(const PowerLawFit& fit, std::span<const PowerLawRecord> records);

struct ExponentComparison {
    PowerLawFit free_fit;
    PowerLawFit fixed_2;
    PowerLawFit fixed_3;
    int preferred_exponent;  // 2 or 3, whichever fixed fit has the lower residual sum
};

ExponentComparison compare_exponents(std::span<const PowerLawRecord> records);

}  // namespace nvtherm::estimation
