#pragma once

/**
 * @file physics.hpp
 * @brief Closed-form models for NV thermometry and levitated-particle heat balance.
 *
 * Everything here is strict SI (Hz, K, Pa, m, W, kg). Functions are pure and
 * throw std::invalid_argument for bad inputs and std::domain_error when a
 * value lies outside the range where a model or its inverse is defined.
 */

#include <array>
#include <utility>

namespace nvtherm::physics {

namespace constants {
inline constexpr double pi = 3.14159265358979323846;
inline constexpr double boltzmann = 1.380649e-23;    // J/K
inline constexpr double avogadro = 6.02214076e23;    // 1/mol
inline constexpr double molar_gas = boltzmann * avogadro;  // J/(mol K)
}  // namespace constants

/**
 * @brief Cubic zero-field-splitting thermometer D(T) plus a per-particle strain offset.
 *
 * D(T) = d_strain + a0 + a1 T + a2 T^2 + a3 T^3. The constructor checks that
 * D is strictly decreasing over [t_min, t_max]; outside that range evaluation
 * and inversion are refused.
 */
class ZfsPolynomial {
public:
    ZfsPolynomial(double a0, double a1, double a2, double a3, double d_strain = 0.0,
                  double t_min = 150.0, double t_max = 1000.0);

    /// Bulk-diamond coefficients (a0 = 2.8697 GHz).
    static ZfsPolynomial toyli(double d_strain = 0.0);

    double a0() const { return a0_; }
    double a1() const { return a1_; }
    double a2() const { return a2_; }
    double a3() const { return a3_; }
    double d_strain() const { return d_strain_; }
    double t_min() const { return t_min_; }
    double t_max() const { return t_max_; }

    ZfsPolynomial with_strain(double d_strain) const;

    /// Polynomial value without range checking (used inside fits that may step outside).
    double value_unchecked(double temperature) const;
    double slope_unchecked(double temperature) const;

private:
    double a0_, a1_, a2_, a3_, d_strain_, t_min_, t_max_;
};

struct GasConditions {
    double t0 = 294.0;             // K
    double c_bar = 503.0;          // m/s
    double gamma = 7.0 / 5.0;
    double alpha_acc = 1.0;
    double p_gas = 3000.0;         // Pa
    double molar_mass = 0.02897;   // kg/mol

    void validate() const;
    GasConditions at_pressure(double pressure) const;
};

struct ParticleGeometry {
    double r_hydro = 100e-9;   // m
    double density = 3500.0;   // kg/m^3

    void validate() const;
    double surface() const;
    double volume() const;
    double mass() const { return density * volume(); }
};

struct DielectricConstant {
    double eps_real = 5.7;
    double eps_imag = 0.0;

    void validate() const;
};

struct EsrSensitivityInputs {
    double linewidth = 10e6;       // Hz
    double contrast = 0.07;
    double count_rate = 2e5;       // counts/s
    double dwell_per_point = 1.5;  // s

    void validate() const;
};

struct SensitivityResult {
    double sensitivity;  // K/sqrt(Hz)
    double resolution;   // K
};

struct RayleighResult {
    double sigma;                   // m^2
    bool outside_rayleigh_regime;   // r_hydro > wavelength / 10
};

// Thermometry

double eval_zfs(const ZfsPolynomial& poly, double temperature);
double zfs_slope(const ZfsPolynomial& poly, double temperature);
double invert_zfs(const ZfsPolynomial& poly, double d_measured);
double temperature_uncertainty(double sigma_d, const ZfsPolynomial& poly, double temperature);

// Heat balance

double absorbed_power(double sigma_abs, double intensity);
double conduction_power(const ParticleGeometry& geom, const GasConditions& gas, double t_int);
double equilibrium_temperature(double beta_heat, double intensity, const GasConditions& gas);

/// Heating coefficient consistent with the conduction and equilibrium relations:
/// beta = 8 T0 sigma / (alpha_acc S c_bar) * (gamma - 1) / (gamma + 1).
double beta_from_sigma(double sigma_abs, const ParticleGeometry& geom, const GasConditions& gas);

/// Alternative heating-coefficient form 2 T0 sigma / (S c_bar) * (gamma-1)/(gamma+1).
/// It is a factor 4 below beta_from_sigma and is kept only for comparison.
double beta_from_sigma_as_printed(double sigma_abs, const ParticleGeometry& geom, const GasConditions& gas);

/// sigma = alpha_acc beta r^2 (pi c_bar / 2 T0) (gamma + 1)/(gamma - 1); exact inverse of beta_from_sigma for S = 4 pi r^2.
double sigma_from_beta_radius(double beta_heat, double r_hydro, const GasConditions& gas);

// Optics

RayleighResult rayleigh_sigma(const ParticleGeometry& geom, const DielectricConstant& eps, double wavelength);
double epsilon_imag_from_sigma_ratio(double sigma_over_volume, double eps_real, double wavelength);
double bulk_absorption_coefficient(const DielectricConstant& eps, double wavelength);

// Gas damping

double damping_rate(double r, const GasConditions& gas, double density);
double radius_from_damping(double gamma, const GasConditions& gas, double density);

// ESR sensitivity

SensitivityResult esr_sensitivity(const EsrSensitivityInputs& inp, double slope);

}  // namespace nvtherm::physics
