#include "nvtherm/physics.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <sstream>
#include <stdexcept>
#include <string>

namespace nvtherm::physics {

namespace {

using constants::pi;

void require_finite(double value, const char* what) {
    if (!std::isfinite(value)) {
        throw std::invalid_argument(std::string(what) + " must be finite");
    }
}

void require_positive(double value, const char* what) {
    require_finite(value, what);
    if (value <= 0.0) {
        throw std::invalid_argument(std::string(what) + " must be positive");
    }
}

void require_non_negative(double value, const char* what) {
    require_finite(value, what);
    if (value < 0.0) {
        throw std::invalid_argument(std::string(what) + " must be non-negative");
    }
}

void check_range(const ZfsPolynomial& poly, double temperature) {
    require_finite(temperature, "temperature");
    if (temperature < poly.t_min() || temperature > poly.t_max()) {
        std::ostringstream msg;
        msg << "temperature " << temperature << " K outside the thermometer range ["
            << poly.t_min() << ", " << poly.t_max() << "] K";
        throw std::domain_error(msg.str());
    }
}

// (gamma + 1) / (gamma - 1)
double heat_capacity_factor(const GasConditions& gas) {
    return (gas.gamma + 1.0) / (gas.gamma - 1.0);
}

}  // namespace

ZfsPolynomial::ZfsPolynomial(double a0, double a1, double a2, double a3, double d_strain,
                             double t_min, double t_max)
    : a0_(a0), a1_(a1), a2_(a2), a3_(a3), d_strain_(d_strain), t_min_(t_min), t_max_(t_max) {
    for (double v : {a0, a1, a2, a3, d_strain, t_min, t_max}) {
        require_finite(v, "ZFS polynomial field");
    }
    if (!(t_min < t_max)) {
        throw std::invalid_argument("ZFS polynomial: t_min must be below t_max");
    }
    // D' is quadratic; its maximum over the interval sits at an endpoint or at the vertex.
    double worst = std::max(slope_unchecked(t_min), slope_unchecked(t_max));
    if (a3 != 0.0) {
        const double vertex = -a2 / (3.0 * a3);
        if (vertex > t_min && vertex < t_max) {
            worst = std::max(worst, slope_unchecked(vertex));
        }
    }
    if (!(worst < 0.0)) {
        std::ostringstream msg;
        msg << "ZFS polynomial is not strictly decreasing on [" << t_min << ", " << t_max << "] K";
        throw std::invalid_argument(msg.str());
    }
}

ZfsPolynomial ZfsPolynomial::toyli(double d_strain) {
    return ZfsPolynomial(2.8697e9, 9.7e4, -3.7e2, 0.17, d_strain);
}

ZfsPolynomial ZfsPolynomial::with_strain(double d_strain) const {
    return ZfsPolynomial(a0_, a1_, a2_, a3_, d_strain, t_min_, t_max_);
}

double ZfsPolynomial::value_unchecked(double t) const {
    return d_strain_ + a0_ + t * (a1_ + t * (a2_ + t * a3_));
}

double ZfsPolynomial::slope_unchecked(double t) const {
    return a1_ + t * (2.0 * a2_ + t * 3.0 * a3_);
}

void GasConditions::validate() const {
    require_positive(t0, "gas t0");
    require_positive(c_bar, "gas c_bar");
    require_positive(p_gas, "gas pressure");
    require_positive(molar_mass, "gas molar mass");
    require_finite(gamma, "gas gamma");
    if (gamma <= 1.0) {
        throw std::invalid_argument("gas gamma must exceed 1");
    }
    require_positive(alpha_acc, "accommodation coefficient");
    if (alpha_acc > 1.0) {
        throw std::invalid_argument("accommodation coefficient must not exceed 1");
    }
}

GasConditions GasConditions::at_pressure(double pressure) const {
    GasConditions copy = *this;
    copy.p_gas = pressure;
    return copy;
}

void ParticleGeometry::validate() const {
    require_positive(r_hydro, "hydrodynamic radius");
    require_positive(density, "particle density");
}

double ParticleGeometry::surface() const { return 4.0 * pi * r_hydro * r_hydro; }

double ParticleGeometry::volume() const { return 4.0 / 3.0 * pi * r_hydro * r_hydro * r_hydro; }

void DielectricConstant::validate() const {
    require_finite(eps_real, "eps_real");
    if (eps_real <= 1.0) {
        throw std::invalid_argument("eps_real must exceed 1");
    }
    require_non_negative(eps_imag, "eps_imag");
}

void EsrSensitivityInputs::validate() const {
    require_positive(linewidth, "ESR linewidth");
    require_positive(contrast, "ESR contrast");
    if (contrast >= 1.0) {
        throw std::invalid_argument("ESR contrast must be below 1");
    }
    require_positive(count_rate, "count rate");
    require_positive(dwell_per_point, "dwell per point");
}

double eval_zfs(const ZfsPolynomial& poly, double temperature) {
    check_range(poly, temperature);
    return poly.value_unchecked(temperature);
}

double zfs_slope(const ZfsPolynomial& poly, double temperature) {
    check_range(poly, temperature);
    return poly.slope_unchecked(temperature);
}

double invert_zfs(const ZfsPolynomial& poly, double d_measured) {
    require_finite(d_measured, "measured D");
    double lo = poly.t_min();
    double hi = poly.t_max();
    const double d_at_lo = poly.value_unchecked(lo);
    const double d_at_hi = poly.value_unchecked(hi);
    if (d_measured > d_at_lo || d_measured < d_at_hi) {
        std::ostringstream msg;
        msg.precision(10);
        msg << "measured D " << d_measured << " Hz outside attainable range [" << d_at_hi << ", "
            << d_at_lo << "] Hz";
        throw std::domain_error(msg.str());
    }
    if (d_measured == d_at_lo) return lo;
    if (d_measured == d_at_hi) return hi;

    // Newton steps kept inside a shrinking bracket; D is decreasing so f(T) = D(T) - d
    // is positive left of the root.
    double t = lo + (hi - lo) * (d_at_lo - d_measured) / (d_at_lo - d_at_hi);
    for (int iter = 0; iter < 200; ++iter) {
        const double f = poly.value_unchecked(t) - d_measured;
        if (f == 0.0) return t;
        if (f > 0.0) {
            lo = t;
        } else {
            hi = t;
        }
        double next = t - f / poly.slope_unchecked(t);
        if (!(next > lo && next < hi)) {
            next = 0.5 * (lo + hi);
        }
        if (std::abs(next - t) <= 1e-12 * std::abs(t) || hi - lo <= 1e-12 * std::abs(t)) {
            return next;
        }
        t = next;
    }
    return t;
}

double temperature_uncertainty(double sigma_d, const ZfsPolynomial& poly, double temperature) {
    require_non_negative(sigma_d, "sigma_d");
    return sigma_d / std::abs(zfs_slope(poly, temperature));
}

double absorbed_power(double sigma_abs, double intensity) {
    require_non_negative(sigma_abs, "absorption cross-section");
    require_non_negative(intensity, "intensity");
    return sigma_abs * intensity;
}

double conduction_power(const ParticleGeometry& geom, const GasConditions& gas, double t_int) {
    geom.validate();
    gas.validate();
    require_finite(t_int, "internal temperature");
    return gas.alpha_acc * geom.surface() * (gas.p_gas * gas.c_bar / (8.0 * gas.t0)) *
           heat_capacity_factor(gas) * (t_int - gas.t0);
}

double equilibrium_temperature(double beta_heat, double intensity, const GasConditions& gas) {
    gas.validate();
    require_finite(beta_heat, "heating coefficient");
    require_non_negative(intensity, "intensity");
    return gas.t0 + beta_heat * intensity / gas.p_gas;
}

double beta_from_sigma(double sigma_abs, const ParticleGeometry& geom, const GasConditions& gas) {
    require_non_negative(sigma_abs, "absorption cross-section");
    geom.validate();
    gas.validate();
    return 8.0 * gas.t0 * sigma_abs / (gas.alpha_acc * geom.surface() * gas.c_bar) /
           heat_capacity_factor(gas);
}

double beta_from_sigma_as_printed(double sigma_abs, const ParticleGeometry& geom,
                                  const GasConditions& gas) {
    require_non_negative(sigma_abs, "absorption cross-section");
    geom.validate();
    gas.validate();
    return sigma_abs / geom.surface() * (2.0 * gas.t0 / gas.c_bar) / heat_capacity_factor(gas);
}

double sigma_from_beta_radius(double beta_heat, double r_hydro, const GasConditions& gas) {
    require_finite(beta_heat, "heating coefficient");
    require_positive(r_hydro, "hydrodynamic radius");
    gas.validate();
    return gas.alpha_acc * beta_heat * r_hydro * r_hydro * (pi * gas.c_bar / (2.0 * gas.t0)) *
           heat_capacity_factor(gas);
}

RayleighResult rayleigh_sigma(const ParticleGeometry& geom, const DielectricConstant& eps,
                              double wavelength) {
    geom.validate();
    eps.validate();
    require_positive(wavelength, "wavelength");
    const std::complex<double> epsilon(eps.eps_real, eps.eps_imag);
    const double polarizability_im = std::imag((epsilon - 1.0) / (epsilon + 2.0));
    return {6.0 * pi * geom.volume() / wavelength * polarizability_im,
            geom.r_hydro > wavelength / 10.0};
}

double epsilon_imag_from_sigma_ratio(double sigma_over_volume, double eps_real, double wavelength) {
    require_non_negative(sigma_over_volume, "sigma/volume");
    require_positive(wavelength, "wavelength");
    if (!(eps_real > 1.0)) {
        throw std::invalid_argument("eps_real must exceed 1");
    }
    if (sigma_over_volume == 0.0) return 0.0;
    // s (A + x^2) = k x with A = (eps' + 2)^2, k = 18 pi / lambda; take the smaller root.
    const double k = 18.0 * pi / wavelength;
    const double a = (eps_real + 2.0) * (eps_real + 2.0);
    const double s = sigma_over_volume;
    const double disc = k * k - 4.0 * s * s * a;
    if (disc < 0.0) {
        std::ostringstream msg;
        msg << "sigma/volume " << s << " 1/m exceeds the maximum " << k / (2.0 * std::sqrt(a))
            << " 1/m attainable for eps_real " << eps_real;
        throw std::domain_error(msg.str());
    }
    return 2.0 * s * a / (k + std::sqrt(disc));
}

double bulk_absorption_coefficient(const DielectricConstant& eps, double wavelength) {
    eps.validate();
    require_positive(wavelength, "wavelength");
    const double kappa = std::imag(std::sqrt(std::complex<double>(eps.eps_real, eps.eps_imag)));
    return 4.0 * pi * kappa / wavelength;
}

namespace {

// Gamma = damping_prefactor * p / r
double damping_prefactor(const GasConditions& gas, double density) {
    return 0.619 * 9.0 / (std::sqrt(2.0 * pi) * density) *
           std::sqrt(gas.molar_mass / (constants::molar_gas * gas.t0));
}

}  // namespace

double damping_rate(double r, const GasConditions& gas, double density) {
    require_positive(r, "radius");
    require_positive(density, "density");
    gas.validate();
    return damping_prefactor(gas, density) * gas.p_gas / r;
}

double radius_from_damping(double gamma, const GasConditions& gas, double density) {
    require_positive(gamma, "damping rate");
    require_positive(density, "density");
    gas.validate();
    return damping_prefactor(gas, density) * gas.p_gas / gamma;
}

SensitivityResult esr_sensitivity(const EsrSensitivityInputs& inp, double slope) {
    inp.validate();
    require_finite(slope, "ZFS slope");
    if (slope == 0.0) {
        throw std::invalid_argument("ZFS slope must be non-zero");
    }
    const double eta = inp.linewidth / (inp.contrast * std::sqrt(inp.count_rate) * std::abs(slope));
    return {eta, eta / std::sqrt(inp.dwell_per_point)};
}

}  // namespace nvtherm::physics
