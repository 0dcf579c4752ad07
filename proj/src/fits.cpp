#include "nvtherm/fits.hpp"

#include "nvtherm/errors.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

namespace nvtherm::estimation {

namespace {

constexpr double kMegahertz = 1e6;

// Polynomial part of D without the per-particle strain offset.
double zfs_without_strain(const physics::ZfsPolynomial& poly, double temperature) {
    return poly.value_unchecked(temperature) - poly.d_strain();
}

}  // namespace

CalibrationFit fit_calibration_alpha(std::span<const CalibrationPair> pairs, const physics::ZfsPolynomial& reference,
                                     const SolverTolerances& tolerances) {
    if (pairs.size() < 3) {
        throw std::invalid_argument("calibration fit needs at least 3 (T_set, D) pairs");
    }
    double t_lo = pairs.front().t_set;
    double t_hi = t_lo;
    for (const auto& p : pairs) {
        if (!std::isfinite(p.t_set) || !std::isfinite(p.d_measured) || p.t_set <= 0.0) {
            throw std::invalid_argument("calibration pairs must be finite with positive temperatures");
        }
        t_lo = std::min(t_lo, p.t_set);
        t_hi = std::max(t_hi, p.t_set);
    }
    if (t_hi - t_lo < 50.0) {
        std::ostringstream msg;
        msg << "degenerate temperature span: " << t_hi - t_lo << " K (need at least 50 K)";
        throw std::invalid_argument(msg.str());
    }

    const double a0_ref = reference.a0();
    // Polynomial in the corrected temperature without the constant term.
    auto shape = [&reference](double t) {
        return t * (reference.a1() + t * (reference.a2() + t * reference.a3()));
    };
    double offset = 0.0;
    for (const auto& p : pairs) offset += p.d_measured - a0_ref - shape(p.t_set);
    offset /= static_cast<double>(pairs.size());

    FitProblem problem;
    problem.residuals = [pairs, a0_ref, shape](const Vector& u) {
        Vector r(static_cast<Eigen::Index>(pairs.size()));
        const double a0 = a0_ref + kMegahertz * u(0);
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            r(static_cast<Eigen::Index>(i)) = (pairs[i].d_measured - a0 - shape(u(1) * pairs[i].t_set)) / kMegahertz;
        }
        return r;
    };
    problem.initial = Vector(2);
    problem.initial << offset / kMegahertz, 1.0;
    problem.names = {"a0", "alpha"};
    problem.tolerances = tolerances;
    const FitResult res = least_squares_solve(problem);
    if (!res.converged) {
        throw FitFailure("calibration fit did not converge: " + res.message);
    }

    CalibrationFit out;
    out.a0 = a0_ref + kMegahertz * res.parameters(0);
    out.alpha = res.parameters(1);
    Vector scale(2);
    scale << kMegahertz, 1.0;
    out.covariance = scale.asDiagonal() * res.covariance * scale.asDiagonal();
    out.d_strain = out.a0 - a0_ref;
    for (const auto& p : pairs) out.corrected_temperatures.push_back(out.alpha * p.t_set);
    out.residual_norm = res.residual_norm * kMegahertz;
    out.iterations = res.iterations;
    return out;
}

double HeatingFitResult::beta_sigma() const { return std::sqrt(std::max(0.0, covariance(0, 0))); }

double HeatingFitResult::d_strain_sigma() const { return std::sqrt(std::max(0.0, covariance(1, 1))); }

double heating_model(const physics::ZfsPolynomial& poly, const physics::GasConditions& gas, double beta_heat,
                     double d_strain, double intensity, double pressure) {
    return zfs_without_strain(poly, gas.t0 + beta_heat * intensity / pressure) + d_strain;
}

HeatingFitResult fit_heating(std::span<const HeatingPoint> points, const physics::ZfsPolynomial& poly,
                             const physics::GasConditions& gas, const SolverTolerances& tolerances) {
    gas.validate();
    if (points.size() < 4) {
        throw std::invalid_argument("heating fit needs at least 4 points");
    }
    std::set<double> intensities, pressures;
    bool all_sigma = true;
    for (const auto& p : points) {
        if (!std::isfinite(p.intensity) || p.intensity < 0.0) {
            throw std::invalid_argument("heating point intensity must be finite and non-negative");
        }
        if (!std::isfinite(p.pressure) || p.pressure <= 0.0) {
            throw std::invalid_argument("heating point pressure must be positive");
        }
        if (!std::isfinite(p.d_measured)) {
            throw std::invalid_argument("heating point D must be finite");
        }
        intensities.insert(p.intensity);
        pressures.insert(p.pressure);
        if (!(p.sigma_d > 0.0) || !std::isfinite(p.sigma_d)) all_sigma = false;
    }
    if (intensities.size() == 1 && *intensities.begin() == 0.0) {
        throw FitFailure("heating coefficient unidentifiable: all intensities are zero");
    }
    if (intensities.size() < 2 || pressures.size() < 2) {
        throw std::invalid_argument("heating fit needs at least 2 distinct intensities and 2 distinct pressures");
    }

    std::vector<double> weights(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) weights[i] = all_sigma ? 1.0 / points[i].sigma_d : 1.0;

    // Linearised seed: d ~ D(T0) + d_strain + slope(T0) beta x, x = I/p.
    const double d0 = zfs_without_strain(poly, gas.t0);
    const double slope0 = poly.slope_unchecked(gas.t0);
    Eigen::Matrix2d normal = Eigen::Matrix2d::Zero();
    Eigen::Vector2d rhs = Eigen::Vector2d::Zero();
    for (std::size_t i = 0; i < points.size(); ++i) {
        const double w2 = weights[i] * weights[i];
        const Eigen::Vector2d row(slope0 * points[i].intensity / points[i].pressure, 1.0);
        normal += w2 * row * row.transpose();
        rhs += w2 * row * (points[i].d_measured - d0);
    }
    const Eigen::Vector2d seed = normal.ldlt().solve(rhs);
    const double beta_scale = std::abs(seed(0)) > 0.0 && std::isfinite(seed(0)) ? std::abs(seed(0)) : 1e-5;

    FitProblem problem;
    problem.residuals = [points, &poly, &gas, weights, beta_scale](const Vector& u) {
        Vector r(static_cast<Eigen::Index>(points.size()));
        for (std::size_t i = 0; i < points.size(); ++i) {
            const double model =
                heating_model(poly, gas, beta_scale * u(0), kMegahertz * u(1), points[i].intensity, points[i].pressure);
            r(static_cast<Eigen::Index>(i)) = weights[i] * (points[i].d_measured - model);
        }
        return r;
    };
    problem.initial = Vector(2);
    problem.initial << (std::isfinite(seed(0)) ? seed(0) / beta_scale : 1.0),
        (std::isfinite(seed(1)) ? seed(1) / kMegahertz : 0.0);
    problem.names = {"beta_heat", "d_strain"};
    problem.tolerances = tolerances;
    problem.scale_covariance = !all_sigma;
    const FitResult res = least_squares_solve(problem);
    if (!res.converged) {
        throw FitFailure("heating fit did not converge: " + res.message);
    }

    HeatingFitResult out;
    out.beta_heat = beta_scale * res.parameters(0);
    out.d_strain = kMegahertz * res.parameters(1);
    Vector scale(2);
    scale << beta_scale, kMegahertz;
    out.covariance = scale.asDiagonal() * res.covariance * scale.asDiagonal();
    out.chi_square = res.chi_square;
    out.degrees_of_freedom = res.degrees_of_freedom;
    out.absolute_sigma = all_sigma;
    out.iterations = res.iterations;
    const Vector r = problem.residuals(res.parameters);
    out.residuals.assign(r.data(), r.data() + r.size());
    for (const auto& p : points) {
        out.fitted_temperatures.push_back(gas.t0 + out.beta_heat * p.intensity / p.pressure);
    }
    return out;
}

double PowerLawFit::predict(double r_hydro) const { return amplitude * std::pow(r_hydro, exponent); }

namespace {

void check_records(std::span<const PowerLawRecord> records) {
    if (records.size() < 3) {
        std::ostringstream msg;
        msg << "insufficient records for power-law fit: need at least 3, got " << records.size();
        throw std::invalid_argument(msg.str());
    }
    for (const auto& rec : records) {
        if (!(rec.r_hydro > 0.0) || !(rec.sigma_abs > 0.0) || !std::isfinite(rec.r_hydro) ||
            !std::isfinite(rec.sigma_abs)) {
            throw std::invalid_argument("power-law fit needs positive, finite radius and cross-section");
        }
    }
}

double log_residual(const PowerLawFit& fit, const PowerLawRecord& rec) {
    return std::log(rec.sigma_abs) - std::log(fit.amplitude) - fit.exponent * std::log(rec.r_hydro);
}

}  // namespace

PowerLawFit fit_power_law(std::span<const PowerLawRecord> records, ExponentMode mode,
                          std::optional<double> fixed_exponent) {
    check_records(records);
    const auto n = static_cast<double>(records.size());
    double x_mean = 0.0;
    double y_mean = 0.0;
    for (const auto& rec : records) {
        x_mean += std::log(rec.r_hydro);
        y_mean += std::log(rec.sigma_abs);
    }
    x_mean /= n;
    y_mean /= n;
    double sxx = 0.0;
    double sxy = 0.0;
    for (const auto& rec : records) {
        const double dx = std::log(rec.r_hydro) - x_mean;
        sxx += dx * dx;
        sxy += dx * (std::log(rec.sigma_abs) - y_mean);
    }

    PowerLawFit fit;
    fit.records = records.size();
    double log_a = 0.0;
    if (mode == ExponentMode::free) {
        if (!(sxx > 0.0)) {
            throw std::invalid_argument("free-exponent power-law fit needs at least two distinct radii");
        }
        fit.exponent = sxy / sxx;
        log_a = y_mean - fit.exponent * x_mean;
    } else {
        if (!fixed_exponent || !std::isfinite(*fixed_exponent)) {
            throw std::invalid_argument("fixed-exponent power-law fit needs an exponent");
        }
        fit.exponent = *fixed_exponent;
        fit.exponent_fixed = true;
        log_a = y_mean - fit.exponent * x_mean;
    }
    fit.amplitude = std::exp(log_a);

    for (const auto& rec : records) {
        const double e = log_residual(fit, rec);
        fit.residual_sum += e * e;
    }
    if (mode == ExponentMode::free) {
        const double s2 = records.size() > 2 ? fit.residual_sum / (n - 2.0) : 0.0;
        fit.exponent_sigma = std::sqrt(s2 / sxx);
        fit.log_amplitude_sigma = std::sqrt(s2 * (1.0 / n + x_mean * x_mean / sxx));
    } else {
        fit.log_amplitude_sigma = std::sqrt(fit.residual_sum / (n - 1.0) / n);
    }
    const ConfidenceBand band = confidence_band(fit, records);
    fit.sigma_log = band.sigma_log;
    fit.a_minus = band.a_minus;
    fit.a_plus = band.a_plus;
    return fit;
}

ConfidenceBand confidence_band(const PowerLawFit& fit, std::span<const PowerLawRecord> records) {
    check_records(records);
    if (!(fit.amplitude > 0.0)) throw std::invalid_argument("confidence band needs a fitted positive amplitude");
    std::vector<double> residuals;
    residuals.reserve(records.size());
    double mean = 0.0;
    for (const auto& rec : records) {
        residuals.push_back(log_residual(fit, rec));
        mean += residuals.back();
    }
    mean /= static_cast<double>(residuals.size());
    double ss = 0.0;
    for (double e : residuals) ss += (e - mean) * (e - mean);
    const double sigma_log = std::sqrt(ss / static_cast<double>(residuals.size() - 1));
    return {fit.amplitude * std::exp(-2.0 * sigma_log), fit.amplitude * std::exp(2.0 * sigma_log), sigma_log};
}

ExponentComparison compare_exponents(std::span<const PowerLawRecord> records) {
    ExponentComparison out{fit_power_law(records, ExponentMode::free),
                           fit_power_law(records, ExponentMode::fixed, 2.0),
                           fit_power_law(records, ExponentMode::fixed, 3.0), 0};
    out.preferred_exponent = out.fixed_3.residual_sum <= out.fixed_2.residual_sum ? 3 : 2;
    return out;
}

}  // namespace nvtherm::estimation
