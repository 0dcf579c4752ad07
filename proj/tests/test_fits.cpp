#include "nvtherm/errors.hpp"
#include "nvtherm/fits.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

using namespace nvtherm;
using namespace nvtherm::estimation;

namespace {

double rel_err(double got, double want) { return std::abs(got - want) / std::abs(want); }

// Calibration data with the temperature scaled by alpha inside the fixed cubic.
std::vector<CalibrationPair> calibration_data(double a0, double alpha) {
    std::vector<CalibrationPair> out;
    for (double t : {294.0, 320.0, 350.0, 380.0, 411.0}) {
        const double x = alpha * t;
        out.push_back({t, a0 + 9.7e4 * x - 3.7e2 * x * x + 0.17 * x * x * x});
    }
    return out;
}

std::vector<HeatingPoint> heating_grid(double beta, double d_strain, double sigma_d) {
    const auto poly = physics::ZfsPolynomial::toyli();
    const physics::GasConditions gas;
    std::vector<HeatingPoint> pts;
    for (double i : {0.5e10, 1e10, 2e10}) {
        for (double p : {2000.0, 3000.0, 5000.0}) {
            const double t = gas.t0 + beta * i / p;
            pts.push_back({i, p, poly.value_unchecked(t) + d_strain, sigma_d});
        }
    }
    return pts;
}

std::vector<PowerLawRecord> power_law_records(double a, double n) {
    std::vector<PowerLawRecord> out;
    for (double r : {50e-9, 75e-9, 100e-9, 125e-9, 150e-9}) out.push_back({r, a * std::pow(r, n)});
    return out;
}

}  // namespace

TEST_SUITE("calibration fit") {
    TEST_CASE("recovers alpha and a0 from noiseless data") {
        const auto fit = fit_calibration_alpha(calibration_data(2.8707e9, 0.90));
        CHECK(rel_err(fit.a0, 2.8707e9) < 1e-8);
        CHECK(rel_err(fit.alpha, 0.90) < 1e-8);
        CHECK(fit.d_strain == doctest::Approx(1e6).epsilon(1e-6));
        CHECK(fit.corrected_temperatures.front() == doctest::Approx(0.9 * 294.0).epsilon(1e-8));
    }

    TEST_CASE("identity calibration") {
        const auto fit = fit_calibration_alpha(calibration_data(2.8697e9, 1.0));
        CHECK(rel_err(fit.a0, 2.8697e9) < 1e-10);
        CHECK(fit.alpha == doctest::Approx(1.0).epsilon(1e-10));
        CHECK(std::abs(fit.d_strain) < 1.0);
    }

    TEST_CASE("degenerate inputs") {
        const std::vector<CalibrationPair> two{{300.0, 2.87e9}, {300.0, 2.87e9}};
        CHECK_THROWS_AS(fit_calibration_alpha(two), std::invalid_argument);
        const std::vector<CalibrationPair> narrow{{300.0, 2.87e9}, {320.0, 2.869e9}, {340.0, 2.868e9}};
        CHECK_THROWS_AS(fit_calibration_alpha(narrow), std::invalid_argument);
    }
}

TEST_SUITE("heating fit") {
    TEST_CASE("noiseless grid recovers beta and D_strain") {
        const auto fit =
            fit_heating(heating_grid(2.4807e-5, 3e6, 0.0), physics::ZfsPolynomial::toyli(), physics::GasConditions{});
        CHECK(rel_err(fit.beta_heat, 2.4807e-5) < 1e-8);
        CHECK(rel_err(fit.d_strain, 3e6) < 1e-8);
        CHECK_FALSE(fit.absolute_sigma);
    }

    TEST_CASE("zero-intensity extrapolation equals D(T0) + D_strain") {
        const auto poly = physics::ZfsPolynomial::toyli();
        const physics::GasConditions gas;
        const auto fit = fit_heating(heating_grid(1.9e-5, -2e6, 150e3), poly, gas);
        CHECK(heating_model(poly, gas, fit.beta_heat, fit.d_strain, 0.0, 3000.0) ==
              poly.value_unchecked(gas.t0) + fit.d_strain);
    }

    TEST_CASE("beta = 0 data") {
        auto pts = heating_grid(0.0, 0.0, 0.0);
        const double offsets[] = {1e3, -2e3, 5e2, 0.0, 1.5e3, -1e3, 2e3, -5e2, 0.0};
        double mean = 0.0;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            pts[i].d_measured += offsets[i];
            mean += offsets[i] / pts.size();
        }
        const physics::GasConditions gas;
        const auto exact = fit_heating(heating_grid(0.0, 0.0, 0.0), physics::ZfsPolynomial::toyli(), gas);
        for (double t : exact.fitted_temperatures) CHECK(t == doctest::Approx(gas.t0).epsilon(1e-12));
        CHECK(std::abs(exact.d_strain) < 1e-3);
        const auto noisy = fit_heating(pts, physics::ZfsPolynomial::toyli(), gas);
        // With beta free the offset absorbs only what the I/p pattern cannot explain.
        CHECK(std::abs(noisy.beta_heat) < 1e-8);
        CHECK(std::abs(noisy.d_strain - mean) < 2e3);
    }

    TEST_CASE("supplied sigma_d gives an unscaled covariance") {
        const auto fit =
            fit_heating(heating_grid(2.4807e-5, 3e6, 150e3), physics::ZfsPolynomial::toyli(), physics::GasConditions{});
        CHECK(fit.absolute_sigma);
        CHECK(fit.beta_sigma() > 0.0);
        CHECK(fit.d_strain_sigma() > 0.0);
    }

    TEST_CASE("property: normal equations hold at the optimum") {
        const auto poly = physics::ZfsPolynomial::toyli();
        const physics::GasConditions gas;
        std::mt19937_64 rng(21);
        std::normal_distribution<double> noise(0.0, 150e3);
        for (int trial = 0; trial < 10; ++trial) {
            auto pts = heating_grid(2.4807e-5, 3e6, 150e3);
            for (auto& p : pts) p.d_measured += noise(rng);
            const auto fit = fit_heating(pts, poly, gas);
            ResidualFunction residuals = [&](const Vector& q) {
                Vector r(static_cast<Eigen::Index>(pts.size()));
                for (std::size_t i = 0; i < pts.size(); ++i) {
                    r(static_cast<Eigen::Index>(i)) =
                        (pts[i].d_measured - heating_model(poly, gas, q(0), q(1), pts[i].intensity, pts[i].pressure)) /
                        pts[i].sigma_d;
                }
                return r;
            };
            Vector q(2);
            q << fit.beta_heat, fit.d_strain;
            const Matrix jac = finite_difference_jacobian(residuals, q);
            const Vector r = residuals(q);
            for (int k = 0; k < 2; ++k) {
                CHECK(std::abs(jac.col(k).dot(r)) < 1e-8 * jac.col(k).norm() * std::max(r.norm(), 1.0));
            }
        }
    }

    TEST_CASE("identifiability errors") {
        const auto poly = physics::ZfsPolynomial::toyli();
        const physics::GasConditions gas;
        auto zero_i = heating_grid(2e-5, 0.0, 0.0);
        for (auto& p : zero_i) p.intensity = 0.0;
        CHECK_THROWS_AS(fit_heating(zero_i, poly, gas), FitFailure);
        auto one_p = heating_grid(2e-5, 0.0, 0.0);
        for (auto& p : one_p) p.pressure = 3000.0;
        CHECK_THROWS_AS(fit_heating(one_p, poly, gas), std::invalid_argument);
        const auto few = heating_grid(2e-5, 0.0, 0.0);
        CHECK_THROWS_AS(fit_heating(std::span(few).first(3), poly, gas), std::invalid_argument);
    }
}

TEST_SUITE("power law") {
    TEST_CASE("exact cubic input") {
        const auto recs = power_law_records(4e3, 3.0);
        const auto fit = fit_power_law(recs, ExponentMode::free);
        CHECK(std::abs(fit.exponent - 3.0) < 1e-9);
        CHECK(rel_err(fit.amplitude, 4e3) < 1e-9);
        const auto fixed = fit_power_law(recs, ExponentMode::fixed, 3.0);
        CHECK(rel_err(fixed.amplitude, 4e3) < 1e-12);
        CHECK(fixed.exponent_fixed);
    }

    TEST_CASE("wrong fixed exponent fits worse") {
        const auto recs = power_law_records(4e3, 3.0);
        CHECK(fit_power_law(recs, ExponentMode::fixed, 2.0).residual_sum >
              fit_power_law(recs, ExponentMode::fixed, 3.0).residual_sum);
    }

    TEST_CASE("property: exponent recovered regardless of amplitude scale") {
        for (double a : {1e-12, 1.0, 4e3, 1e9}) {
            for (double n : {1.5, 2.0, 3.3}) {
                CHECK(std::abs(fit_power_law(power_law_records(a, n), ExponentMode::free).exponent - n) < 1e-9);
            }
        }
    }

    TEST_CASE("input validation") {
        const std::vector<PowerLawRecord> two{{50e-9, 1e-18}, {60e-9, 2e-18}};
        CHECK_THROWS_AS(fit_power_law(two, ExponentMode::free), std::invalid_argument);
        const std::vector<PowerLawRecord> bad{{50e-9, 1e-18}, {60e-9, -2e-18}, {70e-9, 3e-18}};
        CHECK_THROWS_AS(fit_power_law(bad, ExponentMode::free), std::invalid_argument);
        const std::vector<PowerLawRecord> same_r{{50e-9, 1e-18}, {50e-9, 2e-18}, {50e-9, 3e-18}};
        CHECK_THROWS_AS(fit_power_law(same_r, ExponentMode::free), std::invalid_argument);
        CHECK_THROWS_AS(fit_power_law(power_law_records(1.0, 3.0), ExponentMode::fixed), std::invalid_argument);
    }
}

TEST_SUITE("confidence band") {
    TEST_CASE("zero residuals collapse the band") {
        const auto recs = power_law_records(4e3, 3.0);
        const auto fit = fit_power_law(recs, ExponentMode::fixed, 3.0);
        const auto band = confidence_band(fit, recs);
        CHECK(band.a_minus == doctest::Approx(fit.amplitude).epsilon(1e-12));
        CHECK(band.a_plus == doctest::Approx(fit.amplitude).epsilon(1e-12));
    }

    TEST_CASE("multiplicative symmetry and 2-sigma width") {
        std::vector<PowerLawRecord> recs;
        const double logs[] = {0.3, -0.8, 1.1, -0.2, 0.5, -0.9};
        const double radii[] = {50e-9, 60e-9, 80e-9, 100e-9, 120e-9, 150e-9};
        for (int i = 0; i < 6; ++i) recs.push_back({radii[i], 4e3 * std::pow(radii[i], 3) * std::exp(logs[i])});
        const auto fit = fit_power_law(recs, ExponentMode::fixed, 3.0);
        const auto band = confidence_band(fit, recs);
        CHECK(band.a_plus / fit.amplitude == doctest::Approx(fit.amplitude / band.a_minus).epsilon(1e-12));
        // Oracle: sample standard deviation of the log residuals computed by hand.
        double mean = 0.0;
        for (double l : logs) mean += l / 6.0;
        double ss = 0.0;
        for (double l : logs) ss += (l - mean) * (l - mean);
        const double sd = std::sqrt(ss / 5.0);
        CHECK(band.sigma_log == doctest::Approx(sd).epsilon(1e-12));
        CHECK(band.a_plus == doctest::Approx(fit.amplitude * std::exp(2.0 * sd)).epsilon(1e-12));
        CHECK(fit.a_plus == band.a_plus);
    }
}

TEST_SUITE("exponent comparison") {
    TEST_CASE("cubic data prefers n = 3, quadratic data prefers n = 2") {
        CHECK(compare_exponents(power_law_records(4e3, 3.0)).preferred_exponent == 3);
        CHECK(compare_exponents(power_law_records(1e-4, 2.0)).preferred_exponent == 2);
    }

    TEST_CASE("reports all three fits") {
        const auto cmp = compare_exponents(power_law_records(4e3, 3.0));
        CHECK_FALSE(cmp.free_fit.exponent_fixed);
        CHECK(cmp.fixed_2.exponent == 2.0);
        CHECK(cmp.fixed_3.exponent == 3.0);
    }
}
