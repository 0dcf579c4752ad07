#include "nvtherm/errors.hpp"
#include "nvtherm/least_squares.hpp"
#include "nvtherm/physics.hpp"
#include "nvtherm/spectral.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>
#include <stdexcept>

using namespace nvtherm;
using namespace nvtherm::spectral;

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kBoltzmann = 1.380649e-23;

EsrLineParams paper_scale_line() {
    EsrLineParams p;
    p.d_center = 2.8705568e9;
    p.e_split = 5e6;
    p.contrast_minus = p.contrast_plus = 0.07;
    p.width_minus = p.width_plus = 10e6;
    p.base_rate = 2e5;
    return p;
}

std::vector<double> paper_scan(double center) { return uniform_grid(center - 40e6, center + 40e6, 200); }

double rel_err(double got, double want) { return std::abs(got - want) / std::abs(want); }

OscillatorParams oscillator(double gamma) {
    OscillatorParams p;
    p.resonance_omega = 2.0 * kPi * 50e3;
    p.damping_gamma = gamma;
    p.mass = 3500.0 * 4.0 / 3.0 * kPi * 1e-21;
    p.temperature_cm = 294.0;
    return p;
}

}  // namespace

TEST_SUITE("esr model") {
    TEST_CASE("dip depth and baseline") {
        EsrLineParams p = paper_scale_line();
        p.e_split = 200e6;  // dips far apart
        p.contrast_plus = 0.05;
        CHECK(esr_model(p, p.f_minus()) == doctest::Approx(p.base_rate * (1.0 - 0.07)).epsilon(1e-4));
        CHECK(esr_model(p, p.d_center + 5e9) == doctest::Approx(p.base_rate).epsilon(1e-4));
        p.contrast_minus = p.contrast_plus = 0.0;
        for (double f : {2.7e9, 2.87e9, 3.0e9}) CHECK(esr_model(p, f) == p.base_rate);
    }

    TEST_CASE("property: bounded, symmetric, and label-swap invariant") {
        EsrLineParams p = paper_scale_line();
        p.contrast_minus = 0.08;
        p.contrast_plus = 0.03;
        p.width_minus = 7e6;
        p.width_plus = 13e6;
        for (double f = p.d_center - 60e6; f <= p.d_center + 60e6; f += 1.3e6) {
            const double v = esr_model(p, f);
            CHECK(v > 0.0);
            CHECK(v <= p.base_rate);
            // Swap labels: mirror the line about D.
            EsrLineParams swapped = p;
            std::swap(swapped.contrast_minus, swapped.contrast_plus);
            std::swap(swapped.width_minus, swapped.width_plus);
            CHECK(esr_model(swapped, 2.0 * p.d_center - f) == doctest::Approx(v).epsilon(1e-13));
        }
        const EsrLineParams sym = paper_scale_line();
        CHECK(esr_model(sym, sym.d_center + 3.3e6) == doctest::Approx(esr_model(sym, sym.d_center - 3.3e6)).epsilon(1e-13));
    }

    TEST_CASE("analytic gradient agrees with the finite-difference Jacobian") {
        EsrLineParams p = paper_scale_line();
        p.contrast_plus = 0.05;
        p.width_plus = 12e6;
        estimation::Vector q(7);
        q << p.d_center, p.e_split, p.contrast_minus, p.contrast_plus, p.width_minus, p.width_plus, p.base_rate;
        for (double f : {p.d_center - 9e6, p.d_center - 4e6, p.d_center + 1e6, p.d_center + 7e6, p.d_center + 25e6}) {
            estimation::ResidualFunction model = [f](const estimation::Vector& v) {
                EsrLineParams lp{v(0), v(1), v(2), v(3), v(4), v(5), v(6)};
                return estimation::Vector::Constant(1, esr_model(lp, f));
            };
            const auto fd = estimation::finite_difference_jacobian(model, q);
            const auto analytic = esr_model_gradient(p, f);
            for (int k = 0; k < 7; ++k) {
                const double scale = std::max(std::abs(analytic[k]), 1e-12);
                CHECK(std::abs(fd(0, k) - analytic[k]) / scale < 1e-5);
            }
        }
    }
}

TEST_SUITE("esr synthesis") {
    TEST_CASE("fixed seed is bit-identical") {
        const auto p = paper_scale_line();
        const auto scan = paper_scan(p.d_center);
        const auto a = synthesize_esr(p, scan, 1.5, 42);
        const auto b = synthesize_esr(p, scan, 1.5, 42);
        const auto c = synthesize_esr(p, scan, 1.5, 43);
        CHECK(a.counts == b.counts);
        CHECK(a.counts != c.counts);
    }

    TEST_CASE("long dwell converges to the model rate") {
        const auto p = paper_scale_line();
        const auto scan = paper_scan(p.d_center);
        const double dwell = 1e6 / p.base_rate;  // mean count ~1e6
        const auto s = synthesize_esr(p, scan, dwell, 7);
        for (std::size_t i = 0; i < scan.size(); ++i) {
            CHECK(rel_err(static_cast<double>(s.counts[i]) / dwell, esr_model(p, scan[i])) < 0.01);
        }
    }

    TEST_CASE("Monte-Carlo mean at one point matches model x dwell within 3 standard errors") {
        const auto p = paper_scale_line();
        const std::vector<double> point{p.f_minus()};
        const double dwell = 1.5;
        const double mean_expected = esr_model(p, point[0]) * dwell;
        double sum = 0.0;
        const int trials = 1000;
        for (int t = 0; t < trials; ++t) sum += static_cast<double>(synthesize_esr(p, point, dwell, 1000 + t).counts[0]);
        const double standard_error = std::sqrt(mean_expected / trials);
        CHECK(std::abs(sum / trials - mean_expected) < 3.0 * standard_error);
    }

    TEST_CASE("invalid grids are rejected") {
        const auto p = paper_scale_line();
        const std::vector<double> bad{2.87e9, 2.86e9};
        CHECK_THROWS_AS(synthesize_esr(p, bad, 1.5, 1), std::invalid_argument);
        CHECK_THROWS_AS(synthesize_esr(p, paper_scan(p.d_center), 0.0, 1), std::invalid_argument);
    }
}

TEST_SUITE("esr fit") {
    TEST_CASE("noiseless recovery of every parameter") {
        const auto p = paper_scale_line();
        const auto scan = paper_scan(p.d_center);
        // Long dwell so integer rounding of counts is far below the tolerance.
        const auto s = expected_esr_spectrum(p, scan, 1e6);
        const auto fit = fit_esr(s);
        CHECK_FALSE(fit.degenerate);
        CHECK(rel_err(fit.params.d_center, p.d_center) < 1e-6);
        CHECK(rel_err(fit.params.e_split, p.e_split) < 1e-6);
        CHECK(rel_err(fit.params.contrast_minus, p.contrast_minus) < 1e-6);
        CHECK(rel_err(fit.params.contrast_plus, p.contrast_plus) < 1e-6);
        CHECK(rel_err(fit.params.width_minus, p.width_minus) < 1e-6);
        CHECK(rel_err(fit.params.width_plus, p.width_plus) < 1e-6);
        CHECK(rel_err(fit.params.base_rate, p.base_rate) < 1e-6);
    }

    TEST_CASE("noiseless recovery with well separated asymmetric dips") {
        EsrLineParams p = paper_scale_line();
        p.e_split = 12e6;
        p.contrast_minus = 0.09;
        p.contrast_plus = 0.05;
        p.width_minus = 8e6;
        p.width_plus = 11e6;
        const auto s = expected_esr_spectrum(p, paper_scan(p.d_center + 3e6), 1e6);
        const auto fit = fit_esr(s);
        CHECK_FALSE(fit.degenerate);
        CHECK(rel_err(fit.params.d_center, p.d_center) < 1e-6);
        CHECK(rel_err(fit.params.e_split, p.e_split) < 1e-6);
        CHECK(rel_err(fit.params.contrast_minus, p.contrast_minus) < 1e-6);
        CHECK(rel_err(fit.params.contrast_plus, p.contrast_plus) < 1e-6);
        CHECK(rel_err(fit.params.width_minus, p.width_minus) < 1e-6);
        CHECK(rel_err(fit.params.width_plus, p.width_plus) < 1e-6);
    }

    TEST_CASE("noisy fit reports a sigma_d close to the Monte-Carlo scatter") {
        const auto p = paper_scale_line();
        const auto scan = paper_scan(p.d_center);
        std::vector<double> d_hat;
        double mean_sigma = 0.0;
        const int trials = 100;
        for (int t = 0; t < trials; ++t) {
            const auto fit = fit_esr(synthesize_esr(p, scan, 1.5, 500 + t));
            d_hat.push_back(fit.params.d_center);
            mean_sigma += fit.sigma_d / trials;
        }
        const double mean = std::accumulate(d_hat.begin(), d_hat.end(), 0.0) / trials;
        double var = 0.0;
        for (double d : d_hat) var += (d - mean) * (d - mean) / (trials - 1);
        const double sd = std::sqrt(var);
        CHECK(mean_sigma == doctest::Approx(sd).epsilon(0.3));
    }

    TEST_CASE("property: D estimator bias below 0.3 of its standard deviation over 500 trials") {
        const auto p = paper_scale_line();
        const auto scan = paper_scan(p.d_center);
        const int trials = 500;
        double sum = 0.0, sum2 = 0.0;
        for (int t = 0; t < trials; ++t) {
            const double d = fit_esr(synthesize_esr(p, scan, 1.5, 9000 + t)).params.d_center - p.d_center;
            sum += d;
            sum2 += d * d;
        }
        const double mean = sum / trials;
        const double sd = std::sqrt((sum2 - trials * mean * mean) / (trials - 1));
        CHECK(std::abs(mean) < 0.3 * sd);
    }

    TEST_CASE("flat spectrum is a fit failure") {
        EsrLineParams p = paper_scale_line();
        p.contrast_minus = p.contrast_plus = 0.0;
        const auto scan = paper_scan(p.d_center);
        CHECK_THROWS_AS(fit_esr(expected_esr_spectrum(p, scan, 1.5)), FitFailure);
        CHECK_THROWS_AS(fit_esr(synthesize_esr(p, scan, 1.5, 3)), FitFailure);
    }

    TEST_CASE("too few points is a fit failure") {
        const auto p = paper_scale_line();
        const auto scan = uniform_grid(p.d_center - 20e6, p.d_center + 20e6, 7);
        CHECK_THROWS_AS(fit_esr(expected_esr_spectrum(p, scan, 1.5)), FitFailure);
    }

    TEST_CASE("single merged dip falls back to one Lorentzian with E = 0 flagged") {
        EsrLineParams p = paper_scale_line();
        p.e_split = 0.0;
        p.contrast_minus = p.contrast_plus = 0.04;
        const auto fit = fit_esr(expected_esr_spectrum(p, paper_scan(p.d_center), 1e4));
        CHECK(fit.degenerate);
        CHECK(fit.params.e_split == 0.0);
        CHECK(rel_err(fit.params.d_center, p.d_center) < 1e-6);
        CHECK(fit.sigma_d > 0.0);
        CHECK(fit.covariance.rows() == 7);
    }
}

TEST_SUITE("psd model") {
    TEST_CASE("half-maximum points at Omega0 +- Gamma/2 in the underdamped limit") {
        const auto p = oscillator(2.0 * kPi * 50e3 / 20.0);
        const double w0 = p.resonance_omega;
        const double g = p.damping_gamma;
        auto s = [&p](double w) { return psd_model(p, w / (2.0 * kPi)); };
        double w_peak = w0;  // golden-section search for the maximum
        {
            double a = w0 - g, b = w0 + g;
            for (int i = 0; i < 200; ++i) {
                const double m1 = a + 0.382 * (b - a), m2 = a + 0.618 * (b - a);
                (s(m1) < s(m2) ? a : b) = s(m1) < s(m2) ? m1 : m2;
            }
            w_peak = 0.5 * (a + b);
        }
        const double half = 0.5 * s(w_peak);
        auto bisect = [&](double lo, double hi) {
            const bool rising = s(lo) < s(hi);
            for (int i = 0; i < 200; ++i) {
                const double mid = 0.5 * (lo + hi);
                ((s(mid) < half) == rising ? lo : hi) = mid;
            }
            return 0.5 * (lo + hi);
        };
        const double w_lo = bisect(w_peak - 3.0 * g, w_peak);
        const double w_hi = bisect(w_peak, w_peak + 3.0 * g);
        CHECK(std::abs(w_lo - (w0 - g / 2.0)) < 0.01 * w0);
        CHECK(std::abs(w_hi - (w0 + g / 2.0)) < 0.01 * w0);
        CHECK(w_hi - w_lo == doctest::Approx(g).epsilon(0.01));
    }

    TEST_CASE("equipartition: integral over f equals k_B T / (m Omega0^2)") {
        const auto p = oscillator(6.56e4);
        // Composite Simpson on [0, 200 f0]; the tail beyond falls as f^-4.
        const double f_end = 200.0 * 50e3;
        const int n = 4'000'000;
        const double h = f_end / n;
        double sum = psd_model(p, 0.0) + psd_model(p, f_end);
        for (int i = 1; i < n; ++i) sum += (i % 2 ? 4.0 : 2.0) * psd_model(p, i * h);
        const double integral = sum * h / 3.0;
        const double expected = kBoltzmann * p.temperature_cm / (p.mass * p.resonance_omega * p.resonance_omega);
        CHECK(rel_err(integral, expected) < 0.005);
    }

    TEST_CASE("vanishes at high frequency") {
        const auto p = oscillator(6.56e4);
        CHECK(psd_model(p, 1e9) < 1e-12 * psd_model(p, 50e3));
    }
}

TEST_SUITE("psd synthesis and fit") {
    TEST_CASE("fixed seed reproducibility") {
        const auto p = oscillator(6.56e4);
        const auto grid = uniform_grid(100.0, 150e3, 1500);
        CHECK(synthesize_psd(p, grid, 10, 5).psd_values == synthesize_psd(p, grid, 10, 5).psd_values);
        CHECK(synthesize_psd(p, grid, 10, 5).psd_values != synthesize_psd(p, grid, 10, 6).psd_values);
    }

    TEST_CASE("relative scatter per bin falls as 1/sqrt(n_averages)") {
        const auto p = oscillator(6.56e4);
        const auto grid = uniform_grid(100.0, 150e3, 1500);
        for (int n : {4, 64}) {
            const auto psd = synthesize_psd(p, grid, n, 77);
            double s2 = 0.0;
            for (std::size_t i = 0; i < grid.size(); ++i) {
                const double ratio = psd.psd_values[i] / psd_model(p, grid[i]) - 1.0;
                s2 += ratio * ratio;
            }
            CHECK(std::sqrt(s2 / grid.size()) == doctest::Approx(1.0 / std::sqrt(n)).epsilon(0.1));
        }
    }

    TEST_CASE("ensemble mean over 1000 draws matches the model within 3 standard errors") {
        const auto p = oscillator(6.56e4);
        const std::vector<double> grid{30e3, 50e3, 80e3};
        const int draws = 1000, n_avg = 3;
        std::vector<double> sum(grid.size(), 0.0);
        for (int t = 0; t < draws; ++t) {
            const auto psd = synthesize_psd(p, grid, n_avg, 20000 + t);
            for (std::size_t i = 0; i < grid.size(); ++i) sum[i] += psd.psd_values[i];
        }
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const double model = psd_model(p, grid[i]);
            const double standard_error = model / std::sqrt(static_cast<double>(n_avg) * draws);
            CHECK(std::abs(sum[i] / draws - model) < 3.0 * standard_error);
        }
    }

    TEST_CASE("noiseless recovery of Gamma") {
        const auto p = oscillator(6.56e4);
        const auto grid = uniform_grid(100.0, 150e3, 1500);
        const auto fit = fit_psd(expected_psd(p, grid));
        CHECK(rel_err(fit.gamma, p.damping_gamma) < 1e-6);
        CHECK(rel_err(fit.params.resonance_omega, p.resonance_omega) < 1e-6);
        CHECK(rel_err(fit.params.mass, p.mass) < 1e-6);
    }

    TEST_CASE("radius from a noisy PSD within 2 percent") {
        physics::GasConditions gas;
        gas.p_gas = 3000.0;
        const double r_true = 100e-9;
        auto p = oscillator(physics::damping_rate(r_true, gas, 3500.0));
        const auto grid = uniform_grid(100.0, 150e3, 1500);
        int within = 0;
        for (int t = 0; t < 20; ++t) {
            const auto fit = fit_psd(synthesize_psd(p, grid, 200, 300 + t));
            const double r_hat = physics::radius_from_damping(fit.gamma, gas, 3500.0);
            within += rel_err(r_hat, r_true) < 0.02;
        }
        CHECK(within == 20);
    }

    TEST_CASE("flat spectrum is an error") {
        MotionPsd flat;
        flat.frequencies = uniform_grid(100.0, 150e3, 500);
        flat.psd_values.assign(500, 1e-20);
        CHECK_THROWS_AS(fit_psd(flat), FitFailure);
    }
}
