#include "nvtherm/spectral.hpp"

#include "nvtherm/errors.hpp"
#include "nvtherm/physics.hpp"
#include "nvtherm/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>

namespace nvtherm::spectral {

using estimation::FitProblem;
using estimation::FitResult;
using estimation::Matrix;
using estimation::Vector;

namespace {

constexpr double kPi = physics::constants::pi;
constexpr double kFrequencyUnit = 1e6;  // ESR fit works in MHz internally
// 99th percentile of chi-square with 3 degrees of freedom: the two-dip model has three
// more parameters than the merged single line.
constexpr double kSplitChiSquareGain = 11.34;

void require_strictly_increasing(const std::vector<double>& f, const char* what) {
    for (std::size_t i = 0; i < f.size(); ++i) {
        if (!std::isfinite(f[i])) {
            throw std::invalid_argument(std::string(what) + ": non-finite frequency");
        }
        if (i > 0 && !(f[i] > f[i - 1])) {
            std::ostringstream msg;
            msg << what << ": frequencies not strictly increasing at index " << i;
            throw std::invalid_argument(msg.str());
        }
    }
}

std::vector<double> moving_average(const std::vector<double>& y, std::size_t half_window) {
    std::vector<double> out(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        const std::size_t lo = i >= half_window ? i - half_window : 0;
        const std::size_t hi = std::min(y.size() - 1, i + half_window);
        double sum = 0.0;
        for (std::size_t j = lo; j <= hi; ++j) sum += y[j];
        out[i] = sum / static_cast<double>(hi - lo + 1);
    }
    return out;
}

double quantile(std::vector<double> values, double q) {
    const auto k = static_cast<std::size_t>(q * static_cast<double>(values.size() - 1));
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k), values.end());
    return values[k];
}

// ---------------------------------------------------------------------------
// ESR fitting

struct Dip {
    std::size_t index;
    double depth;       // below baseline
    double prominence;
    double fwhm;        // Hz
};

// Prominence of a minimum: climb to the highest point on each side before reaching
// a lower value, take the smaller of the two rises.
double minimum_prominence(const std::vector<double>& s, std::size_t i) {
    double left_max = s[i];
    for (std::size_t j = i; j-- > 0;) {
        if (s[j] < s[i]) break;
        left_max = std::max(left_max, s[j]);
    }
    double right_max = s[i];
    for (std::size_t j = i + 1; j < s.size(); ++j) {
        if (s[j] < s[i]) break;
        right_max = std::max(right_max, s[j]);
    }
    return std::min(left_max, right_max) - s[i];
}

double dip_fwhm(const std::vector<double>& f, const std::vector<double>& s, std::size_t i, double baseline) {
    const double half = baseline - 0.5 * (baseline - s[i]);
    std::optional<double> left, right;
    for (std::size_t j = i; j-- > 0;) {
        if (s[j] >= half) {
            left = f[j];
            break;
        }
    }
    for (std::size_t j = i + 1; j < s.size(); ++j) {
        if (s[j] >= half) {
            right = f[j];
            break;
        }
    }
    double width;
    if (left && right) {
        width = *right - *left;
    } else if (left) {
        width = 2.0 * (f[i] - *left);
    } else if (right) {
        width = 2.0 * (*right - f[i]);
    } else {
        width = 0.25 * (f.back() - f.front());
    }
    const double spacing = (f.back() - f.front()) / static_cast<double>(f.size() - 1);
    return std::max(width, 2.0 * spacing);
}

struct EsrData {
    std::vector<double> f;
    std::vector<double> rate;
    std::vector<double> sigma;
    double f_center;
    double rate0;
};

EsrLineParams two_dip_from_internal(const Vector& u, const EsrData& d) {
    EsrLineParams p;
    p.d_center = d.f_center + kFrequencyUnit * u(0);
    p.e_split = kFrequencyUnit * u(1);
    p.contrast_minus = u(2);
    p.contrast_plus = u(3);
    p.width_minus = kFrequencyUnit * u(4);
    p.width_plus = kFrequencyUnit * u(5);
    p.base_rate = d.rate0 * u(6);
    return p;
}

Vector two_dip_residuals(const Vector& u, const EsrData& d) {
    const EsrLineParams p = two_dip_from_internal(u, d);
    Vector r(static_cast<Eigen::Index>(d.f.size()));
    for (std::size_t i = 0; i < d.f.size(); ++i) {
        r(static_cast<Eigen::Index>(i)) = (d.rate[i] - esr_model(p, d.f[i])) / d.sigma[i];
    }
    return r;
}

Vector single_dip_residuals(const Vector& u, const EsrData& d) {
    const double center = d.f_center + kFrequencyUnit * u(0);
    const double width = kFrequencyUnit * u(2);
    const double base = d.rate0 * u(3);
    Vector r(static_cast<Eigen::Index>(d.f.size()));
    for (std::size_t i = 0; i < d.f.size(); ++i) {
        const double model = base * (1.0 - u(1) * lorentzian(d.f[i], center, width));
        r(static_cast<Eigen::Index>(i)) = (d.rate[i] - model) / d.sigma[i];
    }
    return r;
}

std::optional<FitResult> solve_quietly(const FitProblem& problem) {
    try {
        FitResult res = estimation::least_squares_solve(problem);
        if (!res.converged || !res.parameters.allFinite()) return std::nullopt;
        return res;
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

bool inside_scan(double f, const EsrData& d) { return f >= d.f.front() && f <= d.f.back(); }

std::optional<FitResult> fit_two_dips(const EsrData& d, const Vector& seed,
                                      const estimation::SolverTolerances& tol) {
    FitProblem problem;
    problem.residuals = [&d](const Vector& u) { return two_dip_residuals(u, d); };
    problem.initial = seed;
    problem.names = {"d_center", "e_split", "contrast_minus", "contrast_plus", "width_minus", "width_plus",
                     "base_rate"};
    Vector lower(7), upper(7);
    const double inf = std::numeric_limits<double>::infinity();
    lower << -inf, 0.0, 0.0, 0.0, 1e-6, 1e-6, 1e-6;
    upper << inf, inf, 0.999, 0.999, inf, inf, inf;
    problem.lower = lower;
    problem.upper = upper;
    problem.tolerances = tol;
    problem.scale_covariance = false;
    auto res = solve_quietly(problem);
    if (!res) return std::nullopt;
    const EsrLineParams p = two_dip_from_internal(res->parameters, d);
    if (!inside_scan(p.f_minus(), d) || !inside_scan(p.f_plus(), d)) return std::nullopt;
    return res;
}

std::optional<FitResult> fit_single_dip(const EsrData& d, const Vector& seed,
                                        const estimation::SolverTolerances& tol) {
    FitProblem problem;
    problem.residuals = [&d](const Vector& u) { return single_dip_residuals(u, d); };
    problem.initial = seed;
    problem.names = {"d_center", "contrast", "width", "base_rate"};
    Vector lower(4), upper(4);
    const double inf = std::numeric_limits<double>::infinity();
    lower << -inf, 0.0, 1e-6, 1e-6;
    upper << inf, 0.999, inf, inf;
    problem.lower = lower;
    problem.upper = upper;
    problem.tolerances = tol;
    problem.scale_covariance = false;
    auto res = solve_quietly(problem);
    if (!res) return std::nullopt;
    if (!inside_scan(d.f_center + kFrequencyUnit * res->parameters(0), d)) return std::nullopt;
    return res;
}

}  // namespace

void EsrLineParams::validate() const {
    for (double v : {d_center, e_split, contrast_minus, contrast_plus, width_minus, width_plus, base_rate}) {
        if (!std::isfinite(v)) throw std::invalid_argument("ESR parameters must be finite");
    }
    if (e_split < 0.0) throw std::invalid_argument("ESR e_split must be non-negative");
    if (contrast_minus < 0.0 || contrast_minus >= 1.0 || contrast_plus < 0.0 || contrast_plus >= 1.0) {
        throw std::invalid_argument("ESR contrasts must lie in [0, 1)");
    }
    if (contrast_minus + contrast_plus >= 1.0) {
        throw std::invalid_argument("ESR contrasts must sum below 1");
    }
    if (width_minus <= 0.0 || width_plus <= 0.0) throw std::invalid_argument("ESR widths must be positive");
    if (base_rate <= 0.0) throw std::invalid_argument("ESR base rate must be positive");
}

void EsrSpectrum::validate() const {
    if (frequencies.size() != counts.size()) {
        throw std::invalid_argument("ESR spectrum: frequency and count lists differ in length");
    }
    require_strictly_increasing(frequencies, "ESR spectrum");
    if (!(dwell_per_point > 0.0) || !std::isfinite(dwell_per_point)) {
        throw std::invalid_argument("ESR spectrum: dwell per point must be positive");
    }
}

void OscillatorParams::validate() const {
    for (double v : {resonance_omega, damping_gamma, mass, temperature_cm}) {
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw std::invalid_argument("oscillator parameters must be positive and finite");
        }
    }
}

void MotionPsd::validate() const {
    if (frequencies.size() != psd_values.size()) {
        throw std::invalid_argument("PSD: frequency and value lists differ in length");
    }
    require_strictly_increasing(frequencies, "PSD");
    for (double v : psd_values) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("PSD values must be non-negative");
    }
}

double lorentzian(double f, double center, double fwhm) {
    const double x = 2.0 * (f - center) / fwhm;
    return 1.0 / (1.0 + x * x);
}

double esr_model(const EsrLineParams& p, double f) {
    return p.base_rate * (1.0 - p.contrast_minus * lorentzian(f, p.f_minus(), p.width_minus) -
                          p.contrast_plus * lorentzian(f, p.f_plus(), p.width_plus));
}

std::array<double, 7> esr_model_gradient(const EsrLineParams& p, double f) {
    // L = 1/(1+x^2), x = 2 (f - c)/w: dL/dc = 4x/(w (1+x^2)^2), dL/dw = 2x^2/(w (1+x^2)^2)
    auto parts = [f](double center, double width) {
        const double x = 2.0 * (f - center) / width;
        const double q = 1.0 + x * x;
        return std::array<double, 3>{1.0 / q, 4.0 * x / (width * q * q), 2.0 * x * x / (width * q * q)};
    };
    const auto m = parts(p.f_minus(), p.width_minus);
    const auto pl = parts(p.f_plus(), p.width_plus);
    const double r = p.base_rate;
    return {
        -r * (p.contrast_minus * m[1] + p.contrast_plus * pl[1]),
        -r * (-p.contrast_minus * m[1] + p.contrast_plus * pl[1]),
        -r * m[0],
        -r * pl[0],
        -r * p.contrast_minus * m[2],
        -r * p.contrast_plus * pl[2],
        1.0 - p.contrast_minus * m[0] - p.contrast_plus * pl[0],
    };
}

std::vector<double> uniform_grid(double start, double stop, std::size_t points) {
    if (points < 2 || !(stop > start)) {
        throw std::invalid_argument("uniform grid needs at least two points and stop > start");
    }
    std::vector<double> grid(points);
    const double step = (stop - start) / static_cast<double>(points - 1);
    for (std::size_t i = 0; i < points; ++i) grid[i] = start + step * static_cast<double>(i);
    grid.back() = stop;
    return grid;
}

EsrSpectrum synthesize_esr(const EsrLineParams& params, std::span<const double> scan, double dwell,
                           std::uint64_t seed) {
    params.validate();
    EsrSpectrum spec;
    spec.frequencies.assign(scan.begin(), scan.end());
    spec.dwell_per_point = dwell;
    spec.counts.resize(scan.size());
    spec.validate();
    Rng rng = make_rng(seed);
    for (std::size_t i = 0; i < scan.size(); ++i) {
        std::poisson_distribution<std::uint64_t> shot(esr_model(params, scan[i]) * dwell);
        spec.counts[i] = shot(rng);
    }
    return spec;
}

EsrSpectrum expected_esr_spectrum(const EsrLineParams& params, std::span<const double> scan, double dwell) {
    params.validate();
    EsrSpectrum spec;
    spec.frequencies.assign(scan.begin(), scan.end());
    spec.dwell_per_point = dwell;
    spec.counts.resize(scan.size());
    spec.validate();
    for (std::size_t i = 0; i < scan.size(); ++i) {
        spec.counts[i] = static_cast<std::uint64_t>(std::llround(esr_model(params, scan[i]) * dwell));
    }
    return spec;
}

EsrFit fit_esr(const EsrSpectrum& spectrum, const estimation::SolverTolerances& tolerances) {
    spectrum.validate();
    if (spectrum.size() < kMinEsrPoints) {
        std::ostringstream msg;
        msg << "ESR fit needs at least " << kMinEsrPoints << " points, got " << spectrum.size();
        throw FitFailure(msg.str());
    }

    EsrData d;
    d.f = spectrum.frequencies;
    d.rate.resize(spectrum.size());
    d.sigma.resize(spectrum.size());
    for (std::size_t i = 0; i < spectrum.size(); ++i) {
        const auto c = static_cast<double>(spectrum.counts[i]);
        d.rate[i] = c / spectrum.dwell_per_point;
        d.sigma[i] = std::sqrt(std::max(c, 1.0)) / spectrum.dwell_per_point;
    }
    d.f_center = 0.5 * (d.f.front() + d.f.back());

    const auto smooth = moving_average(d.rate, 2);
    const double baseline = quantile(smooth, 0.9);
    if (!(baseline > 0.0)) throw FitFailure("ESR spectrum has no counts");
    d.rate0 = baseline;
    const double shot_sd = std::sqrt(baseline * spectrum.dwell_per_point) / spectrum.dwell_per_point;

    std::vector<Dip> dips;
    for (std::size_t i = 0; i < smooth.size(); ++i) {
        const bool left_ok = i == 0 || smooth[i] < smooth[i - 1];
        const bool right_ok = i + 1 == smooth.size() || smooth[i] <= smooth[i + 1];
        if (!left_ok || !right_ok) continue;
        const double depth = baseline - smooth[i];
        if (depth <= 2.0 * shot_sd) continue;
        dips.push_back({i, depth, minimum_prominence(smooth, i), dip_fwhm(d.f, smooth, i, baseline)});
    }
    if (dips.empty()) {
        throw FitFailure("no ESR dip deeper than two shot-noise standard deviations");
    }
    std::sort(dips.begin(), dips.end(), [](const Dip& a, const Dip& b) { return a.prominence > b.prominence; });

    // Seeds in internal units: frequencies in MHz relative to the scan centre, rate relative to baseline.
    auto mhz = [&d](double f) { return (f - d.f_center) / kFrequencyUnit; };
    std::vector<Vector> two_dip_seeds;
    const Dip& main = dips.front();
    if (dips.size() >= 2 && dips[1].prominence > 0.2 * main.prominence) {
        const Dip& lo = d.f[dips[0].index] < d.f[dips[1].index] ? dips[0] : dips[1];
        const Dip& hi = &lo == &dips[0] ? dips[1] : dips[0];
        const double f_lo = d.f[lo.index];
        const double f_hi = d.f[hi.index];
        Vector s(7);
        s << mhz(0.5 * (f_lo + f_hi)), (f_hi - f_lo) / (2.0 * kFrequencyUnit), lo.depth / baseline,
            hi.depth / baseline, std::min(lo.fwhm, f_hi - f_lo) / kFrequencyUnit,
            std::min(hi.fwhm, f_hi - f_lo) / kFrequencyUnit, 1.0;
        two_dip_seeds.push_back(s);
    }
    const double f0 = d.f[main.index];
    const double w_obs = main.fwhm / kFrequencyUnit;
    const double c_obs = std::min(main.depth / baseline, 0.9);
    for (double split_fraction : {0.25, 0.4}) {
        Vector s(7);
        s << mhz(f0), split_fraction * w_obs, 0.6 * c_obs, 0.6 * c_obs, 0.65 * w_obs, 0.65 * w_obs, 1.0;
        two_dip_seeds.push_back(s);
    }

    std::optional<FitResult> best_two;
    for (const auto& seed : two_dip_seeds) {
        auto res = fit_two_dips(d, seed, tolerances);
        if (res && (!best_two || res->chi_square < best_two->chi_square)) best_two = std::move(res);
    }
    Vector single_seed(4);
    single_seed << mhz(f0), c_obs, w_obs, 1.0;
    auto single = fit_single_dip(d, single_seed, tolerances);

    if (!best_two && !single) throw FitFailure("ESR fit did not converge");

    EsrFit out;
    const bool use_single =
        !best_two || (single && single->chi_square - best_two->chi_square < kSplitChiSquareGain);
    if (!use_single) {
        const Vector& u = best_two->parameters;
        out.params = two_dip_from_internal(u, d);
        Vector scale(7);
        scale << kFrequencyUnit, kFrequencyUnit, 1.0, 1.0, kFrequencyUnit, kFrequencyUnit, d.rate0;
        out.covariance = scale.asDiagonal() * best_two->covariance * scale.asDiagonal();
        out.chi_square = best_two->chi_square;
        out.degrees_of_freedom = best_two->degrees_of_freedom;
        out.iterations = best_two->iterations;
    } else {
        const Vector& u = single->parameters;
        out.degenerate = true;
        out.params.d_center = d.f_center + kFrequencyUnit * u(0);
        out.params.e_split = 0.0;
        out.params.contrast_minus = out.params.contrast_plus = 0.5 * u(1);
        out.params.width_minus = out.params.width_plus = kFrequencyUnit * u(2);
        out.params.base_rate = d.rate0 * u(3);
        // Embed the 4-parameter covariance into the (D, E, c-, c+, w-, w+, R) layout.
        Matrix map = Matrix::Zero(7, 4);
        map(0, 0) = kFrequencyUnit;
        map(2, 1) = map(3, 1) = 0.5;
        map(4, 2) = map(5, 2) = kFrequencyUnit;
        map(6, 3) = d.rate0;
        out.covariance = map * single->covariance * map.transpose();
        out.chi_square = single->chi_square;
        out.degrees_of_freedom = single->degrees_of_freedom;
        out.iterations = single->iterations;
    }
    out.sigma_d = std::sqrt(std::max(0.0, out.covariance(0, 0)));
    return out;
}

// ---------------------------------------------------------------------------
// Motional PSD

double psd_model(const OscillatorParams& p, double f) {
    const double w = 2.0 * kPi * f;
    const double detuning = p.resonance_omega * p.resonance_omega - w * w;
    const double denom = detuning * detuning + p.damping_gamma * p.damping_gamma * w * w;
    // One-sided per-Hz density: twice the angular two-sided response 2 k_B T Gamma / m / denom.
    return 2.0 * (2.0 * physics::constants::boltzmann * p.temperature_cm * p.damping_gamma / p.mass) / denom;
}

MotionPsd synthesize_psd(const OscillatorParams& params, std::span<const double> grid, int n_averages,
                         std::uint64_t seed) {
    params.validate();
    if (n_averages < 1) throw std::invalid_argument("PSD synthesis needs n_averages >= 1");
    MotionPsd psd;
    psd.frequencies.assign(grid.begin(), grid.end());
    psd.psd_values.resize(grid.size());
    require_strictly_increasing(psd.frequencies, "PSD grid");
    Rng rng = make_rng(seed);
    const double dof = 2.0 * n_averages;
    std::chi_squared_distribution<double> chi2(dof);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        psd.psd_values[i] = psd_model(params, grid[i]) * chi2(rng) / dof;
    }
    return psd;
}

MotionPsd expected_psd(const OscillatorParams& params, std::span<const double> grid) {
    params.validate();
    MotionPsd psd;
    psd.frequencies.assign(grid.begin(), grid.end());
    require_strictly_increasing(psd.frequencies, "PSD grid");
    psd.psd_values.resize(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) psd.psd_values[i] = psd_model(params, grid[i]);
    return psd;
}

namespace {

struct PsdWindow {
    std::vector<double> omega;
    std::vector<double> log_value;
};

PsdWindow select_window(const MotionPsd& psd, double omega0, double gamma) {
    // +-5 linewidths around the resonance, linewidth Gamma in angular units
    const double lo = omega0 - 5.0 * gamma;
    const double hi = omega0 + 5.0 * gamma;
    PsdWindow w;
    for (std::size_t i = 0; i < psd.frequencies.size(); ++i) {
        const double omega = 2.0 * kPi * psd.frequencies[i];
        if (omega < lo || omega > hi || !(psd.psd_values[i] > 0.0) || !(psd.frequencies[i] > 0.0)) continue;
        w.omega.push_back(omega);
        w.log_value.push_back(std::log(psd.psd_values[i]));
    }
    return w;
}

// Model in log space: log S = log C - log((W^2 - w^2)^2 + G^2 w^2)
double log_psd_shape(double omega, double omega0, double gamma) {
    const double detuning = omega0 * omega0 - omega * omega;
    return -std::log(detuning * detuning + gamma * gamma * omega * omega);
}

}  // namespace

PsdFit fit_psd(const MotionPsd& psd, double assumed_temperature_cm, const estimation::SolverTolerances& tol) {
    psd.validate();
    if (psd.frequencies.size() < 8) throw FitFailure("PSD fit needs at least 8 points");
    if (!(assumed_temperature_cm > 0.0)) throw std::invalid_argument("assumed temperature must be positive");

    const auto smooth = moving_average(psd.psd_values, 2);
    const auto peak_it = std::max_element(smooth.begin(), smooth.end());
    const auto peak = static_cast<std::size_t>(peak_it - smooth.begin());
    const double median = quantile(psd.psd_values, 0.5);
    if (!(*peak_it > 5.0 * median)) {
        throw FitFailure("no resonance peak in PSD (maximum below five times the median)");
    }

    // Half-maximum walk on the smoothed spectrum for the initial linewidth.
    const double half = 0.5 * smooth[peak];
    std::optional<double> left, right;
    for (std::size_t j = peak; j-- > 0;) {
        if (smooth[j] <= half) {
            left = psd.frequencies[j];
            break;
        }
    }
    for (std::size_t j = peak + 1; j < smooth.size(); ++j) {
        if (smooth[j] <= half) {
            right = psd.frequencies[j];
            break;
        }
    }
    const double f_peak = psd.frequencies[peak];
    double fwhm_hz;
    if (left && right) {
        fwhm_hz = *right - *left;
    } else if (left) {
        fwhm_hz = 2.0 * (f_peak - *left);
    } else if (right) {
        fwhm_hz = 2.0 * (*right - f_peak);
    } else {
        fwhm_hz = 0.5 * f_peak;
    }
    const double spacing = (psd.frequencies.back() - psd.frequencies.front()) /
                           static_cast<double>(psd.frequencies.size() - 1);
    fwhm_hz = std::max(fwhm_hz, 2.0 * spacing);

    double omega0 = 2.0 * kPi * f_peak;
    double gamma = 2.0 * kPi * fwhm_hz;

    FitResult res;
    std::size_t window_points = 0;
    // Second pass re-centres the window on the first-pass estimate.
    for (int pass = 0; pass < 2; ++pass) {
        const PsdWindow w = select_window(psd, omega0, gamma);
        if (w.omega.size() < 4) throw FitFailure("PSD window around the peak has fewer than 4 points");
        window_points = w.omega.size();
        const double omega_ref = omega0;
        const double gamma_ref = gamma;
        double log_c0 = 0.0;
        for (std::size_t i = 0; i < w.omega.size(); ++i) {
            log_c0 += w.log_value[i] - log_psd_shape(w.omega[i], omega0, gamma);
        }
        log_c0 /= static_cast<double>(w.omega.size());

        FitProblem problem;
        problem.residuals = [&w, omega_ref, gamma_ref, log_c0](const Vector& u) {
            Vector r(static_cast<Eigen::Index>(w.omega.size()));
            for (std::size_t i = 0; i < w.omega.size(); ++i) {
                r(static_cast<Eigen::Index>(i)) =
                    w.log_value[i] - (log_c0 + u(2) + log_psd_shape(w.omega[i], omega_ref * u(0), gamma_ref * u(1)));
            }
            return r;
        };
        problem.initial = Vector::Ones(3);
        problem.initial(2) = 0.0;
        problem.names = {"omega0", "gamma", "log_amplitude"};
        Vector lower(3);
        lower << 1e-6, 1e-6, -std::numeric_limits<double>::infinity();
        problem.lower = lower;
        problem.tolerances = tol;
        try {
            res = estimation::least_squares_solve(problem);
        } catch (const std::exception& e) {
            throw FitFailure(std::string("PSD fit failed: ") + e.what());
        }
        if (!res.converged) throw FitFailure("PSD fit did not converge: " + res.message);
        omega0 = omega_ref * res.parameters(0);
        gamma = gamma_ref * res.parameters(1);
        Vector scale(3);
        scale << omega_ref, gamma_ref, 1.0;
        res.covariance = scale.asDiagonal() * res.covariance * scale.asDiagonal();
        res.parameters(2) += log_c0;
    }

    PsdFit out;
    out.gamma = gamma;
    out.amplitude = std::exp(res.parameters(2));
    out.covariance = res.covariance;
    out.omega_sigma = std::sqrt(std::max(0.0, res.covariance(0, 0)));
    out.gamma_sigma = std::sqrt(std::max(0.0, res.covariance(1, 1)));
    out.window_points = window_points;
    out.params.resonance_omega = omega0;
    out.params.damping_gamma = gamma;
    out.params.temperature_cm = assumed_temperature_cm;
    // amplitude = 4 k_B T Gamma / m; only the ratio T/m is identifiable.
    out.params.mass = 4.0 * physics::constants::boltzmann * assumed_temperature_cm * gamma / out.amplitude;
    out.note = "amplitude fixes only T_cm/m; mass is implied at the assumed centre-of-mass temperature";
    if (!out.params.underdamped()) out.note += "; overdamped resonance";
    return out;
}

}  // namespace nvtherm::spectral
