#include "nvtherm/pipeline.hpp"

#include "nvtherm/errors.hpp"
#include "nvtherm/parallel.hpp"
#include "nvtherm/physics.hpp"
#include "nvtherm/random.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace nvtherm::pipeline {

namespace {

constexpr double kHpa = 100.0;
constexpr std::uint64_t kPsdStream = 0;
constexpr std::uint64_t kDrawStream = 0xd1ce;

std::string two_digits(std::size_t i) {
    std::string s = std::to_string(i);
    return s.size() < 2 ? "0" + s : s;
}

Json matrix_json(const estimation::Matrix& m) {
    Json rows = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        Json row = Json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Json power_law_json(const estimation::PowerLawFit& f) {
    return {{"amplitude_per_m", f.amplitude},
            {"exponent", f.exponent},
            {"exponent_fixed", f.exponent_fixed},
            {"exponent_uncertainty", f.exponent_sigma},
            {"log_amplitude_uncertainty", f.log_amplitude_sigma},
            {"residual_sum", f.residual_sum},
            {"sigma_log", f.sigma_log},
            {"a_minus", f.a_minus},
            {"a_plus", f.a_plus},
            {"records", f.records}};
}

// Intensities for the synthetic grid; optionally rescaled so the hottest condition sits at the target temperature.
std::vector<double> condition_intensities(const ExperimentConfig& cfg, double beta_heat) {
    std::vector<double> out;
    double max_ratio = 0.0;
    for (double i : cfg.synth_intensities) {
        for (double p : cfg.synth_pressures_hpa) max_ratio = std::max(max_ratio, i / (p * kHpa));
    }
    double scale = 1.0;
    if (cfg.synth_rescale_intensity && max_ratio > 0.0 && beta_heat > 0.0) {
        scale = (cfg.synth_target_temperature - cfg.t0) / (beta_heat * max_ratio);
    }
    for (double i : cfg.synth_intensities) out.push_back(i * scale);
    return out;
}

}  // namespace

std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

SyntheticParticle synthesize_particle(const ExperimentConfig& cfg, double r_hydro, double sigma_abs,
                                      std::uint64_t seed) {
    cfg.validate();
    const auto poly = cfg.zfs();
    const physics::ParticleGeometry geom{r_hydro, cfg.density};
    const auto gas_ref = cfg.gas(cfg.psd_pressure_hpa * kHpa);

    SyntheticParticle out;
    auto& truth = out.truth;
    truth.r_hydro = r_hydro;
    truth.sigma_abs = sigma_abs;
    truth.beta_heat = physics::beta_from_sigma(sigma_abs, geom, gas_ref);
    truth.d_strain = cfg.synth_d_strain;

    const auto intensities = condition_intensities(cfg, truth.beta_heat);
    std::size_t k = 0;
    for (double intensity : intensities) {
        for (double p_hpa : cfg.synth_pressures_hpa) {
            const double pressure = p_hpa * kHpa;
            const double t = cfg.t0 + truth.beta_heat * intensity / pressure;
            if (t > cfg.guard_max_temperature) {
                throw std::invalid_argument("synthetic condition would reach " + format_double(t) +
                                            " K, above the stability guard");
            }
            spectral::EsrLineParams line;
            line.d_center = poly.value_unchecked(t) + truth.d_strain;
            line.e_split = cfg.esr_e_split;
            line.contrast_minus = line.contrast_plus = cfg.esr_contrast;
            line.width_minus = line.width_plus = cfg.esr_linewidth;
            line.base_rate = cfg.esr_count_rate;
            const auto scan = spectral::uniform_grid(line.d_center - cfg.esr_span / 2.0,
                                                     line.d_center + cfg.esr_span / 2.0,
                                                     static_cast<std::size_t>(cfg.esr_points));
            ConditionData cond;
            cond.intensity = intensity;
            cond.pressure = pressure;
            cond.spectrum = cfg.synth_noise ? spectral::synthesize_esr(line, scan, cfg.esr_dwell, derive_seed(seed, k + 1))
                                            : spectral::expected_esr_spectrum(line, scan, cfg.esr_dwell);
            cond.label = "esr_" + two_digits(k) + ".csv";
            out.data.conditions.push_back(std::move(cond));
            truth.intensities.push_back(intensity);
            truth.pressures.push_back(pressure);
            truth.temperatures.push_back(t);
            ++k;
        }
    }

    const auto gas_psd = cfg.gas(cfg.psd_pressure_hpa * kHpa);
    spectral::OscillatorParams osc;
    osc.resonance_omega = 2.0 * physics::constants::pi * cfg.psd_trap_frequency;
    osc.damping_gamma = physics::damping_rate(r_hydro, gas_psd, cfg.density);
    osc.mass = geom.mass();
    osc.temperature_cm = cfg.t0;
    truth.gamma = osc.damping_gamma;
    const auto grid = spectral::uniform_grid(cfg.psd_f_min, cfg.psd_f_max, static_cast<std::size_t>(cfg.psd_points));
    out.data.psd = cfg.synth_noise ? spectral::synthesize_psd(osc, grid, cfg.psd_averages, derive_seed(seed, kPsdStream))
                                   : spectral::expected_psd(osc, grid);
    out.data.psd_pressure = gas_psd.p_gas;
    out.data.psd_label = "psd.csv";
    return out;
}

ParticleResult analyze_particle(const ExperimentConfig& cfg, const ParticleData& data) {
    if (data.conditions.size() < 4) {
        throw PipelineError("config", "conditions",
                            "at least 4 heating conditions are required, got " + std::to_string(data.conditions.size()));
    }
    const auto poly = cfg.zfs();
    const auto tol = cfg.tolerances();
    const auto gas = cfg.gas(data.psd_pressure);

    ParticleResult res;
    std::vector<estimation::HeatingPoint> points;
    for (const auto& cond : data.conditions) {
        ConditionResult cr;
        cr.intensity = cond.intensity;
        cr.pressure = cond.pressure;
        try {
            const auto fit = spectral::fit_esr(cond.spectrum, tol);
            cr.d_hat = fit.params.d_center;
            cr.sigma_d = fit.sigma_d;
            cr.e_split = fit.params.e_split;
            cr.degenerate = fit.degenerate;
        } catch (const std::exception& e) {
            throw PipelineError("esr-fit", cond.label, e.what());
        }
        try {
            cr.t_apparent = physics::invert_zfs(poly, cr.d_hat);
        } catch (const std::exception& e) {
            throw PipelineError("invert", cond.label, e.what());
        }
        points.push_back({cond.intensity, cond.pressure, cr.d_hat, cr.sigma_d});
        res.conditions.push_back(cr);
    }

    try {
        res.heating = estimation::fit_heating(points, poly, gas, tol);
    } catch (const std::exception& e) {
        throw PipelineError("heating-fit", "conditions", e.what());
    }
    for (std::size_t k = 0; k < res.conditions.size(); ++k) {
        auto& cr = res.conditions[k];
        cr.t_model = res.heating.fitted_temperatures[k];
        try {
            cr.t_measured = physics::invert_zfs(poly, cr.d_hat - res.heating.d_strain);
            cr.sigma_t = physics::temperature_uncertainty(cr.sigma_d, poly, cr.t_measured);
        } catch (const std::exception& e) {
            throw PipelineError("invert", data.conditions[k].label, e.what());
        }
    }

    try {
        res.psd = spectral::fit_psd(data.psd, cfg.t0, tol);
    } catch (const std::exception& e) {
        throw PipelineError("psd-fit", data.psd_label, e.what());
    }
    try {
        res.r_hydro = physics::radius_from_damping(res.psd.gamma, gas, cfg.density);
    } catch (const std::exception& e) {
        throw PipelineError("radius", data.psd_label, e.what());
    }
    try {
        res.sigma_abs = physics::sigma_from_beta_radius(res.heating.beta_heat, res.r_hydro, gas);
    } catch (const std::exception& e) {
        throw PipelineError("cross-section", "conditions", e.what());
    }

    // First-order transport: r ~ 1/Gamma and sigma ~ beta r^2, with beta and Gamma from independent fits.
    const double rel_gamma = res.psd.gamma_sigma / res.psd.gamma;
    const double rel_beta = res.heating.beta_sigma() / res.heating.beta_heat;
    res.r_hydro_sigma = res.r_hydro * rel_gamma;
    res.sigma_abs_sigma = std::abs(res.sigma_abs) * std::sqrt(rel_beta * rel_beta + 4.0 * rel_gamma * rel_gamma);
    return res;
}

ParticleData load_particle_data(const ExperimentConfig& cfg) {
    if (!cfg.psd) throw PipelineError("config", "psd", "no 'psd = <pressure_hpa> <file>' entry");
    ParticleData data;
    for (const auto& c : cfg.conditions) {
        const auto path = cfg.resolve(c.esr_path);
        ConditionData cond;
        cond.intensity = c.intensity;
        cond.pressure = c.pressure_hpa * kHpa;
        cond.label = path.string();
        try {
            cond.spectrum = ingest_esr(path);
        } catch (const std::exception& e) {
            throw PipelineError("ingest", cond.label, e.what());
        }
        data.conditions.push_back(std::move(cond));
    }
    const auto psd_path = cfg.resolve(cfg.psd->path);
    data.psd_label = psd_path.string();
    data.psd_pressure = cfg.psd->pressure_hpa * kHpa;
    try {
        data.psd = ingest_psd(psd_path);
    } catch (const std::exception& e) {
        throw PipelineError("ingest", data.psd_label, e.what());
    }
    return data;
}

ParticleResult run_particle(const ExperimentConfig& cfg) {
    try {
        cfg.validate();
    } catch (const std::exception& e) {
        throw PipelineError("config", "config", e.what());
    }
    return analyze_particle(cfg, load_particle_data(cfg));
}

Json particle_report(const ExperimentConfig& cfg, const ParticleResult& r) {
    Json conds = Json::array();
    for (const auto& c : r.conditions) {
        conds.push_back({{"intensity_w_m2", c.intensity},
                         {"pressure_pa", c.pressure},
                         {"d_hz", c.d_hat},
                         {"sigma_d_hz", c.sigma_d},
                         {"e_split_hz", c.e_split},
                         {"degenerate", c.degenerate},
                         {"t_apparent_k", c.t_apparent},
                         {"t_measured_k", c.t_measured},
                         {"sigma_t_k", c.sigma_t},
                         {"t_model_k", c.t_model}});
    }
    const auto& h = r.heating;
    Json j;
    j["config"] = config_to_json(cfg);
    j["conditions"] = std::move(conds);
    j["heating"] = {{"beta_heat", h.beta_heat},
                    {"beta_uncertainty", h.beta_sigma()},
                    {"d_strain_hz", h.d_strain},
                    {"d_strain_uncertainty_hz", h.d_strain_sigma()},
                    {"covariance", matrix_json(h.covariance)},
                    {"chi_square", h.chi_square},
                    {"degrees_of_freedom", h.degrees_of_freedom},
                    {"absolute_sigma", h.absolute_sigma},
                    {"iterations", h.iterations}};
    j["psd"] = {{"gamma_per_s", r.psd.gamma},
                {"gamma_uncertainty", r.psd.gamma_sigma},
                {"omega0_rad_s", r.psd.params.resonance_omega},
                {"omega0_uncertainty", r.psd.omega_sigma},
                {"window_points", r.psd.window_points},
                {"note", r.psd.note}};
    j["r_hydro_m"] = r.r_hydro;
    j["r_hydro_uncertainty_m"] = r.r_hydro_sigma;
    j["sigma_abs_m2"] = r.sigma_abs;
    j["sigma_abs_uncertainty_m2"] = r.sigma_abs_sigma;
    return j;
}

std::vector<OutputFile> synthetic_particle_outputs(const ExperimentConfig& cfg, const SyntheticParticle& p) {
    std::vector<OutputFile> files;
    ExperimentConfig manifest = cfg;
    manifest.conditions.clear();
    for (const auto& c : p.data.conditions) {
        files.push_back({c.label, format_esr(c.spectrum)});
        manifest.conditions.push_back({c.intensity, c.pressure / kHpa, c.label});
    }
    files.push_back({p.data.psd_label, format_psd(p.data.psd)});
    manifest.psd = PsdSpec{p.data.psd_pressure / kHpa, p.data.psd_label};
    files.push_back({"particle.cfg", format_config(manifest)});

    const auto& t = p.truth;
    Json truth{{"r_hydro_m", t.r_hydro},  {"sigma_abs_m2", t.sigma_abs}, {"beta_heat", t.beta_heat},
               {"d_strain_hz", t.d_strain}, {"gamma_per_s", t.gamma},    {"intensities_w_m2", t.intensities},
               {"pressures_pa", t.pressures}, {"temperatures_k", t.temperatures}};
    files.push_back({"truth.json", dump_json(truth)});
    return files;
}

EnsembleResult run_ensemble(const ExperimentConfig& cfg, unsigned threads) {
    try {
        cfg.validate();
    } catch (const std::exception& e) {
        throw PipelineError("config", "config", e.what());
    }
    const auto n = static_cast<std::size_t>(cfg.particle_count);

    EnsembleResult res;
    res.particles = parallel_map(n, threads, [&cfg](std::size_t i) {
        const std::uint64_t seed = derive_seed(cfg.seed, i);
        auto rng = make_rng(derive_seed(seed, kDrawStream));
        std::uniform_real_distribution<double> log_r(std::log(cfg.radius_min), std::log(cfg.radius_max));
        std::normal_distribution<double> z(0.0, 1.0);
        const double r = std::exp(log_r(rng));
        const double sigma = cfg.a_h * r * r * r * std::exp(cfg.sigma_log * z(rng));

        ParticleOutcome out;
        out.particle_id = static_cast<int>(i) + 1;
        out.truth.r_hydro = r;
        out.truth.sigma_abs = sigma;
        SyntheticParticle synth;
        try {
            synth = synthesize_particle(cfg, r, sigma, seed);
        } catch (const std::exception& e) {
            out.failure_stage = "synthesis";
            out.failure_message = e.what();
            return out;
        }
        out.truth = synth.truth;
        try {
            out.result = analyze_particle(cfg, synth.data);
        } catch (const PipelineError& e) {
            out.failure_stage = e.stage();
            out.failure_message = e.what();
        } catch (const std::exception& e) {
            out.failure_stage = "analysis";
            out.failure_message = e.what();
        }
        return out;
    });

    const auto gas = cfg.gas(cfg.psd_pressure_hpa * kHpa);
    std::vector<estimation::PowerLawRecord> pl;
    for (const auto& p : res.particles) {
        if (!p.result) continue;
        const auto& r = *p.result;
        EnsembleRecord rec;
        rec.particle_id = p.particle_id;
        rec.beta_heat = r.heating.beta_heat;
        rec.beta_uncertainty = r.heating.beta_sigma();
        rec.r_hydro = r.r_hydro;
        rec.sigma_abs = physics::sigma_from_beta_radius(rec.beta_heat, rec.r_hydro, gas);
        rec.sigma_abs_uncertainty = r.sigma_abs_sigma;
        res.records.push_back(rec);
        pl.push_back({rec.r_hydro, rec.sigma_abs});
    }

    try {
        res.comparison = estimation::compare_exponents(pl);
        res.band = estimation::confidence_band(res.comparison.fixed_3, pl);
    } catch (const std::exception& e) {
        throw PipelineError("power-law", "ensemble", e.what());
    }

    const double volume_factor = 4.0 * physics::constants::pi / 3.0;
    const std::pair<const char*, double> amplitudes[] = {
        {"a_minus", res.band.a_minus}, {"a_fit", res.comparison.fixed_3.amplitude}, {"a_plus", res.band.a_plus}};
    for (const auto& [label, a] : amplitudes) {
        OpticsEstimate o;
        o.label = label;
        o.amplitude = a;
        o.sigma_over_volume = a / volume_factor;
        try {
            o.eps_imag = physics::epsilon_imag_from_sigma_ratio(o.sigma_over_volume, cfg.eps_real, cfg.wavelength);
            o.bulk_absorption = physics::bulk_absorption_coefficient({cfg.eps_real, *o.eps_imag}, cfg.wavelength);
        } catch (const std::exception& e) {
            o.note = e.what();
        }
        res.optics.push_back(std::move(o));
    }
    return res;
}

Json ensemble_report(const ExperimentConfig& cfg, const EnsembleResult& res) {
    Json j;
    j["config"] = config_to_json(cfg);
    j["particles_requested"] = res.particles.size();
    j["particles_analyzed"] = res.records.size();
    Json failures = Json::array();
    for (const auto& p : res.particles) {
        if (p.result) continue;
        failures.push_back({{"particle_id", p.particle_id}, {"stage", p.failure_stage}, {"message", p.failure_message}});
    }
    j["failures"] = std::move(failures);
    j["power_law"] = {{"free", power_law_json(res.comparison.free_fit)},
                      {"fixed_3", power_law_json(res.comparison.fixed_3)},
                      {"fixed_2", power_law_json(res.comparison.fixed_2)},
                      {"preferred_exponent", res.comparison.preferred_exponent}};
    j["band"] = {{"a_minus", res.band.a_minus},
                 {"a_plus", res.band.a_plus},
                 {"sigma_log", res.band.sigma_log},
                 {"a_fit_over_truth", res.comparison.fixed_3.amplitude / cfg.a_h},
                 {"a_plus_over_truth", res.band.a_plus / cfg.a_h}};
    Json optics = Json::array();
    for (const auto& o : res.optics) {
        Json e{{"label", o.label}, {"amplitude_per_m", o.amplitude}, {"sigma_over_volume_per_m", o.sigma_over_volume}};
        e["eps_imag"] = o.eps_imag ? Json(*o.eps_imag) : Json(nullptr);
        e["bulk_absorption_per_m"] = o.bulk_absorption ? Json(*o.bulk_absorption) : Json(nullptr);
        e["bulk_absorption_per_cm"] = o.bulk_absorption ? Json(*o.bulk_absorption / 100.0) : Json(nullptr);
        if (!o.note.empty()) e["note"] = o.note;
        optics.push_back(std::move(e));
    }
    j["optics"] = std::move(optics);
    return j;
}

std::vector<OutputFile> ensemble_outputs(const ExperimentConfig& cfg, const EnsembleResult& res) {
    std::vector<OutputFile> files;
    files.push_back({"ensemble_report.json", dump_json(ensemble_report(cfg, res))});
    files.push_back({"ensemble.csv", format_ensemble(res.records)});

    std::string hist = "log10_beta_low,log10_beta_high,count\n";
    if (!res.records.empty()) {
        double lo = std::log10(res.records.front().beta_heat), hi = lo;
        for (const auto& r : res.records) {
            lo = std::min(lo, std::log10(r.beta_heat));
            hi = std::max(hi, std::log10(r.beta_heat));
        }
        if (hi - lo < 1e-12) {
            lo -= 0.5;
            hi += 0.5;
        }
        const int bins = cfg.hist_bins;
        std::vector<int> counts(static_cast<std::size_t>(bins), 0);
        for (const auto& r : res.records) {
            const int b = static_cast<int>((std::log10(r.beta_heat) - lo) / (hi - lo) * bins);
            ++counts[static_cast<std::size_t>(std::clamp(b, 0, bins - 1))];
        }
        for (int b = 0; b < bins; ++b) {
            hist += format_double(lo + (hi - lo) * b / bins) + "," + format_double(lo + (hi - lo) * (b + 1) / bins) +
                    "," + std::to_string(counts[static_cast<std::size_t>(b)]) + "\n";
        }
    }
    files.push_back({"beta_histogram.csv", hist});

    std::string scatter =
        "particle_id,r_hydro_m,r_hydro_uncertainty_m,sigma_abs_m2,sigma_abs_uncertainty_m2,r_true_m,sigma_true_m2\n";
    for (const auto& p : res.particles) {
        if (!p.result) continue;
        scatter += std::to_string(p.particle_id) + "," + format_double(p.result->r_hydro) + "," +
                   format_double(p.result->r_hydro_sigma) + "," + format_double(p.result->sigma_abs) + "," +
                   format_double(p.result->sigma_abs_sigma) + "," + format_double(p.truth.r_hydro) + "," +
                   format_double(p.truth.sigma_abs) + "\n";
    }
    files.push_back({"scatter.csv", scatter});

    std::string band = "r_hydro_m,sigma_fit_m2,sigma_minus_m2,sigma_plus_m2,sigma_free_fit_m2\n";
    const int points = 50;
    for (int k = 0; k < points; ++k) {
        const double r = cfg.radius_min * std::pow(cfg.radius_max / cfg.radius_min, static_cast<double>(k) / (points - 1));
        const double r3 = r * r * r;
        band += format_double(r) + "," + format_double(res.comparison.fixed_3.predict(r)) + "," +
                format_double(res.band.a_minus * r3) + "," + format_double(res.band.a_plus * r3) + "," +
                format_double(res.comparison.free_fit.predict(r)) + "\n";
    }
    files.push_back({"band.csv", band});
    return files;
}

void write_outputs(const std::filesystem::path& dir, const std::vector<OutputFile>& files) {
    if (!dir.empty()) std::filesystem::create_directories(dir);
    for (const auto& f : files) write_file_atomic(dir / f.name, f.content);
}

}  // namespace nvtherm::pipeline
