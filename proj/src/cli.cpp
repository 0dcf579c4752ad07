#include "nvtherm/cli.hpp"

#include "nvtherm/config.hpp"
#include "nvtherm/errors.hpp"
#include "nvtherm/fits.hpp"
#include "nvtherm/io.hpp"
#include "nvtherm/physics.hpp"
#include "nvtherm/pipeline.hpp"
#include "nvtherm/spectral.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <optional>
#include <string>

namespace nvtherm::cli {

namespace {

using pipeline::Json;

struct GlobalOptions {
    std::optional<std::uint64_t> seed;
    std::string config_path;
    std::string out_dir = ".";
    std::string format = "json";
    unsigned threads = 0;
};

pipeline::ExperimentConfig resolve_config(const GlobalOptions& g, const std::string& positional = {}) {
    const std::string& path = positional.empty() ? g.config_path : positional;
    auto cfg = path.empty() ? pipeline::ExperimentConfig{} : pipeline::load_config(path);
    if (g.seed) cfg.seed = *g.seed;
    return cfg;
}

void flatten(const Json& j, const std::string& prefix, std::string& out) {
    if (j.is_object()) {
        for (auto it = j.begin(); it != j.end(); ++it) flatten(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), out);
    } else if (j.is_array()) {
        for (std::size_t i = 0; i < j.size(); ++i) flatten(j[i], prefix + "." + std::to_string(i), out);
    } else {
        std::string v = j.is_string() ? j.get<std::string>() : j.dump();
        if (v.find_first_of(",\"\n") != std::string::npos) {
            std::string quoted = "\"";
            for (char c : v) quoted += c == '"' ? std::string("\"\"") : std::string(1, c);
            v = quoted + "\"";
        }
        out += prefix + "," + v + "\n";
    }
}

void emit(const Json& j, const GlobalOptions& g, std::ostream& out) {
    if (g.format == "csv") {
        std::string text = "key,value\n";
        flatten(j, "", text);
        out << text;
    } else {
        out << pipeline::dump_json(j);
    }
}

Json error_json(const std::exception_ptr& ep) {
    Json e;
    try {
        std::rethrow_exception(ep);
    } catch (const ParseError& x) {
        e = {{"type", "parse"}, {"message", x.what()}, {"source", x.source()}, {"line", x.line()}, {"column", x.column()}};
    } catch (const PipelineError& x) {
        e = {{"type", "pipeline"}, {"message", x.what()}, {"stage", x.stage()}, {"input", x.input()}};
    } catch (const FitFailure& x) {
        e = {{"type", "fit"}, {"message", x.what()}};
    } catch (const std::invalid_argument& x) {
        e = {{"type", "invalid-input"}, {"message", x.what()}};
    } catch (const std::domain_error& x) {
        e = {{"type", "domain"}, {"message", x.what()}};
    } catch (const std::exception& x) {
        e = {{"type", "runtime"}, {"message", x.what()}};
    }
    return Json{{"error", e}};
}

Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

Json cmd_esr_fit(const GlobalOptions& g, const std::string& file) {
    const auto cfg = resolve_config(g);
    const auto fit = spectral::fit_esr(pipeline::ingest_esr(file), cfg.tolerances());
    const auto poly = cfg.zfs();
    std::optional<double> t, sigma_t;
    std::string note;
    try {
        t = physics::invert_zfs(poly, fit.params.d_center);
        sigma_t = physics::temperature_uncertainty(fit.sigma_d, poly, *t);
    } catch (const std::exception& e) {
        note = e.what();
    }
    const auto& p = fit.params;
    Json j{{"d_hz", p.d_center},
           {"sigma_d_hz", fit.sigma_d},
           {"e_split_hz", p.e_split},
           {"contrast_minus", p.contrast_minus},
           {"contrast_plus", p.contrast_plus},
           {"width_minus_hz", p.width_minus},
           {"width_plus_hz", p.width_plus},
           {"base_rate_per_s", p.base_rate},
           {"degenerate", fit.degenerate},
           {"chi_square", fit.chi_square},
           {"degrees_of_freedom", fit.degrees_of_freedom},
           {"temperature_k", optional_number(t)},
           {"sigma_t_k", optional_number(sigma_t)}};
    if (!note.empty()) j["note"] = note;
    return j;
}

Json cmd_psd_fit(const GlobalOptions& g, const std::string& file, std::optional<double> pressure_hpa) {
    const auto cfg = resolve_config(g);
    const auto fit = spectral::fit_psd(pipeline::ingest_psd(file), cfg.t0, cfg.tolerances());
    Json j{{"gamma_per_s", fit.gamma},
           {"gamma_uncertainty", fit.gamma_sigma},
           {"omega0_rad_s", fit.params.resonance_omega},
           {"omega0_uncertainty", fit.omega_sigma},
           {"implied_mass_kg", fit.params.mass},
           {"window_points", fit.window_points},
           {"note", fit.note}};
    if (pressure_hpa) {
        const double r = physics::radius_from_damping(fit.gamma, cfg.gas(*pressure_hpa * 100.0), cfg.density);
        j["r_hydro_m"] = r;
        j["r_hydro_uncertainty_m"] = r * fit.gamma_sigma / fit.gamma;
    }
    return j;
}

Json cmd_calibrate(const GlobalOptions& g, const std::string& file) {
    const auto cfg = resolve_config(g);
    const auto fit = estimation::fit_calibration_alpha(pipeline::ingest_calibration_table(file), cfg.zfs(), cfg.tolerances());
    Json cov = Json::array({Json::array({fit.covariance(0, 0), fit.covariance(0, 1)}),
                            Json::array({fit.covariance(1, 0), fit.covariance(1, 1)})});
    return {{"a0_hz", fit.a0},
            {"alpha", fit.alpha},
            {"covariance", cov},
            {"d_strain_hz", fit.d_strain},
            {"corrected_temperatures_k", fit.corrected_temperatures},
            {"residual_norm", fit.residual_norm},
            {"iterations", fit.iterations}};
}

Json cmd_heating_fit(const GlobalOptions& g, const std::string& file, std::optional<double> r_hydro) {
    const auto cfg = resolve_config(g);
    const auto gas = cfg.gas(cfg.psd_pressure_hpa * 100.0);
    const auto fit = estimation::fit_heating(pipeline::ingest_heating_table(file), cfg.zfs(), gas, cfg.tolerances());
    Json j{{"beta_heat", fit.beta_heat},
           {"beta_uncertainty", fit.beta_sigma()},
           {"d_strain_hz", fit.d_strain},
           {"d_strain_uncertainty_hz", fit.d_strain_sigma()},
           {"fitted_temperatures_k", fit.fitted_temperatures},
           {"chi_square", fit.chi_square},
           {"degrees_of_freedom", fit.degrees_of_freedom},
           {"absolute_sigma", fit.absolute_sigma},
           {"iterations", fit.iterations}};
    if (r_hydro) {
        j["sigma_abs_m2"] = physics::sigma_from_beta_radius(fit.beta_heat, *r_hydro, gas);
        j["sigma_abs_uncertainty_m2"] = physics::sigma_from_beta_radius(fit.beta_sigma(), *r_hydro, gas);
    }
    return j;
}

Json cmd_particle(const GlobalOptions& g, const std::string& config_file) {
    const auto cfg = resolve_config(g, config_file);
    const auto report = pipeline::particle_report(cfg, pipeline::run_particle(cfg));
    pipeline::write_outputs(g.out_dir, {{"particle_report.json", pipeline::dump_json(report)}});
    return report;
}

Json cmd_ensemble(const GlobalOptions& g, const std::string& config_file) {
    const auto cfg = resolve_config(g, config_file);
    const auto result = pipeline::run_ensemble(cfg, g.threads);
    const auto files = pipeline::ensemble_outputs(cfg, result);
    pipeline::write_outputs(g.out_dir, files);
    return pipeline::ensemble_report(cfg, result);
}

Json cmd_synth(const GlobalOptions& g, const std::string& config_file) {
    const auto cfg = resolve_config(g, config_file);
    const auto particle = pipeline::synthesize_particle(cfg, cfg.particle_r_hydro, cfg.particle_sigma_abs, cfg.seed);
    const auto files = pipeline::synthetic_particle_outputs(cfg, particle);
    pipeline::write_outputs(g.out_dir, files);
    Json names = Json::array();
    for (const auto& f : files) names.push_back(f.name);
    return {{"files", names},
            {"r_hydro_m", particle.truth.r_hydro},
            {"sigma_abs_m2", particle.truth.sigma_abs},
            {"beta_heat", particle.truth.beta_heat},
            {"temperatures_k", particle.truth.temperatures}};
}

Json cmd_sensitivity(const GlobalOptions& g, const std::string& params_file) {
    const auto cfg = resolve_config(g, params_file);
    physics::EsrSensitivityInputs in;
    in.linewidth = cfg.esr_linewidth;
    in.contrast = cfg.esr_contrast;
    in.count_rate = cfg.esr_count_rate;
    in.dwell_per_point = cfg.esr_dwell;
    const auto r = physics::esr_sensitivity(in, cfg.sensitivity_slope);
    return {{"sensitivity_k_per_sqrt_hz", r.sensitivity},
            {"resolution_k", r.resolution},
            {"linewidth_hz", in.linewidth},
            {"contrast", in.contrast},
            {"count_rate_per_s", in.count_rate},
            {"dwell_s", in.dwell_per_point},
            {"slope_hz_per_k", cfg.sensitivity_slope}};
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Thermometry and absorption analysis for levitated NV nanodiamonds", "nvtherm"};
    app.fallthrough();
    app.require_subcommand(1);

    GlobalOptions g;
    app.add_option("--seed", g.seed, "Override the configured RNG seed");
    app.add_option("--config", g.config_path, "Experiment config file (key = value)");
    app.add_option("--out-dir", g.out_dir, "Directory for report files")->capture_default_str();
    app.add_option("--format", g.format, "Output format for stdout")
        ->check(CLI::IsMember({"json", "csv"}))
        ->capture_default_str();
    app.add_option("--threads", g.threads, "Worker threads, 0 = hardware concurrency")->capture_default_str();

    std::string file;
    std::optional<double> pressure_hpa, r_hydro;

    auto* esr = app.add_subcommand("esr-fit", "Fit a two-dip ESR spectrum CSV");
    esr->add_option("file", file, "ESR CSV")->required();
    auto* psd = app.add_subcommand("psd-fit", "Fit a motional PSD CSV");
    psd->add_option("file", file, "PSD CSV")->required();
    psd->add_option("--pressure-hpa", pressure_hpa, "Gas pressure, enables the radius estimate");
    auto* cal = app.add_subcommand("calibrate", "Fit the temperature-scaling calibration");
    cal->add_option("table", file, "Calibration CSV")->required();
    auto* heat = app.add_subcommand("heating-fit", "Fit beta_heat and D_strain from a heating table");
    heat->add_option("table", file, "Heating CSV")->required();
    heat->add_option("--r-hydro-m", r_hydro, "Hydrodynamic radius, enables the cross-section estimate");
    auto* particle = app.add_subcommand("particle", "Analyze one particle from a config listing its data files");
    particle->add_option("config", file, "Particle config")->required();
    auto* ensemble = app.add_subcommand("ensemble", "Synthesize and analyze a particle ensemble");
    ensemble->add_option("config", file, "Experiment config");
    auto* synth = app.add_subcommand("synth", "Write synthetic data for one particle");
    synth->add_option("config", file, "Experiment config");
    auto* sens = app.add_subcommand("sensitivity", "Shot-noise temperature sensitivity");
    sens->add_option("params", file, "Config with esr_* and sensitivity_slope_hz_k keys");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << e.what() << "\n\n" << app.help();
        return 2;
    }

    try {
        Json result;
        if (*esr) result = cmd_esr_fit(g, file);
        else if (*psd) result = cmd_psd_fit(g, file, pressure_hpa);
        else if (*cal) result = cmd_calibrate(g, file);
        else if (*heat) result = cmd_heating_fit(g, file, r_hydro);
        else if (*particle) result = cmd_particle(g, file);
        else if (*ensemble) result = cmd_ensemble(g, file);
        else if (*synth) result = cmd_synth(g, file);
        else if (*sens) result = cmd_sensitivity(g, file);
        emit(result, g, out);
        return 0;
    } catch (...) {
        err << error_json(std::current_exception()).dump() << "\n";
        return 1;
    }
}

}  // namespace nvtherm::cli
