#include "nvtherm/cli.hpp"
#include "nvtherm/config.hpp"
#include "nvtherm/errors.hpp"
#include "nvtherm/fits.hpp"
#include "nvtherm/physics.hpp"
#include "nvtherm/pipeline.hpp"
#include "nvtherm/spectral.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

namespace py = pybind11;
using namespace nvtherm;

namespace {

pipeline::ExperimentConfig config_from_text(const std::string& text, std::optional<std::uint64_t> seed) {
    auto cfg = pipeline::parse_config(text, "<python>");
    if (seed) cfg.seed = *seed;
    return cfg;
}

py::dict esr_fit_dict(const spectral::EsrFit& f) {
    py::dict d;
    d["d_hz"] = f.params.d_center;
    d["sigma_d_hz"] = f.sigma_d;
    d["e_split_hz"] = f.params.e_split;
    d["contrast_minus"] = f.params.contrast_minus;
    d["contrast_plus"] = f.params.contrast_plus;
    d["width_minus_hz"] = f.params.width_minus;
    d["width_plus_hz"] = f.params.width_plus;
    d["base_rate_per_s"] = f.params.base_rate;
    d["degenerate"] = f.degenerate;
    d["chi_square"] = f.chi_square;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "NV nanodiamond thermometry and absorption analysis";

    py::register_exception<FitFailure>(m, "FitFailure", PyExc_RuntimeError);
    py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
    py::register_exception<PipelineError>(m, "PipelineError", PyExc_RuntimeError);

    py::class_<physics::GasConditions>(m, "GasConditions")
        .def(py::init<>())
        .def_readwrite("t0", &physics::GasConditions::t0)
        .def_readwrite("c_bar", &physics::GasConditions::c_bar)
        .def_readwrite("gamma", &physics::GasConditions::gamma)
        .def_readwrite("alpha_acc", &physics::GasConditions::alpha_acc)
        .def_readwrite("p_gas", &physics::GasConditions::p_gas)
        .def_readwrite("molar_mass", &physics::GasConditions::molar_mass);

    m.def("eval_zfs", [](double t, double d_strain) { return physics::eval_zfs(physics::ZfsPolynomial::toyli(d_strain), t); },
          py::arg("temperature"), py::arg("d_strain") = 0.0);
    m.def("zfs_slope", [](double t) { return physics::zfs_slope(physics::ZfsPolynomial::toyli(), t); }, py::arg("temperature"));
    m.def("invert_zfs", [](double d, double d_strain) { return physics::invert_zfs(physics::ZfsPolynomial::toyli(d_strain), d); },
          py::arg("d_hz"), py::arg("d_strain") = 0.0);

    m.def(
        "beta_from_sigma",
        [](double sigma, double r, const physics::GasConditions& gas, double density) {
            return physics::beta_from_sigma(sigma, {r, density}, gas);
        },
        py::arg("sigma_abs"), py::arg("r_hydro"), py::arg("gas") = physics::GasConditions{}, py::arg("density") = 3500.0);
    m.def("sigma_from_beta_radius", &physics::sigma_from_beta_radius, py::arg("beta_heat"), py::arg("r_hydro"),
          py::arg("gas") = physics::GasConditions{});
    m.def("damping_rate", &physics::damping_rate, py::arg("r"), py::arg("gas") = physics::GasConditions{},
          py::arg("density") = 3500.0);
    m.def("radius_from_damping", &physics::radius_from_damping, py::arg("gamma"), py::arg("gas") = physics::GasConditions{},
          py::arg("density") = 3500.0);
    m.def(
        "bulk_absorption_coefficient",
        [](double eps_real, double eps_imag, double wavelength) {
            return physics::bulk_absorption_coefficient({eps_real, eps_imag}, wavelength);
        },
        py::arg("eps_real"), py::arg("eps_imag"), py::arg("wavelength") = 1550e-9);
    m.def(
        "esr_sensitivity",
        [](double linewidth, double contrast, double count_rate, double dwell, double slope) {
            const auto r = physics::esr_sensitivity({linewidth, contrast, count_rate, dwell}, slope);
            return std::make_tuple(r.sensitivity, r.resolution);
        },
        py::arg("linewidth") = 10e6, py::arg("contrast") = 0.07, py::arg("count_rate") = 2e5, py::arg("dwell") = 1.5,
        py::arg("slope") = -74e3);

    m.def(
        "synthesize_esr",
        [](double d_center, const std::vector<double>& scan, double dwell, std::uint64_t seed, double e_split) {
            spectral::EsrLineParams p;
            p.d_center = d_center;
            p.e_split = e_split;
            const auto s = spectral::synthesize_esr(p, scan, dwell, seed);
            return s.counts;
        },
        py::arg("d_center"), py::arg("scan"), py::arg("dwell") = 1.5, py::arg("seed") = 1, py::arg("e_split") = 5e6);
    m.def(
        "fit_esr",
        [](const std::vector<double>& f, const std::vector<std::uint64_t>& counts, double dwell) {
            spectral::EsrSpectrum s{f, counts, dwell};
            return esr_fit_dict(spectral::fit_esr(s));
        },
        py::arg("frequencies"), py::arg("counts"), py::arg("dwell"));

    m.def(
        "fit_heating",
        [](const std::vector<std::tuple<double, double, double, double>>& rows, double t0) {
            std::vector<estimation::HeatingPoint> pts;
            for (const auto& [i, p, d, s] : rows) pts.push_back({i, p, d, s});
            physics::GasConditions gas;
            gas.t0 = t0;
            const auto f = estimation::fit_heating(pts, physics::ZfsPolynomial::toyli(), gas);
            py::dict d;
            d["beta_heat"] = f.beta_heat;
            d["beta_uncertainty"] = f.beta_sigma();
            d["d_strain_hz"] = f.d_strain;
            d["d_strain_uncertainty_hz"] = f.d_strain_sigma();
            d["fitted_temperatures_k"] = f.fitted_temperatures;
            return d;
        },
        py::arg("rows"), py::arg("t0") = 294.0);

    m.def(
        "fit_power_law",
        [](const std::vector<double>& r, const std::vector<double>& sigma, std::optional<double> exponent) {
            if (r.size() != sigma.size()) throw std::invalid_argument("r and sigma must have equal length");
            std::vector<estimation::PowerLawRecord> recs;
            for (std::size_t i = 0; i < r.size(); ++i) recs.push_back({r[i], sigma[i]});
            const auto f = estimation::fit_power_law(
                recs, exponent ? estimation::ExponentMode::fixed : estimation::ExponentMode::free, exponent);
            py::dict d;
            d["amplitude"] = f.amplitude;
            d["exponent"] = f.exponent;
            d["exponent_uncertainty"] = f.exponent_sigma;
            d["residual_sum"] = f.residual_sum;
            d["sigma_log"] = f.sigma_log;
            d["a_minus"] = f.a_minus;
            d["a_plus"] = f.a_plus;
            return d;
        },
        py::arg("r_hydro"), py::arg("sigma_abs"), py::arg("exponent") = std::nullopt);

    m.def(
        "_ensemble_report_json",
        [](const std::string& config_text, std::optional<std::uint64_t> seed, unsigned threads) {
            const auto cfg = config_from_text(config_text, seed);
            pipeline::EnsembleResult res;
            {
                py::gil_scoped_release release;
                res = pipeline::run_ensemble(cfg, threads);
            }
            return pipeline::dump_json(pipeline::ensemble_report(cfg, res));
        },
        py::arg("config_text") = "", py::arg("seed") = std::nullopt, py::arg("threads") = 0);

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::vector<std::string> full{"nvtherm"};
            full.insert(full.end(), args.begin(), args.end());
            std::vector<const char*> argv;
            for (const auto& a : full) argv.push_back(a.c_str());
            std::ostringstream out, err;
            const int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
            return std::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"));
}
