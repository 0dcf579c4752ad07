#include "nvtherm/config.hpp"

#include "nvtherm/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <system_error>

namespace nvtherm::pipeline {

namespace {

// Thrown by value parsers; offset is relative to the start of the value text.
struct ValueError {
    std::size_t offset;
    std::string what;
};

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

double parse_double(std::string_view s, std::size_t offset = 0) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) {
        throw ValueError{offset, "expected a number, got '" + std::string(s) + "'"};
    }
    return v;
}

template <class Int>
Int parse_integer(std::string_view s) {
    Int v{};
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) {
        throw ValueError{0, "expected an integer, got '" + std::string(s) + "'"};
    }
    return v;
}

bool parse_bool(std::string_view s) {
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ValueError{0, "expected true or false, got '" + std::string(s) + "'"};
}

std::vector<double> parse_list(std::string_view s) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        const auto comma = std::min(s.find(',', pos), s.size());
        const auto raw = s.substr(pos, comma - pos);
        const auto item = trim(raw);
        const auto lead = raw.find_first_not_of(" \t");
        out.push_back(parse_double(item, pos + (lead == std::string_view::npos ? 0 : lead)));
        pos = comma + 1;
    }
    return out;
}

void parse_into(double& dst, std::string_view v) { dst = parse_double(v); }
void parse_into(int& dst, std::string_view v) { dst = parse_integer<int>(v); }
void parse_into(std::uint64_t& dst, std::string_view v) { dst = parse_integer<std::uint64_t>(v); }
void parse_into(bool& dst, std::string_view v) { dst = parse_bool(v); }
void parse_into(std::vector<double>& dst, std::string_view v) { dst = parse_list(v); }

std::string format_value(double v) { return format_double(v); }
std::string format_value(int v) { return std::to_string(v); }
std::string format_value(std::uint64_t v) { return std::to_string(v); }
std::string format_value(bool v) { return v ? "true" : "false"; }
std::string format_value(const std::vector<double>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ", ";
        out += format_double(v[i]);
    }
    return out;
}

struct Field {
    std::string_view key;
    std::function<void(ExperimentConfig&, std::string_view)> parse;
    std::function<std::string(const ExperimentConfig&)> format;
    std::function<void(const ExperimentConfig&, Json&)> to_json;
};

template <class T>
Field field(std::string_view key, T ExperimentConfig::*member) {
    return Field{key, [member](ExperimentConfig& c, std::string_view v) { parse_into(c.*member, v); },
                 [member](const ExperimentConfig& c) { return format_value(c.*member); },
                 [key, member](const ExperimentConfig& c, Json& j) { j[std::string(key)] = c.*member; }};
}

const std::vector<Field>& fields() {
    using C = ExperimentConfig;
    static const std::vector<Field> table{
        field("t0_k", &C::t0),
        field("c_bar_m_s", &C::c_bar),
        field("gamma_ratio", &C::gamma_ratio),
        field("alpha_acc", &C::alpha_acc),
        field("density_kg_m3", &C::density),
        field("molar_mass_kg_mol", &C::molar_mass),
        field("wavelength_m", &C::wavelength),
        field("eps_real", &C::eps_real),
        field("zfs_a0_hz", &C::zfs_a0),
        field("zfs_a1_hz_k", &C::zfs_a1),
        field("zfs_a2_hz_k2", &C::zfs_a2),
        field("zfs_a3_hz_k3", &C::zfs_a3),
        field("seed", &C::seed),
        field("particle_count", &C::particle_count),
        field("radius_min_m", &C::radius_min),
        field("radius_max_m", &C::radius_max),
        field("a_h_per_m", &C::a_h),
        field("sigma_log", &C::sigma_log),
        field("particle_sigma_abs_m2", &C::particle_sigma_abs),
        field("particle_r_hydro_m", &C::particle_r_hydro),
        field("synth_d_strain_hz", &C::synth_d_strain),
        field("synth_noise", &C::synth_noise),
        field("synth_intensities_w_m2", &C::synth_intensities),
        field("synth_pressures_hpa", &C::synth_pressures_hpa),
        field("synth_rescale_intensity", &C::synth_rescale_intensity),
        field("synth_target_temperature_k", &C::synth_target_temperature),
        field("guard_max_temperature_k", &C::guard_max_temperature),
        field("guard_min_pressure_hpa", &C::guard_min_pressure_hpa),
        field("esr_span_hz", &C::esr_span),
        field("esr_points", &C::esr_points),
        field("esr_dwell_s", &C::esr_dwell),
        field("esr_contrast", &C::esr_contrast),
        field("esr_linewidth_hz", &C::esr_linewidth),
        field("esr_count_rate", &C::esr_count_rate),
        field("esr_e_split_hz", &C::esr_e_split),
        field("sensitivity_slope_hz_k", &C::sensitivity_slope),
        field("psd_trap_frequency_hz", &C::psd_trap_frequency),
        field("psd_pressure_hpa", &C::psd_pressure_hpa),
        field("psd_f_min_hz", &C::psd_f_min),
        field("psd_f_max_hz", &C::psd_f_max),
        field("psd_points", &C::psd_points),
        field("psd_averages", &C::psd_averages),
        field("fit_max_iterations", &C::fit_max_iterations),
        field("fit_step_tol", &C::fit_step_tol),
        field("fit_gradient_tol", &C::fit_gradient_tol),
        field("fit_cost_tol", &C::fit_cost_tol),
        field("hist_bins", &C::hist_bins),
    };
    return table;
}

// "<number> <number> <path>" or "<number> <path>"; whitespace separated.
std::vector<std::pair<std::string_view, std::size_t>> split_words(std::string_view s) {
    std::vector<std::pair<std::string_view, std::size_t>> out;
    std::size_t pos = 0;
    while (pos < s.size()) {
        const auto start = s.find_first_not_of(" \t", pos);
        if (start == std::string_view::npos) break;
        const auto end = std::min(s.find_first_of(" \t", start), s.size());
        out.emplace_back(s.substr(start, end - start), start);
        pos = end;
    }
    return out;
}

void require(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("config: ") + what);
}

}  // namespace

std::string format_double(double value) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, ptr);
}

void ExperimentConfig::validate() const {
    require(t0 > 0.0 && c_bar > 0.0 && gamma_ratio > 1.0, "gas constants must be positive (gamma_ratio > 1)");
    require(alpha_acc > 0.0 && alpha_acc <= 1.0, "alpha_acc must lie in (0, 1]");
    require(density > 0.0 && molar_mass > 0.0 && wavelength > 0.0, "density, molar mass and wavelength must be positive");
    require(eps_real > 0.0, "eps_real must be positive");
    require(particle_count >= 1, "particle_count must be at least 1");
    require(radius_min > 0.0 && radius_max > radius_min, "radius range must satisfy 0 < min < max");
    require(a_h > 0.0 && sigma_log >= 0.0, "a_h must be positive and sigma_log non-negative");
    require(particle_sigma_abs > 0.0 && particle_r_hydro > 0.0, "particle truth must be positive");
    require(!synth_intensities.empty() && !synth_pressures_hpa.empty(), "synthesis grid must not be empty");
    for (double i : synth_intensities) require(i >= 0.0, "synthesis intensities must be non-negative");
    for (double p : synth_pressures_hpa) {
        require(p >= guard_min_pressure_hpa, "synthesis pressure below the stability guard");
    }
    require(synth_target_temperature > t0 && synth_target_temperature <= guard_max_temperature,
            "target temperature must lie in (t0, guard_max_temperature]");
    require(esr_span > 0.0 && esr_points >= 8 && esr_dwell > 0.0, "ESR scan needs a positive span, 8+ points and dwell");
    require(esr_contrast > 0.0 && esr_contrast < 1.0, "esr_contrast must lie in (0, 1)");
    require(esr_linewidth > 0.0 && esr_count_rate > 0.0 && esr_e_split >= 0.0, "ESR line parameters out of range");
    require(sensitivity_slope != 0.0, "sensitivity_slope_hz_k must be nonzero");
    require(psd_trap_frequency > 0.0 && psd_pressure_hpa > 0.0, "PSD trap frequency and pressure must be positive");
    require(psd_f_min > 0.0 && psd_f_max > psd_f_min && psd_points >= 16, "PSD grid out of range");
    require(psd_averages >= 1, "psd_averages must be at least 1");
    require(fit_max_iterations >= 1, "fit_max_iterations must be at least 1");
    require(fit_step_tol > 0.0 && fit_gradient_tol > 0.0 && fit_cost_tol > 0.0, "fit tolerances must be positive");
    require(hist_bins >= 1, "hist_bins must be at least 1");
    for (const auto& c : conditions) {
        require(c.intensity >= 0.0 && c.pressure_hpa > 0.0, "condition needs intensity >= 0 and pressure > 0");
    }
    if (psd) require(psd->pressure_hpa > 0.0, "psd pressure must be positive");
    zfs();
}

physics::ZfsPolynomial ExperimentConfig::zfs() const { return {zfs_a0, zfs_a1, zfs_a2, zfs_a3}; }

physics::GasConditions ExperimentConfig::gas(double pressure_pa) const {
    physics::GasConditions g;
    g.t0 = t0;
    g.c_bar = c_bar;
    g.gamma = gamma_ratio;
    g.alpha_acc = alpha_acc;
    g.p_gas = pressure_pa;
    g.molar_mass = molar_mass;
    return g;
}

estimation::SolverTolerances ExperimentConfig::tolerances() const {
    estimation::SolverTolerances t;
    t.step = fit_step_tol;
    t.gradient = fit_gradient_tol;
    t.cost = fit_cost_tol;
    t.max_iterations = fit_max_iterations;
    return t;
}

std::filesystem::path ExperimentConfig::resolve(const std::string& path) const {
    const std::filesystem::path p(path);
    return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
}

ExperimentConfig parse_config(std::string_view text, const std::string& source) {
    ExperimentConfig cfg;
    std::vector<std::string_view> seen;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = std::min(text.find('\n', pos), text.size());
        std::string_view line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        if (trim(line).empty()) continue;

        const auto eq = line.find('=');
        const auto key_col = line.find_first_not_of(" \t") + 1;
        if (eq == std::string_view::npos) throw ParseError(source, line_no, key_col, "expected 'key = value'");
        const auto key = trim(line.substr(0, eq));
        const auto raw_value = line.substr(eq + 1);
        const auto value = trim(raw_value);
        const auto lead = raw_value.find_first_not_of(" \t");
        const std::size_t value_col = eq + 2 + (lead == std::string_view::npos ? 0 : lead);

        try {
            if (key == "condition") {
                const auto words = split_words(value);
                if (words.size() != 3) throw ValueError{0, "expected '<intensity_w_m2> <pressure_hpa> <esr_file>'"};
                ConditionSpec c;
                c.intensity = parse_double(words[0].first, words[0].second);
                c.pressure_hpa = parse_double(words[1].first, words[1].second);
                c.esr_path = std::string(words[2].first);
                cfg.conditions.push_back(std::move(c));
                continue;
            }
            if (key == "psd") {
                const auto words = split_words(value);
                if (words.size() != 2) throw ValueError{0, "expected '<pressure_hpa> <psd_file>'"};
                if (cfg.psd) throw ValueError{0, "duplicate key 'psd'"};
                cfg.psd = PsdSpec{parse_double(words[0].first, words[0].second), std::string(words[1].first)};
                continue;
            }
            const auto& table = fields();
            const auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return f.key == key; });
            if (it == table.end()) {
                throw ParseError(source, line_no, key_col, "unknown key '" + std::string(key) + "'");
            }
            if (std::find(seen.begin(), seen.end(), it->key) != seen.end()) {
                throw ParseError(source, line_no, key_col, "duplicate key '" + std::string(key) + "'");
            }
            seen.push_back(it->key);
            it->parse(cfg, value);
        } catch (const ValueError& e) {
            throw ParseError(source, line_no, value_col + e.offset, e.what);
        }
    }
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open config file '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    auto cfg = parse_config(ss.str(), path.string());
    cfg.base_dir = path.parent_path();
    return cfg;
}

std::string format_config(const ExperimentConfig& config) {
    std::string out;
    for (const auto& f : fields()) {
        out += std::string(f.key) + " = " + f.format(config) + "\n";
    }
    for (const auto& c : config.conditions) {
        out += "condition = " + format_double(c.intensity) + " " + format_double(c.pressure_hpa) + " " + c.esr_path +
               "\n";
    }
    if (config.psd) out += "psd = " + format_double(config.psd->pressure_hpa) + " " + config.psd->path + "\n";
    return out;
}

Json config_to_json(const ExperimentConfig& config) {
    Json j = Json::object();
    for (const auto& f : fields()) f.to_json(config, j);
    if (!config.conditions.empty()) {
        Json conds = Json::array();
        for (const auto& c : config.conditions) {
            conds.push_back({{"intensity_w_m2", c.intensity}, {"pressure_hpa", c.pressure_hpa}, {"esr_file", c.esr_path}});
        }
        j["conditions"] = std::move(conds);
    }
    if (config.psd) j["psd"] = {{"pressure_hpa", config.psd->pressure_hpa}, {"file", config.psd->path}};
    return j;
}

}  // namespace nvtherm::pipeline
