#include "nvtherm/io.hpp"

#include "nvtherm/config.hpp"
#include "nvtherm/errors.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <system_error>

namespace nvtherm::pipeline {

namespace {

struct Cell {
    std::string_view text;
    std::size_t column;
};

struct Row {
    std::size_t line;
    std::vector<Cell> cells;
};

struct CsvDocument {
    std::vector<std::pair<std::size_t, std::string_view>> comments;  // line, text after '#'
    std::size_t header_line = 0;
    std::size_t columns = 0;
    std::vector<Row> rows;
};

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::vector<Cell> split_cells(std::string_view line) {
    std::vector<Cell> cells;
    std::size_t pos = 0;
    while (true) {
        const auto comma = std::min(line.find(',', pos), line.size());
        const auto raw = line.substr(pos, comma - pos);
        const auto lead = raw.find_first_not_of(" \t");
        cells.push_back({trim(raw), pos + 1 + (lead == std::string_view::npos ? 0 : lead)});
        if (comma == line.size()) break;
        pos = comma + 1;
    }
    return cells;
}

std::string join(const std::vector<std::string_view>& names, std::size_t n) {
    std::string out;
    for (std::size_t i = 0; i < n; ++i) {
        if (i) out += ',';
        out += names[i];
    }
    return out;
}

// `header` lists all columns; the last `optional_tail` of them may be omitted as a group.
CsvDocument read_csv(std::string_view text, const std::string& source, const std::vector<std::string_view>& header,
                     std::size_t optional_tail = 0) {
    CsvDocument doc;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const auto nl = std::min(text.find('\n', pos), text.size());
        const auto line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        const auto body = trim(line);
        if (body.empty()) continue;
        if (body.front() == '#') {
            doc.comments.emplace_back(line_no, body.substr(1));
            continue;
        }
        auto cells = split_cells(line);
        if (doc.header_line == 0) {
            const std::size_t full = header.size();
            const std::size_t minimal = full - optional_tail;
            bool ok = cells.size() == full || cells.size() == minimal;
            for (std::size_t i = 0; ok && i < cells.size(); ++i) ok = cells[i].text == header[i];
            if (!ok) {
                std::string expected = "'" + join(header, minimal) + "'";
                if (optional_tail) expected += " or '" + join(header, full) + "'";
                throw ParseError(source, line_no, 1, "malformed header; expected " + expected);
            }
            doc.header_line = line_no;
            doc.columns = cells.size();
            continue;
        }
        if (cells.size() != doc.columns) {
            const std::size_t col = cells.size() > doc.columns ? cells[doc.columns].column : line.size() + 1;
            throw ParseError(source, line_no, col,
                             "expected " + std::to_string(doc.columns) + " fields, found " + std::to_string(cells.size()));
        }
        doc.rows.push_back({line_no, std::move(cells)});
    }
    if (doc.header_line == 0) {
        throw ParseError(source, line_no == 0 ? 1 : line_no, 1, "missing header '" + join(header, header.size() - optional_tail) + "'");
    }
    return doc;
}

double number(const Row& row, std::size_t i, const std::string& source) {
    const auto& cell = row.cells[i];
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(cell.text.data(), cell.text.data() + cell.text.size(), v);
    if (cell.text.empty() || ec != std::errc{} || ptr != cell.text.data() + cell.text.size() || !std::isfinite(v)) {
        throw ParseError(source, row.line, cell.column, "expected a finite number, got '" + std::string(cell.text) + "'");
    }
    return v;
}

double positive(const Row& row, std::size_t i, const std::string& source, const char* what) {
    const double v = number(row, i, source);
    if (!(v > 0.0)) throw ParseError(source, row.line, row.cells[i].column, std::string(what) + " must be positive");
    return v;
}

double non_negative(const Row& row, std::size_t i, const std::string& source, const char* what) {
    const double v = number(row, i, source);
    if (v < 0.0) throw ParseError(source, row.line, row.cells[i].column, std::string(what) + " must be non-negative");
    return v;
}

void check_increasing(const std::vector<double>& f, const Row& row, const std::string& source) {
    if (f.size() >= 2 && !(f.back() > f[f.size() - 2])) {
        throw ParseError(source, row.line, row.cells[0].column, "frequencies must be strictly increasing");
    }
}

std::uint64_t count_value(const Row& row, std::size_t i, const std::string& source) {
    const auto& cell = row.cells[i];
    if (!cell.text.empty() && cell.text.front() == '-') {
        throw ParseError(source, row.line, cell.column, "negative counts");
    }
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(cell.text.data(), cell.text.data() + cell.text.size(), v);
    if (cell.text.empty() || ec != std::errc{} || ptr != cell.text.data() + cell.text.size()) {
        throw ParseError(source, row.line, cell.column, "expected a non-negative integer count, got '" + std::string(cell.text) + "'");
    }
    return v;
}

}  // namespace

spectral::EsrSpectrum parse_esr(std::string_view text, const std::string& source) {
    const auto doc = read_csv(text, source, {"frequency_hz", "counts"});
    spectral::EsrSpectrum s;
    bool have_dwell = false;
    for (const auto& [line, body] : doc.comments) {
        const auto eq = body.find('=');
        if (eq == std::string_view::npos || trim(body.substr(0, eq)) != "dwell_s") continue;
        const auto value = trim(body.substr(eq + 1));
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
        if (value.empty() || ec != std::errc{} || ptr != value.data() + value.size() || !(v > 0.0) || !std::isfinite(v)) {
            throw ParseError(source, line, 1, "dwell_s must be a positive number");
        }
        s.dwell_per_point = v;
        have_dwell = true;
    }
    if (!have_dwell) throw ParseError(source, doc.header_line, 1, "missing '# dwell_s=<seconds>' metadata line");
    for (const auto& row : doc.rows) {
        s.frequencies.push_back(positive(row, 0, source, "frequency"));
        check_increasing(s.frequencies, row, source);
        s.counts.push_back(count_value(row, 1, source));
    }
    return s;
}

spectral::MotionPsd parse_psd(std::string_view text, const std::string& source) {
    const auto doc = read_csv(text, source, {"frequency_hz", "psd_m2_per_hz"});
    spectral::MotionPsd psd;
    for (const auto& row : doc.rows) {
        psd.frequencies.push_back(positive(row, 0, source, "frequency"));
        check_increasing(psd.frequencies, row, source);
        psd.psd_values.push_back(non_negative(row, 1, source, "PSD value"));
    }
    return psd;
}

std::vector<estimation::HeatingPoint> parse_heating_table(std::string_view text, const std::string& source) {
    const auto doc = read_csv(text, source, {"intensity_w_m2", "pressure_pa", "d_hz", "sigma_d_hz"});
    std::vector<estimation::HeatingPoint> out;
    for (const auto& row : doc.rows) {
        out.push_back({non_negative(row, 0, source, "intensity"), positive(row, 1, source, "pressure"),
                       positive(row, 2, source, "D"), non_negative(row, 3, source, "sigma_d")});
    }
    return out;
}

std::vector<estimation::CalibrationPair> parse_calibration_table(std::string_view text, const std::string& source) {
    const auto doc = read_csv(text, source, {"t_set_k", "d_hz"});
    std::vector<estimation::CalibrationPair> out;
    for (const auto& row : doc.rows) {
        out.push_back({positive(row, 0, source, "temperature"), positive(row, 1, source, "D")});
    }
    return out;
}

std::vector<EnsembleRecord> parse_ensemble(std::string_view text, const std::string& source) {
    const auto doc = read_csv(
        text, source,
        {"particle_id", "beta_heat", "r_hydro_m", "sigma_abs_m2", "beta_uncertainty", "sigma_abs_uncertainty_m2"}, 2);
    std::vector<EnsembleRecord> out;
    for (const auto& row : doc.rows) {
        EnsembleRecord r;
        const auto& id = row.cells[0];
        const auto [ptr, ec] = std::from_chars(id.text.data(), id.text.data() + id.text.size(), r.particle_id);
        if (id.text.empty() || ec != std::errc{} || ptr != id.text.data() + id.text.size()) {
            throw ParseError(source, row.line, id.column, "expected an integer particle_id, got '" + std::string(id.text) + "'");
        }
        r.beta_heat = positive(row, 1, source, "beta_heat");
        r.r_hydro = positive(row, 2, source, "r_hydro_m");
        r.sigma_abs = positive(row, 3, source, "sigma_abs_m2");
        if (doc.columns == 6) {
            r.beta_uncertainty = non_negative(row, 4, source, "beta_uncertainty");
            r.sigma_abs_uncertainty = non_negative(row, 5, source, "sigma_abs_uncertainty_m2");
        }
        out.push_back(r);
    }
    return out;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

spectral::EsrSpectrum ingest_esr(const std::filesystem::path& path) { return parse_esr(read_file(path), path.string()); }
spectral::MotionPsd ingest_psd(const std::filesystem::path& path) { return parse_psd(read_file(path), path.string()); }
std::vector<estimation::HeatingPoint> ingest_heating_table(const std::filesystem::path& path) {
    return parse_heating_table(read_file(path), path.string());
}
std::vector<estimation::CalibrationPair> ingest_calibration_table(const std::filesystem::path& path) {
    return parse_calibration_table(read_file(path), path.string());
}
std::vector<EnsembleRecord> ingest_ensemble(const std::filesystem::path& path) {
    return parse_ensemble(read_file(path), path.string());
}

std::string format_esr(const spectral::EsrSpectrum& spectrum) {
    std::string out = "# dwell_s=" + format_double(spectrum.dwell_per_point) + "\nfrequency_hz,counts\n";
    for (std::size_t i = 0; i < spectrum.size(); ++i) {
        out += format_double(spectrum.frequencies[i]) + "," + std::to_string(spectrum.counts[i]) + "\n";
    }
    return out;
}

std::string format_psd(const spectral::MotionPsd& psd) {
    std::string out = "frequency_hz,psd_m2_per_hz\n";
    for (std::size_t i = 0; i < psd.frequencies.size(); ++i) {
        out += format_double(psd.frequencies[i]) + "," + format_double(psd.psd_values[i]) + "\n";
    }
    return out;
}

std::string format_heating_table(const std::vector<estimation::HeatingPoint>& points) {
    std::string out = "intensity_w_m2,pressure_pa,d_hz,sigma_d_hz\n";
    for (const auto& p : points) {
        out += format_double(p.intensity) + "," + format_double(p.pressure) + "," + format_double(p.d_measured) + "," +
               format_double(p.sigma_d) + "\n";
    }
    return out;
}

std::string format_calibration_table(const std::vector<estimation::CalibrationPair>& pairs) {
    std::string out = "t_set_k,d_hz\n";
    for (const auto& p : pairs) out += format_double(p.t_set) + "," + format_double(p.d_measured) + "\n";
    return out;
}

std::string format_ensemble(const std::vector<EnsembleRecord>& records) {
    std::string out = "particle_id,beta_heat,r_hydro_m,sigma_abs_m2,beta_uncertainty,sigma_abs_uncertainty_m2\n";
    for (const auto& r : records) {
        out += std::to_string(r.particle_id) + "," + format_double(r.beta_heat) + "," + format_double(r.r_hydro) + "," +
               format_double(r.sigma_abs) + "," + format_double(r.beta_uncertainty) + "," +
               format_double(r.sigma_abs_uncertainty) + "\n";
    }
    return out;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) {
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw std::runtime_error("short write to '" + tmp.string() + "'");
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw std::runtime_error("cannot rename into '" + path.string() + "'");
    }
}

}  // namespace nvtherm::pipeline
