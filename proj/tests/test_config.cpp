#include "nvtherm/config.hpp"
#include "nvtherm/errors.hpp"

#include <doctest.h>

#include <stdexcept>
#include <string>

using namespace nvtherm;
using namespace nvtherm::pipeline;

TEST_CASE("empty config resolves to defaults") {
    const auto cfg = parse_config("");
    CHECK(cfg.t0 == 294.0);
    CHECK(cfg.wavelength == 1550e-9);
    CHECK(cfg.eps_real == 5.7);
    CHECK(cfg.particle_count == 46);
    CHECK(cfg.radius_min == 40e-9);
    CHECK(cfg.radius_max == 160e-9);
    CHECK(cfg.a_h == 4.0e3);
    CHECK(cfg.sigma_log == 1.27);
    CHECK(cfg.zfs_a0 == 2.8697e9);
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("values, comments and lists") {
    const auto cfg = parse_config(
        "# header comment\n"
        "seed = 42\n"
        "t0_k = 300   # trailing comment\n"
        "synth_noise = false\n"
        "synth_intensities_w_m2 = 1e9, 2e9 ,3e9\n"
        "\n");
    CHECK(cfg.seed == 42);
    CHECK(cfg.t0 == 300.0);
    CHECK_FALSE(cfg.synth_noise);
    REQUIRE(cfg.synth_intensities.size() == 3);
    CHECK(cfg.synth_intensities[2] == 3e9);
}

TEST_CASE("unknown key reports line and column") {
    try {
        parse_config("seed = 1\n  bogus_key = 3\n", "exp.cfg");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.source() == "exp.cfg");
        CHECK(e.line() == 2);
        CHECK(e.column() == 3);
        CHECK(e.detail().find("unknown key") != std::string::npos);
    }
}

TEST_CASE("malformed values point at the value") {
    try {
        parse_config("t0_k = warm\n");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 1);
        CHECK(e.column() == 8);
    }
    try {
        parse_config("synth_pressures_hpa = 20, x\n");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.column() == 27);
    }
    CHECK_THROWS_AS(parse_config("particle_count = 4.5\n"), ParseError);
    CHECK_THROWS_AS(parse_config("synth_noise = maybe\n"), ParseError);
    CHECK_THROWS_AS(parse_config("no equals sign\n"), ParseError);
    CHECK_THROWS_AS(parse_config("seed = 1\nseed = 2\n"), ParseError);
}

TEST_CASE("condition and psd entries") {
    const auto cfg = parse_config(
        "condition = 1e10 30 esr_a.csv\n"
        "condition = 2e10 30 /abs/esr_b.csv\n"
        "psd = 15 psd.csv\n");
    REQUIRE(cfg.conditions.size() == 2);
    CHECK(cfg.conditions[0].intensity == 1e10);
    CHECK(cfg.conditions[0].pressure_hpa == 30.0);
    CHECK(cfg.conditions[1].esr_path == "/abs/esr_b.csv");
    REQUIRE(cfg.psd);
    CHECK(cfg.psd->path == "psd.csv");

    auto with_base = cfg;
    with_base.base_dir = "/data/run1";
    CHECK(with_base.resolve("esr_a.csv") == std::filesystem::path("/data/run1/esr_a.csv"));
    CHECK(with_base.resolve("/abs/esr_b.csv") == std::filesystem::path("/abs/esr_b.csv"));

    CHECK_THROWS_AS(parse_config("condition = 1e10 esr.csv\n"), ParseError);
    CHECK_THROWS_AS(parse_config("psd = 15 a.csv\npsd = 15 b.csv\n"), ParseError);
}

TEST_CASE("format then parse is the identity") {
    auto cfg = parse_config("seed = 9\nsigma_log = 0.3\nesr_dwell_s = 0.1\nsynth_pressures_hpa = 17.5, 33.25\n");
    cfg.conditions.push_back({1.25e10, 20.0, "esr_00.csv"});
    cfg.psd = PsdSpec{15.0, "psd.csv"};
    const auto text = format_config(cfg);
    const auto back = parse_config(text);
    CHECK(format_config(back) == text);
    CHECK(back.sigma_log == 0.3);
    CHECK(back.synth_pressures_hpa[1] == 33.25);
    CHECK(config_to_json(back) == config_to_json(cfg));
}

TEST_CASE("json echo lists every field") {
    const auto j = config_to_json(ExperimentConfig{});
    CHECK(j.at("wavelength_m") == 1550e-9);
    CHECK(j.at("particle_count") == 46);
    CHECK(j.contains("fit_max_iterations"));
    CHECK_FALSE(j.contains("conditions"));
}

TEST_CASE("validation") {
    ExperimentConfig cfg;
    cfg.synth_pressures_hpa = {10.0};
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.radius_max = cfg.radius_min;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.synth_target_temperature = 600.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.alpha_acc = 1.5;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
