#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "casctrl/commands.hpp"
#include "casctrl/scenario.hpp"

using namespace casctrl;
namespace fs = std::filesystem;

namespace {

json base_scenario() {
    return json{{"version", 1},
                {"regime", "distinct"},
                {"N", 2},
                {"a", {1.0, 0.2}},
                {"delta", 0.5},
                {"measurement", {{"type", "distributed"}, {"c", {{"poly", {1.0, 1.0}}}}}},
                {"initial",
                 {{"components", {{{"cos", {{1.0, 1}}}}, {{"poly", {0.5}}}}}, {"u0", 0.0}}},
                {"horizon", 2.0},
                {"samples", 41}};
}

fs::path temp_dir(const std::string& tag) {
    const fs::path dir = fs::temp_directory_path() / ("casctrl_test_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

} // namespace

TEST_CASE("scenario parse and resolution round trip") {
    const Scenario sc = Scenario::parse(base_scenario());
    CHECK(sc.cfg.N == 2);
    CHECK(sc.cfg.regime == Regime::Distinct);
    CHECK(sc.cfg.delta == 0.5);
    CHECK(sc.initial_components.size() == 2);
    CHECK(evaluate(sc.initial_components[1], 0.3) == Catch::Approx(0.5));
    CHECK(sc.effective_horizon() == 2.0);

    const json resolved = Scenario::parse(base_scenario()).resolved();
    CHECK(resolved["horizon"] == 2.0);
    CHECK(resolved["samples"] == 41);
    const Scenario replay = Scenario::parse(resolved);
    CHECK(replay.cfg.a == sc.cfg.a);
}

TEST_CASE("scenario validation failures") {
    json j = base_scenario();
    j["a"] = {0.5, 0.5}; // coincident spectra under regime=distinct
    CHECK_THROWS_AS(Scenario::parse(j), ConfigError);

    json j2 = base_scenario();
    j2.erase("measurement");
    CHECK_THROWS_AS(Scenario::parse(j2), ConfigError);

    json j3 = base_scenario();
    j3["regime"] = "mixed";
    CHECK_THROWS_AS(Scenario::parse(j3), ConfigError);

    json j4 = base_scenario();
    j4["delta"] = -0.5;
    CHECK_THROWS_AS(Scenario::parse(j4), ConfigError);
}

TEST_CASE("sampled initial data ingests as a cosine series") {
    json spec;
    std::vector<double> samples(101);
    for (int m = 0; m <= 100; ++m)
        samples[m] = 0.7 + 0.3 * std::cos(2.0 * kPi * m / 100.0);
    spec["samples"] = samples;
    const ScalarFn f = parse_fn(spec);
    for (double x : {0.0, 0.25, 0.5, 0.9})
        CHECK(evaluate(f, x) ==
              Catch::Approx(0.7 + 0.3 * std::cos(2.0 * kPi * x)).margin(1e-3));
}

TEST_CASE("csv formatting is deterministic and bit-stable") {
    CHECK(format_g17(1.0 / 3.0) == "0.33333333333333331");
    CHECK(format_g17(-0.0) == "-0");
    const double v = 0.1 + 0.2;
    CHECK(std::stod(format_g17(v)) == v);
}

TEST_CASE("spectrum command writes the coefficient tables") {
    const fs::path dir = temp_dir("spectrum");
    Scenario sc = Scenario::parse(base_scenario());
    CommandOptions opt;
    opt.out = dir.string();
    opt.kmax = 4;
    CHECK(run_spectrum(sc, opt) == 0);
    CHECK(fs::exists(dir / "resolved_scenario.json"));
    CHECK(fs::exists(dir / "eigenvalues.csv"));
    CHECK(fs::exists(dir / "coefficients.csv"));
    CHECK(fs::exists(dir / "biorthogonality.csv"));
    // identical run also writes the nu table with nu_0^2 = -1/6
    json j = base_scenario();
    j["regime"] = "identical";
    j["N"] = 4;
    j["a"] = {0.5, 0.5, 0.5, 0.5};
    j.erase("initial");
    const fs::path dir2 = temp_dir("spectrum_identical");
    CommandOptions opt2;
    opt2.out = dir2.string();
    opt2.kmax = 3;
    CHECK(run_spectrum(Scenario::parse(j), opt2) == 0);
    // nu table contains nu_0^2 = -1/6 (row "k=0, n=2")
    std::ifstream nu(dir2 / "nu.csv");
    std::string line;
    bool found = false;
    while (std::getline(nu, line)) {
        if (line.rfind("0,2,", 0) == 0) {
            const auto next = line.find(',', 4);
            CHECK(std::stod(line.substr(4, next - 4)) ==
                  Catch::Approx(-1.0 / 6.0).margin(1e-12));
            found = true;
        }
    }
    CHECK(found);
}

TEST_CASE("synth and simulate commands produce replayable artifacts") {
    const fs::path dir = temp_dir("synth");
    Scenario sc = Scenario::parse(base_scenario());
    CommandOptions opt;
    opt.out = dir.string();
    REQUIRE(run_synth(sc, opt) == 0);
    REQUIRE(fs::exists(dir / "controller.json"));
    REQUIRE(fs::exists(dir / "certificate.json"));
    json cert;
    std::ifstream(dir / "certificate.json") >> cert;
    CHECK(cert["pass"].get<bool>());

    const fs::path dir2 = temp_dir("simulate");
    CommandOptions opt2;
    opt2.out = dir2.string();
    opt2.controller_path = (dir / "controller.json").string();
    REQUIRE(run_simulate(sc, opt2) == 0);
    CHECK(fs::exists(dir2 / "trajectory.csv"));
    CHECK(fs::exists(dir2 / "summary.json"));

    // determinism: identical scenario files produce byte-identical CSVs
    const fs::path dir3 = temp_dir("simulate_repeat");
    CommandOptions opt3;
    opt3.out = dir3.string();
    opt3.controller_path = (dir / "controller.json").string();
    REQUIRE(run_simulate(sc, opt3) == 0);
    CHECK(slurp(dir2 / "trajectory.csv") == slurp(dir3 / "trajectory.csv"));
}

TEST_CASE("synthesis refusal surfaces the offending mode") {
    json j = base_scenario();
    j["measurement"] = {{"type", "dirichlet"}, {"xi", 0.5}};
    j["orders"] = {2, 2};
    Scenario sc = Scenario::parse(j);
    const fs::path dir = temp_dir("refusal");
    CommandOptions opt;
    opt.out = dir.string();
    try {
        run_synth(sc, opt);
        FAIL("expected SynthesisError");
    } catch (const SynthesisError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("(1,1)") != std::string::npos);
    }
}

TEST_CASE("sweep over sensor locations isolates failing cells") {
    json j = base_scenario();
    j["measurement"] = {{"type", "dirichlet"}, {"xi", 0.3}};
    j["orders"] = {2, 2};
    j["horizon"] = 1.0;
    j["samples"] = 21;
    j["axes"] = {{"xi", {0.3, 0.5}}}; // xi = 0.5 kills mode (1,1)
    Scenario sc = Scenario::parse(j);
    const fs::path dir = temp_dir("sweep");
    CommandOptions opt;
    opt.out = dir.string();
    opt.workers = 2;
    CHECK(run_sweep(sc, opt) == 0);
    const std::string summary = slurp(dir / "summary.csv");
    CHECK(summary.find("\n0,") != std::string::npos);
    // one healthy cell, one synthesis refusal (status 3)
    CHECK(summary.find(",3,") != std::string::npos);
    CHECK(fs::exists(dir / "cell_0000" / "resolved_scenario.json"));
}

TEST_CASE("empty axes object degenerates to a single cell") {
    json j = base_scenario();
    j["horizon"] = 1.0;
    j["samples"] = 21;
    j["axes"] = json::object();
    Scenario sc = Scenario::parse(j);
    const fs::path dir = temp_dir("sweep_single");
    CommandOptions opt;
    opt.out = dir.string();
    CHECK(run_sweep(sc, opt) == 0);
    CHECK(fs::exists(dir / "cell_0000" / "trajectory.csv"));
}
