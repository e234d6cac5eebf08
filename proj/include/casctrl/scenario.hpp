#pragma once

// Scenario files: versioned JSON describing the cascade, the measurement, the
// initial condition and the run horizon. Every run re-emits the fully
// resolved scenario next to its results so it can be replayed exactly.

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "casctrl/config.hpp"
#include "casctrl/funcalg.hpp"

namespace casctrl {

using nlohmann::json;

namespace detail {

// Sampled data is ingested as a cosine series: coefficients against the
// orthonormal basis mu_k cos(k pi x) by trapezoid on the sample grid.
inline ScalarFn fn_from_samples(const std::vector<double>& samples) {
    const int M = static_cast<int>(samples.size());
    if (M < 3) throw ConfigError("sampled function needs at least 3 points");
    const double dx = 1.0 / (M - 1);
    const int kmax = std::min(64, M / 2);
    ScalarFn f;
    for (int k = 0; k <= kmax; ++k) {
        double acc = 0.0;
        for (int m = 0; m < M; ++m) {
            const double w = (m == 0 || m == M - 1) ? 0.5 : 1.0;
            acc += w * samples[m] * mu_norm(k) * std::cos(k * kPi * m * dx);
        }
        const double coeff = acc * dx;
        if (std::abs(coeff) > 1e-12) f += ScalarFn::cosine(coeff * mu_norm(k), k);
    }
    return f;
}

} // namespace detail

inline ScalarFn parse_fn(const json& j) {
    if (j.is_number()) return ScalarFn::constant(j.get<double>());
    if (!j.is_object()) throw ConfigError("function spec must be an object or number");
    if (j.contains("samples")) return detail::fn_from_samples(j["samples"].get<std::vector<double>>());
    ScalarFn f;
    if (j.contains("poly")) f += ScalarFn::polynomial(j["poly"].get<std::vector<double>>());
    if (j.contains("cos"))
        for (const auto& term : j["cos"])
            f += ScalarFn::cosine(term.at(0).get<double>(), term.at(1).get<int>());
    if (j.contains("sin"))
        for (const auto& term : j["sin"])
            f += ScalarFn::sine(term.at(0).get<double>(), term.at(1).get<int>());
    return f;
}

inline json fn_to_json(const ScalarFn& f) {
    json j = json::object();
    for (const auto& atom : f.trig_atoms) {
        if (atom.freq_index == 0) {
            j["poly"] = atom.cos_coeffs;
        } else {
            for (std::size_t m = 0; m < atom.cos_coeffs.size(); ++m)
                if (atom.cos_coeffs[m] != 0.0) {
                    if (m > 0) throw ConfigError("cannot serialize polynomial-modulated atoms");
                    j["cos"].push_back({atom.cos_coeffs[m], atom.freq_index});
                }
            for (std::size_t m = 0; m < atom.sin_coeffs.size(); ++m)
                if (atom.sin_coeffs[m] != 0.0) {
                    if (m > 0) throw ConfigError("cannot serialize polynomial-modulated atoms");
                    j["sin"].push_back({atom.sin_coeffs[m], atom.freq_index});
                }
        }
    }
    return j;
}

struct Scenario {
    int version = 1;
    CascadeConfig cfg;
    std::vector<ScalarFn> initial_components; // may be empty (zero state)
    double u0 = 0.0;
    double horizon = 0.0; // 0: default 10/delta
    double dt = 0.0;      // 0: auto
    int samples = 401;
    int kmax = 10; // spectrum-table and frame-check range
    std::optional<std::vector<int>> n0_override;
    unsigned long seed = 0;
    std::string out;
    json measurement_json; // kept for resolution output
    json axes;             // sweep axes, optional

    double effective_horizon() const { return horizon > 0.0 ? horizon : 10.0 / cfg.delta; }

    static Scenario parse(const json& j) {
        Scenario sc;
        if (!j.is_object()) throw ConfigError("scenario must be a JSON object");
        sc.version = j.value("version", 1);
        if (sc.version != 1) throw ConfigError("unsupported scenario version");

        if (!j.contains("N") || !j.contains("a") || !j.contains("delta") ||
            !j.contains("regime") || !j.contains("measurement"))
            throw ConfigError("scenario requires N, a, regime, delta, measurement");

        sc.cfg.N = j["N"].get<int>();
        sc.cfg.a = j["a"].get<std::vector<double>>();
        const std::string regime = j["regime"].get<std::string>();
        if (regime == "distinct")
            sc.cfg.regime = Regime::Distinct;
        else if (regime == "identical")
            sc.cfg.regime = Regime::Identical;
        else
            throw ConfigError("regime must be 'distinct' or 'identical'");
        sc.cfg.delta = j["delta"].get<double>();

        const json& m = j["measurement"];
        sc.measurement_json = m;
        const std::string type = m.at("type").get<std::string>();
        if (type == "distributed")
            sc.cfg.measurement = Measurement::distributed(parse_fn(m.at("c")));
        else if (type == "dirichlet")
            sc.cfg.measurement = Measurement::dirichlet(m.at("xi").get<double>());
        else if (type == "neumann")
            sc.cfg.measurement = Measurement::neumann(m.at("xi").get<double>());
        else
            throw ConfigError("measurement type must be distributed|dirichlet|neumann");

        if (j.contains("initial")) {
            const json& ini = j["initial"];
            if (ini.contains("components")) {
                for (const auto& comp : ini["components"])
                    sc.initial_components.push_back(parse_fn(comp));
                if (static_cast<int>(sc.initial_components.size()) != sc.cfg.N)
                    throw ConfigError("initial condition must have N components");
            }
            sc.u0 = ini.value("u0", 0.0);
        }

        sc.horizon = j.value("horizon", 0.0);
        sc.dt = j.value("dt", 0.0);
        sc.samples = j.value("samples", 401);
        sc.kmax = j.value("kmax", 10);
        sc.seed = j.value("seed", 0UL);
        sc.out = j.value("out", std::string{});
        if (j.contains("orders")) sc.n0_override = j["orders"].get<std::vector<int>>();
        if (j.contains("axes")) sc.axes = j["axes"];

        if (sc.samples < 2) throw ConfigError("samples must be >= 2");
        if (sc.kmax < 1) throw ConfigError("kmax must be >= 1");
        sc.cfg.validate();
        return sc;
    }

    static Scenario load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open scenario file: " + path);
        json j;
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw ConfigError(std::string("scenario JSON parse error: ") + e.what());
        }
        return parse(j);
    }

    /// Fully resolved scenario (all defaults materialized).
    json resolved() const {
        json j;
        j["version"] = version;
        j["N"] = cfg.N;
        j["a"] = cfg.a;
        j["regime"] = cfg.regime == Regime::Distinct ? "distinct" : "identical";
        j["delta"] = cfg.delta;
        j["measurement"] = measurement_json;
        json ini;
        ini["u0"] = u0;
        ini["components"] = json::array();
        for (const auto& f : initial_components) ini["components"].push_back(fn_to_json(f));
        j["initial"] = ini;
        j["horizon"] = effective_horizon();
        j["dt"] = dt;
        j["samples"] = samples;
        j["kmax"] = kmax;
        j["seed"] = seed;
        if (n0_override) j["orders"] = *n0_override;
        if (!axes.is_null()) j["axes"] = axes;
        return j;
    }
};

} // namespace casctrl
