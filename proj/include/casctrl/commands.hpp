#pragma once

// Command-level orchestration behind the CLI subcommands: spectrum, synth,
// simulate, sweep. Each command writes its artifacts (plus the fully resolved
// scenario) into an output directory and throws the typed errors that the CLI
// maps onto exit codes 2 (validation), 3 (synthesis), 4 (integration).

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "casctrl/csvio.hpp"
#include "casctrl/modal.hpp"
#include "casctrl/scenario.hpp"
#include "casctrl/simulate.hpp"
#include "casctrl/synthesis.hpp"

namespace casctrl {

namespace fs = std::filesystem;

struct CommandOptions {
    std::string out = "out";
    bool oracle = false;
    int kmax = 0; // 0: use the scenario value
    int workers = 1;
    std::string controller_path; // simulate: reuse a synthesized controller
};

namespace detail {

inline void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open output file: " + path.string());
    out << j.dump(2) << '\n';
}

inline void write_resolved(const Scenario& sc, const fs::path& dir) {
    write_json(dir / "resolved_scenario.json", sc.resolved());
}

inline ModalModel make_model(const Scenario& sc) {
    ModalModel model(sc.cfg);
    if (sc.n0_override) model.set_orders(*sc.n0_override);
    return model;
}

inline InitialCondition make_ic(const Scenario& sc) {
    InitialCondition ic;
    ic.components = sc.initial_components;
    ic.u0 = sc.u0;
    return ic;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Controller persistence.
// ---------------------------------------------------------------------------

inline json controller_to_json(const Controller& ctl, const CascadeConfig& cfg) {
    json j;
    j["regime"] = cfg.regime == Regime::Distinct ? "distinct" : "identical";
    j["N"] = cfg.N;
    j["a"] = cfg.a;
    j["delta"] = ctl.delta;
    j["kappa"] = ctl.kappa;
    j["n0"] = ctl.n0;
    j["n_ext"] = ctl.n_ext;
    j["Kx"] = std::vector<double>(ctl.Kx.data(), ctl.Kx.data() + ctl.Kx.size());
    j["ku"] = ctl.ku;
    j["L"] = std::vector<double>(ctl.L.data(), ctl.L.data() + ctl.L.size());
    return j;
}

inline Controller controller_from_json(const json& j, const CascadeConfig& cfg) {
    if (j.value("N", -1) != cfg.N)
        throw ConfigError("controller file does not match the scenario (N differs)");
    const std::string regime = j.value("regime", "");
    if ((regime == "distinct") != (cfg.regime == Regime::Distinct))
        throw ConfigError("controller file does not match the scenario (regime differs)");
    Controller ctl;
    ctl.delta = j.at("delta").get<double>();
    if (std::abs(ctl.delta - cfg.delta) > 1e-12)
        throw ConfigError("controller file does not match the scenario (delta differs)");
    ctl.kappa = j.at("kappa").get<double>();
    ctl.n0 = j.at("n0").get<std::vector<int>>();
    ctl.n_ext = j.at("n_ext").get<std::vector<int>>();
    const auto kx = j.at("Kx").get<std::vector<double>>();
    ctl.Kx = Eigen::Map<const Eigen::RowVectorXd>(kx.data(), kx.size());
    ctl.ku = j.at("ku").get<double>();
    const auto l = j.at("L").get<std::vector<double>>();
    ctl.L = Eigen::Map<const Eigen::VectorXd>(l.data(), l.size());
    return ctl;
}

inline json certificate_to_json(const Certificate& cert) {
    json j;
    j["pass"] = cert.pass;
    j["theta1_max_eig"] = cert.theta1_max_eig;
    j["epsilon"] = cert.epsilon;
    j["k_tail"] = cert.k_tail;
    j["gamma_m"] = cert.gamma_m;
    j["gamma_M"] = cert.gamma_M;
    json groups = json::array();
    for (std::size_t g = 0; g < cert.gamma.size(); ++g) {
        json row;
        row["eta"] = cert.eta[g];
        row["gamma"] = cert.gamma[g];
        row["S_alpha"] = {{"sum", cert.S_alpha[g].sum}, {"remainder", cert.S_alpha[g].remainder}};
        row["S_beta"] = {{"sum", cert.S_beta[g].sum}, {"remainder", cert.S_beta[g].remainder}};
        row["S_zeta"] = {{"sum", cert.S_zeta[g].sum}, {"remainder", cert.S_zeta[g].remainder}};
        groups.push_back(row);
    }
    j["groups"] = groups;
    return j;
}

// ---------------------------------------------------------------------------
// spectrum: eigenvalues, coefficient tables, biorthogonality residuals.
// ---------------------------------------------------------------------------

inline int run_spectrum(const Scenario& sc, const CommandOptions& opt) {
    const fs::path dir(opt.out);
    fs::create_directories(dir);
    detail::write_resolved(sc, dir);
    const ModalModel model = detail::make_model(sc);
    const int kmax = opt.kmax > 0 ? opt.kmax : sc.kmax;
    const int bs = model.block_size();

    {
        CsvWriter eig(dir / "eigenvalues.csv", {"chain", "k", "lambda"});
        for (int g = 0; g < model.groups(); ++g)
            for (int k = 0; k <= kmax; ++k)
                for (int r = 0; r < bs; ++r)
                    eig.row({double(model.config().regime == Regime::Distinct ? g + 1 : r + 1),
                             double(k), model.lambda_of(g, k)});
    }
    {
        CsvWriter coeff(dir / "coefficients.csv",
                        {"chain", "k", "lambda", "m", "alpha", "beta", "c"});
        for (int g = 0; g < model.groups(); ++g)
            for (int k = 0; k <= kmax; ++k) {
                const Eigen::VectorXd m = model.control_coefficient(g, k);
                const Eigen::VectorXd alpha = model.alpha_block(g, k);
                const Eigen::VectorXd beta = model.beta_block(g, k);
                const Eigen::RowVectorXd c = model.c_block(g, k);
                for (int r = 0; r < bs; ++r)
                    coeff.row({double(model.config().regime == Regime::Distinct ? g + 1 : r + 1),
                               double(k), model.lambda_of(g, k), m(r), alpha(r), beta(r), c(r)});
            }
    }
    if (model.config().regime == Regime::Identical) {
        CsvWriter nu(dir / "nu.csv", {"k", "n", "nu", "c"});
        for (int k = 0; k <= kmax; ++k) {
            const auto& bundle = model.chain_bundle(k);
            for (int n = 1; n <= model.config().N; ++n) {
                std::vector<std::string> row = {std::to_string(k), std::to_string(n)};
                row.push_back(n <= model.config().N - 1 ? format_g17(bundle.sigma.nu_at(n))
                                                        : std::string{});
                row.push_back(format_g17(bundle.tau.c_at(n)));
                nu.row_mixed(row);
            }
        }
    }
    {
        // biorthogonality residual over the table range
        const bool distinct_regime = model.config().regime == Regime::Distinct;
        std::vector<BasisVector> phis, psis;
        for (int g = 0; g < model.groups(); ++g)
            for (int k = 0; k <= kmax; ++k)
                for (int r = 0; r < bs; ++r) {
                    const int i = distinct_regime ? g : r;
                    phis.push_back(model.phi(i, k));
                    psis.push_back(model.psi(i, k));
                }
        double worst = 0.0;
        for (std::size_t rr = 0; rr < phis.size(); ++rr)
            for (std::size_t cc = 0; cc < psis.size(); ++cc) {
                const double target = rr == cc ? 1.0 : 0.0;
                worst = std::max(worst,
                                 std::abs(vector_inner_product(phis[rr], psis[cc]) - target));
            }
        CsvWriter frame(dir / "biorthogonality.csv", {"k_max", "max_residual"});
        frame.row({double(kmax), worst});
    }
    return 0;
}

// ---------------------------------------------------------------------------
// synth: gates, gains, order search, certificate.
// ---------------------------------------------------------------------------

struct SynthArtifacts {
    Controller controller;
    Certificate certificate;
    ModalMatrices matrices;
};

inline SynthArtifacts synthesize(const ModalModel& model) {
    const HautusReport gate = model.hautus_check();
    if (!gate.controllable || !gate.observable)
        throw SynthesisError("synthesis refused: " + gate.describe());

    const ModalMatrices mm0 = model.assemble(model.orders());
    Controller ctl = Controller::design(model, mm0);
    const OrderSearchResult search = search_orders(model, ctl);
    if (!search.found)
        throw SynthesisError("order search hit the cap without a passing certificate; last " +
                             search.last_certificate.summary());
    ctl.n_ext = search.n_ext;
    SynthArtifacts art{std::move(ctl), search.certificate, model.assemble(search.n_ext)};
    return art;
}

inline int run_synth(const Scenario& sc, const CommandOptions& opt) {
    const fs::path dir(opt.out);
    fs::create_directories(dir);
    detail::write_resolved(sc, dir);
    const ModalModel model = detail::make_model(sc);
    const SynthArtifacts art = synthesize(model);

    detail::write_json(dir / "controller.json", controller_to_json(art.controller, sc.cfg));
    detail::write_json(dir / "certificate.json", certificate_to_json(art.certificate));
    CsvWriter cert(dir / "certificate.csv",
                   {"group", "n0", "n_ext", "eta", "S_alpha", "S_beta", "S_zeta", "gamma"});
    for (std::size_t g = 0; g < art.certificate.gamma.size(); ++g)
        cert.row({double(g + 1), double(art.controller.n0[g]), double(art.controller.n_ext[g]),
                  art.certificate.eta[g], art.certificate.S_alpha[g].total(),
                  art.certificate.S_beta[g].total(), art.certificate.S_zeta[g].total(),
                  art.certificate.gamma[g]});
    return 0;
}

// ---------------------------------------------------------------------------
// simulate: spectral run, optional finite-difference oracle comparison.
// ---------------------------------------------------------------------------

inline int run_simulate(const Scenario& sc, const CommandOptions& opt) {
    const fs::path dir(opt.out);
    fs::create_directories(dir);
    detail::write_resolved(sc, dir);
    ModalModel model = detail::make_model(sc);

    Controller ctl;
    Certificate cert;
    ModalMatrices mm;
    if (!opt.controller_path.empty()) {
        std::ifstream in(opt.controller_path);
        if (!in) throw ConfigError("cannot open controller file: " + opt.controller_path);
        json j;
        in >> j;
        ctl = controller_from_json(j, sc.cfg);
        model.set_orders(ctl.n0);
        mm = model.assemble(ctl.n_ext);
        cert = certify(model, mm, ctl);
    } else {
        SynthArtifacts art = synthesize(model);
        ctl = std::move(art.controller);
        cert = std::move(art.certificate);
        mm = std::move(art.matrices);
        detail::write_json(dir / "controller.json", controller_to_json(ctl, sc.cfg));
        detail::write_json(dir / "certificate.json", certificate_to_json(cert));
    }

    const InitialCondition ic = detail::make_ic(sc);
    const double T = sc.effective_horizon();
    const ClosedLoopSim sim(model, mm, ctl, &cert, opt.kmax);
    const Trajectory traj = sim.run(ic, T, sc.dt, sc.samples);

    {
        CsvWriter tr(dir / "trajectory.csv", {"t", "u", "v", "z", "h0_norm", "h1_norm", "V"});
        for (std::size_t s = 0; s < traj.t.size(); ++s)
            tr.row({traj.t[s], traj.u[s], traj.v[s], traj.z[s], traj.h0_norm[s],
                    traj.h1_norm[s], traj.lyapunov[s]});
    }
    json summary;
    summary["fitted_rate"] = traj.fitted_rate;
    summary["fitted_rate_h1"] = traj.fitted_rate_h1;
    summary["rate_target"] = 0.9 * sc.cfg.delta;
    summary["discarded_energy"] = traj.discarded_energy;
    summary["discarded_energy_warning"] =
        traj.discarded_energy > 1e-4 ? "initial data poorly captured; raise --kmax" : "";
    summary["certificate_pass"] = cert.pass;

    if (opt.oracle) {
        const FDOracle fd(model, mm, ctl);
        FDOptions fdopt;
        fdopt.dt = sc.dt;
        const FDTrajectory fdt = fd.run(ic, T, sc.samples, fdopt);
        CsvWriter cmp(dir / "oracle.csv", {"t", "z_spectral", "z_fd", "h0_spectral", "h0_fd"});
        double z_scale = 1e-12, z_sup = 0.0;
        for (std::size_t s = 0; s < traj.t.size(); ++s) {
            cmp.row({traj.t[s], traj.z[s], fdt.z[s], traj.h0_norm[s], fdt.h0_norm[s]});
            z_scale = std::max(z_scale, std::abs(traj.z[s]));
            z_sup = std::max(z_sup, std::abs(traj.z[s] - fdt.z[s]));
        }
        json oracle;
        oracle["M_used"] = fdt.M_used;
        oracle["grid_converged"] = fdt.converged;
        oracle["z_supnorm_rel"] = z_sup / z_scale;
        json probes = json::array();
        for (double frac : {0.1, 0.5, 1.0}) {
            const std::size_t s =
                std::min(traj.t.size() - 1,
                         static_cast<std::size_t>(std::lround(frac * (traj.t.size() - 1))));
            json p;
            p["t"] = traj.t[s];
            p["h0_rel_diff"] =
                std::abs(traj.h0_norm[s] - fdt.h0_norm[s]) / std::max(traj.h0_norm[s], 1e-12);
            probes.push_back(p);
        }
        oracle["h0_probes"] = probes;
        summary["oracle"] = oracle;
    }
    detail::write_json(dir / "summary.json", summary);
    return 0;
}

// ---------------------------------------------------------------------------
// sweep: Cartesian product over declared axes, one directory per cell.
// ---------------------------------------------------------------------------

namespace detail {

inline void apply_axis(Scenario& sc, const std::string& axis, double value) {
    if (axis == "delta") {
        sc.cfg.delta = value;
    } else if (axis == "xi") {
        if (sc.cfg.measurement.type == MeasurementType::Distributed)
            throw ConfigError("xi axis requires a pointwise measurement");
        sc.cfg.measurement.xi = value;
        sc.measurement_json["xi"] = value;
    } else if (axis == "n0") {
        const int groups = sc.cfg.regime == Regime::Distinct ? sc.cfg.N : 1;
        sc.n0_override = std::vector<int>(groups, static_cast<int>(value));
    } else if (axis.size() > 1 && axis[0] == 'a') {
        const int idx = std::stoi(axis.substr(1));
        if (idx < 1 || idx > sc.cfg.N) throw ConfigError("axis " + axis + " out of range");
        sc.cfg.a[idx - 1] = value;
        if (sc.cfg.regime == Regime::Identical)
            for (double& aj : sc.cfg.a) aj = value;
    } else {
        throw ConfigError("unknown sweep axis: " + axis);
    }
}

} // namespace detail

inline int run_sweep(const Scenario& base, const CommandOptions& opt) {
    if (base.axes.is_null() || !base.axes.is_object())
        throw ConfigError("sweep requires an 'axes' object in the scenario");
    std::vector<std::string> names;
    std::vector<std::vector<double>> values;
    for (const auto& [name, vals] : base.axes.items()) {
        names.push_back(name);
        values.push_back(vals.get<std::vector<double>>());
        if (values.back().empty()) throw ConfigError("sweep axis " + name + " is empty");
    }
    std::size_t cells = 1;
    for (const auto& v : values) cells *= v.size();

    const fs::path dir(opt.out);
    fs::create_directories(dir);
    detail::write_resolved(base, dir);

    struct CellResult {
        std::vector<double> coords;
        int status = 0;
        std::string message = "ok";
        double theta1 = 0.0;
        double gamma_worst = 0.0;
        double fitted_rate = 0.0;
        bool cert_pass = false;
    };
    std::vector<CellResult> results(cells);

    auto run_cell = [&](std::size_t cell) {
        CellResult& res = results[cell];
        std::size_t rem = cell;
        std::vector<double> coords(names.size());
        for (std::size_t ax = 0; ax < names.size(); ++ax) {
            coords[ax] = values[ax][rem % values[ax].size()];
            rem /= values[ax].size();
        }
        res.coords = coords;
        std::ostringstream cellname;
        cellname << "cell_" << std::setw(4) << std::setfill('0') << cell;
        CommandOptions cell_opt;
        cell_opt.out = (dir / cellname.str()).string();
        try {
            Scenario sc = base;
            sc.axes = json();
            for (std::size_t ax = 0; ax < names.size(); ++ax)
                detail::apply_axis(sc, names[ax], coords[ax]);
            sc.cfg.validate();

            fs::create_directories(cell_opt.out);
            detail::write_resolved(sc, cell_opt.out);
            const ModalModel model = detail::make_model(sc);
            const SynthArtifacts art = synthesize(model);
            detail::write_json(fs::path(cell_opt.out) / "controller.json",
                               controller_to_json(art.controller, sc.cfg));
            detail::write_json(fs::path(cell_opt.out) / "certificate.json",
                               certificate_to_json(art.certificate));
            res.theta1 = art.certificate.theta1_max_eig;
            res.gamma_worst =
                *std::max_element(art.certificate.gamma.begin(), art.certificate.gamma.end());
            res.cert_pass = art.certificate.pass;

            const ClosedLoopSim sim(model, art.matrices, art.controller, &art.certificate);
            const Trajectory traj =
                sim.run(detail::make_ic(sc), sc.effective_horizon(), sc.dt, sc.samples);
            res.fitted_rate = traj.fitted_rate;
            CsvWriter tr(fs::path(cell_opt.out) / "trajectory.csv",
                         {"t", "u", "v", "z", "h0_norm", "h1_norm", "V"});
            for (std::size_t s = 0; s < traj.t.size(); ++s)
                tr.row({traj.t[s], traj.u[s], traj.v[s], traj.z[s], traj.h0_norm[s],
                        traj.h1_norm[s], traj.lyapunov[s]});
            res.status = 0;
        } catch (const SynthesisError& e) {
            res.status = 3;
            res.message = e.what();
        } catch (const IntegrationError& e) {
            res.status = 4;
            res.message = e.what();
        } catch (const std::exception& e) {
            res.status = 2;
            res.message = e.what();
        }
    };

    const int workers = std::max(1, opt.workers);
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t cell = next.fetch_add(1);
                if (cell >= cells) return;
                run_cell(cell);
            }
        });
    for (auto& th : pool) th.join();

    std::vector<std::string> header = {"cell"};
    for (const auto& n : names) header.push_back(n);
    header.insert(header.end(), {"status", "certificate_pass", "theta1_max", "gamma_worst",
                                 "fitted_rate", "message"});
    CsvWriter summary(dir / "summary.csv", header);
    for (std::size_t cell = 0; cell < cells; ++cell) {
        const auto& res = results[cell];
        std::vector<std::string> row = {std::to_string(cell)};
        for (double c : res.coords) row.push_back(format_g17(c));
        row.push_back(std::to_string(res.status));
        row.push_back(res.cert_pass ? "1" : "0");
        row.push_back(format_g17(res.theta1));
        row.push_back(format_g17(res.gamma_worst));
        row.push_back(format_g17(res.fitted_rate));
        std::string msg = res.message;
        for (char& c : msg)
            if (c == ',' || c == '\n') c = ';';
        row.push_back(msg);
        summary.row_mixed(row);
    }
    return 0;
}

} // namespace casctrl
