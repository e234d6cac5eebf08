// casctrl: synthesis-and-simulation toolkit for boundary-coupled heat
// equation cascades. Subcommands: spectrum | synth | simulate | sweep.
//
// Exit codes: 0 ok, 2 validation error, 3 synthesis infeasible/unobservable,
// 4 integration failure.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "casctrl/commands.hpp"

namespace {

casctrl::json error_json(int code, const std::string& message) {
    casctrl::json j;
    j["error"] = {{"code", code}, {"message", message}};
    return j;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"spectral controller synthesis and simulation for heat-equation cascades"};
    app.require_subcommand(1);

    std::string scenario_path, out_dir = "out", controller_path;
    bool with_oracle = false;
    int kmax = 0, workers = 1;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--scenario", scenario_path, "scenario JSON file")->required();
        cmd->add_option("--out", out_dir, "output directory");
        cmd->add_option("--kmax", kmax, "frequency-table range override");
    };

    CLI::App* spectrum = app.add_subcommand("spectrum", "eigenstructure and coefficient tables");
    add_common(spectrum);
    CLI::App* synth = app.add_subcommand("synth", "gain design, order search, certificate");
    add_common(synth);
    CLI::App* simulate = app.add_subcommand("simulate", "closed-loop simulation");
    add_common(simulate);
    simulate->add_flag("--oracle", with_oracle, "also run the finite-difference oracle");
    simulate->add_option("--controller", controller_path,
                         "reuse a controller.json from a previous synth run");
    CLI::App* sweep = app.add_subcommand("sweep", "campaign over scenario axes");
    add_common(sweep);
    sweep->add_option("--workers", workers, "parallel sweep workers");

    CLI11_PARSE(app, argc, argv);

    casctrl::CommandOptions opt;
    opt.out = out_dir;
    opt.oracle = with_oracle;
    opt.kmax = kmax;
    opt.workers = workers;
    opt.controller_path = controller_path;

    try {
        const casctrl::Scenario sc = casctrl::Scenario::load(scenario_path);
        if (!sc.out.empty() && out_dir == "out") opt.out = sc.out;
        if (spectrum->parsed()) return casctrl::run_spectrum(sc, opt);
        if (synth->parsed()) return casctrl::run_synth(sc, opt);
        if (simulate->parsed()) return casctrl::run_simulate(sc, opt);
        if (sweep->parsed()) return casctrl::run_sweep(sc, opt);
    } catch (const casctrl::SynthesisError& e) {
        std::cout << error_json(3, e.what()).dump() << std::endl;
        return 3;
    } catch (const casctrl::IntegrationError& e) {
        std::cout << error_json(4, e.what()).dump() << std::endl;
        return 4;
    } catch (const casctrl::ConfigError& e) {
        std::cout << error_json(2, e.what()).dump() << std::endl;
        return 2;
    } catch (const std::exception& e) {
        std::cout << error_json(2, e.what()).dump() << std::endl;
        return 2;
    }
    return 0;
}
