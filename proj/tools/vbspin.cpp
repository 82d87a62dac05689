// Command-line driver: simulate, sweep, levels, gen-sites, oracle-check.

#include "vbspin/commands.hpp"
#include "vbspin/errors.hpp"

#include "CLI11.hpp"

#include <iostream>
#include <optional>

using namespace vbspin;

namespace {

struct CommonArgs {
    std::string config_file;
    std::string preset_name;
    std::vector<std::string> overrides;
    std::optional<int> workers;
    std::optional<std::string> output;
    std::optional<double> B;
    std::optional<double> t_max;
    std::optional<double> dt;
    std::optional<std::string> integrator;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
    cmd->add_option("-c,--config", a.config_file, "JSON run configuration");
    cmd->add_option("-p,--preset", a.preset_name, "built-in configuration (desk-model1..4, paper-model4)");
    cmd->add_option("-s,--set", a.overrides, "override a config key: key=value (repeatable)");
    cmd->add_option("-j,--workers", a.workers, "worker threads");
    cmd->add_option("-o,--output", a.output, "output directory (relative to $VBSPIN_OUTPUT_ROOT)");
    cmd->add_option("-B,--field", a.B, "magnetic field B_z in gauss");
    cmd->add_option("--t-max", a.t_max, "evolution time in us");
    cmd->add_option("--dt", a.dt, "time step in us");
    cmd->add_option("--integrator", a.integrator, "rk4 or split-exact");
}

RunConfig resolve(const CommonArgs& a, const std::string& fallback_preset = "") {
    RunConfig c;
    if (!a.preset_name.empty()) c = preset(a.preset_name);
    else if (!fallback_preset.empty()) c = preset(fallback_preset);
    if (!a.config_file.empty()) c = load_run_config(a.config_file, c);
    for (const auto& o : a.overrides) c = apply_override(c, o);
    if (a.workers) c.workers = *a.workers;
    if (a.output) c.output_dir = *a.output;
    if (a.B) c.sim.B_z = *a.B;
    if (a.t_max) c.sim.t_max = *a.t_max;
    if (a.dt) c.sim.dt = *a.dt;
    if (a.integrator) c.sim.integrator = parse_integrator(*a.integrator);
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cluster-expansion spin dynamics for T1 of the boron-vacancy center in hBN"};
    app.require_subcommand(1);

    CommonArgs sim_args;
    bool sim_resume = false;
    auto* simulate = app.add_subcommand("simulate", "evolve one configuration and fit its decay");
    add_common(simulate, sim_args);
    simulate->add_flag("--resume", sim_resume, "continue from the checkpoint in the output directory");

    CommonArgs sweep_args;
    bool sweep_resume = false;
    std::vector<double> B_list;
    std::optional<std::string> channels;
    auto* sweep = app.add_subcommand("sweep", "T1 over a list of fields");
    add_common(sweep, sweep_args);
    sweep->add_option("--B-list", B_list, "fields in gauss, comma separated")->delimiter(',');
    sweep->add_option("--channels", channels, "single or both (adds the opposite-field channel)");
    sweep->add_flag("--resume", sweep_resume, "continue from per-point checkpoints");

    CommonArgs level_args;
    LevelsRequest levels_req;
    auto* levels = app.add_subcommand("levels", "electron energy levels versus field");
    add_common(levels, level_args);
    levels->add_option("--B-min", levels_req.B_min, "first field, G");
    levels->add_option("--B-max", levels_req.B_max, "last field, G");
    levels->add_option("--B-step", levels_req.B_step, "grid step, G");
    levels->add_flag("--first-shell", levels_req.with_first_shell, "include the first-shell hyperfine coupling");

    CommonArgs gen_args;
    GenSitesRequest gen_req;
    std::string gen_out = "sites.json";
    auto* gen = app.add_subcommand("gen-sites", "generate a site file with hyperfine tensors");
    add_common(gen, gen_args);
    gen->add_option("--radius", gen_req.radius, "radius around the vacancy, A");
    gen->add_option("--layers", gen_req.layers, "number of hBN layers centred on the defect layer");
    gen->add_option("--first-shell", gen_req.first_shell_file, "first-shell hyperfine tensors (required)");
    gen->add_option("--cutoff", gen_req.cutoff, "point-dipole cutoff radius, A");
    gen->add_option("--out", gen_out, "output site file");

    CommonArgs oracle_args;
    OracleRequest oracle_req;
    bool no_secular = false;
    auto* oracle = app.add_subcommand("oracle-check", "RK4 against exact propagation, secular null test");
    add_common(oracle, oracle_args);
    oracle->add_option("--steps", oracle_req.steps, "RK4 steps per dimension");
    oracle->add_option("--dt-scale", oracle_req.dt_scale, "multiply the time step (values > 1 should fail)");
    oracle->add_option("--dims", oracle_req.dims, "cluster dimensions to check")->delimiter(',');
    oracle->add_option("--tolerance", oracle_req.tolerance, "max elementwise deviation");
    oracle->add_flag("--no-secular", no_secular, "skip the secular-only null test");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (*simulate) return cmd_simulate(resolve(sim_args), sim_resume, std::cout);
        if (*sweep) {
            RunConfig c = resolve(sweep_args);
            if (!B_list.empty()) c.B_list = B_list;
            if (channels) c = apply_override(c, "channels=\"" + *channels + "\"");
            return cmd_sweep(c, sweep_resume, std::cout);
        }
        if (*levels) return cmd_levels(resolve(level_args), levels_req, std::cout);
        if (*gen) {
            gen_req.out = gen_out;
            return cmd_gen_sites(resolve(gen_args), gen_req, std::cout);
        }
        if (*oracle) {
            oracle_req.secular = !no_secular;
            return cmd_oracle_check(resolve(oracle_args, "desk-model4"), oracle_req, std::cout);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const NumericalAbort& e) {
        std::cerr << "numerical abort: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
