#include "vbspin/checkpoint.hpp"
#include "vbspin/commands.hpp"
#include "vbspin/errors.hpp"

#include "doctest.h"
#include "json.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace vbspin;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("vbspin_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Runs the built executable; returns its exit status.
int cli(const std::string& args, const fs::path& log = {}) {
    const char* exe = std::getenv("VBSPIN_CLI");
    REQUIRE_MESSAGE(exe, "VBSPIN_CLI is not set");
    std::string cmd = std::string(exe) + " " + args;
    cmd += log.empty() ? " > /dev/null 2>&1" : " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// A small but complete configuration: a few clusters on a small lattice.
std::string tiny(const fs::path& out) {
    return "-p desk-model1 -s lattice_radius=8 -s lattice_layers=1 -s n_nitrogen_clusters=2 -s record_period=100 "
           "--t-max 0.01 -o " +
           out.string();
}

}  // namespace

TEST_CASE("every preset validates and echoes its name-relevant settings") {
    for (const auto& name : preset_names()) {
        CAPTURE(name);
        const RunConfig c = preset(name);
        CHECK_NOTHROW(c.validate());
        CHECK_FALSE(c.first_shell_file.empty());
    }
    CHECK(preset("paper-model4").model.n_nitrogen_clusters == 28);
    CHECK(preset("paper-model4").sim.t_max == 69.0);
    CHECK_THROWS_AS(preset("model9"), ConfigError);
}

TEST_CASE("config JSON: unknown keys rejected, overrides applied, echo round trips") {
    const RunConfig base = preset("desk-model4");
    CHECK_THROWS_AS(apply_json(base, nlohmann::json{{"bogus", 1}}), ConfigError);
    CHECK_THROWS_AS(apply_override(base, "no_equals_sign"), ConfigError);
    const RunConfig c = apply_override(apply_override(base, "B_z=400"), "integrator=rk4");
    CHECK(c.sim.B_z == 400.0);
    CHECK(c.sim.integrator == Integrator::RK4);
    const nlohmann::json echo = to_json(c);
    CHECK(to_json(apply_json(RunConfig{}, echo)) == echo);
    RunConfig bad = base;
    bad.sim.dt = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("config hash ignores output location and worker count only") {
    const RunConfig a = preset("desk-model1");
    RunConfig b = a;
    b.workers = 7;
    b.output_dir = "elsewhere";
    CHECK(config_hash(a) == config_hash(b));
    b.sim.B_z += 1.0;
    CHECK(config_hash(a) != config_hash(b));
    CHECK(hash_hex(0x1f).size() == 16);
}

TEST_CASE("output directory honours VBSPIN_OUTPUT_ROOT") {
    RunConfig c;
    c.output_dir = "relative/run";
    ::setenv("VBSPIN_OUTPUT_ROOT", "/tmp/vbspin_root", 1);
    CHECK(output_path(c) == fs::path("/tmp/vbspin_root/relative/run"));
    c.output_dir = "/abs/run";
    CHECK(output_path(c) == fs::path("/abs/run"));
    ::unsetenv("VBSPIN_OUTPUT_ROOT");
}

TEST_CASE("site generation needs a first-shell file and round-trips") {
    const fs::path dir = scratch("gen");
    RunConfig c;
    GenSitesRequest r;
    r.radius = 6.0;
    r.out = dir / "sites.json";
    CHECK_THROWS_AS(cmd_gen_sites(c, r, std::cout), ConfigError);
    r.first_shell_file = preset("desk-model4").first_shell_file;
    std::ostringstream log;
    CHECK(cmd_gen_sites(c, r, log) == kExitOk);
    const auto sites = load_sites(r.out, c.species);
    CHECK(sites.size() == generate_lattice_sites(6.0, 1).size());
    c.site_file = r.out.string();
    CHECK(resolve_sites(c).size() == sites.size());
}

TEST_CASE("resuming from a checkpoint of another configuration is refused") {
    const fs::path dir = scratch("hash");
    RunConfig c = apply_override(preset("desk-model1"), "lattice_radius=8");
    c.model.n_nitrogen_clusters = 2;
    c.sim.t_max = 0.001;
    c.sim.record_period = 100;
    const PreparedModel m = prepare_model(c);
    run_simulation(c, m, nullptr, dir / "cp.bin");
    RunConfig other = c;
    other.sim.B_z = 100.0;
    CHECK_THROWS_AS(run_simulation(other, m, nullptr, dir / "cp.bin", true), ConfigError);
}

TEST_CASE("CLI: exit codes") {
    const fs::path dir = scratch("exit");
    CHECK(cli("--help") == 0);
    CHECK(cli("") == kExitConfig);
    CHECK(cli("simulate --no-such-flag") == kExitConfig);
    CHECK(cli("simulate -p desk-model1 -s bogus=1 -o " + dir.string()) == kExitConfig);
    CHECK(cli("simulate -p desk-model1 --dt -1 -o " + dir.string()) == kExitConfig);
    CHECK(cli("gen-sites --out " + (dir / "s.json").string()) == kExitConfig);
    CHECK(cli("sweep -p desk-model1 -s B_list=[] -o " + dir.string()) == kExitConfig);
    // too few samples for a fit: the run succeeds, the fit is refused
    CHECK(cli("simulate " + tiny(dir / "short") + " -s record_period=1000") == kExitFitFlagged);
    CHECK(fs::exists(dir / "short" / "timeseries.csv"));
}

TEST_CASE("CLI: levels writes the table and finds the anticrossing") {
    const fs::path dir = scratch("levels");
    CHECK(cli("levels --B-min 1200 --B-max 1300 --B-step 0.5 -o " + dir.string()) == kExitOk);
    const auto meta = nlohmann::json::parse(slurp(dir / "levels_metadata.json"));
    CHECK(std::abs(meta["min_gap_B_gauss"].get<double>() - 1241.39) <= 1.0);
    CHECK(meta.contains("config_hash"));
    CHECK(slurp(dir / "levels.csv").rfind("B_gauss,", 0) == 0);
}

TEST_CASE("CLI: simulate writes data and metadata; resume reproduces the trace") {
    const fs::path dir = scratch("sim");
    const int code = cli("simulate " + tiny(dir / "a") + " -s checkpoint_period=2000");
    CHECK((code == kExitOk || code == kExitFitFlagged));
    const auto meta = nlohmann::json::parse(slurp(dir / "a" / "metadata.json"));
    CHECK(meta["command"] == "simulate");
    CHECK(meta["config"]["variant"] == 1);
    CHECK(nlohmann::json::parse(slurp(dir / "a" / "fit.json")).contains("fit"));
    const std::string first = slurp(dir / "a" / "timeseries.csv");
    CHECK(first.rfind("t_us,pop_ms0", 0) == 0);
    CHECK(fs::exists(dir / "a" / "checkpoint.bin"));

    // resuming a finished run replays nothing and returns the same trace
    cli("simulate " + tiny(dir / "a") + " -s checkpoint_period=2000 --resume");
    CHECK(slurp(dir / "a" / "timeseries.csv") == first);
    // different worker count, same bytes
    cli("simulate " + tiny(dir / "b") + " -j 3");
    CHECK(slurp(dir / "b" / "timeseries.csv") == first);
}

TEST_CASE("CLI: corrupted checkpoint is a configuration error") {
    const fs::path dir = scratch("corrupt");
    fs::create_directories(dir / "a");
    std::ofstream(dir / "a" / "checkpoint.bin") << "garbage";
    CHECK(cli("simulate " + tiny(dir / "a") + " --resume") == kExitConfig);
}

TEST_CASE("CLI: oracle check passes on small clusters and fails on a coarse step") {
    const fs::path dir = scratch("oracle");
    const std::string base = "oracle-check -s lattice_radius=8 -s lattice_layers=1 --no-secular --dims 16 -o ";
    CHECK(cli(base + (dir / "ok").string() + " --steps 2000") == kExitOk);
    CHECK(nlohmann::json::parse(slurp(dir / "ok" / "oracle_check.json"))["pass"] == true);
    CHECK(cli(base + (dir / "bad").string() + " --steps 2000 --dt-scale 40") == kExitNumerical);
}

TEST_CASE("CLI: sweep over two fields writes the table") {
    const fs::path dir = scratch("sweep");
    const int code = cli("sweep " + tiny(dir) + " --B-list 90,800 --channels both");
    CHECK((code == kExitOk || code == kExitFitFlagged));
    const std::string csv = slurp(dir / "sweep.csv");
    CHECK(csv.rfind("B_gauss,T1_us,n,y0,rss,regime,channel", 0) == 0);
    CHECK(fs::exists(dir / "B_90" / "0-" / "timeseries.csv"));
    CHECK(fs::exists(dir / "B_800" / "0+" / "timeseries.csv"));
    CHECK(nlohmann::json::parse(slurp(dir / "sweep_fits.json")).is_array());
}
