// commands.hpp: the CLI subcommands as library calls.
//
// Each cmd_* returns a process exit code; ConfigError and NumericalAbort
// propagate to the caller, which maps them to 2 and 3.

#pragma once

#include "vbspin/analysis.hpp"
#include "vbspin/run_config.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace vbspin {

class WorkerPool;

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitNumerical = 3, kExitFitFlagged = 4 };

/// Sites, clusters and Hamiltonian inputs for one configuration.
struct PreparedModel {
    SiteSet sites;
    std::vector<Cluster> clusters;
};
PreparedModel prepare_model(const RunConfig& config);

/// Evolve one configuration. With a non-empty `checkpoint` path the state
/// is saved there every checkpoint_period steps and at the end; `resume`
/// restarts from it after checking the config hash.
TimeSeries run_simulation(const RunConfig& config, const PreparedModel& model, WorkerPool* pool,
                          const std::filesystem::path& checkpoint = {}, bool resume = false);

FitOptions fit_options(const RunConfig& config, ElectronSpace space);

int cmd_simulate(const RunConfig& config, bool resume, std::ostream& log);
int cmd_sweep(const RunConfig& config, bool resume, std::ostream& log);

struct LevelsRequest {
    double B_min = 0.0;
    double B_max = 2000.0;
    double B_step = 1.0;
    bool with_first_shell = false;
};
int cmd_levels(const RunConfig& config, const LevelsRequest& request, std::ostream& log);

struct GenSitesRequest {
    double radius = 30.0;
    int layers = 1;
    std::string first_shell_file;
    double cutoff = kDefaultPointDipoleCutoff;
    std::filesystem::path out = "sites.json";
};
int cmd_gen_sites(const RunConfig& config, const GenSitesRequest& request, std::ostream& log);

struct OracleRequest {
    int steps = 10000;
    double dt_scale = 1.0;  // >1 deliberately coarsens the integrator step
    std::vector<std::size_t> dims{6, 16, 32, 64};
    double tolerance = 1e-8;
    bool secular = true;
    double secular_t_max = 0.01;  // us
};

struct OracleReport {
    struct Row {
        std::string name;
        double value = 0.0;
        double limit = 0.0;
        bool pass = false;
    };
    std::vector<Row> rows;
    bool pass() const;
    std::string to_text() const;
};

/// Coherent RK4 against eigendecomposition propagation for one cluster of
/// each requested dimension, plus the secular-only null test.
OracleReport oracle_check(const RunConfig& config, const OracleRequest& request);
int cmd_oracle_check(const RunConfig& config, const OracleRequest& request, std::ostream& log);

/// Copy of `sites` with every transverse hyperfine component zeroed.
std::vector<NuclearSite> secular_only(std::vector<NuclearSite> sites);

}  // namespace vbspin
