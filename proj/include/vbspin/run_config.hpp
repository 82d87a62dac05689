// run_config.hpp: the JSON run configuration behind every CLI command.
//
// A config is one flat JSON object; command-line flags override its keys.

#pragma once

#include "vbspin/analysis.hpp"
#include "vbspin/clusters.hpp"
#include "vbspin/dynamics.hpp"
#include "vbspin/hamiltonian.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace vbspin {

enum class ChannelMode { Single, Both };

struct RunConfig {
    ModelSpec model = ModelSpec::paper_defaults(4);
    ElectronParams electron;
    SpeciesTable species = SpeciesTable::defaults();
    SimulationConfig sim;

    std::vector<double> B_list;  // sweep fields, G
    ChannelMode channels = ChannelMode::Single;
    Y0Mode fit_y0 = Y0Mode::Fixed;
    ClassifyOptions classify;

    std::string site_file;         // precomputed sites; empty generates a lattice
    double lattice_radius = 30.0;  // A
    int lattice_layers = 1;
    std::string first_shell_file;  // required when generating
    double point_dipole_cutoff = kDefaultPointDipoleCutoff;

    std::string output_dir = "run";
    int workers = 1;

    /// Throws ConfigError naming the first offending field.
    void validate() const;
};

/// Names accepted by preset(): desk-model4, paper-model4, desk-model1,
/// desk-model2, desk-model3.
std::vector<std::string> preset_names();
RunConfig preset(const std::string& name);

/// Apply the keys of `doc` on top of `base`. Unknown keys are errors.
RunConfig apply_json(RunConfig base, const nlohmann::json& doc);
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});

/// Apply one `key=value` override; the value is parsed as JSON, falling
/// back to a plain string.
RunConfig apply_override(RunConfig base, const std::string& assignment);

/// Full config echo; to_json(apply_json(c, to_json(c))) == to_json(c).
nlohmann::json to_json(const RunConfig& config);

/// FNV-1a over the canonical echo, excluding keys that cannot change the
/// computed data (output_dir, workers).
std::uint64_t config_hash(const RunConfig& config);
std::string hash_hex(std::uint64_t h);

/// output_dir, resolved against $VBSPIN_OUTPUT_ROOT when it is relative.
std::filesystem::path output_path(const RunConfig& config);

/// Sites described by the config (loaded or generated), validated.
std::vector<NuclearSite> resolve_sites(const RunConfig& config);

}  // namespace vbspin
