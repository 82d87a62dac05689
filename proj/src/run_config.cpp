#include "vbspin/run_config.hpp"

#include "vbspin/errors.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace vbspin {

using nlohmann::json;

void RunConfig::validate() const {
    model.validate();
    sim.validate();
    if (model.dephasing_T2 != sim.dephasing_T2) throw ConfigError("dephasing_T2: model and simulation disagree");
    if (!(electron.gamma_e > 0.0)) throw ConfigError("gamma_e must be > 0");
    if (!std::isfinite(electron.D) || !std::isfinite(electron.E)) throw ConfigError("D and E must be finite");
    for (double b : B_list)
        if (!(b >= 0.0) || !std::isfinite(b)) throw ConfigError("B_list entries must be finite and >= 0");
    if (site_file.empty()) {
        if (first_shell_file.empty())
            throw ConfigError("first_shell_file is required when sites are generated (no site_file given)");
        if (!(lattice_radius > 0.0)) throw ConfigError("lattice_radius must be > 0");
        if (lattice_layers < 1) throw ConfigError("lattice_layers must be >= 1");
    }
    if (!(point_dipole_cutoff >= 0.0)) throw ConfigError("point_dipole_cutoff must be >= 0");
    if (workers < 1) throw ConfigError("workers must be >= 1");
    if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
    if (sim.core_baseline && model.variant != 4) throw ConfigError("core_baseline applies to variant 4 only");
}

// ---------------------------------------------------------------- presets

std::vector<std::string> preset_names() {
    return {"desk-model1", "desk-model2", "desk-model3", "desk-model4", "paper-model4"};
}

RunConfig preset(const std::string& name) {
    RunConfig c;
    c.first_shell_file = std::string(VBSPIN_DATA_DIR) + "/first_shell_placeholder.json";
    c.lattice_radius = 30.0;
    c.lattice_layers = 19;  // bulk: every layer within the 30 A sphere
    c.sim.B_z = 800.0;
    c.sim.dt = 2.5e-6;
    c.sim.p0 = 0.7;
    c.sim.sync_period = 100;
    c.sim.record_period = 4000;
    c.B_list = {90.0, 400.0, 800.0};
    if (name == "desk-model4" || name == "paper-model4") {
        const bool desk = name == "desk-model4";
        c.model = ModelSpec::paper_defaults(4);
        c.model.n_nitrogen_clusters = desk ? 8 : 28;
        c.sim.t_max = desk ? 10.0 : 69.0;
        c.sim.core_baseline = true;
        c.sim.integrator = desk ? Integrator::SplitExact : Integrator::RK4;
        c.output_dir = name;
        return c;
    }
    if (name == "desk-model1") {
        c.model = ModelSpec::paper_defaults(1);
        c.model.n_nitrogen_clusters = 8;
    } else if (name == "desk-model2" || name == "desk-model3") {
        c.model = ModelSpec::paper_defaults(name == "desk-model2" ? 2 : 3);
        c.model.n_nitrogen_clusters = 4;
        c.model.n_boron_clusters = 4;
        c.sim.dephasing_T2 = c.model.dephasing_T2;
    } else {
        std::string known;
        for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
        throw ConfigError("unknown preset '" + name + "' (known: " + known + ")");
    }
    c.sim.t_max = 10.0;
    c.sim.integrator = Integrator::SplitExact;
    c.output_dir = name;
    return c;
}

// ---------------------------------------------------------------- JSON

namespace {

template <class T>
T get(const json& v, const std::string& key) {
    try {
        return v.get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config key '" + key + "' has the wrong type (" + std::string(v.type_name()) + ")");
    }
}

std::optional<double> opt_double(const json& v, const std::string& key) {
    if (v.is_null()) return std::nullopt;
    return get<double>(v, key);
}

}  // namespace

RunConfig apply_json(RunConfig c, const json& doc) {
    if (!doc.is_object()) throw ConfigError("config must be a JSON object");
    for (const auto& [key, v] : doc.items()) {
        if (key == "variant") c.model.variant = get<int>(v, key);
        else if (key == "n_nitrogen_clusters") c.model.n_nitrogen_clusters = get<int>(v, key);
        else if (key == "n_boron_clusters") c.model.n_boron_clusters = get<int>(v, key);
        else if (key == "core_site_ids") c.model.core_site_ids = get<std::vector<int>>(v, key);
        else if (key == "dephasing_T2") c.model.dephasing_T2 = c.sim.dephasing_T2 = opt_double(v, key);
        else if (key == "D") c.electron.D = get<double>(v, key);
        else if (key == "E") c.electron.E = get<double>(v, key);
        else if (key == "gamma_e") c.electron.gamma_e = get<double>(v, key);
        else if (key == "species") {
            if (!v.is_object()) throw ConfigError("config key 'species' must be an object");
            for (const auto& [name, sp] : v.items()) {
                if (!sp.is_object() || !sp.contains("s") || !sp.contains("gamma_n"))
                    throw ConfigError("species." + name + " needs 's' and 'gamma_n'");
                SpinSpecies s;
                s.name = name;
                s.s = get<double>(sp["s"], "species." + name + ".s");
                s.gamma_n = get<double>(sp["gamma_n"], "species." + name + ".gamma_n");
                c.species.set(s);
            }
        }
        else if (key == "B_z") c.sim.B_z = get<double>(v, key);
        else if (key == "dt") c.sim.dt = get<double>(v, key);
        else if (key == "t_max") c.sim.t_max = get<double>(v, key);
        else if (key == "sync_period") c.sim.sync_period = get<int>(v, key);
        else if (key == "record_period") c.sim.record_period = get<int>(v, key);
        else if (key == "checkpoint_period") c.sim.checkpoint_period = get<int>(v, key);
        else if (key == "p0") c.sim.p0 = get<double>(v, key);
        else if (key == "synchronize") c.sim.synchronize = get<bool>(v, key);
        else if (key == "core_baseline") c.sim.core_baseline = get<bool>(v, key);
        else if (key == "integrator") c.sim.integrator = parse_integrator(get<std::string>(v, key));
        else if (key == "split_chunk") c.sim.split_chunk = get<int>(v, key);
        else if (key == "record_nuclear") c.sim.record_nuclear = get<bool>(v, key);
        else if (key == "record_all_clusters") c.sim.record_all_clusters = get<bool>(v, key);
        else if (key == "B_list") c.B_list = get<std::vector<double>>(v, key);
        else if (key == "channels") {
            const auto m = get<std::string>(v, key);
            if (m == "single") c.channels = ChannelMode::Single;
            else if (m == "both") c.channels = ChannelMode::Both;
            else throw ConfigError("channels must be 'single' or 'both', got '" + m + "'");
        } else if (key == "fit_y0") {
            const auto m = get<std::string>(v, key);
            if (m == "fixed") c.fit_y0 = Y0Mode::Fixed;
            else if (m == "free") c.fit_y0 = Y0Mode::Free;
            else throw ConfigError("fit_y0 must be 'fixed' or 'free', got '" + m + "'");
        } else if (key == "rss_factor") c.classify.rss_factor = get<double>(v, key);
        else if (key == "min_n") c.classify.min_n = get<double>(v, key);
        else if (key == "oscillation_fraction") c.classify.oscillation_fraction = get<double>(v, key);
        else if (key == "site_file") c.site_file = get<std::string>(v, key);
        else if (key == "lattice_radius") c.lattice_radius = get<double>(v, key);
        else if (key == "lattice_layers") c.lattice_layers = get<int>(v, key);
        else if (key == "first_shell_file") c.first_shell_file = get<std::string>(v, key);
        else if (key == "point_dipole_cutoff") c.point_dipole_cutoff = get<double>(v, key);
        else if (key == "output_dir") c.output_dir = get<std::string>(v, key);
        else if (key == "workers") c.workers = get<int>(v, key);
        else throw ConfigError("unknown config key '" + key + "'");
    }
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    json doc;
    try {
        doc = json::parse(buf.str());
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
    return apply_json(std::move(base), doc);
}

RunConfig apply_override(RunConfig base, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
    const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    return apply_json(std::move(base), json{{key, value}});
}

json to_json(const RunConfig& c) {
    json species = json::object();
    for (const auto& [name, s] : c.species.entries()) species[name] = {{"s", s.s}, {"gamma_n", s.gamma_n}};
    json j{
        {"variant", c.model.variant},
        {"n_nitrogen_clusters", c.model.n_nitrogen_clusters},
        {"n_boron_clusters", c.model.n_boron_clusters},
        {"core_site_ids", c.model.core_site_ids},
        {"dephasing_T2", c.model.dephasing_T2 ? json(*c.model.dephasing_T2) : json(nullptr)},
        {"D", c.electron.D},
        {"E", c.electron.E},
        {"gamma_e", c.electron.gamma_e},
        {"species", species},
        {"B_z", c.sim.B_z},
        {"dt", c.sim.dt},
        {"t_max", c.sim.t_max},
        {"sync_period", c.sim.sync_period},
        {"record_period", c.sim.record_period},
        {"checkpoint_period", c.sim.checkpoint_period},
        {"p0", c.sim.p0},
        {"synchronize", c.sim.synchronize},
        {"core_baseline", c.sim.core_baseline},
        {"integrator", integrator_name(c.sim.integrator)},
        {"split_chunk", c.sim.split_chunk},
        {"record_nuclear", c.sim.record_nuclear},
        {"record_all_clusters", c.sim.record_all_clusters},
        {"B_list", c.B_list},
        {"channels", c.channels == ChannelMode::Both ? "both" : "single"},
        {"fit_y0", c.fit_y0 == Y0Mode::Fixed ? "fixed" : "free"},
        {"rss_factor", c.classify.rss_factor},
        {"min_n", c.classify.min_n},
        {"oscillation_fraction", c.classify.oscillation_fraction},
        {"site_file", c.site_file},
        {"lattice_radius", c.lattice_radius},
        {"lattice_layers", c.lattice_layers},
        {"first_shell_file", c.first_shell_file},
        {"point_dipole_cutoff", c.point_dipole_cutoff},
        {"output_dir", c.output_dir},
        {"workers", c.workers},
    };
    return j;
}

std::uint64_t config_hash(const RunConfig& c) {
    json j = to_json(c);
    j.erase("output_dir");
    j.erase("workers");
    const std::string text = j.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::filesystem::path output_path(const RunConfig& c) {
    std::filesystem::path p(c.output_dir);
    if (p.is_relative())
        if (const char* root = std::getenv("VBSPIN_OUTPUT_ROOT"); root && *root) p = std::filesystem::path(root) / p;
    return p;
}

std::vector<NuclearSite> resolve_sites(const RunConfig& c) {
    if (!c.site_file.empty()) return load_sites(c.site_file, c.species);
    if (c.first_shell_file.empty())
        throw ConfigError("first_shell_file is required when sites are generated (no site_file given)");
    const auto first_shell = load_sites(c.first_shell_file, c.species);
    auto lattice = generate_lattice_sites(c.lattice_radius, c.lattice_layers);
    return validate_sites(attach_hyperfine(std::move(lattice), first_shell, c.species, c.electron.gamma_e,
                                           c.point_dipole_cutoff),
                          c.species);
}

}  // namespace vbspin
