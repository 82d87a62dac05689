#include "vbspin/commands.hpp"

#include "vbspin/checkpoint.hpp"
#include "vbspin/errors.hpp"
#include "vbspin/worker_pool.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <ostream>

namespace vbspin {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::string utc_now() {
    const std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

json metadata(const std::string& command, const RunConfig& config, double wall_seconds) {
    return json{{"command", command},
                {"version", VBSPIN_VERSION},
                {"config", to_json(config)},
                {"config_hash", hash_hex(config_hash(config))},
                {"started_utc", utc_now()},
                {"wall_clock_s", wall_seconds}};
}

json fit_json(const DecayFit& f) {
    return json{{"a", f.a},   {"T1_us", f.T1}, {"n", f.n},
                {"y0", f.y0}, {"rss", f.rss},  {"converged", f.converged}, {"iterations", f.iterations}};
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string field_label(double B) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "B_%g", B);
    return buf;
}

}  // namespace

PreparedModel prepare_model(const RunConfig& config) {
    config.validate();
    PreparedModel m;
    m.sites = SiteSet(resolve_sites(config));
    m.clusters = build_model(config.model, m.sites, config.species);
    return m;
}

TimeSeries run_simulation(const RunConfig& config, const PreparedModel& model, WorkerPool* pool,
                          const fs::path& checkpoint, bool resume) {
    std::vector<Matrix> hs;
    hs.reserve(model.clusters.size());
    for (const auto& c : model.clusters)
        hs.push_back(cluster_hamiltonian(c, config.electron, model.sites, config.species, config.sim.B_z));
    std::optional<Matrix> core;
    if (config.sim.core_baseline)
        core = cluster_hamiltonian(core_only(model.clusters.front()), config.electron, model.sites, config.species,
                                   config.sim.B_z);
    Simulation sim(model.clusters, std::move(hs), config.sim, std::move(core));

    const std::uint64_t hash = config_hash(config);
    if (resume && !checkpoint.empty() && fs::exists(checkpoint)) {
        Checkpoint cp = load_checkpoint(checkpoint);
        if (cp.config_hash != hash)
            throw ConfigError("checkpoint " + checkpoint.string() + " was written by a different configuration (hash " +
                              hash_hex(cp.config_hash) + ", expected " + hash_hex(hash) + ")");
        sim.restore(std::move(cp.state));
    }
    Simulation::CheckpointSink sink;
    if (!checkpoint.empty()) {
        if (checkpoint.has_parent_path()) fs::create_directories(checkpoint.parent_path());
        sink = [&](const SimulationState& s) { save_checkpoint(checkpoint, s, hash); };
    }
    TimeSeries series = sim.run(pool, sink);
    if (!checkpoint.empty()) save_checkpoint(checkpoint, sim.state(), hash);
    return series;
}

FitOptions fit_options(const RunConfig& config, ElectronSpace space) {
    FitOptions o;
    o.y0_mode = config.fit_y0;
    o.y0 = equilibrium_population(space);
    o.T1_min = config.sim.dt;
    return o;
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(const RunConfig& config, bool resume, std::ostream& log) {
    const auto t0 = std::chrono::steady_clock::now();
    const PreparedModel model = prepare_model(config);
    const fs::path dir = output_path(config);
    fs::create_directories(dir);
    const bool checkpointing = config.sim.checkpoint_period > 0 || resume;
    WorkerPool pool(static_cast<std::size_t>(config.workers));
    log << "simulate: model " << config.model.variant << ", " << model.clusters.size() << " clusters, B = "
        << config.sim.B_z << " G, t_max = " << config.sim.t_max << " us\n";
    const TimeSeries series =
        run_simulation(config, model, &pool, checkpointing ? dir / "checkpoint.bin" : fs::path{}, resume);
    write_file(dir / "timeseries.csv", series.to_csv());

    int code = kExitOk;
    json report{{"positivity_violations", series.positivity_violations},
                {"worst_min_eigenvalue", series.worst_min_eigenvalue}};
    try {
        FitOptions o = fit_options(config, model.clusters.front().electron);
        const DecayFit fit = fit_stretched_exp(series, o);
        o.n_fixed = 1.0;
        const DecayFit pinned = fit_stretched_exp(series, o);
        report["fit"] = fit_json(fit);
        report["fit_n_pinned"] = fit_json(pinned);
        report["y0_mode"] = config.fit_y0 == Y0Mode::Fixed ? "fixed" : "free";
        log << "fit: T1 = " << fit.T1 << " us, n = " << fit.n << ", a = " << fit.a << ", y0 = " << fit.y0
            << (fit.converged ? "" : " (not converged)") << "\n";
        if (!fit.converged) code = kExitFitFlagged;
    } catch (const std::invalid_argument& e) {
        report["fit_error"] = e.what();
        log << "fit refused: " << e.what() << "\n";
        code = kExitFitFlagged;
    }
    if (series.positivity_violations > 0) report["flagged"] = "positivity";
    write_file(dir / "fit.json", report.dump(1) + "\n");
    write_file(dir / "metadata.json", metadata("simulate", config, seconds_since(t0)).dump(1) + "\n");
    log << "wrote " << (dir / "timeseries.csv").string() << "\n";
    return code;
}

// ---------------------------------------------------------------- sweep

int cmd_sweep(const RunConfig& config, bool resume, std::ostream& log) {
    const auto t0 = std::chrono::steady_clock::now();
    if (config.B_list.empty()) throw ConfigError("B_list must list at least one field for a sweep");
    const PreparedModel model = prepare_model(config);
    const fs::path dir = output_path(config);
    fs::create_directories(dir);
    WorkerPool pool(static_cast<std::size_t>(config.workers));
    const bool checkpointing = config.sim.checkpoint_period > 0 || resume;

    auto run = [&](double B_signed) {
        RunConfig point = config;
        point.sim.B_z = B_signed;
        point.B_list.clear();
        const Channel ch = B_signed < 0.0 ? Channel::ZeroPlus : Channel::ZeroMinus;
        const fs::path pdir = dir / field_label(std::abs(B_signed)) / channel_name(ch);
        log << "sweep: B = " << B_signed << " G\n";
        TimeSeries s = run_simulation(point, model, &pool, checkpointing ? pdir / "checkpoint.bin" : fs::path{}, resume);
        write_file(pdir / "timeseries.csv", s.to_csv());
        return s;
    };
    SweepOptions opts;
    opts.fit = fit_options(config, model.clusters.front().electron);
    opts.classify = config.classify;
    opts.both_channels = config.channels == ChannelMode::Both;
    const SweepResult result = sweep_field(config.B_list, run, config.electron, opts);

    write_file(dir / "sweep.csv", result.to_csv());
    write_file(dir / "sweep_fits.json", result.fits_json() + "\n");
    write_file(dir / "metadata.json", metadata("sweep", config, seconds_since(t0)).dump(1) + "\n");
    for (const auto& p : result.points)
        log << "  " << channel_name(p.channel) << " B = " << p.B << " G: "
            << (p.failed ? "failed (" + p.error + ")" : p.T1 ? "T1 = " + std::to_string(*p.T1) + " us" : "no T1")
            << " [" << regime_name(p.regime) << "]\n";
    log << "wrote " << (dir / "sweep.csv").string() << "\n";
    return result.any_flagged() ? kExitFitFlagged : kExitOk;
}

// ---------------------------------------------------------------- levels

int cmd_levels(const RunConfig& config, const LevelsRequest& request, std::ostream& log) {
    const auto t0 = std::chrono::steady_clock::now();
    if (!(request.B_step > 0.0) || request.B_max < request.B_min)
        throw ConfigError("levels: need B_step > 0 and B_max >= B_min");
    std::vector<NuclearSite> nuclei;
    if (request.with_first_shell) {
        if (config.first_shell_file.empty()) throw ConfigError("levels: first_shell_file is not set");
        nuclei = load_sites(config.first_shell_file, config.species);
    }
    const auto grid = field_grid(request.B_min, request.B_max, request.B_step);
    const LevelTable table = energy_levels(config.electron, grid, nuclei, config.species);
    const fs::path dir = output_path(config);
    write_file(dir / "levels.csv", table.to_csv());
    json meta = metadata("levels", config, seconds_since(t0));
    const std::size_t i = table.min_gap_index();
    meta["min_gap_B_gauss"] = table.B[i];
    meta["min_gap_MHz"] = table.gap_0_minus[i];
    write_file(dir / "levels_metadata.json", meta.dump(1) + "\n");
    log << "minimum |0>/|-1> gap " << table.gap_0_minus[i] << " MHz at B = " << table.B[i] << " G\n";
    log << "wrote " << (dir / "levels.csv").string() << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------- gen-sites

int cmd_gen_sites(const RunConfig& config, const GenSitesRequest& request, std::ostream& log) {
    if (request.first_shell_file.empty())
        throw ConfigError("gen-sites: a first-shell hyperfine file is required (point dipoles are invalid there)");
    const auto first_shell = load_sites(request.first_shell_file, config.species);
    auto lattice = generate_lattice_sites(request.radius, request.layers);
    const auto sites = validate_sites(
        attach_hyperfine(std::move(lattice), first_shell, config.species, config.electron.gamma_e, request.cutoff),
        config.species);
    fs::path out = request.out;
    if (out.is_relative())
        if (const char* root = std::getenv("VBSPIN_OUTPUT_ROOT"); root && *root) out = fs::path(root) / out;
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    save_sites(out, sites);
    log << "wrote " << sites.size() << " sites to " << out.string() << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------- oracle check

bool OracleReport::pass() const {
    return std::all_of(rows.begin(), rows.end(), [](const Row& r) { return r.pass; });
}

std::string OracleReport::to_text() const {
    std::string out;
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%-40s %.3e (limit %.1e) %s\n", r.name.c_str(), r.value, r.limit,
                      r.pass ? "PASS" : "FAIL");
        out += buf;
    }
    out += pass() ? "oracle check: PASS\n" : "oracle check: FAIL\n";
    return out;
}

std::vector<NuclearSite> secular_only(std::vector<NuclearSite> sites) {
    for (auto& s : sites) {
        const double zz = s.A(2, 2);
        s.A.setZero();
        s.A(2, 2) = zz;
    }
    return sites;
}

namespace {

// First cluster of the model whose clusters have dimension `dim`.
Cluster oracle_cluster(std::size_t dim, const SiteSet& sites, const SpeciesTable& species) {
    ModelSpec m;
    switch (dim) {
        case 6: m = ModelSpec::paper_defaults(1); m.n_nitrogen_clusters = 1; break;
        case 16: m = ModelSpec::paper_defaults(2); m.n_nitrogen_clusters = 1; m.n_boron_clusters = 0; break;
        case 32: m = ModelSpec::paper_defaults(2); m.n_nitrogen_clusters = 0; m.n_boron_clusters = 1; break;
        case 64: m = ModelSpec::paper_defaults(4); m.n_nitrogen_clusters = 1; break;
        default: throw ConfigError("oracle-check: dimension must be one of 6, 16, 32, 64");
    }
    return build_model(m, sites, species).front();
}

}  // namespace

OracleReport oracle_check(const RunConfig& config, const OracleRequest& request) {
    if (request.steps < 1 || !(request.dt_scale > 0.0)) throw ConfigError("oracle-check: bad steps or dt scale");
    const SiteSet sites(resolve_sites(config));
    OracleReport report;
    for (std::size_t dim : request.dims) {
        const Cluster c = oracle_cluster(dim, sites, config.species);
        const Matrix H = cluster_hamiltonian(c, config.electron, sites, config.species, config.sim.B_z);
        SimulationConfig sc = config.sim;
        sc.dt = config.sim.dt * request.dt_scale;
        sc.t_max = sc.dt * request.steps;
        sc.synchronize = false;
        sc.core_baseline = false;
        sc.dephasing_T2.reset();
        sc.integrator = Integrator::RK4;
        sc.record_period = request.steps;
        sc.checkpoint_period = 0;
        Simulation sim({c}, {H}, sc);
        const Matrix rho0 = sim.state().rho.front();
        sim.run();
        const Matrix exact = propagate_exact(H, rho0, sc.dt * static_cast<double>(request.steps));
        const double dev = (sim.state().rho.front() - exact).cwiseAbs().maxCoeff();
        report.rows.push_back({"rk4 vs exact, dim " + std::to_string(dim), dev, request.tolerance,
                               std::isfinite(dev) && dev < request.tolerance});
    }
    if (request.secular) {
        RunConfig sec = config;
        sec.model.n_nitrogen_clusters = std::min(sec.model.n_nitrogen_clusters, 2);
        sec.model.n_boron_clusters = std::min(sec.model.n_boron_clusters, 2);
        sec.sim.t_max = request.secular_t_max;
        sec.sim.record_period = std::max(1, static_cast<int>(std::llround(request.secular_t_max / sec.sim.dt / 20)));
        PreparedModel m;
        m.sites = SiteSet(secular_only(resolve_sites(sec)));
        m.clusters = build_model(sec.model, m.sites, sec.species);
        const TimeSeries s = run_simulation(sec, m, nullptr);
        const auto& p = s.column("pop_ms0");
        double dev = 0.0;
        for (double v : p) dev = std::max(dev, std::abs(v - p.front()));
        report.rows.push_back({"secular-only m_s=0 population drift", dev, 1e-10, dev < 1e-10});
    }
    return report;
}

int cmd_oracle_check(const RunConfig& config, const OracleRequest& request, std::ostream& log) {
    const auto t0 = std::chrono::steady_clock::now();
    const OracleReport report = oracle_check(config, request);
    log << report.to_text();
    json meta = metadata("oracle-check", config, seconds_since(t0));
    json rows = json::array();
    for (const auto& r : report.rows)
        rows.push_back({{"name", r.name}, {"value", r.value}, {"limit", r.limit}, {"pass", r.pass}});
    meta["rows"] = rows;
    meta["pass"] = report.pass();
    write_file(output_path(config) / "oracle_check.json", meta.dump(1) + "\n");
    return report.pass() ? kExitOk : kExitNumerical;
}

}  // namespace vbspin
