#include "vbspin/clusters.hpp"

#include "vbspin/errors.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

namespace vbspin {

std::vector<int> Cluster::nuclear_site_ids() const {
    std::vector<int> ids = core_site_ids;
    ids.insert(ids.end(), bath_site_ids.begin(), bath_site_ids.end());
    return ids;
}

void ModelSpec::validate() const {
    if (variant < 1 || variant > 4) throw ConfigError("model.variant must be 1, 2, 3 or 4");
    if (n_nitrogen_clusters < 0 || n_boron_clusters < 0)
        throw ConfigError("model: cluster counts must be non-negative");
    if (n_nitrogen_clusters + n_boron_clusters == 0) throw ConfigError("model: no clusters requested");
    if (variant == 3 && !(dephasing_T2 && *dephasing_T2 > 0.0))
        throw ConfigError("model.dephasing_T2 must be > 0 for variant 3");
    if (variant != 3 && dephasing_T2)
        throw ConfigError("model.dephasing_T2 is only meaningful for variant 3");
    if ((variant == 1 || variant == 4) && n_boron_clusters != 0)
        throw ConfigError("model: variant " + std::to_string(variant) + " has no boron clusters");
    if (variant == 4 && !core_site_ids.empty() && core_site_ids.size() != 3)
        throw ConfigError("model.core_site_ids must list exactly 3 nitrogen sites");
}

ModelSpec ModelSpec::paper_defaults(int variant) {
    ModelSpec m;
    m.variant = variant;
    switch (variant) {
        case 1: m.n_nitrogen_clusters = 32; break;
        case 2: m.n_nitrogen_clusters = 47; m.n_boron_clusters = 48; break;
        case 3:
            m.n_nitrogen_clusters = 47;
            m.n_boron_clusters = 48;
            m.dephasing_T2 = 0.2;
            break;
        case 4: m.n_nitrogen_clusters = 28; break;
        default: throw ConfigError("model.variant must be 1, 2, 3 or 4");
    }
    return m;
}

// ---------------------------------------------------------------- geometry

namespace {

double azimuth(const Vector3& p) {
    double phi = std::atan2(p.y(), p.x());
    if (phi < 0.0) phi += 2.0 * std::numbers::pi;
    // fold -0 / 2pi round-off back onto 0
    if (phi >= 2.0 * std::numbers::pi - 1e-12) phi = 0.0;
    return phi;
}

bool nearer(const NuclearSite& a, const NuclearSite& b) {
    const double ra = a.position.norm(), rb = b.position.norm();
    if (std::abs(ra - rb) > 1e-6) return ra < rb;
    const double pa = azimuth(a.position), pb = azimuth(b.position);
    if (std::abs(pa - pb) > 1e-9) return pa < pb;
    if (std::abs(a.position.z() - b.position.z()) > 1e-6) return a.position.z() < b.position.z();
    return a.id < b.id;
}

}  // namespace

std::vector<NuclearSite> nearest_first(std::vector<NuclearSite> sites) {
    std::stable_sort(sites.begin(), sites.end(), nearer);
    return sites;
}

std::vector<NuclearSite> generate_lattice_sites(double radius, int layers) {
    if (!(radius > 0.0)) throw ConfigError("generate_lattice_sites: radius must be > 0");
    if (layers < 1) throw ConfigError("generate_lattice_sites: layers must be >= 1");
    const double a = kHbnLatticeConstant;
    const Vector3 a1(a, 0.0, 0.0);
    const Vector3 a2(0.5 * a, 0.5 * std::sqrt(3.0) * a, 0.0);
    const Vector3 bond(0.0, a / std::sqrt(3.0), 0.0);  // B -> N within a cell
    const int nmax = static_cast<int>(std::ceil(2.0 * radius / a)) + 2;
    const int lo = -(layers - 1) / 2;

    std::vector<NuclearSite> sites;
    for (int l = lo; l < lo + layers; ++l) {
        const double z = l * kHbnInterlayer;
        if (std::abs(z) > radius) continue;
        const bool swapped = (l % 2) != 0;  // AA': boron sits above nitrogen
        for (int n1 = -nmax; n1 <= nmax; ++n1)
            for (int n2 = -nmax; n2 <= nmax; ++n2) {
                const Vector3 R = n1 * a1 + n2 * a2 + Vector3(0.0, 0.0, z);
                const Vector3 pb = swapped ? R + bond : R;
                const Vector3 pn = swapped ? R : R + bond;
                if (!(l == 0 && n1 == 0 && n2 == 0) && pb.norm() <= radius)
                    sites.push_back({0, kBoron, pb, Matrix3::Zero()});
                if (pn.norm() <= radius) sites.push_back({0, kNitrogen, pn, Matrix3::Zero()});
            }
    }
    sites = nearest_first(std::move(sites));
    for (std::size_t i = 0; i < sites.size(); ++i) sites[i].id = static_cast<int>(i);
    return sites;
}

std::vector<NuclearSite> attach_hyperfine(std::vector<NuclearSite> lattice, std::span<const NuclearSite> first_shell,
                                          const SpeciesTable& species, double gamma_e, double cutoff) {
    std::vector<bool> used(first_shell.size(), false);
    for (auto& site : lattice) {
        bool matched = false;
        for (std::size_t j = 0; j < first_shell.size(); ++j)
            if ((first_shell[j].position - site.position).norm() < 1e-3) {
                if (first_shell[j].species != site.species)
                    throw ConfigError("first-shell entry " + std::to_string(first_shell[j].id) + " is " +
                                      first_shell[j].species + " but the lattice has " + site.species);
                site.A = first_shell[j].A;
                used[j] = matched = true;
                break;
            }
        if (!matched) site.A = point_dipole_hyperfine(site.position, species.at(site.species), gamma_e, cutoff);
    }
    for (std::size_t j = 0; j < first_shell.size(); ++j)
        if (!used[j])
            throw ConfigError("first-shell entry " + std::to_string(first_shell[j].id) +
                              " does not sit on a generated lattice site");
    return lattice;
}

// ---------------------------------------------------------------- models

namespace {

Cluster make_cluster(int id, ElectronSpace space, std::vector<int> core, std::vector<int> bath,
                     const SiteSet& sites, const SpeciesTable& species) {
    Cluster c;
    c.id = id;
    c.electron = space;
    std::sort(core.begin(), core.end());
    std::sort(bath.begin(), bath.end());
    c.core_site_ids = std::move(core);
    c.bath_site_ids = std::move(bath);
    c.slot_dims.push_back(space == ElectronSpace::Full ? 3 : 2);
    for (int sid : c.nuclear_site_ids()) {
        const double s = species.at(sites.by_id(sid).species).s;
        c.slot_dims.push_back(static_cast<std::size_t>(std::lround(2.0 * s)) + 1);
    }
    c.hilbert_dim = product(c.slot_dims);
    if (c.hilbert_dim > kMaxClusterDim)
        throw ConfigError("cluster " + std::to_string(id) + ": Hilbert dimension " +
                          std::to_string(c.hilbert_dim) + " exceeds " + std::to_string(kMaxClusterDim));
    return c;
}

std::vector<int> ids_of_species(const SiteSet& sites, const std::string& name) {
    std::vector<NuclearSite> picked;
    for (const auto& s : sites.sites())
        if (s.species == name) picked.push_back(s);
    picked = nearest_first(std::move(picked));
    std::vector<int> ids;
    ids.reserve(picked.size());
    for (const auto& s : picked) ids.push_back(s.id);
    return ids;
}

void require(std::size_t have, std::size_t need, const std::string& what) {
    if (have < need)
        throw ConfigError("build_model: need " + std::to_string(need) + " " + what + " sites, have " +
                          std::to_string(have));
}

}  // namespace

std::vector<Cluster> build_model(const ModelSpec& spec, const SiteSet& sites, const SpeciesTable& species) {
    spec.validate();
    const auto nitrogen = ids_of_species(sites, kNitrogen);
    const auto boron = ids_of_species(sites, kBoron);
    const auto nN = static_cast<std::size_t>(spec.n_nitrogen_clusters);
    const auto nB = static_cast<std::size_t>(spec.n_boron_clusters);

    std::vector<Cluster> clusters;
    int next_id = 0;
    switch (spec.variant) {
        case 1:
            require(nitrogen.size(), nN, "nitrogen");
            for (std::size_t k = 0; k < nN; ++k)
                clusters.push_back(make_cluster(next_id++, ElectronSpace::Full, {}, {nitrogen[k]}, sites, species));
            break;
        case 2:
        case 3:
            require(nitrogen.size(), 3 * nN, "nitrogen");
            require(boron.size(), 2 * nB, "boron");
            for (std::size_t k = 0; k < nN; ++k)
                clusters.push_back(make_cluster(next_id++, ElectronSpace::Reduced, {},
                                                {nitrogen[3 * k], nitrogen[3 * k + 1], nitrogen[3 * k + 2]},
                                                sites, species));
            for (std::size_t k = 0; k < nB; ++k)
                clusters.push_back(make_cluster(next_id++, ElectronSpace::Reduced, {},
                                                {boron[2 * k], boron[2 * k + 1]}, sites, species));
            break;
        case 4: {
            std::vector<int> core = spec.core_site_ids;
            if (core.empty()) {
                require(nitrogen.size(), 3, "nitrogen");
                core.assign(nitrogen.begin(), nitrogen.begin() + 3);
            }
            const std::set<int> core_set(core.begin(), core.end());
            if (core_set.size() != 3) throw ConfigError("build_model: core sites must be 3 distinct ids");
            for (int id : core)
                if (sites.by_id(id).species != kNitrogen)
                    throw ConfigError("build_model: core site " + std::to_string(id) + " is not 15N");
            std::vector<int> pool;
            for (int id : nitrogen)
                if (!core_set.count(id)) pool.push_back(id);
            require(pool.size(), 2 * nN, "bath nitrogen");
            for (std::size_t k = 0; k < nN; ++k)
                clusters.push_back(make_cluster(next_id++, ElectronSpace::Reduced, core,
                                                {pool[2 * k], pool[2 * k + 1]}, sites, species));
            break;
        }
        default: throw ConfigError("model.variant must be 1, 2, 3 or 4");
    }

    std::set<int> seen;
    for (const auto& c : clusters)
        for (int id : c.bath_site_ids) {
            if (!seen.insert(id).second)
                throw ConfigError("build_model: site " + std::to_string(id) + " assigned to two clusters");
            if (std::find(c.core_site_ids.begin(), c.core_site_ids.end(), id) != c.core_site_ids.end())
                throw ConfigError("build_model: site " + std::to_string(id) + " is both core and bath");
        }
    return clusters;
}

Matrix reduce_electron_subspace(const Matrix& op, std::span<const std::size_t> dims,
                                std::size_t electron_slot) {
    if (electron_slot >= dims.size() || dims[electron_slot] != 3)
        throw std::invalid_argument("reduce_electron_subspace: electron slot must have dimension 3");
    if (static_cast<std::size_t>(op.rows()) != product(dims) || op.rows() != op.cols())
        throw std::invalid_argument("reduce_electron_subspace: dimension mismatch");
    const std::size_t right = product(dims.subspan(electron_slot + 1));
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < op.rows(); ++i) {
        const std::size_t digit = (static_cast<std::size_t>(i) / right) % 3;
        if (digit != 0) keep.push_back(i);  // drop m_s = +1
    }
    const auto n = static_cast<Eigen::Index>(keep.size());
    Matrix out(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) out(i, j) = op(keep[i], keep[j]);
    return out;
}

std::string channel_name(Channel c) {
    switch (c) {
        case Channel::ZeroMinus: return "0-";
        case Channel::ZeroPlus: return "0+";
        case Channel::Combined: return "combined";
    }
    return "?";
}

ChannelRun opposite_field_channel(const ModelSpec& spec, double B_z) {
    return ChannelRun{spec, -B_z, Channel::ZeroPlus};
}

std::string clusters_to_json(int variant, std::span<const Cluster> clusters) {
    nlohmann::json doc;
    doc["model"] = variant;
    doc["clusters"] = nlohmann::json::array();
    for (const auto& c : clusters)
        doc["clusters"].push_back({{"id", c.id},
                                   {"core", c.core_site_ids},
                                   {"bath", c.bath_site_ids},
                                   {"reduced_electron", c.reduced_electron()},
                                   {"hilbert_dim", c.hilbert_dim}});
    return doc.dump(1);
}

}  // namespace vbspin
