#include "vbspin/hamiltonian.hpp"

#include "vbspin/clusters.hpp"
#include "vbspin/errors.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace vbspin {

using nlohmann::json;

// ---------------------------------------------------------------- species

SpeciesTable SpeciesTable::defaults() {
    SpeciesTable t;
    // gamma/2pi from standard NMR tables: 15N -4.3173 MHz/T, 11B 13.6630 MHz/T
    t.set({kNitrogen, 0.5, -0.43173});
    t.set({kBoron, 1.5, 1.36630});
    return t;
}

void SpeciesTable::set(SpinSpecies species) {
    const double twice = 2.0 * species.s;
    if (species.s <= 0.0 || std::abs(twice - std::round(twice)) > 1e-12)
        throw ConfigError("species " + species.name + ": spin must be a positive half-integer");
    table_[species.name] = std::move(species);
}

const SpinSpecies& SpeciesTable::at(const std::string& name) const {
    auto it = table_.find(name);
    if (it == table_.end()) throw ConfigError("unknown species '" + name + "'");
    return it->second;
}

// ---------------------------------------------------------------- terms

Matrix electron_hamiltonian(const ElectronParams& p, double B_z) {
    const auto S = spin_operators(1.0);
    const Matrix id = Matrix::Identity(3, 3);
    Matrix H = p.gamma_e * B_z * S.Sz + p.D * (S.Sz * S.Sz - (2.0 / 3.0) * id);
    if (p.E != 0.0) H += p.E * (S.Sx * S.Sx - S.Sy * S.Sy);
    return H;
}

Matrix nuclear_zeeman(const SpinSpecies& species, double B_z) {
    const auto I = spin_operators(species.s);
    return (-species.gamma_n * 1e-3 * B_z) * I.Sz;
}

namespace {

Matrix3 dipole_shape(const Vector3& r) {
    const Vector3 u = r.normalized();
    return Matrix3::Identity() - 3.0 * u * u.transpose();
}

const Matrix& component(const SpinOperators& ops, int axis) {
    switch (axis) {
        case 0: return ops.Sx;
        case 1: return ops.Sy;
        default: return ops.Sz;
    }
}

// Sum_ab T_ab X_a Y_b with X on slot_x and Y on slot_y.
Matrix bilinear(const Matrix3& T, const SpinOperators& x, const SpinOperators& y,
                std::span<const std::size_t> dims, std::size_t slot_x, std::size_t slot_y) {
    const auto n = static_cast<Eigen::Index>(product(dims));
    Matrix out = Matrix::Zero(n, n);
    Matrix ex[3], ey[3];
    for (int a = 0; a < 3; ++a) {
        ex[a] = embed(component(x, a), slot_x, dims);
        ey[a] = embed(component(y, a), slot_y, dims);
    }
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
            if (T(a, b) != 0.0) out.noalias() += T(a, b) * (ex[a] * ey[b]);
    return out;
}

void require_symmetric(const Matrix3& A, const std::string& what) {
    if ((A - A.transpose()).cwiseAbs().maxCoeff() > 1e-9)
        throw std::invalid_argument(what + ": tensor is not symmetric");
}

}  // namespace

DipolarCoupling dipolar_tensor(const NuclearSite& a, const NuclearSite& b,
                               const SpeciesTable& species) {
    const Vector3 r = b.position - a.position;
    const double dist = r.norm();
    if (!(dist > 1e-9))
        throw std::invalid_argument("dipolar_tensor: sites " + std::to_string(a.id) + " and " +
                                    std::to_string(b.id) + " coincide");
    const double ga = species.at(a.species).gamma_n;
    const double gb = species.at(b.species).gamma_n;
    DipolarCoupling c;
    c.J = (kDipolarPrefactor_kHz * ga * gb / (dist * dist * dist)) * dipole_shape(r);
    return c;
}

Matrix3 point_dipole_hyperfine(const Vector3& position, const SpinSpecies& species, double gamma_e,
                               double cutoff) {
    const double dist = position.norm();
    if (!(dist > 0.0)) throw std::invalid_argument("point_dipole_hyperfine: zero radius");
    if (dist < cutoff) {
        std::ostringstream os;
        os << "point_dipole_hyperfine: r = " << dist << " A is inside the " << cutoff
           << " A cutoff; supply a computed tensor for this site";
        throw std::invalid_argument(os.str());
    }
    // electron moment is antiparallel to S, hence the sign; gamma_e MHz/G -> kHz/G, result kHz -> MHz
    const double scale = -kDipolarPrefactor_kHz * (gamma_e * 1e3) * species.gamma_n /
                         (dist * dist * dist) * 1e-3;
    return scale * dipole_shape(position);
}

double perpendicular_invariant(const Matrix3& A) {
    const double d = 0.5 * (A(0, 0) - A(1, 1));
    return std::sqrt(d * d + A(0, 1) * A(0, 1));
}

Matrix hyperfine_term(const Matrix3& A, const SpinOperators& electron, const SpinOperators& nucleus,
                      std::span<const std::size_t> dims, std::size_t electron_slot,
                      std::size_t nuclear_slot) {
    require_symmetric(A, "hyperfine_term");
    return bilinear(A, electron, nucleus, dims, electron_slot, nuclear_slot);
}

Matrix dipolar_term(const DipolarCoupling& coupling, const SpinOperators& first,
                    const SpinOperators& second, std::span<const std::size_t> dims,
                    std::size_t first_slot, std::size_t second_slot) {
    return bilinear(coupling.J * 1e-3, first, second, dims, first_slot, second_slot);
}

// ---------------------------------------------------------------- sites

SiteSet::SiteSet(std::vector<NuclearSite> sites) : sites_(std::move(sites)) {
    std::sort(sites_.begin(), sites_.end(),
              [](const NuclearSite& a, const NuclearSite& b) { return a.id < b.id; });
    for (std::size_t i = 1; i < sites_.size(); ++i)
        if (sites_[i].id == sites_[i - 1].id)
            throw ConfigError("duplicate site id " + std::to_string(sites_[i].id));
}

bool SiteSet::contains(int id) const {
    auto it = std::lower_bound(sites_.begin(), sites_.end(), id,
                               [](const NuclearSite& s, int v) { return s.id < v; });
    return it != sites_.end() && it->id == id;
}

const NuclearSite& SiteSet::by_id(int id) const {
    auto it = std::lower_bound(sites_.begin(), sites_.end(), id,
                               [](const NuclearSite& s, int v) { return s.id < v; });
    if (it == sites_.end() || it->id != id)
        throw ConfigError("site id " + std::to_string(id) + " not present");
    return *it;
}

ClusterHamiltonianTerms cluster_hamiltonian_terms(const Cluster& cluster, const ElectronParams& params,
                                                  const SiteSet& sites, const SpeciesTable& species,
                                                  double B_z) {
    if (cluster.hilbert_dim > kMaxClusterDim)
        throw ConfigError("cluster " + std::to_string(cluster.id) + ": Hilbert dimension " +
                          std::to_string(cluster.hilbert_dim) + " exceeds " +
                          std::to_string(kMaxClusterDim));
    const auto& dims = cluster.slot_dims;
    const auto n = static_cast<Eigen::Index>(cluster.hilbert_dim);
    const auto nuclear_ids = cluster.nuclear_site_ids();

    std::vector<const NuclearSite*> nuclei;
    std::vector<SpinOperators> nuclear_ops;
    for (std::size_t k = 0; k < nuclear_ids.size(); ++k) {
        const NuclearSite& site = sites.by_id(nuclear_ids[k]);
        const auto& sp = species.at(site.species);
        nuclei.push_back(&site);
        nuclear_ops.push_back(spin_operators(sp.s));
        if (nuclear_ops.back().dim() != dims[k + 1])
            throw ConfigError("cluster " + std::to_string(cluster.id) + ": slot dimension mismatch");
    }

    ClusterHamiltonianTerms t;
    Matrix He = electron_hamiltonian(params, B_z);
    if (cluster.reduced_electron()) {
        static constexpr std::size_t kThree[] = {3};
        He = reduce_electron_subspace(He, kThree, 0);
    }
    t.electron = embed(He, 0, dims);

    const auto S = electron_operators(cluster.electron);
    t.nuclear_zeeman = Matrix::Zero(n, n);
    t.hyperfine = Matrix::Zero(n, n);
    t.dipolar = Matrix::Zero(n, n);
    for (std::size_t k = 0; k < nuclei.size(); ++k) {
        const auto& sp = species.at(nuclei[k]->species);
        t.nuclear_zeeman += embed(nuclear_zeeman(sp, B_z), k + 1, dims);
        t.hyperfine += hyperfine_term(nuclei[k]->A, S, nuclear_ops[k], dims, 0, k + 1);
        for (std::size_t l = k + 1; l < nuclei.size(); ++l) {
            const auto J = dipolar_tensor(*nuclei[k], *nuclei[l], species);
            t.dipolar += dipolar_term(J, nuclear_ops[k], nuclear_ops[l], dims, k + 1, l + 1);
        }
    }
    return t;
}

Matrix cluster_hamiltonian(const Cluster& cluster, const ElectronParams& params, const SiteSet& sites,
                           const SpeciesTable& species, double B_z) {
    Matrix H = cluster_hamiltonian_terms(cluster, params, sites, species, B_z).total();
    // remove rounding asymmetry so the commutator stays exactly Hermitian
    return 0.5 * (H + H.adjoint());
}

// ---------------------------------------------------------------- site files

std::vector<NuclearSite> validate_sites(std::vector<NuclearSite> sites, const SpeciesTable& species) {
    std::sort(sites.begin(), sites.end(),
              [](const NuclearSite& a, const NuclearSite& b) { return a.id < b.id; });
    for (std::size_t i = 0; i < sites.size(); ++i) {
        const auto& s = sites[i];
        if (i > 0 && sites[i - 1].id == s.id)
            throw ConfigError("duplicate site id " + std::to_string(s.id));
        if (!species.contains(s.species))
            throw ConfigError("site " + std::to_string(s.id) + ": unknown species '" + s.species + "'");
        if (!s.position.allFinite())
            throw ConfigError("site " + std::to_string(s.id) + ": non-finite position");
        if (!s.A.allFinite() || (s.A - s.A.transpose()).cwiseAbs().maxCoeff() > 1e-9)
            throw ConfigError("site " + std::to_string(s.id) + ": hyperfine tensor is not symmetric");
    }
    return sites;
}

namespace {

std::size_t line_of(const std::string& text, std::size_t byte) {
    byte = std::min(byte, text.size());
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<long>(byte), '\n'));
}

}  // namespace

std::vector<NuclearSite> parse_sites(const std::string& text, const SpeciesTable& species) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("site file: parse error at line " + std::to_string(line_of(text, e.byte)) +
                          ": " + e.what());
    }
    std::vector<NuclearSite> sites;
    try {
        if (doc.contains("units")) {
            const auto& u = doc.at("units");
            if (u.value("position", "angstrom") != "angstrom" || u.value("hyperfine", "MHz") != "MHz")
                throw ConfigError("site file: units must be angstrom / MHz");
        }
        for (const auto& entry : doc.at("sites")) {
            NuclearSite s;
            s.id = entry.at("id").get<int>();
            s.species = entry.at("species").get<std::string>();
            const auto pos = entry.at("pos").get<std::vector<double>>();
            if (pos.size() != 3) throw ConfigError("site " + std::to_string(s.id) + ": pos needs 3 entries");
            s.position = Vector3(pos[0], pos[1], pos[2]);
            const auto A = entry.at("A").get<std::vector<std::vector<double>>>();
            if (A.size() != 3) throw ConfigError("site " + std::to_string(s.id) + ": A must be 3x3");
            for (int a = 0; a < 3; ++a) {
                if (A[a].size() != 3) throw ConfigError("site " + std::to_string(s.id) + ": A must be 3x3");
                for (int b = 0; b < 3; ++b) s.A(a, b) = A[a][b];
            }
            sites.push_back(std::move(s));
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("site file: ") + e.what());
    }
    return validate_sites(std::move(sites), species);
}

std::vector<NuclearSite> load_sites(const std::filesystem::path& path, const SpeciesTable& species) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open site file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_sites(buf.str(), species);
}

std::string sites_to_json(std::span<const NuclearSite> sites) {
    json doc;
    doc["units"] = {{"position", "angstrom"}, {"hyperfine", "MHz"}};
    doc["sites"] = json::array();
    for (const auto& s : sites) {
        json A = json::array();
        for (int a = 0; a < 3; ++a) A.push_back({s.A(a, 0), s.A(a, 1), s.A(a, 2)});
        doc["sites"].push_back({{"id", s.id},
                                {"species", s.species},
                                {"pos", {s.position.x(), s.position.y(), s.position.z()}},
                                {"A", A}});
    }
    return doc.dump(1);
}

void save_sites(const std::filesystem::path& path, std::span<const NuclearSite> sites) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write site file " + path.string());
    out << sites_to_json(sites) << '\n';
}

}  // namespace vbspin
