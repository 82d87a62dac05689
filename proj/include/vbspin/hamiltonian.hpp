// hamiltonian.hpp: electron ZFS/Zeeman, nuclear Zeeman, hyperfine and
// nuclear dipolar terms, per-cluster assembly, site-file ingestion.
//
// Units: every Hamiltonian is in linear-frequency MHz, fields in gauss,
// distances in angstrom. Gyromagnetic ratios are linear (gamma/2pi):
// electron in MHz/G, nuclei in kHz/G (signed).

#pragma once

#include "vbspin/spin_algebra.hpp"

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace vbspin {

struct Cluster;

/// h * mu0/(4 pi) expressed as kHz * A^3 / (kHz/G)^2: the dipolar prefactor
/// that turns gamma_i * gamma_j / r^3 into a linear frequency.
inline constexpr double kDipolarPrefactor_kHz = 6.62607015;

/// In-plane hBN lattice constant, angstrom.
inline constexpr double kHbnLatticeConstant = 2.504;

/// Generated sites closer than this carry no point-dipole tensor (angstrom).
inline constexpr double kDefaultPointDipoleCutoff = 2.0;

struct ElectronParams {
    double D = 3479.0;       // MHz
    double E = 0.0;          // MHz
    double gamma_e = 2.8025; // MHz/G, positive convention g_e mu_B / h
};

struct SpinSpecies {
    std::string name;
    double s = 0.5;
    double gamma_n = 0.0;  // kHz/G, signed
};

/// Species keyed by label ("15N", "11B").
class SpeciesTable {
public:
    static SpeciesTable defaults();

    void set(SpinSpecies species);
    const SpinSpecies& at(const std::string& name) const;
    bool contains(const std::string& name) const { return table_.count(name) != 0; }
    const std::map<std::string, SpinSpecies>& entries() const { return table_; }

private:
    std::map<std::string, SpinSpecies> table_;
};

struct NuclearSite {
    int id = 0;
    std::string species;
    Vector3 position = Vector3::Zero();  // angstrom, relative to the vacancy
    Matrix3 A = Matrix3::Zero();         // MHz
};

struct DipolarCoupling {
    Matrix3 J = Matrix3::Zero();  // kHz
};

/// gamma_e B_z S_z + D (S_z^2 - S(S+1)/3) + E (S_x^2 - S_y^2), 3x3 in the
/// m_s = +1, 0, -1 basis.
Matrix electron_hamiltonian(const ElectronParams& p, double B_z);

/// -gamma_n B_z I_z on the nucleus' own (2s+1)-dim space.
Matrix nuclear_zeeman(const SpinSpecies& species, double B_z);

/// Point-dipole tensor between two nuclei, J_ab = c g_i g_j / r^3 (d_ab - 3 r_a r_b).
DipolarCoupling dipolar_tensor(const NuclearSite& a, const NuclearSite& b,
                               const SpeciesTable& species);

/// Electron-nuclear point-dipole tensor in MHz. Refuses positions closer than
/// `cutoff`: those need computed tensors.
Matrix3 point_dipole_hyperfine(const Vector3& position, const SpinSpecies& species,
                               double gamma_e, double cutoff = kDefaultPointDipoleCutoff);

/// sqrt((Axx - Ayy)^2 / 4 + Axy^2): transverse magnitude invariant under
/// rotations about z.
double perpendicular_invariant(const Matrix3& A);

/// Sum_ab A_ab S_a I_b embedded in `dims`. Rejects asymmetric A.
Matrix hyperfine_term(const Matrix3& A, const SpinOperators& electron, const SpinOperators& nucleus,
                      std::span<const std::size_t> dims, std::size_t electron_slot,
                      std::size_t nuclear_slot);

/// Sum_ab J_ab I_a^i I_b^j embedded in `dims` (J in kHz, result in MHz).
Matrix dipolar_term(const DipolarCoupling& coupling, const SpinOperators& first,
                    const SpinOperators& second, std::span<const std::size_t> dims,
                    std::size_t first_slot, std::size_t second_slot);

/// Individually assembled pieces of a cluster Hamiltonian.
struct ClusterHamiltonianTerms {
    Matrix electron;
    Matrix nuclear_zeeman;
    Matrix hyperfine;
    Matrix dipolar;

    Matrix total() const { return electron + nuclear_zeeman + hyperfine + dipolar; }
};

/// Largest cluster Hilbert dimension accepted.
inline constexpr std::size_t kMaxClusterDim = 64;

/// Sorted-by-id site list with id lookup.
class SiteSet {
public:
    SiteSet() = default;
    explicit SiteSet(std::vector<NuclearSite> sites);

    const std::vector<NuclearSite>& sites() const { return sites_; }
    const NuclearSite& by_id(int id) const;
    bool contains(int id) const;
    std::size_t size() const { return sites_.size(); }

private:
    std::vector<NuclearSite> sites_;
};

ClusterHamiltonianTerms cluster_hamiltonian_terms(const Cluster& cluster, const ElectronParams& params,
                                                  const SiteSet& sites, const SpeciesTable& species,
                                                  double B_z);

/// H_S + Sum_i (S A_i - gamma_i B) I_i + intra-cluster nuclear dipolar sum.
Matrix cluster_hamiltonian(const Cluster& cluster, const ElectronParams& params, const SiteSet& sites,
                           const SpeciesTable& species, double B_z);

/// Validate a site list: unique ids, symmetric A (1e-9), finite positions,
/// known species. Returns the list sorted by id.
std::vector<NuclearSite> validate_sites(std::vector<NuclearSite> sites, const SpeciesTable& species);

/// Read the JSON site file. Syntax errors report the line number.
std::vector<NuclearSite> load_sites(const std::filesystem::path& path,
                                    const SpeciesTable& species = SpeciesTable::defaults());
std::vector<NuclearSite> parse_sites(const std::string& text,
                                     const SpeciesTable& species = SpeciesTable::defaults());
std::string sites_to_json(std::span<const NuclearSite> sites);
void save_sites(const std::filesystem::path& path, std::span<const NuclearSite> sites);

}  // namespace vbspin
