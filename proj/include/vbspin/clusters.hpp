// clusters.hpp: hBN site geometry around the boron vacancy and the four
// clusterization models.

#pragma once

#include "vbspin/hamiltonian.hpp"
#include "vbspin/spin_algebra.hpp"

#include <optional>
#include <string>
#include <vector>

namespace vbspin {

inline constexpr const char* kNitrogen = "15N";
inline constexpr const char* kBoron = "11B";

/// Interlayer spacing of bulk hBN (c/2), angstrom.
inline constexpr double kHbnInterlayer = 3.33;

/// One subsystem of the expansion. Slot order: electron, core nuclei
/// (ascending id), bath nuclei (ascending id).
struct Cluster {
    int id = 0;
    ElectronSpace electron = ElectronSpace::Full;
    std::vector<int> core_site_ids;
    std::vector<int> bath_site_ids;
    std::vector<std::size_t> slot_dims;
    std::size_t hilbert_dim = 0;

    bool reduced_electron() const { return electron == ElectronSpace::Reduced; }
    /// Site ids of the nuclear slots in slot order (slot k+1 holds entry k).
    std::vector<int> nuclear_site_ids() const;
    std::size_t electron_dim() const { return slot_dims.front(); }
    std::size_t bath_dim() const { return hilbert_dim / slot_dims.front(); }

    bool operator==(const Cluster&) const = default;
};

struct ModelSpec {
    int variant = 4;
    int n_nitrogen_clusters = 28;
    int n_boron_clusters = 0;
    std::optional<double> dephasing_T2;  // us, variant 3 only
    std::vector<int> core_site_ids;      // variant 4; empty selects the 3 nearest 15N

    /// Throws ConfigError when the variant's requirements are not met.
    void validate() const;

    /// Defaults for each variant (32 / 47+48 / 47+48 with T2 = 0.2 us / 28).
    static ModelSpec paper_defaults(int variant);
};

/// Honeycomb hBN sites within `radius` of a boron vacancy at the origin.
/// `layers` counts the layers kept (1 = monolayer, AA' stacking otherwise,
/// layer offsets centered on the defect layer). Ids follow the ordering by
/// (distance, azimuth, layer). Hyperfine tensors are left zero.
std::vector<NuclearSite> generate_lattice_sites(double radius, int layers = 1);

/// Sites ordered nearest-first with the (distance, azimuth, layer) tie-break.
std::vector<NuclearSite> nearest_first(std::vector<NuclearSite> sites);

/// Attach hyperfine tensors to lattice sites: sites matching a `first_shell`
/// position (to 1e-3 A) take its tensor, everything else gets the point-dipole
/// estimate. A site inside `cutoff` without a first-shell entry is an error.
std::vector<NuclearSite> attach_hyperfine(std::vector<NuclearSite> lattice, std::span<const NuclearSite> first_shell,
                                          const SpeciesTable& species, double gamma_e,
                                          double cutoff = kDefaultPointDipoleCutoff);

std::vector<Cluster> build_model(const ModelSpec& spec, const SiteSet& sites,
                                 const SpeciesTable& species = SpeciesTable::defaults());

/// Restrict an operator on (electron S=1) x rest to m_s in {0, -1}.
/// The electron occupies `electron_slot` of `dims` with dimension 3.
Matrix reduce_electron_subspace(const Matrix& op, std::span<const std::size_t> dims,
                                std::size_t electron_slot = 0);

/// Relaxation channel simulated within the reduced {0, -1} formalism.
enum class Channel { ZeroMinus, ZeroPlus, Combined };

std::string channel_name(Channel c);

struct ChannelRun {
    ModelSpec model;
    double B_z = 0.0;
    Channel channel = Channel::ZeroMinus;
};

/// Same clusterization with the field reversed: the reduced dynamics then
/// stand in for the |0> <-> |+1> channel.
ChannelRun opposite_field_channel(const ModelSpec& spec, double B_z);

/// Audit export: {"model":v, "clusters":[{"id":0,"core":[...],"bath":[...]}...]}
std::string clusters_to_json(int variant, std::span<const Cluster> clusters);

}  // namespace vbspin
