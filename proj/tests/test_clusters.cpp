#include "vbspin/clusters.hpp"
#include "vbspin/errors.hpp"

#include "doctest.h"

#include <cmath>
#include <numbers>
#include <set>

using namespace vbspin;

namespace {

std::vector<NuclearSite> first_shell() {
    return load_sites(std::string(VBSPIN_DATA_DIR) + "/first_shell_placeholder.json", SpeciesTable::defaults());
}

SiteSet lattice(double radius, int layers) {
    return SiteSet(attach_hyperfine(generate_lattice_sites(radius, layers), first_shell(), SpeciesTable::defaults(),
                                    2.8025));
}

}  // namespace

TEST_CASE("just above the first shell there are exactly three equidistant 15N") {
    const auto sites = generate_lattice_sites(1.5, 1);
    REQUIRE(sites.size() == 3);
    const double r = kHbnLatticeConstant / std::sqrt(3.0);
    for (const auto& s : sites) {
        CHECK(s.species == std::string(kNitrogen));
        CHECK(s.position.norm() == doctest::Approx(r));
    }
    // related by 120 degree rotations about z
    const double c = std::cos(2.0 * std::numbers::pi / 3), s = std::sin(2.0 * std::numbers::pi / 3);
    for (const auto& a : sites) {
        const Vector3 rotated(c * a.position.x() - s * a.position.y(), s * a.position.x() + c * a.position.y(), 0);
        bool found = false;
        for (const auto& b : sites) found = found || (b.position - rotated).norm() < 1e-9;
        CHECK(found);
    }
}

TEST_CASE("bulk 30 A sphere holds about as many atoms as the reference supercell") {
    const auto sites = generate_lattice_sites(30.0, 19);
    const double atoms = static_cast<double>(sites.size() + 1);  // plus the vacancy site
    CHECK(std::abs(atoms - 12702.0) / 12702.0 < 0.03);
    std::set<int> ids;
    for (const auto& s : sites) ids.insert(s.id);
    CHECK(ids.size() == sites.size());
    // ids follow nearest-first order
    for (std::size_t i = 1; i < sites.size(); ++i)
        CHECK(sites[i].position.norm() >= sites[i - 1].position.norm() - 1e-6);
}

TEST_CASE("AA' stacking puts nitrogen directly above the vacancy") {
    const auto sites = generate_lattice_sites(3.4, 3);
    int above = 0;
    for (const auto& s : sites)
        if (std::abs(s.position.x()) < 1e-9 && std::abs(s.position.y()) < 1e-9) {
            CHECK(s.species == std::string(kNitrogen));
            CHECK(std::abs(s.position.z()) == doctest::Approx(kHbnInterlayer));
            ++above;
        }
    CHECK(above == 2);
}

TEST_CASE("attach_hyperfine demands first-shell tensors inside the cutoff") {
    const auto sp = SpeciesTable::defaults();
    CHECK_THROWS_AS(attach_hyperfine(generate_lattice_sites(5.0, 1), {}, sp, 2.8025), std::invalid_argument);
    const auto sites = attach_hyperfine(generate_lattice_sites(5.0, 1), first_shell(), sp, 2.8025);
    const auto fs = first_shell();
    for (std::size_t i = 0; i < 3; ++i) CHECK((sites[i].A - fs[i].A).cwiseAbs().maxCoeff() == 0.0);
    CHECK(sites.size() > 3);
}

TEST_CASE("model 4: shared three-nitrogen core, disjoint bath pairs, dim 64") {
    const auto sites = lattice(30.0, 19);
    const auto sp = SpeciesTable::defaults();
    const auto clusters = build_model(ModelSpec::paper_defaults(4), sites, sp);
    REQUIRE(clusters.size() == 28);
    std::set<int> bath, spins;
    for (const auto& c : clusters) {
        CHECK(c.hilbert_dim == 64);
        CHECK(c.reduced_electron());
        CHECK(c.core_site_ids == std::vector<int>{0, 1, 2});
        CHECK(c.bath_site_ids.size() == 2);
        for (int id : c.bath_site_ids) {
            CHECK(bath.insert(id).second);
            CHECK(sites.by_id(id).species == std::string(kNitrogen));
        }
        for (int id : c.nuclear_site_ids()) spins.insert(id);
    }
    CHECK(spins.size() + 1 == 60);  // electron + 3 core + 56 bath
    // nearest-first: the first cluster's bath is the closest pair after the core
    CHECK(sites.by_id(clusters[0].bath_site_ids[0]).position.norm() <=
          sites.by_id(clusters[27].bath_site_ids[0]).position.norm());
}

TEST_CASE("model 2 / 3 cluster counts and total spin number") {
    const auto sites = lattice(30.0, 19);
    const auto clusters = build_model(ModelSpec::paper_defaults(2), sites, SpeciesTable::defaults());
    REQUIRE(clusters.size() == 95);
    std::size_t spins = 1;
    for (const auto& c : clusters) {
        spins += c.bath_site_ids.size();
        CHECK(c.hilbert_dim == (c.bath_site_ids.size() == 3 ? 16u : 32u));
    }
    CHECK(spins == 238);
    auto m3 = ModelSpec::paper_defaults(3);
    CHECK(m3.dephasing_T2.value() == doctest::Approx(0.2));
    CHECK(build_model(m3, sites, SpeciesTable::defaults()) == clusters);
}

TEST_CASE("model 1 uses the full electron and one nitrogen per cluster") {
    const auto sites = lattice(30.0, 19);
    const auto clusters = build_model(ModelSpec::paper_defaults(1), sites, SpeciesTable::defaults());
    REQUIRE(clusters.size() == 32);
    CHECK(clusters[0].hilbert_dim == 6);
    CHECK(clusters[0].bath_site_ids == std::vector<int>{0});
    CHECK_FALSE(clusters[0].reduced_electron());
}

TEST_CASE("model validation errors") {
    const auto sites = lattice(6.0, 1);
    const auto sp = SpeciesTable::defaults();
    ModelSpec m = ModelSpec::paper_defaults(4);
    CHECK_THROWS_AS(build_model(m, sites, sp), ConfigError);  // not enough bath nitrogen
    m.n_nitrogen_clusters = 1;
    m.core_site_ids = {0, 1, 1};
    CHECK_THROWS_AS(build_model(m, sites, sp), ConfigError);
    ModelSpec bad = ModelSpec::paper_defaults(3);
    bad.dephasing_T2.reset();
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    ModelSpec big = ModelSpec::paper_defaults(1);
    big.variant = 7;
    CHECK_THROWS_AS(big.validate(), ConfigError);
}

TEST_CASE("cluster dimension cap") {
    const auto sites = lattice(10.0, 1);
    ModelSpec m = ModelSpec::paper_defaults(2);
    m.n_nitrogen_clusters = 1;
    m.n_boron_clusters = 1;
    for (const auto& c : build_model(m, sites, SpeciesTable::defaults())) CHECK(c.hilbert_dim <= kMaxClusterDim);
}

TEST_CASE("reduce_electron_subspace drops the m_s = +1 rows and columns") {
    const std::vector<std::size_t> dims{3, 2};
    Matrix op = Matrix::Zero(6, 6);
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) op(i, j) = cplx(10 * i + j, 0);
    const Matrix r = reduce_electron_subspace(op, dims, 0);
    REQUIRE(r.rows() == 4);
    CHECK(r(0, 0).real() == 22);
    CHECK(r(3, 3).real() == 55);
}

TEST_CASE("opposite-field channel flips the sign of B") {
    const auto run = opposite_field_channel(ModelSpec::paper_defaults(4), 400.0);
    CHECK(run.B_z == -400.0);
    CHECK(run.channel == Channel::ZeroPlus);
    CHECK(channel_name(Channel::ZeroMinus) == "0-");
    CHECK(channel_name(Channel::Combined) == "combined");
}
