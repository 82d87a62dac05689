// dynamics.hpp: per-cluster master-equation integration with the extended
// Lindbladian that injects flip-flop rates measured in the other clusters.
//
// Conventions: H in MHz, t in us, drho/dt = -i 2pi [H, rho] + L(rho).
// The electron is slot 0 of every cluster, so the state splits into
// levels x levels blocks of size bath_dim; every dissipator below acts
// blockwise on that structure.

#pragma once

#include "vbspin/clusters.hpp"
#include "vbspin/spin_algebra.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vbspin {

class WorkerPool;

/// Source-level populations below this skip their jump term for the step.
inline constexpr double kRateGuard = 1e-12;

/// Flip-flop rates injected into each cluster. rates[k](m, n) >= 0 is the
/// population flow per us from central level n to m, realized by the jump
/// operator C_mn = |m><n| (x) Id_bath.
struct SyncRates {
    std::vector<RealMatrix> rates;
};

/// Extended Lindbladian: Sum_mn rate_mn / Tr(C^dag C rho) * (C rho C^dag - {rho, C^dag C}/2).
/// `levels` is the electron dimension; terms whose source population is
/// below `guard` are skipped.
Matrix extended_lindbladian(const Matrix& rho, std::size_t levels, const RealMatrix& rates,
                            double guard = kRateGuard);

/// Pure dephasing of the electron coherences: off-diagonal electron blocks
/// decay at 1/T2.
Matrix dephasing_rhs(const Matrix& rho, std::size_t levels, double T2);

/// Exact dephasing over dt: off-diagonal electron blocks scaled by exp(-dt/T2).
Matrix dephasing_channel(const Matrix& rho, std::size_t levels, double T2, double dt);

/// -i 2pi [H, rho] for Hermitian rho, evaluated with a single product.
Matrix coherent_rhs(const Matrix& rho, const Matrix& H);

/// Full right-hand side: coherent + extended Lindbladian (+ dephasing).
Matrix liouville_rhs(const Matrix& rho, const Matrix& H, std::size_t levels, const RealMatrix& rates,
                     std::optional<double> T2);

/// Instantaneous coherent population currents between electron levels:
/// J(m, n) = 4pi Im Tr(P_m H P_n rho), the flow n -> m. Antisymmetric.
RealMatrix coherent_currents(const Matrix& rho, const Matrix& H, std::size_t levels);

/// Population of every electron level.
std::vector<double> level_populations(const Matrix& rho, std::size_t levels);

/// One classical RK4 step. Throws NumericalAbort on NaN/Inf.
Matrix rk4_step(const Matrix& rho, const std::function<Matrix(const Matrix&)>& rhs, double dt);

/// rho(t) = U rho0 U^dag, U = exp(-i 2pi H t), through the eigendecomposition of H.
Matrix propagate_exact(const Matrix& H, const Matrix& rho0, double t);

/// Rates each cluster receives: the signed coherent transfers measured over
/// the last window in all *other* clusters, summed in ascending cluster
/// order, divided by the window length and resolved to non-negative
/// entries on the transfer's direction.
SyncRates measure_flip_rates(std::span<const RealMatrix> window_transfers, int window_steps, double dt);

enum class Integrator {
    RK4,        // classical RK4 on the full right-hand side
    SplitExact  // exact coherent propagator + Strang-split dissipator
};

std::string integrator_name(Integrator i);
Integrator parse_integrator(const std::string& name);

struct SimulationConfig {
    double B_z = 800.0;            // G
    double dt = 2.5e-6;            // us
    double t_max = 1.0;            // us
    int sync_period = 100;         // steps
    int record_period = 4000;      // steps
    std::optional<double> dephasing_T2;  // us
    int checkpoint_period = 0;     // steps, 0 disables
    double p0 = 0.7;               // initial m_s = 0 population
    bool synchronize = true;
    // Subtract the flow of a core-only reference cluster before injecting,
    // so clusters sharing a core only exchange what their bath spins add.
    bool core_baseline = false;
    Integrator integrator = Integrator::RK4;
    int split_chunk = 10;          // steps per exact-propagator chunk
    bool record_nuclear = true;
    bool record_all_clusters = false;

    /// Throws ConfigError naming the offending field.
    void validate() const;
    std::int64_t total_steps() const;
};

/// Recorded observables. columns[c][i] belongs to times[i].
struct TimeSeries {
    std::vector<double> times;
    std::vector<std::string> names;
    std::vector<std::vector<double>> columns;
    double worst_min_eigenvalue = 0.0;
    int positivity_violations = 0;

    const std::vector<double>& column(const std::string& name) const;
    std::size_t size() const { return times.size(); }
    /// CSV with header `t_us,<names...>`.
    std::string to_csv() const;
};

/// Resumable state of a multi-cluster run.
struct SimulationState {
    std::int64_t step = 0;
    std::vector<Matrix> rho;
    std::vector<RealMatrix> transfers;  // coherent transfer accumulated in the open window
    SyncRates applied;                  // rates currently injected
    TimeSeries series;
};

/// Multi-cluster evolution with bulk-synchronous rate exchange.
class Simulation {
public:
    /// `core_hamiltonian` (electron + core nuclei only) is required when
    /// config.core_baseline is set; the reference cluster then occupies the
    /// last slot of every per-cluster vector in the state.
    Simulation(std::vector<Cluster> clusters, std::vector<Matrix> hamiltonians, SimulationConfig config,
               std::optional<Matrix> core_hamiltonian = std::nullopt);
    ~Simulation();
    Simulation(Simulation&&) noexcept;

    const SimulationConfig& config() const { return config_; }
    const std::vector<Cluster>& clusters() const { return clusters_; }
    const SimulationState& state() const { return state_; }

    /// Replace the state (checkpoint resume). Dimensions are validated.
    void restore(SimulationState state);

    using CheckpointSink = std::function<void(const SimulationState&)>;

    /// Advance to t_max (or `stop_step` when given). Records, synchronizes
    /// and checkpoints on schedule.
    const TimeSeries& run(WorkerPool* pool = nullptr, const CheckpointSink& sink = {},
                          std::optional<std::int64_t> stop_step = std::nullopt);

private:
    struct ClusterEngine;

    void record();
    void synchronize(std::int64_t window_steps);

    std::vector<Cluster> clusters_;
    SimulationConfig config_;
    std::vector<ClusterEngine> engines_;
    bool baseline_ = false;
    SimulationState state_;
};

/// The electron + core part of a cluster, as used for the core baseline.
Cluster core_only(const Cluster& cluster);

/// Build every cluster Hamiltonian at cfg.B_z and run to completion.
TimeSeries evolve(const std::vector<Cluster>& clusters, const ElectronParams& params, const SiteSet& sites,
                  const SpeciesTable& species, const SimulationConfig& config, WorkerPool* pool = nullptr);

}  // namespace vbspin
