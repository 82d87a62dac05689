#include "vbspin/dynamics.hpp"

#include "vbspin/errors.hpp"
#include "vbspin/worker_pool.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <numbers>
#include <sstream>

namespace vbspin {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

Eigen::Index block_size(const Matrix& rho, std::size_t levels) {
    const auto L = static_cast<Eigen::Index>(levels);
    if (L == 0 || rho.rows() % L != 0 || rho.rows() != rho.cols())
        throw std::invalid_argument("state dimension is not a multiple of the electron dimension");
    return rho.rows() / L;
}

void require_finite(const Matrix& m, const char* where) {
    if (!m.allFinite()) throw NumericalAbort(std::string(where) + ": non-finite density matrix entry");
}

}  // namespace

// ---------------------------------------------------------------- right-hand sides

Matrix extended_lindbladian(const Matrix& rho, std::size_t levels, const RealMatrix& rates, double guard) {
    const Eigen::Index b = block_size(rho, levels);
    const auto L = static_cast<Eigen::Index>(levels);
    Matrix out = Matrix::Zero(rho.rows(), rho.cols());
    if (rates.rows() != L || rates.cols() != L) return out;
    for (Eigen::Index n = 0; n < L; ++n) {
        double outflow = 0.0;  // sum of rates leaving level n, each normalized below
        for (Eigen::Index m = 0; m < L; ++m)
            if (m != n && rates(m, n) > 0.0) outflow += rates(m, n);
        if (outflow == 0.0) continue;
        const double pn = rho.block(n * b, n * b, b, b).trace().real();
        if (pn < guard) continue;
        for (Eigen::Index m = 0; m < L; ++m) {
            if (m == n || !(rates(m, n) > 0.0)) continue;
            // C rho C^dag moves the level-n block onto level m
            out.block(m * b, m * b, b, b) += (rates(m, n) / pn) * rho.block(n * b, n * b, b, b);
        }
        // -{rho, P_n}/2 summed over every jump leaving n
        const double g = outflow / pn;
        for (Eigen::Index j = 0; j < L; ++j) {
            if (j == n) {
                out.block(n * b, n * b, b, b) -= g * rho.block(n * b, n * b, b, b);
            } else {
                out.block(n * b, j * b, b, b) -= 0.5 * g * rho.block(n * b, j * b, b, b);
                out.block(j * b, n * b, b, b) -= 0.5 * g * rho.block(j * b, n * b, b, b);
            }
        }
    }
    return out;
}

Matrix dephasing_rhs(const Matrix& rho, std::size_t levels, double T2) {
    if (!(T2 > 0.0)) throw std::invalid_argument("dephasing: T2 must be > 0");
    const Eigen::Index b = block_size(rho, levels);
    const auto L = static_cast<Eigen::Index>(levels);
    Matrix out = Matrix::Zero(rho.rows(), rho.cols());
    for (Eigen::Index i = 0; i < L; ++i)
        for (Eigen::Index j = 0; j < L; ++j)
            if (i != j) out.block(i * b, j * b, b, b) = (-1.0 / T2) * rho.block(i * b, j * b, b, b);
    return out;
}

Matrix dephasing_channel(const Matrix& rho, std::size_t levels, double T2, double dt) {
    if (!(T2 > 0.0)) throw std::invalid_argument("dephasing_channel: T2 must be > 0");
    const Eigen::Index b = block_size(rho, levels);
    const auto L = static_cast<Eigen::Index>(levels);
    const double f = std::exp(-dt / T2);
    Matrix out = rho;
    for (Eigen::Index i = 0; i < L; ++i)
        for (Eigen::Index j = 0; j < L; ++j)
            if (i != j) out.block(i * b, j * b, b, b) *= f;
    return out;
}

Matrix coherent_rhs(const Matrix& rho, const Matrix& H) {
    Matrix X = H * rho;
    // rho H = (H rho)^dag for Hermitian H and rho
    Matrix out = X - X.adjoint();
    out *= cplx(0.0, -kTwoPi);
    return out;
}

Matrix liouville_rhs(const Matrix& rho, const Matrix& H, std::size_t levels, const RealMatrix& rates,
                     std::optional<double> T2) {
    Matrix out = coherent_rhs(rho, H);
    if (rates.size() != 0 && rates.maxCoeff() > 0.0) out += extended_lindbladian(rho, levels, rates);
    if (T2) out += dephasing_rhs(rho, levels, *T2);
    return out;
}

RealMatrix coherent_currents(const Matrix& rho, const Matrix& H, std::size_t levels) {
    const Eigen::Index b = block_size(rho, levels);
    const auto L = static_cast<Eigen::Index>(levels);
    RealMatrix J = RealMatrix::Zero(L, L);
    for (Eigen::Index m = 0; m < L; ++m)
        for (Eigen::Index n = m + 1; n < L; ++n) {
            const cplx x = H.block(m * b, n * b, b, b)
                               .cwiseProduct(rho.block(n * b, m * b, b, b).transpose())
                               .sum();
            J(m, n) = 2.0 * kTwoPi * x.imag();
            J(n, m) = -J(m, n);
        }
    return J;
}

std::vector<double> level_populations(const Matrix& rho, std::size_t levels) {
    const Eigen::Index b = block_size(rho, levels);
    std::vector<double> p(levels);
    for (std::size_t m = 0; m < levels; ++m) {
        const auto o = static_cast<Eigen::Index>(m) * b;
        p[m] = rho.block(o, o, b, b).trace().real();
    }
    return p;
}

Matrix rk4_step(const Matrix& rho, const std::function<Matrix(const Matrix&)>& rhs, double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("rk4_step: dt must be > 0");
    const Matrix k1 = rhs(rho);
    const Matrix k2 = rhs(rho + (0.5 * dt) * k1);
    const Matrix k3 = rhs(rho + (0.5 * dt) * k2);
    const Matrix k4 = rhs(rho + dt * k3);
    Matrix out = rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    require_finite(out, "rk4_step");
    return out;
}

Matrix propagate_exact(const Matrix& H, const Matrix& rho0, double t) {
    if (H.rows() != H.cols() || H.rows() != rho0.rows())
        throw std::invalid_argument("propagate_exact: dimension mismatch");
    const double scale = std::max(1.0, H.cwiseAbs().maxCoeff());
    if (hermiticity_defect(H) > 1e-12 * scale)
        throw std::invalid_argument("propagate_exact: Hamiltonian is not Hermitian");
    Eigen::SelfAdjointEigenSolver<Matrix> es(H);
    const Matrix& V = es.eigenvectors();
    Eigen::VectorXcd phase(H.rows());
    for (Eigen::Index i = 0; i < H.rows(); ++i)
        phase(i) = std::exp(cplx(0.0, -kTwoPi * es.eigenvalues()(i) * t));
    const Matrix U = V * phase.asDiagonal() * V.adjoint();
    return U * rho0 * U.adjoint();
}

SyncRates measure_flip_rates(std::span<const RealMatrix> window_transfers, int window_steps, double dt) {
    if (window_steps < 1 || !(dt > 0.0))
        throw std::invalid_argument("measure_flip_rates: window shorter than one step");
    const double window = window_steps * dt;
    SyncRates out;
    out.rates.reserve(window_transfers.size());
    for (std::size_t k = 0; k < window_transfers.size(); ++k) {
        const RealMatrix& own = window_transfers[k];
        RealMatrix others = RealMatrix::Zero(own.rows(), own.cols());
        for (std::size_t j = 0; j < window_transfers.size(); ++j) {
            if (j == k) continue;
            if (window_transfers[j].rows() != own.rows())
                throw std::invalid_argument("measure_flip_rates: clusters disagree on level count");
            others += window_transfers[j];
        }
        RealMatrix r = RealMatrix::Zero(own.rows(), own.cols());
        for (Eigen::Index m = 0; m < r.rows(); ++m)
            for (Eigen::Index n = 0; n < r.cols(); ++n)
                if (m != n && others(m, n) > 0.0) r(m, n) = others(m, n) / window;
        out.rates.push_back(std::move(r));
    }
    return out;
}

std::string integrator_name(Integrator i) { return i == Integrator::RK4 ? "rk4" : "split-exact"; }

Integrator parse_integrator(const std::string& name) {
    if (name == "rk4") return Integrator::RK4;
    if (name == "split-exact") return Integrator::SplitExact;
    throw ConfigError("integrator must be 'rk4' or 'split-exact', got '" + name + "'");
}

// ---------------------------------------------------------------- config / series

void SimulationConfig::validate() const {
    if (!(dt > 0.0)) throw ConfigError("dt must be > 0");
    if (!(t_max >= dt)) throw ConfigError("t_max must be >= dt");
    if (sync_period < 1) throw ConfigError("sync_period must be >= 1");
    if (record_period < 1) throw ConfigError("record_period must be >= 1");
    if (checkpoint_period < 0) throw ConfigError("checkpoint_period must be >= 0");
    if (!(p0 >= 0.0 && p0 <= 1.0)) throw ConfigError("p0 must lie in [0, 1]");
    if (dephasing_T2 && !(*dephasing_T2 > 0.0)) throw ConfigError("dephasing_T2 must be > 0");
    if (!std::isfinite(B_z)) throw ConfigError("B_z must be finite");
    if (split_chunk < 1) throw ConfigError("split_chunk must be >= 1");
}

std::int64_t SimulationConfig::total_steps() const {
    return static_cast<std::int64_t>(std::llround(t_max / dt));
}

const std::vector<double>& TimeSeries::column(const std::string& name) const {
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw std::out_of_range("time series has no column '" + name + "'");
    return columns[static_cast<std::size_t>(it - names.begin())];
}

std::string TimeSeries::to_csv() const {
    std::string out = "t_us";
    for (const auto& n : names) out += "," + n;
    out += '\n';
    char buf[64];
    for (std::size_t i = 0; i < times.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.15g", times[i]);
        out += buf;
        for (const auto& c : columns) {
            std::snprintf(buf, sizeof buf, ",%.15g", c[i]);
            out += buf;
        }
        out += '\n';
    }
    return out;
}

// ---------------------------------------------------------------- cluster engine

struct Simulation::ClusterEngine {
    Matrix H;
    std::size_t levels = 0;

    // eigenbasis data for the split integrator
    bool spectral_ready = false;
    Matrix V;
    Eigen::VectorXd E;
    std::vector<std::pair<Eigen::Index, Eigen::Index>> pairs;
    std::vector<Matrix> pair_ops;  // V^dag P_m H P_n V, transposed

    struct ChunkCache {
        std::int64_t steps = 0;
        Matrix phase;                 // exp(-i 2pi (E_i - E_j) tau)
        std::vector<Matrix> weights;  // pair_ops .* integral of phase over the chunk
    };
    std::vector<ChunkCache> chunks;

    void prepare_spectral() {
        if (spectral_ready) return;
        Eigen::SelfAdjointEigenSolver<Matrix> es(H);
        V = es.eigenvectors();
        E = es.eigenvalues();
        // Newton-Schulz polish: the solver's V is unitary only to ~1e-15, and
        // that defect accumulates linearly over millions of chunks
        const Matrix I = Matrix::Identity(V.rows(), V.cols());
        for (int i = 0; i < 2; ++i) V = 0.5 * V * (3.0 * I - V.adjoint() * V);
        const auto L = static_cast<Eigen::Index>(levels);
        const Eigen::Index b = H.rows() / L;
        for (Eigen::Index m = 0; m < L; ++m)
            for (Eigen::Index n = m + 1; n < L; ++n) {
                Matrix X = Matrix::Zero(H.rows(), H.cols());
                X.block(m * b, n * b, b, b) = H.block(m * b, n * b, b, b);
                pairs.emplace_back(m, n);
                pair_ops.push_back((V.adjoint() * X * V).transpose());
            }
        spectral_ready = true;
    }

    const ChunkCache& chunk(std::int64_t steps, double dt) {
        for (const auto& c : chunks)
            if (c.steps == steps) return c;
        const double tau = static_cast<double>(steps) * dt;
        const Eigen::Index d = H.rows();
        ChunkCache c;
        c.steps = steps;
        c.phase.resize(d, d);
        Matrix integral(d, d);
        for (Eigen::Index i = 0; i < d; ++i)
            for (Eigen::Index j = 0; j < d; ++j) {
                const double w = kTwoPi * (E(i) - E(j));
                const double x = w * tau;
                c.phase(i, j) = std::exp(cplx(0.0, -x));
                if (std::abs(x) < 1e-4)
                    integral(i, j) = tau * cplx(1.0 - x * x / 6.0, -0.5 * x);
                else
                    integral(i, j) = (cplx(1.0) - c.phase(i, j)) / cplx(0.0, w);
            }
        for (const auto& op : pair_ops) c.weights.push_back(op.cwiseProduct(integral));
        chunks.push_back(std::move(c));
        return chunks.back();
    }

    std::function<Matrix(const Matrix&)> dissipator(const RealMatrix& rates, std::optional<double> T2) const {
        const bool has_rates = rates.size() != 0 && rates.maxCoeff() > 0.0;
        const std::size_t L = levels;
        return [&rates, T2, has_rates, L](const Matrix& r) {
            Matrix out = Matrix::Zero(r.rows(), r.cols());
            if (has_rates) out += extended_lindbladian(r, L, rates);
            if (T2) out += dephasing_rhs(r, L, *T2);
            return out;
        };
    }

    void advance_rk4(Matrix& rho, RealMatrix& transfer, const RealMatrix& rates, std::optional<double> T2,
                     std::int64_t steps, double dt) const {
        const bool has_rates = rates.size() != 0 && rates.maxCoeff() > 0.0;
        auto rhs = [&](const Matrix& r) {
            Matrix out = coherent_rhs(r, H);
            if (has_rates) out += extended_lindbladian(r, levels, rates);
            if (T2) out += dephasing_rhs(r, levels, *T2);
            return out;
        };
        for (std::int64_t s = 0; s < steps; ++s) {
            const Matrix k1 = rhs(rho);
            RealMatrix J = coherent_currents(rho, H, levels);
            Matrix stage = rho + (0.5 * dt) * k1;
            const Matrix k2 = rhs(stage);
            J += 2.0 * coherent_currents(stage, H, levels);
            stage = rho + (0.5 * dt) * k2;
            const Matrix k3 = rhs(stage);
            J += 2.0 * coherent_currents(stage, H, levels);
            stage = rho + dt * k3;
            const Matrix k4 = rhs(stage);
            J += coherent_currents(stage, H, levels);
            rho += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            transfer += (dt / 6.0) * J;
        }
        require_finite(rho, "rk4 integrator");
    }

    void advance_split(Matrix& rho, RealMatrix& transfer, const RealMatrix& rates, std::optional<double> T2,
                       std::int64_t steps, double dt, int chunk_steps) {
        prepare_spectral();
        const bool dissipative = T2.has_value() || (rates.size() != 0 && rates.maxCoeff() > 0.0);
        const auto diss = dissipator(rates, T2);
        std::int64_t done = 0;
        while (done < steps) {
            const std::int64_t n = std::min<std::int64_t>(chunk_steps, steps - done);
            const ChunkCache& c = chunk(n, dt);
            const double tau = static_cast<double>(n) * dt;
            if (dissipative) rho = rk4_step(rho, diss, 0.5 * tau);
            Matrix rt = V.adjoint() * rho * V;
            for (std::size_t p = 0; p < pairs.size(); ++p) {
                const double flow = 2.0 * kTwoPi * c.weights[p].cwiseProduct(rt).sum().imag();
                transfer(pairs[p].first, pairs[p].second) += flow;
                transfer(pairs[p].second, pairs[p].first) -= flow;
            }
            rt = rt.cwiseProduct(c.phase);
            rho = V * rt * V.adjoint();
            rho = 0.5 * (rho + rho.adjoint()).eval();
            if (dissipative) rho = rk4_step(rho, diss, 0.5 * tau);
            done += n;
        }
        require_finite(rho, "split integrator");
    }
};

// ---------------------------------------------------------------- simulation

Cluster core_only(const Cluster& cluster) {
    Cluster c = cluster;
    c.bath_site_ids.clear();
    c.slot_dims.resize(1 + c.core_site_ids.size());
    c.hilbert_dim = product(c.slot_dims);
    return c;
}

Simulation::Simulation(std::vector<Cluster> clusters, std::vector<Matrix> hamiltonians, SimulationConfig config,
                       std::optional<Matrix> core_hamiltonian)
    : clusters_(std::move(clusters)), config_(std::move(config)) {
    config_.validate();
    if (clusters_.empty()) throw ConfigError("simulation needs at least one cluster");
    if (hamiltonians.size() != clusters_.size())
        throw std::invalid_argument("Simulation: one Hamiltonian per cluster required");
    const std::size_t levels = clusters_.front().electron_dim();
    engines_.resize(clusters_.size());
    for (std::size_t k = 0; k < clusters_.size(); ++k) {
        const auto& c = clusters_[k];
        if (c.electron_dim() != levels)
            throw ConfigError("all clusters must share the electron space");
        if (static_cast<std::size_t>(hamiltonians[k].rows()) != c.hilbert_dim)
            throw std::invalid_argument("Simulation: Hamiltonian dimension mismatch");
        engines_[k].H = std::move(hamiltonians[k]);
        engines_[k].levels = levels;
        state_.rho.push_back(initial_state(c.slot_dims, 0, c.electron, config_.p0).matrix());
        state_.transfers.push_back(RealMatrix::Zero(static_cast<Eigen::Index>(levels),
                                                    static_cast<Eigen::Index>(levels)));
        state_.applied.rates.push_back(RealMatrix::Zero(static_cast<Eigen::Index>(levels),
                                                        static_cast<Eigen::Index>(levels)));
    }
    if (config_.core_baseline) {
        const Cluster ref = core_only(clusters_.front());
        if (ref.core_site_ids.empty()) throw ConfigError("core_baseline needs clusters with a core");
        for (const auto& c : clusters_)
            if (c.core_site_ids != ref.core_site_ids) throw ConfigError("core_baseline needs a shared core");
        if (!core_hamiltonian || static_cast<std::size_t>(core_hamiltonian->rows()) != ref.hilbert_dim)
            throw std::invalid_argument("Simulation: core_baseline needs the core-only Hamiltonian");
        baseline_ = true;
        engines_.emplace_back();
        engines_.back().H = std::move(*core_hamiltonian);
        engines_.back().levels = levels;
        state_.rho.push_back(initial_state(ref.slot_dims, 0, ref.electron, config_.p0).matrix());
        state_.transfers.push_back(state_.transfers.front());
        state_.applied.rates.push_back(state_.applied.rates.front());
    }

    auto& names = state_.series.names;
    names.push_back("pop_ms0");
    const Cluster& first = clusters_.front();
    if (config_.record_nuclear) {
        for (std::size_t j = 0; j < first.core_site_ids.size(); ++j)
            names.push_back("pop_core_n" + std::to_string(j + 1));
        bool any_bath = false;
        for (const auto& c : clusters_) any_bath = any_bath || !c.bath_site_ids.empty();
        if (any_bath) names.push_back("pop_bath_sum");
    }
    if (config_.record_all_clusters)
        for (std::size_t k = 0; k < clusters_.size(); ++k) names.push_back("pop_ms0_c" + std::to_string(k));
    state_.series.columns.resize(names.size());
}

Simulation::~Simulation() = default;
Simulation::Simulation(Simulation&&) noexcept = default;

void Simulation::restore(SimulationState state) {
    const std::size_t n = engines_.size();
    if (state.rho.size() != n || state.transfers.size() != n || state.applied.rates.size() != n)
        throw ConfigError("checkpoint: cluster count does not match the configuration");
    for (std::size_t k = 0; k < n; ++k)
        if (state.rho[k].rows() != engines_[k].H.rows())
            throw ConfigError("checkpoint: cluster " + std::to_string(k) + " dimension mismatch");
    if (state.series.names != state_.series.names)
        throw ConfigError("checkpoint: recorded columns do not match the configuration");
    state_ = std::move(state);
}

namespace {

// population of the top (m = +s) level of one nuclear slot, minus its depolarized value
double top_level_population(const Matrix& rho, const std::vector<std::size_t>& dims, std::size_t slot) {
    std::size_t right = 1;
    for (std::size_t s = slot + 1; s < dims.size(); ++s) right *= dims[s];
    double p = 0.0;
    for (Eigen::Index i = 0; i < rho.rows(); ++i)
        if ((static_cast<std::size_t>(i) / right) % dims[slot] == 0) p += rho(i, i).real();
    return p;
}

}  // namespace

void Simulation::record() {
    auto& s = state_.series;
    const Cluster& first = clusters_.front();
    const std::size_t levels = first.electron_dim();
    const int i0 = ms0_index(first.electron);
    s.times.push_back(static_cast<double>(state_.step) * config_.dt);
    std::size_t col = 0;
    s.columns[col++].push_back(level_populations(state_.rho[0], levels)[static_cast<std::size_t>(i0)]);
    if (config_.record_nuclear) {
        for (std::size_t j = 0; j < first.core_site_ids.size(); ++j)
            s.columns[col++].push_back(top_level_population(state_.rho[0], first.slot_dims, j + 1));
        if (col < s.names.size() && s.names[col] == "pop_bath_sum") {
            double sum = 0.0;
            for (std::size_t k = 0; k < clusters_.size(); ++k) {
                const auto& c = clusters_[k];
                const std::size_t first_bath = 1 + c.core_site_ids.size();
                for (std::size_t slot = first_bath; slot < c.slot_dims.size(); ++slot)
                    sum += top_level_population(state_.rho[k], c.slot_dims, slot) -
                           1.0 / static_cast<double>(c.slot_dims[slot]);
            }
            s.columns[col++].push_back(sum);
        }
    }
    if (config_.record_all_clusters)
        for (std::size_t k = 0; k < clusters_.size(); ++k)
            s.columns[col++].push_back(
                level_populations(state_.rho[k], levels)[static_cast<std::size_t>(ms0_index(clusters_[k].electron))]);

    double worst = 1.0;
    for (const auto& r : state_.rho) worst = std::min(worst, DensityMatrix(r).min_eigenvalue());
    if (s.times.size() == 1 || worst < s.worst_min_eigenvalue) s.worst_min_eigenvalue = worst;
    if (worst < -1e-6) {
        ++s.positivity_violations;
        std::cerr << "warning: density matrix eigenvalue " << worst << " at t = " << s.times.back()
                  << " us\n";
    }
}

void Simulation::synchronize(std::int64_t window_steps) {
    if (config_.synchronize && !baseline_) {
        state_.applied = measure_flip_rates(state_.transfers, static_cast<int>(window_steps), config_.dt);
    } else if (config_.synchronize) {
        const std::size_t n = clusters_.size();
        const RealMatrix& ref = state_.transfers[n];
        std::vector<RealMatrix> increments;
        increments.reserve(n);
        for (std::size_t k = 0; k < n; ++k) increments.push_back(state_.transfers[k] - ref);
        SyncRates rates = measure_flip_rates(increments, static_cast<int>(window_steps), config_.dt);
        // the reference cluster sees every bath increment
        RealMatrix all = RealMatrix::Zero(ref.rows(), ref.cols());
        for (const auto& d : increments) all += d;
        const double window = static_cast<double>(window_steps) * config_.dt;
        RealMatrix r = RealMatrix::Zero(ref.rows(), ref.cols());
        for (Eigen::Index m = 0; m < r.rows(); ++m)
            for (Eigen::Index j = 0; j < r.cols(); ++j)
                if (m != j && all(m, j) > 0.0) r(m, j) = all(m, j) / window;
        rates.rates.push_back(std::move(r));
        state_.applied = std::move(rates);
    }
    for (auto& t : state_.transfers) t.setZero();
}

const TimeSeries& Simulation::run(WorkerPool* pool, const CheckpointSink& sink, std::optional<std::int64_t> stop_step) {
    const std::int64_t total = config_.total_steps();
    const std::int64_t stop = std::min(total, stop_step.value_or(total));
    const std::int64_t sync = config_.sync_period;
    const std::int64_t rec = config_.record_period;
    const std::int64_t cp = config_.checkpoint_period;
    auto next_multiple = [](std::int64_t step, std::int64_t period) { return (step / period + 1) * period; };

    if (state_.step == 0 && state_.series.times.empty()) record();
    WorkerPool inline_pool(1);
    WorkerPool& workers = pool ? *pool : inline_pool;

    while (state_.step < stop) {
        std::int64_t next = std::min({stop, next_multiple(state_.step, sync), next_multiple(state_.step, rec)});
        if (cp > 0) next = std::min(next, next_multiple(state_.step, cp));
        const std::int64_t n = next - state_.step;
        workers.parallel_for(engines_.size(), [&](std::size_t k) {
            auto& e = engines_[k];
            if (config_.integrator == Integrator::RK4)
                e.advance_rk4(state_.rho[k], state_.transfers[k], state_.applied.rates[k], config_.dephasing_T2, n,
                              config_.dt);
            else
                e.advance_split(state_.rho[k], state_.transfers[k], state_.applied.rates[k], config_.dephasing_T2, n,
                                config_.dt, config_.split_chunk);
        });
        state_.step = next;
        if (state_.step % sync == 0) synchronize(sync);
        if (state_.step % rec == 0 || state_.step == total) record();
        if (cp > 0 && state_.step % cp == 0 && sink) sink(state_);
    }
    return state_.series;
}

TimeSeries evolve(const std::vector<Cluster>& clusters, const ElectronParams& params, const SiteSet& sites,
                  const SpeciesTable& species, const SimulationConfig& config, WorkerPool* pool) {
    std::vector<Matrix> hs;
    hs.reserve(clusters.size());
    for (const auto& c : clusters) hs.push_back(cluster_hamiltonian(c, params, sites, species, config.B_z));
    std::optional<Matrix> core;
    if (config.core_baseline && !clusters.empty())
        core = cluster_hamiltonian(core_only(clusters.front()), params, sites, species, config.B_z);
    Simulation sim(clusters, std::move(hs), config, std::move(core));
    return sim.run(pool);
}

}  // namespace vbspin
