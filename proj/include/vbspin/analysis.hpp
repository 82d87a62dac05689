// analysis.hpp: T1 extraction and field sweeps.
//
// Decays are fitted to y(t) = y0 + a exp(-(t/T1)^n). Times in us, fields in G.

#pragma once

#include "vbspin/clusters.hpp"
#include "vbspin/dynamics.hpp"
#include "vbspin/hamiltonian.hpp"

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vbspin {

enum class Y0Mode { Fixed, Free };

struct FitOptions {
    Y0Mode y0_mode = Y0Mode::Free;
    double y0 = 0.5;                   // used when y0_mode == Fixed
    std::optional<double> n_fixed;     // pins the stretch exponent
    double T1_min = 2.5e-6;            // us
    double T1_max = 1e7;               // us
    double n_min = 0.1;
    double n_max = 2.0;
    int max_iterations = 500;
    double tolerance = 1e-14;          // relative rss / step tolerance
};

struct DecayFit {
    double a = 0.0;
    double T1 = 0.0;  // us
    double n = 1.0;
    double y0 = 0.0;
    double rss = 0.0;
    bool converged = false;
    int iterations = 0;

    double operator()(double t) const;
};

/// Equilibrium m_s = 0 population for the electron space: 1/2 or 1/3.
double equilibrium_population(ElectronSpace space);

/// Levenberg-Marquardt fit with an analytic Jacobian in (a, ln T1, n, y0).
/// Throws std::invalid_argument on fewer than 10 samples or a constant trace.
/// A fit that runs out of iterations comes back with converged = false.
DecayFit fit_stretched_exp(std::span<const double> t, std::span<const double> y, const FitOptions& opts = {});
DecayFit fit_stretched_exp(const TimeSeries& series, const FitOptions& opts = {},
                           const std::string& column = "pop_ms0");

/// T1 = T1m T1p / (T1m + T1p). Throws on non-positive input; an infinite
/// channel returns the other one.
double combine_channels(double T1_minus, double T1_plus);

/// Half peak-to-peak of the residual after removing the fitted decay.
double oscillation_amplitude(std::span<const double> t, std::span<const double> y, const DecayFit& fit);

// ---------------------------------------------------------------- energy levels

struct LevelTable {
    std::vector<double> B;                    // G
    std::vector<std::vector<double>> levels;  // MHz, ascending per row
    std::vector<double> gap_0_minus;          // smallest |0>/|-1> manifold gap, MHz
    std::vector<double> split_minus_plus;     // |-1>/|+1> splitting, MHz

    /// Index of the minimum |0>/|-1> gap (first one on ties).
    std::size_t min_gap_index() const;
    std::string to_csv() const;
};

/// Eigenvalues of the electron Hamiltonian, optionally with the hyperfine
/// coupling to `nuclei` (each eigenstate is assigned to the electron level
/// holding most of its weight).
LevelTable energy_levels(const ElectronParams& params, std::span<const double> B,
                         std::span<const NuclearSite> nuclei = {}, const SpeciesTable& species = SpeciesTable::defaults());

/// Uniform grid lo, lo + step, ..., <= hi.
std::vector<double> field_grid(double lo, double hi, double step);

// ---------------------------------------------------------------- sweeps

enum class Regime { LowField, GSLAC, HighField };
std::string regime_name(Regime r);

struct ClassifyOptions {
    double rss_factor = 5.0;
    double min_n = 0.5;
    double oscillation_fraction = 0.1;
};

struct SweepPoint {
    double B = 0.0;  // G, non-negative; the 0+ channel ran at -B
    Channel channel = Channel::ZeroMinus;
    DecayFit fit;         // free n
    DecayFit fit_pinned;  // n = 1
    double oscillation = 0.0;
    bool failed = false;
    std::string error;
    bool non_exponential = false;
    Regime regime = Regime::LowField;
    std::optional<double> T1;  // reported T1, empty when flagged or failed
};

struct SweepResult {
    std::vector<SweepPoint> points;  // ordered by channel, then B

    bool any_flagged() const;
    std::vector<const SweepPoint*> channel(Channel c) const;
    /// `B_gauss,T1_us,n,y0,rss,regime,channel`
    std::string to_csv() const;
    std::string fits_json() const;
};

/// Flags and regime labels from fit outputs alone; idempotent.
void classify(SweepResult& result, const ElectronParams& params, const ClassifyOptions& opts = {});

struct SweepOptions {
    FitOptions fit;
    ClassifyOptions classify;
    bool both_channels = false;
};

/// run(B_signed) evolves one field point and returns its trace. Failures are
/// kept per point; the sweep carries on.
SweepResult sweep_field(std::span<const double> B, const std::function<TimeSeries(double)>& run,
                        const ElectronParams& params, const SweepOptions& opts = {});

// ---------------------------------------------------------------- convergence

struct ConvergenceRow {
    double t_end = 0.0;
    DecayFit fit;
    double relative_deviation = 0.0;  // (T1 - T1_ref) / T1_ref
};

/// Fits every prefix t <= t_end and compares with the longest prefix.
std::vector<ConvergenceRow> convergence_study(std::span<const double> t, std::span<const double> y,
                                              std::span<const double> prefix_ends, const FitOptions& opts = {});

}  // namespace vbspin
