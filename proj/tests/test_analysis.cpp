#include "vbspin/analysis.hpp"

#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

using namespace vbspin;

namespace {

struct Trace {
    std::vector<double> t, y;
};

Trace synthetic(double a, double T1, double n, double y0, double t_end, int samples) {
    Trace s;
    for (int i = 0; i < samples; ++i) {
        const double t = t_end * i / (samples - 1);
        s.t.push_back(t);
        s.y.push_back(y0 + a * std::exp(-std::pow(t / T1, n)));
    }
    return s;
}

TimeSeries as_series(const Trace& tr) {
    TimeSeries s;
    s.times = tr.t;
    s.names = {"pop_ms0"};
    s.columns = {tr.y};
    return s;
}

}  // namespace

TEST_CASE("fit recovers noiseless stretched exponentials") {
    struct Case {
        double a, T1, n, y0;
    };
    for (const Case c : {Case{0.2, 16.0, 1.0, 0.5}, Case{0.2, 5.0, 0.37, 0.5}, Case{0.367, 40.0, 0.9, 1.0 / 3.0},
                         Case{-0.1, 2.0, 1.6, 0.6}}) {
        const auto tr = synthetic(c.a, c.T1, c.n, c.y0, 4 * c.T1, 400);
        const DecayFit f = fit_stretched_exp(tr.t, tr.y);
        CHECK(f.converged);
        CHECK(f.T1 == doctest::Approx(c.T1).epsilon(1e-6));
        CHECK(f.n == doctest::Approx(c.n).epsilon(1e-6));
        CHECK(f.a == doctest::Approx(c.a).epsilon(1e-6));
        CHECK(f.y0 == doctest::Approx(c.y0).epsilon(1e-6));
        CHECK(f.rss < 1e-20);
    }
}

TEST_CASE("fixed y0 and pinned n are honoured") {
    const auto tr = synthetic(0.2, 16.0, 0.8, 0.5, 40.0, 200);
    FitOptions o;
    o.y0_mode = Y0Mode::Fixed;
    o.y0 = 0.5;
    const DecayFit f = fit_stretched_exp(tr.t, tr.y, o);
    CHECK(f.y0 == 0.5);
    CHECK(f.T1 == doctest::Approx(16.0).epsilon(1e-8));
    o.n_fixed = 1.0;
    const DecayFit p = fit_stretched_exp(tr.t, tr.y, o);
    CHECK(p.n == 1.0);
    CHECK(p.rss > f.rss);
}

TEST_CASE("fit recovers T1 within 0.1% under small noise") {
    auto tr = synthetic(0.2, 16.0, 1.0, 0.5, 60.0, 600);
    std::uint64_t state = 12345;
    for (auto& v : tr.y) {
        state = state * 6364136223846793005ULL + 1442695040888963407ULL;
        v += 1e-6 * (static_cast<double>(state >> 11) / 9007199254740992.0 - 0.5);
    }
    const DecayFit f = fit_stretched_exp(tr.t, tr.y);
    CHECK(std::abs(f.T1 / 16.0 - 1.0) < 1e-3);
}

TEST_CASE("fit refuses degenerate input") {
    std::vector<double> t(9), y(9, 0.5);
    for (int i = 0; i < 9; ++i) t[i] = i;
    CHECK_THROWS_AS(fit_stretched_exp(t, y), std::invalid_argument);
    t.push_back(9);
    y.push_back(0.5);
    CHECK_THROWS_AS(fit_stretched_exp(t, y), std::invalid_argument);
    y.pop_back();
    CHECK_THROWS_AS(fit_stretched_exp(t, y), std::invalid_argument);
}

TEST_CASE("fit on a TimeSeries reads the named column") {
    const auto tr = synthetic(0.2, 3.0, 1.0, 0.5, 10.0, 100);
    const DecayFit f = fit_stretched_exp(as_series(tr));
    CHECK(f.T1 == doctest::Approx(3.0).epsilon(1e-8));
    CHECK(f(0.0) == doctest::Approx(0.7).epsilon(1e-10));
    CHECK_THROWS(fit_stretched_exp(as_series(tr), {}, "missing"));
}

TEST_CASE("equilibrium population per electron space") {
    CHECK(equilibrium_population(ElectronSpace::Reduced) == 0.5);
    CHECK(equilibrium_population(ElectronSpace::Full) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("channel combination behaves like parallel rates") {
    CHECK(combine_channels(10.0, 10.0) == doctest::Approx(5.0));
    CHECK(combine_channels(3.0, 7.0) == doctest::Approx(combine_channels(7.0, 3.0)));
    for (double a : {0.5, 2.0, 30.0})
        for (double b : {1.0, 9.0, 1e4}) {
            const double c = combine_channels(a, b);
            CHECK(c < std::min(a, b));
            CHECK(1.0 / c == doctest::Approx(1.0 / a + 1.0 / b));
        }
    const double inf = std::numeric_limits<double>::infinity();
    CHECK(combine_channels(4.0, inf) == 4.0);
    CHECK(combine_channels(inf, 4.0) == 4.0);
    CHECK_THROWS_AS(combine_channels(0.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(combine_channels(1.0, -2.0), std::invalid_argument);
}

TEST_CASE("oscillation amplitude measures the residual") {
    auto tr = synthetic(0.2, 16.0, 1.0, 0.5, 40.0, 2001);
    const DecayFit clean = fit_stretched_exp(tr.t, tr.y);
    CHECK(oscillation_amplitude(tr.t, tr.y, clean) < 1e-10);
    for (std::size_t i = 0; i < tr.t.size(); ++i) tr.y[i] += 0.03 * std::sin(2 * std::numbers::pi * 3.1 * tr.t[i]);
    CHECK(oscillation_amplitude(tr.t, tr.y, clean) == doctest::Approx(0.03).epsilon(1e-3));
}

TEST_CASE("electron levels: zero-field splitting, GSLAC, Zeeman splitting") {
    const ElectronParams p;
    const auto grid = field_grid(0.0, 2000.0, 1.0);
    CHECK(grid.size() == 2001);
    const LevelTable lv = energy_levels(p, grid);
    CHECK(lv.gap_0_minus[0] == doctest::Approx(p.D).epsilon(1e-12));
    CHECK(lv.split_minus_plus[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(lv.split_minus_plus[800] == doctest::Approx(2 * p.gamma_e * 800.0));
    CHECK(std::abs(lv.B[lv.min_gap_index()] - p.D / p.gamma_e) <= 1.0);
    const std::string csv = lv.to_csv();
    CHECK(csv.substr(0, csv.find('\n')).find("B_gauss") == 0);
}

TEST_CASE("hyperfine levels: traceless coupling, zero tensor reproduces the bare gaps") {
    const ElectronParams p;
    NuclearSite n{0, kNitrogen, Vector3(1.4, 0, 0), Matrix3::Zero()};
    const auto grid = field_grid(1200.0, 1280.0, 0.5);
    const LevelTable bare = energy_levels(p, grid);
    const LevelTable zero = energy_levels(p, grid, std::vector<NuclearSite>{n});
    // without hyperfine only the nuclear Zeeman splitting nu shifts the pairs: min(|d|, |d - nu|, |d + nu|)
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double nu = 0.43173e-3 * grid[i];
        const double d = bare.gap_0_minus[i];
        const double expected = std::min({std::abs(d), std::abs(d - nu), std::abs(d + nu)});
        CHECK(zero.gap_0_minus[i] == doctest::Approx(expected).epsilon(1e-8));
    }

    n.A << -65.6, 0, 0, 0, -126.4, 0, 0, 0, -63.3;
    const LevelTable hf = energy_levels(p, grid, std::vector<NuclearSite>{n});
    REQUIRE(hf.levels.front().size() == 6);
    for (std::size_t i = 0; i < grid.size(); i += 40) {
        double sum = 0.0, bare_sum = 0.0;
        for (double e : hf.levels[i]) sum += e;
        for (double e : bare.levels[i]) bare_sum += e;
        CHECK(std::abs(sum - 2 * bare_sum) < 1e-6);
    }
}

TEST_CASE("classification flags stretched, oscillating and outlier fits") {
    const ElectronParams p;
    SweepResult r;
    for (double B : {90.0, 400.0, 800.0, 1241.0, 1800.0}) {
        SweepPoint s;
        s.B = B;
        s.fit = DecayFit{0.2, 10.0, 0.95, 0.5, 1e-8, true, 10};
        r.points.push_back(s);
    }
    r.points[3].fit.rss = 1e-5;
    classify(r, p);
    CHECK(r.points[0].regime == Regime::LowField);
    CHECK(r.points[0].T1 == 10.0);
    CHECK(r.points[3].regime == Regime::GSLAC);
    CHECK_FALSE(r.points[3].T1.has_value());
    CHECK(r.points[4].regime == Regime::HighField);
    CHECK(r.any_flagged());

    const std::string first = r.to_csv();
    classify(r, p);
    CHECK(r.to_csv() == first);

    r.points[1].fit.n = 0.4;
    r.points[2].oscillation = 0.05;
    r.points[4].fit.converged = false;
    classify(r, p);
    CHECK(r.points[1].non_exponential);
    CHECK(r.points[2].non_exponential);
    CHECK(r.points[4].non_exponential);
    CHECK(regime_name(Regime::GSLAC) == "GSLAC");
}

TEST_CASE("sweep keeps going past a failing point and combines channels") {
    const ElectronParams p;
    auto run = [](double B) -> TimeSeries {
        if (B == 400.0) throw std::runtime_error("boom");
        const double T1 = B > 0 ? 10.0 : 30.0;
        return as_series(synthetic(0.2, T1, 1.0, 0.5, 50.0, 200));
    };
    SweepOptions o;
    o.both_channels = true;
    const std::vector<double> B{800.0, 400.0, 90.0};
    const SweepResult r = sweep_field(B, run, p, o);
    REQUIRE(r.points.size() == 9);
    const auto minus = r.channel(Channel::ZeroMinus);
    CHECK(minus[0]->B == 90.0);
    CHECK(minus[1]->failed);
    CHECK(minus[1]->error == "boom");
    CHECK(*minus[2]->T1 == doctest::Approx(10.0).epsilon(1e-8));
    const auto combined = r.channel(Channel::Combined);
    CHECK(*combined[2]->T1 == doctest::Approx(7.5).epsilon(1e-8));
    CHECK_FALSE(combined[1]->T1.has_value());
    CHECK_THROWS_AS(sweep_field(std::vector<double>{-1.0}, run, p), std::invalid_argument);
}

TEST_CASE("convergence study compares against the longest window") {
    const auto tr = synthetic(0.2, 16.0, 1.0, 0.5, 69.0, 700);
    const std::vector<double> ends{20.0, 31.25, 69.0};
    const auto rows = convergence_study(tr.t, tr.y, ends);
    REQUIRE(rows.size() == 3);
    CHECK(rows.back().relative_deviation == 0.0);
    for (const auto& r : rows) CHECK(std::abs(r.relative_deviation) < 1e-6);
}

TEST_CASE("a fit pinned against the T1 bound still converges") {
    // true T1 lies far above T1_max, so the optimum sits on the bound
    const auto tr = synthetic(0.2, 1e6, 0.7, 0.5, 10.0, 200);
    FitOptions o;
    o.y0_mode = Y0Mode::Fixed;
    o.T1_max = 1e4;
    const DecayFit f = fit_stretched_exp(tr.t, tr.y, o);
    CHECK(f.converged);
    CHECK(f.T1 == doctest::Approx(1e4));
    CHECK(f.iterations < 100);
}
