#include "vbspin/analysis.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace vbspin {

double DecayFit::operator()(double t) const {
    if (t <= 0.0) return y0 + a;
    return y0 + a * std::exp(-std::pow(t / T1, n));
}

double equilibrium_population(ElectronSpace space) { return space == ElectronSpace::Full ? 1.0 / 3.0 : 0.5; }

// ---------------------------------------------------------------- fitting

namespace {

struct Params {
    double a, u, n, y0;  // u = ln T1
};

double rss_of(std::span<const double> t, std::span<const double> y, const Params& p) {
    const double T1 = std::exp(p.u);
    double s = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double f = t[i] > 0.0 ? p.y0 + p.a * std::exp(-std::pow(t[i] / T1, p.n)) : p.y0 + p.a;
        const double r = y[i] - f;
        s += r * r;
    }
    return s;
}

}  // namespace

DecayFit fit_stretched_exp(std::span<const double> t, std::span<const double> y, const FitOptions& opts) {
    if (t.size() != y.size()) throw std::invalid_argument("fit_stretched_exp: t and y differ in length");
    if (t.size() < 10) throw std::invalid_argument("fit_stretched_exp: need at least 10 samples");
    const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
    if (*hi - *lo < 1e-12) throw std::invalid_argument("fit_stretched_exp: population is constant");
    if (!(opts.T1_min > 0.0) || !(opts.T1_max > opts.T1_min))
        throw std::invalid_argument("fit_stretched_exp: bad T1 bounds");

    const bool free_y0 = opts.y0_mode == Y0Mode::Free;
    const bool free_n = !opts.n_fixed.has_value();
    const double u_min = std::log(opts.T1_min), u_max = std::log(opts.T1_max);

    Params p{};
    p.y0 = free_y0 ? y.back() : opts.y0;
    p.a = y.front() - p.y0;
    if (std::abs(p.a) < 1e-15) p.a = y.front() - y.back();
    p.n = free_n ? 1.0 : *opts.n_fixed;
    {
        const double target = 0.63 * std::abs(p.a);
        double T1 = -1.0;
        for (std::size_t i = 1; i < t.size(); ++i)
            if (std::abs(y[i] - y.front()) >= target) {
                T1 = t[i] - t.front();
                break;
            }
        if (T1 <= 0.0) {
            // trace ends before 63%: extrapolate the mean slope
            const double moved = std::abs(y.back() - y.front());
            const double span = t.back() - t.front();
            T1 = moved > 0.0 ? span * std::abs(p.a) / moved : opts.T1_max;
        }
        p.u = std::clamp(std::log(std::max(T1, opts.T1_min)), u_min, u_max);
    }
    p.n = std::clamp(p.n, opts.n_min, opts.n_max);

    // active parameter columns: a, u, [n], [y0]
    std::vector<int> active{0, 1};
    if (free_n) active.push_back(2);
    if (free_y0) active.push_back(3);
    const auto k = static_cast<Eigen::Index>(active.size());
    const auto N = static_cast<Eigen::Index>(t.size());

    auto apply = [&](Params q, const Eigen::VectorXd& d) {
        double* fields[4] = {&q.a, &q.u, &q.n, &q.y0};
        for (Eigen::Index j = 0; j < k; ++j) *fields[active[static_cast<std::size_t>(j)]] += d(j);
        q.u = std::clamp(q.u, u_min, u_max);
        q.n = std::clamp(q.n, opts.n_min, opts.n_max);
        return q;
    };

    double rss = rss_of(t, y, p);
    double lambda = 1e-3;
    DecayFit out;
    Eigen::MatrixXd Jm(N, k);
    Eigen::VectorXd r(N);
    int it = 0;
    for (; it < opts.max_iterations; ++it) {
        const double T1 = std::exp(p.u);
        for (Eigen::Index i = 0; i < N; ++i) {
            const double ti = t[static_cast<std::size_t>(i)];
            double x = 0.0, lnr = 0.0;
            if (ti > 0.0) {
                lnr = std::log(ti / T1);
                x = std::exp(p.n * lnr);
            }
            const double e = std::exp(-x);
            r(i) = y[static_cast<std::size_t>(i)] - (p.y0 + p.a * e);
            const double d[4] = {e, p.a * e * p.n * x, -p.a * e * x * lnr, 1.0};
            for (Eigen::Index j = 0; j < k; ++j) Jm(i, j) = d[active[static_cast<std::size_t>(j)]];
        }
        const Eigen::MatrixXd A = Jm.transpose() * Jm;
        const Eigen::VectorXd g = Jm.transpose() * r;
        if (rss < 1e-32 || g.cwiseAbs().maxCoeff() < 1e-300) {
            out.converged = true;
            break;
        }
        // a parameter sitting on its bound whose step points outward is held
        // there for this step, so the remaining ones still make progress
        auto outward = [&](Eigen::Index j, double dj) {
            const int f = active[static_cast<std::size_t>(j)];
            if (f == 1) return (p.u <= u_min && dj < 0.0) || (p.u >= u_max && dj > 0.0);
            if (f == 2) return (p.n <= opts.n_min && dj < 0.0) || (p.n >= opts.n_max && dj > 0.0);
            return false;
        };
        bool accepted = false;
        while (!accepted) {
            std::vector<bool> held(static_cast<std::size_t>(k), false);
            Eigen::VectorXd d;
            for (Eigen::Index pass = 0; pass <= k; ++pass) {
                Eigen::MatrixXd M = A;
                Eigen::VectorXd gh = g;
                for (Eigen::Index j = 0; j < k; ++j) {
                    M(j, j) += lambda * std::max(A(j, j), 1e-30);
                    if (held[static_cast<std::size_t>(j)]) {
                        M.row(j).setZero();
                        M.col(j).setZero();
                        M(j, j) = 1.0;
                        gh(j) = 0.0;
                    }
                }
                d = M.ldlt().solve(gh);
                bool changed = false;
                for (Eigen::Index j = 0; j < k; ++j)
                    if (!held[static_cast<std::size_t>(j)] && outward(j, d(j))) {
                        held[static_cast<std::size_t>(j)] = true;
                        changed = true;
                    }
                if (!changed) break;
            }
            const Params q = apply(p, d);
            const double rss_new = rss_of(t, y, q);
            if (std::isfinite(rss_new) && rss_new < rss) {
                const double drop = rss - rss_new;
                const double step = std::max({std::abs(q.a - p.a), std::abs(q.u - p.u), std::abs(q.n - p.n),
                                              std::abs(q.y0 - p.y0)});
                p = q;
                rss = rss_new;
                lambda = std::max(lambda / 3.0, 1e-15);
                accepted = true;
                if (drop <= opts.tolerance * rss || step < 1e-15) out.converged = true;
            } else {
                lambda *= 4.0;
                if (lambda > 1e16) {
                    // no descent direction left at working precision
                    out.converged = true;
                    break;
                }
            }
        }
        if (out.converged) break;
    }
    out.a = p.a;
    out.T1 = std::exp(p.u);
    out.n = p.n;
    out.y0 = p.y0;
    out.rss = rss;
    out.iterations = it;
    return out;
}

DecayFit fit_stretched_exp(const TimeSeries& series, const FitOptions& opts, const std::string& column) {
    return fit_stretched_exp(series.times, series.column(column), opts);
}

double combine_channels(double T1_minus, double T1_plus) {
    if (!(T1_minus > 0.0) || !(T1_plus > 0.0))
        throw std::invalid_argument("combine_channels: T1 values must be positive");
    if (std::isinf(T1_minus)) return T1_plus;
    if (std::isinf(T1_plus)) return T1_minus;
    return T1_minus * T1_plus / (T1_minus + T1_plus);
}

double oscillation_amplitude(std::span<const double> t, std::span<const double> y, const DecayFit& fit) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double r = y[i] - fit(t[i]);
        lo = std::min(lo, r);
        hi = std::max(hi, r);
    }
    return t.empty() ? 0.0 : 0.5 * (hi - lo);
}

// ---------------------------------------------------------------- levels

std::size_t LevelTable::min_gap_index() const {
    if (gap_0_minus.empty()) throw std::logic_error("LevelTable: empty");
    return static_cast<std::size_t>(std::min_element(gap_0_minus.begin(), gap_0_minus.end()) - gap_0_minus.begin());
}

std::string LevelTable::to_csv() const {
    std::string out = "B_gauss,gap_0_minus_MHz,split_minus_plus_MHz";
    const std::size_t d = levels.empty() ? 0 : levels.front().size();
    for (std::size_t j = 0; j < d; ++j) out += ",E" + std::to_string(j) + "_MHz";
    out += '\n';
    char buf[96];
    for (std::size_t i = 0; i < B.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.15g,%.15g,%.15g", B[i], gap_0_minus[i], split_minus_plus[i]);
        out += buf;
        for (double e : levels[i]) {
            std::snprintf(buf, sizeof buf, ",%.15g", e);
            out += buf;
        }
        out += '\n';
    }
    return out;
}

LevelTable energy_levels(const ElectronParams& params, std::span<const double> B, std::span<const NuclearSite> nuclei,
                         const SpeciesTable& species) {
    if (B.empty()) throw std::invalid_argument("energy_levels: empty field range");
    Cluster cluster;
    cluster.electron = ElectronSpace::Full;
    cluster.slot_dims.push_back(3);
    std::vector<NuclearSite> owned(nuclei.begin(), nuclei.end());
    for (const auto& s : owned) {
        cluster.bath_site_ids.push_back(s.id);
        cluster.slot_dims.push_back(static_cast<std::size_t>(std::lround(2.0 * species.at(s.species).s)) + 1);
    }
    std::sort(cluster.bath_site_ids.begin(), cluster.bath_site_ids.end());
    cluster.hilbert_dim = product(cluster.slot_dims);
    const SiteSet sites(std::move(owned));
    const std::size_t right = cluster.hilbert_dim / 3;

    LevelTable table;
    for (double b : B) {
        const Matrix H = cluster_hamiltonian(cluster, params, sites, species, b);
        Eigen::SelfAdjointEigenSolver<Matrix> es(H);
        const Eigen::VectorXd& E = es.eigenvalues();
        // electron level of each eigenstate: 0 -> +1, 1 -> 0, 2 -> -1
        std::vector<int> label(static_cast<std::size_t>(E.size()));
        for (Eigen::Index i = 0; i < E.size(); ++i) {
            double w[3] = {0.0, 0.0, 0.0};
            for (Eigen::Index r = 0; r < E.size(); ++r)
                w[static_cast<std::size_t>(r) / right] += std::norm(es.eigenvectors()(r, i));
            label[static_cast<std::size_t>(i)] = static_cast<int>(std::max_element(w, w + 3) - w);
        }
        double gap = std::numeric_limits<double>::infinity();
        double sum_plus = 0.0, sum_minus = 0.0;
        int n_plus = 0, n_minus = 0;
        for (Eigen::Index i = 0; i < E.size(); ++i) {
            const int li = label[static_cast<std::size_t>(i)];
            if (li == 0) sum_plus += E(i), ++n_plus;
            if (li == 2) sum_minus += E(i), ++n_minus;
            if (li != 1) continue;
            for (Eigen::Index j = 0; j < E.size(); ++j)
                if (label[static_cast<std::size_t>(j)] == 2) gap = std::min(gap, std::abs(E(i) - E(j)));
        }
        table.B.push_back(b);
        table.levels.emplace_back(E.data(), E.data() + E.size());
        table.gap_0_minus.push_back(gap);
        table.split_minus_plus.push_back(n_plus && n_minus ? std::abs(sum_plus / n_plus - sum_minus / n_minus)
                                                           : std::numeric_limits<double>::quiet_NaN());
    }
    return table;
}

std::vector<double> field_grid(double lo, double hi, double step) {
    if (!(step > 0.0) || hi < lo) throw std::invalid_argument("field_grid: need step > 0 and hi >= lo");
    std::vector<double> out;
    const auto n = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
    for (long i = 0; i <= n; ++i) out.push_back(lo + static_cast<double>(i) * step);
    return out;
}

// ---------------------------------------------------------------- sweeps

std::string regime_name(Regime r) {
    switch (r) {
        case Regime::LowField: return "low-field";
        case Regime::GSLAC: return "GSLAC";
        case Regime::HighField: return "high-field";
    }
    return "?";
}

bool SweepResult::any_flagged() const {
    return std::any_of(points.begin(), points.end(),
                       [](const SweepPoint& p) { return p.channel != Channel::Combined && (p.failed || p.non_exponential); });
}

std::vector<const SweepPoint*> SweepResult::channel(Channel c) const {
    std::vector<const SweepPoint*> out;
    for (const auto& p : points)
        if (p.channel == c) out.push_back(&p);
    return out;
}

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.15g", v);
    return buf;
}

bool has_fit(const SweepPoint& p) { return p.channel != Channel::Combined && !p.failed; }

}  // namespace

std::string SweepResult::to_csv() const {
    std::string out = "B_gauss,T1_us,n,y0,rss,regime,channel\n";
    for (const auto& p : points) {
        out += num(p.B) + ',' + (p.T1 ? num(*p.T1) : "") + ',';
        if (has_fit(p))
            out += num(p.fit.n) + ',' + num(p.fit.y0) + ',' + num(p.fit.rss);
        else
            out += ",,";
        out += ',' + regime_name(p.regime) + ',' + channel_name(p.channel) + '\n';
    }
    return out;
}

std::string SweepResult::fits_json() const {
    auto fit_json = [](const DecayFit& f) {
        return nlohmann::json{{"a", f.a},     {"T1_us", f.T1},         {"n", f.n},
                              {"y0", f.y0},   {"rss", f.rss},          {"converged", f.converged},
                              {"iterations", f.iterations}};
    };
    nlohmann::json doc = nlohmann::json::array();
    for (const auto& p : points) {
        nlohmann::json row{{"B_gauss", p.B},
                           {"channel", channel_name(p.channel)},
                           {"regime", regime_name(p.regime)},
                           {"non_exponential", p.non_exponential},
                           {"failed", p.failed}};
        if (p.T1) row["T1_us"] = *p.T1;
        if (p.failed) row["error"] = p.error;
        if (has_fit(p)) {
            row["fit"] = fit_json(p.fit);
            row["fit_n_pinned"] = fit_json(p.fit_pinned);
            row["oscillation_amplitude"] = p.oscillation;
        }
        doc.push_back(std::move(row));
    }
    return doc.dump(1);
}

void classify(SweepResult& result, const ElectronParams& params, const ClassifyOptions& opts) {
    const double gslac = params.D / params.gamma_e;
    auto by_field = [&](double B) { return std::abs(B) < gslac ? Regime::LowField : Regime::HighField; };

    for (Channel c : {Channel::ZeroMinus, Channel::ZeroPlus}) {
        std::vector<SweepPoint*> pts;
        for (auto& p : result.points)
            if (p.channel == c) pts.push_back(&p);
        std::sort(pts.begin(), pts.end(), [](auto* x, auto* y) { return x->B < y->B; });
        for (std::size_t i = 0; i < pts.size(); ++i) {
            SweepPoint& p = *pts[i];
            p.T1.reset();
            p.non_exponential = false;
            if (p.failed) {
                p.regime = by_field(p.B);
                continue;
            }
            std::vector<double> neighbour_rss;
            if (i > 0 && !pts[i - 1]->failed) neighbour_rss.push_back(pts[i - 1]->fit.rss);
            if (i + 1 < pts.size() && !pts[i + 1]->failed) neighbour_rss.push_back(pts[i + 1]->fit.rss);
            double median = 0.0;
            if (!neighbour_rss.empty()) {
                std::sort(neighbour_rss.begin(), neighbour_rss.end());
                const std::size_t m = neighbour_rss.size();
                median = m % 2 ? neighbour_rss[m / 2] : 0.5 * (neighbour_rss[m / 2 - 1] + neighbour_rss[m / 2]);
            }
            const bool rss_bad = !neighbour_rss.empty() && p.fit.rss > opts.rss_factor * median;
            const bool stretched = p.fit.n < opts.min_n;
            const bool oscillating = p.oscillation > opts.oscillation_fraction * std::abs(p.fit.a);
            p.non_exponential = rss_bad || stretched || oscillating || !p.fit.converged;
            p.regime = p.non_exponential ? Regime::GSLAC : by_field(p.B);
            if (!p.non_exponential) p.T1 = p.fit.T1;
        }
    }

    for (auto& p : result.points) {
        if (p.channel != Channel::Combined) continue;
        const SweepPoint *m = nullptr, *q = nullptr;
        for (const auto& o : result.points) {
            if (o.B != p.B) continue;
            if (o.channel == Channel::ZeroMinus) m = &o;
            if (o.channel == Channel::ZeroPlus) q = &o;
        }
        p.T1.reset();
        p.non_exponential = !m || !q || m->non_exponential || q->non_exponential || m->failed || q->failed;
        p.regime = p.non_exponential ? Regime::GSLAC : by_field(p.B);
        if (m && q && m->T1 && q->T1) p.T1 = combine_channels(*m->T1, *q->T1);
    }
}

SweepResult sweep_field(std::span<const double> B, const std::function<TimeSeries(double)>& run,
                        const ElectronParams& params, const SweepOptions& opts) {
    for (double b : B)
        if (!(b >= 0.0)) throw std::invalid_argument("sweep_field: fields must be non-negative");
    std::vector<double> fields(B.begin(), B.end());
    std::sort(fields.begin(), fields.end());

    SweepResult result;
    auto evaluate = [&](double b, Channel c) {
        SweepPoint p;
        p.B = b;
        p.channel = c;
        try {
            const TimeSeries s = run(c == Channel::ZeroPlus ? -b : b);
            const auto& y = s.column("pop_ms0");
            p.fit = fit_stretched_exp(s.times, y, opts.fit);
            FitOptions pinned = opts.fit;
            pinned.n_fixed = 1.0;
            p.fit_pinned = fit_stretched_exp(s.times, y, pinned);
            p.oscillation = oscillation_amplitude(s.times, y, p.fit);
        } catch (const std::exception& e) {
            p.failed = true;
            p.error = e.what();
        }
        result.points.push_back(std::move(p));
    };
    for (double b : fields) evaluate(b, Channel::ZeroMinus);
    if (opts.both_channels) {
        for (double b : fields) evaluate(b, Channel::ZeroPlus);
        for (double b : fields) {
            SweepPoint p;
            p.B = b;
            p.channel = Channel::Combined;
            result.points.push_back(std::move(p));
        }
    }
    classify(result, params, opts.classify);
    return result;
}

// ---------------------------------------------------------------- convergence

std::vector<ConvergenceRow> convergence_study(std::span<const double> t, std::span<const double> y,
                                              std::span<const double> prefix_ends, const FitOptions& opts) {
    if (prefix_ends.empty()) return {};
    std::vector<double> ends(prefix_ends.begin(), prefix_ends.end());
    std::sort(ends.begin(), ends.end());
    std::vector<ConvergenceRow> rows;
    for (double te : ends) {
        std::size_t n = 0;
        while (n < t.size() && t[n] <= te * (1.0 + 1e-12)) ++n;
        rows.push_back({te, fit_stretched_exp(t.first(n), y.first(n), opts), 0.0});
    }
    const double ref = rows.back().fit.T1;
    for (auto& r : rows) r.relative_deviation = (r.fit.T1 - ref) / ref;
    return rows;
}

}  // namespace vbspin
