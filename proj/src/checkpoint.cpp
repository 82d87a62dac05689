#include "vbspin/checkpoint.hpp"

#include "vbspin/errors.hpp"

#include <cstring>
#include <fstream>

namespace vbspin {

namespace {

constexpr char kMagic[8] = {'V', 'B', 'S', 'P', 'C', 'H', 'K', '\0'};

class Writer {
public:
    explicit Writer(std::ofstream& os) : os_(os) {}
    template <class T>
    void pod(const T& v) { os_.write(reinterpret_cast<const char*>(&v), sizeof v); }
    void doubles(const double* p, std::size_t n) { os_.write(reinterpret_cast<const char*>(p), std::streamsize(n * sizeof(double))); }
    void string(const std::string& s) {
        pod<std::uint64_t>(s.size());
        os_.write(s.data(), std::streamsize(s.size()));
    }
    void real(const RealMatrix& m) {
        pod<std::uint64_t>(std::uint64_t(m.rows()));
        pod<std::uint64_t>(std::uint64_t(m.cols()));
        doubles(m.data(), std::size_t(m.size()));
    }

private:
    std::ofstream& os_;
};

class Reader {
public:
    Reader(std::ifstream& is, const std::filesystem::path& path) : is_(is), path_(path) {}
    template <class T>
    T pod() {
        T v{};
        is_.read(reinterpret_cast<char*>(&v), sizeof v);
        check();
        return v;
    }
    void doubles(double* p, std::size_t n) {
        is_.read(reinterpret_cast<char*>(p), std::streamsize(n * sizeof(double)));
        check();
    }
    std::uint64_t count(std::uint64_t limit) {
        const auto n = pod<std::uint64_t>();
        if (n > limit) throw ConfigError("checkpoint " + path_.string() + ": implausible size field");
        return n;
    }
    std::string string() {
        std::string s(count(1 << 20), '\0');
        is_.read(s.data(), std::streamsize(s.size()));
        check();
        return s;
    }
    RealMatrix real() {
        const auto r = count(64), c = count(64);
        RealMatrix m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
        doubles(m.data(), std::size_t(m.size()));
        return m;
    }

private:
    void check() {
        if (!is_) throw ConfigError("checkpoint " + path_.string() + ": truncated file");
    }
    std::ifstream& is_;
    const std::filesystem::path& path_;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const SimulationState& state, std::uint64_t config_hash) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("cannot write checkpoint " + tmp.string());
        Writer w(os);
        os.write(kMagic, sizeof kMagic);
        w.pod(kCheckpointVersion);
        w.pod(config_hash);
        w.pod<std::int64_t>(state.step);
        w.pod<std::uint64_t>(state.rho.size());
        for (const auto& r : state.rho) {
            w.pod<std::uint64_t>(std::uint64_t(r.rows()));
            w.doubles(reinterpret_cast<const double*>(r.data()), std::size_t(2 * r.size()));
        }
        for (const auto& t : state.transfers) w.real(t);
        for (const auto& t : state.applied.rates) w.real(t);
        const auto& s = state.series;
        w.pod<std::uint64_t>(s.names.size());
        for (const auto& n : s.names) w.string(n);
        w.pod<std::uint64_t>(s.times.size());
        w.doubles(s.times.data(), s.times.size());
        for (const auto& c : s.columns) w.doubles(c.data(), c.size());
        w.pod(s.worst_min_eigenvalue);
        w.pod<std::int32_t>(s.positivity_violations);
        if (!os) throw std::runtime_error("failed writing checkpoint " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("cannot open checkpoint " + path.string());
    char magic[sizeof kMagic];
    is.read(magic, sizeof magic);
    if (!is || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw ConfigError("checkpoint " + path.string() + ": bad magic");
    Reader r(is, path);
    if (const auto v = r.pod<std::uint32_t>(); v != kCheckpointVersion)
        throw ConfigError("checkpoint " + path.string() + ": unsupported version " + std::to_string(v));
    Checkpoint cp;
    cp.config_hash = r.pod<std::uint64_t>();
    auto& st = cp.state;
    st.step = r.pod<std::int64_t>();
    const auto n = r.count(1 << 16);
    for (std::uint64_t k = 0; k < n; ++k) {
        const auto d = Eigen::Index(r.count(64));
        Matrix m(d, d);
        r.doubles(reinterpret_cast<double*>(m.data()), std::size_t(2 * m.size()));
        st.rho.push_back(std::move(m));
    }
    for (std::uint64_t k = 0; k < n; ++k) st.transfers.push_back(r.real());
    for (std::uint64_t k = 0; k < n; ++k) st.applied.rates.push_back(r.real());
    auto& s = st.series;
    const auto ncol = r.count(1 << 16);
    for (std::uint64_t c = 0; c < ncol; ++c) s.names.push_back(r.string());
    const auto nrow = r.count(std::uint64_t(1) << 32);
    s.times.resize(nrow);
    r.doubles(s.times.data(), nrow);
    s.columns.assign(ncol, std::vector<double>(nrow));
    for (auto& c : s.columns) r.doubles(c.data(), nrow);
    s.worst_min_eigenvalue = r.pod<double>();
    s.positivity_violations = r.pod<std::int32_t>();
    return cp;
}

}  // namespace vbspin
