#include "vbspin/spin_algebra.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace vbspin {

SpinOperators spin_operators(double s) {
    const double twice = 2.0 * s;
    if (!(twice >= 0.0) || std::abs(twice - std::round(twice)) > 1e-12) {
        throw std::invalid_argument("spin_operators: 2s must be a non-negative integer, got s=" +
                                    std::to_string(s));
    }
    const int dim = static_cast<int>(std::round(twice)) + 1;
    SpinOperators ops;
    ops.s = 0.5 * std::round(twice);
    ops.Sz = Matrix::Zero(dim, dim);
    ops.Splus = Matrix::Zero(dim, dim);
    for (int i = 0; i < dim; ++i) {
        const double m = ops.s - i;
        ops.Sz(i, i) = m;
        // S+ |m> = sqrt(s(s+1) - m(m+1)) |m+1>; |m+1> sits at index i-1
        if (i > 0) ops.Splus(i - 1, i) = std::sqrt(ops.s * (ops.s + 1.0) - m * (m + 1.0));
    }
    ops.Sminus = ops.Splus.adjoint();
    ops.Sx = 0.5 * (ops.Splus + ops.Sminus);
    ops.Sy = cplx(0.0, -0.5) * (ops.Splus - ops.Sminus);
    return ops;
}

SpinOperators project_levels(const SpinOperators& ops, std::span<const int> levels) {
    const auto n = static_cast<Eigen::Index>(levels.size());
    auto restrict = [&](const Matrix& m) {
        Matrix out(n, n);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j) out(i, j) = m(levels[i], levels[j]);
        return out;
    };
    SpinOperators out;
    out.s = ops.s;
    out.Sx = restrict(ops.Sx);
    out.Sy = restrict(ops.Sy);
    out.Sz = restrict(ops.Sz);
    out.Splus = restrict(ops.Splus);
    out.Sminus = restrict(ops.Sminus);
    return out;
}

SpinOperators electron_operators(ElectronSpace space) {
    auto full = spin_operators(1.0);
    if (space == ElectronSpace::Full) return full;
    static constexpr int kReduced[] = {1, 2};
    return project_levels(full, kReduced);
}

std::vector<int> electron_levels(ElectronSpace space) {
    if (space == ElectronSpace::Full) return {1, 0, -1};
    return {0, -1};
}

int ms0_index(ElectronSpace space) { return space == ElectronSpace::Full ? 1 : 0; }

std::size_t product(std::span<const std::size_t> dims) {
    std::size_t p = 1;
    for (auto d : dims) p *= d;
    return p;
}

Matrix kron(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

Matrix embed(const Matrix& op, std::size_t slot, std::span<const std::size_t> dims) {
    if (slot >= dims.size()) throw std::invalid_argument("embed: slot out of range");
    if (op.rows() != op.cols() || static_cast<std::size_t>(op.rows()) != dims[slot]) {
        throw std::invalid_argument("embed: operator dimension " + std::to_string(op.rows()) +
                                    " does not match slot dimension " +
                                    std::to_string(dims[slot]));
    }
    const std::size_t left = product(dims.first(slot));
    const std::size_t right = product(dims.subspan(slot + 1));
    const auto d = static_cast<Eigen::Index>(dims[slot]);
    const auto total = static_cast<Eigen::Index>(left * dims[slot] * right);
    const auto r = static_cast<Eigen::Index>(right);
    Matrix out = Matrix::Zero(total, total);
    for (Eigen::Index l = 0; l < static_cast<Eigen::Index>(left); ++l)
        for (Eigen::Index a = 0; a < d; ++a)
            for (Eigen::Index b = 0; b < d; ++b) {
                const cplx v = op(a, b);
                if (v == cplx(0.0)) continue;
                const Eigen::Index row0 = (l * d + a) * r;
                const Eigen::Index col0 = (l * d + b) * r;
                for (Eigen::Index k = 0; k < r; ++k) out(row0 + k, col0 + k) = v;
            }
    return out;
}

double hermiticity_defect(const Matrix& a) {
    if (a.size() == 0) return 0.0;
    return (a - a.adjoint()).cwiseAbs().maxCoeff();
}

DensityMatrix::DensityMatrix(Matrix rho) : rho_(std::move(rho)) {
    if (rho_.rows() != rho_.cols()) throw std::invalid_argument("DensityMatrix: not square");
}

double DensityMatrix::hermiticity_defect() const { return vbspin::hermiticity_defect(rho_); }

double DensityMatrix::min_eigenvalue() const {
    Matrix h = 0.5 * (rho_ + rho_.adjoint());
    Eigen::SelfAdjointEigenSolver<Matrix> es(h, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

bool DensityMatrix::is_valid(double herm_tol, double trace_tol, double eig_tol) const {
    return hermiticity_defect() <= herm_tol && std::abs(trace() - cplx(1.0)) <= trace_tol &&
           min_eigenvalue() >= -eig_tol;
}

DensityMatrix initial_state(std::span<const std::size_t> dims, std::size_t electron_slot,
                            ElectronSpace space, double p0) {
    if (!(p0 >= 0.0 && p0 <= 1.0)) throw std::invalid_argument("initial_state: p0 outside [0,1]");
    if (electron_slot >= dims.size()) throw std::invalid_argument("initial_state: bad slot");
    const std::size_t edim = space == ElectronSpace::Full ? 3 : 2;
    if (dims[electron_slot] != edim)
        throw std::invalid_argument("initial_state: electron slot dimension mismatch");

    Matrix rho = Matrix::Identity(1, 1);
    for (std::size_t k = 0; k < dims.size(); ++k) {
        Matrix factor;
        if (k == electron_slot) {
            factor = Matrix::Zero(static_cast<Eigen::Index>(edim), static_cast<Eigen::Index>(edim));
            const int i0 = ms0_index(space);
            factor(i0, i0) = p0;
            factor(i0 + 1, i0 + 1) = 1.0 - p0;  // m_s = -1 follows m_s = 0 in both orderings
        } else {
            const auto d = static_cast<Eigen::Index>(dims[k]);
            factor = Matrix::Identity(d, d) / static_cast<double>(d);
        }
        rho = kron(rho, factor);
    }
    return DensityMatrix(std::move(rho));
}

DensityMatrix partial_trace(const DensityMatrix& rho, std::span<const std::size_t> dims,
                            std::span<const std::size_t> keep) {
    const std::size_t total = product(dims);
    if (total != rho.dim())
        throw std::invalid_argument("partial_trace: dims product " + std::to_string(total) +
                                    " != state dimension " + std::to_string(rho.dim()));
    std::vector<bool> kept(dims.size(), false);
    for (auto k : keep) {
        if (k >= dims.size()) throw std::invalid_argument("partial_trace: slot out of range");
        kept[k] = true;
    }
    std::vector<std::size_t> keep_sorted(keep.begin(), keep.end());
    std::sort(keep_sorted.begin(), keep_sorted.end());

    std::size_t kdim = 1;
    for (auto k : keep_sorted) kdim *= dims[k];
    Matrix out = Matrix::Zero(static_cast<Eigen::Index>(kdim), static_cast<Eigen::Index>(kdim));

    // digits of a flat index, most significant slot first
    const std::size_t n = dims.size();
    std::vector<std::size_t> di(n), dj(n);
    auto decompose = [&](std::size_t idx, std::vector<std::size_t>& digits) {
        for (std::size_t s = n; s-- > 0;) {
            digits[s] = idx % dims[s];
            idx /= dims[s];
        }
    };
    auto reduced_index = [&](const std::vector<std::size_t>& digits) {
        std::size_t r = 0;
        for (auto k : keep_sorted) r = r * dims[k] + digits[k];
        return r;
    };
    const Matrix& m = rho.matrix();
    for (std::size_t i = 0; i < total; ++i) {
        decompose(i, di);
        for (std::size_t j = 0; j < total; ++j) {
            decompose(j, dj);
            bool traced_equal = true;
            for (std::size_t s = 0; s < n && traced_equal; ++s)
                if (!kept[s] && di[s] != dj[s]) traced_equal = false;
            if (!traced_equal) continue;
            out(static_cast<Eigen::Index>(reduced_index(di)),
                static_cast<Eigen::Index>(reduced_index(dj))) +=
                m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        }
    }
    return DensityMatrix(std::move(out));
}

double expectation(const DensityMatrix& rho, const Matrix& op) {
    if (static_cast<std::size_t>(op.rows()) != rho.dim() || op.rows() != op.cols())
        throw std::invalid_argument("expectation: dimension mismatch");
    if (hermiticity_defect(op) > 1e-10)
        throw std::invalid_argument("expectation: operator is not Hermitian");
    const cplx v = (rho.matrix() * op).trace();
    if (std::abs(v.imag()) > 1e-10)
        throw std::logic_error("expectation: imaginary part " + std::to_string(v.imag()));
    return v.real();
}

}  // namespace vbspin
