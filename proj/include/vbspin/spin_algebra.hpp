// spin_algebra.hpp: spin matrices, tensor-product embedding, density-matrix helpers

#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace vbspin {

using cplx = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using RealMatrix = Eigen::MatrixXd;
using Matrix3 = Eigen::Matrix3d;
using Vector3 = Eigen::Vector3d;

/// Angular-momentum matrices for one spin in the |s>, |s-1>, ..., |-s> basis.
struct SpinOperators {
    double s = 0.0;
    Matrix Sx, Sy, Sz, Splus, Sminus;

    std::size_t dim() const { return static_cast<std::size_t>(Sz.rows()); }
};

/// Throws std::invalid_argument unless 2s is a non-negative integer.
SpinOperators spin_operators(double s);

/// Restrict every operator to the listed basis indices (in the listed order).
/// The truncated operators no longer close the SU(2) algebra.
SpinOperators project_levels(const SpinOperators& ops, std::span<const int> levels);

/// Electron Hilbert space: all three m_s levels or the {m_s=0, m_s=-1} pair.
enum class ElectronSpace { Full, Reduced };

/// S=1 operators in the chosen electron space.
/// Full ordering: m_s = +1, 0, -1.  Reduced ordering: m_s = 0, -1.
SpinOperators electron_operators(ElectronSpace space);

/// m_s label of every basis index of the electron space.
std::vector<int> electron_levels(ElectronSpace space);

/// Basis index of m_s = 0.
int ms0_index(ElectronSpace space);

/// Embed `op` acting on subsystem `slot` into the product space `dims`
/// (slot 0 is the most significant index).
Matrix embed(const Matrix& op, std::size_t slot, std::span<const std::size_t> dims);

/// Kronecker product of two dense matrices.
Matrix kron(const Matrix& a, const Matrix& b);

std::size_t product(std::span<const std::size_t> dims);

/// Complex Hermitian unit-trace state. Invariants are monitored, not enforced.
class DensityMatrix {
public:
    DensityMatrix() = default;
    explicit DensityMatrix(Matrix rho);

    const Matrix& matrix() const { return rho_; }
    Matrix& matrix() { return rho_; }
    std::size_t dim() const { return static_cast<std::size_t>(rho_.rows()); }

    cplx trace() const { return rho_.trace(); }
    double hermiticity_defect() const;
    double min_eigenvalue() const;

    /// All three invariants within the given tolerances.
    bool is_valid(double herm_tol = 1e-10, double trace_tol = 1e-10,
                  double eig_tol = 1e-8) const;

private:
    Matrix rho_;
};

/// Product state: electron diagonal with `p0` on m_s=0 and the remainder on
/// m_s=-1, every other slot maximally mixed.
DensityMatrix initial_state(std::span<const std::size_t> dims, std::size_t electron_slot,
                            ElectronSpace space, double p0);

/// Trace out every slot not listed in `keep`; kept slots stay in their
/// original relative order.
DensityMatrix partial_trace(const DensityMatrix& rho, std::span<const std::size_t> dims,
                            std::span<const std::size_t> keep);

/// Tr(rho * op) for a Hermitian operator.
double expectation(const DensityMatrix& rho, const Matrix& op);

/// max |A - A^dagger|
double hermiticity_defect(const Matrix& a);

}  // namespace vbspin
