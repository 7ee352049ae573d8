#pragma once

#include <complex>
#include <cstddef>
#include <optional>
#include <vector>

#include "qmts/errors.hpp"
#include "qmts/rng.hpp"

namespace qmts {

using cplx = std::complex<double>;

constexpr double kDefaultTol = 1e-9;

// Dense complex matrix, row-major. The substrate for everything else; sizes
// stay at desk scale so no sparsity or blocking is attempted.
struct CMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<cplx> entries;

    CMatrix() = default;
    CMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), entries(r * c, cplx(0.0)) {}
    CMatrix(std::size_t r, std::size_t c, std::vector<cplx> e);

    static CMatrix identity(std::size_t n);
    static CMatrix zero(std::size_t r, std::size_t c) { return CMatrix(r, c); }
    static CMatrix column(const std::vector<cplx>& v);
    static CMatrix diag(const std::vector<cplx>& d);

    cplx& at(std::size_t r, std::size_t c) { return entries[r * cols + c]; }
    const cplx& at(std::size_t r, std::size_t c) const { return entries[r * cols + c]; }

    bool is_square() const { return rows == cols; }
    void check_finite() const;

    CMatrix dagger() const;
    CMatrix transpose() const;
    CMatrix conj() const;
    cplx trace() const;

    CMatrix operator+(const CMatrix& o) const;
    CMatrix operator-(const CMatrix& o) const;
    CMatrix operator*(const CMatrix& o) const;  // matrix product
    CMatrix operator*(cplx s) const;
    CMatrix& operator+=(const CMatrix& o);
    CMatrix& operator*=(cplx s);

    double frobenius_norm() const;
    // <a, b>_F = sum conj(a_ij) b_ij
    static cplx frobenius_inner(const CMatrix& a, const CMatrix& b);

    bool is_hermitian(double tol = kDefaultTol) const;
    bool approx_equal(const CMatrix& o, double tol = kDefaultTol) const;
};

// Ordered subsystem dimensions indexing a tensor-product space. Index order is
// always the stored order; nothing reorders implicitly.
struct DimList {
    std::vector<std::size_t> dims;

    DimList() = default;
    DimList(std::initializer_list<std::size_t> d) : dims(d) {}
    explicit DimList(std::vector<std::size_t> d) : dims(std::move(d)) {}

    std::size_t product() const;
    std::size_t size() const { return dims.size(); }
    void check_matches(const CMatrix& m) const;
};

CMatrix kron(const CMatrix& a, const CMatrix& b);

// Trace over the subsystems listed in `traced`; remaining order preserved.
CMatrix partial_trace(const CMatrix& m, const DimList& dims,
                      const std::vector<std::size_t>& traced);

// Transpose on one tensor factor only. Involution, trace preserving.
CMatrix partial_transpose(const CMatrix& m, const DimList& dims, std::size_t subsystem);

// Column vector sum_i |ii> on d (x) d, divided by sqrt(d) when normalized.
CMatrix max_entangled(std::size_t d, bool normalized);

// Deterministic unitary completion: the target column is placed at
// column_index and the rest is produced by modified Gram-Schmidt over the
// computational basis in fixed index order, skipping near-parallel candidates.
CMatrix complete_unitary(const std::vector<cplx>& target_column, std::size_t column_index,
                         std::size_t d);

// Returns k with a ~= k*b under Frobenius distance, or nullopt. Both inputs
// near zero yield k = 0 by convention.
std::optional<cplx> proportionality(const CMatrix& a, const CMatrix& b,
                                    double tol = kDefaultTol);

// ---- spectral helpers (Eigen-backed) ----

struct HermEig {
    std::vector<double> eigenvalues;  // ascending
    CMatrix eigenvectors;             // columns
};

HermEig herm_eig(const CMatrix& m);

double min_eigenvalue(const CMatrix& hermitian);

// (PSD)^(-1/2) via eigendecomposition; eigenvalues below cutoff are dropped.
CMatrix inv_sqrt_psd(const CMatrix& m, double cutoff = 1e-12);

// ---- random object helpers (seeded, deterministic) ----

CMatrix random_matrix(Rng& rng, std::size_t r, std::size_t c);
std::vector<cplx> random_state(Rng& rng, std::size_t d);
CMatrix random_unitary(Rng& rng, std::size_t d);
CMatrix random_density(Rng& rng, std::size_t d);
std::vector<CMatrix> random_kraus_cptp(Rng& rng, std::size_t d_out, std::size_t d_in,
                                       std::size_t count);
std::vector<CMatrix> random_povm(Rng& rng, std::size_t d, std::size_t count);

}  // namespace qmts
