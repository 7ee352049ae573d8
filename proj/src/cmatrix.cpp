#include "qmts/cmatrix.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace qmts {

namespace {

using EMat = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const EMat> emap(const CMatrix& m) {
    return Eigen::Map<const EMat>(m.entries.data(), m.rows, m.cols);
}

CMatrix from_eigen(const EMat& e) {
    CMatrix out(e.rows(), e.cols());
    Eigen::Map<EMat>(out.entries.data(), e.rows(), e.cols()) = e;
    return out;
}

}  // namespace

CMatrix::CMatrix(std::size_t r, std::size_t c, std::vector<cplx> e)
    : rows(r), cols(c), entries(std::move(e)) {
    if (entries.size() != rows * cols)
        throw ShapeMismatch("entry count " + std::to_string(entries.size()) +
                            " does not fill " + std::to_string(rows) + "x" +
                            std::to_string(cols));
    check_finite();
}

CMatrix CMatrix::identity(std::size_t n) {
    CMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
}

CMatrix CMatrix::column(const std::vector<cplx>& v) {
    CMatrix m(v.size(), 1);
    m.entries = v;
    return m;
}

CMatrix CMatrix::diag(const std::vector<cplx>& d) {
    CMatrix m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m.at(i, i) = d[i];
    return m;
}

void CMatrix::check_finite() const {
    for (const cplx& z : entries)
        if (!std::isfinite(z.real()) || !std::isfinite(z.imag()))
            throw Error("CMatrix: non-finite entry");
}

CMatrix CMatrix::dagger() const {
    CMatrix out(cols, rows);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out.at(c, r) = std::conj(at(r, c));
    return out;
}

CMatrix CMatrix::transpose() const {
    CMatrix out(cols, rows);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out.at(c, r) = at(r, c);
    return out;
}

CMatrix CMatrix::conj() const {
    CMatrix out(rows, cols);
    for (std::size_t i = 0; i < entries.size(); ++i) out.entries[i] = std::conj(entries[i]);
    return out;
}

cplx CMatrix::trace() const {
    if (!is_square()) throw ShapeMismatch("trace of non-square matrix");
    cplx t = 0.0;
    for (std::size_t i = 0; i < rows; ++i) t += at(i, i);
    return t;
}

CMatrix CMatrix::operator+(const CMatrix& o) const {
    if (rows != o.rows || cols != o.cols) throw ShapeMismatch("operator+");
    CMatrix out(rows, cols);
    for (std::size_t i = 0; i < entries.size(); ++i) out.entries[i] = entries[i] + o.entries[i];
    return out;
}

CMatrix CMatrix::operator-(const CMatrix& o) const {
    if (rows != o.rows || cols != o.cols) throw ShapeMismatch("operator-");
    CMatrix out(rows, cols);
    for (std::size_t i = 0; i < entries.size(); ++i) out.entries[i] = entries[i] - o.entries[i];
    return out;
}

CMatrix CMatrix::operator*(const CMatrix& o) const {
    if (cols != o.rows) throw ShapeMismatch("operator*: inner dimensions");
    return from_eigen(emap(*this) * emap(o));
}

CMatrix CMatrix::operator*(cplx s) const {
    CMatrix out(rows, cols);
    for (std::size_t i = 0; i < entries.size(); ++i) out.entries[i] = entries[i] * s;
    return out;
}

CMatrix& CMatrix::operator+=(const CMatrix& o) {
    if (rows != o.rows || cols != o.cols) throw ShapeMismatch("operator+=");
    for (std::size_t i = 0; i < entries.size(); ++i) entries[i] += o.entries[i];
    return *this;
}

CMatrix& CMatrix::operator*=(cplx s) {
    for (cplx& z : entries) z *= s;
    return *this;
}

double CMatrix::frobenius_norm() const {
    double s = 0.0;
    for (const cplx& z : entries) s += std::norm(z);
    return std::sqrt(s);
}

cplx CMatrix::frobenius_inner(const CMatrix& a, const CMatrix& b) {
    if (a.rows != b.rows || a.cols != b.cols) throw ShapeMismatch("frobenius_inner");
    cplx s = 0.0;
    for (std::size_t i = 0; i < a.entries.size(); ++i)
        s += std::conj(a.entries[i]) * b.entries[i];
    return s;
}

bool CMatrix::is_hermitian(double tol) const {
    if (!is_square()) return false;
    double scale = std::max(frobenius_norm(), 1.0);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = r; c < cols; ++c)
            if (std::abs(at(r, c) - std::conj(at(c, r))) > tol * scale) return false;
    return true;
}

bool CMatrix::approx_equal(const CMatrix& o, double tol) const {
    if (rows != o.rows || cols != o.cols) return false;
    return (*this - o).frobenius_norm() <= tol * std::max(1.0, frobenius_norm());
}

std::size_t DimList::product() const {
    std::size_t p = 1;
    for (std::size_t d : dims) {
        if (d == 0) throw DimensionMismatch("zero subsystem dimension");
        p *= d;
    }
    return p;
}

void DimList::check_matches(const CMatrix& m) const {
    if (!m.is_square()) throw DimensionMismatch("matrix not square");
    if (product() != m.rows)
        throw DimensionMismatch("dims product " + std::to_string(product()) +
                                " != matrix dimension " + std::to_string(m.rows));
}

CMatrix kron(const CMatrix& a, const CMatrix& b) {
    CMatrix out(a.rows * b.rows, a.cols * b.cols);
    for (std::size_t ar = 0; ar < a.rows; ++ar)
        for (std::size_t ac = 0; ac < a.cols; ++ac) {
            const cplx v = a.at(ar, ac);
            if (v == cplx(0.0)) continue;
            for (std::size_t br = 0; br < b.rows; ++br)
                for (std::size_t bc = 0; bc < b.cols; ++bc)
                    out.at(ar * b.rows + br, ac * b.cols + bc) = v * b.at(br, bc);
        }
    return out;
}

namespace {

// Decompose a flat index into per-subsystem indices (first factor most significant).
void unflatten(std::size_t idx, const std::vector<std::size_t>& dims,
               std::vector<std::size_t>& out) {
    for (std::size_t k = dims.size(); k-- > 0;) {
        out[k] = idx % dims[k];
        idx /= dims[k];
    }
}

std::size_t flatten(const std::vector<std::size_t>& idx, const std::vector<std::size_t>& dims) {
    std::size_t f = 0;
    for (std::size_t k = 0; k < dims.size(); ++k) f = f * dims[k] + idx[k];
    return f;
}

}  // namespace

CMatrix partial_trace(const CMatrix& m, const DimList& dims,
                      const std::vector<std::size_t>& traced) {
    dims.check_matches(m);
    std::vector<bool> is_traced(dims.size(), false);
    for (std::size_t t : traced) {
        if (t >= dims.size()) throw DimensionMismatch("traced index out of range");
        is_traced[t] = true;
    }
    std::vector<std::size_t> kept_dims, traced_dims;
    std::vector<std::size_t> kept_pos, traced_pos;
    for (std::size_t k = 0; k < dims.size(); ++k) {
        if (is_traced[k]) {
            traced_dims.push_back(dims.dims[k]);
            traced_pos.push_back(k);
        } else {
            kept_dims.push_back(dims.dims[k]);
            kept_pos.push_back(k);
        }
    }
    std::size_t kd = 1, td = 1;
    for (std::size_t d : kept_dims) kd *= d;
    for (std::size_t d : traced_dims) td *= d;

    CMatrix out(kd, kd);
    std::vector<std::size_t> kr(kept_dims.size()), kc(kept_dims.size()), tt(traced_dims.size());
    std::vector<std::size_t> full_r(dims.size()), full_c(dims.size());
    for (std::size_t r = 0; r < kd; ++r) {
        unflatten(r, kept_dims, kr);
        for (std::size_t c = 0; c < kd; ++c) {
            unflatten(c, kept_dims, kc);
            cplx s = 0.0;
            for (std::size_t t = 0; t < td; ++t) {
                unflatten(t, traced_dims, tt);
                for (std::size_t k = 0; k < kept_pos.size(); ++k) {
                    full_r[kept_pos[k]] = kr[k];
                    full_c[kept_pos[k]] = kc[k];
                }
                for (std::size_t k = 0; k < traced_pos.size(); ++k) {
                    full_r[traced_pos[k]] = tt[k];
                    full_c[traced_pos[k]] = tt[k];
                }
                s += m.at(flatten(full_r, dims.dims), flatten(full_c, dims.dims));
            }
            out.at(r, c) = s;
        }
    }
    return out;
}

CMatrix partial_transpose(const CMatrix& m, const DimList& dims, std::size_t subsystem) {
    dims.check_matches(m);
    if (subsystem >= dims.size()) throw DimensionMismatch("subsystem index out of range");
    CMatrix out(m.rows, m.cols);
    std::vector<std::size_t> ir(dims.size()), ic(dims.size());
    for (std::size_t r = 0; r < m.rows; ++r) {
        unflatten(r, dims.dims, ir);
        for (std::size_t c = 0; c < m.cols; ++c) {
            unflatten(c, dims.dims, ic);
            std::vector<std::size_t> jr = ir, jc = ic;
            std::swap(jr[subsystem], jc[subsystem]);
            out.at(flatten(jr, dims.dims), flatten(jc, dims.dims)) = m.at(r, c);
        }
    }
    return out;
}

CMatrix max_entangled(std::size_t d, bool normalized) {
    CMatrix v(d * d, 1);
    const cplx amp = normalized ? cplx(1.0 / std::sqrt(double(d))) : cplx(1.0);
    for (std::size_t i = 0; i < d; ++i) v.at(i * d + i, 0) = amp;
    return v;
}

CMatrix complete_unitary(const std::vector<cplx>& target_column, std::size_t column_index,
                         std::size_t d) {
    if (target_column.size() != d) throw ShapeMismatch("target column length != d");
    if (column_index >= d) throw ShapeMismatch("column index out of range");
    double nrm = 0.0;
    for (const cplx& z : target_column) nrm += std::norm(z);
    nrm = std::sqrt(nrm);
    if (std::abs(nrm - 1.0) > 1e-10)
        throw NotNormalized("target column norm " + std::to_string(nrm));

    constexpr double kParallelThreshold = 1e-8;
    std::vector<std::vector<cplx>> cols;
    cols.push_back(target_column);
    for (std::size_t e = 0; e < d && cols.size() < d; ++e) {
        std::vector<cplx> v(d, cplx(0.0));
        v[e] = 1.0;
        // modified Gram-Schmidt against the columns gathered so far
        for (const auto& u : cols) {
            cplx ip = 0.0;
            for (std::size_t i = 0; i < d; ++i) ip += std::conj(u[i]) * v[i];
            for (std::size_t i = 0; i < d; ++i) v[i] -= ip * u[i];
        }
        double r = 0.0;
        for (const cplx& z : v) r += std::norm(z);
        r = std::sqrt(r);
        if (r <= kParallelThreshold) continue;
        for (cplx& z : v) z /= r;
        cols.push_back(std::move(v));
    }
    if (cols.size() != d) throw Error("complete_unitary: basis extension failed");

    // place the target at column_index, the generated ones in order elsewhere
    CMatrix u(d, d);
    std::size_t next = 1;
    for (std::size_t c = 0; c < d; ++c) {
        const auto& src = (c == column_index) ? cols[0] : cols[next++];
        for (std::size_t r = 0; r < d; ++r) u.at(r, c) = src[r];
    }
    return u;
}

std::optional<cplx> proportionality(const CMatrix& a, const CMatrix& b, double tol) {
    if (a.rows != b.rows || a.cols != b.cols) throw ShapeMismatch("proportionality");
    constexpr double eps = 1e-300;
    const double na = a.frobenius_norm();
    const double nb = b.frobenius_norm();
    const double zero_floor = 1e-14;
    if (na <= zero_floor && nb <= zero_floor) return cplx(0.0);
    if (nb <= zero_floor) return std::nullopt;
    cplx k = CMatrix::frobenius_inner(b, a) / CMatrix::frobenius_inner(b, b);
    double resid = (a - b * k).frobenius_norm();
    if (resid <= tol * std::max(na, eps)) return k;
    return std::nullopt;
}

HermEig herm_eig(const CMatrix& m) {
    if (!m.is_square()) throw ShapeMismatch("herm_eig of non-square matrix");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(emap(m));
    if (solver.info() != Eigen::Success) throw Error("herm_eig: solver failed");
    HermEig out;
    out.eigenvalues.assign(solver.eigenvalues().data(),
                           solver.eigenvalues().data() + m.rows);
    out.eigenvectors = CMatrix(m.rows, m.cols);
    for (std::size_t r = 0; r < m.rows; ++r)
        for (std::size_t c = 0; c < m.cols; ++c)
            out.eigenvectors.at(r, c) = solver.eigenvectors()(r, c);
    return out;
}

double min_eigenvalue(const CMatrix& hermitian) {
    return herm_eig(hermitian).eigenvalues.front();
}

CMatrix inv_sqrt_psd(const CMatrix& m, double cutoff) {
    HermEig e = herm_eig(m);
    CMatrix out(m.rows, m.cols);
    for (std::size_t k = 0; k < e.eigenvalues.size(); ++k) {
        if (e.eigenvalues[k] <= cutoff) continue;
        const double w = 1.0 / std::sqrt(e.eigenvalues[k]);
        for (std::size_t r = 0; r < m.rows; ++r)
            for (std::size_t c = 0; c < m.cols; ++c)
                out.at(r, c) += w * e.eigenvectors.at(r, k) *
                                std::conj(e.eigenvectors.at(c, k));
    }
    return out;
}

CMatrix random_matrix(Rng& rng, std::size_t r, std::size_t c) {
    CMatrix m(r, c);
    for (cplx& z : m.entries) z = rng.cnormal();
    return m;
}

std::vector<cplx> random_state(Rng& rng, std::size_t d) {
    std::vector<cplx> v(d);
    double n = 0.0;
    for (cplx& z : v) {
        z = rng.cnormal();
        n += std::norm(z);
    }
    n = std::sqrt(n);
    for (cplx& z : v) z /= n;
    return v;
}

CMatrix random_unitary(Rng& rng, std::size_t d) {
    // Gram-Schmidt on a Gaussian matrix with a phase fix keeps the draw Haar
    // distributed and the output deterministic for a given stream.
    CMatrix g = random_matrix(rng, d, d);
    CMatrix u(d, d);
    for (std::size_t c = 0; c < d; ++c) {
        std::vector<cplx> v(d);
        for (std::size_t r = 0; r < d; ++r) v[r] = g.at(r, c);
        for (std::size_t prev = 0; prev < c; ++prev) {
            cplx ip = 0.0;
            for (std::size_t r = 0; r < d; ++r) ip += std::conj(u.at(r, prev)) * v[r];
            for (std::size_t r = 0; r < d; ++r) v[r] -= ip * u.at(r, prev);
        }
        double n = 0.0;
        for (const cplx& z : v) n += std::norm(z);
        n = std::sqrt(n);
        cplx phase = v[0] == cplx(0.0) ? cplx(1.0) : v[0] / std::abs(v[0]);
        for (std::size_t r = 0; r < d; ++r) u.at(r, c) = v[r] / (n * phase);
    }
    return u;
}

CMatrix random_density(Rng& rng, std::size_t d) {
    CMatrix g = random_matrix(rng, d, d);
    CMatrix rho = g * g.dagger();
    return rho * (1.0 / rho.trace().real());
}

std::vector<CMatrix> random_kraus_cptp(Rng& rng, std::size_t d_out, std::size_t d_in,
                                       std::size_t count) {
    // trace preservation needs count * d_out >= d_in
    count = std::max(count, (d_in + d_out - 1) / d_out);
    std::vector<CMatrix> g;
    g.reserve(count);
    CMatrix gram(d_in, d_in);
    for (std::size_t k = 0; k < count; ++k) {
        g.push_back(random_matrix(rng, d_out, d_in));
        gram += g.back().dagger() * g.back();
    }
    CMatrix w = inv_sqrt_psd(gram);
    for (CMatrix& m : g) m = m * w;
    return g;
}

std::vector<CMatrix> random_povm(Rng& rng, std::size_t d, std::size_t count) {
    std::vector<CMatrix> p;
    p.reserve(count);
    CMatrix total(d, d);
    for (std::size_t k = 0; k < count; ++k) {
        CMatrix g = random_matrix(rng, d, d);
        p.push_back(g.dagger() * g);
        total += p.back();
    }
    CMatrix w = inv_sqrt_psd(total);
    for (CMatrix& m : p) m = w * m * w;
    return p;
}

}  // namespace qmts
