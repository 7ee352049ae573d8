#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "qmts/cmatrix.hpp"

using namespace qmts;
using namespace qmts::test;

namespace {
double dist(const CMatrix& a, const CMatrix& b) { return (a - b).frobenius_norm(); }
}  // namespace

TEST_CASE("kron basics") {
    CHECK(dist(kron(CMatrix::identity(2), CMatrix::identity(2)), CMatrix::identity(4)) == 0.0);

    CMatrix d12 = CMatrix::diag({1.0, 2.0});
    CMatrix d3 = CMatrix::diag({3.0});
    CHECK(dist(kron(d12, d3), CMatrix::diag({3.0, 6.0})) == 0.0);

    // (X ⊗ X)|00> = |11>
    CMatrix xx = kron(pauli_x(), pauli_x());
    CMatrix ket00(4, 1);
    ket00.at(0, 0) = 1.0;
    CMatrix ket11(4, 1);
    ket11.at(3, 0) = 1.0;
    CHECK(dist(xx * ket00, ket11) == 0.0);
}

TEST_CASE("partial trace") {
    CHECK(dist(partial_trace(CMatrix::identity(4), DimList({2, 2}), {1}),
               CMatrix::identity(2) * 2.0) == 0.0);

    // expand SWAP in the computational basis and sum diagonal blocks by hand
    CMatrix expected(2, 2);
    CMatrix s = swap2();
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j) {
            cplx acc = 0.0;
            for (std::size_t k = 0; k < 2; ++k) acc += s.at(k * 2 + i, k * 2 + j);
            expected.at(i, j) = acc;
        }
    CHECK(dist(expected, CMatrix::identity(2)) == 0.0);
    CHECK(dist(partial_trace(s, DimList({2, 2}), {0}), expected) == 0.0);

    CHECK(partial_trace(kron(CMatrix::identity(2), pauli_x()), DimList({2, 2}), {1})
              .frobenius_norm() == 0.0);

    CHECK_THROWS_AS(partial_trace(CMatrix::identity(4), DimList({2, 3}), {0}),
                    DimensionMismatch);
}

TEST_CASE("partial trace of a product leaves trace(b) * a") {
    Rng rng(11);
    for (int it = 0; it < 10; ++it) {
        CMatrix a = random_matrix(rng, 3, 3);
        CMatrix b = random_matrix(rng, 2, 2);
        CMatrix got = partial_trace(kron(a, b), DimList({3, 2}), {1});
        CHECK(dist(got, a * b.trace()) < 1e-12);
    }
}

TEST_CASE("partial transpose") {
    CHECK(dist(partial_transpose(CMatrix::identity(4), DimList({2, 2}), 0),
               CMatrix::identity(4)) == 0.0);

    CMatrix phi = max_entangled(2, true);
    CMatrix proj = phi * phi.dagger();
    CHECK(dist(partial_transpose(proj, DimList({2, 2}), 1), swap2() * 0.5) < 1e-15);

    Rng rng(5);
    CMatrix m = random_matrix(rng, 6, 6);
    CMatrix twice = partial_transpose(partial_transpose(m, DimList({2, 3}), 1),
                                      DimList({2, 3}), 1);
    CHECK(dist(twice, m) == 0.0);
    CHECK(std::abs(partial_transpose(m, DimList({2, 3}), 0).trace() - m.trace()) < 1e-12);
}

TEST_CASE("max entangled state") {
    CMatrix one = max_entangled(1, true);
    CHECK(one.rows == 1);
    CHECK(one.at(0, 0) == cplx(1.0));

    CMatrix phi2 = max_entangled(2, true);
    CHECK(std::abs(phi2.at(0, 0) - 1.0 / std::sqrt(2.0)) < 1e-15);
    CHECK(std::abs(phi2.at(3, 0) - 1.0 / std::sqrt(2.0)) < 1e-15);
    CHECK(phi2.at(1, 0) == cplx(0.0));

    for (std::size_t d : {1, 2, 3, 5}) {
        CMatrix phi = max_entangled(d, true);
        CHECK(std::abs(CMatrix::frobenius_inner(phi, phi) - 1.0) < 1e-14);
    }
}

TEST_CASE("complete unitary") {
    CHECK(dist(complete_unitary({1.0, 0.0}, 0, 2), CMatrix::identity(2)) == 0.0);

    const double r = 1.0 / std::sqrt(2.0);
    CMatrix u = complete_unitary({r, r}, 0, 2);
    CHECK(std::abs(u.at(0, 0) - r) < 1e-15);
    CHECK(std::abs(u.at(1, 0) - r) < 1e-15);
    CHECK(dist(u.dagger() * u, CMatrix::identity(2)) < 1e-12);

    Rng rng(7);
    for (std::size_t d : {2, 3, 5}) {
        CMatrix v = random_unitary(rng, d);
        for (std::size_t c = 0; c < d; ++c) {
            std::vector<cplx> col(d);
            for (std::size_t k = 0; k < d; ++k) col[k] = v.at(k, c);
            CMatrix w = complete_unitary(col, c, d);
            CHECK((w.dagger() * w - CMatrix::identity(d)).frobenius_norm() < 1e-9);
            for (std::size_t k = 0; k < d; ++k) CHECK(std::abs(w.at(k, c) - col[k]) < 1e-10);
        }
    }

    CHECK_THROWS_AS(complete_unitary({0.5, 0.5}, 0, 2), NotNormalized);
}

TEST_CASE("proportionality") {
    auto k = proportionality(CMatrix::identity(2) * 2.0, CMatrix::identity(2), 1e-9);
    REQUIRE(k.has_value());
    CHECK(std::abs(*k - 2.0) < 1e-12);

    CHECK(!proportionality(pauli_x(), pauli_z(), 1e-9).has_value());

    Rng rng(3);
    CMatrix m = random_matrix(rng, 4, 4);
    const cplx phase = std::polar(1.0, M_PI / 4.0);
    auto kp = proportionality(m * phase, m, 1e-9);
    REQUIRE(kp.has_value());
    CHECK(std::abs(*kp - phase) < 1e-12);

    auto kq = proportionality(m, m * phase, 1e-9);
    REQUIRE(kq.has_value());
    CHECK(std::abs(*kq - cplx(1.0) / phase) < 1e-12);

    CHECK(proportionality(CMatrix(3, 3), CMatrix(3, 3)).value() == cplx(0.0));
    CHECK_THROWS_AS(proportionality(CMatrix(2, 2), CMatrix(3, 3)), ShapeMismatch);
}

TEST_CASE("hermitian eigensolver and psd inverse sqrt") {
    Rng rng(9);
    CMatrix g = random_matrix(rng, 5, 5);
    CMatrix h = g * g.dagger();
    HermEig e = herm_eig(h);
    for (double w : e.eigenvalues) CHECK(w > -1e-10);
    CMatrix rec(5, 5);
    for (std::size_t k = 0; k < 5; ++k)
        for (std::size_t r = 0; r < 5; ++r)
            for (std::size_t c = 0; c < 5; ++c)
                rec.at(r, c) += e.eigenvalues[k] * e.eigenvectors.at(r, k) *
                                std::conj(e.eigenvectors.at(c, k));
    CHECK(dist(rec, h) < 1e-10);

    CMatrix w = inv_sqrt_psd(h);
    CHECK(dist(w * h * w, CMatrix::identity(5)) < 1e-9);
}

TEST_CASE("random cptp and povm generators") {
    Rng rng(21);
    auto kraus = random_kraus_cptp(rng, 3, 2, 3);
    CMatrix sum(2, 2);
    for (const auto& k : kraus) sum += k.dagger() * k;
    CHECK(dist(sum, CMatrix::identity(2)) < 1e-10);

    auto povm = random_povm(rng, 3, 4);
    CMatrix tot(3, 3);
    for (const auto& m : povm) {
        CHECK(min_eigenvalue(m) > -1e-10);
        tot += m;
    }
    CHECK(dist(tot, CMatrix::identity(3)) < 1e-10);
}
