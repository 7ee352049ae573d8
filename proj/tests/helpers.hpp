#pragma once

#include <vector>

#include "qmts/cmatrix.hpp"
#include "qmts/mts.hpp"

namespace qmts::test {

inline CMatrix pauli_x() {
    CMatrix m(2, 2);
    m.at(0, 1) = 1.0;
    m.at(1, 0) = 1.0;
    return m;
}

inline CMatrix pauli_z() {
    CMatrix m(2, 2);
    m.at(0, 0) = 1.0;
    m.at(1, 1) = -1.0;
    return m;
}

inline CMatrix swap2() {
    CMatrix s(4, 4);
    s.at(0, 0) = s.at(1, 2) = s.at(2, 1) = s.at(3, 3) = 1.0;
    return s;
}

inline MtVector mt_ket(const std::string& sys, const Rational& t,
                       const std::vector<cplx>& v) {
    MtSpace s({{SpaceLabel{sys, t, Direction::Forward, false}, v.size()}});
    return MtVector(s, v);
}

inline MtVector mt_bra(const std::string& sys, const Rational& t,
                       const std::vector<cplx>& v) {
    std::vector<cplx> c(v.size());
    for (std::size_t k = 0; k < v.size(); ++k) c[k] = std::conj(v[k]);
    MtSpace s({{SpaceLabel{sys, t, Direction::Backward, false}, v.size()}});
    return MtVector(s, c);
}

// Kraus operator A as a two-time object: out-leg forward at t_out, in-leg
// backward at t_in.
inline MtVector mt_kraus(const std::string& sys_out, const Rational& t_out,
                         const std::string& sys_in, const Rational& t_in, const CMatrix& a) {
    MtSpace s({{SpaceLabel{sys_out, t_out, Direction::Forward, false}, a.rows},
               {SpaceLabel{sys_in, t_in, Direction::Backward, false}, a.cols}});
    // canonical order sorts the factors; fill coefficients accordingly
    std::vector<cplx> coeffs(a.rows * a.cols);
    const bool out_first = s.factors[0].label.direction == Direction::Forward;
    for (std::size_t o = 0; o < a.rows; ++o)
        for (std::size_t i = 0; i < a.cols; ++i) {
            const std::size_t flat = out_first ? o * a.cols + i : i * a.rows + o;
            coeffs[flat] = a.at(o, i);
        }
    return MtVector(s, coeffs);
}

}  // namespace qmts::test
