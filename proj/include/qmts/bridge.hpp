#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qmts/circuit.hpp"
#include "qmts/comb.hpp"
#include "qmts/mts.hpp"

namespace qmts {

// C = r * sum_i a_i |psi_i><basis_i|. decompose_two_time produces the
// computational-basis form with max a_i = 1; equalize_basis rotates the bra
// basis until every coefficient magnitude is 1/sqrt(d).
struct TwoTimeDecomposition {
    cplx r = 0.0;
    std::vector<double> a;
    std::vector<std::vector<cplx>> psi;    // unit columns
    std::vector<std::vector<cplx>> basis;  // orthonormal bra-side vectors
    std::size_t d = 0;

    CMatrix reconstruct() const;
};

TwoTimeDecomposition decompose_two_time(const CMatrix& c);

TwoTimeDecomposition equalize_basis(const TwoTimeDecomposition& dec);

// Construction output: a serializable circuit plus the same content in comb
// normal form, with the CTC budget and the proportionality constant relating
// the construction's evaluation to its target.
struct ConstructionPlan {
    CircuitSpec circuit;
    // comb normal form of the same construction; the map constructions skip
    // it above a dimension threshold where the tooth Choi would not be
    // desk-sized (the circuit stays authoritative either way)
    PctcComb comb;
    bool comb_built = false;
    std::size_t ctc_count = 0;
    std::vector<std::size_t> ctc_dims;
    // pure-level for the map constructions (evaluation = k * C); density-level
    // for the comb constructions (evaluated MTS = k * input).
    cplx claimed_constant = 1.0;

    // mixed-path bookkeeping (empty for pure plans)
    std::vector<double> term_weights;      // p_r fed into the construction
    std::vector<cplx> term_constants;      // k_r with C_r = k_r * C_r^CTC
    std::vector<double> term_reweights;    // p'_r = p_r |k_r|^2 / sum_s p_s |k_s|^2
    std::map<std::string, std::string> factor_names;  // comb wire -> MTS system
};

// The unitaries U_i = (W_i ⊗ 1_Q) C_{V_i} on S ⊗ Q entering the two-P-CTC
// construction; exposed for the Tr_Q(U_i)|i> = 2 a_i |psi_i> identity checks.
std::vector<CMatrix> two_pctc_unitaries(const TwoTimeDecomposition& dec);

// Arbitrary square C realized with two P-CTCs of dimensions d and 2.
ConstructionPlan build_two_pctc_construction(const TwoTimeDecomposition& dec);

// Equalized C realized with a single d-dimensional P-CTC.
ConstructionPlan build_single_pctc_construction(const TwoTimeDecomposition& dec);

// Rectangular multi-system C embedded into D = max(prod in, prod out), run
// through the single-P-CTC construction and sandwiched with encode/decode
// isometries.
ConstructionPlan encode_multisystem(const CMatrix& c, const std::vector<std::size_t>& in_dims,
                                    const std::vector<std::size_t>& out_dims);

struct SpacePartition {
    std::vector<SpaceLabel> b1, b2, f1, f2;
    std::vector<std::size_t> dims_b1, dims_b2, dims_f1, dims_f2;

    std::size_t dim_b() const;
    std::size_t dim_f() const;
};

// The four order-based sets of a multi-time space (backward factors before
// all forward ones, and so on). Requires the plain (non-daggered) layer.
SpacePartition partition_spaces(const MtSpace& m);

enum class Strategy { UseB2, UseF1, Auto };

// Time-labelled P-CTC comb from a P-CTC comb: comb inputs become backward
// factors, outputs forward factors, with the comb operator (CTCs contracted)
// as the density vector.
MtDensityVector pctc_comb_to_mts(const PctcComb& c);

// Reverse direction: positive multi-time object to an operationally
// equivalent time-labelled P-CTC comb. The teleported set is B2 or F1 per the
// strategy; Auto minimizes cardinality, then total dimension, then uses B2.
ConstructionPlan mts_to_pctc_comb(const MtDensityVector& m, Strategy strategy);

// Same construction from an explicit pure-term mixture (weights need not be
// normalized, vectors need not be unit); the public entry point feeds the
// spectral decomposition through this.
ConstructionPlan mts_to_pctc_comb_terms(const MtSpace& space,
                                        const std::vector<std::pair<double, MtVector>>& terms,
                                        Strategy strategy);

// Helpers shared by the comb<->MTS probability cross-checks: interpret a
// labeled Choi as a multi-time density vector (In -> backward, Out ->
// forward) using the given time assignment.
MtDensityVector mt_density_from_choi(const ChoiOperator& c,
                                     const std::map<std::string, Rational>& times);

// Outcome-tuple ABL table of the MTS corresponding to a comb experiment:
// rho0 prepared on the global-past labels, instruments plugged by label,
// leftover outputs traced.
CombProbabilityTable mts_probability(const MtDensityVector& mts, const ChoiOperator& rho0,
                                     const std::vector<Instrument>& instruments);

}  // namespace qmts
