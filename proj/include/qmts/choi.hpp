#pragma once

#include <string>
#include <vector>

#include "qmts/cmatrix.hpp"

namespace qmts {

enum class Role { In, Out };

inline Role complementary(Role r) { return r == Role::In ? Role::Out : Role::In; }

// Choi operator over an ordered list of labeled systems. The matrix lives on
// the tensor product of all listed systems in the listed order; the
// unnormalized sum_ij |ii><jj| convention is used throughout so the paper's
// constants carry over verbatim.
struct ChoiOperator {
    struct System {
        std::string label;
        std::size_t dim = 1;
        Role role = Role::In;
    };

    std::vector<System> systems;
    CMatrix matrix;

    ChoiOperator() : matrix(1, 1) { matrix.at(0, 0) = 1.0; }
    ChoiOperator(std::vector<System> sys, CMatrix m);

    std::size_t total_dim() const;
    std::vector<std::size_t> dims() const;
    bool has_system(const std::string& label) const;
    const System& system(const std::string& label) const;
    bool is_scalar() const { return systems.empty(); }
    cplx scalar() const;

    // reorder the listed systems (and the matrix accordingly)
    ChoiOperator permuted(const std::vector<std::size_t>& order) const;

    ChoiOperator scaled(cplx s) const;
    ChoiOperator renamed(const std::string& from, const std::string& to) const;

    bool is_hermitian(double tol = kDefaultTol) const { return matrix.is_hermitian(tol); }
    bool is_cp(double tol = kDefaultTol) const;
    // trace preserving: tracing the Out systems leaves the identity on the Ins
    bool is_tp(double tol = 1e-8) const;
};

// Choi matrix of the CP map with the given Kraus operators (each d_out x d_in,
// with multi-system in/out bundles flattened in the listed order).
ChoiOperator choi_of_map(const std::vector<CMatrix>& kraus,
                         const std::vector<ChoiOperator::System>& ins,
                         const std::vector<ChoiOperator::System>& outs);

// State preparation (no inputs) and measurement effect (no outputs).
ChoiOperator choi_state(const std::string& label, const CMatrix& rho);
ChoiOperator choi_state(const std::vector<ChoiOperator::System>& outs, const CMatrix& rho);
ChoiOperator choi_effect(const std::string& label, const CMatrix& povm_element);
// Choi of the trace map on a system (the identity matrix, In role).
ChoiOperator choi_trace(const std::string& label, std::size_t dim);
// Choi of the identity channel from `from` to `to`.
ChoiOperator choi_identity_wire(const std::string& from, const std::string& to,
                                std::size_t dim);

// Link product over all shared labels (which must appear with complementary
// roles and equal dimensions). With no shared labels this is the tensor
// product. Commutative and associative.
ChoiOperator link(const ChoiOperator& a, const ChoiOperator& b);

ChoiOperator link_all(const std::vector<ChoiOperator>& ops);

// Same result (link is commutative and associative), but contracting at each
// step the pair whose result has the smallest open dimension. Keeps the
// intermediate operators desk-sized when many wires eventually close.
ChoiOperator link_all_greedy(std::vector<ChoiOperator> ops);

// Trace out the listed systems regardless of role.
ChoiOperator trace_out(const ChoiOperator& c, const std::vector<std::string>& labels);

// Extract Kraus operators (out x in) from a CP Choi; eigenvalue cutoff drops
// numerically-zero contributions. in/out index order follows the Choi's
// listed system order restricted to each role.
std::vector<CMatrix> kraus_from_choi(const ChoiOperator& c, double cutoff = 1e-12);

// Action on a state: returns the output density matrix over the Out systems.
CMatrix choi_apply(const ChoiOperator& map, const CMatrix& rho);

// ---- P-CTC-assisted maps ----

// Interaction on system ⊗ ancilla with the ancilla threaded through a P-CTC.
// Both evaluation routes below include the paper's 1/d_A^2 constant; they are
// algebraically identical and kept separate as a cross-check.
ChoiOperator pctc_assist_map_sandwich(const ChoiOperator& e, const std::string& sys,
                                      const std::string& anc);
ChoiOperator pctc_assist_map_kraus(const ChoiOperator& e, const std::string& sys,
                                   const std::string& anc);
// Computes both routes, verifies agreement, returns the Kraus route result.
ChoiOperator pctc_assist_map(const ChoiOperator& e, const std::string& sys,
                             const std::string& anc, double tol = kDefaultTol);

struct OutcomeTable {
    std::vector<std::string> labels;
    std::vector<double> probabilities;
    double denominator = 0.0;
};

// P(a) = Tr[C(rho) M_a] / Tr[C(rho)] for a CP map given as a Choi operator.
OutcomeTable pctc_map_probability(const ChoiOperator& map, const CMatrix& rho,
                                  const std::vector<CMatrix>& povm);

}  // namespace qmts
