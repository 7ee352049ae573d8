#include "qmts/bridge.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace qmts {

namespace {

std::size_t flatten(const std::vector<std::size_t>& idx, const std::vector<std::size_t>& dims) {
    std::size_t f = 0;
    for (std::size_t k = 0; k < dims.size(); ++k) f = f * dims[k] + idx[k];
    return f;
}

void unflatten(std::size_t flat, const std::vector<std::size_t>& dims,
               std::vector<std::size_t>& out) {
    for (std::size_t k = dims.size(); k-- > 0;) {
        out[k] = flat % dims[k];
        flat /= dims[k];
    }
}

double vec_norm(const std::vector<cplx>& v) {
    double s = 0.0;
    for (const cplx& z : v) s += std::norm(z);
    return std::sqrt(s);
}

CMatrix swap_matrix(std::size_t d) {
    CMatrix s(d * d, d * d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) s.at(j * d + i, i * d + j) = 1.0;
    return s;
}

// isometry embedding C^d into the first d basis states of C^D
CMatrix embed_iso(std::size_t D, std::size_t d) {
    CMatrix e(D, d);
    for (std::size_t i = 0; i < d; ++i) e.at(i, i) = 1.0;
    return e;
}

// unitary with W b_i = psi_i for an orthonormal basis {b_i}
CMatrix basis_mapping_unitary(const std::vector<cplx>& psi, std::size_t index,
                              const std::vector<std::vector<cplx>>& basis) {
    const std::size_t d = psi.size();
    CMatrix m = complete_unitary(psi, index, d);
    CMatrix b(d, d);
    for (std::size_t c = 0; c < d; ++c)
        for (std::size_t r = 0; r < d; ++r) b.at(r, c) = basis[c][r];
    return m * b.dagger();
}

}  // namespace

CMatrix TwoTimeDecomposition::reconstruct() const {
    CMatrix c(d, d);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t row = 0; row < d; ++row)
            for (std::size_t col = 0; col < d; ++col)
                c.at(row, col) += r * a[i] * psi[i][row] * std::conj(basis[i][col]);
    }
    return c;
}

TwoTimeDecomposition decompose_two_time(const CMatrix& c) {
    if (!c.is_square()) throw ShapeMismatch("decompose_two_time: operator must be square");
    const std::size_t d = c.rows;
    if (d == 0) throw ZeroOperator("empty operator");

    std::vector<double> col_norm(d, 0.0);
    double largest = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        double s = 0.0;
        for (std::size_t rw = 0; rw < d; ++rw) s += std::norm(c.at(rw, i));
        col_norm[i] = std::sqrt(s);
        largest = std::max(largest, col_norm[i]);
    }
    if (largest <= 1e-300) throw ZeroOperator("decompose_two_time");

    TwoTimeDecomposition dec;
    dec.d = d;
    dec.r = largest;
    for (std::size_t i = 0; i < d; ++i) {
        std::vector<cplx> column(d, cplx(0.0));
        if (col_norm[i] > 0.0) {
            for (std::size_t rw = 0; rw < d; ++rw) column[rw] = c.at(rw, i) / col_norm[i];
            dec.a.push_back(col_norm[i] / largest);
        } else {
            column[i] = 1.0;  // any unit vector; the term vanishes
            dec.a.push_back(0.0);
        }
        dec.psi.push_back(std::move(column));
        std::vector<cplx> e(d, cplx(0.0));
        e[i] = 1.0;
        dec.basis.push_back(std::move(e));
    }
    return dec;
}

TwoTimeDecomposition equalize_basis(const TwoTimeDecomposition& dec) {
    const std::size_t d = dec.d;
    if (d == 0) throw ZeroOperator("equalize_basis");
    double ssq = 0.0;
    for (double ai : dec.a) ssq += ai * ai;
    if (ssq <= 1e-300) throw ZeroOperator("equalize_basis");
    const double s = std::sqrt(ssq);

    TwoTimeDecomposition out = dec;
    out.r = dec.r * s;
    for (double& ai : out.a) ai /= s;

    const double target = 1.0 / double(d);
    const double fix_tol = 1e-12;

    // coefficient magnitude of the rotated bra |theta> as a function of theta
    auto a_sq = [&](std::size_t imax, std::size_t imin, double theta) {
        const double ct = std::cos(theta), st = std::sin(theta);
        std::vector<cplx> v(d);
        for (std::size_t k = 0; k < d; ++k)
            v[k] = out.a[imax] * ct * out.psi[imax][k] + out.a[imin] * st * out.psi[imin][k];
        const double n = vec_norm(v);
        return n * n;
    };

    const std::size_t round_cap = 2 * d + 2;
    for (std::size_t round = 0; round <= round_cap; ++round) {
        std::size_t imax = 0, imin = 0;
        bool any_dev = false;
        for (std::size_t k = 0; k < d; ++k) {
            if (out.a[k] * out.a[k] > out.a[imax] * out.a[imax]) imax = k;
            if (out.a[k] * out.a[k] < out.a[imin] * out.a[imin]) imin = k;
            if (std::abs(out.a[k] * out.a[k] - target) > fix_tol) any_dev = true;
        }
        if (!any_dev) break;
        if (round == round_cap)
            throw Error("equalize_basis: rotation rounds exceeded the cap");
        if (out.a[imax] * out.a[imax] <= target || out.a[imin] * out.a[imin] >= target)
            throw Error("equalize_basis: endpoints do not straddle 1/d");

        // bisection for |a_theta|^2 = 1/d on [0, pi/2]; continuity plus the
        // straddling endpoints guarantee a root. The root is pinned well
        // below fix_tol so already-fixed coefficients never drift back out.
        double lo = 0.0, hi = M_PI / 2.0, theta = 0.0;
        for (int it = 0; it < 200; ++it) {
            theta = 0.5 * (lo + hi);
            const double f = a_sq(imax, imin, theta) - target;
            if (std::abs(f) <= 1e-14) break;
            if (f > 0.0)
                lo = theta;
            else
                hi = theta;
        }

        const double ct = std::cos(theta), st = std::sin(theta);
        std::vector<cplx> psi_t(d), psi_p(d), b_t(d), b_p(d);
        for (std::size_t k = 0; k < d; ++k) {
            psi_t[k] = out.a[imax] * ct * out.psi[imax][k] + out.a[imin] * st * out.psi[imin][k];
            psi_p[k] = out.a[imax] * st * out.psi[imax][k] - out.a[imin] * ct * out.psi[imin][k];
            b_t[k] = ct * out.basis[imax][k] + st * out.basis[imin][k];
            b_p[k] = st * out.basis[imax][k] - ct * out.basis[imin][k];
        }
        const double n_t = vec_norm(psi_t), n_p = vec_norm(psi_p);
        out.a[imax] = n_t;
        out.a[imin] = n_p;
        if (n_t > 1e-15)
            for (auto& z : psi_t) z /= n_t;
        else
            psi_t = out.basis[imax];
        if (n_p > 1e-15)
            for (auto& z : psi_p) z /= n_p;
        else
            psi_p = out.basis[imin];
        out.psi[imax] = std::move(psi_t);
        out.psi[imin] = std::move(psi_p);
        out.basis[imax] = std::move(b_t);
        out.basis[imin] = std::move(b_p);
    }
    return out;
}

std::vector<CMatrix> two_pctc_unitaries(const TwoTimeDecomposition& dec) {
    const std::size_t d = dec.d;
    std::vector<CMatrix> us;
    for (std::size_t i = 0; i < d; ++i) {
        const double ai = dec.a[i];
        const double bi = std::sqrt(std::max(0.0, 1.0 - ai * ai));
        CMatrix v(2, 2);
        v.at(0, 0) = ai;
        v.at(0, 1) = -bi;
        v.at(1, 0) = bi;
        v.at(1, 1) = ai;

        // controlled rotation: V_i on Q when S sits on basis vector i
        CMatrix proj(d, d);
        for (std::size_t r = 0; r < d; ++r)
            for (std::size_t c = 0; c < d; ++c)
                proj.at(r, c) = dec.basis[i][r] * std::conj(dec.basis[i][c]);
        CMatrix rest = CMatrix::identity(d) - proj;
        CMatrix cv = kron(proj, v) + kron(rest, CMatrix::identity(2));

        CMatrix w = basis_mapping_unitary(dec.psi[i], i, dec.basis);
        us.push_back(kron(w, CMatrix::identity(2)) * cv);
    }
    return us;
}

namespace {

// above this total dimension a single-tooth Choi stops being desk-sized and
// the plan ships circuit-only
constexpr std::size_t kMaxToothChoiDim = 2048;

// single tooth comb wrapping a unitary circuit on (S wires..., ancillas...)
PctcComb one_tooth_comb(const std::vector<CMatrix>& kraus,
                        const std::vector<ChoiOperator::System>& ins,
                        const std::vector<ChoiOperator::System>& outs,
                        const std::vector<CtcPair>& pairs) {
    Tooth t;
    t.choi = choi_of_map(kraus, ins, outs);
    t.time_in = Rational(0);
    t.time_out = Rational(1);
    PctcComb pc = pctc_assist_comb(build_comb({t}), pairs);
    pc.time_labelled = true;
    return pc;
}

}  // namespace

ConstructionPlan build_two_pctc_construction(const TwoTimeDecomposition& dec) {
    const std::size_t d = dec.d;
    std::vector<CMatrix> us = two_pctc_unitaries(dec);

    // U = (sum_i |i><i|_A ⊗ (U_i)_{SQ}) (SWAP_{SA} ⊗ 1_Q), wires ordered S,Q,A
    CMatrix ctrl(d * 2 * d, d * 2 * d);
    for (std::size_t i = 0; i < d; ++i) {
        CMatrix proj(d, d);
        for (std::size_t r = 0; r < d; ++r)
            for (std::size_t c = 0; c < d; ++c)
                proj.at(r, c) = dec.basis[i][r] * std::conj(dec.basis[i][c]);
        ctrl += kron(us[i], proj);  // (S,Q) ⊗ A
    }
    // swap S and A with Q in the middle: |s,q,a> -> |a,q,s>
    CMatrix swap_sa(d * 2 * d, d * 2 * d);
    for (std::size_t s = 0; s < d; ++s)
        for (std::size_t q = 0; q < 2; ++q)
            for (std::size_t a = 0; a < d; ++a)
                swap_sa.at((a * 2 + q) * d + s, (s * 2 + q) * d + a) = 1.0;
    CMatrix u_total = ctrl * swap_sa;

    ConstructionPlan plan;
    plan.ctc_count = 2;
    plan.ctc_dims = {d, 2};
    plan.claimed_constant = cplx(1.0) / (double(d) * dec.r);

    CircuitSpec& cs = plan.circuit;
    cs.systems = {{"S", d}, {"Q", 2}, {"A", d}};
    CircuitSpec::Node swap_node;
    swap_node.kind = CircuitSpec::NodeKind::Gate;
    swap_node.systems_in = {"S", "Q", "A"};
    swap_node.systems_out = {"S", "Q", "A"};
    swap_node.matrices = {swap_sa};
    swap_node.name = "swap_S_A";
    cs.nodes.push_back(swap_node);
    CircuitSpec::Node ctrl_node;
    ctrl_node.kind = CircuitSpec::NodeKind::Gate;
    ctrl_node.systems_in = {"S", "Q", "A"};
    ctrl_node.systems_out = {"S", "Q", "A"};
    ctrl_node.matrices = {ctrl};
    ctrl_node.name = "controlled_U_i";
    cs.nodes.push_back(ctrl_node);
    cs.ctc_pairs = {{"A", "A"}, {"Q", "Q"}};
    cs.metadata["construction"] = "two_pctc";

    if (4 * d * d * d * d <= kMaxToothChoiDim) {
        plan.comb = one_tooth_comb(
            {u_total},
            {{"S.in", d, Role::In}, {"Q.past", 2, Role::In}, {"A.past", d, Role::In}},
            {{"S.out", d, Role::Out}, {"Q.fut", 2, Role::Out}, {"A.fut", d, Role::Out}},
            {{"Q.fut", "Q.past"}, {"A.fut", "A.past"}});
        plan.comb_built = true;
    }
    return plan;
}

ConstructionPlan build_single_pctc_construction(const TwoTimeDecomposition& dec) {
    const std::size_t d = dec.d;
    for (double ai : dec.a)
        if (std::abs(ai - dec.a[0]) > 1e-8)
            throw NotEqualized("coefficient magnitudes differ beyond 1e-8");

    // ctrl = sum_i (W'_i)_S ⊗ |phi_i><phi_i|_A after SWAP_{SA}
    CMatrix ctrl(d * d, d * d);
    for (std::size_t i = 0; i < d; ++i) {
        CMatrix proj(d, d);
        for (std::size_t r = 0; r < d; ++r)
            for (std::size_t c = 0; c < d; ++c)
                proj.at(r, c) = dec.basis[i][r] * std::conj(dec.basis[i][c]);
        CMatrix w = basis_mapping_unitary(dec.psi[i], i, dec.basis);
        ctrl += kron(w, proj);
    }
    CMatrix u_total = ctrl * swap_matrix(d);

    ConstructionPlan plan;
    plan.ctc_count = 1;
    plan.ctc_dims = {d};
    plan.claimed_constant = cplx(1.0) / (double(d) * dec.r * dec.a[0]);

    CircuitSpec& cs = plan.circuit;
    cs.systems = {{"S", d}, {"A", d}};
    CircuitSpec::Node swap_node;
    swap_node.kind = CircuitSpec::NodeKind::Gate;
    swap_node.systems_in = {"S", "A"};
    swap_node.systems_out = {"S", "A"};
    swap_node.matrices = {swap_matrix(d)};
    swap_node.name = "swap_S_A";
    cs.nodes.push_back(swap_node);
    CircuitSpec::Node ctrl_node;
    ctrl_node.kind = CircuitSpec::NodeKind::Gate;
    ctrl_node.systems_in = {"S", "A"};
    ctrl_node.systems_out = {"S", "A"};
    ctrl_node.matrices = {ctrl};
    ctrl_node.name = "controlled_W_i";
    cs.nodes.push_back(ctrl_node);
    cs.ctc_pairs = {{"A", "A"}};
    cs.metadata["construction"] = "single_pctc";

    if (d * d * d * d <= kMaxToothChoiDim) {
        plan.comb = one_tooth_comb({u_total},
                                   {{"S.in", d, Role::In}, {"A.past", d, Role::In}},
                                   {{"S.out", d, Role::Out}, {"A.fut", d, Role::Out}},
                                   {{"A.fut", "A.past"}});
        plan.comb_built = true;
    }
    return plan;
}

ConstructionPlan encode_multisystem(const CMatrix& c, const std::vector<std::size_t>& in_dims,
                                    const std::vector<std::size_t>& out_dims) {
    std::size_t d_in = 1, d_out = 1;
    for (std::size_t d : in_dims) d_in *= d;
    for (std::size_t d : out_dims) d_out *= d;
    if (c.rows != d_out || c.cols != d_in)
        throw ShapeMismatch("encode_multisystem: operator is " + std::to_string(c.rows) +
                            "x" + std::to_string(c.cols));
    const std::size_t D = std::max(d_in, d_out);

    CMatrix emb_in = embed_iso(D, d_in);
    CMatrix emb_out = embed_iso(D, d_out);
    CMatrix c_big = emb_out * c * emb_in.dagger();

    TwoTimeDecomposition dec = equalize_basis(decompose_two_time(c_big));
    ConstructionPlan single = build_single_pctc_construction(dec);

    ConstructionPlan plan;
    plan.ctc_count = 1;
    plan.ctc_dims = {D};
    plan.claimed_constant = single.claimed_constant;

    CircuitSpec& cs = plan.circuit;
    for (std::size_t k = 0; k < in_dims.size(); ++k)
        cs.systems.push_back({"in" + std::to_string(k), in_dims[k]});
    for (std::size_t k = 0; k < out_dims.size(); ++k)
        cs.systems.push_back({"out" + std::to_string(k), out_dims[k]});
    cs.systems.push_back({"S", D});
    cs.systems.push_back({"A", D});

    std::vector<std::string> in_labels, out_labels;
    for (std::size_t k = 0; k < in_dims.size(); ++k) in_labels.push_back("in" + std::to_string(k));
    for (std::size_t k = 0; k < out_dims.size(); ++k)
        out_labels.push_back("out" + std::to_string(k));

    CircuitSpec::Node enc;
    enc.kind = CircuitSpec::NodeKind::KrausSet;
    enc.systems_in = in_labels;
    enc.systems_out = {"S"};
    enc.matrices = {emb_in};
    enc.name = "encode";
    cs.nodes.push_back(enc);
    for (const auto& n : single.circuit.nodes) cs.nodes.push_back(n);
    CircuitSpec::Node decn;
    decn.kind = CircuitSpec::NodeKind::KrausSet;
    decn.systems_in = {"S"};
    decn.systems_out = out_labels;
    decn.matrices = {emb_out.dagger()};
    decn.name = "decode";
    cs.nodes.push_back(decn);
    cs.ctc_pairs = {{"A", "A"}};
    cs.metadata["construction"] = "encode_multisystem";

    // comb: one CPTP tooth; the decode isometry is dilated so the tooth stays
    // a channel, the environment legs die on the post-selected support
    CMatrix ctrl = single.circuit.nodes[1].matrices[0];
    CMatrix u_core = ctrl * swap_matrix(D);
    std::vector<CMatrix> kraus;
    if (d_out == D) {
        kraus.push_back(kron(emb_out.dagger(), CMatrix::identity(D)) * u_core *
                        kron(emb_in, CMatrix::identity(D)));
    } else {
        for (std::size_t e = 0; e < D; ++e) {
            // W_dec |j> = |j>_F |0>_E for j < d_out, |0>_F |j>_E otherwise
            CMatrix dec_e(d_out, D);
            for (std::size_t j = 0; j < D; ++j) {
                if (j < d_out && e == 0) dec_e.at(j, j) = 1.0;
                if (j >= d_out && e == j) dec_e.at(0, j) = 1.0;
            }
            if (dec_e.frobenius_norm() == 0.0) continue;
            kraus.push_back(kron(dec_e, CMatrix::identity(D)) * u_core *
                            kron(emb_in, CMatrix::identity(D)));
        }
    }
    if (d_in * D * d_out * D <= kMaxToothChoiDim) {
        std::vector<ChoiOperator::System> ins, outs;
        for (std::size_t k = 0; k < in_dims.size(); ++k)
            ins.push_back({"in" + std::to_string(k), in_dims[k], Role::In});
        ins.push_back({"A.past", D, Role::In});
        for (std::size_t k = 0; k < out_dims.size(); ++k)
            outs.push_back({"out" + std::to_string(k), out_dims[k], Role::Out});
        outs.push_back({"A.fut", D, Role::Out});
        plan.comb = one_tooth_comb(kraus, ins, outs, {{"A.fut", "A.past"}});
        plan.comb_built = true;
    }
    return plan;
}

std::size_t SpacePartition::dim_b() const {
    std::size_t d = 1;
    for (std::size_t x : dims_b1) d *= x;
    for (std::size_t x : dims_b2) d *= x;
    return d;
}

std::size_t SpacePartition::dim_f() const {
    std::size_t d = 1;
    for (std::size_t x : dims_f1) d *= x;
    for (std::size_t x : dims_f2) d *= x;
    return d;
}

SpacePartition partition_spaces(const MtSpace& m) {
    for (const auto& f : m.factors)
        if (f.label.daggered)
            throw SpaceMismatch("partition_spaces expects the plain layer");
    SpacePartition p;
    for (const auto& f : m.factors) {
        if (f.label.direction == Direction::Backward) {
            bool before_all_forward = true;
            for (const auto& g : m.factors)
                if (g.label.direction == Direction::Forward && !(f.label.time < g.label.time))
                    before_all_forward = false;
            if (before_all_forward) {
                p.b1.push_back(f.label);
                p.dims_b1.push_back(f.dim);
            } else {
                p.b2.push_back(f.label);
                p.dims_b2.push_back(f.dim);
            }
        } else {
            bool after_all_backward = true;
            for (const auto& g : m.factors)
                if (g.label.direction == Direction::Backward && !(g.label.time < f.label.time))
                    after_all_backward = false;
            if (after_all_backward) {
                p.f2.push_back(f.label);
                p.dims_f2.push_back(f.dim);
            } else {
                p.f1.push_back(f.label);
                p.dims_f1.push_back(f.dim);
            }
        }
    }
    return p;
}

MtDensityVector mt_density_from_choi(const ChoiOperator& c,
                                     const std::map<std::string, Rational>& times) {
    std::vector<MtSpace::Factor> factors;
    for (const auto& s : c.systems) {
        auto it = times.find(s.label);
        if (it == times.end()) throw MissingTimeLabels("no time for system " + s.label);
        factors.push_back({SpaceLabel{s.label, it->second,
                                      s.role == Role::In ? Direction::Backward
                                                         : Direction::Forward,
                                      false},
                           s.dim});
    }
    MtSpace space(factors);

    // map canonical factor order back to the Choi system order
    std::vector<std::size_t> choi_pos(space.factors.size());
    for (std::size_t k = 0; k < space.factors.size(); ++k) {
        bool found = false;
        for (std::size_t j = 0; j < c.systems.size(); ++j)
            if (c.systems[j].label == space.factors[k].label.system) {
                choi_pos[k] = j;
                found = true;
                break;
            }
        if (!found) throw Error("mt_density_from_choi: factor alignment failed");
    }

    const auto cdims = c.dims();
    const auto pdims = space.dims();
    const std::size_t d = space.total_dim();
    CMatrix op(d, d);
    std::vector<std::size_t> pr(pdims.size()), pc(pdims.size());
    std::vector<std::size_t> cr(cdims.size()), cc(cdims.size());
    for (std::size_t r = 0; r < d; ++r) {
        unflatten(r, pdims, pr);
        for (std::size_t col = 0; col < d; ++col) {
            unflatten(col, pdims, pc);
            for (std::size_t k = 0; k < pdims.size(); ++k) {
                cr[choi_pos[k]] = pr[k];
                cc[choi_pos[k]] = pc[k];
            }
            op.at(r, col) = c.matrix.at(flatten(cr, cdims), flatten(cc, cdims));
        }
    }
    return MtDensityVector(std::move(space), std::move(op));
}

MtDensityVector pctc_comb_to_mts(const PctcComb& c) {
    if (!c.time_labelled) throw MissingTimeLabels("pctc_comb_to_mts");
    ChoiOperator op = pctc_comb_choi(c);
    std::map<std::string, Rational> times;
    for (const auto& t : c.base.teeth) {
        for (const auto& s : t.external_ins())
            if (!c.is_ctc_label(s.label)) times[s.label] = t.time_in;
        for (const auto& s : t.external_outs())
            if (!c.is_ctc_label(s.label)) times[s.label] = t.time_out;
    }
    return mt_density_from_choi(op, times);
}

// ---------------------------------------------------------------------------
// MTS -> time-labelled P-CTC comb
// ---------------------------------------------------------------------------

namespace {

struct FactorInfo {
    SpaceLabel label;
    std::size_t dim;
    std::string wire;  // external comb label
    bool teleported = false;
};

struct EventSet {
    bool is_input = false;
    Rational desired_time;
    int kind_rank = 0;  // input 0, core 1, output 2
    std::vector<std::size_t> members;  // indices into the factor list
    bool is_core = false;
    bool is_boundary = false;  // global past / future
    bool synthetic = false;    // boundaries, core markers, alternation fillers
};

struct Leg {
    std::string label;
    std::size_t dim;
};

// Kraus matrices for a tooth that routes wires and optionally applies a core
// block on a subset of legs. routes are (out position, in position) pairs.
std::vector<CMatrix> tooth_kraus(const std::vector<Leg>& ins, const std::vector<Leg>& outs,
                                 const std::vector<std::pair<std::size_t, std::size_t>>& routes,
                                 const std::vector<std::size_t>& core_in_pos,
                                 const std::vector<std::size_t>& core_out_pos,
                                 const std::vector<CMatrix>& core_kraus) {
    std::vector<std::size_t> din, dout;
    for (const auto& l : ins) din.push_back(l.dim);
    for (const auto& l : outs) dout.push_back(l.dim);
    std::size_t in_size = 1, out_size = 1;
    for (auto d : din) in_size *= d;
    for (auto d : dout) out_size *= d;

    std::vector<std::size_t> core_in_dims, core_out_dims;
    for (auto p : core_in_pos) core_in_dims.push_back(din[p]);
    for (auto p : core_out_pos) core_out_dims.push_back(dout[p]);
    std::size_t core_out_size = 1;
    for (auto d : core_out_dims) core_out_size *= d;

    std::vector<CMatrix> result;
    const std::size_t n_kraus = core_kraus.empty() ? 1 : core_kraus.size();
    for (std::size_t kk = 0; kk < n_kraus; ++kk) {
        CMatrix m(out_size, in_size);
        std::vector<std::size_t> ii(din.size()), oo(dout.size());
        std::vector<std::size_t> ci(core_in_dims.size()), co(core_out_dims.size());
        for (std::size_t c = 0; c < in_size; ++c) {
            unflatten(c, din, ii);
            for (std::size_t p = 0; p < core_in_pos.size(); ++p) ci[p] = ii[core_in_pos[p]];
            const std::size_t core_col = flatten(ci, core_in_dims);
            const std::size_t n_out = core_kraus.empty() ? 1 : core_out_size;
            for (std::size_t x = 0; x < n_out; ++x) {
                cplx val = 1.0;
                if (!core_kraus.empty()) {
                    unflatten(x, core_out_dims, co);
                    val = core_kraus[kk].at(x, core_col);
                    if (val == cplx(0.0)) continue;
                }
                for (auto [op, ip] : routes) oo[op] = ii[ip];
                for (std::size_t p = 0; p < core_out_pos.size(); ++p)
                    oo[core_out_pos[p]] = co[p];
                m.at(flatten(oo, dout), c) += val;
            }
        }
        result.push_back(std::move(m));
    }
    return result;
}

}  // namespace

ConstructionPlan mts_to_pctc_comb_terms(const MtSpace& space,
                                        const std::vector<std::pair<double, MtVector>>& terms,
                                        Strategy strategy) {
    if (space.empty()) throw NotPositive("mts_to_pctc_comb: empty space");
    if (terms.empty()) throw NotPositive("mts_to_pctc_comb: no pure terms");
    for (const auto& [w, v] : terms) {
        if (w < 0) throw NotPositive("negative term weight");
        if (!(v.space == space)) throw SpaceMismatch("terms live on different spaces");
    }

    // --- factor bookkeeping ---------------------------------------------
    std::vector<FactorInfo> factors;
    std::map<std::string, int> sys_count;
    for (const auto& f : space.factors) sys_count[f.label.system]++;
    for (const auto& f : space.factors) {
        FactorInfo fi;
        fi.label = f.label;
        fi.dim = f.dim;
        fi.wire = sys_count[f.label.system] == 1 ? f.label.system
                                                 : f.label.system + "@" + f.label.time.str();
        factors.push_back(fi);
    }

    SpacePartition part = partition_spaces(space);
    std::size_t card_b2 = part.b2.size(), card_f1 = part.f1.size();
    std::size_t dim_b2 = 1, dim_f1 = 1;
    for (auto d : part.dims_b2) dim_b2 *= d;
    for (auto d : part.dims_f1) dim_f1 *= d;

    Strategy chosen = strategy;
    if (strategy == Strategy::Auto) {
        if (card_b2 != card_f1)
            chosen = card_b2 < card_f1 ? Strategy::UseB2 : Strategy::UseF1;
        else if (dim_b2 != dim_f1)
            chosen = dim_b2 < dim_f1 ? Strategy::UseB2 : Strategy::UseF1;
        else
            chosen = Strategy::UseB2;
    }
    const auto& teleport_labels = (chosen == Strategy::UseB2) ? part.b2 : part.f1;
    for (auto& fi : factors)
        for (const auto& l : teleport_labels)
            if (fi.label == l) fi.teleported = true;

    std::vector<std::size_t> b_idx, f_idx;  // canonical order within the space
    for (std::size_t k = 0; k < factors.size(); ++k)
        (factors[k].label.direction == Direction::Backward ? b_idx : f_idx).push_back(k);
    std::size_t d_b = 1, d_f = 1;
    for (auto k : b_idx) d_b *= factors[k].dim;
    for (auto k : f_idx) d_f *= factors[k].dim;
    const std::size_t D = std::max(d_b, d_f);

    // --- per-term core construction --------------------------------------
    const CMatrix emb_b = embed_iso(D, d_b);
    const CMatrix emb_f = embed_iso(D, d_f);
    double weight_total = 0.0;
    for (const auto& [w, v] : terms) weight_total += w;
    if (weight_total <= 0) throw NotPositive("mts_to_pctc_comb: zero total weight");

    std::vector<double> p_in;
    std::vector<cplx> kappa_full;
    std::vector<CMatrix> core_units;  // (W'-control after swap) on S ⊗ A at dim D
    const auto sdims = space.dims();
    std::vector<std::size_t> full_idx(sdims.size());
    double tele_dim_product = 1.0;
    for (const auto& l : teleport_labels)
        for (const auto& fi : factors)
            if (fi.label == l) tele_dim_product *= double(fi.dim);

    for (const auto& [w, v] : terms) {
        // C[f, b] from the coefficient tensor
        CMatrix c(d_f, d_b);
        std::vector<std::size_t> bi(b_idx.size()), fi2(f_idx.size());
        std::vector<std::size_t> bdims, fdims;
        for (auto k : b_idx) bdims.push_back(factors[k].dim);
        for (auto k : f_idx) fdims.push_back(factors[k].dim);
        for (std::size_t flat = 0; flat < v.coeffs.size(); ++flat) {
            unflatten(flat, sdims, full_idx);
            for (std::size_t k = 0; k < b_idx.size(); ++k) bi[k] = full_idx[b_idx[k]];
            for (std::size_t k = 0; k < f_idx.size(); ++k) fi2[k] = full_idx[f_idx[k]];
            c.at(flatten(fi2, fdims), flatten(bi, bdims)) = v.coeffs[flat];
        }
        CMatrix c_big = emb_f * c * emb_b.dagger();
        TwoTimeDecomposition dec = equalize_basis(decompose_two_time(c_big));

        CMatrix ctrl(D * D, D * D);
        for (std::size_t i = 0; i < D; ++i) {
            CMatrix proj(D, D);
            for (std::size_t r = 0; r < D; ++r)
                for (std::size_t cc2 = 0; cc2 < D; ++cc2)
                    proj.at(r, cc2) = dec.basis[i][r] * std::conj(dec.basis[i][cc2]);
            CMatrix wmat = basis_mapping_unitary(dec.psi[i], i, dec.basis);
            ctrl += kron(wmat, proj);
        }
        core_units.push_back(ctrl * swap_matrix(D));

        const cplx kappa_core = cplx(1.0) / (double(D) * dec.r * dec.a[0]);
        kappa_full.push_back(kappa_core / tele_dim_product);
        p_in.push_back(w / weight_total);
    }

    // reweighting from section-5.3: p'_r = p_r |k_r|^2 / sum_s p_s |k_s|^2
    std::vector<cplx> k_paper;
    std::vector<double> p_out;
    double norm_sum = 0.0;
    for (std::size_t r = 0; r < p_in.size(); ++r) {
        k_paper.push_back(cplx(1.0) / kappa_full[r]);
        norm_sum += p_in[r] * std::norm(k_paper[r]);
    }
    for (std::size_t r = 0; r < p_in.size(); ++r)
        p_out.push_back(p_in[r] * std::norm(k_paper[r]) / norm_sum);

    // core Kraus set: sqrt(p'_r) (Dec_e ⊗ 1_A) U_r (Emb_B ⊗ 1_A)
    std::vector<CMatrix> core_kraus;
    for (std::size_t r = 0; r < core_units.size(); ++r) {
        std::vector<CMatrix> decs;
        if (d_f == D) {
            decs.push_back(CMatrix::identity(D));
        } else {
            for (std::size_t e = 0; e < D; ++e) {
                CMatrix dec_e(d_f, D);
                for (std::size_t j = 0; j < D; ++j) {
                    if (j < d_f && e == 0) dec_e.at(j, j) = 1.0;
                    if (j >= d_f && e == j) dec_e.at(0, j) = 1.0;
                }
                if (dec_e.frobenius_norm() == 0.0) continue;
                decs.push_back(std::move(dec_e));
            }
        }
        for (const auto& de : decs)
            core_kraus.push_back(kron(de, CMatrix::identity(D)) * core_units[r] *
                                 kron(emb_b, CMatrix::identity(D)) *
                                 std::sqrt(p_out[r]));
    }

    // --- event timeline ---------------------------------------------------
    std::vector<EventSet> sets;
    {
        std::map<std::pair<Rational, int>, std::vector<std::size_t>> groups;
        for (std::size_t k = 0; k < factors.size(); ++k) {
            const int rank = factors[k].label.direction == Direction::Backward ? 0 : 2;
            groups[{factors[k].label.time, rank}].push_back(k);
        }
        // core time strictly between the factors that must precede and follow
        std::optional<Rational> lower, upper;
        for (const auto& fi : factors) {
            if (fi.teleported) continue;
            if (fi.label.direction == Direction::Backward) {
                if (!lower || *lower < fi.label.time) lower = fi.label.time;
            } else {
                if (!upper || fi.label.time < *upper) upper = fi.label.time;
            }
        }
        Rational core_time(0);
        if (lower && upper) {
            if (!(*lower < *upper))
                throw Error("mts_to_pctc_comb: inconsistent core placement");
            core_time = midpoint(*lower, *upper);
        } else if (lower) {
            core_time = *lower + Rational(1);
        } else if (upper) {
            core_time = *upper - Rational(1);
        }

        std::vector<std::pair<std::pair<Rational, int>, std::vector<std::size_t>>> ordered(
            groups.begin(), groups.end());
        EventSet core_set;
        core_set.is_core = true;
        core_set.desired_time = core_time;
        core_set.kind_rank = 1;

        std::vector<EventSet> evs;
        for (const auto& [key, members] : ordered) {
            EventSet e;
            e.is_input = key.second == 0;
            e.desired_time = key.first;
            e.kind_rank = key.second;
            e.members = members;
            evs.push_back(e);
        }
        evs.push_back(core_set);
        std::sort(evs.begin(), evs.end(), [](const EventSet& a, const EventSet& b) {
            if (a.desired_time != b.desired_time) return a.desired_time < b.desired_time;
            return a.kind_rank < b.kind_rank;
        });

        // boundaries: CTC returns enter at the global past, launches exit at
        // the global future
        EventSet past;
        past.is_input = true;
        past.is_boundary = true;
        past.synthetic = true;
        past.desired_time = evs.front().desired_time - Rational(1);
        EventSet future;
        future.is_input = false;
        future.is_boundary = true;
        future.synthetic = true;
        future.desired_time = evs.back().desired_time + Rational(1);

        sets.push_back(past);
        for (auto& e : evs) {
            if (e.is_core) {
                EventSet cin;
                cin.is_input = true;
                cin.is_core = true;
                cin.synthetic = true;
                cin.desired_time = e.desired_time;
                EventSet cout;
                cout.is_input = false;
                cout.is_core = true;
                cout.synthetic = true;
                cout.desired_time = e.desired_time;
                sets.push_back(cin);
                sets.push_back(cout);
            } else {
                sets.push_back(e);
            }
        }
        sets.push_back(future);
    }

    // enforce in/out alternation by inserting empty sets
    {
        std::vector<EventSet> aligned;
        bool expect_input = true;
        for (const auto& s : sets) {
            if (s.is_input != expect_input) {
                EventSet filler;
                filler.is_input = expect_input;
                filler.synthetic = true;
                filler.desired_time = s.desired_time;
                aligned.push_back(filler);
                expect_input = !expect_input;
            }
            aligned.push_back(s);
            expect_input = !expect_input;
        }
        if (!expect_input) {  // ended on an input set
            EventSet filler;
            filler.is_input = false;
            filler.synthetic = true;
            filler.desired_time = aligned.back().desired_time + Rational(1);
            aligned.push_back(filler);
        }
        sets = std::move(aligned);
    }

    // strictly increasing comb times. Factor events keep their own times
    // (output sets tying an input set get nudged into the following gap);
    // synthetic sets subdivide the gaps between their real neighbours.
    {
        std::vector<std::size_t> real_idx;
        for (std::size_t k = 0; k < sets.size(); ++k)
            if (!sets[k].synthetic) real_idx.push_back(k);
        for (std::size_t r = 1; r < real_idx.size(); ++r) {
            const Rational prev = sets[real_idx[r - 1]].desired_time;
            if (!(prev < sets[real_idx[r]].desired_time)) {
                std::optional<Rational> next;
                for (std::size_t j = r + 1; j < real_idx.size(); ++j)
                    if (prev < sets[real_idx[j]].desired_time) {
                        next = sets[real_idx[j]].desired_time;
                        break;
                    }
                sets[real_idx[r]].desired_time =
                    next ? midpoint(prev, *next) : prev + Rational(1);
            }
        }
        std::size_t k = 0;
        while (k < sets.size()) {
            if (!sets[k].synthetic) {
                ++k;
                continue;
            }
            std::size_t j = k;
            while (j < sets.size() && sets[j].synthetic) ++j;
            std::optional<Rational> lo, hi;
            if (k > 0) lo = sets[k - 1].desired_time;
            if (j < sets.size()) hi = sets[j].desired_time;
            const std::size_t cnt = j - k;
            for (std::size_t i = 0; i < cnt; ++i) {
                Rational t;
                if (lo && hi) {
                    const Rational span = *hi - *lo;
                    t = *lo + Rational(span.num * std::int64_t(i + 1),
                                       span.den * std::int64_t(cnt + 1));
                } else if (lo) {
                    t = *lo + Rational(std::int64_t(i + 1));
                } else if (hi) {
                    t = *hi - Rational(std::int64_t(cnt - i));
                } else {
                    t = Rational(std::int64_t(i));
                }
                sets[k + i].desired_time = t;
            }
            k = j;
        }
    }

    // --- flows and teeth ---------------------------------------------------
    const std::string kCtcA = "ctcA";
    struct Flow {
        std::string base;
        std::size_t dim;
    };
    std::vector<Flow> flows;
    std::vector<Tooth> teeth;
    const std::size_t n_teeth = sets.size() / 2;
    for (std::size_t ti = 0; ti < n_teeth; ++ti) {
        const EventSet& in_set = sets[2 * ti];
        const EventSet& out_set = sets[2 * ti + 1];

        std::vector<Leg> ins, outs;
        std::vector<std::string> mem_in, mem_out;
        std::vector<std::pair<std::size_t, std::size_t>> routes;
        std::vector<std::size_t> core_in_pos, core_out_pos;

        // incoming memory segments
        for (const auto& fl : flows) {
            ins.push_back({fl.base + "#" + std::to_string(ti), fl.dim});
            mem_in.push_back(ins.back().label);
        }
        // external inputs
        std::vector<Flow> new_flows;
        if (in_set.is_boundary) {
            for (const auto& fi : factors)
                if (fi.teleported) {
                    ins.push_back({fi.wire + ".past", fi.dim});
                    new_flows.push_back({"carry." + fi.wire, fi.dim});
                }
            ins.push_back({kCtcA + ".past", D});
            new_flows.push_back({kCtcA, D});
        } else if (!in_set.is_core) {
            for (auto k : in_set.members) {
                const auto& fi = factors[k];
                ins.push_back({fi.wire, fi.dim});
                new_flows.push_back(
                    {(fi.teleported ? "tele." : "carry.") + fi.wire, fi.dim});
            }
        }

        // next flow population
        std::vector<Flow> flows_next = flows;
        flows_next.insert(flows_next.end(), new_flows.begin(), new_flows.end());
        std::vector<std::string> consumed;  // flow bases ending at this tooth
        if (out_set.is_boundary) {
            for (const auto& fi : factors)
                if (fi.teleported) consumed.push_back("tele." + fi.wire);
            consumed.push_back(kCtcA);
        } else if (out_set.is_core) {
            // handled below: core consumes carries of B and ctcA, re-emits F
        } else {
            for (auto k : out_set.members) consumed.push_back("carry." + factors[k].wire);
        }

        const bool core_here = out_set.is_core;
        std::vector<std::string> core_consumed, core_created;
        if (core_here) {
            for (auto k : b_idx) core_consumed.push_back("carry." + factors[k].wire);
            core_consumed.push_back(kCtcA);
            for (auto k : f_idx)
                core_created.push_back((factors[k].teleported ? "tele." : "carry.") +
                                       factors[k].wire);
            core_created.push_back(kCtcA);
        }

        // build the outgoing flow list
        std::vector<Flow> flows_after;
        for (const auto& fl : flows_next) {
            const bool gone =
                std::find(consumed.begin(), consumed.end(), fl.base) != consumed.end() ||
                std::find(core_consumed.begin(), core_consumed.end(), fl.base) !=
                    core_consumed.end();
            if (!gone) flows_after.push_back(fl);
        }
        if (core_here) {
            for (auto k : f_idx)
                flows_after.push_back(
                    {(factors[k].teleported ? "tele." : "carry.") + factors[k].wire,
                     factors[k].dim});
            flows_after.push_back({kCtcA, D});
        }
        std::sort(flows_after.begin(), flows_after.end(),
                  [](const Flow& a, const Flow& b) { return a.base < b.base; });

        // external outputs first, then outgoing memory
        if (out_set.is_boundary) {
            for (const auto& fi : factors)
                if (fi.teleported) outs.push_back({fi.wire + ".fut", fi.dim});
            outs.push_back({kCtcA + ".fut", D});
        } else if (!out_set.is_core) {
            for (auto k : out_set.members) outs.push_back({factors[k].wire, factors[k].dim});
        }
        const std::size_t n_ext_out = outs.size();
        for (const auto& fl : flows_after) {
            outs.push_back({fl.base + "#" + std::to_string(ti + 1), fl.dim});
            mem_out.push_back(outs.back().label);
        }

        // routing: every out leg gets its content from exactly one in leg,
        // except the core outputs
        auto in_pos_of_flow = [&](const std::string& base) -> std::size_t {
            // position in `ins`: memory segments come first in flow order,
            // then the external inputs that created flows this tooth
            for (std::size_t k = 0; k < flows.size(); ++k)
                if (flows[k].base == base) return k;
            for (std::size_t k = 0; k < new_flows.size(); ++k)
                if (new_flows[k].base == base) return flows.size() + k;
            throw Error("mts_to_pctc_comb: flow " + base + " has no source leg");
        };

        if (core_here) {
            for (const auto& base : core_consumed) core_in_pos.push_back(in_pos_of_flow(base));
        }
        // external outs
        if (out_set.is_boundary) {
            std::size_t o = 0;
            for (const auto& fi : factors)
                if (fi.teleported) routes.push_back({o++, in_pos_of_flow("tele." + fi.wire)});
            routes.push_back({o++, in_pos_of_flow(kCtcA)});
        } else if (!out_set.is_core) {
            std::size_t o = 0;
            for (auto k : out_set.members)
                routes.push_back({o++, in_pos_of_flow("carry." + factors[k].wire)});
        }
        // memory outs
        for (std::size_t k = 0; k < flows_after.size(); ++k) {
            const std::string& base = flows_after[k].base;
            const std::size_t out_pos = n_ext_out + k;
            const bool from_core =
                core_here &&
                std::find(core_created.begin(), core_created.end(), base) != core_created.end();
            if (from_core)
                core_out_pos.push_back(out_pos);
            else
                routes.push_back({out_pos, in_pos_of_flow(base)});
        }
        // core out legs must follow the kraus ordering (F canonical, then A)
        if (core_here) {
            std::vector<std::size_t> ordered_core_out;
            for (const auto& base : core_created) {
                bool found = false;
                for (std::size_t k = 0; k < flows_after.size(); ++k)
                    if (flows_after[k].base == base) {
                        ordered_core_out.push_back(n_ext_out + k);
                        found = true;
                        break;
                    }
                if (!found) throw Error("mts_to_pctc_comb: core output flow missing");
            }
            core_out_pos = ordered_core_out;
        }

        std::vector<CMatrix> kraus =
            tooth_kraus(ins, outs, routes, core_in_pos, core_out_pos,
                        core_here ? core_kraus : std::vector<CMatrix>{});

        std::vector<ChoiOperator::System> sys_in, sys_out;
        for (const auto& l : ins) sys_in.push_back({l.label, l.dim, Role::In});
        for (const auto& l : outs) sys_out.push_back({l.label, l.dim, Role::Out});
        Tooth tooth;
        tooth.choi = choi_of_map(kraus, sys_in, sys_out);
        tooth.mem_in = mem_in;
        tooth.mem_out = mem_out;
        tooth.time_in = in_set.desired_time;
        tooth.time_out = out_set.desired_time;
        teeth.push_back(std::move(tooth));

        flows = std::move(flows_after);
    }

    std::vector<CtcPair> pairs;
    std::vector<std::size_t> ctc_dims;
    for (const auto& fi : factors)
        if (fi.teleported) {
            pairs.push_back({fi.wire + ".fut", fi.wire + ".past"});
            ctc_dims.push_back(fi.dim);
        }
    pairs.push_back({kCtcA + ".fut", kCtcA + ".past"});
    ctc_dims.push_back(D);

    ConstructionPlan plan;
    plan.comb = pctc_assist_comb(build_comb(std::move(teeth)), pairs);
    plan.comb.time_labelled = true;
    plan.comb_built = true;
    plan.ctc_count = pairs.size();
    plan.ctc_dims = ctc_dims;
    plan.term_weights = p_in;
    plan.term_constants = k_paper;
    plan.term_reweights = p_out;
    plan.claimed_constant = 1.0 / norm_sum;  // density level, against sum_r p_r C_r C_r^dag
    for (const auto& fi : factors) plan.factor_names[fi.wire] = fi.label.system;

    // circuit mirror: teeth as Kraus nodes over persistent flow wires, plus
    // the stretch records documenting the free reorderings
    CircuitSpec& cs = plan.circuit;
    {
        std::set<std::string> declared;
        auto declare = [&](const std::string& label, std::size_t dim) {
            if (declared.insert(label).second) cs.systems.push_back({label, dim});
        };
        for (std::size_t ti = 0; ti < plan.comb.base.teeth.size(); ++ti) {
            const Tooth& t = plan.comb.base.teeth[ti];
            CircuitSpec::Node node;
            node.kind = CircuitSpec::NodeKind::KrausSet;
            node.name = "tooth" + std::to_string(ti);
            node.time = t.time_out;
            for (const auto& s : t.choi.systems) {
                declare(s.label, s.dim);
                (s.role == Role::In ? node.systems_in : node.systems_out).push_back(s.label);
            }
            node.matrices = kraus_from_choi(t.choi);
            cs.nodes.push_back(std::move(node));
        }
        Rational core_time;
        for (std::size_t k = 0; k + 1 < sets.size(); ++k)
            if (sets[k].is_core && !sets[k].is_input) core_time = sets[k].desired_time;
        for (const auto& fi : factors) {
            if (fi.teleported) continue;
            CircuitSpec::Node node;
            node.kind = CircuitSpec::NodeKind::Stretch;
            node.name = fi.wire;
            node.systems_in = {fi.wire};
            node.systems_out = {fi.wire};
            node.from_time = core_time;
            node.to_time = fi.label.time;
            cs.nodes.push_back(std::move(node));
        }
        for (const auto& p : pairs) {
            declare(p.future_out, plan.comb.base.teeth.back().choi.system(p.future_out).dim);
            declare(p.past_in, plan.comb.base.teeth.front().choi.system(p.past_in).dim);
            cs.ctc_pairs.push_back({p.future_out, p.past_in});
        }
        cs.metadata["construction"] = "mts_to_pctc_comb";
        cs.metadata["strategy"] = chosen == Strategy::UseB2 ? "b2" : "f1";
    }
    return plan;
}

ConstructionPlan mts_to_pctc_comb(const MtDensityVector& m, Strategy strategy) {
    if (!is_positive(m)) throw NotPositive("mts_to_pctc_comb");
    std::vector<SpectralTerm> spectral = spectral_decompose(m);
    std::vector<std::pair<double, MtVector>> terms;
    double wsum = 0.0;
    for (const auto& t : spectral) {
        terms.push_back({t.weight, t.vector});
        wsum += t.weight;
    }
    ConstructionPlan plan = mts_to_pctc_comb_terms(m.space, terms, strategy);
    // claimed constant was relative to sum_r p_r C_r C_r^dag = m / wsum
    plan.claimed_constant /= wsum;
    return plan;
}

CombProbabilityTable mts_probability(const MtDensityVector& mts, const ChoiOperator& rho0,
                                     const std::vector<Instrument>& instruments) {
    std::map<std::string, Rational> times;
    std::map<std::string, std::size_t> dims;
    std::map<std::string, Direction> dirs;
    for (const auto& f : mts.space.factors) {
        times[f.label.system] = f.label.time;
        dims[f.label.system] = f.dim;
        dirs[f.label.system] = f.label.direction;
    }

    std::set<std::string> claimed;
    for (const auto& s : rho0.systems) claimed.insert(s.label);
    for (const auto& ins : instruments)
        for (const auto& s : ins.outcomes.front().choi.systems) claimed.insert(s.label);

    MtDensityVector base = mt_density_from_choi(rho0, times);
    for (const auto& f : mts.space.factors) {
        if (claimed.count(f.label.system)) continue;
        if (f.label.direction == Direction::Forward) {
            base = compose_density(base, mt_identity_element(f.label.system, f.label.time,
                                                             f.dim));
        } else {
            throw SlotMismatch("MTS input " + f.label.system + " has no state or instrument");
        }
    }

    MtInstrument mt_ins;
    std::vector<std::size_t> idx(instruments.size(), 0);
    while (true) {
        MtDensityVector j = base;
        std::string label;
        for (std::size_t k = 0; k < instruments.size(); ++k) {
            const auto& outcome = instruments[k].outcomes[idx[k]];
            j = compose_density(j, mt_density_from_choi(outcome.choi, times));
            if (!label.empty()) label += ",";
            label += outcome.label;
        }
        mt_ins.outcomes.push_back({label, j});
        std::size_t k = instruments.size();
        bool done = instruments.empty();
        while (k > 0) {
            --k;
            if (++idx[k] < instruments[k].outcomes.size()) break;
            idx[k] = 0;
            if (k == 0) done = true;
        }
        if (done) break;
    }

    ProbabilityTable abl = abl_probability(mts, mt_ins);
    CombProbabilityTable out;
    out.denominator = abl.denominator;
    for (std::size_t k = 0; k < abl.labels.size(); ++k) {
        std::vector<std::string> tuple;
        std::string cur;
        for (char c : abl.labels[k]) {
            if (c == ',') {
                tuple.push_back(cur);
                cur.clear();
            } else {
                cur += c;
            }
        }
        if (!cur.empty() || !abl.labels[k].empty()) tuple.push_back(cur);
        out.outcome_tuples.push_back(tuple);
        out.probabilities.push_back(abl.probabilities[k]);
    }
    return out;
}

}  // namespace qmts
