#include "qmts/choi.hpp"

#include <algorithm>
#include <cmath>
#include <map>

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

}  // namespace

ChoiOperator::ChoiOperator(std::vector<System> sys, CMatrix m)
    : systems(std::move(sys)), matrix(std::move(m)) {
    std::size_t d = 1;
    for (const auto& s : systems) {
        if (s.dim < 1) throw DimensionMismatch("system " + s.label + " has dimension < 1");
        d *= s.dim;
    }
    for (std::size_t i = 0; i < systems.size(); ++i)
        for (std::size_t j = i + 1; j < systems.size(); ++j)
            if (systems[i].label == systems[j].label)
                throw LabelConflict("system " + systems[i].label + " listed twice");
    if (matrix.rows != d || matrix.cols != d)
        throw DimensionMismatch("Choi matrix is " + std::to_string(matrix.rows) + "x" +
                                std::to_string(matrix.cols) + ", systems give " +
                                std::to_string(d));
}

std::size_t ChoiOperator::total_dim() const {
    std::size_t d = 1;
    for (const auto& s : systems) d *= s.dim;
    return d;
}

std::vector<std::size_t> ChoiOperator::dims() const {
    std::vector<std::size_t> d;
    d.reserve(systems.size());
    for (const auto& s : systems) d.push_back(s.dim);
    return d;
}

bool ChoiOperator::has_system(const std::string& label) const {
    for (const auto& s : systems)
        if (s.label == label) return true;
    return false;
}

const ChoiOperator::System& ChoiOperator::system(const std::string& label) const {
    for (const auto& s : systems)
        if (s.label == label) return s;
    throw LabelConflict("system " + label + " not present");
}

cplx ChoiOperator::scalar() const {
    if (!systems.empty()) throw ShapeMismatch("scalar() on open Choi operator");
    return matrix.at(0, 0);
}

ChoiOperator ChoiOperator::permuted(const std::vector<std::size_t>& order) const {
    if (order.size() != systems.size()) throw ShapeMismatch("permutation size");
    std::vector<System> ns;
    ns.reserve(order.size());
    for (std::size_t k : order) ns.push_back(systems[k]);
    const auto old_dims = dims();
    std::vector<std::size_t> new_dims;
    for (std::size_t k : order) new_dims.push_back(old_dims[k]);

    CMatrix m(matrix.rows, matrix.cols);
    std::vector<std::size_t> nr(order.size()), nc(order.size()), orow(order.size()),
        ocol(order.size());
    for (std::size_t r = 0; r < m.rows; ++r) {
        unflatten(r, new_dims, nr);
        for (std::size_t c = 0; c < m.cols; ++c) {
            unflatten(c, new_dims, nc);
            for (std::size_t k = 0; k < order.size(); ++k) {
                orow[order[k]] = nr[k];
                ocol[order[k]] = nc[k];
            }
            m.at(r, c) = matrix.at(flatten(orow, old_dims), flatten(ocol, old_dims));
        }
    }
    return ChoiOperator(std::move(ns), std::move(m));
}

ChoiOperator ChoiOperator::scaled(cplx s) const {
    ChoiOperator out = *this;
    out.matrix *= s;
    return out;
}

ChoiOperator ChoiOperator::renamed(const std::string& from, const std::string& to) const {
    ChoiOperator out = *this;
    for (auto& s : out.systems)
        if (s.label == from) s.label = to;
    return out;
}

bool ChoiOperator::is_cp(double tol) const {
    if (!matrix.is_hermitian(tol)) return false;
    const double scale = std::max(1.0, matrix.frobenius_norm());
    return min_eigenvalue(matrix) >= -tol * scale;
}

bool ChoiOperator::is_tp(double tol) const {
    std::vector<std::string> outs;
    std::size_t d_in = 1;
    for (const auto& s : systems) {
        if (s.role == Role::Out)
            outs.push_back(s.label);
        else
            d_in *= s.dim;
    }
    ChoiOperator reduced = trace_out(*this, outs);
    CMatrix eye = CMatrix::identity(d_in);
    return (reduced.matrix - eye).frobenius_norm() <= tol * std::sqrt(double(d_in));
}

ChoiOperator choi_of_map(const std::vector<CMatrix>& kraus,
                         const std::vector<ChoiOperator::System>& ins,
                         const std::vector<ChoiOperator::System>& outs) {
    std::size_t d_in = 1, d_out = 1;
    for (const auto& s : ins) {
        if (s.role != Role::In) throw ShapeMismatch("choi_of_map: input with Out role");
        d_in *= s.dim;
    }
    for (const auto& s : outs) {
        if (s.role != Role::Out) throw ShapeMismatch("choi_of_map: output with In role");
        d_out *= s.dim;
    }
    for (const auto& k : kraus)
        if (k.rows != d_out || k.cols != d_in)
            throw ShapeMismatch("choi_of_map: Kraus operator is " + std::to_string(k.rows) +
                                "x" + std::to_string(k.cols) + ", expected " +
                                std::to_string(d_out) + "x" + std::to_string(d_in));

    std::vector<ChoiOperator::System> sys = ins;
    sys.insert(sys.end(), outs.begin(), outs.end());
    CMatrix m(d_in * d_out, d_in * d_out);
    for (const auto& k : kraus)
        for (std::size_t i = 0; i < d_in; ++i)
            for (std::size_t o = 0; o < d_out; ++o) {
                const cplx koi = k.at(o, i);
                if (koi == cplx(0.0)) continue;
                for (std::size_t j = 0; j < d_in; ++j)
                    for (std::size_t o2 = 0; o2 < d_out; ++o2)
                        m.at(i * d_out + o, j * d_out + o2) += koi * std::conj(k.at(o2, j));
            }
    return ChoiOperator(std::move(sys), std::move(m));
}

ChoiOperator choi_state(const std::string& label, const CMatrix& rho) {
    return choi_state({{label, rho.rows, Role::Out}}, rho);
}

ChoiOperator choi_state(const std::vector<ChoiOperator::System>& outs, const CMatrix& rho) {
    return ChoiOperator(outs, rho);
}

ChoiOperator choi_effect(const std::string& label, const CMatrix& povm_element) {
    return ChoiOperator({{label, povm_element.rows, Role::In}}, povm_element.transpose());
}

ChoiOperator choi_trace(const std::string& label, std::size_t dim) {
    return ChoiOperator({{label, dim, Role::In}}, CMatrix::identity(dim));
}

ChoiOperator choi_identity_wire(const std::string& from, const std::string& to,
                                std::size_t dim) {
    CMatrix m(dim * dim, dim * dim);
    for (std::size_t k = 0; k < dim; ++k)
        for (std::size_t l = 0; l < dim; ++l) m.at(k * dim + k, l * dim + l) = 1.0;
    return ChoiOperator({{from, dim, Role::In}, {to, dim, Role::Out}}, std::move(m));
}

ChoiOperator link(const ChoiOperator& a, const ChoiOperator& b) {
    // shared labels contract; they must appear with complementary roles
    std::vector<std::string> shared;
    for (const auto& sa : a.systems) {
        if (!b.has_system(sa.label)) continue;
        const auto& sb = b.system(sa.label);
        if (sb.role == sa.role)
            throw LabelConflict("label " + sa.label + " has the same role in both operands");
        if (sb.dim != sa.dim)
            throw DimensionMismatch("label " + sa.label + " has mismatched dimensions");
        shared.push_back(sa.label);
    }
    std::sort(shared.begin(), shared.end());

    auto order_for = [&](const ChoiOperator& op, bool shared_first) {
        std::vector<std::size_t> kept, sh(shared.size());
        for (std::size_t k = 0; k < op.systems.size(); ++k) {
            auto it = std::find(shared.begin(), shared.end(), op.systems[k].label);
            if (it == shared.end())
                kept.push_back(k);
            else
                sh[std::size_t(it - shared.begin())] = k;
        }
        std::vector<std::size_t> order;
        if (shared_first) {
            order = sh;
            order.insert(order.end(), kept.begin(), kept.end());
        } else {
            order = kept;
            order.insert(order.end(), sh.begin(), sh.end());
        }
        return order;
    };

    ChoiOperator A = a.permuted(order_for(a, false));  // kept..., shared...
    ChoiOperator B = b.permuted(order_for(b, true));   // shared..., kept...

    std::size_t dA = 1, dL = 1, dB = 1;
    const std::size_t nA = A.systems.size() - shared.size();
    for (std::size_t k = 0; k < nA; ++k) dA *= A.systems[k].dim;
    for (std::size_t k = nA; k < A.systems.size(); ++k) dL *= A.systems[k].dim;
    for (std::size_t k = shared.size(); k < B.systems.size(); ++k) dB *= B.systems[k].dim;

    std::vector<ChoiOperator::System> out_sys(A.systems.begin(), A.systems.begin() + nA);
    out_sys.insert(out_sys.end(), B.systems.begin() + shared.size(), B.systems.end());

    // C[(xa xb),(ya yb)] = sum_{l,m} A[(xa m),(ya l)] B[(m xb),(l yb)]
    // (the partial transpose on the shared part is what pairs row-with-row)
    CMatrix m(dA * dB, dA * dB);
    for (std::size_t xa = 0; xa < dA; ++xa)
        for (std::size_t ya = 0; ya < dA; ++ya)
            for (std::size_t xb = 0; xb < dB; ++xb)
                for (std::size_t yb = 0; yb < dB; ++yb) {
                    cplx acc = 0.0;
                    for (std::size_t l = 0; l < dL; ++l)
                        for (std::size_t mm = 0; mm < dL; ++mm)
                            acc += A.matrix.at(xa * dL + mm, ya * dL + l) *
                                   B.matrix.at(mm * dB + xb, l * dB + yb);
                    m.at(xa * dB + xb, ya * dB + yb) = acc;
                }
    return ChoiOperator(std::move(out_sys), std::move(m));
}

ChoiOperator link_all(const std::vector<ChoiOperator>& ops) {
    ChoiOperator acc;  // scalar 1
    for (const auto& op : ops) acc = link(acc, op);
    return acc;
}

ChoiOperator link_all_greedy(std::vector<ChoiOperator> ops) {
    if (ops.empty()) return ChoiOperator();
    while (ops.size() > 1) {
        std::size_t best_i = 0, best_j = 1;
        double best_cost = -1.0;
        for (std::size_t i = 0; i < ops.size(); ++i)
            for (std::size_t j = i + 1; j < ops.size(); ++j) {
                double open = 1.0;
                for (const auto& s : ops[i].systems)
                    if (!ops[j].has_system(s.label)) open *= double(s.dim);
                for (const auto& s : ops[j].systems)
                    if (!ops[i].has_system(s.label)) open *= double(s.dim);
                // prefer pairs that actually share labels
                bool shares = false;
                for (const auto& s : ops[i].systems)
                    if (ops[j].has_system(s.label)) shares = true;
                const double cost = shares ? open : open * 1e6;
                if (best_cost < 0.0 || cost < best_cost) {
                    best_cost = cost;
                    best_i = i;
                    best_j = j;
                }
            }
        ChoiOperator merged = link(ops[best_i], ops[best_j]);
        ops.erase(ops.begin() + best_j);
        ops[best_i] = std::move(merged);
    }
    return ops[0];
}

ChoiOperator trace_out(const ChoiOperator& c, const std::vector<std::string>& labels) {
    if (labels.empty()) return c;
    std::vector<std::size_t> traced;
    for (const auto& l : labels) {
        bool found = false;
        for (std::size_t k = 0; k < c.systems.size(); ++k)
            if (c.systems[k].label == l) {
                traced.push_back(k);
                found = true;
                break;
            }
        if (!found) throw LabelConflict("trace_out: system " + l + " not present");
    }
    std::vector<ChoiOperator::System> kept;
    for (std::size_t k = 0; k < c.systems.size(); ++k)
        if (std::find(traced.begin(), traced.end(), k) == traced.end())
            kept.push_back(c.systems[k]);
    CMatrix m = partial_trace(c.matrix, DimList(c.dims()), traced);
    return ChoiOperator(std::move(kept), std::move(m));
}

std::vector<CMatrix> kraus_from_choi(const ChoiOperator& c, double cutoff) {
    std::size_t d_in = 1, d_out = 1;
    std::vector<std::size_t> in_pos, out_pos;
    for (std::size_t k = 0; k < c.systems.size(); ++k) {
        if (c.systems[k].role == Role::In) {
            d_in *= c.systems[k].dim;
            in_pos.push_back(k);
        } else {
            d_out *= c.systems[k].dim;
            out_pos.push_back(k);
        }
    }
    // reorder to (ins..., outs...) so the eigenvector reshape is direct
    std::vector<std::size_t> order = in_pos;
    order.insert(order.end(), out_pos.begin(), out_pos.end());
    ChoiOperator cc = c.permuted(order);

    HermEig e = herm_eig(cc.matrix);
    double top = 0.0;
    for (double w : e.eigenvalues) top = std::max(top, std::abs(w));
    std::vector<CMatrix> kraus;
    for (std::size_t k = 0; k < e.eigenvalues.size(); ++k) {
        if (e.eigenvalues[k] <= cutoff * std::max(top, 1.0)) continue;
        const double w = std::sqrt(e.eigenvalues[k]);
        CMatrix K(d_out, d_in);
        for (std::size_t i = 0; i < d_in; ++i)
            for (std::size_t o = 0; o < d_out; ++o)
                K.at(o, i) = w * e.eigenvectors.at(i * d_out + o, k);
        kraus.push_back(std::move(K));
    }
    return kraus;
}

CMatrix choi_apply(const ChoiOperator& map, const CMatrix& rho) {
    std::size_t d_in = 1;
    std::vector<ChoiOperator::System> ins;
    std::vector<std::string> out_labels;
    for (const auto& s : map.systems) {
        if (s.role == Role::In) {
            d_in *= s.dim;
            ins.push_back({s.label, s.dim, Role::Out});
        } else {
            out_labels.push_back(s.label);
        }
    }
    if (rho.rows != d_in || rho.cols != d_in)
        throw DimensionMismatch("choi_apply: state dimension " + std::to_string(rho.rows) +
                                " != map input dimension " + std::to_string(d_in));
    ChoiOperator prep = choi_state(ins, rho);
    ChoiOperator res = link(map, prep);
    // result systems are the Out systems in map order; flatten accordingly
    std::vector<std::size_t> order;
    for (const auto& l : out_labels)
        for (std::size_t k = 0; k < res.systems.size(); ++k)
            if (res.systems[k].label == l) order.push_back(k);
    return res.permuted(order).matrix;
}

ChoiOperator pctc_assist_map_sandwich(const ChoiOperator& e, const std::string& sys,
                                      const std::string& anc) {
    const auto& a_in = e.system(anc + ".in");
    const auto& a_out = e.system(anc + ".out");
    if (a_in.dim != a_out.dim)
        throw DimensionMismatch("P-CTC ancilla in/out dimensions differ");
    const std::size_t dA = a_in.dim;
    const std::size_t dS_in = e.system(sys + ".in").dim;
    const std::size_t dS_out = e.system(sys + ".out").dim;

    // C(rho) = <Phi+| (E ⊗ 1_A')(rho ⊗ Phi+) |Phi+> evaluated literally as a
    // network: prepare Phi+ on (A.in, A'), idle A', post-select Phi+ on
    // (A.out, A''). The normalized pair supplies the 1/dA^2.
    CMatrix phi = max_entangled(dA, true);
    CMatrix phi_proj = phi * phi.dagger();

    ChoiOperator prep = choi_state(
        {{anc + ".in", dA, Role::Out}, {"phi.ap", dA, Role::Out}}, phi_proj);
    ChoiOperator idle = choi_identity_wire("phi.ap", "phi.ap2", dA);
    // effect sigma -> <Phi|sigma|Phi>: Choi is the transpose of the projector;
    // the computational-basis Phi+ is real so the transpose is itself
    ChoiOperator effect(
        {{anc + ".out", dA, Role::In}, {"phi.ap2", dA, Role::In}}, phi_proj);

    ChoiOperator res = link_all_greedy({e, prep, idle, effect});
    std::vector<std::size_t> order;
    for (const auto& want : {sys + ".in", sys + ".out"})
        for (std::size_t k = 0; k < res.systems.size(); ++k)
            if (res.systems[k].label == want) order.push_back(k);
    if (order.size() != res.systems.size())
        throw LabelConflict("pctc_assist_map: interaction must act on exactly S and A");
    (void)dS_in;
    (void)dS_out;
    return res.permuted(order);
}

ChoiOperator pctc_assist_map_kraus(const ChoiOperator& e, const std::string& sys,
                                   const std::string& anc) {
    const auto& a_in = e.system(anc + ".in");
    const auto& a_out = e.system(anc + ".out");
    if (a_in.dim != a_out.dim)
        throw DimensionMismatch("P-CTC ancilla in/out dimensions differ");
    const std::size_t dA = a_in.dim;
    const std::size_t dS_in = e.system(sys + ".in").dim;
    const std::size_t dS_out = e.system(sys + ".out").dim;

    // order (S.in, A.in | S.out, A.out) then reshape eigenvectors to Kraus
    std::vector<std::string> want = {sys + ".in", anc + ".in", sys + ".out", anc + ".out"};
    std::vector<std::size_t> order;
    for (const auto& w : want)
        for (std::size_t k = 0; k < e.systems.size(); ++k)
            if (e.systems[k].label == w) order.push_back(k);
    if (order.size() != e.systems.size())
        throw LabelConflict("pctc_assist_map: interaction must act on exactly S and A");
    ChoiOperator ec = e.permuted(order);
    std::vector<CMatrix> kraus = kraus_from_choi(ec);

    // collapsed Kraus: (1/dA) Tr_A[K_j], and the map picks up 1/dA^2 overall
    std::vector<CMatrix> collapsed;
    for (const auto& K : kraus) {
        // K maps (S.in ⊗ A.in) -> (S.out ⊗ A.out)
        CMatrix t(dS_out, dS_in);
        for (std::size_t o = 0; o < dS_out; ++o)
            for (std::size_t i = 0; i < dS_in; ++i) {
                cplx acc = 0.0;
                for (std::size_t a = 0; a < dA; ++a) acc += K.at(o * dA + a, i * dA + a);
                t.at(o, i) = acc / double(dA);
            }
        collapsed.push_back(std::move(t));
    }
    return choi_of_map(collapsed, {{sys + ".in", dS_in, Role::In}},
                       {{sys + ".out", dS_out, Role::Out}});
}

ChoiOperator pctc_assist_map(const ChoiOperator& e, const std::string& sys,
                             const std::string& anc, double tol) {
    ChoiOperator via_kraus = pctc_assist_map_kraus(e, sys, anc);
    ChoiOperator via_sandwich = pctc_assist_map_sandwich(e, sys, anc);
    const double resid = (via_kraus.matrix - via_sandwich.matrix).frobenius_norm();
    if (resid > tol * std::max(1.0, via_kraus.matrix.frobenius_norm()))
        throw Error("pctc_assist_map: evaluation routes disagree, residual " +
                    std::to_string(resid));
    return via_kraus;
}

OutcomeTable pctc_map_probability(const ChoiOperator& map, const CMatrix& rho,
                                  const std::vector<CMatrix>& povm) {
    const std::size_t d = rho.rows;
    CMatrix total(d, d);
    for (const auto& m : povm) {
        if (m.rows != d || m.cols != d) throw DimensionMismatch("POVM element shape");
        const double scale = std::max(1.0, m.frobenius_norm());
        if (!m.is_hermitian(1e-8) || min_eigenvalue(m) < -1e-8 * scale)
            throw Error("pctc_map_probability: POVM element not positive");
        total += m;
    }
    if ((total - CMatrix::identity(d)).frobenius_norm() > 1e-8 * std::sqrt(double(d)))
        throw Error("pctc_map_probability: POVM does not sum to identity");

    CMatrix out = choi_apply(map, rho);
    OutcomeTable table;
    double denom = out.trace().real();
    if (denom <= 1e-12)
        throw PostSelectionImpossible("Tr[C(rho)] vanishes; paradoxical input");
    table.denominator = denom;
    for (std::size_t a = 0; a < povm.size(); ++a) {
        table.labels.push_back(std::to_string(a));
        table.probabilities.push_back(std::max(0.0, (out * povm[a]).trace().real()) / denom);
    }
    return table;
}

}  // namespace qmts
