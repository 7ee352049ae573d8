#include "qmts/circuit.hpp"

#include <algorithm>
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

std::vector<std::size_t> leg_dims(const std::vector<PureBlock::Leg>& legs) {
    std::vector<std::size_t> d;
    d.reserve(legs.size());
    for (const auto& l : legs) d.push_back(l.dim);
    return d;
}

int find_leg(const std::vector<PureBlock::Leg>& legs, const std::string& label) {
    for (std::size_t k = 0; k < legs.size(); ++k)
        if (legs[k].label == label) return int(k);
    return -1;
}

}  // namespace

std::size_t CircuitSpec::dim_of(const std::string& label) const {
    for (const auto& s : systems)
        if (s.label == label) return s.dim;
    throw ParseError("undeclared system " + label);
}

PureBlock::PureBlock(std::vector<Leg> i, std::vector<Leg> o, CMatrix m)
    : ins(std::move(i)), outs(std::move(o)), matrix(std::move(m)) {
    std::size_t din = 1, dout = 1;
    for (const auto& l : ins) din *= l.dim;
    for (const auto& l : outs) dout *= l.dim;
    if (matrix.rows != dout || matrix.cols != din)
        throw ShapeMismatch("PureBlock matrix " + std::to_string(matrix.rows) + "x" +
                            std::to_string(matrix.cols) + " does not match legs");
}

PureBlock pure_contract(const PureBlock& a, const PureBlock& b) {
    // segments s flow a->b, segments t flow b->a
    std::vector<std::size_t> s_out_a, s_in_b, t_out_b, t_in_a;
    for (std::size_t k = 0; k < a.outs.size(); ++k) {
        int j = find_leg(b.ins, a.outs[k].label);
        if (j >= 0) {
            if (a.outs[k].dim != b.ins[j].dim)
                throw DimensionMismatch("segment " + a.outs[k].label);
            s_out_a.push_back(k);
            s_in_b.push_back(std::size_t(j));
        }
    }
    for (std::size_t k = 0; k < b.outs.size(); ++k) {
        int j = find_leg(a.ins, b.outs[k].label);
        if (j >= 0) {
            if (b.outs[k].dim != a.ins[j].dim)
                throw DimensionMismatch("segment " + b.outs[k].label);
            t_out_b.push_back(k);
            t_in_a.push_back(std::size_t(j));
        }
    }

    auto kept = [](const std::vector<PureBlock::Leg>& legs,
                   const std::vector<std::size_t>& used) {
        std::vector<std::size_t> k;
        for (std::size_t i = 0; i < legs.size(); ++i)
            if (std::find(used.begin(), used.end(), i) == used.end()) k.push_back(i);
        return k;
    };
    const auto ka_out = kept(a.outs, s_out_a);
    const auto ka_in = kept(a.ins, t_in_a);
    const auto kb_out = kept(b.outs, t_out_b);
    const auto kb_in = kept(b.ins, s_in_b);

    std::vector<PureBlock::Leg> outs, ins;
    for (auto k : ka_out) outs.push_back(a.outs[k]);
    for (auto k : kb_out) outs.push_back(b.outs[k]);
    for (auto k : ka_in) ins.push_back(a.ins[k]);
    for (auto k : kb_in) ins.push_back(b.ins[k]);

    const auto da_out = leg_dims(a.outs), da_in = leg_dims(a.ins);
    const auto db_out = leg_dims(b.outs), db_in = leg_dims(b.ins);

    std::vector<std::size_t> s_dims, t_dims;
    for (auto k : s_out_a) s_dims.push_back(a.outs[k].dim);
    for (auto k : t_out_b) t_dims.push_back(b.outs[k].dim);
    std::size_t s_size = 1, t_size = 1;
    for (auto d : s_dims) s_size *= d;
    for (auto d : t_dims) t_size *= d;

    std::size_t dout = 1, din = 1;
    for (const auto& l : outs) dout *= l.dim;
    for (const auto& l : ins) din *= l.dim;
    CMatrix m(dout, din);

    const auto dims_out = leg_dims(outs), dims_in = leg_dims(ins);
    std::vector<std::size_t> oi(dims_out.size()), ii(dims_in.size());
    std::vector<std::size_t> si(s_dims.size()), ti(t_dims.size());
    std::vector<std::size_t> a_out_idx(a.outs.size()), a_in_idx(a.ins.size());
    std::vector<std::size_t> b_out_idx(b.outs.size()), b_in_idx(b.ins.size());

    for (std::size_t r = 0; r < dout; ++r) {
        unflatten(r, dims_out, oi);
        for (std::size_t c = 0; c < din; ++c) {
            unflatten(c, dims_in, ii);
            cplx acc = 0.0;
            for (std::size_t s = 0; s < s_size; ++s) {
                unflatten(s, s_dims, si);
                for (std::size_t t = 0; t < t_size; ++t) {
                    unflatten(t, t_dims, ti);
                    std::size_t p = 0;
                    for (auto k : ka_out) a_out_idx[k] = oi[p++];
                    for (auto k : kb_out) b_out_idx[k] = oi[p++];
                    p = 0;
                    for (auto k : ka_in) a_in_idx[k] = ii[p++];
                    for (auto k : kb_in) b_in_idx[k] = ii[p++];
                    for (std::size_t k = 0; k < s_out_a.size(); ++k) {
                        a_out_idx[s_out_a[k]] = si[k];
                        b_in_idx[s_in_b[k]] = si[k];
                    }
                    for (std::size_t k = 0; k < t_out_b.size(); ++k) {
                        b_out_idx[t_out_b[k]] = ti[k];
                        a_in_idx[t_in_a[k]] = ti[k];
                    }
                    acc += a.matrix.at(flatten(a_out_idx, da_out), flatten(a_in_idx, da_in)) *
                           b.matrix.at(flatten(b_out_idx, db_out), flatten(b_in_idx, db_in));
                }
            }
            m.at(r, c) = acc;
        }
    }
    return PureBlock(std::move(ins), std::move(outs), std::move(m));
}

PureBlock pure_trace_pair(const PureBlock& b, const std::string& out_leg,
                          const std::string& in_leg) {
    const int io = find_leg(b.outs, out_leg);
    const int ii_ = find_leg(b.ins, in_leg);
    if (io < 0 || ii_ < 0)
        throw DimensionMismatch("trace pair (" + out_leg + ", " + in_leg + ") not open");
    const std::size_t d = b.outs[io].dim;
    if (b.ins[ii_].dim != d)
        throw DimensionMismatch("trace pair (" + out_leg + ", " + in_leg + ") dimensions");

    std::vector<PureBlock::Leg> outs, ins;
    for (std::size_t k = 0; k < b.outs.size(); ++k)
        if (int(k) != io) outs.push_back(b.outs[k]);
    for (std::size_t k = 0; k < b.ins.size(); ++k)
        if (int(k) != ii_) ins.push_back(b.ins[k]);

    const auto dims_out_old = leg_dims(b.outs), dims_in_old = leg_dims(b.ins);
    const auto dims_out = leg_dims(outs), dims_in = leg_dims(ins);
    std::size_t dout = 1, din = 1;
    for (auto x : dims_out) dout *= x;
    for (auto x : dims_in) din *= x;

    CMatrix m(dout, din);
    std::vector<std::size_t> oi(dims_out.size()), iidx(dims_in.size());
    std::vector<std::size_t> full_o(dims_out_old.size()), full_i(dims_in_old.size());
    for (std::size_t r = 0; r < dout; ++r) {
        unflatten(r, dims_out, oi);
        for (std::size_t c = 0; c < din; ++c) {
            unflatten(c, dims_in, iidx);
            cplx acc = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                std::size_t p = 0;
                for (std::size_t x = 0; x < dims_out_old.size(); ++x)
                    full_o[x] = (int(x) == io) ? k : oi[p++];
                p = 0;
                for (std::size_t x = 0; x < dims_in_old.size(); ++x)
                    full_i[x] = (int(x) == ii_) ? k : iidx[p++];
                acc += b.matrix.at(flatten(full_o, dims_out_old), flatten(full_i, dims_in_old));
            }
            m.at(r, c) = acc / double(d);
        }
    }
    return PureBlock(std::move(ins), std::move(outs), std::move(m));
}

namespace {

struct SegmentTracker {
    const CircuitSpec& spec;
    std::map<std::string, std::size_t> next_segment;
    std::set<std::string> prepared, terminated;

    explicit SegmentTracker(const CircuitSpec& s) : spec(s) {}

    std::string current(const std::string& sys) {
        auto it = next_segment.find(sys);
        const std::size_t seg = (it == next_segment.end()) ? 0 : it->second;
        return sys + "#" + std::to_string(seg);
    }
    std::string advance(const std::string& sys) {
        auto it = next_segment.find(sys);
        const std::size_t seg = (it == next_segment.end()) ? 0 : it->second;
        next_segment[sys] = seg + 1;
        return sys + "#" + std::to_string(seg + 1);
    }
};

}  // namespace

PureBlock evaluate_circuit_pure(const CircuitSpec& spec) {
    SegmentTracker track(spec);
    PureBlock acc;

    auto leg_list = [&](const std::vector<std::string>& systems, bool advance) {
        std::vector<PureBlock::Leg> legs;
        for (const auto& s : systems)
            legs.push_back({advance ? track.advance(s) : track.current(s), spec.dim_of(s)});
        return legs;
    };

    for (const auto& node : spec.nodes) {
        switch (node.kind) {
            case CircuitSpec::NodeKind::Gate:
            case CircuitSpec::NodeKind::KrausSet: {
                if (node.matrices.size() != 1)
                    throw Error("evaluate_circuit_pure: node '" + node.name +
                                "' is not a pure block");
                auto ins = leg_list(node.systems_in, false);
                auto outs = leg_list(node.systems_out, true);
                acc = pure_contract(acc, PureBlock(ins, outs, node.matrices[0]));
                break;
            }
            case CircuitSpec::NodeKind::Prepare: {
                if (node.matrices.size() != 1 || node.matrices[0].cols != 1)
                    throw Error("evaluate_circuit_pure: preparation must be a ket");
                for (const auto& s : node.systems_out) track.prepared.insert(s);
                auto outs = leg_list(node.systems_out, false);
                acc = pure_contract(acc, PureBlock({}, outs, node.matrices[0]));
                break;
            }
            case CircuitSpec::NodeKind::PostSelect: {
                if (node.matrices.size() != 1 || node.matrices[0].cols != 1)
                    throw Error("evaluate_circuit_pure: post-selection must be a ket");
                auto ins = leg_list(node.systems_in, false);
                for (const auto& s : node.systems_in) {
                    track.advance(s);
                    track.terminated.insert(s);
                }
                acc = pure_contract(acc,
                                    PureBlock(ins, {}, node.matrices[0].dagger()));
                break;
            }
            case CircuitSpec::NodeKind::Stretch:
                break;  // identity-channel record, no pure content
            case CircuitSpec::NodeKind::Slot:
                throw Error("evaluate_circuit_pure: open slots are not pure");
            case CircuitSpec::NodeKind::Trace:
                throw Error("evaluate_circuit_pure: trace nodes are not pure");
        }
    }

    // rename open boundary legs and apply CTC trace pairs
    PureBlock out = acc;
    for (const auto& p : spec.ctc_pairs) {
        const std::string fut = track.current(p.first);
        const std::string past = p.second + "#0";
        out = pure_trace_pair(out, fut, past);
    }
    for (auto& l : out.ins) {
        const auto pos = l.label.find('#');
        l.label = l.label.substr(0, pos) + ".in";
    }
    for (auto& l : out.outs) {
        const auto pos = l.label.find('#');
        l.label = l.label.substr(0, pos) + ".out";
    }
    return out;
}

ChoiOperator evaluate_circuit_choi(const CircuitSpec& spec) {
    SegmentTracker track(spec);
    ChoiOperator acc;

    auto sys_list = [&](const std::vector<std::string>& systems, Role role, bool advance) {
        std::vector<ChoiOperator::System> out;
        for (const auto& s : systems)
            out.push_back({advance ? track.advance(s) : track.current(s), spec.dim_of(s), role});
        return out;
    };

    for (const auto& node : spec.nodes) {
        switch (node.kind) {
            case CircuitSpec::NodeKind::Gate:
            case CircuitSpec::NodeKind::KrausSet: {
                auto ins = sys_list(node.systems_in, Role::In, false);
                auto outs = sys_list(node.systems_out, Role::Out, true);
                acc = link(acc, choi_of_map(node.matrices, ins, outs));
                break;
            }
            case CircuitSpec::NodeKind::Prepare: {
                CMatrix rho = node.matrices[0];
                if (rho.cols == 1) rho = rho * rho.dagger();
                auto outs = sys_list(node.systems_out, Role::Out, false);
                for (const auto& s : node.systems_out) track.prepared.insert(s);
                acc = link(acc, choi_state(outs, rho));
                break;
            }
            case CircuitSpec::NodeKind::PostSelect: {
                CMatrix eff = node.matrices[0];
                if (eff.cols == 1) eff = eff * eff.dagger();
                auto ins = sys_list(node.systems_in, Role::In, false);
                std::size_t d = 1;
                for (const auto& s : ins) d *= s.dim;
                if (eff.rows != d) throw ShapeMismatch("post-selection dimension");
                for (const auto& s : node.systems_in) {
                    track.advance(s);
                    track.terminated.insert(s);
                }
                acc = link(acc, ChoiOperator(ins, eff.transpose()));
                break;
            }
            case CircuitSpec::NodeKind::Trace: {
                auto ins = sys_list(node.systems_in, Role::In, false);
                for (const auto& s : node.systems_in) {
                    track.advance(s);
                    track.terminated.insert(s);
                }
                for (const auto& s : ins) acc = link(acc, choi_trace(s.label, s.dim));
                break;
            }
            case CircuitSpec::NodeKind::Slot: {
                // leave the slot legs open under slot-scoped names
                for (std::size_t k = 0; k < node.systems_in.size(); ++k) {
                    const std::string seg = track.current(node.systems_in[k]);
                    acc = link(acc,
                               choi_identity_wire(seg, node.name + ".in" + std::to_string(k),
                                                  spec.dim_of(node.systems_in[k])));
                    track.advance(node.systems_in[k]);
                }
                for (std::size_t k = 0; k < node.systems_out.size(); ++k) {
                    const std::string seg = track.current(node.systems_out[k]);
                    acc = link(acc,
                               choi_identity_wire(node.name + ".out" + std::to_string(k), seg,
                                                  spec.dim_of(node.systems_out[k])));
                }
                break;
            }
            case CircuitSpec::NodeKind::Stretch:
                break;
        }
    }

    for (const auto& p : spec.ctc_pairs) {
        const std::string fut = track.current(p.first);
        const std::string past = p.second + "#0";
        const std::size_t d = spec.dim_of(p.first);
        if (spec.dim_of(p.second) != d)
            throw DimensionMismatch("CTC pair (" + p.first + ", " + p.second + ")");
        acc = link(acc, choi_identity_wire(fut, past, d).scaled(1.0 / double(d * d)));
    }
    // relabel open boundary systems
    for (auto& s : acc.systems) {
        const auto pos = s.label.find('#');
        if (pos == std::string::npos) continue;
        s.label = s.label.substr(0, pos) + (s.role == Role::In ? ".in" : ".out");
    }
    return acc;
}

}  // namespace qmts
