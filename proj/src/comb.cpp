#include "qmts/comb.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace qmts {

namespace {

bool contains(const std::vector<std::string>& v, const std::string& s) {
    return std::find(v.begin(), v.end(), s) != std::end(v);
}

}  // namespace

std::vector<ChoiOperator::System> Tooth::external_ins() const {
    std::vector<ChoiOperator::System> out;
    for (const auto& s : choi.systems)
        if (s.role == Role::In && !contains(mem_in, s.label)) out.push_back(s);
    return out;
}

std::vector<ChoiOperator::System> Tooth::external_outs() const {
    std::vector<ChoiOperator::System> out;
    for (const auto& s : choi.systems)
        if (s.role == Role::Out && !contains(mem_out, s.label)) out.push_back(s);
    return out;
}

std::vector<SlotSignature> Comb::slot_signature() const {
    std::vector<SlotSignature> sig;
    for (std::size_t j = 0; j + 1 < teeth.size(); ++j)
        sig.push_back({teeth[j].external_outs(), teeth[j + 1].external_ins()});
    return sig;
}

std::vector<ChoiOperator::System> Comb::global_past_ins() const {
    return teeth.empty() ? std::vector<ChoiOperator::System>{} : teeth.front().external_ins();
}

std::vector<ChoiOperator::System> Comb::global_future_outs() const {
    return teeth.empty() ? std::vector<ChoiOperator::System>{} : teeth.back().external_outs();
}

Comb build_comb(std::vector<Tooth> teeth, double tp_tol) {
    if (teeth.empty()) throw BrokenMemoryChain("a comb needs at least one tooth");
    for (std::size_t i = 0; i < teeth.size(); ++i) {
        const Tooth& t = teeth[i];
        for (const auto& l : t.mem_in)
            if (!t.choi.has_system(l) || t.choi.system(l).role != Role::In)
                throw BrokenMemoryChain("tooth " + std::to_string(i) +
                                        " lacks memory input " + l);
        for (const auto& l : t.mem_out)
            if (!t.choi.has_system(l) || t.choi.system(l).role != Role::Out)
                throw BrokenMemoryChain("tooth " + std::to_string(i) +
                                        " lacks memory output " + l);
        if (!t.choi.is_tp(tp_tol))
            throw NotTracePreserving("tooth " + std::to_string(i));
    }
    if (!teeth.front().mem_in.empty())
        throw BrokenMemoryChain("first tooth has a dangling memory input");
    if (!teeth.back().mem_out.empty())
        throw BrokenMemoryChain("last tooth has a dangling memory output");
    for (std::size_t i = 0; i + 1 < teeth.size(); ++i) {
        std::vector<std::string> a = teeth[i].mem_out, b = teeth[i + 1].mem_in;
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        if (a != b)
            throw BrokenMemoryChain("memory sets between teeth " + std::to_string(i) +
                                    " and " + std::to_string(i + 1) + " differ");
        for (const auto& l : a)
            if (teeth[i].choi.system(l).dim != teeth[i + 1].choi.system(l).dim)
                throw BrokenMemoryChain("memory " + l + " changes dimension");
    }
    Comb c;
    c.teeth = std::move(teeth);
    return c;
}

ChoiOperator comb_choi(const Comb& c) {
    ChoiOperator acc;
    for (const auto& t : c.teeth) acc = link(acc, t.choi);
    return acc;
}

bool PctcComb::is_ctc_label(const std::string& label) const {
    for (const auto& p : ctc_pairs)
        if (p.future_out == label || p.past_in == label) return true;
    return false;
}

std::vector<ChoiOperator::System> PctcComb::open_ins() const {
    std::vector<ChoiOperator::System> out;
    for (const auto& t : base.teeth)
        for (const auto& s : t.external_ins())
            if (!is_ctc_label(s.label)) out.push_back(s);
    return out;
}

std::vector<ChoiOperator::System> PctcComb::open_outs() const {
    std::vector<ChoiOperator::System> out;
    for (const auto& t : base.teeth)
        for (const auto& s : t.external_outs())
            if (!is_ctc_label(s.label)) out.push_back(s);
    return out;
}

PctcComb pctc_assist_comb(const Comb& c, const std::vector<CtcPair>& ctc_pairs) {
    const auto past = c.global_past_ins();
    const auto future = c.global_future_outs();
    for (const auto& p : ctc_pairs) {
        const ChoiOperator::System* fo = nullptr;
        const ChoiOperator::System* pi = nullptr;
        for (const auto& s : future)
            if (s.label == p.future_out) fo = &s;
        for (const auto& s : past)
            if (s.label == p.past_in) pi = &s;
        if (!fo)
            throw DimensionMismatch("CTC endpoint " + p.future_out +
                                    " is not a global-future output");
        if (!pi)
            throw DimensionMismatch("CTC endpoint " + p.past_in +
                                    " is not a global-past input");
        if (fo->dim != pi->dim)
            throw DimensionMismatch("CTC pair (" + p.future_out + ", " + p.past_in +
                                    ") has mismatched dimensions");
    }
    PctcComb pc;
    pc.base = c;
    pc.ctc_pairs = ctc_pairs;
    return pc;
}

ChoiOperator pctc_comb_choi(const PctcComb& pc) { return pctc_comb_choi_with(pc, {}); }

ChoiOperator pctc_comb_choi_with(const PctcComb& pc, const std::vector<ChoiOperator>& extra) {
    std::vector<ChoiOperator> ops;
    for (const auto& t : pc.base.teeth) ops.push_back(t.choi);
    for (const auto& p : pc.ctc_pairs) {
        const std::size_t d = pc.base.teeth.back().choi.system(p.future_out).dim;
        ops.push_back(
            choi_identity_wire(p.future_out, p.past_in, d).scaled(1.0 / double(d * d)));
    }
    ops.insert(ops.end(), extra.begin(), extra.end());
    return link_all_greedy(std::move(ops));
}

void validate_instrument(const Instrument& ins, double tp_tol) {
    if (ins.outcomes.empty()) throw SlotMismatch("instrument with no outcomes");
    ChoiOperator sum = ins.outcomes.front().choi;
    for (std::size_t k = 1; k < ins.outcomes.size(); ++k) {
        const ChoiOperator& o = ins.outcomes[k].choi;
        if (o.systems.size() != sum.systems.size())
            throw SlotMismatch("instrument outcomes cover different systems");
        for (std::size_t s = 0; s < o.systems.size(); ++s)
            if (o.systems[s].label != sum.systems[s].label ||
                o.systems[s].dim != sum.systems[s].dim ||
                o.systems[s].role != sum.systems[s].role)
                throw SlotMismatch("instrument outcomes cover different systems");
        sum.matrix += o.matrix;
    }
    if (!sum.is_tp(tp_tol))
        throw NotTracePreserving("instrument outcome maps do not sum to a channel");
}

ChoiOperator comb_environment(const PctcComb& pc, const ChoiOperator& rho0,
                              const std::set<std::string>& claimed) {
    const auto opens_in = pc.open_ins();
    const auto opens_out = pc.open_outs();
    for (const auto& s : opens_in)
        if (!claimed.count(s.label) &&
            std::none_of(rho0.systems.begin(), rho0.systems.end(),
                         [&](const auto& r) { return r.label == s.label; }))
            throw SlotMismatch("comb input " + s.label + " has no state or instrument");

    std::vector<ChoiOperator> extra = {rho0};
    for (const auto& s : opens_out)
        if (!claimed.count(s.label)) extra.push_back(choi_trace(s.label, s.dim));
    return pctc_comb_choi_with(pc, extra);
}

CombProbabilityTable comb_probability(const PctcComb& pc, const ChoiOperator& rho0,
                                      const std::vector<Instrument>& instruments) {
    std::set<std::string> claimed;
    for (const auto& s : rho0.systems)
        if (s.role != Role::In) claimed.insert(s.label);
    for (const auto& ins : instruments)
        for (const auto& s : ins.outcomes.front().choi.systems) claimed.insert(s.label);
    return comb_probability_with_env(comb_environment(pc, rho0, claimed), instruments);
}

CombProbabilityTable comb_probability_with_env(const ChoiOperator& env,
                                               const std::vector<Instrument>& instruments) {
    for (const auto& ins : instruments) validate_instrument(ins);

    CombProbabilityTable table;
    std::vector<std::size_t> idx(instruments.size(), 0);
    std::vector<double> raw;
    while (true) {
        ChoiOperator acc = env;
        std::vector<std::string> labels;
        for (std::size_t j = 0; j < instruments.size(); ++j) {
            acc = link(acc, instruments[j].outcomes[idx[j]].choi);
            labels.push_back(instruments[j].outcomes[idx[j]].label);
        }
        if (!acc.is_scalar())
            throw SlotMismatch("instruments do not close the comb contraction");
        raw.push_back(std::max(0.0, acc.scalar().real()));
        table.outcome_tuples.push_back(std::move(labels));
        // advance the tuple odometer
        std::size_t j = instruments.size();
        while (j > 0) {
            --j;
            if (++idx[j] < instruments[j].outcomes.size()) break;
            idx[j] = 0;
            if (j == 0) {
                j = SIZE_MAX;
                break;
            }
        }
        if (instruments.empty() || j == SIZE_MAX) break;
    }

    double denom = 0.0;
    for (double r : raw) denom += r;
    if (denom <= 1e-12)
        throw PostSelectionImpossible("comb post-selection succeeds with probability ~0");
    table.denominator = denom;
    for (double r : raw) table.probabilities.push_back(r / denom);
    return table;
}

namespace {

Tooth extend_tooth_with_wire(const Tooth& t, const std::string& in_label,
                             const std::string& out_label, std::size_t dim) {
    ChoiOperator wire = choi_identity_wire(in_label, out_label, dim);
    std::vector<ChoiOperator::System> sys = t.choi.systems;
    sys.insert(sys.end(), wire.systems.begin(), wire.systems.end());
    Tooth out = t;
    out.choi = ChoiOperator(std::move(sys), kron(t.choi.matrix, wire.matrix));
    return out;
}

}  // namespace

std::pair<PctcComb, std::vector<ChoiOperator>> absorb_plugged_pctcs(const PctcComb& outer,
                                                                    const PctcComb& plugged) {
    const auto slots = outer.base.slot_signature();
    if (plugged.base.teeth.size() != slots.size())
        throw SlotMismatch("plugged comb has " + std::to_string(plugged.base.teeth.size()) +
                           " teeth for " + std::to_string(slots.size()) + " slots");
    auto matches = [](const std::vector<ChoiOperator::System>& a,
                      const std::vector<ChoiOperator::System>& b) {
        if (a.size() != b.size()) return false;
        for (const auto& sa : a) {
            bool found = false;
            for (const auto& sb : b)
                if (sa.label == sb.label && sa.dim == sb.dim) found = true;
            if (!found) return false;
        }
        return true;
    };
    for (std::size_t j = 0; j < slots.size(); ++j) {
        const Tooth& pt = plugged.base.teeth[j];
        std::vector<ChoiOperator::System> ins = pt.external_ins();
        std::vector<ChoiOperator::System> outs = pt.external_outs();
        // CTC endpoints of the plugged comb are not fed by the outer slots
        std::erase_if(ins, [&](const auto& s) { return plugged.is_ctc_label(s.label); });
        std::erase_if(outs, [&](const auto& s) { return plugged.is_ctc_label(s.label); });
        if (!matches(ins, slots[j].ins) || !matches(outs, slots[j].outs))
            throw SlotMismatch("plugged tooth " + std::to_string(j) +
                               " does not fit slot " + std::to_string(j));
    }

    std::vector<Tooth> teeth = outer.base.teeth;
    std::vector<CtcPair> pairs = outer.ctc_pairs;
    std::vector<ChoiOperator> product;
    for (const auto& t : plugged.base.teeth) {
        ChoiOperator c = t.choi;
        product.push_back(c);
    }

    // Reroute each plugged memory R (between plugged teeth j and j+1) through
    // the outer comb: up to the global future, a fresh CTC, and back down to
    // the consuming slot.
    std::size_t fresh = 0;
    auto reroute = [&](std::size_t emit_tooth, const std::string& emit_label,
                       std::size_t consume_tooth, const std::string& consume_label,
                       std::size_t dim) {
        const std::string tag = "absorb" + std::to_string(fresh++);
        // upward: emitting slot j -> outer teeth j+1..T-1 -> global future
        std::string cur = tag + ".up" + std::to_string(emit_tooth + 1);
        product[emit_tooth] = product[emit_tooth].renamed(emit_label, cur);
        for (std::size_t k = emit_tooth + 1; k < teeth.size(); ++k) {
            std::string next = tag + ".up" + std::to_string(k + 1);
            teeth[k] = extend_tooth_with_wire(teeth[k], cur, next, dim);
            if (k + 1 < teeth.size()) teeth[k].mem_out.push_back(next);
            if (k > emit_tooth + 1) teeth[k].mem_in.push_back(cur);
            cur = next;
        }
        const std::string fut = cur;
        // downward: global past -> outer teeth 0..consume_tooth -> slot
        cur = tag + ".dn0";
        const std::string past = cur;
        for (std::size_t k = 0; k <= consume_tooth; ++k) {
            std::string next = tag + ".dn" + std::to_string(k + 1);
            teeth[k] = extend_tooth_with_wire(teeth[k], cur, next, dim);
            if (k > 0) teeth[k].mem_in.push_back(cur);
            if (k < consume_tooth) teeth[k].mem_out.push_back(next);
            cur = next;
        }
        product[consume_tooth] = product[consume_tooth].renamed(consume_label, cur);
        pairs.push_back({fut, past});
    };

    for (std::size_t j = 0; j + 1 < plugged.base.teeth.size(); ++j)
        for (const auto& mem : plugged.base.teeth[j].mem_out) {
            const std::size_t dim = plugged.base.teeth[j].choi.system(mem).dim;
            reroute(j, mem, j + 1, mem, dim);
        }
    for (const auto& p : plugged.ctc_pairs) {
        // the plugged CTC launches from its last tooth and returns to its first
        const std::size_t dim = plugged.base.teeth.back().choi.system(p.future_out).dim;
        reroute(plugged.base.teeth.size() - 1, p.future_out, 0, p.past_in, dim);
    }

    PctcComb out;
    out.base = build_comb(std::move(teeth));
    out.ctc_pairs = std::move(pairs);
    out.time_labelled = outer.time_labelled;
    return {out, product};
}

Instrument random_instrument(Rng& rng, const std::vector<ChoiOperator::System>& ins,
                             const std::vector<ChoiOperator::System>& outs,
                             std::size_t n_outcomes) {
    std::size_t d_in = 1, d_out = 1;
    for (const auto& s : ins) d_in *= s.dim;
    for (const auto& s : outs) d_out *= s.dim;
    std::vector<CMatrix> kraus = random_kraus_cptp(rng, d_out, d_in, n_outcomes);
    Instrument instrument;
    for (std::size_t k = 0; k < n_outcomes; ++k)
        instrument.outcomes.push_back(
            {std::to_string(k), choi_of_map({kraus[k]}, ins, outs)});
    return instrument;
}

PctcComb random_pctc_comb(Rng& rng, const RandomCombSpec& spec) {
    const std::size_t wire = spec.wire_dim;
    std::vector<Tooth> teeth;
    Rational t(0);

    auto fresh_time = [&]() {
        Rational cur = t;
        t = t + Rational(1);
        return cur;
    };

    const std::size_t n_teeth = spec.slots + 1;
    for (std::size_t i = 0; i < n_teeth; ++i) {
        std::vector<ChoiOperator::System> ins, outs;
        Tooth tooth;
        if (i == 0) {
            ins.push_back({"gp0", wire, Role::In});
            for (std::size_t c = 0; c < spec.ctc_wires; ++c)
                ins.push_back({"ctc" + std::to_string(c) + ".past", spec.ctc_dim, Role::In});
        } else {
            ins.push_back({"s" + std::to_string(2 * i), wire, Role::In});
            tooth.mem_in.push_back("q" + std::to_string(i));
        }
        if (i + 1 == n_teeth) {
            outs.push_back({"gf0", wire, Role::Out});
            for (std::size_t c = 0; c < spec.ctc_wires; ++c)
                outs.push_back({"ctc" + std::to_string(c) + ".fut", spec.ctc_dim, Role::Out});
        } else {
            outs.push_back({"s" + std::to_string(2 * i + 1), wire, Role::Out});
            tooth.mem_out.push_back("q" + std::to_string(i + 1));
        }

        std::vector<ChoiOperator::System> all_in = ins, all_out = outs;
        for (const auto& m : tooth.mem_in) all_in.push_back({m, spec.memory_dim, Role::In});
        for (const auto& m : tooth.mem_out) all_out.push_back({m, spec.memory_dim, Role::Out});
        std::size_t d_in = 1, d_out = 1;
        for (const auto& s : all_in) d_in *= s.dim;
        for (const auto& s : all_out) d_out *= s.dim;
        std::vector<CMatrix> kraus =
            random_kraus_cptp(rng, d_out, d_in, spec.kraus_per_tooth);
        tooth.choi = choi_of_map(kraus, all_in, all_out);
        tooth.time_in = fresh_time();
        tooth.time_out = fresh_time();
        teeth.push_back(std::move(tooth));
    }

    std::vector<CtcPair> pairs;
    for (std::size_t c = 0; c < spec.ctc_wires; ++c)
        pairs.push_back({"ctc" + std::to_string(c) + ".fut", "ctc" + std::to_string(c) + ".past"});
    PctcComb pc = pctc_assist_comb(build_comb(std::move(teeth)), pairs);
    pc.time_labelled = true;
    return pc;
}

}  // namespace qmts
