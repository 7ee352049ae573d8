#include "qmts/serialize.hpp"

#include <fstream>

namespace qmts {

namespace {

const json& need(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end())
        throw ParseError("missing field '" + std::string(key) + "' in " + j.dump().substr(0, 80));
    return *it;
}

Direction decode_direction(const json& j) {
    const std::string s = j.get<std::string>();
    if (s == "forward") return Direction::Forward;
    if (s == "backward") return Direction::Backward;
    throw ParseError("direction must be 'forward' or 'backward', got '" + s + "'");
}

Role decode_role(const json& j) {
    const std::string s = j.get<std::string>();
    if (s == "in") return Role::In;
    if (s == "out") return Role::Out;
    throw ParseError("role must be 'in' or 'out', got '" + s + "'");
}

json envelope(const char* kind) {
    json j;
    j["format"] = kFormatTag;
    j["kind"] = kind;
    return j;
}

}  // namespace

json encode_cplx(const cplx& z) { return json::array({z.real(), z.imag()}); }

cplx decode_cplx(const json& j) {
    if (!j.is_array() || j.size() != 2) throw ParseError("complex number must be [re, im]");
    return {j[0].get<double>(), j[1].get<double>()};
}

json encode_rational(const Rational& r) { return json::array({r.num, r.den}); }

Rational decode_rational(const json& j) {
    if (!j.is_array() || j.size() != 2) throw ParseError("rational must be [num, den]");
    return Rational(j[0].get<std::int64_t>(), j[1].get<std::int64_t>());
}

json encode_matrix(const CMatrix& m) {
    json j;
    j["rows"] = m.rows;
    j["cols"] = m.cols;
    json entries = json::array();
    for (const cplx& z : m.entries) entries.push_back(encode_cplx(z));
    j["entries"] = std::move(entries);
    return j;
}

CMatrix decode_matrix(const json& j) {
    const std::size_t rows = need(j, "rows").get<std::size_t>();
    const std::size_t cols = need(j, "cols").get<std::size_t>();
    const json& entries = need(j, "entries");
    if (!entries.is_array() || entries.size() != rows * cols)
        throw ParseError("matrix entries: expected " + std::to_string(rows * cols) + " values");
    std::vector<cplx> e;
    e.reserve(entries.size());
    for (const auto& v : entries) e.push_back(decode_cplx(v));
    return CMatrix(rows, cols, std::move(e));
}

json encode_space(const MtSpace& s) {
    json arr = json::array();
    for (const auto& f : s.factors) {
        json fj;
        fj["system"] = f.label.system;
        fj["time"] = encode_rational(f.label.time);
        fj["direction"] = f.label.direction == Direction::Forward ? "forward" : "backward";
        fj["daggered"] = f.label.daggered;
        fj["dim"] = f.dim;
        arr.push_back(std::move(fj));
    }
    return arr;
}

MtSpace decode_space(const json& j) {
    if (!j.is_array()) throw ParseError("space must be an array of factors");
    std::vector<MtSpace::Factor> factors;
    for (const auto& fj : j) {
        MtSpace::Factor f;
        f.label.system = need(fj, "system").get<std::string>();
        f.label.time = decode_rational(need(fj, "time"));
        f.label.direction = decode_direction(need(fj, "direction"));
        f.label.daggered = fj.value("daggered", false);
        f.dim = need(fj, "dim").get<std::size_t>();
        factors.push_back(std::move(f));
    }
    try {
        return MtSpace(std::move(factors));
    } catch (const Error& e) {
        throw ParseError(std::string("invalid space: ") + e.what());
    }
}

json encode_mts(const MtDensityVector& m) {
    json j = envelope("mts");
    j["space"] = encode_space(m.space);
    j["op"] = encode_matrix(m.op);
    return j;
}

MtDensityVector decode_mts(const json& j) {
    MtSpace space = decode_space(need(j, "space"));
    CMatrix op = decode_matrix(need(j, "op"));
    try {
        return MtDensityVector(std::move(space), std::move(op));
    } catch (const Error& e) {
        throw ParseError(std::string("invalid mts document: ") + e.what());
    }
}

json encode_choi(const ChoiOperator& c) {
    json j;
    json systems = json::array();
    for (const auto& s : c.systems) {
        json sj;
        sj["label"] = s.label;
        sj["dim"] = s.dim;
        sj["role"] = s.role == Role::In ? "in" : "out";
        systems.push_back(std::move(sj));
    }
    j["systems"] = std::move(systems);
    j["matrix"] = encode_matrix(c.matrix);
    return j;
}

ChoiOperator decode_choi(const json& j) {
    std::vector<ChoiOperator::System> systems;
    for (const auto& sj : need(j, "systems")) {
        ChoiOperator::System s;
        s.label = need(sj, "label").get<std::string>();
        s.dim = need(sj, "dim").get<std::size_t>();
        s.role = decode_role(need(sj, "role"));
        systems.push_back(std::move(s));
    }
    CMatrix m = decode_matrix(need(j, "matrix"));
    try {
        return ChoiOperator(std::move(systems), std::move(m));
    } catch (const Error& e) {
        throw ParseError(std::string("invalid choi operator: ") + e.what());
    }
}

json encode_comb(const PctcComb& pc) {
    json j = envelope("comb");
    json teeth = json::array();
    for (const auto& t : pc.base.teeth) {
        json tj;
        tj["choi"] = encode_choi(t.choi);
        tj["mem_in"] = t.mem_in;
        tj["mem_out"] = t.mem_out;
        tj["time_in"] = encode_rational(t.time_in);
        tj["time_out"] = encode_rational(t.time_out);
        teeth.push_back(std::move(tj));
    }
    j["teeth"] = std::move(teeth);
    json pairs = json::array();
    for (const auto& p : pc.ctc_pairs) pairs.push_back(json::array({p.future_out, p.past_in}));
    j["ctc_pairs"] = std::move(pairs);
    j["time_labelled"] = pc.time_labelled;
    return j;
}

PctcComb decode_comb(const json& j) {
    std::vector<Tooth> teeth;
    for (const auto& tj : need(j, "teeth")) {
        Tooth t;
        t.choi = decode_choi(need(tj, "choi"));
        for (const auto& m : tj.value("mem_in", json::array()))
            t.mem_in.push_back(m.get<std::string>());
        for (const auto& m : tj.value("mem_out", json::array()))
            t.mem_out.push_back(m.get<std::string>());
        t.time_in = decode_rational(need(tj, "time_in"));
        t.time_out = decode_rational(need(tj, "time_out"));
        teeth.push_back(std::move(t));
    }
    std::vector<CtcPair> pairs;
    for (const auto& pj : j.value("ctc_pairs", json::array())) {
        if (!pj.is_array() || pj.size() != 2) throw ParseError("ctc pair must be [future, past]");
        pairs.push_back({pj[0].get<std::string>(), pj[1].get<std::string>()});
    }
    try {
        PctcComb pc = pctc_assist_comb(build_comb(std::move(teeth)), pairs);
        pc.time_labelled = j.value("time_labelled", false);
        return pc;
    } catch (const Error& e) {
        throw ParseError(std::string("invalid comb document: ") + e.what());
    }
}

json encode_instrument(const Instrument& ins) {
    json j;
    json outcomes = json::array();
    for (const auto& o : ins.outcomes) {
        json oj;
        oj["label"] = o.label;
        oj["choi"] = encode_choi(o.choi);
        outcomes.push_back(std::move(oj));
    }
    j["outcomes"] = std::move(outcomes);
    return j;
}

Instrument decode_instrument(const json& j) {
    Instrument ins;
    for (const auto& oj : need(j, "outcomes"))
        ins.outcomes.push_back(
            {need(oj, "label").get<std::string>(), decode_choi(need(oj, "choi"))});
    try {
        validate_instrument(ins);
    } catch (const Error& e) {
        throw ParseError(std::string("invalid instrument: ") + e.what());
    }
    return ins;
}

json encode_mt_instrument(const MtInstrument& ins) {
    json j;
    json outcomes = json::array();
    for (const auto& o : ins.outcomes) {
        json oj;
        oj["label"] = o.label;
        oj["space"] = encode_space(o.kraus_density.space);
        oj["op"] = encode_matrix(o.kraus_density.op);
        outcomes.push_back(std::move(oj));
    }
    j["outcomes"] = std::move(outcomes);
    return j;
}

MtInstrument decode_mt_instrument(const json& j) {
    MtInstrument ins;
    for (const auto& oj : need(j, "outcomes")) {
        MtSpace space = decode_space(need(oj, "space"));
        CMatrix op = decode_matrix(need(oj, "op"));
        try {
            ins.outcomes.push_back({need(oj, "label").get<std::string>(),
                                    MtDensityVector(std::move(space), std::move(op))});
        } catch (const Error& e) {
            throw ParseError(std::string("invalid mt instrument outcome: ") + e.what());
        }
    }
    return ins;
}

json encode_instruments_doc(const InstrumentsDoc& doc) {
    json j = envelope("instruments");
    j["flavor"] = doc.flavor;
    if (doc.flavor == "choi") {
        json arr = json::array();
        for (const auto& ins : doc.instruments) arr.push_back(encode_instrument(ins));
        j["instruments"] = std::move(arr);
        if (doc.has_state) j["state"] = encode_choi(doc.state);
    } else {
        json arr = json::array();
        for (const auto& ins : doc.mt_instruments) arr.push_back(encode_mt_instrument(ins));
        j["instruments"] = std::move(arr);
    }
    return j;
}

InstrumentsDoc decode_instruments_doc(const json& j) {
    InstrumentsDoc doc;
    doc.flavor = need(j, "flavor").get<std::string>();
    if (doc.flavor == "choi") {
        for (const auto& ij : need(j, "instruments")) doc.instruments.push_back(decode_instrument(ij));
        if (j.contains("state")) {
            doc.state = decode_choi(j["state"]);
            doc.has_state = true;
        }
    } else if (doc.flavor == "mt") {
        for (const auto& ij : need(j, "instruments"))
            doc.mt_instruments.push_back(decode_mt_instrument(ij));
    } else {
        throw ParseError("instruments flavor must be 'choi' or 'mt'");
    }
    return doc;
}

namespace {

const char* node_kind_name(CircuitSpec::NodeKind k) {
    switch (k) {
        case CircuitSpec::NodeKind::Prepare: return "prepare";
        case CircuitSpec::NodeKind::Gate: return "gate";
        case CircuitSpec::NodeKind::KrausSet: return "kraus";
        case CircuitSpec::NodeKind::PostSelect: return "postselect";
        case CircuitSpec::NodeKind::Slot: return "slot";
        case CircuitSpec::NodeKind::Stretch: return "stretch";
        case CircuitSpec::NodeKind::Trace: return "trace";
    }
    return "gate";
}

CircuitSpec::NodeKind node_kind_from(const std::string& s) {
    if (s == "prepare") return CircuitSpec::NodeKind::Prepare;
    if (s == "gate") return CircuitSpec::NodeKind::Gate;
    if (s == "kraus") return CircuitSpec::NodeKind::KrausSet;
    if (s == "postselect") return CircuitSpec::NodeKind::PostSelect;
    if (s == "slot") return CircuitSpec::NodeKind::Slot;
    if (s == "stretch") return CircuitSpec::NodeKind::Stretch;
    if (s == "trace") return CircuitSpec::NodeKind::Trace;
    throw ParseError("unknown node kind '" + s + "'");
}

}  // namespace

json encode_circuit(const CircuitSpec& c) {
    json j = envelope("circuit");
    j["version"] = c.version;
    json systems = json::array();
    for (const auto& s : c.systems) {
        json sj;
        sj["label"] = s.label;
        sj["dim"] = s.dim;
        systems.push_back(std::move(sj));
    }
    j["systems"] = std::move(systems);
    json nodes = json::array();
    for (const auto& n : c.nodes) {
        json nj;
        nj["kind"] = node_kind_name(n.kind);
        nj["systems_in"] = n.systems_in;
        nj["systems_out"] = n.systems_out;
        json mats = json::array();
        for (const auto& m : n.matrices) mats.push_back(encode_matrix(m));
        nj["matrices"] = std::move(mats);
        nj["name"] = n.name;
        if (n.time) nj["time"] = encode_rational(*n.time);
        if (n.kind == CircuitSpec::NodeKind::Stretch) {
            nj["from_time"] = encode_rational(n.from_time);
            nj["to_time"] = encode_rational(n.to_time);
        }
        nodes.push_back(std::move(nj));
    }
    j["nodes"] = std::move(nodes);
    json pairs = json::array();
    for (const auto& p : c.ctc_pairs) pairs.push_back(json::array({p.first, p.second}));
    j["ctc_pairs"] = std::move(pairs);
    j["metadata"] = c.metadata;
    return j;
}

CircuitSpec decode_circuit(const json& j) {
    CircuitSpec c;
    c.version = j.value("version", "1");
    for (const auto& sj : need(j, "systems"))
        c.systems.push_back(
            {need(sj, "label").get<std::string>(), need(sj, "dim").get<std::size_t>()});
    for (const auto& nj : need(j, "nodes")) {
        CircuitSpec::Node n;
        n.kind = node_kind_from(need(nj, "kind").get<std::string>());
        for (const auto& s : nj.value("systems_in", json::array()))
            n.systems_in.push_back(s.get<std::string>());
        for (const auto& s : nj.value("systems_out", json::array()))
            n.systems_out.push_back(s.get<std::string>());
        for (const auto& m : nj.value("matrices", json::array()))
            n.matrices.push_back(decode_matrix(m));
        n.name = nj.value("name", "");
        if (nj.contains("time")) n.time = decode_rational(nj["time"]);
        if (nj.contains("from_time")) n.from_time = decode_rational(nj["from_time"]);
        if (nj.contains("to_time")) n.to_time = decode_rational(nj["to_time"]);
        for (const auto& s : n.systems_in) c.dim_of(s);
        for (const auto& s : n.systems_out) c.dim_of(s);
        c.nodes.push_back(std::move(n));
    }
    for (const auto& pj : j.value("ctc_pairs", json::array())) {
        if (!pj.is_array() || pj.size() != 2) throw ParseError("ctc pair must be [future, past]");
        const std::string a = pj[0].get<std::string>(), b = pj[1].get<std::string>();
        if (c.dim_of(a) != c.dim_of(b))
            throw ParseError("CTC pair (" + a + ", " + b + ") has mismatched dimensions");
        c.ctc_pairs.push_back({a, b});
    }
    if (j.contains("metadata"))
        for (auto it = j["metadata"].begin(); it != j["metadata"].end(); ++it)
            c.metadata[it.key()] = it.value().get<std::string>();
    return c;
}

json encode_plan(const ConstructionPlan& p) {
    json j = envelope("plan");
    j["circuit"] = encode_circuit(p.circuit);
    j["comb_built"] = p.comb_built;
    if (p.comb_built) j["comb"] = encode_comb(p.comb);
    j["ctc_count"] = p.ctc_count;
    j["ctc_dims"] = p.ctc_dims;
    j["claimed_constant"] = encode_cplx(p.claimed_constant);
    j["term_weights"] = p.term_weights;
    json tc = json::array();
    for (const auto& k : p.term_constants) tc.push_back(encode_cplx(k));
    j["term_constants"] = std::move(tc);
    j["term_reweights"] = p.term_reweights;
    j["factor_names"] = p.factor_names;
    return j;
}

ConstructionPlan decode_plan(const json& j) {
    ConstructionPlan p;
    p.circuit = decode_circuit(need(j, "circuit"));
    p.comb_built = j.value("comb_built", j.contains("comb"));
    if (p.comb_built) p.comb = decode_comb(need(j, "comb"));
    p.ctc_count = need(j, "ctc_count").get<std::size_t>();
    for (const auto& d : need(j, "ctc_dims")) p.ctc_dims.push_back(d.get<std::size_t>());
    p.claimed_constant = decode_cplx(need(j, "claimed_constant"));
    for (const auto& w : j.value("term_weights", json::array()))
        p.term_weights.push_back(w.get<double>());
    for (const auto& k : j.value("term_constants", json::array()))
        p.term_constants.push_back(decode_cplx(k));
    for (const auto& w : j.value("term_reweights", json::array()))
        p.term_reweights.push_back(w.get<double>());
    if (j.contains("factor_names"))
        for (auto it = j["factor_names"].begin(); it != j["factor_names"].end(); ++it)
            p.factor_names[it.key()] = it.value().get<std::string>();
    return p;
}

std::string canonical_dump(const json& doc) { return doc.dump(2) + "\n"; }

json load_document(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    if (!doc.is_object() || doc.value("format", "") != kFormatTag)
        throw ParseError(path + ": not a " + std::string(kFormatTag) + " document");
    return doc;
}

void save_document(const std::string& path, const json& doc) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << canonical_dump(doc);
}

std::string document_kind(const json& doc) { return doc.value("kind", ""); }

}  // namespace qmts
