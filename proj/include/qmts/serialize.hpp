#pragma once

#include <json.hpp>
#include <string>

#include "qmts/bridge.hpp"
#include "qmts/circuit.hpp"
#include "qmts/comb.hpp"
#include "qmts/mts.hpp"

namespace qmts {

using json = nlohmann::json;

// One self-describing document format for every file the tool reads or
// writes: {"format": "qmts/1", "kind": <discriminator>, ...}. Complex numbers
// are [re, im] pairs, rationals [num, den]. Keys are emitted sorted, so a
// parse/serialize round trip is byte-identical.
inline constexpr const char* kFormatTag = "qmts/1";

json encode_cplx(const cplx& z);
cplx decode_cplx(const json& j);

json encode_rational(const Rational& r);
Rational decode_rational(const json& j);

json encode_matrix(const CMatrix& m);
CMatrix decode_matrix(const json& j);

json encode_space(const MtSpace& s);
MtSpace decode_space(const json& j);

json encode_mts(const MtDensityVector& m);
MtDensityVector decode_mts(const json& j);

json encode_choi(const ChoiOperator& c);
ChoiOperator decode_choi(const json& j);

json encode_comb(const PctcComb& pc);
PctcComb decode_comb(const json& j);

json encode_instrument(const Instrument& ins);
Instrument decode_instrument(const json& j);

// instruments document: choi-flavored instruments plus an optional state
struct InstrumentsDoc {
    std::vector<Instrument> instruments;  // choi flavor
    std::vector<MtInstrument> mt_instruments;
    ChoiOperator state;  // optional preparation (scalar when absent)
    bool has_state = false;
    std::string flavor;  // "choi" or "mt"
};
json encode_instruments_doc(const InstrumentsDoc& doc);
InstrumentsDoc decode_instruments_doc(const json& j);

json encode_mt_instrument(const MtInstrument& ins);
MtInstrument decode_mt_instrument(const json& j);

json encode_circuit(const CircuitSpec& c);
CircuitSpec decode_circuit(const json& j);

json encode_plan(const ConstructionPlan& p);
ConstructionPlan decode_plan(const json& j);

// canonical rendering used everywhere a file is produced
std::string canonical_dump(const json& doc);

json load_document(const std::string& path);
void save_document(const std::string& path, const json& doc);

std::string document_kind(const json& doc);

}  // namespace qmts
