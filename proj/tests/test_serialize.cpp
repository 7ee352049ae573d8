#include <doctest.h>

#include "helpers.hpp"
#include "qmts/serialize.hpp"

using namespace qmts;
using namespace qmts::test;

TEST_CASE("mts document round trip is byte identical") {
    Rng rng(1);
    MtVector psi = mt_kraus("F", Rational(1, 3), "B", Rational(-2), random_matrix(rng, 2, 2));
    MtDensityVector eta = MtDensityVector::pure(psi);

    json doc = encode_mts(eta);
    std::string text = canonical_dump(doc);
    json doc2 = json::parse(text);
    MtDensityVector back = decode_mts(doc2);
    CHECK(back.space == eta.space);
    CHECK(back.op.approx_equal(eta.op, 0.0));
    CHECK(canonical_dump(encode_mts(back)) == text);
}

TEST_CASE("comb document round trip") {
    Rng rng(2);
    RandomCombSpec spec;
    spec.slots = 1;
    spec.ctc_wires = 1;
    PctcComb pc = random_pctc_comb(rng, spec);

    std::string text = canonical_dump(encode_comb(pc));
    PctcComb back = decode_comb(json::parse(text));
    CHECK(back.base.teeth.size() == pc.base.teeth.size());
    CHECK(back.ctc_pairs.size() == pc.ctc_pairs.size());
    CHECK(back.time_labelled == pc.time_labelled);
    CHECK(canonical_dump(encode_comb(back)) == text);

    // the reloaded comb contracts to the same operator
    CHECK((pctc_comb_choi(back).matrix - pctc_comb_choi(pc).matrix).frobenius_norm() <
          1e-12);
}

TEST_CASE("instruments document round trip") {
    Rng rng(3);
    InstrumentsDoc doc;
    doc.flavor = "choi";
    doc.instruments.push_back(
        random_instrument(rng, {{"s1", 2, Role::In}}, {{"s2", 2, Role::Out}}, 2));
    doc.state = choi_state("gp0", random_density(rng, 2));
    doc.has_state = true;

    std::string text = canonical_dump(encode_instruments_doc(doc));
    InstrumentsDoc back = decode_instruments_doc(json::parse(text));
    CHECK(back.flavor == "choi");
    CHECK(back.instruments.size() == 1);
    CHECK(back.has_state);
    CHECK(canonical_dump(encode_instruments_doc(back)) == text);
}

TEST_CASE("plan document round trip") {
    Rng rng(4);
    MtVector psi = mt_kraus("F", Rational(1), "B", Rational(0), random_matrix(rng, 2, 2));
    ConstructionPlan plan = mts_to_pctc_comb(MtDensityVector::pure(psi), Strategy::Auto);

    std::string text = canonical_dump(encode_plan(plan));
    ConstructionPlan back = decode_plan(json::parse(text));
    CHECK(back.ctc_count == plan.ctc_count);
    CHECK(back.ctc_dims == plan.ctc_dims);
    CHECK(std::abs(back.claimed_constant - plan.claimed_constant) == 0.0);
    CHECK(canonical_dump(encode_plan(back)) == text);

    // the reloaded circuit still evaluates
    ChoiOperator eval = evaluate_circuit_choi(back.circuit);
    CHECK(eval.systems.size() >= 2);
}

TEST_CASE("parse errors carry context") {
    CHECK_THROWS_AS(decode_mts(json::parse(R"({"kind":"mts"})")), ParseError);
    CHECK_THROWS_AS(decode_rational(json::parse("[1]")), ParseError);
    CHECK_THROWS_AS(decode_matrix(json::parse(R"({"rows":2,"cols":2,"entries":[[1,0]]})")),
                    ParseError);
    json bad_pair = json::parse(
        R"({"format":"qmts/1","kind":"comb","teeth":[],"ctc_pairs":[["a"]]})");
    CHECK_THROWS_AS(decode_comb(bad_pair), ParseError);
}
