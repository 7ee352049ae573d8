#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "qmts/bridge.hpp"

using namespace qmts;
using namespace qmts::test;

namespace {

double dist(const CMatrix& a, const CMatrix& b) { return (a - b).frobenius_norm(); }

// pure evaluation of a map-construction plan: operator on S.out x S.in
CMatrix eval_plan_pure(const ConstructionPlan& plan) {
    PureBlock b = evaluate_circuit_pure(plan.circuit);
    REQUIRE(b.ins.size() == 1);
    REQUIRE(b.outs.size() == 1);
    return b.matrix;
}

}  // namespace

TEST_CASE("decompose_two_time") {
    CMatrix c = CMatrix::diag({1.0, 0.5});
    TwoTimeDecomposition dec = decompose_two_time(c);
    CHECK(std::abs(dec.r - 1.0) < 1e-14);
    CHECK(std::abs(dec.a[0] - 1.0) < 1e-14);
    CHECK(std::abs(dec.a[1] - 0.5) < 1e-14);
    CHECK(std::abs(dec.psi[0][0] - 1.0) < 1e-14);
    CHECK(std::abs(dec.psi[1][1] - 1.0) < 1e-14);
    CHECK(dist(dec.reconstruct(), c) < 1e-10);

    Rng rng(1);
    CMatrix u = random_unitary(rng, 4);
    TwoTimeDecomposition du = decompose_two_time(u);
    CHECK(std::abs(du.r - 1.0) < 1e-12);
    for (double a : du.a) CHECK(std::abs(a - 1.0) < 1e-12);
    CHECK(dist(du.reconstruct(), u) < 1e-10);

    CHECK_THROWS_AS(decompose_two_time(CMatrix(3, 3)), ZeroOperator);

    // zero columns keep a well-defined unit vector
    CMatrix partial(2, 2);
    partial.at(0, 0) = 2.0;
    TwoTimeDecomposition dp = decompose_two_time(partial);
    CHECK(dp.a[1] == 0.0);
    CHECK(std::abs(dp.psi[1][1] - 1.0) < 1e-14);
    CHECK(dist(dp.reconstruct(), partial) < 1e-10);

    // max coefficient is 1 whenever the operator is nonzero
    for (int it = 0; it < 5; ++it) {
        CMatrix m = random_matrix(rng, 3, 3);
        TwoTimeDecomposition dm = decompose_two_time(m);
        double mx = 0.0;
        for (double a : dm.a) mx = std::max(mx, a);
        CHECK(std::abs(mx - 1.0) < 1e-12);
        CHECK(dist(dm.reconstruct(), m) < 1e-9);
    }
}

TEST_CASE("appendix identity: Tr_Q(U_i)|i> = 2 a_i |psi_i>") {
    Rng rng(2);
    for (std::size_t d : {2, 3, 5}) {
        CMatrix c = random_matrix(rng, d, d);
        TwoTimeDecomposition dec = decompose_two_time(c);
        auto us = two_pctc_unitaries(dec);
        REQUIRE(us.size() == d);
        for (std::size_t i = 0; i < d; ++i) {
            CHECK(dist(us[i].dagger() * us[i], CMatrix::identity(2 * d)) < 1e-10);
            CMatrix tr = partial_trace(us[i], DimList({d, 2}), {1});
            CMatrix ei(d, 1);
            ei.at(i, 0) = 1.0;
            CMatrix got = tr * ei;
            CMatrix expect = CMatrix::column(dec.psi[i]) * (2.0 * dec.a[i]);
            CHECK(dist(got, expect) < 1e-10);
        }
    }

    // the displayed matrix for C = diag(a0, 1) at d = 2: Tr_Q(C_V0) = 2 diag(a0, 1)
    const double a0 = 0.3;
    TwoTimeDecomposition dec = decompose_two_time(CMatrix::diag({a0, 1.0}));
    auto us = two_pctc_unitaries(dec);
    CMatrix tr0 = partial_trace(us[0], DimList({2, 2}), {1});
    CHECK(dist(tr0, CMatrix::diag({2.0 * a0, 2.0})) < 1e-12);
}

TEST_CASE("two-P-CTC construction realizes the operator") {
    Rng rng(3);
    for (std::size_t d : {2, 3, 4}) {
        CMatrix c = random_matrix(rng, d, d);
        TwoTimeDecomposition dec = decompose_two_time(c);
        ConstructionPlan plan = build_two_pctc_construction(dec);
        CHECK(plan.ctc_count == 2);
        CHECK(plan.ctc_dims == std::vector<std::size_t>{d, 2});

        CMatrix eval = eval_plan_pure(plan);
        CHECK(dist(eval, c * plan.claimed_constant) < 1e-9);
    }

    // rank-one target at d = 3
    Rng rng2(4);
    auto psi = random_state(rng2, 3);
    CMatrix rank1(3, 3);
    for (std::size_t r = 0; r < 3; ++r) rank1.at(r, 0) = psi[r];
    ConstructionPlan plan = build_two_pctc_construction(decompose_two_time(rank1));
    CHECK(dist(eval_plan_pure(plan), rank1 * plan.claimed_constant) < 1e-9);
}

TEST_CASE("equalize_basis") {
    // |0><0| at d = 2: theta* = pi/4 rotates onto the |+>/|-> bra pair
    CMatrix proj(2, 2);
    proj.at(0, 0) = 1.0;
    TwoTimeDecomposition dec = equalize_basis(decompose_two_time(proj));
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    for (double a : dec.a) CHECK(std::abs(a - inv_sqrt2) < 1e-10);
    CHECK(std::abs(std::abs(dec.basis[0][0]) - inv_sqrt2) < 1e-10);
    CHECK(std::abs(std::abs(dec.basis[0][1]) - inv_sqrt2) < 1e-10);
    CHECK(dist(dec.reconstruct(), proj) < 1e-10);

    // already equalized input returns unchanged
    Rng rng(5);
    CMatrix u = random_unitary(rng, 3);
    TwoTimeDecomposition du = decompose_two_time(u);
    TwoTimeDecomposition eq = equalize_basis(du);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t k = 0; k < 3; ++k)
            CHECK(std::abs(eq.basis[i][k] - du.basis[i][k]) < 1e-14);

    // random operators at d = 5: magnitudes, orthonormality, reconstruction
    for (int it = 0; it < 5; ++it) {
        CMatrix m = random_matrix(rng, 5, 5);
        TwoTimeDecomposition d5 = equalize_basis(decompose_two_time(m));
        const double target = 1.0 / std::sqrt(5.0);
        for (double a : d5.a) CHECK(std::abs(a - target) < 1e-10);
        for (std::size_t i = 0; i < 5; ++i)
            for (std::size_t j = 0; j < 5; ++j) {
                cplx g = 0.0;
                for (std::size_t k = 0; k < 5; ++k)
                    g += std::conj(d5.basis[i][k]) * d5.basis[j][k];
                CHECK(std::abs(g - (i == j ? 1.0 : 0.0)) < 1e-10);
            }
        CHECK(dist(d5.reconstruct(), m) < 1e-9);
    }
}

TEST_CASE("single-P-CTC construction realizes the operator") {
    Rng rng(6);
    CMatrix proj(2, 2);
    proj.at(0, 0) = 1.0;
    ConstructionPlan p1 =
        build_single_pctc_construction(equalize_basis(decompose_two_time(proj)));
    CHECK(p1.ctc_count == 1);
    CHECK(p1.ctc_dims == std::vector<std::size_t>{2});
    CHECK(dist(eval_plan_pure(p1), proj * p1.claimed_constant) < 1e-9);

    CMatrix u = random_unitary(rng, 3);
    ConstructionPlan p2 = build_single_pctc_construction(equalize_basis(decompose_two_time(u)));
    CHECK(dist(eval_plan_pure(p2), u * p2.claimed_constant) < 1e-9);

    CHECK_THROWS_AS(
        build_single_pctc_construction(decompose_two_time(CMatrix::diag({1.0, 0.2}))),
        NotEqualized);

    for (std::size_t d : {2, 3, 4}) {
        CMatrix m = random_matrix(rng, d, d);
        ConstructionPlan p =
            build_single_pctc_construction(equalize_basis(decompose_two_time(m)));
        CHECK(p.ctc_dims == std::vector<std::size_t>{d});
        CHECK(dist(eval_plan_pure(p), m * p.claimed_constant) < 1e-9);
    }
}

TEST_CASE("encode_multisystem") {
    Rng rng(7);
    // two qubits on each side
    CMatrix c = random_matrix(rng, 4, 4);
    ConstructionPlan plan = encode_multisystem(c, {2, 2}, {2, 2});
    CHECK(plan.ctc_dims == std::vector<std::size_t>{4});
    PureBlock b = evaluate_circuit_pure(plan.circuit);
    CHECK(b.ins.size() == 2);
    CHECK(b.outs.size() == 2);
    CHECK(dist(b.matrix, c * plan.claimed_constant) < 1e-9);

    // rectangular: 2-dim input side embedded into 4
    CMatrix r = random_matrix(rng, 4, 2);
    ConstructionPlan plan2 = encode_multisystem(r, {2}, {4});
    CHECK(plan2.ctc_dims == std::vector<std::size_t>{4});
    CHECK(dist(evaluate_circuit_pure(plan2.circuit).matrix, r * plan2.claimed_constant) < 1e-9);

    CMatrix r2 = random_matrix(rng, 2, 4);
    ConstructionPlan plan3 = encode_multisystem(r2, {4}, {2});
    CHECK(plan3.ctc_dims == std::vector<std::size_t>{4});
    CHECK(dist(evaluate_circuit_pure(plan3.circuit).matrix, r2 * plan3.claimed_constant) < 1e-9);

    // single system both sides reduces to the single-P-CTC construction
    CMatrix s = random_matrix(rng, 3, 3);
    ConstructionPlan plan4 = encode_multisystem(s, {3}, {3});
    CHECK(plan4.ctc_dims == std::vector<std::size_t>{3});
    CHECK(dist(evaluate_circuit_pure(plan4.circuit).matrix, s * plan4.claimed_constant) < 1e-9);

    // the comb member realizes the same map as a CP operator
    ChoiOperator comb_eval = pctc_comb_choi(plan4.comb);
    ChoiOperator pure_choi = choi_of_map({s}, {{"in0", 3, Role::In}}, {{"out0", 3, Role::Out}});
    std::vector<std::size_t> order;
    for (const auto& sys : pure_choi.systems)
        for (std::size_t k = 0; k < comb_eval.systems.size(); ++k)
            if (comb_eval.systems[k].label == sys.label) order.push_back(k);
    auto ratio = proportionality(comb_eval.permuted(order).matrix, pure_choi.matrix, 1e-9);
    REQUIRE(ratio.has_value());
    CHECK(std::abs(*ratio - std::norm(plan4.claimed_constant)) < 1e-10);
}

TEST_CASE("partition_spaces") {
    MtSpace two_ts({{SpaceLabel{"F", Rational(0), Direction::Forward, false}, 2},
                    {SpaceLabel{"B", Rational(1), Direction::Backward, false}, 2}});
    SpacePartition p = partition_spaces(two_ts);
    CHECK(p.b2.size() == 1);
    CHECK(p.f1.size() == 1);
    CHECK(p.b1.empty());
    CHECK(p.f2.empty());

    MtSpace two_to({{SpaceLabel{"B", Rational(0), Direction::Backward, false}, 2},
                    {SpaceLabel{"F", Rational(1), Direction::Forward, false}, 2}});
    SpacePartition q = partition_spaces(two_to);
    CHECK(q.b1.size() == 1);
    CHECK(q.f2.size() == 1);
    CHECK(q.b2.empty());
    CHECK(q.f1.empty());

    MtSpace mixed({{SpaceLabel{"S1", Rational(0), Direction::Forward, false}, 2},
                   {SpaceLabel{"S2", Rational(1), Direction::Backward, false}, 2},
                   {SpaceLabel{"S3", Rational(2), Direction::Backward, false}, 2},
                   {SpaceLabel{"S4", Rational(3), Direction::Backward, false}, 2}});
    SpacePartition r = partition_spaces(mixed);
    CHECK(r.b2.size() == 3);
    CHECK(r.f1.size() == 1);
}

namespace {

PctcComb bare_ctc_wire_comb(std::size_t d) {
    // a single CTC wire exposed at two times: output A1 at t0, input A2 at t1
    Tooth t1;
    t1.choi = choi_of_map({CMatrix::identity(d)}, {{"ctc.past", d, Role::In}},
                          {{"A1", d, Role::Out}});
    t1.time_in = Rational(-1);
    t1.time_out = Rational(0);
    Tooth t2;
    t2.choi = choi_of_map({CMatrix::identity(d)}, {{"A2", d, Role::In}},
                          {{"m", d, Role::Out}});
    t2.mem_out = {"m"};
    t2.time_in = Rational(1);
    t2.time_out = Rational(2);
    Tooth t3;
    t3.choi = choi_of_map({CMatrix::identity(d)}, {{"m", d, Role::In}},
                          {{"ctc.fut", d, Role::Out}});
    t3.mem_in = {"m"};
    t3.time_in = Rational(3);
    t3.time_out = Rational(4);
    PctcComb pc = pctc_assist_comb(build_comb({t1, t2, t3}), {{"ctc.fut", "ctc.past"}});
    pc.time_labelled = true;
    return pc;
}

}  // namespace

TEST_CASE("pctc_comb_to_mts fixtures") {
    // a bare CTC wire is the maximally entangled two-time state
    for (std::size_t d : {2, 3}) {
        MtDensityVector eta = pctc_comb_to_mts(bare_ctc_wire_comb(d));
        REQUIRE(eta.space.size() == 2);
        CHECK(eta.space.factors[0].label.system == "A1");
        CHECK(eta.space.factors[0].label.direction == Direction::Forward);
        CHECK(eta.space.factors[1].label.system == "A2");
        CHECK(eta.space.factors[1].label.direction == Direction::Backward);

        std::vector<cplx> coeffs(d * d, cplx(0.0));
        for (std::size_t i = 0; i < d; ++i) coeffs[i * d + i] = 1.0;
        MtDensityVector expect = MtDensityVector::pure(MtVector(eta.space, coeffs));
        auto ratio = op_equivalent(eta, expect, 1e-9);
        REQUIRE(ratio.has_value());
        CHECK(std::abs(*ratio) > 0.0);
    }

    // a CTC-free identity-channel comb is the identity two-time operator
    Tooth t;
    t.choi = choi_of_map({CMatrix::identity(2)}, {{"X", 2, Role::In}}, {{"Y", 2, Role::Out}});
    t.time_in = Rational(0);
    t.time_out = Rational(1);
    PctcComb pc = pctc_assist_comb(build_comb({t}), {});
    pc.time_labelled = true;
    MtDensityVector eta = pctc_comb_to_mts(pc);
    MtDensityVector expect = MtDensityVector::pure(
        mt_kraus("Y", Rational(1), "X", Rational(0), CMatrix::identity(2)));
    auto ratio = op_equivalent(eta, expect, 1e-9);
    REQUIRE(ratio.has_value());

    PctcComb unlabeled = pc;
    unlabeled.time_labelled = false;
    CHECK_THROWS_AS(pctc_comb_to_mts(unlabeled), MissingTimeLabels);
}

TEST_CASE("mts_to_pctc_comb on a 2TO uses only the realization CTC") {
    Rng rng(8);
    CMatrix c = random_matrix(rng, 2, 2);
    MtVector psi = mt_kraus("F", Rational(1), "B", Rational(0), c);
    MtDensityVector eta = MtDensityVector::pure(psi);

    ConstructionPlan plan = mts_to_pctc_comb(eta, Strategy::Auto);
    CHECK(plan.ctc_count == 1);
    CHECK(plan.ctc_dims == std::vector<std::size_t>{2});

    MtDensityVector back = pctc_comb_to_mts(plan.comb);
    REQUIRE(back.space == eta.space);
    auto ratio = op_equivalent(back, eta, 1e-8);
    REQUIRE(ratio.has_value());
    CHECK(std::abs(*ratio - plan.claimed_constant) <
          1e-9 * std::max(1.0, std::abs(plan.claimed_constant)));
}

TEST_CASE("mts_to_pctc_comb on a 2TS teleports one system") {
    Rng rng(9);
    CMatrix c = random_matrix(rng, 2, 2);
    // 2TS: forward F at time 0, backward B at time 1
    MtSpace space({{SpaceLabel{"F", Rational(0), Direction::Forward, false}, 2},
                   {SpaceLabel{"B", Rational(1), Direction::Backward, false}, 2}});
    std::vector<cplx> coeffs(4);
    const bool b_first = space.factors[0].label.system == "B";
    for (std::size_t f = 0; f < 2; ++f)
        for (std::size_t b = 0; b < 2; ++b)
            coeffs[b_first ? b * 2 + f : f * 2 + b] = c.at(f, b);
    MtDensityVector eta = MtDensityVector::pure(MtVector(space, coeffs));

    for (Strategy strat : {Strategy::UseF1, Strategy::UseB2, Strategy::Auto}) {
        ConstructionPlan plan = mts_to_pctc_comb(eta, strat);
        CHECK(plan.ctc_count == 2);

        MtDensityVector back = pctc_comb_to_mts(plan.comb);
        REQUIRE(back.space == eta.space);
        auto ratio = op_equivalent(back, eta, 1e-8);
        REQUIRE(ratio.has_value());

        for (int it = 0; it < 3; ++it) {
            Instrument ins = random_instrument(rng, {{"F", 2, Role::In}},
                                               {{"B", 2, Role::Out}}, 2);
            auto t_comb = comb_probability(plan.comb, ChoiOperator(), {ins});
            auto t_mts = mts_probability(eta, ChoiOperator(), {ins});
            REQUIRE(t_comb.probabilities.size() == t_mts.probabilities.size());
            for (std::size_t k = 0; k < t_comb.probabilities.size(); ++k)
                CHECK(std::abs(t_comb.probabilities[k] - t_mts.probabilities[k]) < 1e-8);
        }
    }
}

TEST_CASE("mixed mts_to_pctc_comb reweights terms per the construction constants") {
    Rng rng(10);
    for (std::size_t d : {2, 3}) {
        MtSpace space({{SpaceLabel{"B", Rational(0), Direction::Backward, false}, d},
                       {SpaceLabel{"F", Rational(1), Direction::Forward, false}, d}});
        auto term_vec = [&](const CMatrix& c) {
            std::vector<cplx> coeffs(d * d);
            const bool b_first = space.factors[0].label.system == "B";
            REQUIRE(b_first);
            for (std::size_t b = 0; b < d; ++b)
                for (std::size_t f = 0; f < d; ++f) coeffs[b * d + f] = c.at(f, b);
            return MtVector(space, coeffs);
        };
        CMatrix c1 = random_matrix(rng, d, d);
        CMatrix c2 = random_matrix(rng, d, d) * 2.5;
        std::vector<std::pair<double, MtVector>> terms = {{0.3, term_vec(c1)},
                                                          {0.7, term_vec(c2)}};
        ConstructionPlan plan = mts_to_pctc_comb_terms(space, terms, Strategy::Auto);

        REQUIRE(plan.term_constants.size() == 2);
        double norm_sum = 0.0;
        for (std::size_t r = 0; r < 2; ++r)
            norm_sum += plan.term_weights[r] * std::norm(plan.term_constants[r]);
        for (std::size_t r = 0; r < 2; ++r) {
            const double expect =
                plan.term_weights[r] * std::norm(plan.term_constants[r]) / norm_sum;
            CHECK(std::abs(plan.term_reweights[r] - expect) < 1e-12);
        }

        MtDensityVector eta(space, CMatrix(d * d, d * d));
        eta.op += MtDensityVector::pure(terms[0].second).op * 0.3;
        eta.op += MtDensityVector::pure(terms[1].second).op * 0.7;
        MtDensityVector back = pctc_comb_to_mts(plan.comb);
        REQUIRE(back.space == eta.space);
        auto ratio = op_equivalent(back, eta, 1e-9);
        REQUIRE(ratio.has_value());
        CHECK(std::abs(*ratio - plan.claimed_constant) <
              1e-9 * std::max(1.0, std::abs(plan.claimed_constant)));
    }
}

TEST_CASE("round trip: comb -> MTS -> comb preserves the statistics") {
    Rng rng(11);
    for (int it = 0; it < 3; ++it) {
        RandomCombSpec spec;
        spec.slots = 1;
        spec.ctc_wires = it % 2;
        PctcComb original = random_pctc_comb(rng, spec);

        MtDensityVector eta = pctc_comb_to_mts(original);
        ConstructionPlan plan = mts_to_pctc_comb(eta, Strategy::Auto);

        for (int jt = 0; jt < 3; ++jt) {
            Instrument ins =
                random_instrument(rng, {{"s1", 2, Role::In}}, {{"s2", 2, Role::Out}}, 2);
            ChoiOperator rho0 = choi_state("gp0", random_density(rng, 2));
            auto t_orig = comb_probability(original, rho0, {ins});
            auto t_new = comb_probability(plan.comb, rho0, {ins});
            auto t_mts = mts_probability(eta, rho0, {ins});
            REQUIRE(t_orig.probabilities.size() == t_new.probabilities.size());
            for (std::size_t k = 0; k < t_orig.probabilities.size(); ++k) {
                CHECK(std::abs(t_orig.probabilities[k] - t_new.probabilities[k]) < 1e-8);
                CHECK(std::abs(t_orig.probabilities[k] - t_mts.probabilities[k]) < 1e-8);
            }
        }
    }
}
