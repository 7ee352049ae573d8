#include <cmath>

#include "qmts/bridge.hpp"
#include "qmts/cli.hpp"
#include "qmts/order.hpp"
#include "qmts/serialize.hpp"

namespace qmts {

namespace {

double dist(const CMatrix& a, const CMatrix& b) { return (a - b).frobenius_norm(); }

// each suite returns its worst residual over the seeded instances

double suite_linalg_kron_trace(Rng& rng, std::size_t dmax, std::size_t iters) {
    double worst = 0.0;
    for (std::size_t it = 0; it < iters; ++it) {
        const std::size_t da = 2 + rng.below(dmax - 1);
        const std::size_t db = 2 + rng.below(dmax - 1);
        CMatrix a = random_matrix(rng, da, da);
        CMatrix b = random_matrix(rng, db, db);
        CMatrix got = partial_trace(kron(a, b), DimList({da, db}), {1});
        worst = std::max(worst, dist(got, a * b.trace()));
    }
    return worst;
}

double suite_linalg_partial_transpose(Rng& rng, std::size_t dmax, std::size_t iters) {
    double worst = 0.0;
    for (std::size_t it = 0; it < iters; ++it) {
        const std::size_t da = 2 + rng.below(dmax - 1);
        const std::size_t db = 2 + rng.below(dmax - 1);
        CMatrix m = random_matrix(rng, da * db, da * db);
        CMatrix twice =
            partial_transpose(partial_transpose(m, DimList({da, db}), 0), DimList({da, db}), 0);
        worst = std::max(worst, dist(twice, m));
        worst = std::max(worst,
                         std::abs(partial_transpose(m, DimList({da, db}), 1).trace() - m.trace()));
    }
    return worst;
}

double suite_linalg_complete_unitary(Rng& rng, std::size_t dmax, std::size_t iters) {
    double worst = 0.0;
    for (std::size_t it = 0; it < iters; ++it) {
        const std::size_t d = 2 + rng.below(dmax - 1);
        auto col = random_state(rng, d);
        CMatrix u = complete_unitary(col, rng.below(d), d);
        worst = std::max(worst, dist(u.dagger() * u, CMatrix::identity(d)));
    }
    return worst;
}

double suite_linalg_proportionality(Rng& rng, std::size_t dmax, std::size_t iters) {
    double worst = 0.0;
    for (std::size_t it = 0; it < iters; ++it) {
        const std::size_t d = 2 + rng.below(dmax - 1);
        CMatrix m = random_matrix(rng, d, d);
        const cplx k(rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0));
        auto forward = proportionality(m * k, m, 1e-9);
        auto backward = proportionality(m, m * k, 1e-9);
        if (!forward || !backward) return 1.0;
        worst = std::max(worst, std::abs(*forward - k));
        worst = std::max(worst, std::abs(*forward * *backward - 1.0));
    }
    return worst;
}

MtVector random_two_time(Rng& rng, const std::string& out_sys, const Rational& t_out,
                         const std::string& in_sys, const Rational& t_in, std::size_t d) {
    MtSpace s({{SpaceLabel{out_sys, t_out, Direction::Forward, false}, d},
               {SpaceLabel{in_sys, t_in, Direction::Backward, false}, d}});
    std::vector<cplx> c(d * d);
    for (auto& z : c) z = rng.cnormal();
    return MtVector(s, c);
}

double suite_mts_compose_commutative(Rng& rng, std::size_t dmax, std::size_t iters) {
    double worst = 0.0;
    for (std::size_t it = 0; it < iters; ++it) {
        const std::size_t d = 2 + rng.below(dmax - 1);
        MtVector a = random_two_time(rng, "B", Rational(1), "A", Rational(0), d);
        MtVector b = random_two_time(rng, "C", Rational(2), "B", Rational(1), d);
        MtVector ab = compose(a, b);
        MtVector ba = compose(b, a);
        for (std::size_t k = 0; k < ab.coeffs.size(); ++k)
            worst = std::max(worst, std::abs(ab.coeffs[k] - ba.coeffs[k]));
    }
    return worst;
}

double suite_mts_abl(Rng& rng, std::size_t dmax, std::size_t iters) {
    double worst = 0.0;
    for (std::size_t it = 0; it < iters; ++it) {
        const std::size_t d = 2 + rng.below(dmax - 1);
        auto pre = random_state(rng, d);
        auto post = random_state(rng, d);
        MtSpace pre_s({{SpaceLabel{"S", Rational(0), Direction::Forward, false}, d}});
        MtSpace post_s({{SpaceLabel{"S", Rational(1), Direction::Backward, false}, d}});
        std::vector<cplx> post_c(d);
        for (std::size_t k = 0; k < d; ++k) post_c[k] = std::conj(post[k]);
        MtVector psi = compose(MtVector(post_s, post_c), MtVector(pre_s, pre));

        auto kraus = random_kraus_cptp(rng, d, d, 3);
        MtInstrument ins;
        for (std::size_t k = 0; k < kraus.size(); ++k) {
            MtSpace ks({{SpaceLabel{"S", Rational(1), Direction::Forward, false}, d},
                        {SpaceLabel{"S", Rational(0), Direction::Backward, false}, d}});
            std::vector<cplx> kc(d * d);
            const bool out_first = ks.factors[0].label.direction == Direction::Forward;
            for (std::size_t o = 0; o < d; ++o)
                for (std::size_t i = 0; i < d; ++i)
                    kc[out_first ? o * d + i : i * d + o] = kraus[k].at(o, i);
            ins.outcomes.push_back(
                {std::to_string(k), MtDensityVector::pure(MtVector(ks, kc))});
        }
        auto t1 = abl_probability(MtDensityVector::pure(psi), ins);
        auto t2 = abl_probability(MtDensityVector::pure(psi * cplx(0.4, 0.9)), ins);
        double sum = 0.0;
        for (double p : t1.probabilities) sum += p;
        worst = std::max(worst, std::abs(sum - 1.0));
        for (std::size_t k = 0; k < t1.probabilities.size(); ++k)
            worst = std::max(worst, std::abs(t1.probabilities[k] - t2.probabilities[k]));
    }
    return worst;
}

double suite_mts_positivity(Rng& rng, std::size_t dmax, std::size_t iters) {
    for (std::size_t it = 0; it < iters; ++it) {
        const std::size_t d = 2 + rng.below(dmax - 1);
        MtVector u1 = random_two_time(rng, "B", Rational(1), "A", Rational(0), d);
        MtVector u2 = random_two_time(rng, "B", Rational(1), "A", Rational(0), d);
        MtDensityVector eta(u1.space, MtDensityVector::pure(u1).op * rng.uniform(0.1, 1.0) +
                                          MtDensityVector::pure(u2).op);
        MtVector v1 = random_two_time(rng, "C", Rational(2), "B", Rational(1), d);
        MtDensityVector lam = MtDensityVector::pure(v1);
        if (!is_positive(compose_density(eta, lam))) return 1.0;
        if (!is_positive(mt_partial_trace(
                eta, SpaceLabel{"B", Rational(1), Direction::Forward, false})))
            return 1.0;
    }
    return 0.0;
}

double suite_pctc_routes(Rng& rng, std::size_t dmax, std::size_t iters) {
    double worst = 0.0;
    for (std::size_t it = 0; it < iters; ++it) {
        const std::size_t ds = 2 + rng.below(dmax - 1);
        const std::size_t da = 2 + rng.below(dmax - 1);
        auto kraus = random_kraus_cptp(rng, ds * da, ds * da, 2);
        ChoiOperator e =
            choi_of_map(kraus, {{"S.in", ds, Role::In}, {"A.in", da, Role::In}},
                        {{"S.out", ds, Role::Out}, {"A.out", da, Role::Out}});
        worst = std::max(worst, dist(pctc_assist_map_kraus(e, "S", "A").matrix,
                                     pctc_assist_map_sandwich(e, "S", "A").matrix));
    }
    return worst;
}

double suite_pctc_order_independence(Rng& rng, std::size_t dmax, std::size_t iters) {
    double worst = 0.0;
    const std::size_t d = std::min<std::size_t>(dmax, 2);
    for (std::size_t it = 0; it < iters; ++it) {
        std::vector<ChoiOperator> ops;
        ops.push_back(choi_of_map(random_kraus_cptp(rng, d * d, d, 2), {{"a", d, Role::In}},
                                  {{"b", d, Role::Out}, {"c", d, Role::Out}}));
        ops.push_back(choi_of_map(random_kraus_cptp(rng, d, d, 2), {{"b", d, Role::In}},
                                  {{"e", d, Role::Out}}));
        ops.push_back(choi_of_map(random_kraus_cptp(rng, d, d * d, 2),
                                  {{"c", d, Role::In}, {"e", d, Role::In}},
                                  {{"f", d, Role::Out}}));
        ChoiOperator left = link(link(ops[0], ops[1]), ops[2]);
        ChoiOperator right = link(ops[0], link(ops[1], ops[2]));
        ChoiOperator greedy = link_all_greedy(ops);
        std::vector<std::size_t> order1, order2;
        for (const auto& s : left.systems) {
            for (std::size_t k = 0; k < right.systems.size(); ++k)
                if (right.systems[k].label == s.label) order1.push_back(k);
            for (std::size_t k = 0; k < greedy.systems.size(); ++k)
                if (greedy.systems[k].label == s.label) order2.push_back(k);
        }
        worst = std::max(worst, dist(left.matrix, right.permuted(order1).matrix));
        worst = std::max(worst, dist(left.matrix, greedy.permuted(order2).matrix));
    }
    return worst;
}

double suite_comb_denominator(Rng& rng, std::size_t dmax, std::size_t iters) {
    double worst = 0.0;
    for (std::size_t it = 0; it < iters; ++it) {
        RandomCombSpec spec;
        spec.slots = 1 + rng.below(2);
        spec.wire_dim = 2 + rng.below(std::max<std::size_t>(dmax - 1, 1));
        spec.ctc_wires = 0;
        PctcComb pc = random_pctc_comb(rng, spec);
        std::vector<Instrument> instruments;
        for (std::size_t j = 0; j < spec.slots; ++j)
            instruments.push_back(random_instrument(
                rng, {{"s" + std::to_string(2 * j + 1), spec.wire_dim, Role::In}},
                {{"s" + std::to_string(2 * j + 2), spec.wire_dim, Role::Out}}, 2));
        ChoiOperator rho0 = choi_state("gp0", random_density(rng, spec.wire_dim));
        auto table = comb_probability(pc, rho0, instruments);
        worst = std::max(worst, std::abs(table.denominator - 1.0));
    }
    return worst;
}

double suite_bridge_two_pctc(Rng& rng, std::size_t dmax, std::size_t iters) {
    double worst = 0.0;
    for (std::size_t it = 0; it < iters; ++it) {
        const std::size_t d = 2 + rng.below(dmax - 1);
        TwoTimeDecomposition dec = decompose_two_time(random_matrix(rng, d, d));
        auto us = two_pctc_unitaries(dec);
        for (std::size_t i = 0; i < d; ++i) {
            CMatrix tr = partial_trace(us[i], DimList({d, 2}), {1});
            CMatrix ei(d, 1);
            ei.at(i, 0) = 1.0;
            worst = std::max(
                worst, dist(tr * ei, CMatrix::column(dec.psi[i]) * (2.0 * dec.a[i])));
        }
    }
    return worst;
}

double suite_bridge_single_pctc(Rng& rng, std::size_t dmax, std::size_t iters) {
    double worst = 0.0;
    for (std::size_t it = 0; it < iters; ++it) {
        const std::size_t d = 2 + rng.below(dmax - 1);
        CMatrix c = random_matrix(rng, d, d);
        ConstructionPlan plan =
            build_single_pctc_construction(equalize_basis(decompose_two_time(c)));
        PureBlock b = evaluate_circuit_pure(plan.circuit);
        worst = std::max(worst, dist(b.matrix, c * plan.claimed_constant));
    }
    return worst;
}

double suite_bridge_round_trip(Rng& rng, std::size_t iters) {
    double worst = 0.0;
    for (std::size_t it = 0; it < iters; ++it) {
        RandomCombSpec spec;
        spec.slots = 1;
        spec.ctc_wires = it % 2;
        PctcComb original = random_pctc_comb(rng, spec);
        MtDensityVector eta = pctc_comb_to_mts(original);
        ConstructionPlan plan = mts_to_pctc_comb(eta, Strategy::Auto);
        Instrument ins =
            random_instrument(rng, {{"s1", 2, Role::In}}, {{"s2", 2, Role::Out}}, 2);
        ChoiOperator rho0 = choi_state("gp0", random_density(rng, 2));
        auto t_orig = comb_probability(original, rho0, {ins});
        auto t_new = comb_probability(plan.comb, rho0, {ins});
        for (std::size_t k = 0; k < t_orig.probabilities.size(); ++k)
            worst = std::max(worst,
                             std::abs(t_orig.probabilities[k] - t_new.probabilities[k]));
    }
    return worst;
}

double suite_order_relations(Rng& rng, std::size_t iters) {
    for (std::size_t it = 0; it < iters; ++it) {
        const std::size_t n = 2 + rng.below(3);
        OrderProfile p;
        std::vector<int> ra, rb;
        for (std::size_t k = 0; k < n; ++k) {
            const Direction dir = rng.below(2) ? Direction::Forward : Direction::Backward;
            const int ta = int(rng.below(3));
            const int tb = int(rng.below(3));
            p.systems.push_back(
                {"S" + std::to_string(k), dir, 2, Rational(ta), Rational(tb)});
            ra.push_back(ta);
            rb.push_back(tb);
        }
        p.order_a = ra;
        p.order_b = rb;
        OrderVerdict ab = decide_order(p);
        OrderProfile q = p;
        std::swap(q.order_a, q.order_b);
        for (auto& e : q.systems) std::swap(e.time_a, e.time_b);
        OrderVerdict ba = decide_order(q);
        const auto mirror = [](OrderRelation r) {
            if (r == OrderRelation::StrictlyAbove) return OrderRelation::StrictlyBelow;
            if (r == OrderRelation::StrictlyBelow) return OrderRelation::StrictlyAbove;
            return r;
        };
        if (ba.relation != mirror(ab.relation)) return 1.0;
        // reflexivity
        OrderProfile r = p;
        r.order_b = r.order_a;
        for (auto& e : r.systems) e.time_b = e.time_a;
        if (decide_order(r).relation != OrderRelation::Equal) return 1.0;
        // witnesses replay cleanly; a StrictlyBelow witness starts from b
        if (ab.witness) {
            const bool from_a = ab.relation != OrderRelation::StrictlyBelow;
            std::vector<MtSpace::Factor> f;
            for (std::size_t k = 0; k < n; ++k)
                f.push_back({SpaceLabel{p.systems[k].system,
                                        from_a ? p.systems[k].time_a : p.systems[k].time_b,
                                        p.systems[k].direction, false},
                             2});
            try {
                replay_witness(MtSpace(f), *ab.witness);
            } catch (const Error&) {
                return 1.0;
            }
        }
    }
    return 0.0;
}

bool corrupted_choi_detected(Rng& rng, bool inject_failure) {
    auto kraus = random_kraus_cptp(rng, 2, 2, 2);
    ChoiOperator good = choi_of_map(kraus, {{"I", 2, Role::In}}, {{"O", 2, Role::Out}});
    ChoiOperator bad = good;
    // knock an eigenvalue negative
    bad.matrix = bad.matrix - CMatrix::identity(4) * (min_eigenvalue(bad.matrix) + 0.5);
    bad.matrix = bad.matrix * -1.0;
    if (inject_failure) return bad.is_cp(1e-9);  // wrong on purpose: reports the violation
    return good.is_cp(1e-9) && !bad.is_cp(1e-9);
}

}  // namespace

Report cmd_selftest(const SelftestOptions& opt) {
    Report rep;
    rep.command = "selftest --seed " + std::to_string(opt.seed) + " --max-dim " +
                  std::to_string(opt.max_dim);
    rep.results["seed"] = opt.seed;
    rep.results["max_dim"] = opt.max_dim;
    rep.results["iterations"] = opt.iterations;

    const std::size_t dmax = std::max<std::size_t>(opt.max_dim, 2);
    const std::size_t iters = std::max<std::size_t>(opt.iterations, 1);

    struct Suite {
        const char* name;
        double tolerance;
        double residual;
    };
    std::vector<Suite> suites;
    {
        Rng rng(opt.seed * 1000 + 1);
        suites.push_back({"linalg.partial_trace_of_kron", 1e-10,
                          suite_linalg_kron_trace(rng, dmax, iters)});
    }
    {
        Rng rng(opt.seed * 1000 + 2);
        suites.push_back({"linalg.partial_transpose_involution", 1e-10,
                          suite_linalg_partial_transpose(rng, dmax, iters)});
    }
    {
        Rng rng(opt.seed * 1000 + 3);
        suites.push_back({"linalg.complete_unitary_unitarity", 1e-9,
                          suite_linalg_complete_unitary(rng, dmax, iters)});
    }
    {
        Rng rng(opt.seed * 1000 + 4);
        suites.push_back({"linalg.proportionality_inverse", 1e-9,
                          suite_linalg_proportionality(rng, dmax, iters)});
    }
    {
        Rng rng(opt.seed * 1000 + 5);
        suites.push_back({"mts.compose_commutative", 1e-11,
                          suite_mts_compose_commutative(rng, dmax, iters)});
    }
    {
        Rng rng(opt.seed * 1000 + 6);
        suites.push_back({"mts.abl_normalized_and_scale_invariant", 1e-10,
                          suite_mts_abl(rng, dmax, iters)});
    }
    {
        Rng rng(opt.seed * 1000 + 7);
        suites.push_back({"mts.positivity_preserved", 0.5,
                          suite_mts_positivity(rng, dmax, iters)});
    }
    {
        Rng rng(opt.seed * 1000 + 8);
        suites.push_back({"pctc.map_routes_agree", 1e-9,
                          suite_pctc_routes(rng, std::min<std::size_t>(dmax, 3), iters)});
    }
    {
        Rng rng(opt.seed * 1000 + 9);
        suites.push_back({"pctc.link_order_independence", 1e-9,
                          suite_pctc_order_independence(rng, dmax, iters)});
    }
    {
        Rng rng(opt.seed * 1000 + 10);
        suites.push_back({"pctc.ctc_free_denominator", 1e-8,
                          suite_comb_denominator(rng, std::min<std::size_t>(dmax, 3),
                                                 std::max<std::size_t>(iters / 2, 1))});
    }
    {
        Rng rng(opt.seed * 1000 + 11);
        suites.push_back({"bridge.two_pctc_identity", 1e-10,
                          suite_bridge_two_pctc(rng, dmax, iters)});
    }
    {
        Rng rng(opt.seed * 1000 + 12);
        suites.push_back({"bridge.single_pctc_evaluation", 1e-9,
                          suite_bridge_single_pctc(rng, dmax, iters)});
    }
    {
        Rng rng(opt.seed * 1000 + 13);
        suites.push_back({"bridge.round_trip_statistics", 1e-8,
                          suite_bridge_round_trip(rng, std::max<std::size_t>(iters / 2, 1))});
    }
    {
        Rng rng(opt.seed * 1000 + 14);
        suites.push_back({"order.relations_and_witnesses", 0.5,
                          suite_order_relations(rng, iters * 2)});
    }
    for (const auto& s : suites) rep.add_check(s.name, s.tolerance, s.residual);

    {
        Rng rng(opt.seed * 1000 + 15);
        if (opt.inject_failure) {
            rep.add_verdict("choi.complete_positivity", corrupted_choi_detected(rng, true),
                            "injected corrupted Choi operator: complete positivity violated");
        } else {
            rep.add_verdict("choi.corruption_detected", corrupted_choi_detected(rng, false),
                            "corrupted Choi operator rejected by the CP check");
        }
    }
    return rep;
}

}  // namespace qmts
