#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "qmts/comb.hpp"

using namespace qmts;
using namespace qmts::test;

namespace {

double dist(const CMatrix& a, const CMatrix& b) { return (a - b).frobenius_norm(); }

Tooth identity_tooth(const std::vector<ChoiOperator::System>& ins,
                     const std::vector<ChoiOperator::System>& outs,
                     std::vector<std::string> mem_in = {},
                     std::vector<std::string> mem_out = {}) {
    std::size_t d_in = 1, d_out = 1;
    for (const auto& s : ins) d_in *= s.dim;
    for (const auto& s : outs) d_out *= s.dim;
    REQUIRE(d_in == d_out);
    Tooth t;
    t.choi = choi_of_map({CMatrix::identity(d_in)}, ins, outs);
    t.mem_in = std::move(mem_in);
    t.mem_out = std::move(mem_out);
    return t;
}

}  // namespace

TEST_CASE("single tooth comb is that map") {
    Rng rng(1);
    auto kraus = random_kraus_cptp(rng, 2, 2, 2);
    Tooth t;
    t.choi = choi_of_map(kraus, {{"s0", 2, Role::In}}, {{"s1", 2, Role::Out}});
    Comb c = build_comb({t});
    CHECK(c.slot_count() == 0);
    CHECK(dist(comb_choi(c).matrix, t.choi.matrix) < 1e-14);
}

TEST_CASE("two identity teeth route the input through the slot") {
    // tooth 1: input s0 -> slot output s1 with memory q; tooth 2: slot input
    // s2 with memory q -> output s3, wired so s0 passes to s1 and s2 to s3
    Tooth t1 = identity_tooth({{"s0", 2, Role::In}}, {{"s1", 2, Role::Out}, {"q", 1, Role::Out}},
                              {}, {"q"});
    Tooth t2 = identity_tooth({{"s2", 2, Role::In}, {"q", 1, Role::In}}, {{"s3", 2, Role::Out}},
                              {"q"}, {});
    Comb c = build_comb({t1, t2});
    CHECK(c.slot_count() == 1);
    ChoiOperator total = comb_choi(c);
    // plugging the identity into the slot gives the identity channel s0 -> s3
    ChoiOperator plug =
        choi_of_map({CMatrix::identity(2)}, {{"s1", 2, Role::In}}, {{"s2", 2, Role::Out}});
    ChoiOperator closed = link(total, plug);
    ChoiOperator expect =
        choi_of_map({CMatrix::identity(2)}, {{"s0", 2, Role::In}}, {{"s3", 2, Role::Out}});
    std::vector<std::size_t> order;
    for (const auto& s : expect.systems)
        for (std::size_t k = 0; k < closed.systems.size(); ++k)
            if (closed.systems[k].label == s.label) order.push_back(k);
    CHECK(dist(closed.permuted(order).matrix, expect.matrix) < 1e-13);
}

TEST_CASE("teeth with trivial memory give a product comb") {
    Rng rng(2);
    auto k1 = random_kraus_cptp(rng, 2, 2, 2);
    auto k2 = random_kraus_cptp(rng, 2, 2, 2);
    Tooth t1;
    t1.choi = choi_of_map(k1, {{"s0", 2, Role::In}}, {{"s1", 2, Role::Out}});
    Tooth t2;
    t2.choi = choi_of_map(k2, {{"s2", 2, Role::In}}, {{"s3", 2, Role::Out}});
    Comb c = build_comb({t1, t2});
    ChoiOperator total = comb_choi(c);
    ChoiOperator expect = link(t1.choi, t2.choi);  // disjoint: tensor product
    CHECK(dist(total.matrix, expect.matrix) < 1e-13);
}

TEST_CASE("comb validation errors") {
    Rng rng(3);
    // non trace preserving tooth
    Tooth bad;
    bad.choi = choi_of_map({CMatrix::identity(2) * 0.5}, {{"a", 2, Role::In}},
                           {{"b", 2, Role::Out}});
    CHECK_THROWS_AS(build_comb({bad}), NotTracePreserving);

    // broken memory chain
    Tooth t1 = identity_tooth({{"s0", 2, Role::In}}, {{"q1", 2, Role::Out}}, {}, {"q1"});
    Tooth t2 = identity_tooth({{"q2", 2, Role::In}}, {{"s1", 2, Role::Out}}, {"q2"}, {});
    CHECK_THROWS_AS(build_comb({t1, t2}), BrokenMemoryChain);
}

TEST_CASE("pctc assist comb validates endpoints and matches the map picture") {
    // comb = SWAP between S and A in one tooth, CTC on A
    Tooth t;
    t.choi = choi_of_map({swap2()}, {{"S.in", 2, Role::In}, {"A.past", 2, Role::In}},
                         {{"S.out", 2, Role::Out}, {"A.fut", 2, Role::Out}});
    Comb c = build_comb({t});

    PctcComb plain = pctc_assist_comb(c, {});
    CHECK(dist(pctc_comb_choi(plain).matrix, t.choi.matrix) < 1e-14);

    PctcComb looped = pctc_assist_comb(c, {{"A.fut", "A.past"}});
    ChoiOperator res = pctc_comb_choi(looped);
    // identity on S scaled by 1/d_A^2
    ChoiOperator id_choi = choi_of_map({CMatrix::identity(2)}, {{"S.in", 2, Role::In}},
                                       {{"S.out", 2, Role::Out}});
    std::vector<std::size_t> order;
    for (const auto& s : id_choi.systems)
        for (std::size_t k = 0; k < res.systems.size(); ++k)
            if (res.systems[k].label == s.label) order.push_back(k);
    CHECK(dist(res.permuted(order).matrix, id_choi.matrix * 0.25) < 1e-13);

    Tooth t3;
    t3.choi = choi_of_map({CMatrix::identity(6)},
                          {{"S.in", 2, Role::In}, {"A.past", 3, Role::In}},
                          {{"S.out", 3, Role::Out}, {"A.fut", 2, Role::Out}});
    Comb c3 = build_comb({t3});
    CHECK_THROWS_AS(pctc_assist_comb(c3, {{"A.fut", "A.past"}}), DimensionMismatch);
}

TEST_CASE("ctc-free comb probabilities are normalized before division") {
    Rng rng(4);
    for (int it = 0; it < 8; ++it) {
        RandomCombSpec spec;
        spec.slots = 1 + rng.below(2);
        spec.wire_dim = 2 + rng.below(2);
        spec.memory_dim = 2;
        spec.ctc_wires = 0;
        PctcComb pc = random_pctc_comb(rng, spec);

        std::vector<Instrument> instruments;
        for (std::size_t j = 0; j < spec.slots; ++j) {
            const std::string in_lbl = "s" + std::to_string(2 * j + 1);
            const std::string out_lbl = "s" + std::to_string(2 * j + 2);
            instruments.push_back(random_instrument(rng,
                                                    {{in_lbl, spec.wire_dim, Role::In}},
                                                    {{out_lbl, spec.wire_dim, Role::Out}}, 2));
        }
        ChoiOperator rho0 = choi_state("gp0", random_density(rng, spec.wire_dim));
        auto table = comb_probability(pc, rho0, instruments);
        CHECK(std::abs(table.denominator - 1.0) < 1e-8);
        double sum = 0.0;
        for (double p : table.probabilities) sum += p;
        CHECK(std::abs(sum - 1.0) < 1e-10);
    }
}

TEST_CASE("comb probability with a P-CTC keeps the table normalized") {
    Rng rng(5);
    RandomCombSpec spec;
    spec.slots = 1;
    spec.ctc_wires = 1;
    PctcComb pc = random_pctc_comb(rng, spec);
    std::vector<Instrument> instruments = {random_instrument(
        rng, {{"s1", 2, Role::In}}, {{"s2", 2, Role::Out}}, 2)};
    ChoiOperator rho0 = choi_state("gp0", random_density(rng, 2));
    auto table = comb_probability(pc, rho0, instruments);
    double sum = 0.0;
    for (double p : table.probabilities) sum += p;
    CHECK(std::abs(sum - 1.0) < 1e-10);
    CHECK(table.denominator > 0.0);
}

TEST_CASE("post-selected teleportation sends the state to the earlier wire") {
    Rng rng(6);
    for (std::size_t d : {2, 3}) {
        // teeth: CTC return A -> early output S'; late input S -> memory;
        // memory -> CTC launch
        Tooth t1 = identity_tooth({{"A.past", d, Role::In}},
                                  {{"Searly", d, Role::Out}, {"m0", 1, Role::Out}}, {}, {"m0"});
        Tooth t2 = identity_tooth({{"Slate", d, Role::In}, {"m0", 1, Role::In}},
                                  {{"m1", d, Role::Out}}, {"m0"}, {"m1"});
        Tooth t3 = identity_tooth({{"m1", d, Role::In}}, {{"A.fut", d, Role::Out}}, {"m1"}, {});
        PctcComb pc = pctc_assist_comb(build_comb({t1, t2, t3}), {{"A.fut", "A.past"}});

        auto psi = random_state(rng, d);
        CMatrix rho(d, d);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) rho.at(i, j) = psi[i] * std::conj(psi[j]);

        for (int it = 0; it < 3; ++it) {
            auto povm = random_povm(rng, d, 3);
            // the slot instrument measures the teleported early wire and
            // prepares the fresh state on the late wire
            Instrument ins;
            for (std::size_t a = 0; a < povm.size(); ++a) {
                // E_a(sigma) = Tr[M_a sigma] rho, Kraus {|psi><m| M_a^(1/2)}... use
                // the Choi directly: c = (M_a)^T ⊗ rho in (in, out) block form
                HermEig e = herm_eig(povm[a]);
                std::vector<CMatrix> kraus;
                for (std::size_t k = 0; k < e.eigenvalues.size(); ++k) {
                    if (e.eigenvalues[k] < 1e-14) continue;
                    CMatrix m(d, d);
                    for (std::size_t r = 0; r < d; ++r)
                        for (std::size_t c2 = 0; c2 < d; ++c2)
                            m.at(r, c2) = std::sqrt(e.eigenvalues[k]) * psi[r] *
                                          std::conj(e.eigenvectors.at(c2, k));
                    kraus.push_back(std::move(m));
                }
                ins.outcomes.push_back(
                    {std::to_string(a),
                     choi_of_map(kraus, {{"Searly", d, Role::In}},
                                 {{"Slate", d, Role::Out}})});
            }
            auto table = comb_probability(pc, ChoiOperator(), {ins});
            for (std::size_t a = 0; a < povm.size(); ++a) {
                const double born = (rho * povm[a]).trace().real();
                CHECK(std::abs(table.probabilities[a] - born) < 1e-10);
            }
        }
    }
}

TEST_CASE("absorbing a plugged comb preserves the composition") {
    Rng rng(7);
    // outer: 2 slots over qubit wires with memory
    RandomCombSpec ospec;
    ospec.slots = 2;
    ospec.ctc_wires = 0;
    PctcComb outer = random_pctc_comb(rng, ospec);

    SUBCASE("trivial plug passes through unchanged") {
        // memoriless CTC-free plugged comb
        auto slots = outer.base.slot_signature();
        std::vector<Tooth> teeth;
        for (const auto& slot : slots) {
            Tooth t;
            std::size_t d_in = 1, d_out = 1;
            std::vector<ChoiOperator::System> ins, outs;
            for (const auto& s : slot.ins) {
                ins.push_back({s.label, s.dim, Role::In});
                d_in *= s.dim;
            }
            for (const auto& s : slot.outs) {
                outs.push_back({s.label, s.dim, Role::Out});
                d_out *= s.dim;
            }
            auto kraus = random_kraus_cptp(rng, d_out, d_in, 2);
            t.choi = choi_of_map(kraus, ins, outs);
            teeth.push_back(std::move(t));
        }
        PctcComb plugged = pctc_assist_comb(build_comb(teeth), {});
        auto [cprime, product] = absorb_plugged_pctcs(outer, plugged);
        CHECK(cprime.ctc_pairs.size() == outer.ctc_pairs.size());
        REQUIRE(product.size() == teeth.size());
        for (std::size_t k = 0; k < product.size(); ++k)
            CHECK(dist(product[k].matrix, teeth[k].choi.matrix) < 1e-14);

        ChoiOperator direct = link(pctc_comb_choi(outer), pctc_comb_choi(plugged));
        ChoiOperator absorbed = pctc_comb_choi_with(cprime, product);
        std::vector<std::size_t> order;
        for (const auto& s : direct.systems)
            for (std::size_t k = 0; k < absorbed.systems.size(); ++k)
                if (absorbed.systems[k].label == s.label) order.push_back(k);
        auto ratio = proportionality(absorbed.permuted(order).matrix, direct.matrix, 1e-9);
        CHECK(ratio.has_value());
    }

    SUBCASE("plugged comb with memory and a CTC is absorbed") {
        auto slots = outer.base.slot_signature();
        REQUIRE(slots.size() == 2);
        // plugged teeth with a qubit memory R between them and a CTC wire
        std::vector<ChoiOperator::System> ins1, outs1, ins2, outs2;
        std::size_t d_in1 = 1, d_out1 = 1, d_in2 = 1, d_out2 = 1;
        for (const auto& s : slots[0].ins) {
            ins1.push_back({s.label, s.dim, Role::In});
            d_in1 *= s.dim;
        }
        for (const auto& s : slots[0].outs) {
            outs1.push_back({s.label, s.dim, Role::Out});
            d_out1 *= s.dim;
        }
        for (const auto& s : slots[1].ins) {
            ins2.push_back({s.label, s.dim, Role::In});
            d_in2 *= s.dim;
        }
        for (const auto& s : slots[1].outs) {
            outs2.push_back({s.label, s.dim, Role::Out});
            d_out2 *= s.dim;
        }
        // CTC wire B: returns into tooth 1, launched from tooth 2
        ins1.push_back({"B.past", 2, Role::In});
        d_in1 *= 2;
        outs1.push_back({"R", 2, Role::Out});
        d_out1 *= 2;
        ins2.push_back({"R", 2, Role::In});
        d_in2 *= 2;
        outs2.push_back({"B.fut", 2, Role::Out});
        d_out2 *= 2;

        Tooth f1, f2;
        f1.choi = choi_of_map(random_kraus_cptp(rng, d_out1, d_in1, 2), ins1, outs1);
        f1.mem_out = {"R"};
        f2.choi = choi_of_map(random_kraus_cptp(rng, d_out2, d_in2, 2), ins2, outs2);
        f2.mem_in = {"R"};
        PctcComb plugged =
            pctc_assist_comb(build_comb({f1, f2}), {{"B.fut", "B.past"}});

        auto [cprime, product] = absorb_plugged_pctcs(outer, plugged);
        // the plugged CTC and the rerouted memory both appear as outer CTCs
        CHECK(cprime.ctc_pairs.size() == outer.ctc_pairs.size() + 2);
        for (const auto& p : product) CHECK(p.is_cp(1e-8));

        ChoiOperator direct = link(pctc_comb_choi(outer), pctc_comb_choi(plugged));
        ChoiOperator absorbed = pctc_comb_choi_with(cprime, product);
        REQUIRE(absorbed.systems.size() == direct.systems.size());
        std::vector<std::size_t> order;
        for (const auto& s : direct.systems)
            for (std::size_t k = 0; k < absorbed.systems.size(); ++k)
                if (absorbed.systems[k].label == s.label) order.push_back(k);
        auto ratio = proportionality(absorbed.permuted(order).matrix, direct.matrix, 1e-9);
        REQUIRE(ratio.has_value());
        // the rerouted memory contributes one extra 1/d^2
        CHECK(std::abs(*ratio - 0.25) < 1e-9);
    }
}
