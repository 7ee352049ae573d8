#include "qmts/cli.hpp"

#include <cmath>

#include "qmts/order.hpp"
#include "qmts/serialize.hpp"

namespace qmts {

namespace {

Strategy parse_strategy(const std::string& s) {
    if (s == "b2") return Strategy::UseB2;
    if (s == "f1") return Strategy::UseF1;
    if (s == "auto") return Strategy::Auto;
    throw ParseError("strategy must be b2, f1 or auto");
}

// residual of a ~= k b relative to ||a||, together with k
std::pair<double, cplx> equivalence_residual(const MtDensityVector& a,
                                             const MtDensityVector& b) {
    const cplx k = proportionality(a.op, b.op, 1e300).value_or(cplx(0.0));
    const double na = a.op.frobenius_norm();
    const double resid = (a.op - b.op * k).frobenius_norm() / std::max(na, 1e-300);
    return {resid, k};
}

json table_to_json(const CombProbabilityTable& t) {
    json j;
    json rows = json::array();
    for (std::size_t k = 0; k < t.probabilities.size(); ++k) {
        json row;
        row["outcomes"] = t.outcome_tuples[k];
        row["probability"] = t.probabilities[k];
        rows.push_back(std::move(row));
    }
    j["rows"] = std::move(rows);
    j["denominator"] = t.denominator;
    return j;
}

}  // namespace

Report cmd_convert(const ConvertOptions& opt) {
    Report rep;
    rep.command = "convert --direction " + opt.direction + " --strategy " + opt.strategy +
                  " " + opt.input;
    const Strategy strategy = parse_strategy(opt.strategy);
    json doc = load_document(opt.input);
    const std::string kind = document_kind(doc);

    if (opt.direction == "mts-to-pctc") {
        if (kind != "mts")
            throw ParseError(opt.input + ": expected an mts document, found '" + kind + "'");
        MtDensityVector m = decode_mts(doc);
        ConstructionPlan plan = mts_to_pctc_comb(m, strategy);

        rep.results["ctc_count"] = plan.ctc_count;
        rep.results["ctc_dims"] = plan.ctc_dims;
        rep.results["claimed_constant"] = encode_cplx(plan.claimed_constant);
        rep.results["term_reweights"] = plan.term_reweights;

        MtDensityVector back =
            relabel_systems(pctc_comb_to_mts(plan.comb), plan.factor_names);
        auto [resid, k] = equivalence_residual(back, m);
        rep.add_check("round_trip_equivalence", std::max(opt.tol, 1e-8), resid,
                      "evaluated comb vs input object");
        rep.results["measured_constant"] = encode_cplx(k);

        if (opt.out) save_document(*opt.out, encode_plan(plan));
    } else if (opt.direction == "pctc-to-mts") {
        PctcComb comb;
        if (kind == "comb")
            comb = decode_comb(doc);
        else if (kind == "plan")
            comb = decode_plan(doc).comb;
        else
            throw ParseError(opt.input + ": expected a comb or plan document, found '" +
                             kind + "'");
        MtDensityVector m = pctc_comb_to_mts(comb);
        rep.results["factors"] = encode_space(m.space);

        if (m.space.total_dim() <= 64) {
            ConstructionPlan plan = mts_to_pctc_comb(m, strategy);
            MtDensityVector back =
                relabel_systems(pctc_comb_to_mts(plan.comb), plan.factor_names);
            auto [resid, k] = equivalence_residual(back, m);
            rep.add_check("round_trip_equivalence", std::max(opt.tol, 1e-8), resid,
                          "re-synthesized comb vs extracted object");
            rep.results["ctc_count"] = plan.ctc_count;
            rep.results["ctc_dims"] = plan.ctc_dims;
            rep.results["measured_constant"] = encode_cplx(k);
        } else {
            rep.results["round_trip"] = "skipped (dimension above desk-scale bound)";
        }

        if (opt.out) save_document(*opt.out, encode_mts(m));
    } else {
        throw ParseError("direction must be mts-to-pctc or pctc-to-mts");
    }
    return rep;
}

Report cmd_prob(const ProbOptions& opt) {
    Report rep;
    rep.command = "prob " + opt.object_file + " " + opt.instruments_file;
    json obj_doc = load_document(opt.object_file);
    json ins_doc = load_document(opt.instruments_file);
    if (document_kind(ins_doc) != "instruments")
        throw ParseError(opt.instruments_file + ": expected an instruments document");
    InstrumentsDoc instruments = decode_instruments_doc(ins_doc);

    const std::string kind = document_kind(obj_doc);
    try {
        if (kind == "mts") {
            if (instruments.flavor != "mt" || instruments.mt_instruments.size() != 1)
                throw ParseError(
                    "mts objects take exactly one mt-flavored instrument document");
            MtDensityVector m = decode_mts(obj_doc);
            ProbabilityTable t = abl_probability(m, instruments.mt_instruments[0]);
            json rows = json::array();
            for (std::size_t k = 0; k < t.labels.size(); ++k) {
                json row;
                row["outcomes"] = json::array({t.labels[k]});
                row["probability"] = t.probabilities[k];
                rows.push_back(std::move(row));
            }
            rep.results["table"] = {{"rows", rows}, {"denominator", t.denominator}};
            double sum = 0.0;
            for (double p : t.probabilities) sum += p;
            rep.add_check("probabilities_normalized", 1e-10, std::abs(sum - 1.0));
        } else if (kind == "comb" || kind == "plan") {
            if (instruments.flavor != "choi")
                throw ParseError("comb objects take choi-flavored instrument documents");
            PctcComb comb =
                kind == "comb" ? decode_comb(obj_doc) : decode_plan(obj_doc).comb;
            ChoiOperator rho0 =
                instruments.has_state ? instruments.state : ChoiOperator();
            CombProbabilityTable t =
                comb_probability(comb, rho0, instruments.instruments);
            rep.results["table"] = table_to_json(t);
            double sum = 0.0;
            for (double p : t.probabilities) sum += p;
            rep.add_check("probabilities_normalized", 1e-10, std::abs(sum - 1.0));
            if (comb.ctc_pairs.empty())
                rep.add_check("ctc_free_denominator_is_one", 1e-8,
                              std::abs(t.denominator - 1.0));
        } else {
            throw ParseError(opt.object_file + ": expected an mts, comb or plan document");
        }
    } catch (const PostSelectionImpossible& e) {
        rep.results["verdict"] = "post_selection_impossible";
        rep.add_verdict("post_selection_possible", false, e.what());
    }
    return rep;
}

Report cmd_order(const OrderOptions& opt) {
    Report rep;
    rep.command = "order " + opt.file_a + " " + opt.file_b;
    MtDensityVector a = decode_mts(load_document(opt.file_a));
    MtDensityVector b = decode_mts(load_document(opt.file_b));

    auto profile = is_isomorphic(a, b, opt.tol);
    if (!profile) {
        rep.results["verdict"] = "not_isomorphic";
        return rep;
    }
    OrderVerdict v = decide_order(*profile);
    const char* names[] = {"equal", "strictly_above", "strictly_below", "incomparable"};
    rep.results["verdict"] = names[int(v.relation)];
    if (v.witness) {
        json w = json::array();
        for (const auto& s : *v.witness) {
            json sj;
            sj["system"] = s.system;
            sj["direction"] = s.direction == Direction::Forward ? "forward" : "backward";
            sj["from_time"] = encode_rational(s.from_time);
            sj["to_time"] = encode_rational(s.to_time);
            w.push_back(std::move(sj));
        }
        rep.results["witness"] = std::move(w);
    }
    if (v.certificate) rep.results["certificate"] = *v.certificate;
    return rep;
}

}  // namespace qmts
