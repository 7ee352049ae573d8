#pragma once

#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "qmts/choi.hpp"
#include "qmts/rational.hpp"
#include "qmts/rng.hpp"

namespace qmts {

// One tooth of a comb: a CPTP map whose systems split into external in/outs
// and memory wires shared with the neighbouring teeth. Memory wires keep
// their labels across the boundary, so chaining is a plain link product.
struct Tooth {
    ChoiOperator choi;
    std::vector<std::string> mem_in;
    std::vector<std::string> mem_out;
    Rational time_in;   // time label of the external input set
    Rational time_out;  // time label of the external output set

    std::vector<ChoiOperator::System> external_ins() const;
    std::vector<ChoiOperator::System> external_outs() const;
};

struct SlotSignature {
    std::vector<ChoiOperator::System> ins;   // systems the plugged map consumes
    std::vector<ChoiOperator::System> outs;  // systems the plugged map must emit
};

struct Comb {
    std::vector<Tooth> teeth;

    std::size_t slot_count() const { return teeth.empty() ? 0 : teeth.size() - 1; }
    std::vector<SlotSignature> slot_signature() const;
    std::vector<ChoiOperator::System> global_past_ins() const;
    std::vector<ChoiOperator::System> global_future_outs() const;
};

// Validates tooth trace preservation and the memory chain, then returns the
// comb. tp_tol matches the drift seen under chained link products.
Comb build_comb(std::vector<Tooth> teeth, double tp_tol = 1e-8);

// Composite Choi of the comb: chained link product over the memory wires.
ChoiOperator comb_choi(const Comb& c);

struct CtcPair {
    std::string future_out;  // comb output at the global future
    std::string past_in;     // comb input at the global past
};

struct PctcComb {
    Comb base;
    std::vector<CtcPair> ctc_pairs;
    bool time_labelled = false;

    bool is_ctc_label(const std::string& label) const;
    // external systems that are not CTC endpoints
    std::vector<ChoiOperator::System> open_ins() const;
    std::vector<ChoiOperator::System> open_outs() const;
};

// Attach P-CTC wires from global-future outputs to global-past inputs.
PctcComb pctc_assist_comb(const Comb& c, const std::vector<CtcPair>& ctc_pairs);

// CP operator of the comb with every CTC contracted; each wire carries the
// paper's 1/d^2 constant.
ChoiOperator pctc_comb_choi(const PctcComb& pc);

// Same contraction with extra operators (plugged maps, preparations, traces)
// folded in, using the greedy order throughout.
ChoiOperator pctc_comb_choi_with(const PctcComb& pc, const std::vector<ChoiOperator>& extra);

struct Instrument {
    struct Outcome {
        std::string label;
        ChoiOperator choi;
    };
    std::vector<Outcome> outcomes;
};

void validate_instrument(const Instrument& ins, double tp_tol = 1e-8);

struct CombProbabilityTable {
    std::vector<std::vector<std::string>> outcome_tuples;
    std::vector<double> probabilities;
    double denominator = 0.0;
};

// Joint outcome distribution of instruments plugged into the comb by label,
// with rho0 prepared on the global past and unclaimed outputs traced out.
// The denominator is the post-selection success weight; for a CTC-free comb
// it equals 1.
CombProbabilityTable comb_probability(const PctcComb& pc, const ChoiOperator& rho0,
                                      const std::vector<Instrument>& instruments);

// The comb contracted with its preparation and the traces over unclaimed
// outputs: reusable across instrument draws with the same label coverage.
ChoiOperator comb_environment(const PctcComb& pc, const ChoiOperator& rho0,
                              const std::set<std::string>& claimed);
CombProbabilityTable comb_probability_with_env(const ChoiOperator& env,
                                               const std::vector<Instrument>& instruments);

// Absorb the P-CTCs and memories of a comb plugged into `outer`'s slots: the
// result is an enlarged outer comb (extra CTC pairs and pass-through wires)
// together with the plugged teeth as a memoriless product.
std::pair<PctcComb, std::vector<ChoiOperator>> absorb_plugged_pctcs(const PctcComb& outer,
                                                                    const PctcComb& plugged);

// ---- seeded generators used by the selftest and acceptance suites ----

Instrument random_instrument(Rng& rng, const std::vector<ChoiOperator::System>& ins,
                             const std::vector<ChoiOperator::System>& outs,
                             std::size_t n_outcomes);

struct RandomCombSpec {
    std::size_t slots = 1;        // up to 2 in the shipped suites
    std::size_t wire_dim = 2;     // dimension per external wire
    std::size_t memory_dim = 2;   // internal memory dimension
    std::size_t ctc_wires = 0;    // P-CTC pairs between global future and past
    std::size_t ctc_dim = 2;
    std::size_t kraus_per_tooth = 2;
};

PctcComb random_pctc_comb(Rng& rng, const RandomCombSpec& spec);

}  // namespace qmts
