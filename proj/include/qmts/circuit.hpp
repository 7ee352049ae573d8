#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qmts/choi.hpp"
#include "qmts/rational.hpp"

namespace qmts {

// Serializable circuit description: declared systems, nodes acting on them in
// listed order, and CTC pairs closing a system's final leg onto another's
// initial leg. This is the CLI ingestion format for everything circuit-shaped.
struct CircuitSpec {
    enum class NodeKind { Prepare, Gate, KrausSet, PostSelect, Slot, Stretch, Trace };

    struct SystemDecl {
        std::string label;
        std::size_t dim = 1;
    };

    struct Node {
        NodeKind kind = NodeKind::Gate;
        std::vector<std::string> systems_in;
        std::vector<std::string> systems_out;
        std::vector<CMatrix> matrices;  // unitary / Kraus list / state / effect vector
        std::string name;
        std::optional<Rational> time;
        Rational from_time, to_time;  // stretch records
    };

    std::string version = "1";
    std::vector<SystemDecl> systems;
    std::vector<Node> nodes;
    std::vector<std::pair<std::string, std::string>> ctc_pairs;  // (future leg, past leg)
    std::map<std::string, std::string> metadata;

    std::size_t dim_of(const std::string& label) const;
};

// Pure-level block: a linear operator between labeled wire segments.
struct PureBlock {
    struct Leg {
        std::string label;
        std::size_t dim = 1;
    };
    std::vector<Leg> ins;
    std::vector<Leg> outs;
    CMatrix matrix;  // (prod out dims) x (prod in dims)

    PureBlock() : matrix(1, 1) { matrix.at(0, 0) = 1.0; }
    PureBlock(std::vector<Leg> i, std::vector<Leg> o, CMatrix m);
};

// Contract two blocks over every shared segment label (out of one, in of the
// other, either way around). Enables loops when combined with trace pairs.
PureBlock pure_contract(const PureBlock& a, const PureBlock& b);

// (1/d) * trace pairing of an open out leg with an open in leg (one P-CTC).
PureBlock pure_trace_pair(const PureBlock& b, const std::string& out_leg,
                          const std::string& in_leg);

// Evaluate a circuit whose nodes are all pure (unitaries, isometries given as
// single-element Kraus sets, pure preparations/post-selections). Open legs are
// labeled "<system>.in" / "<system>.out"; each CTC contributes its 1/d.
PureBlock evaluate_circuit_pure(const CircuitSpec& spec);

// General evaluation through the Choi/link machinery; slots stay open with
// legs "<slot>.in"/"<slot>.out". Each CTC contributes its 1/d^2.
ChoiOperator evaluate_circuit_choi(const CircuitSpec& spec);

}  // namespace qmts
