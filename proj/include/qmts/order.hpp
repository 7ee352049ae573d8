#pragma once

#include <optional>
#include <string>
#include <vector>

#include "qmts/mts.hpp"

namespace qmts {

// Two time orderings of the same directed systems; the shared data of a pair
// of isomorphic multi-time objects.
struct OrderProfile {
    struct Entry {
        std::string system;
        Direction direction = Direction::Forward;
        std::size_t dim = 1;
        Rational time_a, time_b;
    };
    std::vector<Entry> systems;
    std::vector<int> order_a;  // ranks (ties allowed)
    std::vector<int> order_b;
};

enum class OrderRelation { Equal, StrictlyAbove, StrictlyBelow, Incomparable };

struct StretchRecord {
    std::string system;
    Direction direction = Direction::Forward;
    Rational from_time, to_time;
};

struct OrderVerdict {
    OrderRelation relation = OrderRelation::Incomparable;
    // free-operation sequence realizing the feasible direction(s)
    std::optional<std::vector<StretchRecord>> witness;
    std::optional<std::string> certificate;  // infeasibility cycle rendering
};

// Profile when the objects differ only by a time-label bijection preserving
// system, direction, dimension and coefficients; absent otherwise.
std::optional<OrderProfile> is_isomorphic(const MtDensityVector& a, const MtDensityVector& b,
                                          double tol = kDefaultTol);

enum class MtClass { TwoTO, TwoTS, Other };

MtClass classify(const MtSpace& m);

// Reachability of order_b from order_a under free stretches, decided by a
// difference-constraint feasibility test with unit gaps for strict orderings.
OrderVerdict decide_order(const OrderProfile& p);

struct ExtremalityReport {
    bool ok = false;
    std::size_t orderings_checked = 0;
    std::size_t direction_assignments = 0;
    std::vector<std::string> failures;
    std::vector<std::pair<std::string, std::string>> incomparable_pairs;
};

// Exhaustively enumerates all weak orderings of n directed systems and checks
// that 2TO orderings are strictly minimal, 2TS strictly maximal, and the
// relation is transitive and antisymmetric.
ExtremalityReport verify_extremality(const std::vector<std::pair<std::string, Direction>>& sys);

// Every distinct direction assignment over n systems, checked as above.
ExtremalityReport verify_extremality_all(std::size_t n);

// Replay a witness on a space; throws if any step is not a free operation.
MtSpace replay_witness(const MtSpace& start, const std::vector<StretchRecord>& witness);

}  // namespace qmts
