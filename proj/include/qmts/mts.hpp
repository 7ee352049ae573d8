#pragma once

#include <map>
#include <string>
#include <vector>

#include "qmts/cmatrix.hpp"
#include "qmts/rational.hpp"

namespace qmts {

enum class Direction { Forward, Backward };

inline Direction reversed(Direction d) {
    return d == Direction::Forward ? Direction::Backward : Direction::Forward;
}

// One tensor factor label: which system, when, which way it evolves, and
// whether it belongs to the daggered (conjugate) layer of a density vector.
struct SpaceLabel {
    std::string system;
    Rational time;
    Direction direction = Direction::Forward;
    bool daggered = false;

    // Contraction partners agree on everything except direction.
    bool pairs_with(const SpaceLabel& o) const {
        return system == o.system && time == o.time && daggered == o.daggered &&
               direction != o.direction;
    }

    friend bool operator==(const SpaceLabel& a, const SpaceLabel& b) {
        return a.system == b.system && a.time == b.time && a.direction == b.direction &&
               a.daggered == b.daggered;
    }
    friend bool operator<(const SpaceLabel& a, const SpaceLabel& b);

    std::string str() const;
};

// Tensor product of labeled factors. Factors are canonicalized (sorted by
// system, time, direction, daggered) so equal spaces compare equal and
// coefficient storage has a single layout.
struct MtSpace {
    struct Factor {
        SpaceLabel label;
        std::size_t dim = 1;
    };
    std::vector<Factor> factors;

    MtSpace() = default;
    explicit MtSpace(std::vector<Factor> f);

    std::size_t total_dim() const;
    std::vector<std::size_t> dims() const;
    std::size_t size() const { return factors.size(); }
    bool empty() const { return factors.empty(); }

    friend bool operator==(const MtSpace& a, const MtSpace& b);
};

MtSpace reversed_space(const MtSpace& h);

// Pure multi-time object: coefficient tensor over the space's factors in
// canonical order. Bra-side factors store their components already
// conjugated, so composition is a plain sum-product on contracted pairs.
struct MtVector {
    MtSpace space;
    std::vector<cplx> coeffs;

    MtVector() = default;
    MtVector(MtSpace s, std::vector<cplx> c);

    cplx scalar() const;  // valid when space is empty
    MtVector dagger() const;
    MtVector operator*(cplx s) const;
    double norm() const;
};

// sum over contracted reversed pairs, tensor product on the rest
MtVector compose(const MtVector& a, const MtVector& b);

// Mixed multi-time object. Stored as the dense operator over the non-daggered
// factors (rows) paired with their daggered twins (columns, same factor
// order). Pure Psi gives op = psi psi^dagger.
struct MtDensityVector {
    MtSpace space;  // non-daggered layer only
    CMatrix op;

    MtDensityVector() = default;
    MtDensityVector(MtSpace s, CMatrix o);

    static MtDensityVector pure(const MtVector& v);

    // view as an MtVector over plain factors + daggered twins
    MtVector doubled() const;
    static MtDensityVector from_doubled(const MtVector& v);

    cplx scalar() const;
    MtDensityVector operator*(cplx s) const;
};

SpaceLabel dagger_twin(const SpaceLabel& l);

MtDensityVector compose_density(const MtDensityVector& a, const MtDensityVector& b);

// The 'identity operator' on system A: composing with it traces A out.
MtDensityVector mt_identity_element(const std::string& system, const Rational& time,
                                    std::size_t dim);

MtDensityVector mt_partial_trace(const MtDensityVector& v, const SpaceLabel& factor);

bool is_positive(const MtDensityVector& v, double tol = kDefaultTol);

struct SpectralTerm {
    double weight;
    MtVector vector;  // unit norm
};

std::vector<SpectralTerm> spectral_decompose(const MtDensityVector& v,
                                             double tol = kDefaultTol);

std::optional<cplx> op_equivalent(const MtDensityVector& a, const MtDensityVector& b,
                                  double tol = kDefaultTol);

struct MtInstrument {
    struct Outcome {
        std::string label;
        MtDensityVector kraus_density;
    };
    std::vector<Outcome> outcomes;
};

struct ProbabilityTable {
    std::vector<std::string> labels;
    std::vector<double> probabilities;
    double denominator = 0.0;
};

// Normalized outcome distribution for a state against an instrument on the
// reversed space. Raises PostSelectionImpossible when the joint support of
// pre- and post-selection vanishes for every outcome.
ProbabilityTable abl_probability(const MtDensityVector& state, const MtInstrument& instrument);

// Free stretch: move a forward factor later or a backward factor earlier.
// Used by the order module to replay transformation witnesses; the daggered
// layer follows the plain one automatically.
MtDensityVector free_stretch(const MtDensityVector& v, const SpaceLabel& factor,
                             const Rational& new_time);
MtSpace free_stretch(const MtSpace& h, const SpaceLabel& factor, const Rational& new_time);

// Rename factor systems (plain and daggered layers in lockstep); systems not
// in the map keep their names.
MtDensityVector relabel_systems(const MtDensityVector& v,
                                const std::map<std::string, std::string>& renames);

}  // namespace qmts
