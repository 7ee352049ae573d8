#include "qmts/mts.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

namespace qmts {

namespace {

int dir_rank(Direction d) { return d == Direction::Forward ? 0 : 1; }

std::size_t flatten(const std::vector<std::size_t>& idx, const std::vector<std::size_t>& dims) {
    std::size_t f = 0;
    for (std::size_t k = 0; k < dims.size(); ++k) f = f * dims[k] + idx[k];
    return f;
}

void unflatten(std::size_t flat, const std::vector<std::size_t>& dims,
               std::vector<std::size_t>& out) {
    for (std::size_t k = dims.size(); k-- > 0;) {
        out[k] = flat % dims[k];
        flat /= dims[k];
    }
}

}  // namespace

bool operator<(const SpaceLabel& a, const SpaceLabel& b) {
    if (a.system != b.system) return a.system < b.system;
    if (a.time != b.time) return a.time < b.time;
    if (a.direction != b.direction) return dir_rank(a.direction) < dir_rank(b.direction);
    return a.daggered < b.daggered;
}

std::string SpaceLabel::str() const {
    std::string s = system + "@" + time.str();
    s += direction == Direction::Forward ? "^" : "_";
    if (daggered) s += "+";
    return s;
}

namespace {

// canonical order: system, time, direction, daggered
bool label_less(const SpaceLabel& a, const SpaceLabel& b) {
    if (a.system != b.system) return a.system < b.system;
    if (a.time != b.time) return a.time < b.time;
    if (a.direction != b.direction) return dir_rank(a.direction) < dir_rank(b.direction);
    return a.daggered < b.daggered;
}

}  // namespace

MtSpace::MtSpace(std::vector<Factor> f) : factors(std::move(f)) {
    std::sort(factors.begin(), factors.end(),
              [](const Factor& a, const Factor& b) { return label_less(a.label, b.label); });
    for (std::size_t k = 0; k < factors.size(); ++k) {
        if (factors[k].dim < 1) throw Error("MtSpace: factor dimension < 1");
        if (k > 0 && factors[k].label == factors[k - 1].label)
            throw Error("MtSpace: duplicate label " + factors[k].label.str());
    }
}

std::size_t MtSpace::total_dim() const {
    std::size_t p = 1;
    for (const Factor& f : factors) p *= f.dim;
    return p;
}

std::vector<std::size_t> MtSpace::dims() const {
    std::vector<std::size_t> d;
    d.reserve(factors.size());
    for (const Factor& f : factors) d.push_back(f.dim);
    return d;
}

bool operator==(const MtSpace& a, const MtSpace& b) {
    if (a.factors.size() != b.factors.size()) return false;
    for (std::size_t k = 0; k < a.factors.size(); ++k)
        if (!(a.factors[k].label == b.factors[k].label) || a.factors[k].dim != b.factors[k].dim)
            return false;
    return true;
}

MtSpace reversed_space(const MtSpace& h) {
    std::vector<MtSpace::Factor> f = h.factors;
    for (auto& x : f) x.label.direction = reversed(x.label.direction);
    return MtSpace(std::move(f));
}

MtVector::MtVector(MtSpace s, std::vector<cplx> c) : space(std::move(s)), coeffs(std::move(c)) {
    if (coeffs.size() != space.total_dim())
        throw ShapeMismatch("MtVector: coefficient count " + std::to_string(coeffs.size()) +
                            " != space dimension " + std::to_string(space.total_dim()));
}

cplx MtVector::scalar() const {
    if (!space.empty()) throw SpaceMismatch("scalar() on non-empty space");
    return coeffs[0];
}

SpaceLabel dagger_twin(const SpaceLabel& l) {
    SpaceLabel t = l;
    t.direction = reversed(l.direction);
    t.daggered = !l.daggered;
    return t;
}

MtVector MtVector::dagger() const {
    std::vector<MtSpace::Factor> nf;
    nf.reserve(space.factors.size());
    for (const auto& f : space.factors) nf.push_back({dagger_twin(f.label), f.dim});
    MtSpace ns(nf);  // sorted; figure the permutation back to the old order
    std::vector<std::size_t> old_pos(ns.factors.size());
    for (std::size_t k = 0; k < ns.factors.size(); ++k) {
        const SpaceLabel want = ns.factors[k].label;
        bool found = false;
        for (std::size_t j = 0; j < space.factors.size(); ++j) {
            if (dagger_twin(space.factors[j].label) == want) {
                old_pos[k] = j;
                found = true;
                break;
            }
        }
        if (!found) throw Error("dagger: factor mapping failed");
    }
    const auto old_dims = space.dims();
    const auto new_dims = ns.dims();
    std::vector<cplx> nc(coeffs.size());
    std::vector<std::size_t> ni(new_dims.size()), oi(old_dims.size());
    for (std::size_t flat = 0; flat < nc.size(); ++flat) {
        unflatten(flat, new_dims, ni);
        for (std::size_t k = 0; k < ni.size(); ++k) oi[old_pos[k]] = ni[k];
        nc[flat] = std::conj(coeffs[flatten(oi, old_dims)]);
    }
    return MtVector(std::move(ns), std::move(nc));
}

MtVector MtVector::operator*(cplx s) const {
    MtVector out = *this;
    for (cplx& z : out.coeffs) z *= s;
    return out;
}

double MtVector::norm() const {
    double s = 0.0;
    for (const cplx& z : coeffs) s += std::norm(z);
    return std::sqrt(s);
}

MtVector compose(const MtVector& a, const MtVector& b) {
    const auto& fa = a.space.factors;
    const auto& fb = b.space.factors;

    // locate contracted reversed pairs and reject same-direction collisions
    std::vector<int> pair_of_a(fa.size(), -1), pair_of_b(fb.size(), -1);
    for (std::size_t i = 0; i < fa.size(); ++i) {
        for (std::size_t j = 0; j < fb.size(); ++j) {
            if (fa[i].label == fb[j].label)
                throw NotComposable("label " + fa[i].label.str() +
                                    " appears twice in the same direction");
            if (fa[i].label.pairs_with(fb[j].label)) {
                if (fa[i].dim != fb[j].dim)
                    throw DimensionMismatch("contracted pair " + fa[i].label.str() +
                                            " has mismatched dimensions");
                pair_of_a[i] = int(j);
                pair_of_b[j] = int(i);
            }
        }
    }

    struct Kept {
        MtSpace::Factor factor;
        bool from_a;
        std::size_t pos;
    };
    std::vector<Kept> kept;
    for (std::size_t i = 0; i < fa.size(); ++i)
        if (pair_of_a[i] < 0) kept.push_back({fa[i], true, i});
    for (std::size_t j = 0; j < fb.size(); ++j)
        if (pair_of_b[j] < 0) kept.push_back({fb[j], false, j});
    std::sort(kept.begin(), kept.end(), [](const Kept& x, const Kept& y) {
        return label_less(x.factor.label, y.factor.label);
    });

    std::vector<MtSpace::Factor> result_factors;
    result_factors.reserve(kept.size());
    for (const Kept& k : kept) result_factors.push_back(k.factor);
    MtSpace result_space(result_factors);  // throws on duplicates across a and b

    std::vector<std::size_t> contr_a, contr_b, contr_dims;
    for (std::size_t i = 0; i < fa.size(); ++i) {
        if (pair_of_a[i] >= 0) {
            contr_a.push_back(i);
            contr_b.push_back(std::size_t(pair_of_a[i]));
            contr_dims.push_back(fa[i].dim);
        }
    }

    const auto dims_a = a.space.dims();
    const auto dims_b = b.space.dims();
    const auto dims_r = result_space.dims();
    std::size_t contr_size = 1;
    for (std::size_t d : contr_dims) contr_size *= d;

    std::vector<cplx> out(result_space.total_dim(), cplx(0.0));
    std::vector<std::size_t> ri(dims_r.size()), ci(contr_dims.size());
    std::vector<std::size_t> ia(dims_a.size()), ib(dims_b.size());
    for (std::size_t r = 0; r < out.size(); ++r) {
        unflatten(r, dims_r, ri);
        cplx acc = 0.0;
        for (std::size_t c = 0; c < contr_size; ++c) {
            unflatten(c, contr_dims, ci);
            for (std::size_t k = 0; k < kept.size(); ++k) {
                if (kept[k].from_a)
                    ia[kept[k].pos] = ri[k];
                else
                    ib[kept[k].pos] = ri[k];
            }
            for (std::size_t k = 0; k < contr_a.size(); ++k) {
                ia[contr_a[k]] = ci[k];
                ib[contr_b[k]] = ci[k];
            }
            acc += a.coeffs[flatten(ia, dims_a)] * b.coeffs[flatten(ib, dims_b)];
        }
        out[r] = acc;
    }
    return MtVector(std::move(result_space), std::move(out));
}

MtDensityVector::MtDensityVector(MtSpace s, CMatrix o) : space(std::move(s)), op(std::move(o)) {
    for (const auto& f : space.factors)
        if (f.label.daggered)
            throw SpaceMismatch("density vector space must hold non-daggered factors");
    const std::size_t d = space.total_dim();
    if (op.rows != d || op.cols != d)
        throw ShapeMismatch("density operator is " + std::to_string(op.rows) + "x" +
                            std::to_string(op.cols) + ", space dimension " + std::to_string(d));
}

MtDensityVector MtDensityVector::pure(const MtVector& v) {
    const std::size_t d = v.space.total_dim();
    CMatrix op(d, d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) op.at(i, j) = v.coeffs[i] * std::conj(v.coeffs[j]);
    return MtDensityVector(v.space, std::move(op));
}

MtVector MtDensityVector::doubled() const {
    std::vector<MtSpace::Factor> df;
    df.reserve(2 * space.factors.size());
    for (const auto& f : space.factors) {
        df.push_back(f);
        df.push_back({dagger_twin(f.label), f.dim});
    }
    MtSpace ds(df);

    // map each doubled factor to (plain position, is_twin)
    const std::size_t n = space.factors.size();
    std::vector<std::size_t> plain_pos(ds.factors.size());
    std::vector<bool> is_twin(ds.factors.size());
    for (std::size_t k = 0; k < ds.factors.size(); ++k) {
        const SpaceLabel& l = ds.factors[k].label;
        bool found = false;
        for (std::size_t p = 0; p < n; ++p) {
            if (space.factors[p].label == l) {
                plain_pos[k] = p;
                is_twin[k] = false;
                found = true;
                break;
            }
            if (dagger_twin(space.factors[p].label) == l) {
                plain_pos[k] = p;
                is_twin[k] = true;
                found = true;
                break;
            }
        }
        if (!found) throw Error("doubled: factor mapping failed");
    }

    const auto pdims = space.dims();
    const auto ddims = ds.dims();
    std::vector<cplx> coeffs(ds.total_dim());
    std::vector<std::size_t> di(ddims.size()), row(pdims.size()), col(pdims.size());
    for (std::size_t flat = 0; flat < coeffs.size(); ++flat) {
        unflatten(flat, ddims, di);
        for (std::size_t k = 0; k < di.size(); ++k)
            (is_twin[k] ? col : row)[plain_pos[k]] = di[k];
        coeffs[flat] = op.at(flatten(row, pdims), flatten(col, pdims));
    }
    return MtVector(std::move(ds), std::move(coeffs));
}

MtDensityVector MtDensityVector::from_doubled(const MtVector& v) {
    std::vector<MtSpace::Factor> plain;
    for (const auto& f : v.space.factors)
        if (!f.label.daggered) plain.push_back(f);
    MtSpace ps(plain);
    if (ps.size() * 2 != v.space.size())
        throw SpaceMismatch("doubled space does not split into plain + daggered layers");

    const std::size_t n = ps.factors.size();
    std::vector<std::size_t> plain_pos(v.space.factors.size());
    std::vector<bool> is_twin(v.space.factors.size());
    for (std::size_t k = 0; k < v.space.factors.size(); ++k) {
        const SpaceLabel& l = v.space.factors[k].label;
        bool found = false;
        for (std::size_t p = 0; p < n; ++p) {
            if (ps.factors[p].label == l) {
                plain_pos[k] = p;
                is_twin[k] = false;
                found = true;
                break;
            }
            if (dagger_twin(ps.factors[p].label) == l) {
                if (ps.factors[p].dim != v.space.factors[k].dim)
                    throw SpaceMismatch("twin dimension mismatch for " + l.str());
                plain_pos[k] = p;
                is_twin[k] = true;
                found = true;
                break;
            }
        }
        if (!found) throw SpaceMismatch("unpaired daggered factor " + l.str());
    }

    const auto pdims = ps.dims();
    const auto ddims = v.space.dims();
    const std::size_t d = ps.total_dim();
    CMatrix op(d, d);
    std::vector<std::size_t> di(ddims.size()), row(pdims.size()), col(pdims.size());
    for (std::size_t flat = 0; flat < v.coeffs.size(); ++flat) {
        unflatten(flat, ddims, di);
        for (std::size_t k = 0; k < di.size(); ++k)
            (is_twin[k] ? col : row)[plain_pos[k]] = di[k];
        op.at(flatten(row, pdims), flatten(col, pdims)) = v.coeffs[flat];
    }
    return MtDensityVector(std::move(ps), std::move(op));
}

cplx MtDensityVector::scalar() const {
    if (!space.empty()) throw SpaceMismatch("scalar() on non-empty space");
    return op.at(0, 0);
}

MtDensityVector MtDensityVector::operator*(cplx s) const {
    MtDensityVector out = *this;
    out.op *= s;
    return out;
}

MtDensityVector compose_density(const MtDensityVector& a, const MtDensityVector& b) {
    return MtDensityVector::from_doubled(compose(a.doubled(), b.doubled()));
}

namespace {

MtDensityVector mt_trace_element(const std::string& system, const Rational& time,
                                 std::size_t dim, Direction plain_direction) {
    MtSpace s({{SpaceLabel{system, time, plain_direction, false}, dim}});
    return MtDensityVector(s, CMatrix::identity(dim));
}

}  // namespace

MtDensityVector mt_identity_element(const std::string& system, const Rational& time,
                                    std::size_t dim) {
    return mt_trace_element(system, time, dim, Direction::Backward);
}

MtDensityVector mt_partial_trace(const MtDensityVector& v, const SpaceLabel& factor) {
    for (const auto& f : v.space.factors) {
        if (f.label == factor)
            return compose_density(
                v, mt_trace_element(factor.system, factor.time, f.dim,
                                    reversed(factor.direction)));
    }
    throw SpaceMismatch("mt_partial_trace: factor " + factor.str() + " not present");
}

bool is_positive(const MtDensityVector& v, double tol) {
    if (!v.op.is_hermitian(tol)) return false;
    const double scale = std::max(1.0, v.op.frobenius_norm());
    return min_eigenvalue(v.op) >= -tol * scale;
}

std::vector<SpectralTerm> spectral_decompose(const MtDensityVector& v, double tol) {
    if (!is_positive(v, tol)) throw NotPositive("spectral_decompose");
    HermEig e = herm_eig(v.op);
    double top = 0.0;
    for (double w : e.eigenvalues) top = std::max(top, std::abs(w));
    const double cutoff = 1e-12 * std::max(top, 1e-30);
    std::vector<SpectralTerm> terms;
    for (std::size_t k = 0; k < e.eigenvalues.size(); ++k) {
        if (e.eigenvalues[k] <= cutoff) continue;
        std::vector<cplx> col(v.op.rows);
        for (std::size_t r = 0; r < v.op.rows; ++r) col[r] = e.eigenvectors.at(r, k);
        terms.push_back({e.eigenvalues[k], MtVector(v.space, std::move(col))});
    }
    // largest weight first, deterministic
    std::reverse(terms.begin(), terms.end());
    return terms;
}

std::optional<cplx> op_equivalent(const MtDensityVector& a, const MtDensityVector& b,
                                  double tol) {
    if (!(a.space == b.space)) throw SpaceMismatch("op_equivalent: different MT spaces");
    return proportionality(a.op, b.op, tol);
}

ProbabilityTable abl_probability(const MtDensityVector& state, const MtInstrument& instrument) {
    ProbabilityTable table;
    std::vector<double> raw;
    for (const auto& outcome : instrument.outcomes) {
        MtDensityVector s = compose_density(state, outcome.kraus_density);
        if (!s.space.empty())
            throw SpaceMismatch("abl_probability: outcome " + outcome.label +
                                " does not fully contract the state");
        cplx z = s.scalar();
        if (std::abs(z.imag()) > 1e-8 * std::max(1.0, std::abs(z)))
            throw Error("abl_probability: non-real contraction for outcome " + outcome.label);
        raw.push_back(std::max(0.0, z.real()));
        table.labels.push_back(outcome.label);
    }
    double denom = 0.0;
    for (double r : raw) denom += r;
    if (denom <= 1e-12)
        throw PostSelectionImpossible("the pre/post-selection pair is orthogonal under every outcome");
    table.denominator = denom;
    for (double r : raw) table.probabilities.push_back(r / denom);
    return table;
}

MtSpace free_stretch(const MtSpace& h, const SpaceLabel& factor, const Rational& new_time) {
    std::vector<MtSpace::Factor> nf = h.factors;
    bool found = false;
    for (auto& f : nf) {
        if (f.label == factor) {
            if (factor.direction == Direction::Forward && new_time < factor.time)
                throw Error("free_stretch: forward factors only stretch later");
            if (factor.direction == Direction::Backward && new_time > factor.time)
                throw Error("free_stretch: backward factors only stretch earlier");
            f.label.time = new_time;
            found = true;
            break;
        }
    }
    if (!found) throw SpaceMismatch("free_stretch: factor " + factor.str() + " not present");
    return MtSpace(std::move(nf));
}

namespace {

MtDensityVector rebuild_with_labels(const MtVector& doubled,
                                    std::vector<MtSpace::Factor> relabeled) {
    MtSpace ns(relabeled);
    std::vector<bool> used(relabeled.size(), false);
    std::vector<std::size_t> old_pos(relabeled.size());
    for (std::size_t k = 0; k < ns.factors.size(); ++k) {
        bool found = false;
        for (std::size_t j = 0; j < relabeled.size(); ++j) {
            if (!used[j] && relabeled[j].label == ns.factors[k].label &&
                relabeled[j].dim == ns.factors[k].dim) {
                old_pos[k] = j;
                used[j] = true;
                found = true;
                break;
            }
        }
        if (!found) throw Error("relabel: permutation failed");
    }
    const auto old_dims = doubled.space.dims();
    const auto new_dims = ns.dims();
    std::vector<cplx> nc(doubled.coeffs.size());
    std::vector<std::size_t> ni(new_dims.size()), oi(old_dims.size());
    for (std::size_t flat = 0; flat < nc.size(); ++flat) {
        unflatten(flat, new_dims, ni);
        for (std::size_t k = 0; k < ni.size(); ++k) oi[old_pos[k]] = ni[k];
        nc[flat] = doubled.coeffs[flatten(oi, old_dims)];
    }
    return MtDensityVector::from_doubled(MtVector(std::move(ns), std::move(nc)));
}

}  // namespace

MtDensityVector relabel_systems(const MtDensityVector& v,
                                const std::map<std::string, std::string>& renames) {
    MtVector d = v.doubled();
    std::vector<MtSpace::Factor> nf = d.space.factors;
    for (auto& f : nf) {
        auto it = renames.find(f.label.system);
        if (it != renames.end()) f.label.system = it->second;
    }
    return rebuild_with_labels(d, std::move(nf));
}

MtDensityVector free_stretch(const MtDensityVector& v, const SpaceLabel& factor,
                             const Rational& new_time) {
    // relabel plain + daggered layers in lockstep, then re-canonicalize
    MtVector d = v.doubled();
    std::vector<MtSpace::Factor> nf = d.space.factors;
    const SpaceLabel twin = dagger_twin(factor);
    std::vector<std::size_t> touched;
    for (std::size_t k = 0; k < nf.size(); ++k) {
        if (nf[k].label == factor || nf[k].label == twin) {
            if (factor.direction == Direction::Forward && new_time < factor.time)
                throw Error("free_stretch: forward factors only stretch later");
            if (factor.direction == Direction::Backward && new_time > factor.time)
                throw Error("free_stretch: backward factors only stretch earlier");
            nf[k].label.time = new_time;
            touched.push_back(k);
        }
    }
    if (touched.size() != 2)
        throw SpaceMismatch("free_stretch: factor " + factor.str() + " not present");

    MtSpace ns(nf);
    // permutation: position in old factor list for each new position
    std::vector<bool> used(nf.size(), false);
    std::vector<std::size_t> old_pos(nf.size());
    for (std::size_t k = 0; k < ns.factors.size(); ++k) {
        bool found = false;
        for (std::size_t j = 0; j < nf.size(); ++j) {
            if (!used[j] && nf[j].label == ns.factors[k].label && nf[j].dim == ns.factors[k].dim) {
                old_pos[k] = j;
                used[j] = true;
                found = true;
                break;
            }
        }
        if (!found) throw Error("free_stretch: permutation failed");
    }
    const auto old_dims = d.space.dims();
    const auto new_dims = ns.dims();
    std::vector<cplx> nc(d.coeffs.size());
    std::vector<std::size_t> ni(new_dims.size()), oi(old_dims.size());
    for (std::size_t flat = 0; flat < nc.size(); ++flat) {
        unflatten(flat, new_dims, ni);
        for (std::size_t k = 0; k < ni.size(); ++k) oi[old_pos[k]] = ni[k];
        nc[flat] = d.coeffs[flatten(oi, old_dims)];
    }
    return MtDensityVector::from_doubled(MtVector(std::move(ns), std::move(nc)));
}

}  // namespace qmts
