#include "qmts/order.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace qmts {

namespace {

std::vector<int> ranks_of(const std::vector<Rational>& times) {
    std::vector<Rational> sorted = times;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    std::vector<int> ranks;
    ranks.reserve(times.size());
    for (const auto& t : times)
        ranks.push_back(int(std::lower_bound(sorted.begin(), sorted.end(), t) - sorted.begin()));
    return ranks;
}

// Difference-constraint system x_u - x_v <= w, solved by Bellman-Ford from a
// virtual source. Infeasible exactly when a negative cycle exists.
struct DiffConstraints {
    struct Edge {
        std::size_t from, to;
        long long weight;
        std::string reason;
    };
    std::size_t n;
    std::vector<Edge> edges;

    explicit DiffConstraints(std::size_t vars) : n(vars) {}

    // x_u <= x_v + w
    void add(std::size_t u, std::size_t v, long long w, std::string reason) {
        edges.push_back({v, u, w, std::move(reason)});
    }

    // returns potentials, or nullopt with `cycle` filled
    std::optional<std::vector<long long>> solve(std::vector<std::string>* cycle) const {
        std::vector<long long> dist(n, 0);
        std::vector<int> pred(n, -1);
        for (std::size_t pass = 0; pass + 1 < n + 1; ++pass) {
            bool changed = false;
            for (std::size_t e = 0; e < edges.size(); ++e) {
                const auto& ed = edges[e];
                if (dist[ed.from] + ed.weight < dist[ed.to]) {
                    dist[ed.to] = dist[ed.from] + ed.weight;
                    pred[ed.to] = int(e);
                    changed = true;
                }
            }
            if (!changed) return dist;
        }
        for (const auto& ed : edges) {
            if (dist[ed.from] + ed.weight < dist[ed.to]) {
                if (cycle) {
                    // walk predecessors into the violated cycle and collect it
                    std::size_t v = ed.to;
                    for (std::size_t k = 0; k < n && pred[v] >= 0; ++k)
                        v = edges[pred[v]].from;
                    std::set<std::size_t> seen;
                    while (pred[v] >= 0 && !seen.count(v)) {
                        seen.insert(v);
                        cycle->push_back(edges[pred[v]].reason);
                        v = edges[pred[v]].from;
                    }
                }
                return std::nullopt;
            }
        }
        return dist;
    }
};

struct Feasibility {
    bool feasible = false;
    std::vector<long long> t, t_prime;
    std::vector<std::string> cycle;
};

Feasibility feasible_transform(const std::vector<std::pair<std::string, Direction>>& sys,
                               const std::vector<int>& order_a,
                               const std::vector<int>& order_b) {
    const std::size_t n = sys.size();
    DiffConstraints dc(2 * n);
    auto add_order = [&](const std::vector<int>& ranks, std::size_t base, const char* tag) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                if (i == j) continue;
                if (ranks[i] < ranks[j])
                    dc.add(base + i, base + j, -1,
                           sys[i].first + std::string(" before ") + sys[j].first + " in " + tag);
                else if (ranks[i] == ranks[j] && i < j) {
                    dc.add(base + i, base + j, 0,
                           sys[i].first + std::string(" with ") + sys[j].first + " in " + tag);
                    dc.add(base + j, base + i, 0,
                           sys[j].first + std::string(" with ") + sys[i].first + " in " + tag);
                }
            }
    };
    add_order(order_a, 0, "source");
    add_order(order_b, n, "target");
    for (std::size_t i = 0; i < n; ++i) {
        if (sys[i].second == Direction::Forward)
            dc.add(i, n + i, 0, sys[i].first + " forward: target time >= source time");
        else
            dc.add(n + i, i, 0, sys[i].first + " backward: target time <= source time");
    }
    Feasibility out;
    std::vector<std::string> cycle;
    auto sol = dc.solve(&cycle);
    if (!sol) {
        out.feasible = false;
        out.cycle = std::move(cycle);
        return out;
    }
    out.feasible = true;
    out.t.assign(sol->begin(), sol->begin() + n);
    out.t_prime.assign(sol->begin() + n, sol->end());
    return out;
}

// Increasing piecewise-linear map sending the solver's source times onto the
// profile's actual time labels, so witnesses start from the real object.
Rational monotone_map(const std::vector<long long>& sol_times,
                      const std::vector<Rational>& actual_times, long long x) {
    std::vector<std::pair<long long, Rational>> pts;
    for (std::size_t k = 0; k < sol_times.size(); ++k)
        pts.push_back({sol_times[k], actual_times[k]});
    std::sort(pts.begin(), pts.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    pts.erase(std::unique(pts.begin(), pts.end(),
                          [](const auto& a, const auto& b) { return a.first == b.first; }),
              pts.end());
    if (pts.empty()) return Rational(x);
    if (x <= pts.front().first)
        return pts.front().second - Rational(pts.front().first - x);
    if (x >= pts.back().first) return pts.back().second + Rational(x - pts.back().first);
    for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
        if (pts[k].first <= x && x <= pts[k + 1].first) {
            if (x == pts[k].first) return pts[k].second;
            if (x == pts[k + 1].first) return pts[k + 1].second;
            const long long span = pts[k + 1].first - pts[k].first;
            const Rational lo = pts[k].second, hi = pts[k + 1].second;
            // lo + (hi-lo) * (x-lo_x)/span
            Rational frac(x - pts[k].first, span);
            return lo + Rational((hi - lo).num * frac.num, (hi - lo).den * frac.den);
        }
    }
    return pts.back().second;
}

std::vector<StretchRecord> witness_from(const std::vector<std::pair<std::string, Direction>>& sys,
                                        const std::vector<Rational>& actual_times,
                                        const Feasibility& f) {
    std::vector<StretchRecord> w;
    for (std::size_t i = 0; i < sys.size(); ++i) {
        const Rational target = monotone_map(f.t, actual_times, f.t_prime[i]);
        if (target == actual_times[i]) continue;
        w.push_back({sys[i].first, sys[i].second, actual_times[i], target});
    }
    // backward factors move first, deepest stretch first; forward factors
    // afterwards, furthest stretch last (keeps transient labels distinct in
    // the common cases)
    std::stable_sort(w.begin(), w.end(), [](const StretchRecord& a, const StretchRecord& b) {
        const bool ab = a.direction == Direction::Backward;
        const bool bb = b.direction == Direction::Backward;
        if (ab != bb) return ab;
        return false;
    });
    return w;
}

}  // namespace

std::optional<OrderProfile> is_isomorphic(const MtDensityVector& a, const MtDensityVector& b,
                                          double tol) {
    if (a.space.size() != b.space.size()) return std::nullopt;

    // pair factors by system id; repeated ids match in time order
    struct Item {
        std::size_t pos;
        SpaceLabel label;
        std::size_t dim;
    };
    auto gather = [](const MtSpace& s) {
        std::map<std::string, std::vector<Item>> by_sys;
        for (std::size_t k = 0; k < s.factors.size(); ++k)
            by_sys[s.factors[k].label.system].push_back(
                {k, s.factors[k].label, s.factors[k].dim});
        return by_sys;
    };
    auto ga = gather(a.space), gb = gather(b.space);
    if (ga.size() != gb.size()) return std::nullopt;

    std::vector<std::pair<SpaceLabel, SpaceLabel>> renames;
    OrderProfile profile;
    for (auto& [sysname, items_a] : ga) {
        auto it = gb.find(sysname);
        if (it == gb.end() || it->second.size() != items_a.size()) return std::nullopt;
        auto& items_b = it->second;
        for (std::size_t k = 0; k < items_a.size(); ++k) {
            if (items_a[k].label.direction != items_b[k].label.direction) return std::nullopt;
            if (items_a[k].dim != items_b[k].dim) return std::nullopt;
            renames.push_back({items_a[k].label, items_b[k].label});
            profile.systems.push_back({sysname, items_a[k].label.direction, items_a[k].dim,
                                       items_a[k].label.time, items_b[k].label.time});
        }
    }

    // relabel a's times onto b's and compare the operators
    MtVector doubled = a.doubled();
    std::vector<MtSpace::Factor> nf = doubled.space.factors;
    for (auto& f : nf) {
        for (const auto& [from, to] : renames) {
            if (f.label == from) {
                f.label.time = to.time;
            } else if (f.label == dagger_twin(from)) {
                f.label.time = to.time;
            }
        }
    }
    MtDensityVector relabeled = a;
    try {
        MtSpace ns(nf);
        std::vector<bool> used(nf.size(), false);
        std::vector<std::size_t> old_pos(nf.size());
        for (std::size_t k = 0; k < ns.factors.size(); ++k) {
            bool found = false;
            for (std::size_t j = 0; j < nf.size(); ++j)
                if (!used[j] && nf[j].label == ns.factors[k].label &&
                    nf[j].dim == ns.factors[k].dim) {
                    old_pos[k] = j;
                    used[j] = true;
                    found = true;
                    break;
                }
            if (!found) return std::nullopt;
        }
        const auto old_dims = doubled.space.dims();
        const auto new_dims = ns.dims();
        std::vector<cplx> nc(doubled.coeffs.size());
        std::vector<std::size_t> ni(new_dims.size()), oi(old_dims.size());
        for (std::size_t flat = 0; flat < nc.size(); ++flat) {
            std::size_t rem = flat;
            for (std::size_t k = new_dims.size(); k-- > 0;) {
                ni[k] = rem % new_dims[k];
                rem /= new_dims[k];
            }
            for (std::size_t k = 0; k < ni.size(); ++k) oi[old_pos[k]] = ni[k];
            std::size_t of = 0;
            for (std::size_t k = 0; k < old_dims.size(); ++k) of = of * old_dims[k] + oi[k];
            nc[flat] = doubled.coeffs[of];
        }
        relabeled = MtDensityVector::from_doubled(MtVector(ns, std::move(nc)));
    } catch (const Error&) {
        return std::nullopt;
    }

    if (!(relabeled.space == b.space)) return std::nullopt;
    if (!relabeled.op.approx_equal(b.op, tol)) return std::nullopt;

    std::vector<Rational> ta, tb;
    for (const auto& e : profile.systems) {
        ta.push_back(e.time_a);
        tb.push_back(e.time_b);
    }
    profile.order_a = ranks_of(ta);
    profile.order_b = ranks_of(tb);
    return profile;
}

MtClass classify(const MtSpace& m) {
    bool has_f = false, has_b = false;
    for (const auto& f : m.factors) {
        (f.label.direction == Direction::Forward ? has_f : has_b) = true;
    }
    if (!has_f || !has_b) return MtClass::Other;
    bool two_to = true, two_ts = true;
    for (const auto& b : m.factors) {
        if (b.label.direction != Direction::Backward) continue;
        for (const auto& f : m.factors) {
            if (f.label.direction != Direction::Forward) continue;
            if (!(b.label.time < f.label.time)) two_to = false;
            if (!(f.label.time < b.label.time)) two_ts = false;
        }
    }
    if (two_to) return MtClass::TwoTO;
    if (two_ts) return MtClass::TwoTS;
    return MtClass::Other;
}

OrderVerdict decide_order(const OrderProfile& p) {
    std::vector<std::pair<std::string, Direction>> sys;
    std::vector<Rational> times_a, times_b;
    for (const auto& e : p.systems) {
        sys.push_back({e.system, e.direction});
        times_a.push_back(e.time_a);
        times_b.push_back(e.time_b);
    }
    Feasibility ab = feasible_transform(sys, p.order_a, p.order_b);
    Feasibility ba = feasible_transform(sys, p.order_b, p.order_a);

    OrderVerdict v;
    if (ab.feasible && ba.feasible) {
        v.relation = OrderRelation::Equal;
        v.witness = witness_from(sys, times_a, ab);
    } else if (ab.feasible) {
        v.relation = OrderRelation::StrictlyAbove;
        v.witness = witness_from(sys, times_a, ab);
    } else if (ba.feasible) {
        v.relation = OrderRelation::StrictlyBelow;
        v.witness = witness_from(sys, times_b, ba);
    } else {
        v.relation = OrderRelation::Incomparable;
    }
    if (!ab.feasible || !ba.feasible) {
        std::string cert;
        if (!ab.feasible) {
            cert += "forward direction blocked: ";
            for (const auto& s : ab.cycle) cert += s + "; ";
        }
        if (!ba.feasible) {
            cert += "reverse direction blocked: ";
            for (const auto& s : ba.cycle) cert += s + "; ";
        }
        v.certificate = cert;
    }
    return v;
}

namespace {

// all weak orderings = ordered set partitions, as surjective rank vectors
void enumerate_weak_orders(std::size_t n, std::vector<std::vector<int>>& out) {
    std::vector<int> v(n, 0);
    const std::size_t total = [&] {
        std::size_t t = 1;
        for (std::size_t k = 0; k < n; ++k) t *= n;
        return t;
    }();
    std::set<std::vector<int>> seen;
    for (std::size_t code = 0; code < total; ++code) {
        std::size_t rem = code;
        for (std::size_t k = 0; k < n; ++k) {
            v[k] = int(rem % n);
            rem /= n;
        }
        // compress ranks to 0..m so each weak order has one representative
        std::vector<int> sorted(v.begin(), v.end());
        std::sort(sorted.begin(), sorted.end());
        sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
        std::vector<int> canon(n);
        for (std::size_t k = 0; k < n; ++k)
            canon[k] = int(std::lower_bound(sorted.begin(), sorted.end(), v[k]) -
                           sorted.begin());
        seen.insert(canon);
    }
    out.assign(seen.begin(), seen.end());
}

std::string order_str(const std::vector<std::pair<std::string, Direction>>& sys,
                      const std::vector<int>& ranks) {
    std::vector<std::pair<int, std::string>> items;
    for (std::size_t k = 0; k < sys.size(); ++k)
        items.push_back({ranks[k], sys[k].first +
                                       (sys[k].second == Direction::Forward ? "^" : "_")});
    std::sort(items.begin(), items.end());
    std::string s;
    for (std::size_t k = 0; k < items.size(); ++k) {
        if (k) s += items[k].first == items[k - 1].first ? "=" : "<";
        s += items[k].second;
    }
    return s;
}

MtClass classify_ranks(const std::vector<std::pair<std::string, Direction>>& sys,
                       const std::vector<int>& ranks) {
    bool has_f = false, has_b = false;
    for (const auto& [name, dir] : sys) (dir == Direction::Forward ? has_f : has_b) = true;
    if (!has_f || !has_b) return MtClass::Other;
    bool two_to = true, two_ts = true;
    for (std::size_t i = 0; i < sys.size(); ++i) {
        if (sys[i].second != Direction::Backward) continue;
        for (std::size_t j = 0; j < sys.size(); ++j) {
            if (sys[j].second != Direction::Forward) continue;
            if (!(ranks[i] < ranks[j])) two_to = false;
            if (!(ranks[j] < ranks[i])) two_ts = false;
        }
    }
    if (two_to) return MtClass::TwoTO;
    if (two_ts) return MtClass::TwoTS;
    return MtClass::Other;
}

}  // namespace

ExtremalityReport verify_extremality(
    const std::vector<std::pair<std::string, Direction>>& sys) {
    ExtremalityReport rep;
    rep.direction_assignments = 1;
    const std::size_t n = sys.size();
    std::vector<std::vector<int>> orders;
    enumerate_weak_orders(n, orders);
    rep.orderings_checked = orders.size();

    auto relation = [&](const std::vector<int>& a, const std::vector<int>& b) {
        OrderProfile p;
        for (std::size_t k = 0; k < n; ++k)
            p.systems.push_back({sys[k].first, sys[k].second, 2, Rational(a[k]), Rational(b[k])});
        p.order_a = a;
        p.order_b = b;
        return decide_order(p).relation;
    };

    const std::size_t m = orders.size();
    std::vector<std::vector<OrderRelation>> rel(m, std::vector<OrderRelation>(m));
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) rel[i][j] = relation(orders[i], orders[j]);

    rep.ok = true;
    auto fail = [&](std::string why) {
        rep.ok = false;
        rep.failures.push_back(std::move(why));
    };

    // reflexivity, antisymmetry, transitivity
    for (std::size_t i = 0; i < m; ++i)
        if (rel[i][i] != OrderRelation::Equal) fail("not reflexive: " + order_str(sys, orders[i]));
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            if (rel[i][j] == OrderRelation::StrictlyAbove &&
                rel[j][i] != OrderRelation::StrictlyBelow)
                fail("antisymmetry broken: " + order_str(sys, orders[i]) + " vs " +
                     order_str(sys, orders[j]));
            if (rel[i][j] == OrderRelation::Equal && rel[j][i] != OrderRelation::Equal)
                fail("equality not symmetric");
        }
    auto geq = [&](OrderRelation r) {
        return r == OrderRelation::Equal || r == OrderRelation::StrictlyAbove;
    };
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            if (!geq(rel[i][j])) continue;
            for (std::size_t k = 0; k < m; ++k) {
                if (!geq(rel[j][k])) continue;
                if (!geq(rel[i][k]))
                    fail("transitivity broken: " + order_str(sys, orders[i]) + " >= " +
                         order_str(sys, orders[j]) + " >= " + order_str(sys, orders[k]));
            }
        }

    // 2TO minimal, 2TS maximal, strictly so against every Other ordering
    bool has_f = false, has_b = false;
    for (const auto& [name, dir] : sys) (dir == Direction::Forward ? has_f : has_b) = true;
    if (has_f && has_b) {
        for (std::size_t i = 0; i < m; ++i) {
            const MtClass ci = classify_ranks(sys, orders[i]);
            for (std::size_t j = 0; j < m; ++j) {
                const MtClass cj = classify_ranks(sys, orders[j]);
                if (ci == MtClass::TwoTS && cj != MtClass::TwoTS &&
                    rel[i][j] != OrderRelation::StrictlyAbove)
                    fail("2TS not strictly above " + order_str(sys, orders[j]));
                if (ci == MtClass::TwoTO && cj != MtClass::TwoTO &&
                    rel[i][j] != OrderRelation::StrictlyBelow)
                    fail("2TO not strictly below " + order_str(sys, orders[j]));
                if (ci == MtClass::TwoTS && cj == MtClass::TwoTS &&
                    rel[i][j] != OrderRelation::Equal)
                    fail("2TS orderings not mutually reachable");
                if (ci == MtClass::TwoTO && cj == MtClass::TwoTO &&
                    rel[i][j] != OrderRelation::Equal)
                    fail("2TO orderings not mutually reachable");
            }
        }
    }

    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = i + 1; j < m; ++j)
            if (rel[i][j] == OrderRelation::Incomparable)
                rep.incomparable_pairs.push_back(
                    {order_str(sys, orders[i]), order_str(sys, orders[j])});
    return rep;
}

ExtremalityReport verify_extremality_all(std::size_t n) {
    ExtremalityReport total;
    total.ok = true;
    for (std::size_t mask = 0; mask < (std::size_t(1) << n); ++mask) {
        std::vector<std::pair<std::string, Direction>> sys;
        for (std::size_t k = 0; k < n; ++k)
            sys.push_back({"S" + std::to_string(k + 1),
                           (mask >> k) & 1 ? Direction::Backward : Direction::Forward});
        ExtremalityReport rep = verify_extremality(sys);
        total.direction_assignments += 1;
        total.orderings_checked += rep.orderings_checked;
        if (!rep.ok) {
            total.ok = false;
            for (auto& f : rep.failures) total.failures.push_back(std::move(f));
        }
        for (auto& p : rep.incomparable_pairs)
            total.incomparable_pairs.push_back(std::move(p));
    }
    return total;
}

MtSpace replay_witness(const MtSpace& start, const std::vector<StretchRecord>& witness) {
    MtSpace cur = start;
    for (const auto& w : witness) {
        SpaceLabel lbl;
        bool found = false;
        for (const auto& f : cur.factors)
            if (f.label.system == w.system && f.label.time == w.from_time &&
                f.label.direction == w.direction) {
                lbl = f.label;
                found = true;
            }
        if (!found)
            throw SpaceMismatch("replay_witness: no factor " + w.system + " at " +
                                w.from_time.str());
        cur = free_stretch(cur, lbl, w.to_time);
    }
    return cur;
}

}  // namespace qmts
