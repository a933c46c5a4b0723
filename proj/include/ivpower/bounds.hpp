#pragma once

// Population bound engine: Manski bounds, widest-width bounds, the two-layer
// SV bounds, sign identification, the C1..C4 decomposition and IIP.
//
// SV bounds are computed in two stages. plan_sv() fixes every discrete choice
// (CPS support at x, the matched CPS point at each candidate x', and the
// membership of x' in the four covariate sets); evaluate_terms() then computes
// the first-layer terms under any parameter vector sharing that structure.
// Population mode evaluates once at the true parameters; estimation mode
// re-evaluates under simulated parameter draws.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "model.hpp"

namespace ivpower {

struct Interval {
    double lower = 0.0;
    double upper = 0.0;
    bool empty = false;

    double width() const { return upper - lower; }
    bool contains(const Interval& o, double tol = 1e-9) const {
        return o.lower >= lower - tol && o.upper <= upper + tol;
    }
    static Interval none() { return {0.0, 0.0, true}; }
};

enum class Sign { negative = -1, zero = 0, positive = 1 };

inline std::string to_string(Sign s) {
    switch (s) {
        case Sign::negative: return "-";
        case Sign::zero: return "0";
        case Sign::positive: return "+";
    }
    return "?";
}

inline Sign sign_from_string(const std::string& s) {
    if (s == "+") return Sign::positive;
    if (s == "-") return Sign::negative;
    if (s == "0") return Sign::zero;
    throw ConfigError("unknown sign '" + s + "'");
}

struct Decomposition {
    double c1 = 0.0, c2 = 0.0, c3 = 0.0, c4 = 0.0;
    double sum() const { return c1 + c2 + c3 + c4; }
};

struct BoundsReport {
    Vec x;
    Interval manski;
    Interval widest;
    Interval sv;
    Sign sign = Sign::zero;
    bool relevant = true;
    Decomposition decomposition;
    double iip = 0.0;
    // Population mode: number of candidate x' where the sign of H disagreed
    // with the latent index comparison.
    int sign_mismatches = 0;
    std::string note;
};

struct MatchConfig {
    double tolerance_c = 0.01;
    // Explicit candidate x' values; when empty, built from the covariate law.
    std::vector<Vec> covariate_grid;
    double grid_step = 0.01;
    double grid_halfwidth = 4.0;
    // Population mode: exact matching when the CPS does not depend on x.
    bool exact_when_pi_zero = true;

    void validate() const {
        if (!(tolerance_c > 0.0)) throw ConfigError("field 'tolerance_c': must be > 0");
        if (!(grid_step > 0.0)) throw ConfigError("field 'grid_step': must be > 0");
    }
};

inline constexpr double kExactMatch = 1e-10;
inline constexpr double kTie = 1e-12;

inline double effective_tolerance(const DgpSpec& s, const MatchConfig& m) {
    const bool pi_zero = std::all_of(s.pi.begin(), s.pi.end(), [](double v) { return v == 0.0; });
    return (m.exact_when_pi_zero && pi_zero) ? kExactMatch : m.tolerance_c;
}

// Cells at a CPS point, recomputing each component's index from its raw
// instrument value so that the point can be re-evaluated under other
// parameters.
inline RawCells point_cells(const DgpSpec& s, std::span<const double> x, const CpsPoint& pt) {
    const double a1 = nu1(s, 1, x);
    const double a0 = nu1(s, 0, x);
    const double px = dot(s.pi, x);
    RawCells acc;
    for (const auto& c : pt.components)
        acc += cells_at_index(a1, a0, px + dot(s.gamma, c.z), s.rho).scaled(c.weight);
    return acc;
}

inline double point_p(const DgpSpec& s, std::span<const double> x, const CpsPoint& pt) {
    const double px = dot(s.pi, x);
    double p = 0.0;
    for (const auto& c : pt.components) p += c.weight * normal_cdf(px + dot(s.gamma, c.z));
    return p;
}

// Cells at x' for a matched point q, evaluated at the CPS value p_target of
// the support point it was matched to. All component indices are shifted by a
// common delta so that the mixture CPS equals p_target exactly; matching within
// the tolerance only decides where Pr[. | x', p] is well defined.
inline RawCells shifted_cells(const DgpSpec& s, std::span<const double> xp, const CpsPoint& q,
                              double p_target, double target_index) {
    const double a1 = nu1(s, 1, xp);
    const double a0 = nu1(s, 0, xp);
    if (q.components.size() == 1) return cells_at_index(a1, a0, target_index, s.rho);
    const double px = dot(s.pi, xp);
    Vec idx;
    idx.reserve(q.components.size());
    double pq = 0.0;
    for (const auto& c : q.components) {
        idx.push_back(px + dot(s.gamma, c.z));
        pq += c.weight * normal_cdf(idx.back());
    }
    double delta = 0.0;
    if (pq > 0.0 && pq < 1.0) delta = target_index - inv_normal_cdf(pq);
    for (int it = 0; it < 30; ++it) {
        double f = -p_target;
        double df = 0.0;
        for (std::size_t k = 0; k < idx.size(); ++k) {
            f += q.components[k].weight * normal_cdf(idx[k] + delta);
            df += q.components[k].weight * std_normal_pdf(idx[k] + delta);
        }
        if (std::abs(f) < 1e-15 || df <= 0.0) break;
        delta -= f / df;
    }
    RawCells acc;
    for (std::size_t k = 0; k < idx.size(); ++k)
        acc += cells_at_index(a1, a0, idx[k] + delta, s.rho).scaled(q.components[k].weight);
    return acc;
}

// Latent index whose normal CDF is the CPS of pt.
inline double point_index(const DgpSpec& s, std::span<const double> x, const CpsPoint& pt, double p) {
    if (pt.components.size() == 1) return dot(s.pi, x) + dot(s.gamma, pt.components.front().z);
    if (p <= 0.0) return -kInf;
    if (p >= 1.0) return kInf;
    return inv_normal_cdf(p);
}

// --- Manski ----------------------------------------------------------------------

inline Interval manski_bounds(const CellProbs& c) {
    return {-(c.p10 + c.p01), c.p11 + c.p00};
}
inline Interval manski_bounds(const RawCells& c) { return {-(c.p10 + c.p01), c.p11 + c.p00}; }

// --- sign ----------------------------------------------------------------------------

inline Sign sign_of(double v, double tol = kTie) {
    if (v > tol) return Sign::positive;
    if (v < -tol) return Sign::negative;
    return Sign::zero;
}

inline Sign identify_sign(const DgpSpec& s, std::span<const double> x, const CpsSupport& sup) {
    if (sup.singleton()) throw IrrelevantInstruments();
    const double hi = point_cells(s, x, sup.highest()).pr_y1();
    const double lo = point_cells(s, x, sup.lowest()).pr_y1();
    return sign_of(hi - lo);
}

inline Sign identify_sign(const DgpSpec& s, std::span<const double> x, const IvSetDef& ivset) {
    return identify_sign(s, x, cps_support(s, x, ivset));
}

// sgn[nu1(1,x) - nu1(0,x)] = sgn(alpha) in the linear-index model.
inline Sign latent_sign(const DgpSpec& s) { return sign_of(s.alpha, 0.0); }

// --- widest bounds ----------------------------------------------------------

// Closed form in terms of the cells at the lowest and highest CPS points.
inline Interval widest_from_extremes(Sign sign, const RawCells& lo, double p_lo, const RawCells& hi,
                                     double p_hi) {
    switch (sign) {
        case Sign::positive:
            return {hi.pr_y1() - lo.pr_y1(), hi.p11 + (1.0 - p_hi) - lo.p10};
        case Sign::negative:
            return {hi.p11 - lo.p10 - p_lo, hi.pr_y1() - lo.pr_y1()};
        case Sign::zero:
            return {0.0, 0.0};
    }
    return {};
}

inline Interval widest_bounds(const DgpSpec& s, std::span<const double> x, const CpsSupport& sup) {
    const Sign sign = identify_sign(s, x, sup);
    const auto lo = point_cells(s, x, sup.lowest());
    const auto hi = point_cells(s, x, sup.highest());
    return widest_from_extremes(sign, lo, sup.p_lo, hi, sup.p_hi);
}

inline Interval widest_bounds(const DgpSpec& s, std::span<const double> x, const IvSetDef& ivset) {
    return widest_bounds(s, x, cps_support(s, x, ivset));
}

// --- h and H -------------------------------------------------------------------------

// h(x,x',p,p') from cells already evaluated at (x',p), (x',p'), (x,p), (x,p').
inline double h_value(const RawCells& xp_p, const RawCells& xp_pp, const RawCells& x_p,
                      const RawCells& x_pp) {
    return xp_p.p11 - xp_pp.p11 - x_pp.p10 + x_p.p10;
}

// h at CPS values p, p' that must be attained at both x and x' (within tol).
inline double h_func(const DgpSpec& s, std::span<const double> x, std::span<const double> xp,
                     double p, double pp, const IvSetDef& ivset, double tol = kExactMatch) {
    auto find = [&](std::span<const double> at, double target) -> CpsPoint {
        const auto sup = cps_support(s, at, ivset);
        const CpsPoint* best = nullptr;
        for (const auto& pt : sup.points)
            if (std::abs(pt.p - target) < tol && (!best || std::abs(pt.p - target) < std::abs(best->p - target)))
                best = &pt;
        if (!best) throw DataError("probabilities not well defined: no instrument value attains p=" +
                                   std::to_string(target));
        return *best;
    };
    const auto q = find(xp, p);
    const auto qq = find(xp, pp);
    const auto r = find(x, p);
    const auto rr = find(x, pp);
    return h_value(point_cells(s, xp, q), point_cells(s, xp, qq), point_cells(s, x, r),
                   point_cells(s, x, rr));
}

// --- SV plan -------------------------------------------------------------------------

struct SvMatch {
    std::size_t grid_index;
    CpsPoint q;  // the CPS point at x' matched to support point i at x
};

struct SvPlan {
    Vec x;
    Sign sign = Sign::zero;
    CpsSupport support;
    std::vector<Vec> grid;
    // Per support point i at x: matched points at the x' of each covariate set.
    std::vector<std::vector<SvMatch>> x1p, x0p, x1m, x0m;
    std::size_t n_x0p = 0, n_x0m = 0, n_x1p = 0, n_x1m = 0;
    std::size_t excluded = 0;
    int sign_mismatches = 0;
};

inline std::vector<Vec> candidate_grid(const DgpSpec& s, std::span<const double> x, const MatchConfig& m) {
    auto grid = m.covariate_grid.empty() ? covariate_grid(s.covariate_dist, m.grid_step, m.grid_halfwidth)
                                         : m.covariate_grid;
    const Vec xv(x.begin(), x.end());
    if (std::find(grid.begin(), grid.end(), xv) == grid.end()) grid.push_back(xv);
    return grid;
}

// Builds the SV structure. Requires an identified sign (throws
// IrrelevantInstruments otherwise). `population` enables the latent-index
// cross-check of every H sign.
inline SvPlan plan_sv(const DgpSpec& s, std::span<const double> x, const IvSetDef& ivset,
                      const MatchConfig& m, double tol, bool population) {
    m.validate();
    SvPlan plan;
    plan.x.assign(x.begin(), x.end());
    plan.support = cps_support(s, x, ivset);
    plan.sign = identify_sign(s, x, plan.support);
    plan.grid = candidate_grid(s, x, m);
    const auto& P = plan.support.points;
    const std::size_t np = P.size();
    plan.x1p.resize(np);
    plan.x0p.resize(np);
    plan.x1m.resize(np);
    plan.x0m.resize(np);

    std::vector<RawCells> cx(np);
    Vec tx(np);
    for (std::size_t i = 0; i < np; ++i) {
        cx[i] = point_cells(s, x, P[i]);
        tx[i] = point_index(s, x, P[i], cx[i].p());
    }

    const double a1x = nu1(s, 1, x);
    const double a0x = nu1(s, 0, x);

    for (std::size_t g = 0; g < plan.grid.size(); ++g) {
        const Vec& xp = plan.grid[g];
        const auto sup_xp = cps_support(s, xp, ivset);
        // Closest point at x' to each P_i, if within tolerance.
        std::vector<const CpsPoint*> match(np, nullptr);
        std::size_t n_matched = 0;
        {
            std::size_t k = 0;
            for (std::size_t i = 0; i < np; ++i) {
                const double target = P[i].p;
                while (k + 1 < sup_xp.points.size() &&
                       std::abs(sup_xp.points[k + 1].p - target) <= std::abs(sup_xp.points[k].p - target))
                    ++k;
                const auto& cand = sup_xp.points[k];
                if (std::abs(cand.p - target) < tol) {
                    match[i] = &cand;
                    ++n_matched;
                }
            }
        }
        if (n_matched < 2) {
            ++plan.excluded;
            continue;
        }
        std::vector<RawCells> cq(np);
        for (std::size_t i = 0; i < np; ++i)
            if (match[i]) cq[i] = shifted_cells(s, xp, *match[i], cx[i].p(), tx[i]);

        // H(x,x') and H(x',x) over ordered pairs P_i > P_j, both matched.
        double num0 = 0.0, num1 = 0.0, den = 0.0;
        for (std::size_t i = 0; i < np; ++i) {
            if (!match[i]) continue;
            for (std::size_t j = 0; j < i; ++j) {
                if (!match[j]) continue;
                const double w = P[i].mass * P[j].mass;
                num0 += w * h_value(cq[i], cq[j], cx[i], cx[j]);
                num1 += w * h_value(cx[i], cx[j], cq[i], cq[j]);
                den += w;
            }
        }
        const double H0 = num0 / den;
        const double H1 = num1 / den;
        const bool in0p = H0 >= -kTie, in0m = H0 <= kTie;
        const bool in1p = H1 >= -kTie, in1m = H1 <= kTie;

        if (population) {
            const double l0 = nu1(s, 1, xp) - a0x;
            const double l1 = a1x - nu1(s, 0, xp);
            if ((H0 > kTie && l0 < 0.0) || (H0 < -kTie && l0 > 0.0)) ++plan.sign_mismatches;
            if ((H1 > kTie && l1 < 0.0) || (H1 < -kTie && l1 > 0.0)) ++plan.sign_mismatches;
        }
        plan.n_x0p += in0p;
        plan.n_x0m += in0m;
        plan.n_x1p += in1p;
        plan.n_x1m += in1m;
        for (std::size_t i = 0; i < np; ++i) {
            if (!match[i]) continue;
            if (in1p) plan.x1p[i].push_back({g, *match[i]});
            if (in0p) plan.x0p[i].push_back({g, *match[i]});
            if (in1m) plan.x1m[i].push_back({g, *match[i]});
            if (in0m) plan.x0m[i].push_back({g, *match[i]});
        }
    }
    return plan;
}

// First-layer terms per support point i:
//   A_i = p11(x,P_i) + sup_{x' in X1+} p10(x',P_i)
//   B_i = p10(x,P_i) + P_i inf_{x' in X0+} Pr[Y=1 | x',P_i,D=1]
//   C_i = p11(x,P_i) + (1-P_i) inf_{x' in X1-} Pr[Y=1 | x',P_i,D=0]
//   D_i = p10(x,P_i) + sup_{x' in X0-} p11(x',P_i)
// with sup over an empty set 0 and inf over an empty set 1. Cells at x' are
// evaluated at p = P_i (see shifted_cells), so P_i Pr[Y=1|x',P_i,D=1] is
// simply p11(x',P_i).
struct SvTerms {
    Vec p;
    std::vector<RawCells> cells;
    Vec A, B, C, D;
};

inline SvTerms evaluate_terms(const DgpSpec& s, const SvPlan& plan) {
    const auto& P = plan.support.points;
    const std::size_t np = P.size();
    SvTerms t;
    t.p.resize(np);
    t.cells.resize(np);
    t.A.resize(np);
    t.B.resize(np);
    t.C.resize(np);
    t.D.resize(np);
    for (std::size_t i = 0; i < np; ++i) {
        t.cells[i] = point_cells(s, plan.x, P[i]);
        t.p[i] = t.cells[i].p();
        const double pi = t.p[i];
        const double ti = point_index(s, plan.x, P[i], pi);

        // Single-index points need one bivariate CDF per term.
        auto p10_at = [&](const SvMatch& mm) {
            const auto& xp = plan.grid[mm.grid_index];
            if (mm.q.components.size() == 1) {
                const double a0 = nu1(s, 0, xp);
                return normal_cdf(a0) - bvn_cdf(a0, ti, s.rho);
            }
            return shifted_cells(s, xp, mm.q, pi, ti).p10;
        };
        auto p11_at = [&](const SvMatch& mm) {
            const auto& xp = plan.grid[mm.grid_index];
            if (mm.q.components.size() == 1) return bvn_cdf(nu1(s, 1, xp), ti, s.rho);
            return shifted_cells(s, xp, mm.q, pi, ti).p11;
        };

        double a = 0.0;
        for (const auto& mm : plan.x1p[i]) a = std::max(a, p10_at(mm));
        double b = pi;
        for (const auto& mm : plan.x0p[i]) b = std::min(b, p11_at(mm));
        double c = 1.0 - pi;
        for (const auto& mm : plan.x1m[i]) c = std::min(c, p10_at(mm));
        double d = 0.0;
        for (const auto& mm : plan.x0m[i]) d = std::max(d, p11_at(mm));

        t.A[i] = t.cells[i].p11 + a;
        t.B[i] = t.cells[i].p10 + b;
        t.C[i] = t.cells[i].p11 + c;
        t.D[i] = t.cells[i].p10 + d;
    }
    return t;
}

inline Interval sv_from_terms(const SvTerms& t) {
    return {*std::max_element(t.A.begin(), t.A.end()) - *std::min_element(t.B.begin(), t.B.end()),
            *std::min_element(t.C.begin(), t.C.end()) - *std::max_element(t.D.begin(), t.D.end())};
}

inline Interval sv_bounds(const DgpSpec& s, std::span<const double> x, const IvSetDef& ivset,
                          const MatchConfig& m = {}) {
    const auto plan = plan_sv(s, x, ivset, m, effective_tolerance(s, m), true);
    if (plan.sign == Sign::zero) return {0.0, 0.0};
    return sv_from_terms(evaluate_terms(s, plan));
}

// --- decomposition and IIP ---------------------------------------------------------

inline Decomposition decompose(Sign sign, const Interval& manski, const Interval& widest,
                               const Interval& sv) {
    Decomposition d;
    const double ate_le0 = sign != Sign::positive ? 1.0 : 0.0;
    const double ate_ge0 = sign != Sign::negative ? 1.0 : 0.0;
    d.c1 = ate_le0 * manski.upper - ate_ge0 * manski.lower;
    d.c2 = manski.width() - widest.width() - d.c1;
    d.c3 = widest.width() - sv.width();
    d.c4 = sv.width();
    return d;
}

// Decomposition when the instruments carry no information: the whole Manski
// width is residual.
inline Decomposition irrelevant_decomposition(const Interval& manski) {
    return {0.0, 0.0, 0.0, manski.width()};
}

inline BoundsReport population_report(const DgpSpec& s, std::span<const double> x,
                                      const IvSetDef& ivset, const MatchConfig& m = {}) {
    BoundsReport r;
    r.x.assign(x.begin(), x.end());
    r.manski = manski_bounds(marginal_cell_probs(s, x, ivset));
    SvPlan plan;
    try {
        plan = plan_sv(s, x, ivset, m, effective_tolerance(s, m), true);
    } catch (const IrrelevantInstruments&) {
        r.relevant = false;
        r.sign = Sign::zero;
        r.widest = r.manski;
        r.sv = r.manski;
        r.decomposition = irrelevant_decomposition(r.manski);
        r.iip = 0.0;
        r.note = "irrelevant instruments";
        return r;
    }
    r.sign = plan.sign;
    r.sign_mismatches = plan.sign_mismatches;
    if (plan.sign == Sign::zero) {
        r.widest = {0.0, 0.0};
        r.sv = {0.0, 0.0};
        r.note = "zero treatment effect: point identified";
    } else {
        r.widest = widest_bounds(s, x, plan.support);
        r.sv = sv_from_terms(evaluate_terms(s, plan));
    }
    r.decomposition = decompose(r.sign, r.manski, r.widest, r.sv);
    r.iip = 1.0 - r.widest.width();
    return r;
}

inline Decomposition decompose(const DgpSpec& s, std::span<const double> x, const IvSetDef& ivset,
                               const MatchConfig& m = {}) {
    return population_report(s, x, ivset, m).decomposition;
}

inline double iip(const DgpSpec& s, std::span<const double> x, const IvSetDef& ivset) {
    const auto sup = cps_support(s, x, ivset);
    if (sup.singleton()) return 0.0;
    const Sign sign = identify_sign(s, x, sup);
    if (sign == Sign::zero) return 1.0;
    return 1.0 - widest_bounds(s, x, sup).width();
}

inline double iip_average(const DgpSpec& s, const IvSetDef& ivset, const WeightedPoints& xw) {
    double tot = 0.0;
    for (double w : xw.weights) tot += w;
    if (std::abs(tot - 1.0) > 1e-9) throw ConfigError("iip_average: weights must sum to 1");
    double acc = 0.0;
    for (std::size_t k = 0; k < xw.points.size(); ++k) acc += xw.weights[k] * iip(s, xw.points[k], ivset);
    return acc;
}

// --- serialization ---------------------------------------------------------------------

inline json interval_to_json(const Interval& i) {
    if (i.empty) return json{{"empty", true}};
    return json{{"lower", i.lower}, {"upper", i.upper}};
}
inline Interval interval_from_json(const json& j) {
    if (j.value("empty", false)) return Interval::none();
    return {j.at("lower").get<double>(), j.at("upper").get<double>()};
}

inline json report_to_json(const BoundsReport& r) {
    return json{{"x", r.x},
                {"manski", interval_to_json(r.manski)},
                {"widest", interval_to_json(r.widest)},
                {"sv", interval_to_json(r.sv)},
                {"sign", to_string(r.sign)},
                {"relevant", r.relevant},
                {"decomposition",
                 {{"C1", r.decomposition.c1}, {"C2", r.decomposition.c2}, {"C3", r.decomposition.c3},
                  {"C4", r.decomposition.c4}}},
                {"iip", r.iip},
                {"sign_mismatches", r.sign_mismatches},
                {"note", r.note}};
}

inline BoundsReport report_from_json(const json& j) {
    BoundsReport r;
    r.x = j.at("x").get<Vec>();
    r.manski = interval_from_json(j.at("manski"));
    r.widest = interval_from_json(j.at("widest"));
    r.sv = interval_from_json(j.at("sv"));
    r.sign = sign_from_string(j.at("sign").get<std::string>());
    r.relevant = j.at("relevant").get<bool>();
    const auto& d = j.at("decomposition");
    r.decomposition = {d.at("C1").get<double>(), d.at("C2").get<double>(), d.at("C3").get<double>(),
                       d.at("C4").get<double>()};
    r.iip = j.at("iip").get<double>();
    r.sign_mismatches = j.value("sign_mismatches", 0);
    r.note = j.value("note", std::string());
    return r;
}

inline std::string report_csv_header() { return "x,L_M,U_M,L_bar,U_bar,L_SV,U_SV,sign,C1,C2,C3,C4,IIP"; }

inline std::string fmt_num(double v, int prec = 6) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(prec);
    os << v;
    return os.str();
}

inline std::string report_csv_row(const BoundsReport& r, int prec = 6) {
    std::ostringstream os;
    for (std::size_t k = 0; k < r.x.size(); ++k) os << (k ? ";" : "") << fmt_num(r.x[k], prec);
    for (double v : {r.manski.lower, r.manski.upper, r.widest.lower, r.widest.upper, r.sv.lower, r.sv.upper})
        os << ',' << fmt_num(v, prec);
    os << ',' << to_string(r.sign);
    for (double v : {r.decomposition.c1, r.decomposition.c2, r.decomposition.c3, r.decomposition.c4, r.iip})
        os << ',' << fmt_num(v, prec);
    return os.str();
}

}  // namespace ivpower
