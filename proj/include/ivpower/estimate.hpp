#pragma once

// Estimation mode: fit the threshold model, rebuild a DgpSpec from the
// estimates and the empirical covariate/instrument laws, run the bound engine
// on it, and correct the intersection bounds by simulation.
//
// The correction follows the precision-adjusted intersection-bound recipe:
// parameter draws theta* ~ N(theta_hat, V_hat) give the sampling spread s(v)
// of every bounding term v; a sup-type bound max_v T(v) is estimated by
// max_v [T_hat(v) - k s(v)] and an inf-type bound min_v T(v) by
// min_v [T_hat(v) + k s(v)], with k the q-quantile of the simulated maximum
// studentized deviation over an adaptively selected set of near-binding
// terms. q = 1/2 gives the half-median-unbiased estimate.

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "bounds.hpp"
#include "data.hpp"
#include "fit.hpp"
#include "parallel.hpp"

namespace ivpower {

enum class WidestTerms { extremes, all };

struct HmueConfig {
    int n_sim = 1000;
    Vec levels{0.5, 0.90, 0.95, 0.99};
    std::uint64_t seed = 1;
    // extremes: the widest bounds use the closed form at the estimated CPS
    // extremes (one term per side); all: every pair of support points.
    WidestTerms widest = WidestTerms::extremes;

    void validate() const {
        if (n_sim < 100) throw ConfigError("field 'n_sim': must be >= 100");
        for (double l : levels)
            if (!(l >= 0.5 && l < 1.0)) throw ConfigError("field 'levels': each level must lie in [0.5, 1)");
    }
};

struct EstimateOptions {
    bool intercept = true;
    // Covariate columns with at most this many distinct values are treated as
    // discrete; the others as normal with the sample mean and sd.
    std::size_t discrete_max_unique = 20;
    // Wald test of gamma = 0 at this level decides instrument relevance; 0
    // disables the test.
    double relevance_level = 0.05;
    BiprobitOptions biprobit;
};

// --- small utilities -----------------------------------------------------------

inline double hausdorff_interval(const Interval& a, const Interval& b) {
    if (a.empty || b.empty) return kInf;
    return std::max(std::abs(a.lower - b.lower), std::abs(a.upper - b.upper));
}

struct CpsEntry {
    Vec x;
    Vec z;
    double p;
};

// Unordered pairs (i <= j) with |p_i - p_j| < c, reflexive pairs included.
inline std::vector<std::pair<std::size_t, std::size_t>> matched_pairs(const std::vector<CpsEntry>& table,
                                                                      double c) {
    if (!(c > 0.0)) throw ConfigError("matched_pairs: c must be > 0");
    std::vector<std::size_t> order(table.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return table[a].p < table[b].p; });
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t a = 0; a < order.size(); ++a)
        for (std::size_t b = a; b < order.size() && table[order[b]].p - table[order[a]].p < c; ++b)
            out.emplace_back(std::min(order[a], order[b]), std::max(order[a], order[b]));
    std::sort(out.begin(), out.end());
    return out;
}

// Type-7 sample quantile.
inline double quantile(Vec v, double q) {
    if (v.empty()) throw NumericalError("quantile of an empty sample");
    std::sort(v.begin(), v.end());
    const double h = (static_cast<double>(v.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

// --- intersection-bound correction ---------------------------------------------------

// Bounding terms: point estimates and their values under each parameter draw.
struct TermSample {
    Vec hat;
    std::vector<Vec> draws;  // draws[r][v]
};

struct TermGeometry {
    Vec s;                      // sampling sd per term
    std::vector<Vec> z;         // studentized deviations, oriented so larger = worse
    double k_pre = 0.0;
    std::vector<std::size_t> selected;
};

enum class BoundKind { sup, inf };

// inf-type bound min_v T(v): deviations (T* - T_hat)/s; sup-type: their negatives.
inline TermGeometry term_geometry(const TermSample& ts, BoundKind kind, std::size_t n_obs) {
    const std::size_t V = ts.hat.size();
    const std::size_t R = ts.draws.size();
    TermGeometry g;
    g.s.assign(V, 0.0);
    for (std::size_t v = 0; v < V; ++v) {
        double mean = 0.0;
        for (std::size_t r = 0; r < R; ++r) mean += ts.draws[r][v];
        mean /= static_cast<double>(R);
        double ss = 0.0;
        for (std::size_t r = 0; r < R; ++r) ss += (ts.draws[r][v] - mean) * (ts.draws[r][v] - mean);
        g.s[v] = std::sqrt(ss / static_cast<double>(R > 1 ? R - 1 : 1));
    }
    const double orient = kind == BoundKind::inf ? 1.0 : -1.0;
    g.z.assign(R, Vec(V, 0.0));
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t v = 0; v < V; ++v)
            g.z[r][v] = g.s[v] > 1e-14 ? orient * (ts.draws[r][v] - ts.hat[v]) / g.s[v] : 0.0;

    const double gamma_n = 1.0 - 0.1 / std::log(std::max<double>(static_cast<double>(n_obs), 3.0));
    Vec sup_all(R);
    for (std::size_t r = 0; r < R; ++r) sup_all[r] = *std::max_element(g.z[r].begin(), g.z[r].end());
    g.k_pre = std::max(0.0, quantile(sup_all, gamma_n));

    // Terms that can plausibly bind.
    if (kind == BoundKind::inf) {
        double best = kInf;
        for (std::size_t v = 0; v < V; ++v) best = std::min(best, ts.hat[v] + g.k_pre * g.s[v]);
        for (std::size_t v = 0; v < V; ++v)
            if (ts.hat[v] <= best + 2.0 * g.k_pre * g.s[v] + 1e-15) g.selected.push_back(v);
    } else {
        double best = -kInf;
        for (std::size_t v = 0; v < V; ++v) best = std::max(best, ts.hat[v] - g.k_pre * g.s[v]);
        for (std::size_t v = 0; v < V; ++v)
            if (ts.hat[v] >= best - 2.0 * g.k_pre * g.s[v] - 1e-15) g.selected.push_back(v);
    }
    return g;
}

inline double corrected_bound(const TermSample& ts, const TermGeometry& g, BoundKind kind, double q) {
    const std::size_t R = ts.draws.size();
    Vec sup_sel(R);
    for (std::size_t r = 0; r < R; ++r) {
        double m = -kInf;
        for (auto v : g.selected) m = std::max(m, g.z[r][v]);
        sup_sel[r] = m;
    }
    const double k = quantile(sup_sel, q);
    double out = kind == BoundKind::inf ? kInf : -kInf;
    for (std::size_t v = 0; v < ts.hat.size(); ++v) {
        if (kind == BoundKind::inf)
            out = std::min(out, ts.hat[v] + k * g.s[v]);
        else
            out = std::max(out, ts.hat[v] - k * g.s[v]);
    }
    return out;
}

// --- estimated specification -------------------------------------------------------------

struct EstimatedModel {
    BiprobitData design;
    FitResult fit;
    DgpSpec spec;
    IvSetDef used;  // identity over the used instrument columns
    bool intercept = true;

    Vec augment_x(std::span<const double> x) const {
        Vec out;
        if (intercept) out.push_back(1.0);
        out.insert(out.end(), x.begin(), x.end());
        return out;
    }

    void set_params(DgpSpec& s, const VectorXd& theta) const {
        const auto kx = design.kx();
        const auto m = design.m();
        s.alpha = theta(0);
        for (Eigen::Index j = 0; j < kx; ++j) {
            s.beta[static_cast<std::size_t>(j)] = theta(1 + j);
            s.pi[static_cast<std::size_t>(j)] = theta(1 + kx + j);
        }
        for (Eigen::Index j = 0; j < m; ++j) s.gamma[static_cast<std::size_t>(j)] = theta(1 + 2 * kx + j);
        s.rho = std::clamp(std::tanh(theta(design.n_params() - 1)), -kCorrClamp, kCorrClamp);
    }

    // p-value of the Wald test that all instrument coefficients are zero.
    double relevance_pvalue() const {
        const auto kx = design.kx();
        const auto m = design.m();
        const VectorXd g = fit.params.segment(1 + 2 * kx, m);
        const MatrixXd V = fit.vcov.block(1 + 2 * kx, 1 + 2 * kx, m, m);
        Eigen::LDLT<MatrixXd> ldlt(V);
        const double w = g.dot(ldlt.solve(g));
        if (!std::isfinite(w)) return 0.0;
        boost::math::chi_squared chi(static_cast<double>(m));
        return boost::math::cdf(boost::math::complement(chi, std::max(w, 0.0)));
    }
};

inline MatrixXd used_instruments(const Dataset& data, const IvSetDef& ivset) {
    const auto n = static_cast<Eigen::Index>(data.n());
    MatrixXd W(n, static_cast<Eigen::Index>(ivset.terms.size()));
    Vec z(static_cast<std::size_t>(data.Z.cols()));
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index c = 0; c < data.Z.cols(); ++c) z[static_cast<std::size_t>(c)] = data.Z(i, c);
        const auto w = ivset.apply(z);
        for (std::size_t c = 0; c < w.size(); ++c) W(i, static_cast<Eigen::Index>(c)) = w[c];
    }
    return W;
}

inline CovariateDist empirical_covariates(const MatrixXd& X, bool intercept, std::size_t max_unique) {
    CovariateDist out;
    if (intercept) out.components.push_back(CovariateComponent::finite({1.0}, {1.0}));
    const double n = static_cast<double>(X.rows());
    for (Eigen::Index c = 0; c < X.cols(); ++c) {
        std::map<double, double> counts;
        for (Eigen::Index i = 0; i < X.rows(); ++i) {
            counts[X(i, c)] += 1.0;
            if (counts.size() > max_unique) break;
        }
        if (counts.size() <= max_unique) {
            Vec pts, probs;
            for (const auto& [v, k] : counts) {
                pts.push_back(v);
                probs.push_back(k / n);
            }
            out.components.push_back(CovariateComponent::finite(pts, probs));
        } else {
            const double mean = X.col(c).mean();
            const double sd = std::sqrt((X.col(c).array() - mean).square().sum() / (n - 1.0));
            out.components.push_back(CovariateComponent::normal(mean, sd));
        }
    }
    return out;
}

inline EstimatedModel estimate_model(const Dataset& data, const IvSetDef& ivset, const EstimateOptions& opt = {}) {
    data.validate();
    EstimatedModel em;
    em.intercept = opt.intercept;
    const MatrixXd W = used_instruments(data, ivset);
    em.design = biprobit_data(data, W, opt.intercept);
    em.fit = fit_bivariate_probit(em.design, opt.biprobit);

    DgpSpec& s = em.spec;
    const auto kx = static_cast<std::size_t>(em.design.kx());
    const auto m = static_cast<std::size_t>(em.design.m());
    s.beta.assign(kx, 0.0);
    s.pi.assign(kx, 0.0);
    s.gamma.assign(m, 0.0);
    em.set_params(s, em.fit.params);
    s.covariate_dist = empirical_covariates(em.design.X.rightCols(data.X.cols()), opt.intercept,
                                            opt.discrete_max_unique);
    std::map<Vec, double> joint;
    for (Eigen::Index i = 0; i < W.rows(); ++i) {
        Vec w(m);
        for (std::size_t c = 0; c < m; ++c) w[c] = W(i, static_cast<Eigen::Index>(c));
        joint[w] += 1.0;
    }
    for (const auto& [w, k] : joint) {
        s.iv_joint_points.push_back(w);
        s.iv_joint_probs.push_back(k / static_cast<double>(W.rows()));
    }
    em.used = IvSetDef::identity(m, ivset.name);
    return em;
}

// --- estimated report -------------------------------------------------------------------

struct BoundSet {
    Interval manski, widest, sv;
};

struct EstimatedReport {
    BoundsReport plugin;
    BoundsReport hmue;
    std::map<double, BoundSet> confidence;  // level -> two-sided bands
    FitResult fit;
    bool relevant = true;
    double relevance_pvalue = 0.0;
    double sign_flip_rate = 0.0;
    std::size_t n_sv_terms = 0;
};

// Term samples for every bound, from one set of parameter draws.
struct BoundTerms {
    TermSample manski_lo, manski_hi;
    TermSample widest_lo, widest_hi;
    TermSample sv_lo, sv_hi;
};

namespace detail {

struct TermValues {
    Vec manski_lo, manski_hi, widest_lo, widest_hi, sv_lo, sv_hi;
};

inline TermValues term_values(const SvTerms& t, const CpsSupport& sup, Sign sign, WidestTerms wt) {
    TermValues out;
    const std::size_t np = t.p.size();
    RawCells marg;
    for (std::size_t i = 0; i < np; ++i) marg += t.cells[i].scaled(sup.points[i].mass);
    const auto m = manski_bounds(marg);
    out.manski_lo = {m.lower};
    out.manski_hi = {m.upper};

    if (wt == WidestTerms::extremes) {
        const auto w = widest_from_extremes(sign, t.cells.front(), t.p.front(), t.cells.back(), t.p.back());
        out.widest_lo = {w.lower};
        out.widest_hi = {w.upper};
    } else {
        for (std::size_t i = 0; i < np; ++i)
            for (std::size_t j = 0; j < np; ++j) {
                const auto& ci = t.cells[i];
                const auto& cj = t.cells[j];
                if (sign == Sign::negative) {
                    out.widest_lo.push_back(ci.p11 - (cj.p10 + t.p[j]));
                    out.widest_hi.push_back(ci.pr_y1() - cj.pr_y1());
                } else {
                    out.widest_lo.push_back(ci.pr_y1() - cj.pr_y1());
                    out.widest_hi.push_back(ci.p11 + 1.0 - t.p[i] - cj.p10);
                }
            }
    }
    for (std::size_t i = 0; i < np; ++i)
        for (std::size_t j = 0; j < np; ++j) {
            out.sv_lo.push_back(t.A[i] - t.B[j]);
            out.sv_hi.push_back(t.C[i] - t.D[j]);
        }
    return out;
}

// Factor L with L L' = V; falls back to the clipped eigen root when V is
// only semidefinite.
inline MatrixXd draw_factor(const MatrixXd& V) {
    Eigen::LLT<MatrixXd> llt(V);
    if (llt.info() == Eigen::Success) return llt.matrixL();
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(V);
    return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

}  // namespace detail

// Manski bounds do not involve the instruments, so all IV sets fitted on one
// sample share one estimate of them: the fit on every raw instrument column,
// simulated on a stream of its own.
struct ManskiReference {
    std::shared_ptr<const EstimatedModel> model;  // shared, so copies with another stream are cheap
    std::uint64_t stream = 0;
};

// Streams for the reference carry the top bit; per-set streams never do.
inline constexpr std::uint64_t kManskiStreamBit = std::uint64_t{1} << 63;

inline ManskiReference manski_reference(const Dataset& data, const EstimateOptions& opt = {},
                                        std::uint64_t stream = 0) {
    return {std::make_shared<const EstimatedModel>(
                estimate_model(data, IvSetDef::identity(static_cast<std::size_t>(data.Z.cols())), opt)),
            kManskiStreamBit | stream};
}

namespace detail {

// Point value and parameter draws of the two single-term Manski bounds.
inline std::pair<TermSample, TermSample> manski_terms(const ManskiReference& ref, std::span<const double> x_eval,
                                                      const HmueConfig& hmue) {
    const auto& rm = *ref.model;
    const Vec x = rm.augment_x(x_eval);
    auto bounds_of = [&](const DgpSpec& s) { return manski_bounds(marginal_cell_probs(s, x, rm.used)); };
    std::pair<TermSample, TermSample> out;
    const Interval h = bounds_of(rm.spec);
    out.first.hat = {h.lower};
    out.second.hat = {h.upper};
    const MatrixXd L = draw_factor(rm.fit.vcov);
    const auto p = rm.fit.params.size();
    RngStream rng(hmue.seed, ref.stream);
    DgpSpec ds = rm.spec;
    VectorXd xi(p);
    for (int r = 0; r < hmue.n_sim; ++r) {
        for (Eigen::Index j = 0; j < p; ++j) xi(j) = rng.normal();
        rm.set_params(ds, rm.fit.params + L * xi);
        const Interval b = bounds_of(ds);
        out.first.draws.push_back({b.lower});
        out.second.draws.push_back({b.upper});
    }
    return out;
}

}  // namespace detail

// With `manski` given, the Manski terms come from that shared reference
// instead of this set's own fit.
inline EstimatedReport estimated_report(const EstimatedModel& em, std::span<const double> x_eval,
                                        const MatchConfig& match, const HmueConfig& hmue,
                                        std::uint64_t stream_id = 0, double relevance_level = 0.05,
                                        const ManskiReference* manski = nullptr) {
    hmue.validate();
    match.validate();
    EstimatedReport rep;
    rep.fit = em.fit;
    const Vec x = em.augment_x(x_eval);
    const std::size_t n_obs = static_cast<std::size_t>(em.design.n());

    // Plug-in structure and values.
    SvPlan plan;
    bool singleton = false;
    try {
        plan = plan_sv(em.spec, x, em.used, match, match.tolerance_c, false);
    } catch (const IrrelevantInstruments&) {
        singleton = true;
    }
    rep.relevance_pvalue = em.relevance_pvalue();
    rep.relevant = !singleton && !(relevance_level > 0.0 && rep.relevance_pvalue > relevance_level);

    // Parameter draws.
    const auto p = em.fit.params.size();
    const MatrixXd Lchol = detail::draw_factor(em.fit.vcov);
    RngStream rng(hmue.seed, stream_id);
    const Sign sign = singleton ? Sign::zero : plan.sign;
    const CpsSupport sup = singleton ? cps_support(em.spec, x, em.used) : plan.support;
    if (singleton) {
        plan.x = x;
        plan.support = sup;
        plan.grid.clear();
        plan.x1p.assign(sup.points.size(), {});
        plan.x0p = plan.x1m = plan.x0m = plan.x1p;
    }

    const auto hat_terms = evaluate_terms(em.spec, plan);
    const auto hat = detail::term_values(hat_terms, sup, sign, hmue.widest);
    BoundTerms bt;
    bt.manski_lo.hat = hat.manski_lo;
    bt.manski_hi.hat = hat.manski_hi;
    bt.widest_lo.hat = hat.widest_lo;
    bt.widest_hi.hat = hat.widest_hi;
    bt.sv_lo.hat = hat.sv_lo;
    bt.sv_hi.hat = hat.sv_hi;
    rep.n_sv_terms = hat.sv_lo.size();

    DgpSpec draw_spec = em.spec;
    int flips = 0;
    VectorXd xi(p);
    for (int r = 0; r < hmue.n_sim; ++r) {
        for (Eigen::Index j = 0; j < p; ++j) xi(j) = rng.normal();
        const VectorXd theta = em.fit.params + Lchol * xi;
        em.set_params(draw_spec, theta);
        if (sign_of(theta(0), 0.0) != sign_of(em.fit.params(0), 0.0)) ++flips;
        const auto tv = detail::term_values(evaluate_terms(draw_spec, plan), sup, sign, hmue.widest);
        bt.manski_lo.draws.push_back(tv.manski_lo);
        bt.manski_hi.draws.push_back(tv.manski_hi);
        bt.widest_lo.draws.push_back(tv.widest_lo);
        bt.widest_hi.draws.push_back(tv.widest_hi);
        bt.sv_lo.draws.push_back(tv.sv_lo);
        bt.sv_hi.draws.push_back(tv.sv_hi);
    }
    rep.sign_flip_rate = static_cast<double>(flips) / hmue.n_sim;
    if (manski) std::tie(bt.manski_lo, bt.manski_hi) = detail::manski_terms(*manski, x_eval, hmue);

    auto max_of = [](const Vec& v) { return *std::max_element(v.begin(), v.end()); };
    auto min_of = [](const Vec& v) { return *std::min_element(v.begin(), v.end()); };

    const auto g_mlo = term_geometry(bt.manski_lo, BoundKind::sup, n_obs);
    const auto g_mhi = term_geometry(bt.manski_hi, BoundKind::inf, n_obs);
    const auto g_wlo = term_geometry(bt.widest_lo, BoundKind::sup, n_obs);
    const auto g_whi = term_geometry(bt.widest_hi, BoundKind::inf, n_obs);
    const auto g_slo = term_geometry(bt.sv_lo, BoundKind::sup, n_obs);
    const auto g_shi = term_geometry(bt.sv_hi, BoundKind::inf, n_obs);

    auto bounds_at = [&](double q) {
        BoundSet b;
        b.manski = {corrected_bound(bt.manski_lo, g_mlo, BoundKind::sup, q),
                    corrected_bound(bt.manski_hi, g_mhi, BoundKind::inf, q)};
        b.widest = {corrected_bound(bt.widest_lo, g_wlo, BoundKind::sup, q),
                    corrected_bound(bt.widest_hi, g_whi, BoundKind::inf, q)};
        b.sv = {corrected_bound(bt.sv_lo, g_slo, BoundKind::sup, q),
                corrected_bound(bt.sv_hi, g_shi, BoundKind::inf, q)};
        return b;
    };

    auto fill = [&](BoundsReport& r, const BoundSet& b) {
        r.x.assign(x_eval.begin(), x_eval.end());
        r.manski = b.manski;
        r.sign = sign;
        r.relevant = rep.relevant;
        if (!rep.relevant) {
            r.widest = r.manski;
            r.sv = r.manski;
            r.decomposition = irrelevant_decomposition(r.manski);
            r.iip = 0.0;
            r.note = singleton ? "irrelevant instruments" : "instruments not significant";
            return;
        }
        if (sign == Sign::zero) {
            r.widest = {0.0, 0.0};
            r.sv = {0.0, 0.0};
            r.note = "zero treatment effect: point identified";
        } else {
            r.widest = b.widest;
            r.sv = b.sv;
            if (r.sv.lower > r.sv.upper) r.note = "crossed SV bounds";
        }
        r.decomposition = decompose(sign, r.manski, r.widest, r.sv);
        r.iip = r.decomposition.c1 + r.decomposition.c2;
    };

    BoundSet plug;
    plug.manski = {max_of(bt.manski_lo.hat), min_of(bt.manski_hi.hat)};
    plug.widest = {max_of(bt.widest_lo.hat), min_of(bt.widest_hi.hat)};
    plug.sv = {max_of(bt.sv_lo.hat), min_of(bt.sv_hi.hat)};
    fill(rep.plugin, plug);
    fill(rep.hmue, bounds_at(0.5));
    for (double level : hmue.levels) {
        if (level == 0.5) continue;
        rep.confidence[level] = bounds_at(1.0 - (1.0 - level) / 2.0);
    }
    return rep;
}

inline EstimatedReport estimated_report(const Dataset& data, const IvSetDef& ivset, std::span<const double> x_eval,
                                        const MatchConfig& match, const HmueConfig& hmue,
                                        const EstimateOptions& opt = {}, std::uint64_t stream_id = 0) {
    const auto em = estimate_model(data, ivset, opt);
    const auto ref = manski_reference(data, opt);
    return estimated_report(em, x_eval, match, hmue, stream_id, opt.relevance_level, &ref);
}

// Plug-in IIP (no simulation correction) from a fitted model.
inline double plugin_iip(const EstimatedModel& em, std::span<const double> x_eval, double relevance_level) {
    const Vec x = em.augment_x(x_eval);
    if (relevance_level > 0.0 && em.relevance_pvalue() > relevance_level) return 0.0;
    return iip(em.spec, x, em.used);
}

// --- bootstrap ------------------------------------------------------------------------------

struct DispersionSummary {
    double mean = 0.0;
    double sd = 0.0;
    Vec quantile_levels{0.025, 0.05, 0.5, 0.95, 0.975};
    Vec quantiles;
    std::size_t failed = 0;
    Vec draws;
};

// Nonparametric bootstrap of the plug-in IIP. With resample = false every
// replicate reuses the full sample (a determinism check).
inline DispersionSummary bootstrap_dispersion(const Dataset& data, const IvSetDef& ivset, std::span<const double> x_eval,
                                              int B, std::uint64_t seed, const EstimateOptions& opt = {},
                                              bool resample = true, unsigned workers = 1) {
    if (resample && B < 50) throw ConfigError("bootstrap_dispersion: B must be >= 50");
    if (B < 1) throw ConfigError("bootstrap_dispersion: B must be >= 1");
    DispersionSummary out;
    const std::size_t n = data.n();
    std::vector<std::optional<double>> slot(static_cast<std::size_t>(B));
    parallel_for(slot.size(), workers, [&](std::size_t b) {
        RngStream rng(seed, b);
        std::vector<std::size_t> rows(n);
        for (std::size_t i = 0; i < n; ++i) rows[i] = resample ? rng.uniform_index(n) : i;
        try {
            const auto em = estimate_model(resample ? data.subset(rows) : data, ivset, opt);
            slot[b] = plugin_iip(em, x_eval, opt.relevance_level);
        } catch (const Error&) {
        } catch (const std::domain_error&) {
        }
    });
    for (const auto& v : slot) {
        if (v)
            out.draws.push_back(*v);
        else
            ++out.failed;
    }
    if (out.draws.empty()) return out;
    out.mean = std::accumulate(out.draws.begin(), out.draws.end(), 0.0) / static_cast<double>(out.draws.size());
    double ss = 0.0;
    for (double v : out.draws) ss += (v - out.mean) * (v - out.mean);
    out.sd = out.draws.size() > 1 ? std::sqrt(ss / static_cast<double>(out.draws.size() - 1)) : 0.0;
    for (double q : out.quantile_levels) out.quantiles.push_back(quantile(out.draws, q));
    return out;
}

// --- serialization -------------------------------------------------------------------------

inline json fit_to_json(const FitResult& f) {
    json params = json::object();
    for (Eigen::Index j = 0; j < f.params.size(); ++j)
        params[j < static_cast<Eigen::Index>(f.names.size()) ? f.names[static_cast<std::size_t>(j)]
                                                            : "p" + std::to_string(j)] = f.params(j);
    json vc = json::array();
    for (Eigen::Index i = 0; i < f.vcov.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < f.vcov.cols(); ++j) row.push_back(f.vcov(i, j));
        vc.push_back(row);
    }
    return json{{"params", params}, {"loglik", f.loglik}, {"vcov", vc}, {"converged", f.converged},
                {"iterations", f.iterations}};
}

inline json estimated_report_to_json(const EstimatedReport& r) {
    json conf = json::object();
    for (const auto& [level, b] : r.confidence)
        conf[fmt_num(level, 2)] = json{{"manski", interval_to_json(b.manski)},
                                       {"widest", interval_to_json(b.widest)},
                                       {"sv", interval_to_json(b.sv)}};
    return json{{"hmue", report_to_json(r.hmue)},
                {"plugin", report_to_json(r.plugin)},
                {"confidence", conf},
                {"fit", fit_to_json(r.fit)},
                {"relevant", r.relevant},
                {"relevance_pvalue", r.relevance_pvalue},
                {"sign_flip_rate", r.sign_flip_rate}};
}

}  // namespace ivpower
