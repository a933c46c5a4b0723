#pragma once

// Data-generating process specification and exact population quantities:
// latent indices, conditional propensity scores (CPS), the four cell
// probabilities Pr[Y=y,D=d | x,p] and the true ATE.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "numcore.hpp"

namespace ivpower {

using Vec = std::vector<double>;
using nlohmann::json;

inline double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw ConfigError("dimension mismatch: " + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()));
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

struct DiscreteDist {
    Vec points;
    Vec probs;

    void validate(const std::string& field) const {
        if (points.empty()) throw ConfigError("field '" + field + "': empty support");
        if (points.size() != probs.size())
            throw ConfigError("field '" + field + "': points and probs differ in length");
        double s = 0.0;
        for (double q : probs) {
            if (!(q >= 0.0)) throw ConfigError("field '" + field + "': negative probability");
            s += q;
        }
        if (std::abs(s - 1.0) > 1e-12)
            throw ConfigError("field '" + field + "': probabilities sum to " + std::to_string(s));
    }
};

// One covariate coordinate: either N(mean, sd^2) or a finite support.
struct CovariateComponent {
    enum class Kind { normal, discrete };
    Kind kind = Kind::normal;
    double mean = 0.0;
    double sd = 1.0;
    DiscreteDist discrete;

    static CovariateComponent normal(double m = 0.0, double s = 1.0) {
        CovariateComponent c;
        c.mean = m;
        c.sd = s;
        return c;
    }
    static CovariateComponent finite(Vec points, Vec probs) {
        CovariateComponent c;
        c.kind = Kind::discrete;
        c.discrete = {std::move(points), std::move(probs)};
        return c;
    }
    bool is_discrete() const { return kind == Kind::discrete; }
};

// Covariates are independent across components unless a joint table is
// given, in which case the joint table is the whole distribution.
struct CovariateDist {
    std::vector<CovariateComponent> components;
    std::vector<Vec> joint_points;
    Vec joint_probs;

    bool has_joint() const { return !joint_points.empty(); }
    std::size_t dim() const {
        return has_joint() ? joint_points.front().size() : components.size();
    }
    bool fully_discrete() const {
        return has_joint() || std::all_of(components.begin(), components.end(),
                                          [](const auto& c) { return c.is_discrete(); });
    }
};

struct DgpSpec {
    double alpha = 1.0;
    Vec beta;
    Vec pi;
    Vec gamma;
    double rho = 0.0;
    CovariateDist covariate_dist;
    std::vector<DiscreteDist> iv_dists;
    // Optional joint law of the instruments; replaces the product of iv_dists.
    std::vector<Vec> iv_joint_points;
    Vec iv_joint_probs;

    std::size_t n_covariates() const { return beta.size(); }
    std::size_t n_instruments() const { return gamma.size(); }
    Corr corr() const { return Corr(rho); }

    void validate() const {
        if (pi.size() != beta.size())
            throw ConfigError("field 'pi': length " + std::to_string(pi.size()) +
                              " differs from beta length " + std::to_string(beta.size()));
        if (!(std::abs(rho) < 1.0)) throw ConfigError("field 'rho': must satisfy |rho| < 1");
        if (covariate_dist.dim() != beta.size())
            throw ConfigError("field 'covariate_dist': dimension " +
                              std::to_string(covariate_dist.dim()) + " differs from beta length");
        for (std::size_t i = 0; i < covariate_dist.components.size(); ++i) {
            const auto& c = covariate_dist.components[i];
            if (c.is_discrete())
                c.discrete.validate("covariate_dist[" + std::to_string(i) + "]");
            else if (!(c.sd > 0.0))
                throw ConfigError("field 'covariate_dist[" + std::to_string(i) + "]': sd must be > 0");
        }
        if (covariate_dist.has_joint()) {
            DiscreteDist{Vec(covariate_dist.joint_probs.size(), 0.0), covariate_dist.joint_probs}
                .validate("covariate_dist.probs");
        }
        if (!iv_joint_points.empty()) {
            DiscreteDist{Vec(iv_joint_probs.size(), 0.0), iv_joint_probs}.validate("iv_joint.probs");
            for (const auto& z : iv_joint_points)
                if (z.size() != gamma.size())
                    throw ConfigError("field 'iv_joint': point dimension differs from gamma length");
        } else {
            if (iv_dists.size() != gamma.size())
                throw ConfigError("field 'iv_dists': " + std::to_string(iv_dists.size()) +
                                  " instruments but gamma has " + std::to_string(gamma.size()));
            for (std::size_t i = 0; i < iv_dists.size(); ++i)
                iv_dists[i].validate("iv_dists[" + std::to_string(i) + "]");
        }
    }
};

inline double nu1(const DgpSpec& s, int d, std::span<const double> x) {
    return s.alpha * d + dot(s.beta, x);
}
inline double nu2(const DgpSpec& s, std::span<const double> x, std::span<const double> z) {
    return dot(s.pi, x) + dot(s.gamma, z);
}

inline Prob cps(const DgpSpec& s, std::span<const double> x, std::span<const double> z) {
    if (x.size() != s.n_covariates()) throw ConfigError("cps: covariate dimension mismatch");
    if (z.size() != s.n_instruments()) throw ConfigError("cps: instrument dimension mismatch");
    return std_normal_cdf(nu2(s, x, z));
}

inline double true_ate(const DgpSpec& s, std::span<const double> x) {
    return normal_cdf(nu1(s, 1, x)) - normal_cdf(nu1(s, 0, x));
}

// --- instrument support and IV-set transforms --------------------------------

struct IvAtom {
    Vec z;
    double mass;
};

inline std::vector<IvAtom> instrument_support(const DgpSpec& s) {
    std::vector<IvAtom> out;
    if (!s.iv_joint_points.empty()) {
        for (std::size_t i = 0; i < s.iv_joint_points.size(); ++i)
            if (s.iv_joint_probs[i] > 0.0) out.push_back({s.iv_joint_points[i], s.iv_joint_probs[i]});
        return out;
    }
    out.push_back({Vec{}, 1.0});
    for (const auto& dist : s.iv_dists) {
        std::vector<IvAtom> next;
        next.reserve(out.size() * dist.points.size());
        for (const auto& a : out)
            for (std::size_t k = 0; k < dist.points.size(); ++k) {
                if (dist.probs[k] <= 0.0) continue;
                IvAtom b = a;
                b.z.push_back(dist.points[k]);
                b.mass *= dist.probs[k];
                next.push_back(std::move(b));
            }
        out = std::move(next);
    }
    return out;
}

// One coordinate of the used instrument vector: a raw column or the
// indicator 1[z_column > threshold].
struct IvTerm {
    std::size_t column = 0;
    std::optional<double> threshold;

    double apply(std::span<const double> z) const {
        if (column >= z.size()) throw ConfigError("iv term refers to missing column");
        return threshold ? (z[column] > *threshold ? 1.0 : 0.0) : z[column];
    }
};

struct IvSetDef {
    std::string name;
    std::vector<IvTerm> terms;

    Vec apply(std::span<const double> z) const {
        Vec w;
        w.reserve(terms.size());
        for (const auto& t : terms) w.push_back(t.apply(z));
        return w;
    }

    static IvSetDef identity(std::size_t m, std::string name = "all") {
        IvSetDef d{std::move(name), {}};
        for (std::size_t i = 0; i < m; ++i) d.terms.push_back({i, std::nullopt});
        return d;
    }
};

// --- CPS support --------------------------------------------------------------

// A raw instrument value feeding a CPS point; `index` is nu2(x, z).
struct CpsComponent {
    double weight;
    double index;
    Vec z;
};

// A support point of Pr[D=1 | x, W] where W is the used instrument vector.
// When W does not pin down Z, the point is a mixture over the raw values that
// map to it, and p is the mixture average of Phi(index).
struct CpsPoint {
    double p = 0.0;
    double mass = 0.0;
    std::vector<CpsComponent> components;
};

struct CpsSupport {
    std::vector<CpsPoint> points;  // sorted by p ascending
    double p_lo = 0.0;
    double p_hi = 0.0;

    bool singleton(double tol = 1e-12) const { return p_hi - p_lo <= tol; }
    const CpsPoint& lowest() const { return points.front(); }
    const CpsPoint& highest() const { return points.back(); }
};

inline constexpr double kCpsMergeTol = 1e-12;

inline CpsSupport cps_support(const DgpSpec& s, std::span<const double> x, const IvSetDef& ivset) {
    if (x.size() != s.n_covariates()) throw ConfigError("cps_support: covariate dimension mismatch");
    const double px = dot(s.pi, x);
    std::map<Vec, CpsPoint> groups;
    for (const auto& atom : instrument_support(s)) {
        auto& g = groups[ivset.apply(atom.z)];
        g.mass += atom.mass;
        g.components.push_back({atom.mass, px + dot(s.gamma, atom.z), atom.z});
    }
    std::vector<CpsPoint> pts;
    pts.reserve(groups.size());
    for (auto& [w, g] : groups) {
        double p = 0.0;
        for (auto& c : g.components) {
            c.weight /= g.mass;
            p += c.weight * normal_cdf(c.index);
        }
        g.p = p;
        pts.push_back(std::move(g));
    }
    std::stable_sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.p < b.p; });

    // Points with equal CPS are one support point; their mixtures are pooled.
    CpsSupport out;
    for (auto& pt : pts) {
        if (!out.points.empty() && std::abs(pt.p - out.points.back().p) <= kCpsMergeTol) {
            auto& last = out.points.back();
            const double total = last.mass + pt.mass;
            for (auto& c : last.components) c.weight *= last.mass / total;
            for (auto& c : pt.components) {
                c.weight *= pt.mass / total;
                last.components.push_back(std::move(c));
            }
            last.p = (last.p * last.mass + pt.p * pt.mass) / total;
            last.mass = total;
        } else {
            out.points.push_back(std::move(pt));
        }
    }
    out.p_lo = out.points.front().p;
    out.p_hi = out.points.back().p;
    return out;
}

inline CpsSupport cps_support(const DgpSpec& s, std::span<const double> x) {
    return cps_support(s, x, IvSetDef::identity(s.n_instruments()));
}

// --- cell probabilities -----------------------------------------------------

struct CellProbs {
    Prob p11, p10, p01, p00;

    double p() const { return p11 + p01; }
    double pr_y1() const { return p11 + p10; }

    static CellProbs from_raw(double p11, double p10, double p01, double p00) {
        return {Prob::clamped(p11), Prob::clamped(p10), Prob::clamped(p01), Prob::clamped(p00)};
    }
};

// Cells at a single latent treatment index: p = Phi(index).
struct RawCells {
    double p11 = 0.0, p10 = 0.0, p01 = 0.0, p00 = 0.0;

    RawCells& operator+=(const RawCells& o) {
        p11 += o.p11;
        p10 += o.p10;
        p01 += o.p01;
        p00 += o.p00;
        return *this;
    }
    RawCells scaled(double w) const { return {w * p11, w * p10, w * p01, w * p00}; }
    double p() const { return p11 + p01; }
    double pr_y1() const { return p11 + p10; }
    CellProbs checked() const { return CellProbs::from_raw(p11, p10, p01, p00); }
};

// a1 = nu1(1,x), a0 = nu1(0,x), index = nu2(x,z).
inline RawCells cells_at_index(double a1, double a0, double index, double rho) {
    const double p = normal_cdf(index);
    RawCells c;
    c.p11 = bvn_cdf(a1, index, rho);
    c.p00 = 1.0 - normal_cdf(a0) - p + bvn_cdf(a0, index, rho);
    c.p01 = p - c.p11;
    c.p10 = 1.0 - p - c.p00;
    return c;
}

inline RawCells cells_at_point(double a1, double a0, const CpsPoint& pt, double rho) {
    RawCells acc;
    for (const auto& c : pt.components) acc += cells_at_index(a1, a0, c.index, rho).scaled(c.weight);
    return acc;
}

inline CellProbs cell_probs(const DgpSpec& s, std::span<const double> x, Prob p) {
    const double a1 = nu1(s, 1, x);
    const double a0 = nu1(s, 0, x);
    if (p.value() == 0.0) return CellProbs::from_raw(0.0, normal_cdf(a0), 0.0, 1.0 - normal_cdf(a0));
    if (p.value() == 1.0) return CellProbs::from_raw(normal_cdf(a1), 0.0, 1.0 - normal_cdf(a1), 0.0);
    return cells_at_index(a1, a0, inv_normal_cdf(p), s.rho).checked();
}

inline CellProbs cell_probs(const DgpSpec& s, std::span<const double> x, const CpsPoint& pt) {
    return cells_at_point(nu1(s, 1, x), nu1(s, 0, x), pt, s.rho).checked();
}

inline CellProbs marginal_cell_probs(const DgpSpec& s, std::span<const double> x,
                                     const IvSetDef& ivset) {
    const auto sup = cps_support(s, x, ivset);
    const double a1 = nu1(s, 1, x);
    const double a0 = nu1(s, 0, x);
    RawCells acc;
    for (const auto& pt : sup.points) acc += cells_at_point(a1, a0, pt, s.rho).scaled(pt.mass);
    return acc.checked();
}

inline CellProbs marginal_cell_probs(const DgpSpec& s, std::span<const double> x) {
    return marginal_cell_probs(s, x, IvSetDef::identity(s.n_instruments()));
}

// --- covariate points ---------------------------------------------------------

struct WeightedPoints {
    std::vector<Vec> points;
    Vec weights;
};

// Quadrature for expectations over X: exact for discrete components,
// Gauss-Hermite of the given order for normal ones.
inline WeightedPoints covariate_quadrature(const CovariateDist& dist, int order = 64) {
    WeightedPoints out;
    if (dist.has_joint()) {
        out.points = dist.joint_points;
        out.weights = dist.joint_probs;
        return out;
    }
    out.points.push_back({});
    out.weights.push_back(1.0);
    const auto gh = gauss_hermite(order);
    for (const auto& comp : dist.components) {
        Vec nodes;
        Vec w;
        if (comp.is_discrete()) {
            nodes = comp.discrete.points;
            w = comp.discrete.probs;
        } else {
            for (std::size_t i = 0; i < gh.nodes.size(); ++i) {
                nodes.push_back(comp.mean + comp.sd * gh.nodes[i]);
                w.push_back(gh.weights[i]);
            }
        }
        WeightedPoints next;
        for (std::size_t a = 0; a < out.points.size(); ++a)
            for (std::size_t b = 0; b < nodes.size(); ++b) {
                Vec p = out.points[a];
                p.push_back(nodes[b]);
                next.points.push_back(std::move(p));
                next.weights.push_back(out.weights[a] * w[b]);
            }
        out = std::move(next);
    }
    return out;
}

// Candidate covariate values x' for the covariate intersection layer. Normal
// components are discretized on mean +/- halfwidth*sd with spacing step*sd.
inline std::vector<Vec> covariate_grid(const CovariateDist& dist, double step = 0.01,
                                       double halfwidth = 4.0) {
    if (dist.has_joint()) return dist.joint_points;
    std::vector<Vec> out{Vec{}};
    for (const auto& comp : dist.components) {
        Vec vals;
        if (comp.is_discrete()) {
            for (std::size_t k = 0; k < comp.discrete.points.size(); ++k)
                if (comp.discrete.probs[k] > 0.0) vals.push_back(comp.discrete.points[k]);
        } else {
            const long n = std::lround(halfwidth / step);
            for (long i = -n; i <= n; ++i)
                vals.push_back(comp.mean + comp.sd * static_cast<double>(i) * step);
        }
        std::vector<Vec> next;
        next.reserve(out.size() * vals.size());
        for (const auto& p : out)
            for (double v : vals) {
                Vec q = p;
                q.push_back(v);
                next.push_back(std::move(q));
            }
        out = std::move(next);
    }
    return out;
}

// --- JSON ----------------------------------------------------------------------

namespace detail {

inline const json& require(const json& j, const char* field) {
    if (!j.is_object() || !j.contains(field))
        throw ConfigError(std::string("missing field '") + field + "'");
    return j.at(field);
}

inline Vec as_vec(const json& j, const std::string& field) {
    if (j.is_number()) return Vec{j.get<double>()};
    if (!j.is_array()) throw ConfigError("field '" + field + "': expected a number array");
    Vec v;
    for (const auto& e : j) {
        if (!e.is_number()) throw ConfigError("field '" + field + "': non-numeric entry");
        v.push_back(e.get<double>());
    }
    return v;
}

inline double as_num(const json& j, const std::string& field) {
    if (!j.is_number()) throw ConfigError("field '" + field + "': expected a number");
    return j.get<double>();
}

inline DiscreteDist discrete_from_json(const json& j, const std::string& field) {
    DiscreteDist d;
    if (!j.is_object()) throw ConfigError("field '" + field + "': expected an object");
    if (!j.contains("points") || !j.contains("probs"))
        throw ConfigError("field '" + field + "': needs 'points' and 'probs'");
    d.points = as_vec(j.at("points"), field + ".points");
    d.probs = as_vec(j.at("probs"), field + ".probs");
    d.validate(field);
    return d;
}

inline json discrete_to_json(const DiscreteDist& d) {
    return json{{"points", d.points}, {"probs", d.probs}};
}

inline CovariateComponent component_from_json(const json& j, const std::string& field) {
    const std::string type = j.value("type", std::string(j.contains("points") ? "discrete" : "normal"));
    if (type == "normal")
        return CovariateComponent::normal(j.contains("mean") ? as_num(j.at("mean"), field + ".mean") : 0.0,
                                          j.contains("sd") ? as_num(j.at("sd"), field + ".sd") : 1.0);
    if (type == "discrete") {
        auto d = discrete_from_json(j, field);
        return CovariateComponent::finite(d.points, d.probs);
    }
    throw ConfigError("field '" + field + ".type': unknown covariate distribution '" + type + "'");
}

}  // namespace detail

// covariate_dist accepts: an array of per-component objects; a single
// component object (applied to every coordinate); or
// {"type":"joint","points":[[...],...],"probs":[...]}.
inline CovariateDist covariate_dist_from_json(const json& j, std::size_t dim) {
    CovariateDist out;
    if (j.is_array()) {
        for (std::size_t i = 0; i < j.size(); ++i)
            out.components.push_back(
                detail::component_from_json(j[i], "covariate_dist[" + std::to_string(i) + "]"));
        return out;
    }
    if (!j.is_object()) throw ConfigError("field 'covariate_dist': expected object or array");
    if (j.value("type", std::string()) == "joint") {
        const auto& pts = detail::require(j, "points");
        if (!pts.is_array()) throw ConfigError("field 'covariate_dist.points': expected array");
        for (const auto& p : pts) out.joint_points.push_back(detail::as_vec(p, "covariate_dist.points"));
        out.joint_probs = detail::as_vec(detail::require(j, "probs"), "covariate_dist.probs");
        if (out.joint_points.size() != out.joint_probs.size())
            throw ConfigError("field 'covariate_dist': points and probs differ in length");
        return out;
    }
    const auto comp = detail::component_from_json(j, "covariate_dist");
    out.components.assign(dim, comp);
    return out;
}

inline json covariate_dist_to_json(const CovariateDist& d) {
    if (d.has_joint()) return json{{"type", "joint"}, {"points", d.joint_points}, {"probs", d.joint_probs}};
    json arr = json::array();
    for (const auto& c : d.components) {
        if (c.is_discrete())
            arr.push_back(json{{"type", "discrete"}, {"points", c.discrete.points}, {"probs", c.discrete.probs}});
        else
            arr.push_back(json{{"type", "normal"}, {"mean", c.mean}, {"sd", c.sd}});
    }
    return arr;
}

inline DgpSpec dgp_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("DgpSpec: expected a JSON object");
    DgpSpec s;
    s.alpha = detail::as_num(detail::require(j, "alpha"), "alpha");
    s.beta = detail::as_vec(detail::require(j, "beta"), "beta");
    s.pi = detail::as_vec(detail::require(j, "pi"), "pi");
    s.gamma = detail::as_vec(detail::require(j, "gamma"), "gamma");
    s.rho = detail::as_num(detail::require(j, "rho"), "rho");
    if (j.contains("copula") && j.at("copula") != "gaussian")
        throw ConfigError("field 'copula': only 'gaussian' is supported");
    s.covariate_dist = covariate_dist_from_json(detail::require(j, "covariate_dist"), s.beta.size());
    if (j.contains("iv_joint")) {
        const auto& t = j.at("iv_joint");
        for (const auto& p : detail::require(t, "points")) s.iv_joint_points.push_back(detail::as_vec(p, "iv_joint.points"));
        s.iv_joint_probs = detail::as_vec(detail::require(t, "probs"), "iv_joint.probs");
        if (s.iv_joint_points.size() != s.iv_joint_probs.size())
            throw ConfigError("field 'iv_joint': points and probs differ in length");
    } else {
        const auto& arr = detail::require(j, "iv_dists");
        if (!arr.is_array()) throw ConfigError("field 'iv_dists': expected an array");
        for (std::size_t i = 0; i < arr.size(); ++i)
            s.iv_dists.push_back(detail::discrete_from_json(arr[i], "iv_dists[" + std::to_string(i) + "]"));
    }
    s.validate();
    return s;
}

inline json dgp_to_json(const DgpSpec& s) {
    json j{{"alpha", s.alpha}, {"beta", s.beta}, {"pi", s.pi}, {"gamma", s.gamma}, {"rho", s.rho},
           {"covariate_dist", covariate_dist_to_json(s.covariate_dist)}};
    json ivs = json::array();
    for (const auto& d : s.iv_dists) ivs.push_back(detail::discrete_to_json(d));
    j["iv_dists"] = ivs;
    if (!s.iv_joint_points.empty())
        j["iv_joint"] = json{{"points", s.iv_joint_points}, {"probs", s.iv_joint_probs}};
    return j;
}

// IV set: {"name": "...", "terms": [{"column": 0}, {"column": 1, "threshold": 0}]}
inline IvSetDef ivset_from_json(const json& j) {
    IvSetDef d;
    d.name = j.value("name", std::string("ivset"));
    const auto& terms = detail::require(j, "terms");
    if (!terms.is_array() || terms.empty()) throw ConfigError("field 'terms': expected a nonempty array");
    for (const auto& t : terms) {
        IvTerm term;
        const auto& col = detail::require(t, "column");
        if (!col.is_number_integer() || col.get<long>() < 0)
            throw ConfigError("field 'terms.column': expected a nonnegative integer");
        term.column = col.get<std::size_t>();
        if (t.contains("threshold")) term.threshold = detail::as_num(t.at("threshold"), "terms.threshold");
        d.terms.push_back(term);
    }
    return d;
}

inline json ivset_to_json(const IvSetDef& d) {
    json terms = json::array();
    for (const auto& t : d.terms) {
        json e{{"column", t.column}};
        if (t.threshold) e["threshold"] = *t.threshold;
        terms.push_back(e);
    }
    return json{{"name", d.name}, {"terms", terms}};
}

// --- reference designs ------------------------------------------------------------

enum class CovariateCase { normal, bernoulli };

// Three instruments: Z1 ~ Bernoulli(1/2), Z2 on {-3..3}, Z3 ~ Bernoulli(2/3)
// with zero coefficient. One covariate.
inline DgpSpec model3(double rho, CovariateCase xcase = CovariateCase::normal) {
    DgpSpec s;
    s.alpha = 1.0;
    s.beta = {1.0};
    s.pi = {-1.0};
    s.gamma = {0.5, 0.2, 0.0};
    s.rho = rho;
    s.covariate_dist.components = {xcase == CovariateCase::normal
                                       ? CovariateComponent::normal()
                                       : CovariateComponent::finite({0.0, 1.0}, {0.5, 0.5})};
    s.iv_dists = {{{0.0, 1.0}, {0.5, 0.5}},
                  {{-3, -2, -1, 0, 1, 2, 3}, {0.1, 0.1, 0.2, 0.2, 0.2, 0.1, 0.1}},
                  {{0.0, 1.0}, {1.0 / 3.0, 2.0 / 3.0}}};
    return s;
}

// The five instrument sets over model3's raw (Z1, Z2, Z3).
inline std::vector<IvSetDef> model3_iv_sets() {
    return {
        {"(1) Z1", {{0, std::nullopt}}},
        {"(2) Z2", {{1, std::nullopt}}},
        {"(3) Z1,1[Z2>0]", {{0, std::nullopt}, {1, 0.0}}},
        {"(4) Z1,Z2", {{0, std::nullopt}, {1, std::nullopt}}},
        {"(5) Z1,Z2,Z3", {{0, std::nullopt}, {1, std::nullopt}, {2, std::nullopt}}},
    };
}

// Single instrument Z uniform on {-1, 1}, X ~ N(0,1), pi = 0, alpha = 1.
inline DgpSpec model2(double gamma, double rho, double beta) {
    DgpSpec s;
    s.alpha = 1.0;
    s.beta = {beta};
    s.pi = {0.0};
    s.gamma = {gamma};
    s.rho = rho;
    s.covariate_dist.components = {CovariateComponent::normal()};
    s.iv_dists = {{{-1.0, 1.0}, {0.5, 0.5}}};
    return s;
}

}  // namespace ivpower
