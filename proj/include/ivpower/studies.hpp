#pragma once

// Simulation harness: sampling from a DgpSpec, Monte Carlo replication of
// the estimated reports, population surfaces over (gamma, rho, beta), IV-set
// ranking and the two-sample Kolmogorov-Smirnov comparison.

#include <functional>
#include <ostream>

#include "estimate.hpp"

namespace ivpower {

// --- sampling -------------------------------------------------------------------

inline Dataset generate_sample(const DgpSpec& s, std::size_t n, RngStream& rng) {
    if (n < 1) throw ConfigError("generate_sample: n must be >= 1");
    s.validate();
    const std::size_t k = s.n_covariates();
    const std::size_t m = s.n_instruments();
    const double sr = std::sqrt(1.0 - s.rho * s.rho);
    Dataset ds;
    ds.X.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
    ds.Z.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
    ds.y.resize(n);
    ds.d.resize(n);
    for (std::size_t c = 0; c < k; ++c) ds.x_names.push_back("x" + std::to_string(c + 1));
    for (std::size_t c = 0; c < m; ++c) ds.z_names.push_back("z" + std::to_string(c + 1));

    const auto& cd = s.covariate_dist;
    Vec x(k), z(m);
    for (std::size_t i = 0; i < n; ++i) {
        if (cd.has_joint()) {
            x = cd.joint_points[rng.discrete(cd.joint_probs)];
        } else {
            for (std::size_t c = 0; c < k; ++c) {
                const auto& comp = cd.components[c];
                x[c] = comp.is_discrete() ? comp.discrete.points[rng.discrete(comp.discrete.probs)]
                                          : comp.mean + comp.sd * rng.normal();
            }
        }
        if (!s.iv_joint_points.empty()) {
            z = s.iv_joint_points[rng.discrete(s.iv_joint_probs)];
        } else {
            for (std::size_t c = 0; c < m; ++c) z[c] = s.iv_dists[c].points[rng.discrete(s.iv_dists[c].probs)];
        }
        const double e1 = rng.normal();
        const double e2 = s.rho * e1 + sr * rng.normal();
        const int d = nu2(s, x, z) > e2 ? 1 : 0;
        ds.d[i] = d;
        ds.y[i] = nu1(s, d, x) > e1 ? 1 : 0;
        const auto r = static_cast<Eigen::Index>(i);
        for (std::size_t c = 0; c < k; ++c) ds.X(r, static_cast<Eigen::Index>(c)) = x[c];
        for (std::size_t c = 0; c < m; ++c) ds.Z(r, static_cast<Eigen::Index>(c)) = z[c];
    }
    return ds;
}

inline Dataset generate_sample(const DgpSpec& s, std::size_t n, std::uint64_t seed, std::uint64_t stream = 0) {
    RngStream rng(seed, stream);
    return generate_sample(s, n, rng);
}

// --- Monte Carlo ----------------------------------------------------------------

struct McDesign {
    DgpSpec spec;
    std::vector<IvSetDef> iv_sets;
    std::vector<std::size_t> sample_sizes{500, 5000};
    int replications = 200;
    Vec x_eval{0.0};
    std::uint64_t seed = 1;
    HmueConfig hmue;
    MatchConfig match;
    EstimateOptions estimate;
    // Truth for the Hausdorff distances: the population bounds under this set
    // (by name); empty means each set's own population bounds.
    std::string truth_ivset;
    unsigned workers = 0;  // 0 = hardware concurrency

    void validate() const {
        if (replications < 1) throw ConfigError("field 'replications': must be >= 1");
        if (sample_sizes.empty()) throw ConfigError("field 'sample_sizes': empty");
        for (auto n : sample_sizes)
            if (n < 1) throw ConfigError("field 'sample_sizes': sizes must be positive");
        if (iv_sets.empty()) throw ConfigError("field 'iv_sets': empty");
        spec.validate();
        hmue.validate();
        match.validate();
    }
};

struct McRecord {
    std::size_t n = 0;
    std::size_t set = 0;
    int replicate = 0;
    bool ok = false;
    std::string error;
    BoundsReport report;  // corrected
    double plugin_iip = 0.0;
    double sign_flip_rate = 0.0;
    double hausdorff_manski = 0.0;
    double hausdorff_sv = 0.0;
};

struct McCell {
    std::string ivset;
    std::size_t n = 0;
    int ok = 0;
    int failed = 0;
    Interval manski{0.0, 0.0};
    Interval sv{0.0, 0.0};
    Interval widest{0.0, 0.0};
    double hausdorff_manski = 0.0;
    double hausdorff_sv = 0.0;
    Decomposition decomposition;
    double iip = 0.0;
    double plugin_iip = 0.0;

    double failure_rate() const { return ok + failed > 0 ? static_cast<double>(failed) / (ok + failed) : 0.0; }
};

struct McResult {
    std::vector<McCell> cells;  // set-major, then sample size
    std::vector<McRecord> records;
    std::vector<BoundsReport> truth;  // population report per set

    const McCell& cell(const std::string& ivset, std::size_t n) const {
        for (const auto& c : cells)
            if (c.n == n && c.ivset == ivset) return c;
        throw ConfigError("no Monte Carlo cell for the requested set and sample size");
    }

    // Per-replicate values of `f` for one (set, n), successful replicates only.
    Vec draws(std::size_t set, std::size_t n, const std::function<double(const McRecord&)>& f) const {
        Vec out;
        for (const auto& r : records)
            if (r.ok && r.set == set && r.n == n) out.push_back(f(r));
        return out;
    }
};

namespace detail {

inline McCell aggregate(const std::vector<const McRecord*>& recs, const std::string& name, std::size_t n) {
    McCell c;
    c.ivset = name;
    c.n = n;
    for (const auto* r : recs) {
        if (!r->ok) {
            ++c.failed;
            continue;
        }
        ++c.ok;
        const auto& b = r->report;
        c.manski.lower += b.manski.lower;
        c.manski.upper += b.manski.upper;
        c.sv.lower += b.sv.lower;
        c.sv.upper += b.sv.upper;
        c.widest.lower += b.widest.lower;
        c.widest.upper += b.widest.upper;
        c.hausdorff_manski += r->hausdorff_manski;
        c.hausdorff_sv += r->hausdorff_sv;
        c.decomposition.c1 += b.decomposition.c1;
        c.decomposition.c2 += b.decomposition.c2;
        c.decomposition.c3 += b.decomposition.c3;
        c.decomposition.c4 += b.decomposition.c4;
        c.iip += b.iip;
        c.plugin_iip += r->plugin_iip;
    }
    if (c.ok > 0) {
        const double k = c.ok;
        for (double* v : {&c.manski.lower, &c.manski.upper, &c.sv.lower, &c.sv.upper, &c.widest.lower,
                          &c.widest.upper, &c.hausdorff_manski, &c.hausdorff_sv, &c.decomposition.c1,
                          &c.decomposition.c2, &c.decomposition.c3, &c.decomposition.c4, &c.iip,
                          &c.plugin_iip})
            *v /= k;
    }
    return c;
}

}  // namespace detail

// One data set per (sample size, replicate) shared by all IV sets, so set
// comparisons are paired. Streams: data uses (n index, replicate), the
// simulation correction uses (n index, replicate, set).
inline McResult run_monte_carlo(const McDesign& design) {
    design.validate();
    const auto& sets = design.iv_sets;
    const std::size_t S = sets.size();
    const std::size_t N = design.sample_sizes.size();
    const auto M = static_cast<std::size_t>(design.replications);

    McResult res;
    MatchConfig pop_match = design.match;
    for (const auto& set : sets) {
        auto r = population_report(design.spec, design.x_eval, set, pop_match);
        r.note = set.name;
        res.truth.push_back(std::move(r));
    }
    std::vector<const BoundsReport*> truth_for(S);
    for (std::size_t k = 0; k < S; ++k) {
        truth_for[k] = &res.truth[k];
        if (!design.truth_ivset.empty()) {
            const auto it = std::find_if(sets.begin(), sets.end(),
                                         [&](const auto& d) { return d.name == design.truth_ivset; });
            if (it == sets.end()) throw ConfigError("field 'truth_ivset': unknown set '" + design.truth_ivset + "'");
            truth_for[k] = &res.truth[static_cast<std::size_t>(it - sets.begin())];
        }
    }

    res.records.resize(N * M * S);
    parallel_for(N * M, design.workers ? design.workers : default_workers(), [&](std::size_t task) {
        const std::size_t ni = task / M;
        const std::size_t rep = task % M;
        const std::size_t n = design.sample_sizes[ni];
        Dataset data;
        ManskiReference manski;
        try {
            data = generate_sample(design.spec, n, design.seed, (ni << 32) | rep);
            manski = manski_reference(data, design.estimate, (static_cast<std::uint64_t>(ni) << 40) | (rep << 8));
        } catch (const std::exception& e) {
            for (std::size_t k = 0; k < S; ++k) res.records[task * S + k].error = e.what();
            return;
        }
        for (std::size_t k = 0; k < S; ++k) {
            auto& rec = res.records[task * S + k];
            rec.n = n;
            rec.set = k;
            rec.replicate = static_cast<int>(rep);
            try {
                const auto em = estimate_model(data, sets[k], design.estimate);
                const std::uint64_t stream = (static_cast<std::uint64_t>(ni) << 40) |
                                             (static_cast<std::uint64_t>(rep) << 8) | k;
                const auto er = estimated_report(em, design.x_eval, design.match, design.hmue, stream,
                                                 design.estimate.relevance_level, &manski);
                rec.report = er.hmue;
                rec.plugin_iip = er.plugin.iip;
                rec.sign_flip_rate = er.sign_flip_rate;
                rec.hausdorff_manski = hausdorff_interval(er.hmue.manski, truth_for[k]->manski);
                rec.hausdorff_sv = hausdorff_interval(er.hmue.sv, truth_for[k]->sv);
                rec.ok = true;
            } catch (const Error& e) {
                rec.error = e.what();
            } catch (const std::domain_error& e) {
                // Raised by the numerical core on out-of-range arguments.
                rec.error = e.what();
            }
        }
    });
    for (std::size_t task = 0; task < N * M; ++task)
        for (std::size_t k = 0; k < S; ++k) {
            auto& rec = res.records[task * S + k];
            rec.n = design.sample_sizes[task / M];
            rec.set = k;
            rec.replicate = static_cast<int>(task % M);
        }

    for (std::size_t k = 0; k < S; ++k)
        for (std::size_t ni = 0; ni < N; ++ni) {
            std::vector<const McRecord*> recs;
            for (const auto& r : res.records)
                if (r.set == k && r.n == design.sample_sizes[ni]) recs.push_back(&r);
            res.cells.push_back(detail::aggregate(recs, sets[k].name, design.sample_sizes[ni]));
        }
    return res;
}

// --- ranking --------------------------------------------------------------------

struct RankEntry {
    std::string name;
    double iip = 0.0;
    double sv_width = 0.0;
};

inline std::vector<RankEntry> rank_entries(std::vector<RankEntry> v) {
    std::stable_sort(v.begin(), v.end(), [](const RankEntry& a, const RankEntry& b) {
        if (a.iip != b.iip) return a.iip > b.iip;
        if (a.sv_width != b.sv_width) return a.sv_width < b.sv_width;
        return a.name < b.name;
    });
    return v;
}

// Ranking at one sample size (the largest if n = 0).
inline std::vector<RankEntry> rank_iv_sets(const McResult& r, std::size_t n = 0) {
    if (n == 0)
        for (const auto& c : r.cells) n = std::max(n, c.n);
    std::vector<RankEntry> v;
    for (const auto& c : r.cells)
        if (c.n == n) v.push_back({c.ivset, c.iip, c.sv.width()});
    return rank_entries(std::move(v));
}

// --- Kolmogorov-Smirnov ---------------------------------------------------------

struct KsResult {
    double statistic = 0.0;
    double pvalue = 1.0;
};

// Asymptotic Kolmogorov distribution, Q(t) = 2 sum (-1)^(k-1) exp(-2 k^2 t^2).
inline double kolmogorov_q(double t) {
    if (t < 0.2) return 1.0;
    double sum = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * t * t);
        sum += (k % 2 ? 1.0 : -1.0) * term;
        if (term < 1e-16) break;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

inline KsResult ks_test(Vec a, Vec b) {
    if (a.empty() || b.empty()) throw ConfigError("ks_test: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double v = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= v) ++i;
        while (j < b.size() && b[j] <= v) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    const double ne = na * nb / (na + nb);
    const double sq = std::sqrt(ne);
    return {d, kolmogorov_q((sq + 0.12 + 0.11 / sq) * d)};
}

// --- population surfaces --------------------------------------------------------------

struct SurfaceRecord {
    double gamma, rho, beta;
    std::string quantity;
    double value;
};

// Population bounds at every (gamma, rho, beta) node. `make` builds the spec
// for a node; the IV set is all instruments.
inline std::vector<SurfaceRecord> surface_grid(const std::function<DgpSpec(double, double, double)>& make,
                                               const Vec& gamma_grid, const Vec& rho_grid, const Vec& beta_values,
                                               const Vec& x_eval, const MatchConfig& match = {}) {
    if (gamma_grid.empty() || rho_grid.empty() || beta_values.empty())
        throw ConfigError("surface_grid: grids must be nonempty");
    std::vector<SurfaceRecord> out;
    for (double b : beta_values)
        for (double g : gamma_grid)
            for (double r : rho_grid) {
                const auto s = make(g, r, b);
                const auto rep = population_report(s, x_eval, IvSetDef::identity(s.n_instruments()), match);
                const std::pair<const char*, double> q[] = {
                    {"L_M", rep.manski.lower},        {"U_M", rep.manski.upper},
                    {"L_bar", rep.widest.lower},      {"U_bar", rep.widest.upper},
                    {"L_SV", rep.sv.lower},           {"U_SV", rep.sv.upper},
                    {"width_SV", rep.sv.width()},     {"C1", rep.decomposition.c1},
                    {"C2", rep.decomposition.c2},     {"C3", rep.decomposition.c3},
                    {"C4", rep.decomposition.c4},     {"IIP", rep.iip},
                };
                for (const auto& [name, v] : q) out.push_back({g, r, b, name, v});
            }
    return out;
}

// model2 with every instrument coefficient set to gamma and every covariate
// coefficient in the outcome equation set to beta.
inline DgpSpec model2_node(double gamma, double rho, double beta) { return model2(gamma, rho, beta); }

inline Vec linspace_step(double from, double to, double step) {
    if (!(step > 0.0)) throw ConfigError("grid step must be > 0");
    Vec out;
    const auto k = static_cast<long>(std::floor((to - from) / step + 1e-9));
    for (long i = 0; i <= k; ++i) out.push_back(from + static_cast<double>(i) * step);
    return out;
}

// --- CSV writers ------------------------------------------------------------------

inline void write_surface_csv(std::ostream& os, const std::vector<SurfaceRecord>& recs) {
    os << "gamma,rho,beta,quantity,value\n";
    for (const auto& r : recs)
        os << fmt_num(r.gamma, 4) << ',' << fmt_num(r.rho, 4) << ',' << fmt_num(r.beta, 4) << ',' << r.quantity
           << ',' << fmt_num(r.value, 8) << '\n';
}

// One row per (IV set, n), mirroring the Monte Carlo table layout.
inline void write_mc_wide_csv(std::ostream& os, const McResult& r) {
    os << "ivset,n,ok,failed,L_M,U_M,L_SV,U_SV,H_M,H_SV,C1,C2,C3,C4,IIP,IIP_plugin\n";
    for (const auto& c : r.cells)
        os << '"' << c.ivset << '"' << ',' << c.n << ',' << c.ok << ',' << c.failed << ','
           << fmt_num(c.manski.lower) << ',' << fmt_num(c.manski.upper) << ',' << fmt_num(c.sv.lower) << ','
           << fmt_num(c.sv.upper) << ',' << fmt_num(c.hausdorff_manski) << ',' << fmt_num(c.hausdorff_sv) << ','
           << fmt_num(c.decomposition.c1) << ',' << fmt_num(c.decomposition.c2) << ','
           << fmt_num(c.decomposition.c3) << ',' << fmt_num(c.decomposition.c4) << ',' << fmt_num(c.iip) << ','
           << fmt_num(c.plugin_iip) << '\n';
}

inline void write_mc_records_csv(std::ostream& os, const McResult& r, const std::vector<IvSetDef>& sets) {
    os << "ivset,n,replicate,ok,L_M,U_M,L_SV,U_SV,C1,C2,C3,C4,IIP,IIP_plugin,sign_flip_rate,error\n";
    for (const auto& rec : r.records) {
        const auto& b = rec.report;
        os << '"' << sets.at(rec.set).name << '"' << ',' << rec.n << ',' << rec.replicate << ',' << rec.ok << ','
           << fmt_num(b.manski.lower) << ',' << fmt_num(b.manski.upper) << ',' << fmt_num(b.sv.lower) << ','
           << fmt_num(b.sv.upper) << ',' << fmt_num(b.decomposition.c1) << ',' << fmt_num(b.decomposition.c2) << ','
           << fmt_num(b.decomposition.c3) << ',' << fmt_num(b.decomposition.c4) << ',' << fmt_num(b.iip) << ','
           << fmt_num(rec.plugin_iip) << ',' << fmt_num(rec.sign_flip_rate) << ',' << '"' << rec.error << '"' << '\n';
    }
}

}  // namespace ivpower
