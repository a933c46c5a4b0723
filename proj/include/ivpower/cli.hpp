#pragma once

// Command implementations behind tools/ivpower. Each command takes a parsed
// JSON configuration plus flag overrides, writes its files under the output
// directory, and echoes a short table. Errors surface as ivpower::Error so
// the front end can map them onto exit codes.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "studies.hpp"

namespace ivpower::cli {

namespace fs = std::filesystem;

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<double> tolerance_c;
    std::optional<Vec> levels;
    std::optional<std::string> out;
    std::optional<std::string> data;
    std::optional<unsigned> workers;
    bool paper_scale = false;
};

// --- configuration ---------------------------------------------------------------

inline json parse_config_text(const std::string& text, const std::string& origin) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        // Report a line number: nlohmann gives a byte offset.
        std::size_t line = 1;
        for (std::size_t i = 0; i < std::min(e.byte, text.size()); ++i)
            if (text[i] == '\n') ++line;
        throw ConfigError(origin + ": line " + std::to_string(line) + ": malformed JSON (" + e.what() + ")");
    }
}

inline json load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path);
}

// Wraps nlohmann type errors so they name the offending field.
template <class T>
T get_field(const json& j, const char* field, T fallback) {
    if (!j.contains(field)) return fallback;
    try {
        return j.at(field).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("field '") + field + "': wrong type");
    }
}

inline DgpSpec dgp_from_config(const json& cfg) {
    try {
        if (cfg.contains("dgp")) return dgp_from_json(cfg.at("dgp"));
        if (cfg.contains("model")) {
            const auto& m = cfg.at("model");
            const auto name = get_field<std::string>(m, "name", "");
            if (name == "model3") {
                const auto xc = get_field<std::string>(m, "covariate", "normal");
                if (xc != "normal" && xc != "bernoulli")
                    throw ConfigError("field 'model.covariate': expected 'normal' or 'bernoulli'");
                return model3(get_field<double>(m, "rho", 0.5),
                              xc == "normal" ? CovariateCase::normal : CovariateCase::bernoulli);
            }
            if (name == "model2")
                return model2(get_field<double>(m, "gamma", 1.0), get_field<double>(m, "rho", 0.5),
                              get_field<double>(m, "beta", 0.25));
            throw ConfigError("field 'model.name': unknown model '" + name + "'");
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("field 'dgp': ") + e.what());
    }
    throw ConfigError("config needs a 'dgp' or 'model' field");
}

inline bool is_model3(const json& cfg) {
    return cfg.contains("model") && get_field<std::string>(cfg.at("model"), "name", "") == "model3";
}

// Explicit list, else the five reference sets for model3, else all instruments.
inline std::vector<IvSetDef> ivsets_from_config(const json& cfg, std::size_t m) {
    std::vector<IvSetDef> out;
    if (cfg.contains("iv_sets")) {
        const auto& arr = cfg.at("iv_sets");
        if (!arr.is_array() || arr.empty()) throw ConfigError("field 'iv_sets': expected a nonempty array");
        for (const auto& e : arr) out.push_back(ivset_from_json(e));
    } else if (is_model3(cfg) && m == 3) {
        out = model3_iv_sets();
    } else {
        out.push_back(IvSetDef::identity(m));
    }
    for (const auto& s : out)
        for (const auto& t : s.terms)
            if (t.column >= m)
                throw ConfigError("iv set '" + s.name + "' uses instrument column " + std::to_string(t.column) +
                                  " but only " + std::to_string(m) + " exist");
    return out;
}

// "x_eval": 0.0 | [0.0, 1.0] (one-dimensional points) | [[0.0, 1.0], ...].
inline std::vector<Vec> points_from_config(const json& cfg, std::size_t dim, const Vec& fallback) {
    if (!cfg.contains("x_eval")) return {fallback};
    const auto& j = cfg.at("x_eval");
    std::vector<Vec> pts;
    if (j.is_number()) {
        pts.push_back({j.get<double>()});
    } else if (j.is_array()) {
        for (const auto& e : j) {
            if (e.is_number())
                pts.push_back({e.get<double>()});
            else if (e.is_array())
                pts.push_back(detail::as_vec(e, "x_eval"));
            else
                throw ConfigError("field 'x_eval': entries must be numbers or arrays");
        }
    } else {
        throw ConfigError("field 'x_eval': expected a number or an array");
    }
    if (pts.empty()) throw ConfigError("field 'x_eval': empty");
    if (dim == 1 && pts.size() == 1 && pts[0].size() > 1) {
        Vec flat = pts[0];
        pts.clear();
        for (double v : flat) pts.push_back({v});
    }
    for (const auto& p : pts)
        if (p.size() != dim)
            throw ConfigError("field 'x_eval': point dimension " + std::to_string(p.size()) + " differs from " +
                              std::to_string(dim));
    return pts;
}

inline MatchConfig match_from_config(const json& cfg, const Overrides& ov) {
    MatchConfig m;
    if (cfg.contains("match")) {
        const auto& j = cfg.at("match");
        m.tolerance_c = get_field<double>(j, "tolerance_c", m.tolerance_c);
        m.grid_step = get_field<double>(j, "grid_step", m.grid_step);
        m.grid_halfwidth = get_field<double>(j, "grid_halfwidth", m.grid_halfwidth);
        m.exact_when_pi_zero = get_field<bool>(j, "exact_when_pi_zero", m.exact_when_pi_zero);
    }
    if (ov.tolerance_c) m.tolerance_c = *ov.tolerance_c;
    m.validate();
    return m;
}

inline HmueConfig hmue_from_config(const json& cfg, const Overrides& ov) {
    HmueConfig h;
    if (cfg.contains("hmue")) {
        const auto& j = cfg.at("hmue");
        h.n_sim = get_field<int>(j, "n_sim", h.n_sim);
        h.levels = get_field<Vec>(j, "levels", h.levels);
        const auto w = get_field<std::string>(j, "widest", "extremes");
        if (w != "extremes" && w != "all") throw ConfigError("field 'hmue.widest': expected 'extremes' or 'all'");
        h.widest = w == "all" ? WidestTerms::all : WidestTerms::extremes;
    }
    h.seed = get_field<std::uint64_t>(cfg, "seed", h.seed);
    if (ov.seed) h.seed = *ov.seed;
    if (ov.levels) h.levels = *ov.levels;
    h.validate();
    return h;
}

inline EstimateOptions estimate_from_config(const json& cfg) {
    EstimateOptions e;
    if (cfg.contains("estimate")) {
        const auto& j = cfg.at("estimate");
        e.intercept = get_field<bool>(j, "intercept", e.intercept);
        e.discrete_max_unique = get_field<std::size_t>(j, "discrete_max_unique", e.discrete_max_unique);
        e.relevance_level = get_field<double>(j, "relevance_level", e.relevance_level);
    }
    return e;
}

inline fs::path output_dir(const json& cfg, const Overrides& ov) {
    const fs::path dir = ov.out ? *ov.out : get_field<std::string>(cfg, "out", "out");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw ConfigError("output directory '" + dir.string() + "' is not writable");
    const auto probe = dir / ".write_probe";
    {
        std::ofstream t(probe);
        if (!t) throw ConfigError("output directory '" + dir.string() + "' is not writable");
    }
    fs::remove(probe, ec);
    return dir;
}

inline std::ofstream open_out(const fs::path& p) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw ConfigError("cannot write '" + p.string() + "'");
    return os;
}

inline Dataset load_data(const json& cfg, const Overrides& ov) {
    const std::string path = ov.data ? *ov.data : get_field<std::string>(cfg, "data", "");
    if (path.empty()) throw ConfigError("no data file: pass --data or set field 'data'");
    if (!fs::exists(path)) throw ConfigError("data file '" + path + "' does not exist");
    const auto t = read_table(path);
    const auto xs = get_field<std::vector<std::string>>(cfg, "x_columns", {});
    const auto zs = get_field<std::vector<std::string>>(cfg, "z_columns", {});
    return dataset_from_table(t, get_field<std::string>(cfg, "y_column", "y"), get_field<std::string>(cfg, "d_column", "d"),
                              xs, zs);
}

inline unsigned workers_from(const json& cfg, const Overrides& ov) {
    if (ov.workers) return *ov.workers;
    const auto w = get_field<unsigned>(cfg, "workers", 0u);
    return w ? w : default_workers();
}

inline std::string csv_quote(const std::string& s) { return '"' + s + '"'; }

// --- dgp-bounds -------------------------------------------------------------------

inline int cmd_dgp_bounds(const json& cfg, const Overrides& ov, std::ostream& echo) {
    const auto spec = dgp_from_config(cfg);
    const auto sets = ivsets_from_config(cfg, spec.n_instruments());
    const auto pts = points_from_config(cfg, spec.n_covariates(), Vec(spec.n_covariates(), 0.0));
    const auto match = match_from_config(cfg, ov);
    const auto dir = output_dir(cfg, ov);

    auto csv = open_out(dir / "bounds.csv");
    csv << "ivset," << report_csv_header() << ",ATE\n";
    json all = json::array();
    echo << "ivset                 x        Manski               SV                   C1     C2     C3     C4     IIP\n";
    for (const auto& set : sets)
        for (const auto& x : pts) {
            const auto r = population_report(spec, x, set, match);
            const double ate = true_ate(spec, x);
            csv << csv_quote(set.name) << ',' << report_csv_row(r) << ',' << fmt_num(ate) << '\n';
            all.push_back(json{{"ivset", ivset_to_json(set)}, {"report", report_to_json(r)}, {"ate", ate}});
            char line[256];
            std::snprintf(line, sizeof line,
                          "%-20s %6.3f  [%6.3f,%6.3f]      [%6.3f,%6.3f]      %6.3f %6.3f %6.3f %6.3f %6.3f %s\n",
                          set.name.c_str(), x[0], r.manski.lower, r.manski.upper, r.sv.lower, r.sv.upper,
                          r.decomposition.c1, r.decomposition.c2, r.decomposition.c3, r.decomposition.c4, r.iip,
                          r.note.c_str());
            echo << line;
        }
    auto js = open_out(dir / "bounds.json");
    js << all.dump(2) << '\n';
    return 0;
}

// --- surface ----------------------------------------------------------------------

inline Vec grid_from_config(const json& cfg, const char* field, const Vec& fallback) {
    if (!cfg.contains(field)) return fallback;
    const auto& j = cfg.at(field);
    if (j.is_object())
        return linspace_step(get_field<double>(j, "from", 0.0), get_field<double>(j, "to", 0.0),
                             get_field<double>(j, "step", 1.0));
    if (j.is_number()) return {j.get<double>()};
    if (j.is_array()) return detail::as_vec(j, field);
    throw ConfigError(std::string("field '") + field + "': expected a number, an array or {from,to,step}");
}

inline int cmd_surface(const json& cfg, const Overrides& ov, std::ostream& echo) {
    const Vec gammas = grid_from_config(cfg, "gamma", linspace_step(-4.0, 4.0, 0.2));
    const Vec rhos = grid_from_config(cfg, "rho", linspace_step(-0.99, 0.99, 0.05));
    const Vec betas = grid_from_config(cfg, "beta", {0.25});
    for (double r : rhos)
        if (!(std::abs(r) < 1.0)) throw ConfigError("field 'rho': grid values must satisfy |rho| < 1");
    const auto pts = points_from_config(cfg, 1, {0.0});
    const auto match = match_from_config(cfg, ov);
    const auto dir = output_dir(cfg, ov);

    DgpSpec base;
    const bool custom = cfg.contains("dgp") || cfg.contains("model");
    if (custom) base = dgp_from_config(cfg);
    auto make = [&](double g, double r, double b) {
        if (!custom) return model2(g, r, b);
        DgpSpec s = base;
        std::fill(s.gamma.begin(), s.gamma.end(), g);
        std::fill(s.beta.begin(), s.beta.end(), b);
        s.rho = r;
        return s;
    };
    const auto recs = surface_grid(make, gammas, rhos, betas, pts.front(), match);
    auto os = open_out(dir / "surface.csv");
    write_surface_csv(os, recs);
    echo << "surface: " << gammas.size() << " x " << rhos.size() << " x " << betas.size() << " nodes, "
         << recs.size() << " records -> " << (dir / "surface.csv").string() << '\n';
    return 0;
}

// --- simulate ---------------------------------------------------------------------

inline McDesign design_from_config(const json& cfg, const Overrides& ov) {
    McDesign d;
    d.spec = dgp_from_config(cfg);
    d.iv_sets = ivsets_from_config(cfg, d.spec.n_instruments());
    d.sample_sizes = get_field<std::vector<std::size_t>>(cfg, "sample_sizes", d.sample_sizes);
    d.replications = get_field<int>(cfg, "replications", d.replications);
    if (ov.paper_scale) {
        d.sample_sizes = {500, 5000, 10000};
        d.replications = 1000;
    }
    d.x_eval = points_from_config(cfg, d.spec.n_covariates(), Vec(d.spec.n_covariates(), 0.0)).front();
    d.hmue = hmue_from_config(cfg, ov);
    d.seed = d.hmue.seed;
    d.match = match_from_config(cfg, ov);
    d.estimate = estimate_from_config(cfg);
    d.truth_ivset = get_field<std::string>(cfg, "truth_ivset", is_model3(cfg) ? "(4) Z1,Z2" : "");
    d.workers = workers_from(cfg, ov);
    d.validate();
    return d;
}

inline int cmd_simulate(const json& cfg, const Overrides& ov, std::ostream& echo) {
    const auto dir = output_dir(cfg, ov);
    // Sample-only mode writes one synthetic data set.
    if (cfg.contains("sample")) {
        const auto spec = dgp_from_config(cfg);
        const auto n = get_field<std::size_t>(cfg, "sample", 0);
        const auto seed = ov.seed ? *ov.seed : get_field<std::uint64_t>(cfg, "seed", 1);
        const auto ds = generate_sample(spec, n, seed, 0);
        auto os = open_out(dir / "sample.csv");
        write_dataset(os, ds);
        echo << "sample: " << n << " rows -> " << (dir / "sample.csv").string() << '\n';
        return 0;
    }
    const auto design = design_from_config(cfg, ov);
    const auto res = run_monte_carlo(design);
    {
        auto os = open_out(dir / "mc_wide.csv");
        write_mc_wide_csv(os, res);
    }
    {
        auto os = open_out(dir / "mc_records.csv");
        write_mc_records_csv(os, res, design.iv_sets);
    }
    json truth = json::array();
    for (std::size_t k = 0; k < res.truth.size(); ++k)
        truth.push_back(json{{"ivset", design.iv_sets[k].name}, {"report", report_to_json(res.truth[k])}});

    // Irrelevant-instrument comparison between consecutive nested sets named in
    // "ks_pair" (default: the last two sets).
    json ks = json::array();
    std::pair<std::size_t, std::size_t> pair{design.iv_sets.size() >= 2 ? design.iv_sets.size() - 2 : 0,
                                             design.iv_sets.size() - 1};
    if (cfg.contains("ks_pair")) {
        const auto names = get_field<std::vector<std::string>>(cfg, "ks_pair", {});
        auto find = [&](const std::string& nm) {
            for (std::size_t k = 0; k < design.iv_sets.size(); ++k)
                if (design.iv_sets[k].name == nm) return k;
            throw ConfigError("field 'ks_pair': unknown set '" + nm + "'");
        };
        if (names.size() != 2) throw ConfigError("field 'ks_pair': expected two set names");
        pair = {find(names[0]), find(names[1])};
    }
    if (pair.first != pair.second)
        for (auto n : design.sample_sizes) {
            const auto a = res.draws(pair.first, n, [](const McRecord& r) { return r.report.iip; });
            const auto b = res.draws(pair.second, n, [](const McRecord& r) { return r.report.iip; });
            if (a.empty() || b.empty()) continue;
            const auto t = ks_test(a, b);
            ks.push_back(json{{"n", n},
                              {"a", design.iv_sets[pair.first].name},
                              {"b", design.iv_sets[pair.second].name},
                              {"statistic", t.statistic},
                              {"pvalue", t.pvalue}});
        }
    auto js = open_out(dir / "mc_summary.json");
    js << json{{"truth", truth}, {"ks", ks}}.dump(2) << '\n';

    echo << "ivset                 n      ok  fail  IIP     IIP_pop  H_SV\n";
    for (const auto& c : res.cells) {
        std::size_t k = 0;
        while (design.iv_sets[k].name != c.ivset) ++k;
        char line[200];
        std::snprintf(line, sizeof line, "%-20s %6zu %5d %4d  %6.3f  %6.3f  %6.3f\n", c.ivset.c_str(), c.n, c.ok,
                      c.failed, c.iip, res.truth[k].iip, c.hausdorff_sv);
        echo << line;
        if (c.failure_rate() > 0.02) echo << "  warning: more than 2% of replicates failed\n";
    }
    return 0;
}

// --- estimate ---------------------------------------------------------------------

inline Vec column_means(const Dataset& d) {
    Vec m(static_cast<std::size_t>(d.X.cols()));
    for (Eigen::Index c = 0; c < d.X.cols(); ++c) m[static_cast<std::size_t>(c)] = d.X.col(c).mean();
    return m;
}

inline BoundsReport band_report(const EstimatedReport& r, const BoundSet& b) {
    BoundsReport out = r.hmue;
    out.manski = b.manski;
    if (out.relevant && out.sign != Sign::zero) {
        out.widest = b.widest;
        out.sv = b.sv;
    } else if (!out.relevant) {
        out.widest = out.sv = b.manski;
        out.decomposition = irrelevant_decomposition(b.manski);
        return out;
    }
    out.decomposition = decompose(out.sign, out.manski, out.widest, out.sv);
    out.iip = out.decomposition.c1 + out.decomposition.c2;
    return out;
}

inline int cmd_estimate(const json& cfg, const Overrides& ov, std::ostream& echo) {
    const auto data = load_data(cfg, ov);
    const auto sets = ivsets_from_config(cfg, static_cast<std::size_t>(data.Z.cols()));
    const auto pts = points_from_config(cfg, static_cast<std::size_t>(data.X.cols()), column_means(data));
    const auto match = match_from_config(cfg, ov);
    const auto hmue = hmue_from_config(cfg, ov);
    const auto opt = estimate_from_config(cfg);
    const auto dir = output_dir(cfg, ov);

    auto csv = open_out(dir / "estimate.csv");
    csv << "ivset,kind," << report_csv_header() << '\n';
    json all = json::array();
    const auto manski = manski_reference(data, opt);
    for (std::size_t k = 0; k < sets.size(); ++k) {
        const auto em = estimate_model(data, sets[k], opt);
        json per_set = json::array();
        for (std::size_t p = 0; p < pts.size(); ++p) {
            auto ref = manski;
            ref.stream |= p;
            const auto r = estimated_report(em, pts[p], match, hmue, (k << 32) | p, opt.relevance_level, &ref);
            csv << csv_quote(sets[k].name) << ",hmue," << report_csv_row(r.hmue) << '\n';
            csv << csv_quote(sets[k].name) << ",plugin," << report_csv_row(r.plugin) << '\n';
            for (const auto& [level, b] : r.confidence)
                csv << csv_quote(sets[k].name) << ",ci" << fmt_num(level, 2) << ','
                    << report_csv_row(band_report(r, b)) << '\n';
            per_set.push_back(estimated_report_to_json(r));
            char line[200];
            std::snprintf(line, sizeof line, "%-20s SV [%6.3f,%6.3f]  IIP %6.3f  (plug-in %6.3f)  %s\n",
                          sets[k].name.c_str(), r.hmue.sv.lower, r.hmue.sv.upper, r.hmue.iip, r.plugin.iip,
                          r.hmue.note.c_str());
            echo << line;
        }
        all.push_back(json{{"ivset", ivset_to_json(sets[k])}, {"spec", dgp_to_json(em.spec)}, {"reports", per_set}});
    }
    auto js = open_out(dir / "estimate.json");
    js << all.dump(2) << '\n';
    return 0;
}

// --- rank-ivs ---------------------------------------------------------------------

struct RankedSet {
    RankEntry entry;
    DispersionSummary boot;
    bool possibly_irrelevant = false;
};

inline std::vector<RankedSet> rank_sets(const Dataset& data, const std::vector<IvSetDef>& sets, const Vec& x,
                                        const MatchConfig& match, const HmueConfig& hmue,
                                        const EstimateOptions& opt, int B, unsigned workers) {
    std::vector<RankedSet> out;
    std::vector<RankEntry> entries;
    const auto manski = manski_reference(data, opt);
    for (std::size_t k = 0; k < sets.size(); ++k) {
        const auto em = estimate_model(data, sets[k], opt);
        const auto r = estimated_report(em, x, match, hmue, k, opt.relevance_level, &manski);
        RankedSet rs;
        rs.entry = {sets[k].name, r.hmue.iip, r.hmue.sv.width()};
        rs.boot = bootstrap_dispersion(data, sets[k], x, B, hmue.seed + 7919 * (k + 1), opt, true, workers);
        // The 95% percentile band of the bootstrap IIP reaching zero.
        rs.possibly_irrelevant = !r.hmue.relevant || rs.boot.quantiles.empty() || rs.boot.quantiles[0] <= 1e-12;
        out.push_back(rs);
    }
    for (const auto& r : out) entries.push_back(r.entry);
    std::vector<RankedSet> ordered;
    for (const auto& e : rank_entries(entries))
        for (const auto& r : out)
            if (r.entry.name == e.name) ordered.push_back(r);
    return ordered;
}

inline int cmd_rank_ivs(const json& cfg, const Overrides& ov, std::ostream& echo) {
    const auto data = load_data(cfg, ov);
    const auto sets = ivsets_from_config(cfg, static_cast<std::size_t>(data.Z.cols()));
    const auto x = points_from_config(cfg, static_cast<std::size_t>(data.X.cols()), column_means(data)).front();
    const auto match = match_from_config(cfg, ov);
    const auto hmue = hmue_from_config(cfg, ov);
    const auto opt = estimate_from_config(cfg);
    const int B = get_field<int>(cfg, "bootstrap", 100);
    const auto dir = output_dir(cfg, ov);
    const auto ranked = rank_sets(data, sets, x, match, hmue, opt, B, workers_from(cfg, ov));

    auto csv = open_out(dir / "ranking.csv");
    csv << "rank,ivset,iip,sv_width,boot_mean,boot_sd,boot_q025,boot_q975,boot_failed,flag\n";
    echo << "rank ivset                 IIP     boot sd  flag\n";
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        const auto& r = ranked[i];
        const auto& q = r.boot.quantiles;
        const std::string flag = r.possibly_irrelevant ? "possibly irrelevant" : "";
        csv << i + 1 << ',' << csv_quote(r.entry.name) << ',' << fmt_num(r.entry.iip) << ','
            << fmt_num(r.entry.sv_width) << ',' << fmt_num(r.boot.mean) << ',' << fmt_num(r.boot.sd) << ','
            << fmt_num(q.empty() ? 0.0 : q.front()) << ',' << fmt_num(q.empty() ? 0.0 : q.back()) << ','
            << r.boot.failed << ',' << flag << '\n';
        char line[200];
        std::snprintf(line, sizeof line, "%4zu %-20s %6.3f  %6.3f   %s\n", i + 1, r.entry.name.c_str(), r.entry.iip,
                      r.boot.sd, flag.c_str());
        echo << line;
    }
    return 0;
}

// --- empirical --------------------------------------------------------------------

struct WeightScheme {
    // Bandwidth <= 0 selects Silverman's rule of thumb.
    double bandwidth = 0.0;
};

inline double silverman_bandwidth(const Vec& v) {
    const double n = static_cast<double>(v.size());
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double ss = 0.0;
    for (double a : v) ss += (a - mean) * (a - mean);
    const double sd = std::sqrt(ss / (n - 1.0));
    const double iqr = quantile(v, 0.75) - quantile(v, 0.25);
    const double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
    if (!(spread > 0.0)) throw DataError("propensity score has no spread");
    return 0.9 * spread * std::pow(n, -0.2);
}

// Gaussian kernel density of `sample` at each grid point, normalized to sum 1.
inline Vec kernel_weights(const Vec& sample, const Vec& grid, double h) {
    if (!(h > 0.0)) throw ConfigError("bandwidth must be > 0");
    Vec w(grid.size(), 0.0);
    for (std::size_t g = 0; g < grid.size(); ++g) {
        double acc = 0.0;
        for (double s : sample) acc += std_normal_pdf((grid[g] - s) / h);
        w[g] = acc;
    }
    const double tot = std::accumulate(w.begin(), w.end(), 0.0);
    for (double& v : w) v /= tot;
    return w;
}

struct EmpiricalSet {
    IvSetDef ivset;
    std::vector<EstimatedReport> curve;  // one per grid point
    BoundsReport weighted;               // weighted averages (x left empty)
};

struct EmpiricalResult {
    FitResult stage1;
    Vec xp;  // per observation
    Vec grid;
    Vec weights;
    double bandwidth = 0.0;
    std::vector<EmpiricalSet> sets;
};

inline EmpiricalResult run_empirical(const Dataset& data, const std::vector<IvSetDef>& sets, const MatchConfig& match,
                                     const HmueConfig& hmue, const EstimateOptions& opt, const WeightScheme& ws,
                                     std::size_t grid_points, unsigned workers) {
    if (grid_points < 1) throw ConfigError("field 'grid_points': must be >= 1");
    EmpiricalResult res;
    res.stage1 = fit_probit(data, Response::d, true, false);
    const auto n = static_cast<Eigen::Index>(data.n());
    res.xp.resize(data.n());
    for (Eigen::Index i = 0; i < n; ++i) {
        double idx = res.stage1.params(0);
        for (Eigen::Index c = 0; c < data.X.cols(); ++c) idx += res.stage1.params(1 + c) * data.X(i, c);
        res.xp[static_cast<std::size_t>(i)] = normal_cdf(idx);
    }
    for (std::size_t g = 1; g <= grid_points; ++g)
        res.grid.push_back(quantile(res.xp, static_cast<double>(g) / static_cast<double>(grid_points + 1)));
    res.bandwidth = ws.bandwidth > 0.0 ? ws.bandwidth : silverman_bandwidth(res.xp);
    res.weights = kernel_weights(res.xp, res.grid, res.bandwidth);

    Dataset reduced = data;
    reduced.X.resize(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) reduced.X(i, 0) = res.xp[static_cast<std::size_t>(i)];
    reduced.x_names = {"xp"};

    const auto manski = manski_reference(reduced, opt);
    for (std::size_t k = 0; k < sets.size(); ++k) {
        EmpiricalSet es;
        es.ivset = sets[k];
        const auto em = estimate_model(reduced, sets[k], opt);
        es.curve.resize(res.grid.size());
        parallel_for(res.grid.size(), workers, [&](std::size_t g) {
            auto ref = manski;
            ref.stream |= g;
            es.curve[g] = estimated_report(em, Vec{res.grid[g]}, match, hmue, (k << 32) | g, opt.relevance_level, &ref);
        });
        auto& w = es.weighted;
        w.manski = w.widest = w.sv = {0.0, 0.0};
        bool all_relevant = true;
        for (std::size_t g = 0; g < res.grid.size(); ++g) {
            const auto& r = es.curve[g].hmue;
            const double a = res.weights[g];
            w.manski.lower += a * r.manski.lower;
            w.manski.upper += a * r.manski.upper;
            w.widest.lower += a * r.widest.lower;
            w.widest.upper += a * r.widest.upper;
            w.sv.lower += a * r.sv.lower;
            w.sv.upper += a * r.sv.upper;
            w.decomposition.c1 += a * r.decomposition.c1;
            w.decomposition.c2 += a * r.decomposition.c2;
            w.decomposition.c3 += a * r.decomposition.c3;
            w.decomposition.c4 += a * r.decomposition.c4;
            w.iip += a * r.iip;
            all_relevant = all_relevant && r.relevant;
        }
        w.sign = es.curve.front().hmue.sign;
        w.relevant = all_relevant;
        w.note = "kernel-weighted average over the propensity-score grid";
        res.sets.push_back(std::move(es));
    }
    return res;
}

inline int cmd_empirical(const json& cfg, const Overrides& ov, std::ostream& echo) {
    const auto data = load_data(cfg, ov);
    const auto sets = ivsets_from_config(cfg, static_cast<std::size_t>(data.Z.cols()));
    const auto match = match_from_config(cfg, ov);
    const auto hmue = hmue_from_config(cfg, ov);
    const auto opt = estimate_from_config(cfg);
    WeightScheme ws;
    if (cfg.contains("bandwidth")) {
        const auto& b = cfg.at("bandwidth");
        if (b.is_string()) {
            if (b.get<std::string>() != "silverman") throw ConfigError("field 'bandwidth': expected a number or 'silverman'");
        } else {
            ws.bandwidth = get_field<double>(cfg, "bandwidth", 0.0);
            if (!(ws.bandwidth > 0.0)) throw ConfigError("field 'bandwidth': must be > 0");
        }
    }
    const auto grid_points = get_field<std::size_t>(cfg, "grid_points", 99);
    const auto dir = output_dir(cfg, ov);
    const auto res = run_empirical(data, sets, match, hmue, opt, ws, grid_points, workers_from(cfg, ov));

    auto summary = open_out(dir / "empirical_summary.csv");
    summary << "ivset," << report_csv_header() << '\n';
    auto curves = open_out(dir / "empirical_curves.csv");
    curves << "ivset,weight," << report_csv_header() << '\n';
    json js = json::object();
    js["stage1"] = fit_to_json(res.stage1);
    js["bandwidth"] = res.bandwidth;
    js["grid"] = res.grid;
    js["weights"] = res.weights;
    js["sets"] = json::array();
    echo << "ivset                 Manski             SV                 C1     C2     C3     C4     IIP\n";
    for (const auto& es : res.sets) {
        auto w = es.weighted;
        w.x = {0.0};
        summary << csv_quote(es.ivset.name) << ',' << report_csv_row(w) << '\n';
        json curve = json::array();
        for (std::size_t g = 0; g < res.grid.size(); ++g) {
            curves << csv_quote(es.ivset.name) << ',' << fmt_num(res.weights[g], 8) << ','
                   << report_csv_row(es.curve[g].hmue) << '\n';
            curve.push_back(report_to_json(es.curve[g].hmue));
        }
        js["sets"].push_back(json{{"ivset", ivset_to_json(es.ivset)}, {"weighted", report_to_json(es.weighted)},
                                  {"curve", curve}});
        const auto& d = es.weighted.decomposition;
        char line[220];
        std::snprintf(line, sizeof line, "%-20s [%6.3f,%6.3f]  [%6.3f,%6.3f]  %6.3f %6.3f %6.3f %6.3f %6.3f\n",
                      es.ivset.name.c_str(), w.manski.lower, w.manski.upper, w.sv.lower, w.sv.upper, d.c1, d.c2, d.c3,
                      d.c4, w.iip);
        echo << line;
    }
    auto jo = open_out(dir / "empirical.json");
    jo << js.dump(2) << '\n';
    return 0;
}

// --- dispatch ---------------------------------------------------------------------

inline int run_command(const std::string& cmd, const json& cfg, const Overrides& ov, std::ostream& echo) {
    if (cmd == "dgp-bounds") return cmd_dgp_bounds(cfg, ov, echo);
    if (cmd == "surface") return cmd_surface(cfg, ov, echo);
    if (cmd == "simulate") return cmd_simulate(cfg, ov, echo);
    if (cmd == "estimate") return cmd_estimate(cfg, ov, echo);
    if (cmd == "rank-ivs") return cmd_rank_ivs(cfg, ov, echo);
    if (cmd == "empirical") return cmd_empirical(cfg, ov, echo);
    throw ConfigError("unknown command '" + cmd + "'");
}

// Runs a command and converts failures into the exit-code contract.
inline int run_guarded(const std::string& cmd, const json& cfg, const Overrides& ov, std::ostream& echo,
                       std::ostream& err) {
    try {
        return run_command(cmd, cfg, ov, echo);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return static_cast<int>(e.exit_code());
    } catch (const json::exception& e) {
        err << "error: config: " << e.what() << '\n';
        return static_cast<int>(ExitCode::config);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return static_cast<int>(ExitCode::numerical);
    }
}

}  // namespace ivpower::cli
