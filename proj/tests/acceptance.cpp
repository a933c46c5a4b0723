// Acceptance run: one PASS/FAIL line per criterion. The exit status is
// nonzero when a required criterion fails; soft criteria only report.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <ivpower/cli.hpp>
#include <ivpower/estimate.hpp>
#include <ivpower/studies.hpp>

#include "micro_dgp.hpp"
#include "oracles.hpp"

using namespace ivpower;
namespace fs = std::filesystem;

namespace {

const Vec kX0{0.0};

struct Outcome {
    bool pass = false;
    std::string detail;
};

class Detail {
public:
    template <class... A>
    Detail& add(const char* fmt, A... a) {
        char buf[512];
        std::snprintf(buf, sizeof buf, fmt, a...);
        if (!text_.empty()) text_ += "; ";
        text_ += buf;
        return *this;
    }
    std::string str() const { return text_; }

private:
    std::string text_;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// --- population -------------------------------------------------------------------

Outcome c1_table1() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto sets = model3_iv_sets();
    const double range[5][2] = {{0.500, 0.682}, {0.367, 0.795}, {0.410, 0.799}, {0.274, 0.864}, {0.274, 0.864}};
    const double at05[] = {0.305, 0.493, 0.456, 0.625, 0.625};
    const double at08[] = {0.232, 0.443, 0.403, 0.594, 0.594};
    double worst = 0.0;
    for (int k = 0; k < 5; ++k) {
        const auto sup = cps_support(model3(0.5), kX0, sets[k]);
        worst = std::max({worst, std::abs(sup.p_lo - range[k][0]), std::abs(sup.p_hi - range[k][1])});
        worst = std::max(worst, std::abs(iip(model3(0.5), kX0, sets[k]) - at05[k]));
        worst = std::max(worst, std::abs(iip(model3(0.8), kX0, sets[k]) - at08[k]));
    }
    const double secs = seconds_since(t0);
    Detail d;
    d.add("max deviation %.5f (tol 0.001)", worst).add("%.3f s (limit 1 s)", secs);
    return {worst <= 1e-3 && secs < 1.0, d.str()};
}

Outcome c2_true_rows() {
    struct Row {
        double rho;
        CovariateCase xc;
        Interval manski, sv;
        Decomposition dec;
    };
    const Row rows[] = {
        {0.5, CovariateCase::normal, {-0.179, 0.821}, {0.341, 0.341}, {0.179, 0.446, 0.375, 0.000}},
        {0.8, CovariateCase::normal, {-0.096, 0.904}, {0.341, 0.341}, {0.096, 0.498, 0.406, 0.000}},
        {0.5, CovariateCase::bernoulli, {-0.179, 0.821}, {0.283, 0.547}, {0.179, 0.446, 0.111, 0.264}},
        {0.8, CovariateCase::bernoulli, {-0.096, 0.904}, {0.319, 0.593}, {0.096, 0.498, 0.132, 0.274}},
    };
    const auto set4 = model3_iv_sets()[3];
    double worst = 0.0, slowest = 0.0;
    for (const auto& r : rows) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto b = population_report(model3(r.rho, r.xc), kX0, set4);
        slowest = std::max(slowest, seconds_since(t0));
        for (double e : {b.manski.lower - r.manski.lower, b.manski.upper - r.manski.upper, b.sv.lower - r.sv.lower,
                         b.sv.upper - r.sv.upper, b.decomposition.c1 - r.dec.c1, b.decomposition.c2 - r.dec.c2,
                         b.decomposition.c3 - r.dec.c3, b.decomposition.c4 - r.dec.c4})
            worst = std::max(worst, std::abs(e));
    }
    Detail d;
    d.add("max deviation %.5f (tol 0.002)", worst).add("slowest table %.2f s (limit 30 s)", slowest);
    return {worst <= 2e-3 && slowest < 30.0, d.str()};
}

Outcome c3_true_ate() {
    const double ate = true_ate(model3(0.5), kX0);
    Detail d;
    d.add("true ATE %.6f (target 0.341 +/- 0.0005)", ate);
    return {std::abs(ate - 0.341) <= 5e-4, d.str()};
}

Outcome c4_numcore() {
    double worst = 0.0;
    for (int k = -9; k <= 9; ++k) {
        const double r = 0.1 * k;
        worst = std::max(worst, std::abs(bvn_cdf(0.0, 0.0, r) - (0.25 + std::asin(r) / (2.0 * std::numbers::pi))));
    }
    RngStream rng(4, 1);
    int frechet = 0;
    for (int i = 0; i < 10000; ++i) {
        const double u1 = rng.uniform(), u2 = rng.uniform(), r = 1.98 * rng.uniform() - 0.99;
        const double c = gaussian_copula(Prob(u1), Prob(u2), Corr(r));
        frechet += c < std::max(u1 + u2 - 1.0, 0.0) - 1e-12 || c > std::min(u1, u2) + 1e-12;
    }
    Detail d;
    d.add("origin identity max error %.2e (tol 1e-8)", worst).add("Frechet violations %d of 10000", frechet);
    return {worst < 1e-8 && frechet == 0, d.str()};
}

Outcome c5_gradient() {
    const auto ds = generate_sample(model3(0.5), 400, 55, 0);
    const auto b = biprobit_data(ds, used_instruments(ds, model3_iv_sets()[3]), true);
    VectorXd base(8);
    base << 1.0, 0.0, 1.0, 0.0, -1.0, 0.5, 0.2, std::atanh(0.5);
    RngStream rng(5, 9);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        VectorXd t = base;
        for (Eigen::Index j = 0; j < t.size(); ++j) t(j) += 0.6 * rng.normal();
        VectorXd g;
        biprobit_loglik(b, t, &g);
        for (Eigen::Index j = 0; j < t.size(); ++j) {
            const double h = 1e-5 * std::max(1.0, std::abs(t(j)));
            VectorXd up = t, dn = t;
            up(j) += h;
            dn(j) -= h;
            const double fd = (biprobit_loglik(b, up) - biprobit_loglik(b, dn)) / (2 * h);
            worst = std::max(worst, std::abs(g(j) - fd) / std::max(std::abs(fd), 1.0));
        }
    }
    Detail d;
    d.add("worst relative error %.2e over 100 points (tol 1e-5)", worst);
    return {worst < 1e-5, d.str()};
}

Outcome c6_oracle() {
    RngStream rng(2024, 6);
    double worst = 0.0;
    int compared = 0;
    for (int k = 0; k < 50; ++k) {
        const auto m = micro::random_micro(rng, k);
        const auto s = micro::to_spec(m);
        const double tol = m.pi == 0.0 ? kExactMatch : 0.01;
        MatchConfig mc;
        mc.tolerance_c = 0.01;
        for (double x : m.xs) {
            const auto lib = sv_bounds(s, Vec{x}, IvSetDef::identity(m.gamma.size()), mc);
            const auto ref = oracle::sv_bruteforce(m, x, tol);
            worst = std::max({worst, std::abs(lib.lower - ref.lower), std::abs(lib.upper - ref.upper)});
            ++compared;
        }
    }
    Detail d;
    d.add("50 micro-DGPs, %d evaluation points, max gap %.2e (tol 1e-9)", compared, worst);
    return {worst <= 1e-9, d.str()};
}

Outcome c7_monotonicity() {
    const Vec gammas = linspace_step(-4.0, 4.0, 0.2);
    const Vec rhos = linspace_step(-0.99, 0.99, 0.05);
    int prop1 = 0, prop3 = 0, lemma1 = 0, lemma2 = 0;
    long checks = 0;

    // Width along |gamma| for each rho, walking outward from gamma = 0 on both
    // sides; at gamma = 0 the instrument is irrelevant and the width is one.
    for (double rho : rhos)
        for (double beta : {0.05, 0.25, 0.45}) {
            Vec w(gammas.size());
            for (std::size_t i = 0; i < gammas.size(); ++i)
                w[i] = population_report(model2(gammas[i], rho, beta), kX0, IvSetDef::identity(1)).sv.width();
            const std::size_t mid = gammas.size() / 2;
            for (std::size_t i = mid + 1; i < gammas.size(); ++i, ++checks) prop1 += w[i] > w[i - 1] + 1e-9;
            for (std::size_t i = mid; i-- > 0; ++checks) prop1 += w[i] > w[i + 1] + 1e-9;
        }

    for (double alpha : {1.0, -1.0})
        for (double g : gammas) {
            if (std::abs(g) < 1e-9) continue;
            for (double x : {-1.0, 0.0, 1.0}) {
                double prev = -kInf;
                for (double rho : rhos) {
                    auto s = model2(g, rho, 0.25);
                    s.alpha = alpha;
                    const double w = widest_bounds(s, Vec{x}, IvSetDef::identity(1)).width();
                    const double signed_w = alpha > 0 ? w : -w;
                    prop3 += signed_w < prev - 1e-9;
                    prev = signed_w;
                    ++checks;
                }
            }
        }

    for (double rho : rhos)
        for (double alpha : {-1.0, 1.0})
            for (double x = -2.0; x <= 2.01; x += 0.5) {
                auto s = model3(rho);
                s.alpha = alpha;
                CellProbs prev = cell_probs(s, Vec{x}, Prob(0.01));
                for (double p = 0.02; p < 0.995; p += 0.01) {
                    const auto c = cell_probs(s, Vec{x}, Prob(p));
                    lemma1 += c.p11 < prev.p11 - 1e-9;
                    lemma1 += c.p01 < prev.p01 - 1e-9;
                    lemma1 += c.p10 > prev.p10 + 1e-9;
                    lemma1 += c.p00 > prev.p00 + 1e-9;
                    prev = c;
                    checks += 4;
                }
            }

    for (double x = -2.0; x <= 2.01; x += 0.5)
        for (double p = 0.05; p < 1.0; p += 0.05) {
            CellProbs prev = cell_probs(model3(rhos.front()), Vec{x}, Prob(p));
            for (std::size_t i = 1; i < rhos.size(); ++i) {
                const auto c = cell_probs(model3(rhos[i]), Vec{x}, Prob(p));
                lemma2 += c.p11 < prev.p11 - 1e-9;
                lemma2 += c.p00 < prev.p00 - 1e-9;
                lemma2 += c.p10 > prev.p10 + 1e-9;
                lemma2 += c.p01 > prev.p01 + 1e-9;
                prev = c;
                checks += 4;
            }
        }

    Detail d;
    d.add("violations: width in |gamma| %d, widest in rho %d, cells in p %d, cells in rho %d (%ld checks)", prop1,
          prop3, lemma1, lemma2, checks);
    return {prop1 + prop3 + lemma1 + lemma2 == 0, d.str()};
}

// --- Monte Carlo ------------------------------------------------------------------

McDesign desk_design(std::vector<IvSetDef> sets, std::vector<std::size_t> sizes) {
    McDesign d;
    d.spec = model3(0.5);
    d.iv_sets = std::move(sets);
    d.sample_sizes = std::move(sizes);
    d.replications = 200;
    d.seed = 20240;
    d.hmue.n_sim = 200;
    return d;
}

struct DeskRuns {
    McResult main;   // sets (1)-(5) at n = 500 and 5000
    McResult large;  // sets (4), (5) at n = 10000
    double seconds = 0.0;
};

const DeskRuns& desk_runs() {
    static const DeskRuns runs = [] {
        DeskRuns r;
        const auto t0 = std::chrono::steady_clock::now();
        const auto sets = model3_iv_sets();
        r.main = run_monte_carlo(desk_design(sets, {500, 5000}));
        r.large = run_monte_carlo(desk_design({sets[3], sets[4]}, {10000}));
        r.seconds = seconds_since(t0);
        return r;
    }();
    return runs;
}

Outcome c8_monte_carlo() {
    const auto& runs = desk_runs();
    const auto& mc = runs.main;
    const auto sets = model3_iv_sets();
    const double mean_iip = mc.cell(sets[3].name, 5000).iip;
    Detail d;
    d.add("set (4) mean IIP at n=5000 %.4f (target 0.648 +/- 0.03)", mean_iip);
    bool pass = std::abs(mean_iip - 0.648) <= 0.03;

    for (std::size_t k = 0; k < 4; ++k) {
        double err[2];
        for (int j = 0; j < 2; ++j) {
            const Vec v = mc.draws(k, j == 0 ? 500 : 5000, [](const McRecord& r) { return r.report.iip; });
            err[j] = 0.0;
            for (double x : v) err[j] += std::abs(x - mc.truth[k].iip);
            err[j] /= static_cast<double>(v.size());
        }
        d.add("%s mean |IIP - pop| %.4f -> %.4f", sets[k].name.c_str(), err[0], err[1]);
        pass = pass && err[1] <= err[0];
    }

    // Per replicate at n=5000, the order of sets (1)-(4) by IIP against the
    // population order.
    std::vector<std::size_t> pop_order{0, 1, 2, 3};
    std::sort(pop_order.begin(), pop_order.end(),
              [&](std::size_t a, std::size_t b) { return mc.truth[a].iip > mc.truth[b].iip; });
    int agree = 0, counted = 0;
    for (int rep = 0; rep < 200; ++rep) {
        Vec v(4);
        bool ok = true;
        for (const auto& r : mc.records)
            if (r.n == 5000 && r.replicate == rep && r.set < 4) {
                ok = ok && r.ok;
                v[r.set] = r.report.iip;
            }
        if (!ok) continue;
        ++counted;
        bool same = true;
        for (std::size_t i = 0; i + 1 < 4; ++i) same = same && v[pop_order[i]] > v[pop_order[i + 1]];
        agree += same;
    }
    const double share = counted ? static_cast<double>(agree) / counted : 0.0;
    d.add("ranking agrees in %d of %d replicates (%.1f%%, need 95%%)", agree, counted, 100.0 * share);
    d.add("Monte Carlo wall time %.0f s", runs.seconds);
    pass = pass && share >= 0.95;
    return {pass, d.str()};
}

Outcome c9_irrelevant_iv() {
    const auto& runs = desk_runs();
    const auto iip_of = [](const McRecord& r) { return r.report.iip; };
    const auto small = ks_test(runs.main.draws(3, 500, iip_of), runs.main.draws(4, 500, iip_of));
    const auto big = ks_test(runs.large.draws(0, 10000, iip_of), runs.large.draws(1, 10000, iip_of));
    const auto mean = [](const Vec& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); };
    Detail d;
    d.add("mean IIP (4)/(5): n=500 %.4f/%.4f, n=10000 %.4f/%.4f", mean(runs.main.draws(3, 500, iip_of)),
          mean(runs.main.draws(4, 500, iip_of)), mean(runs.large.draws(0, 10000, iip_of)),
          mean(runs.large.draws(1, 10000, iip_of)));
    d.add("n=500: D=%.3f p=%.4f (want reject)", small.statistic, small.pvalue)
        .add("n=10000: D=%.3f p=%.4f (want no reject)", big.statistic, big.pvalue);
    return {small.pvalue < 0.05 && big.pvalue >= 0.05, d.str()};
}

Outcome c10_one_sided() {
    const auto& mc = desk_runs().main;
    Detail d;
    bool pass = true;
    const std::size_t k = 3;
    const auto& truth = mc.truth[k];
    for (std::size_t n : {std::size_t{500}, std::size_t{5000}}) {
        // Manski sides are single plug-in terms, not intersection bounds, so
        // they are reported without entering the verdict.
        struct Side {
            const char* name;
            bool intersection;
            std::function<bool(const BoundsReport&)> outside;
        };
        const Side sides[] = {
            {"L_bar", true, [&](const BoundsReport& b) { return b.widest.lower <= truth.widest.lower; }},
            {"U_bar", true, [&](const BoundsReport& b) { return b.widest.upper >= truth.widest.upper; }},
            {"L_SV", true, [&](const BoundsReport& b) { return b.sv.lower <= truth.sv.lower; }},
            {"U_SV", true, [&](const BoundsReport& b) { return b.sv.upper >= truth.sv.upper; }},
            {"L_M", false, [&](const BoundsReport& b) { return b.manski.lower <= truth.manski.lower; }},
            {"U_M", false, [&](const BoundsReport& b) { return b.manski.upper >= truth.manski.upper; }},
        };
        for (const auto& side : sides) {
            int out = 0, tot = 0;
            for (const auto& r : mc.records)
                if (r.ok && r.set == k && r.n == n) {
                    ++tot;
                    out += side.outside(r.report);
                }
            const double share = tot ? static_cast<double>(out) / tot : 0.0;
            d.add("n=%zu %s %.1f%%%s", n, side.name, 100.0 * share, side.intersection ? "" : " (info)");
            if (side.intersection) pass = pass && share >= 0.45;
        }
    }
    return {pass, "set (4), outside-true share per side (need >= 45%): " + d.str()};
}

// --- empirical pipeline -------------------------------------------------------------

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome c11_empirical() {
    const auto root = fs::temp_directory_path() / "ivpower_acceptance_empirical";
    fs::remove_all(root);
    fs::create_directories(root);
    const auto csv = root / "sample.csv";
    const auto data = generate_sample(model3(0.5), 20000, 11, 0);
    write_dataset(csv.string(), data);

    const auto sets = model3_iv_sets();
    const json cfg = {{"hmue", {{"n_sim", 200}}},
                      {"seed", 5},
                      {"iv_sets", {ivset_to_json(sets[1]), ivset_to_json(sets[3])}}};
    std::ostringstream echo, err;
    std::string out[2];
    for (int run = 0; run < 2; ++run) {
        cli::Overrides ov;
        ov.data = csv.string();
        ov.out = (root / ("run" + std::to_string(run))).string();
        if (cli::run_guarded("empirical", cfg, ov, echo, err) != 0) return {false, "empirical run failed: " + err.str()};
        for (const char* f : {"empirical_summary.csv", "empirical_curves.csv", "empirical.json"})
            out[run] += slurp(fs::path(*ov.out) / f);
    }
    const bool identical = out[0] == out[1];

    // Each grid point X_P maps back to x through the fitted stage-1 index;
    // the population reference averages the population IIP there with the
    // same kernel weights.
    const auto js = json::parse(slurp(root / "run0" / "empirical.json"));
    const auto stage1 = fit_probit(data, Response::d, true, false);
    const double a = stage1.params(0), b = stage1.params(1);
    const auto grid = js.at("grid").get<Vec>();
    const auto weights = js.at("weights").get<Vec>();
    WeightedPoints xw;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        xw.points.push_back(Vec{(inv_normal_cdf(grid[g]) - a) / b});
        xw.weights.push_back(weights[g]);
    }
    Detail d;
    bool pass = identical;
    const IvSetDef* used[] = {&sets[1], &sets[3]};
    for (std::size_t k = 0; k < 2; ++k) {
        const double est = js.at("sets")[k].at("weighted").at("iip").get<double>();
        const double pop = iip_average(model3(0.5), *used[k], xw);
        d.add("%s weighted IIP %.4f vs population %.4f", used[k]->name.c_str(), est, pop);
        pass = pass && std::abs(est - pop) <= 0.03;
    }
    d.add("%s", identical ? "rerun byte-identical" : "rerun differs");
    if (pass) fs::remove_all(root);
    return {pass, d.str()};
}

struct Criterion {
    int id;
    const char* title;
    bool soft;
    std::function<Outcome()> run;
};

}  // namespace

int main() {
    const std::vector<Criterion> criteria = {
        {1, "population CPS ranges and IIP", false, c1_table1},
        {2, "true-DGP rows", false, c2_true_rows},
        {3, "true ATE", false, c3_true_ate},
        {4, "numerical-core identities", false, c4_numcore},
        {5, "bivariate-probit gradient", false, c5_gradient},
        {6, "SV bounds versus brute force", false, c6_oracle},
        {7, "monotonicity suites", false, c7_monotonicity},
        {8, "Monte Carlo convergence", false, c8_monte_carlo},
        {9, "irrelevant-IV detection (soft)", true, c9_irrelevant_iv},
        {10, "HMUE one-sidedness", false, c10_one_sided},
        {11, "empirical pipeline", false, c11_empirical},
    };
    int required_failures = 0;
    for (const auto& c : criteria) {
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::printf("%s %d %s: %s\n", o.pass ? "PASS" : "FAIL", c.id, c.title, o.detail.c_str());
        std::fflush(stdout);
        required_failures += !o.pass && !c.soft;
    }
    return required_failures == 0 ? 0 : 1;
}
