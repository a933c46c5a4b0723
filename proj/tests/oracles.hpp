#pragma once

// Reference implementations used only by the tests. They share no code with
// the library: the normal CDF is an erf power series / continued fraction in
// long double, the bivariate CDF is adaptive Simpson quadrature of the
// conditional form, and the SV bounds are enumerated straight from their
// two-layer sup/inf definition.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <vector>

namespace oracle {

using ld = long double;

inline ld pi_l() { return 3.141592653589793238462643383279502884L; }

// erf by its Maclaurin series (|x| <= 3) and erfc by Lentz's continued
// fraction beyond.
inline ld erf_series(ld x) {
    ld term = x, sum = x;
    for (int n = 1; n < 400; ++n) {
        term *= -x * x / n;
        const ld add = term / (2 * n + 1);
        sum += add;
        if (std::fabs(add) < 1e-22L * std::fabs(sum)) break;
    }
    return 2.0L / std::sqrt(pi_l()) * sum;
}

inline ld erfc_cf(ld x) {
    // erfc(x) = exp(-x^2)/sqrt(pi) * 1/(x + 1/2/(x + 1/(x + 3/2/(x + ...))))
    const ld tiny = 1e-300L;
    ld f = x, C = x, D = 0.0L;
    for (int k = 1; k < 500; ++k) {
        const ld a = k / 2.0L;
        D = x + a * D;
        if (std::fabs(D) < tiny) D = tiny;
        C = x + a / C;
        if (std::fabs(C) < tiny) C = tiny;
        D = 1.0L / D;
        const ld delta = C * D;
        f *= delta;
        if (std::fabs(delta - 1.0L) < 1e-21L) break;
    }
    return std::exp(-x * x) / std::sqrt(pi_l()) / f;
}

inline double Phi(double z) {
    const ld x = static_cast<ld>(z) / std::sqrt(2.0L);
    if (std::fabs(x) <= 3.0L) return static_cast<double>(0.5L * (1.0L + erf_series(x)));
    if (x > 0) return static_cast<double>(1.0L - 0.5L * erfc_cf(x));
    return static_cast<double>(0.5L * erfc_cf(-x));
}

inline double phi(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * 3.14159265358979323846); }

// Inverse by bisection on Phi.
inline double Phi_inv(double p) {
    double lo = -40.0, hi = 40.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (Phi(mid) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

inline double simpson_adapt(const std::function<double(double)>& f, double a, double b, double fa, double fm,
                            double fb, double whole, double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if (depth <= 0 || std::fabs(left + right - whole) <= 15.0 * tol)
        return left + right + (left + right - whole) / 15.0;
    return simpson_adapt(f, a, m, fa, flm, fm, left, tol / 2, depth - 1) +
           simpson_adapt(f, m, b, fm, frm, fb, right, tol / 2, depth - 1);
}

inline double integrate(const std::function<double(double)>& f, double a, double b, double tol = 1e-13) {
    if (!(b > a)) return 0.0;
    // Split into panels so the adaptive rule sees the peak.
    const int panels = 16;
    double total = 0.0;
    const double h = (b - a) / panels;
    for (int k = 0; k < panels; ++k) {
        const double lo = a + k * h, hi = lo + h;
        const double fa = f(lo), fb = f(hi), fm = f(0.5 * (lo + hi));
        total += simpson_adapt(f, lo, hi, fa, fm, fb, h / 6.0 * (fa + 4.0 * fm + fb), tol / panels, 40);
    }
    return total;
}

// Pr[X1 <= a, X2 <= b] = int_{-inf}^{a} phi(t) Phi((b - rho t)/sqrt(1-rho^2)) dt.
inline double bvn(double a, double b, double rho) {
    if (a == -INFINITY || b == -INFINITY) return 0.0;
    if (a == INFINITY) return Phi(b);
    if (b == INFINITY) return Phi(a);
    // Integrate over the coordinate with the smaller limit; the tolerance is
    // made relative with a first coarse pass so that tail values keep their
    // significant digits.
    if (b < a) std::swap(a, b);
    const double s = std::sqrt(1.0 - rho * rho);
    const double lo = std::min(-12.0, a - 12.0);
    const auto f = [&](double t) { return phi(t) * Phi((b - rho * t) / s); };
    double rough = 0.0;
    const int m = 4000;
    const double h = (a - lo) / m;
    for (int k = 0; k <= m; ++k) rough += (k == 0 || k == m ? 1.0 : (k % 2 ? 4.0 : 2.0)) * f(lo + k * h);
    rough *= h / 3.0;
    return integrate(f, lo, a, std::max(rough * 1e-12, 1e-300));
}

// ---------------------------------------------------------------------------
// Brute-force SV bounds for a fully discrete threshold model with one
// covariate: Y = 1[alpha D + beta x > e1], D = 1[pi x + gamma'z > e2],
// (e1, e2) standard bivariate normal with correlation rho.

struct Micro {
    double alpha, beta, pi, rho;
    std::vector<double> gamma;
    std::vector<double> xs;                // covariate support
    std::vector<std::vector<double>> zs;   // instrument support points
    std::vector<double> zmass;             // their probabilities
};

struct Cells {
    double p11, p10;
};

using CellCache = std::map<std::pair<double, double>, Cells>;

inline double cps(const Micro& m, double x, const std::vector<double>& z) {
    double v = m.pi * x;
    for (std::size_t j = 0; j < z.size(); ++j) v += m.gamma[j] * z[j];
    return Phi(v);
}

// Pr[Y=1, D=1 | x, p] and Pr[Y=1, D=0 | x, p].
inline Cells cells_uncached(const Micro& m, double x, double p) {
    const double t = Phi_inv(p);
    const double a1 = m.alpha + m.beta * x;
    const double a0 = m.beta * x;
    const double p11 = bvn(a1, t, m.rho);
    const double p00 = 1.0 - Phi(a0) - p + bvn(a0, t, m.rho);
    return {p11, 1.0 - p - p00};
}

// Memoized per thread; callers clear it when the model changes.
inline CellCache& cell_cache() {
    thread_local CellCache cache;
    return cache;
}

inline Cells cells(const Micro& m, double x, double p) {
    auto& c = cell_cache();
    const auto key = std::make_pair(x, p);
    if (auto it = c.find(key); it != c.end()) return it->second;
    return c[key] = cells_uncached(m, x, p);
}

struct Support {
    std::vector<double> p;
    std::vector<double> mass;
};

inline Support support_at(const Micro& m, double x) {
    std::map<double, double> acc;
    for (std::size_t k = 0; k < m.zs.size(); ++k) acc[cps(m, x, m.zs[k])] += m.zmass[k];
    Support s;
    for (const auto& [p, w] : acc) {
        if (!s.p.empty() && p - s.p.back() <= 1e-12) {
            s.mass.back() += w;
            continue;
        }
        s.p.push_back(p);
        s.mass.push_back(w);
    }
    return s;
}

inline bool attained(const Support& s, double p, double tol) {
    for (double q : s.p)
        if (std::fabs(q - p) <= tol) return true;
    return false;
}

// H(u, v) = E[h(u, v, P, P') | P > P'] with P, P' iid from the CPS law at the
// point whose support is `base`; pairs restricted to p, p' attained at v'.
// Returns false if undefined.
inline bool H(const Micro& m, double x_first, double x_second, const Support& base, const Support& other_support,
              double tol, double& out) {
    // h(x, x', p, p') = p11(x',p) - p11(x',p') - p10(x,p') + p10(x,p)
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < base.p.size(); ++i)
        for (std::size_t j = 0; j < base.p.size(); ++j) {
            if (!(base.p[i] > base.p[j])) continue;
            if (!attained(other_support, base.p[i], tol) || !attained(other_support, base.p[j], tol)) continue;
            const double w = base.mass[i] * base.mass[j];
            const double h = cells(m, x_second, base.p[i]).p11 - cells(m, x_second, base.p[j]).p11 -
                             cells(m, x_first, base.p[j]).p10 + cells(m, x_first, base.p[i]).p10;
            num += w * h;
            den += w;
        }
    if (den <= 0.0) return false;
    out = num / den;
    return true;
}

struct Bounds {
    double lower, upper;
};

// SV bounds at covariate point x by direct enumeration of both layers.
inline Bounds sv_bruteforce(const Micro& m, double x, double tol) {
    cell_cache().clear();
    const Support sx = support_at(m, x);
    // Sign from the CPS extremes.
    const auto lo = cells(m, x, sx.p.front());
    const auto hi = cells(m, x, sx.p.back());
    const double diff = (hi.p11 + hi.p10) - (lo.p11 + lo.p10);
    if (std::fabs(diff) <= 1e-12) return {0.0, 0.0};

    std::vector<double> x0p, x0m, x1p, x1m;
    for (double xp : m.xs) {
        const Support sxp = support_at(m, xp);
        std::size_t matched = 0;
        for (double p : sx.p) matched += attained(sxp, p, tol) ? 1 : 0;
        if (matched < 2) continue;
        double h0 = 0.0, h1 = 0.0;
        // H(x, x') and H(x', x) both average over the CPS law at x with p
        // values attained at x'.
        const bool ok0 = H(m, x, xp, sx, sxp, tol, h0);
        const bool ok1 = H(m, xp, x, sx, sxp, tol, h1);
        if (!ok0 || !ok1) continue;
        if (h0 >= -1e-12) x0p.push_back(xp);
        if (h0 <= 1e-12) x0m.push_back(xp);
        if (h1 >= -1e-12) x1p.push_back(xp);
        if (h1 <= 1e-12) x1m.push_back(xp);
    }

    double supA = -INFINITY, infB = INFINITY, infC = INFINITY, supD = -INFINITY;
    for (double p : sx.p) {
        const auto c = cells(m, x, p);
        double a = 0.0, b = 1.0, cc = 1.0, d = 0.0;  // sup over empty = 0, inf over empty = 1
        for (double xp : x1p)
            if (attained(support_at(m, xp), p, tol)) a = std::max(a, cells(m, xp, p).p10);
        for (double xp : x0p)
            if (attained(support_at(m, xp), p, tol)) b = std::min(b, cells(m, xp, p).p11 / p);
        for (double xp : x1m)
            if (attained(support_at(m, xp), p, tol)) cc = std::min(cc, cells(m, xp, p).p10 / (1.0 - p));
        for (double xp : x0m)
            if (attained(support_at(m, xp), p, tol)) d = std::max(d, cells(m, xp, p).p11);
        supA = std::max(supA, c.p11 + a);
        infB = std::min(infB, c.p10 + p * b);
        infC = std::min(infC, c.p11 + (1.0 - p) * cc);
        supD = std::max(supD, c.p10 + d);
    }
    return {supA - infB, infC - supD};
}

}  // namespace oracle
