#pragma once

// Maximum likelihood fits: univariate probit (Newton) and the bivariate
// probit of the joint threshold model (BFGS on analytic gradients, then a
// Newton polish on a finite-difference Hessian of those gradients).

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "data.hpp"
#include "errors.hpp"
#include "numcore.hpp"

namespace ivpower {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct FitResult {
    VectorXd params;
    std::vector<std::string> names;
    double loglik = -kInf;
    MatrixXd vcov;
    bool converged = false;
    int iterations = 0;
    // Log-likelihood after each accepted step, starting value first.
    std::vector<double> loglik_trace;

    VectorXd std_errors() const { return vcov.diagonal().cwiseMax(0.0).cwiseSqrt(); }
};

namespace detail {

// log Phi(u) and phi(u)/Phi(u), accurate far into the lower tail.
inline double log_cdf(double u) {
    if (u > -30.0) return std::log(normal_cdf(u));
    return -0.5 * u * u - std::log(-u) - 0.5 * std::log(2.0 * std::numbers::pi);
}
inline double mills(double u) {
    if (u > -30.0) return std_normal_pdf(u) / normal_cdf(u);
    return -u;
}

inline MatrixXd inverse_spd(const MatrixXd& info, const char* what) {
    const MatrixXd sym = 0.5 * (info + info.transpose());
    Eigen::LLT<MatrixXd> llt(sym);
    if (llt.info() != Eigen::Success)
        throw NumericalError(std::string(what) + ": information matrix not positive definite");
    MatrixXd inv = llt.solve(MatrixXd::Identity(sym.rows(), sym.cols()));
    return 0.5 * (inv + inv.transpose());
}

inline void check_not_constant(const std::vector<int>& r, const char* name) {
    bool any0 = false, any1 = false;
    for (int v : r) (v ? any1 : any0) = true;
    if (!(any0 && any1)) throw SeparationError(std::string(name) + " is constant");
}

}  // namespace detail

inline constexpr double kSeparationNorm = 1e3;

// Probit of a binary response on the given design matrix (include a column of
// ones for an intercept). Newton iterations with step halving until the
// sup-norm of the per-observation mean gradient drops below 1e-8, or the
// Newton decrement falls to the rounding level of the log-likelihood.
inline FitResult fit_probit(const std::vector<int>& response, const MatrixXd& design,
                            std::vector<std::string> names = {}, int max_iter = 200) {
    const auto n = design.rows();
    const auto k = design.cols();
    if (static_cast<Eigen::Index>(response.size()) != n) throw DataError("probit: response length mismatch");
    detail::check_not_constant(response, "probit response");
    {
        Eigen::ColPivHouseholderQR<MatrixXd> qr(design);
        if (qr.rank() < k) throw DataError("probit: design matrix is rank deficient");
    }

    auto evaluate = [&](const VectorXd& b, VectorXd* g, MatrixXd* H) {
        const VectorXd xb = design * b;
        double ll = 0.0;
        if (g) g->setZero(k);
        if (H) H->setZero(k, k);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double q = response[static_cast<std::size_t>(i)] ? 1.0 : -1.0;
            const double u = q * xb(i);
            ll += detail::log_cdf(u);
            const double lam = detail::mills(u);
            if (g) *g += (q * lam) * design.row(i).transpose();
            if (H) H->noalias() -= (lam * (lam + u)) * design.row(i).transpose() * design.row(i);
        }
        return ll;
    };

    FitResult fit;
    fit.names = std::move(names);
    VectorXd b = VectorXd::Zero(k);
    VectorXd g(k);
    MatrixXd H(k, k);
    double ll = evaluate(b, &g, &H);
    fit.loglik_trace.push_back(ll);
    for (int it = 0; it < max_iter; ++it) {
        if (g.lpNorm<Eigen::Infinity>() < 1e-8 * static_cast<double>(n)) {
            fit.converged = true;
            break;
        }
        const VectorXd step = (-H).ldlt().solve(g);
        // Half the Newton decrement bounds the remaining log-likelihood gain.
        if (0.5 * g.dot(step) < 1e-12 * std::max(1.0, std::abs(ll))) {
            fit.converged = true;
            break;
        }
        double t = 1.0;
        VectorXd nb = b + step;
        double nll = evaluate(nb, nullptr, nullptr);
        while (!(nll >= ll) && t > 1e-10) {
            t *= 0.5;
            nb = b + t * step;
            nll = evaluate(nb, nullptr, nullptr);
        }
        if (nb.norm() > kSeparationNorm) throw SeparationError("probit coefficients diverge");
        if (!(nll >= ll)) break;
        b = nb;
        ll = evaluate(b, &g, &H);
        fit.loglik_trace.push_back(ll);
        fit.iterations = it + 1;
    }
    if (!fit.converged && g.lpNorm<Eigen::Infinity>() < 1e-6 * static_cast<double>(n)) fit.converged = true;
    if (!fit.converged) throw ConvergenceError("probit did not converge");
    // An index that classifies every observation is a separating hyperplane:
    // the likelihood has no finite maximizer.
    {
        const VectorXd xb = design * b;
        bool all_correct = true;
        for (Eigen::Index i = 0; i < n && all_correct; ++i)
            all_correct = (response[static_cast<std::size_t>(i)] ? xb(i) : -xb(i)) > 0.0;
        if (all_correct) throw SeparationError("probit: response is perfectly separated by the covariates");
    }
    fit.params = b;
    fit.loglik = ll;
    fit.vcov = detail::inverse_spd(-H, "probit");
    return fit;
}

enum class Response { y, d };

// Probit of y or d on [1, X] and optionally the instruments.
inline FitResult fit_probit(const Dataset& data, Response response, bool intercept = true,
                            bool with_instruments = false) {
    const auto n = static_cast<Eigen::Index>(data.n());
    const Eigen::Index k = (intercept ? 1 : 0) + data.X.cols() + (with_instruments ? data.Z.cols() : 0);
    MatrixXd R(n, k);
    std::vector<std::string> names;
    Eigen::Index c = 0;
    if (intercept) {
        R.col(c++).setOnes();
        names.push_back("const");
    }
    R.middleCols(c, data.X.cols()) = data.X;
    c += data.X.cols();
    for (const auto& nm : data.x_names) names.push_back(nm);
    if (with_instruments) {
        R.middleCols(c, data.Z.cols()) = data.Z;
        for (const auto& nm : data.z_names) names.push_back(nm);
    }
    return fit_probit(response == Response::y ? data.y : data.d, R, names);
}

// --- bivariate probit --------------------------------------------------------------

// Design of the threshold model: nu1 = alpha d + X beta, nu2 = X pi + W gamma,
// rho = tanh(eta). Parameter layout: [alpha, beta (kx), pi (kx), gamma (m), eta].
struct BiprobitData {
    std::vector<int> y, d;
    MatrixXd X;  // includes the intercept column when one is used
    MatrixXd W;  // used instruments

    Eigen::Index kx() const { return X.cols(); }
    Eigen::Index m() const { return W.cols(); }
    Eigen::Index n_params() const { return 2 + 2 * kx() + m(); }
    Eigen::Index n() const { return X.rows(); }

    double alpha(const VectorXd& t) const { return t(0); }
    auto beta(const VectorXd& t) const { return t.segment(1, kx()); }
    auto pi(const VectorXd& t) const { return t.segment(1 + kx(), kx()); }
    auto gamma(const VectorXd& t) const { return t.segment(1 + 2 * kx(), m()); }
    double eta(const VectorXd& t) const { return t(n_params() - 1); }
};

inline BiprobitData biprobit_data(const Dataset& data, const MatrixXd& W, bool intercept = true) {
    BiprobitData b;
    b.y = data.y;
    b.d = data.d;
    const auto n = static_cast<Eigen::Index>(data.n());
    b.X.resize(n, (intercept ? 1 : 0) + data.X.cols());
    if (intercept) b.X.col(0).setOnes();
    b.X.rightCols(data.X.cols()) = data.X;
    b.W = W;
    return b;
}

// Sum of log Pr[Y=y_i, D=d_i | x_i, w_i; theta]. With grad non-null, also the
// analytic gradient.
inline double biprobit_loglik(const BiprobitData& b, const VectorXd& theta, VectorXd* grad = nullptr) {
    const Eigen::Index kx = b.kx();
    const Eigen::Index m = b.m();
    // The clamp keeps the likelihood finite when a line search overshoots eta.
    const double rho = std::clamp(std::tanh(b.eta(theta)), -kCorrClamp, kCorrClamp);
    const double sr = std::sqrt((1.0 - rho) * (1.0 + rho));
    const VectorXd xb = b.X * b.beta(theta);
    const VectorXd v2 = b.X * b.pi(theta) + b.W * b.gamma(theta);
    const double alpha = b.alpha(theta);

    double ll = 0.0;
    VectorXd g1, g2;
    double ga = 0.0, gr = 0.0;
    if (grad) {
        g1 = VectorXd::Zero(b.n());
        g2 = VectorXd::Zero(b.n());
    }
    for (Eigen::Index i = 0; i < b.n(); ++i) {
        const int yi = b.y[static_cast<std::size_t>(i)];
        const int di = b.d[static_cast<std::size_t>(i)];
        const double q1 = yi ? 1.0 : -1.0;
        const double q2 = di ? 1.0 : -1.0;
        const double v1 = alpha * di + xb(i);
        const double a = q1 * v1;
        const double c = q2 * v2(i);
        const double r = q1 * q2 * rho;
        double L = bvn_cdf(a, c, r);
        // Below the floor the contribution is constant, so its gradient is zero.
        const bool floored = !(L > 1e-300);
        if (floored) L = 1e-300;
        ll += std::log(L);
        if (grad && !floored) {
            const double da = std_normal_pdf(a) * normal_cdf((c - r * a) / sr);
            const double dc = std_normal_pdf(c) * normal_cdf((a - r * c) / sr);
            const double dr = bvn_pdf(a, c, r);
            g1(i) = q1 * da / L;
            g2(i) = q2 * dc / L;
            ga += g1(i) * di;
            gr += q1 * q2 * dr / L;
        }
    }
    if (grad) {
        grad->resize(b.n_params());
        (*grad)(0) = ga;
        grad->segment(1, kx) = b.X.transpose() * g1;
        grad->segment(1 + kx, kx) = b.X.transpose() * g2;
        grad->segment(1 + 2 * kx, m) = b.W.transpose() * g2;
        (*grad)(b.n_params() - 1) = gr * (1.0 - rho * rho);
    }
    return ll;
}

// Hessian by central differences of the analytic gradient.
inline MatrixXd biprobit_hessian(const BiprobitData& b, const VectorXd& theta, double h = 1e-5) {
    const auto p = theta.size();
    MatrixXd H(p, p);
    VectorXd gp, gm;
    for (Eigen::Index j = 0; j < p; ++j) {
        VectorXd tp = theta, tm = theta;
        tp(j) += h;
        tm(j) -= h;
        biprobit_loglik(b, tp, &gp);
        biprobit_loglik(b, tm, &gm);
        H.col(j) = (gp - gm) / (2.0 * h);
    }
    return 0.5 * (H + H.transpose());
}

struct BiprobitOptions {
    int max_iter = 500;
    // Convergence when the sup-norm of the per-observation mean gradient is below this.
    double gtol = 1e-8;
};

inline std::vector<std::string> biprobit_names(const BiprobitData& b) {
    std::vector<std::string> names{"alpha"};
    for (Eigen::Index j = 0; j < b.kx(); ++j) names.push_back("beta" + std::to_string(j));
    for (Eigen::Index j = 0; j < b.kx(); ++j) names.push_back("pi" + std::to_string(j));
    for (Eigen::Index j = 0; j < b.m(); ++j) names.push_back("gamma" + std::to_string(j));
    names.push_back("eta");
    return names;
}

inline FitResult fit_bivariate_probit(const BiprobitData& b, const BiprobitOptions& opt = {}) {
    if (b.m() < 1) throw DataError("bivariate probit needs at least one instrument column");
    detail::check_not_constant(b.y, "outcome");
    detail::check_not_constant(b.d, "treatment");
    const Eigen::Index kx = b.kx();
    const Eigen::Index p = b.n_params();
    const double n = static_cast<double>(b.n());

    // Starting values: separate probits, eta = 0.
    VectorXd theta = VectorXd::Zero(p);
    {
        MatrixXd R1(b.n(), 1 + kx);
        for (Eigen::Index i = 0; i < b.n(); ++i) R1(i, 0) = b.d[static_cast<std::size_t>(i)];
        R1.rightCols(kx) = b.X;
        MatrixXd R2(b.n(), kx + b.m());
        R2 << b.X, b.W;
        const auto f1 = fit_probit(b.y, R1);
        const auto f2 = fit_probit(b.d, R2);
        theta.segment(0, 1 + kx) = f1.params;
        theta.segment(1 + kx, kx + b.m()) = f2.params;
    }

    FitResult fit;
    fit.names = biprobit_names(b);
    // Minimize f = -loglik / n.
    VectorXd g;
    double ll = biprobit_loglik(b, theta, &g);
    VectorXd gf = -g / n;
    fit.loglik_trace.push_back(ll);
    MatrixXd Hinv = MatrixXd::Identity(p, p);
    bool scaled = false;
    int it = 0;
    // Quasi-Newton to a loose tolerance, then Newton steps finish the job.
    const double bfgs_tol = std::max(opt.gtol, 1e-6);
    for (; it < opt.max_iter; ++it) {
        if (gf.lpNorm<Eigen::Infinity>() < bfgs_tol) break;
        VectorXd dir = -Hinv * gf;
        double slope = gf.dot(dir);
        if (slope >= 0.0) {
            Hinv.setIdentity();
            dir = -gf;
            slope = gf.dot(dir);
        }
        double t = 1.0;
        VectorXd nt;
        VectorXd ng;
        double nll = -kInf;
        for (int ls = 0; ls < 60; ++ls) {
            nt = theta + t * dir;
            nll = biprobit_loglik(b, nt, &ng);
            if (std::isfinite(nll) && -nll / n <= -ll / n + 1e-4 * t * slope) break;
            t *= 0.5;
        }
        if (!(std::isfinite(nll) && nll >= ll)) break;
        if (nt.norm() > kSeparationNorm) throw SeparationError("bivariate probit coefficients diverge");
        const VectorXd ngf = -ng / n;
        const VectorXd s = nt - theta;
        const VectorXd yv = ngf - gf;
        const double sy = s.dot(yv);
        if (sy > 1e-16) {
            if (!scaled) {
                Hinv *= sy / yv.squaredNorm();
                scaled = true;
            }
            const double rhoi = 1.0 / sy;
            const MatrixXd I = MatrixXd::Identity(p, p);
            Hinv = (I - rhoi * s * yv.transpose()) * Hinv * (I - rhoi * yv * s.transpose()) +
                   rhoi * s * s.transpose();
        }
        theta = nt;
        gf = ngf;
        ll = nll;
        fit.loglik_trace.push_back(ll);
    }
    fit.iterations = it;

    // Newton polish on the finite-difference Hessian; also yields the vcov.
    MatrixXd H = biprobit_hessian(b, theta);
    fit.converged = gf.lpNorm<Eigen::Infinity>() < opt.gtol;
    for (int k = 0; k < 10 && !fit.converged; ++k) {
        Eigen::LDLT<MatrixXd> ldlt(-H);
        if (ldlt.info() != Eigen::Success) break;
        const VectorXd step = ldlt.solve(-gf * n);
        const VectorXd nt = theta + step;
        VectorXd ng;
        const double nll = biprobit_loglik(b, nt, &ng);
        if (!(nll >= ll)) break;
        theta = nt;
        ll = nll;
        gf = -ng / n;
        fit.loglik_trace.push_back(ll);
        H = biprobit_hessian(b, theta);
        if (gf.lpNorm<Eigen::Infinity>() < opt.gtol) fit.converged = true;
    }
    // Rounding in the likelihood can stall the last Newton steps.
    if (!fit.converged && gf.lpNorm<Eigen::Infinity>() < 1e-6) fit.converged = true;
    if (!fit.converged)
        throw ConvergenceError("bivariate probit: gradient norm " +
                               std::to_string(gf.lpNorm<Eigen::Infinity>()) + " after " +
                               std::to_string(it) + " iterations");
    if (theta.norm() > kSeparationNorm) throw SeparationError("bivariate probit coefficients diverge");
    fit.params = theta;
    fit.loglik = ll;
    fit.vcov = detail::inverse_spd(-H, "bivariate probit");
    return fit;
}

// Instruments are all raw z columns, with an intercept in both equations.
inline FitResult fit_bivariate_probit(const Dataset& data, const BiprobitOptions& opt = {}) {
    return fit_bivariate_probit(biprobit_data(data, data.Z, true), opt);
}

}  // namespace ivpower
