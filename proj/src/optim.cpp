#include "fzrisk/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "fzrisk/errors.hpp"

namespace fzrisk {

namespace {

double checked_eval(const Objective& f, const Eigen::VectorXd& x, int& evals) {
    ++evals;
    double v = f(x);
    if (std::isnan(v)) v = std::numeric_limits<double>::infinity();
    return v;
}

} // namespace

// ====== Nelder-Mead simplex ======

OptimResult nelder_mead(const Objective& f, const Eigen::VectorXd& x0,
                        const OptimOptions& opts) {
    const int n = static_cast<int>(x0.size());
    if (n == 0) throw ValidationError("nelder_mead: empty start point");
    const int max_iter = opts.max_iter > 0 ? opts.max_iter : 200 * n;

    int evals = 0;
    std::vector<Eigen::VectorXd> simplex(static_cast<size_t>(n) + 1, x0);
    std::vector<double> fv(static_cast<size_t>(n) + 1);
    for (int i = 0; i < n; ++i) {
        double step = 0.05 * std::abs(x0[i]);
        if (step == 0.0) step = 0.00025;
        simplex[static_cast<size_t>(i) + 1][i] += step;
    }
    for (size_t i = 0; i < simplex.size(); ++i) fv[i] = checked_eval(f, simplex[i], evals);

    std::vector<size_t> order(simplex.size());
    auto sort_simplex = [&]() {
        std::iota(order.begin(), order.end(), size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](size_t a, size_t b) { return fv[a] < fv[b]; });
        std::vector<Eigen::VectorXd> s2(simplex.size());
        std::vector<double> f2(fv.size());
        for (size_t i = 0; i < order.size(); ++i) {
            s2[i] = simplex[order[i]];
            f2[i] = fv[order[i]];
        }
        simplex.swap(s2);
        fv.swap(f2);
    };
    sort_simplex();

    OptimResult res;
    for (res.iterations = 0; res.iterations < max_iter; ++res.iterations) {
        double fspread = fv.back() - fv.front();
        double xspread = 0.0;
        for (size_t i = 1; i < simplex.size(); ++i)
            xspread = std::max(xspread, (simplex[i] - simplex[0]).lpNorm<Eigen::Infinity>());
        if (fspread <= opts.tol_f && xspread <= opts.tol_x) {
            res.converged = true;
            break;
        }

        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
        for (int i = 0; i < n; ++i) centroid += simplex[static_cast<size_t>(i)];
        centroid /= static_cast<double>(n);
        const Eigen::VectorXd& worst = simplex.back();

        Eigen::VectorXd xr = centroid + (centroid - worst);
        double fr = checked_eval(f, xr, evals);
        if (fr < fv[0]) {
            Eigen::VectorXd xe = centroid + 2.0 * (centroid - worst);
            double fe = checked_eval(f, xe, evals);
            if (fe < fr) {
                simplex.back() = xe;
                fv.back() = fe;
            } else {
                simplex.back() = xr;
                fv.back() = fr;
            }
        } else if (fr < fv[fv.size() - 2]) {
            simplex.back() = xr;
            fv.back() = fr;
        } else {
            bool outside = fr < fv.back();
            Eigen::VectorXd xc;
            if (outside)
                xc = centroid + 0.5 * (xr - centroid);
            else
                xc = centroid - 0.5 * (centroid - worst);
            double fc = checked_eval(f, xc, evals);
            if (fc < std::min(fr, fv.back())) {
                simplex.back() = xc;
                fv.back() = fc;
            } else {
                for (size_t i = 1; i < simplex.size(); ++i) {
                    simplex[i] = simplex[0] + 0.5 * (simplex[i] - simplex[0]);
                    fv[i] = checked_eval(f, simplex[i], evals);
                }
            }
        }
        sort_simplex();
    }

    res.x = simplex[0];
    res.f = fv[0];
    res.evaluations = evals;
    return res;
}

// ====== BFGS with numeric gradients ======

namespace {

Eigen::VectorXd central_gradient(const Objective& f, const Eigen::VectorXd& x,
                                 int& evals) {
    const int n = static_cast<int>(x.size());
    Eigen::VectorXd g(n);
    for (int i = 0; i < n; ++i) {
        double h = 1e-6 * std::max(1.0, std::abs(x[i]));
        Eigen::VectorXd xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        g[i] = (checked_eval(f, xp, evals) - checked_eval(f, xm, evals)) / (2.0 * h);
    }
    return g;
}

} // namespace

OptimResult bfgs_numeric(const Objective& f, const Eigen::VectorXd& x0,
                         const OptimOptions& opts) {
    const int n = static_cast<int>(x0.size());
    if (n == 0) throw ValidationError("bfgs_numeric: empty start point");
    const int max_iter = opts.max_iter > 0 ? opts.max_iter : 200 * n;

    OptimResult res;
    int evals = 0;
    Eigen::VectorXd x = x0;
    double fx = checked_eval(f, x, evals);
    Eigen::MatrixXd h_inv = Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd g = central_gradient(f, x, evals);

    for (res.iterations = 0; res.iterations < max_iter; ++res.iterations) {
        if (g.lpNorm<Eigen::Infinity>() <= 1e-7) {
            res.converged = true;
            break;
        }
        Eigen::VectorXd dir = -(h_inv * g);
        double slope = g.dot(dir);
        if (!(slope < 0.0)) { // reset on a non-descent direction
            h_inv.setIdentity();
            dir = -g;
            slope = g.dot(dir);
            if (!(slope < 0.0)) break;
        }

        double step = 1.0;
        double fnew = std::numeric_limits<double>::infinity();
        Eigen::VectorXd xnew;
        bool accepted = false;
        for (int ls = 0; ls < 40; ++ls) {
            xnew = x + step * dir;
            fnew = checked_eval(f, xnew, evals);
            if (fnew <= fx + 1e-4 * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;

        Eigen::VectorXd gnew = central_gradient(f, xnew, evals);
        Eigen::VectorXd s = xnew - x;
        Eigen::VectorXd yv = gnew - g;
        double sy = s.dot(yv);
        if (sy > 1e-12 * s.norm() * yv.norm()) {
            double rho = 1.0 / sy;
            Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
            h_inv = (eye - rho * s * yv.transpose()) * h_inv *
                        (eye - rho * yv * s.transpose()) +
                    rho * s * s.transpose();
        }
        double fdrop = fx - fnew;
        x = xnew;
        fx = fnew;
        g = gnew;
        if (fdrop >= 0.0 && fdrop <= opts.tol_f &&
            (step * dir).lpNorm<Eigen::Infinity>() <= opts.tol_x) {
            res.converged = true;
            break;
        }
    }

    res.x = x;
    res.f = fx;
    res.evaluations = evals;
    return res;
}

} // namespace fzrisk
