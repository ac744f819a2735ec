#include "bdgd/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "bdgd/metrics.hpp"

namespace bdgd::baseline {

namespace {

// Forward differences with Neumann boundary; out holds (dx, dy) stacked.
void grad_forward(const std::vector<double>& x, int n, std::vector<double>& out) {
    const std::size_t hw = static_cast<std::size_t>(n) * n;
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            const std::size_t i = static_cast<std::size_t>(r) * n + c;
            out[i] = c + 1 < n ? x[i + 1] - x[i] : 0.0;
            out[hw + i] = r + 1 < n ? x[i + n] - x[i] : 0.0;
        }
}

// Adjoint of grad_forward (negative divergence), accumulated into out.
void grad_adjoint(const std::vector<double>& q, int n, std::vector<double>& out) {
    const std::size_t hw = static_cast<std::size_t>(n) * n;
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            const std::size_t i = static_cast<std::size_t>(r) * n + c;
            double v = 0.0;
            if (c + 1 < n) v -= q[i];
            if (c > 0) v += q[i - 1];
            if (r + 1 < n) v -= q[hw + i];
            if (r > 0) v += q[hw + i - n];
            out[i] += v;
        }
}

// Largest singular value of K = [A; grad] via power iteration on K^T K.
double operator_norm(const Geometry& geom, int iters) {
    const int n = geom.image_size;
    const std::size_t hw = static_cast<std::size_t>(n) * n;
    std::mt19937_64 rng(12345);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Image z(n);
    for (double& v : z.v) v = u(rng);
    double lambda_max = 1.0;
    std::vector<double> g(2 * hw);
    for (int it = 0; it < iters; ++it) {
        Image next = radon_adjoint(radon_forward(z, geom), geom);
        grad_forward(z.v, n, g);
        grad_adjoint(g, n, next.v);
        double norm = 0.0;
        for (double v : next.v) norm += v * v;
        norm = std::sqrt(norm);
        if (norm == 0.0) break;
        lambda_max = norm;
        for (std::size_t i = 0; i < hw; ++i) z.v[i] = next.v[i] / norm;
    }
    return std::sqrt(lambda_max);
}

}  // namespace

double tv_objective(const Image& x, const Sinogram& y, const Geometry& geom,
                    double lambda) {
    const Sinogram ax = radon_forward(x, geom);
    double fid = 0.0;
    for (std::size_t i = 0; i < ax.v.size(); ++i) {
        const double r = ax.v[i] - y.v[i];
        fid += r * r;
    }
    std::vector<double> g(2 * x.size());
    grad_forward(x.v, x.n, g);
    double tv = 0.0;
    for (double v : g) tv += std::abs(v);
    return 0.5 * fid + lambda * tv;
}

Image tv_reconstruct(const Sinogram& y, const Geometry& geom,
                     const TVConfig& cfg,
                     std::vector<double>* objective_trace) {
    if (cfg.lambda <= 0.0) throw std::invalid_argument("lambda must be > 0");
    if (cfg.max_iters <= 0) throw std::invalid_argument("need max_iters > 0");
    if ((cfg.tau > 0.0) != (cfg.sigma_cp > 0.0))
        throw std::invalid_argument("set both step sizes or neither");
    geom.validate();
    const int n = geom.image_size;
    const std::size_t hw = static_cast<std::size_t>(n) * n;
    const std::size_t ns = y.v.size();

    const double L = operator_norm(geom, cfg.power_iters);
    double tau = 0.99 / L, sigma = 0.99 / L;
    if (cfg.tau > 0.0) {
        if (cfg.tau * cfg.sigma_cp * L * L > 1.0 + 1e-9)
            throw std::invalid_argument(
                "step sizes violate tau * sigma * ||K||^2 <= 1");
        tau = cfg.tau;
        sigma = cfg.sigma_cp;
    }

    Image x = fbp(y, geom);  // warm start (already nonnegative)
    Image xbar = x;
    std::vector<double> p(ns, 0.0), q(2 * hw, 0.0), g(2 * hw);
    if (objective_trace) objective_trace->clear();

    for (int it = 0; it < cfg.max_iters; ++it) {
        // Dual ascent. p handles the data term, q the TV term.
        const Sinogram ax = radon_forward(xbar, geom);
        for (std::size_t i = 0; i < ns; ++i)
            p[i] = (p[i] + sigma * (ax.v[i] - y.v[i])) / (1.0 + sigma);
        grad_forward(xbar.v, n, g);
        for (std::size_t i = 0; i < 2 * hw; ++i)
            q[i] = std::clamp(q[i] + sigma * g[i], -cfg.lambda, cfg.lambda);

        // Primal descent with projection onto x >= 0, then extrapolation.
        Sinogram ps(geom);
        ps.v = p;
        Image kt = radon_adjoint(ps, geom);
        grad_adjoint(q, n, kt.v);
        double delta = 0.0, norm = 0.0;
        for (std::size_t i = 0; i < hw; ++i) {
            const double xn = std::max(0.0, x.v[i] - tau * kt.v[i]);
            const double d = xn - x.v[i];
            delta += d * d;
            norm += xn * xn;
            xbar.v[i] = 2.0 * xn - x.v[i];
            x.v[i] = xn;
        }
        if (objective_trace)
            objective_trace->push_back(tv_objective(x, y, geom, cfg.lambda));
        if (std::sqrt(delta) <= cfg.tol * std::max(1.0, std::sqrt(norm))) break;
    }
    return x;
}

LambdaSearch grid_search_lambda(const std::vector<Sinogram>& ys,
                                const std::vector<Image>& truths,
                                const Geometry& geom,
                                const std::vector<double>& lambdas,
                                const TVConfig& base) {
    if (ys.empty() || ys.size() != truths.size())
        throw std::invalid_argument("validation set must be non-empty and paired");
    if (lambdas.empty()) throw std::invalid_argument("need candidate lambdas");
    LambdaSearch result;
    for (double lambda : lambdas) {
        TVConfig cfg = base;
        cfg.lambda = lambda;
        double mean_psnr = 0.0;
        for (std::size_t i = 0; i < ys.size(); ++i) {
            const Image rec = tv_reconstruct(ys[i], geom, cfg);
            mean_psnr += psnr(rec, truths[i]);
        }
        mean_psnr /= static_cast<double>(ys.size());
        result.tried.emplace_back(lambda, mean_psnr);
        if (result.tried.size() == 1 || mean_psnr >= result.best_psnr) {
            result.best_psnr = mean_psnr;
            result.best_lambda = lambda;
        }
    }
    return result;
}

}  // namespace bdgd::baseline
