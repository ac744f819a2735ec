#pragma once

#include <utility>
#include <vector>

#include "bdgd/tomo.hpp"

namespace bdgd::baseline {

// Total-variation regularized reconstruction
//   min_{x >= 0}  1/2 ||A x - y||^2 + lambda ||grad x||_1   (anisotropic)
// solved with the Chambolle-Pock primal-dual scheme; step sizes are
// 0.99 / ||K|| with the operator norm estimated by power iteration.
struct TVConfig {
    double lambda = 0.01;
    double tau = 0.0;       // primal step; 0 selects 0.99 / ||K||
    double sigma_cp = 0.0;  // dual step; 0 selects 0.99 / ||K||
    int max_iters = 500;
    double tol = 1e-6;      // relative iterate change stopping criterion
    int power_iters = 50;
};

// Starts from the (nonnegative) FBP image. If objective_trace is non-null it
// receives the objective value after every iteration. Explicit step sizes
// must satisfy tau * sigma_cp * ||K||^2 <= 1 or the call is rejected.
Image tv_reconstruct(const Sinogram& y, const Geometry& geom,
                     const TVConfig& cfg,
                     std::vector<double>* objective_trace = nullptr);

// Objective value of the problem above at x.
double tv_objective(const Image& x, const Sinogram& y, const Geometry& geom,
                    double lambda);

// Picks the regularization weight maximizing mean PSNR against the ground
// truths over a small validation set; ties go to the larger lambda.
struct LambdaSearch {
    double best_lambda = 0.0;
    double best_psnr = 0.0;
    std::vector<std::pair<double, double>> tried;  // (lambda, mean psnr)
};
LambdaSearch grid_search_lambda(const std::vector<Sinogram>& ys,
                                const std::vector<Image>& truths,
                                const Geometry& geom,
                                const std::vector<double>& lambdas,
                                const TVConfig& base);

}  // namespace bdgd::baseline
