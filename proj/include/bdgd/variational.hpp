#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "bdgd/tensor.hpp"

namespace bdgd::vi {

// Numerically stable softplus and its inverse (softplus_inv(softplus(x)) == x).
double softplus(double x);
double softplus_inv(double y);

// On-tape handles produced by a reparameterized weight draw:
// theta = mu + softplus(rho) * eps with eps ~ N(0, I) held fixed.
struct SampledWeights {
    ad::Var theta;
    ad::Var mu;
    ad::Var rho;
};

// Diagonal-Gaussian posterior q(theta) = N(mu, diag(softplus(rho)^2)) over a
// flat parameter block, with an independent diagonal-Gaussian prior
// p(theta) = N(prior_mu, diag(prior_sigma^2)). The prior defaults to N(0, I)
// and can be replaced by the current posterior via freeze_posterior_as_prior,
// which is how later training stages inherit earlier ones.
class MeanFieldGaussianLayer {
public:
    // Initializes mu ~ N(0, 2/fan_in) and a small constant posterior scale
    // (softplus(rho) = 0.01). fan_in must be positive.
    MeanFieldGaussianLayer(ad::Shape shape, std::size_t fan_in,
                           std::uint64_t seed);

    const ad::Shape& shape() const { return shape_; }
    std::size_t size() const { return mu_.size(); }

    std::vector<double>& mu() { return mu_; }
    std::vector<double>& rho() { return rho_; }
    const std::vector<double>& mu() const { return mu_; }
    const std::vector<double>& rho() const { return rho_; }
    const std::vector<double>& prior_mu() const { return prior_mu_; }
    const std::vector<double>& prior_sigma() const { return prior_sigma_; }
    void set_prior(std::vector<double> prior_mu, std::vector<double> prior_sigma);

    // Posterior standard deviations softplus(rho), elementwise.
    std::vector<double> sigma() const;

    // Off-tape draw theta = mu + sigma * eps (one normal per parameter, drawn
    // in index order from rng).
    std::vector<double> sample(std::mt19937_64& rng) const;

    // Reparameterized draw as tape nodes: mu and rho enter as leaves (so their
    // gradients can be read back after backward), eps as a constant.
    SampledWeights sample_on_tape(ad::Tape& tape, std::mt19937_64& rng) const;

    // KL(q || p) built from the given mu/rho nodes (typically the ones returned
    // by sample_on_tape on the same tape).
    ad::Var kl_on_tape(ad::Tape& tape, const SampledWeights& w) const;

    // Closed-form KL(q || p) of the current parameters.
    double kl_value() const;

    // Replaces the prior with the current posterior.
    void freeze_posterior_as_prior();

private:
    ad::Shape shape_;
    std::vector<double> mu_, rho_;
    std::vector<double> prior_mu_, prior_sigma_;
};

}  // namespace bdgd::vi
