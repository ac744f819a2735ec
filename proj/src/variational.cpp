#include "bdgd/variational.hpp"

#include <cmath>
#include <stdexcept>

namespace bdgd::vi {

double softplus(double x) {
    if (x > 30.0) return x;
    return std::log1p(std::exp(x));
}

double softplus_inv(double y) {
    if (y <= 0.0) throw std::invalid_argument("softplus_inv requires y > 0");
    if (y > 30.0) return y;
    return std::log(std::expm1(y));
}

MeanFieldGaussianLayer::MeanFieldGaussianLayer(ad::Shape shape,
                                               std::size_t fan_in,
                                               std::uint64_t seed)
    : shape_(std::move(shape)) {
    if (fan_in == 0) throw std::invalid_argument("fan_in must be positive");
    const std::size_t n = ad::shape_size(shape_);
    if (n == 0) throw std::invalid_argument("layer shape must be non-empty");
    mu_.resize(n);
    rho_.assign(n, softplus_inv(0.01));
    prior_mu_.assign(n, 0.0);
    prior_sigma_.assign(n, 1.0);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(
        0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    for (double& m : mu_) m = normal(rng);
}

void MeanFieldGaussianLayer::set_prior(std::vector<double> prior_mu,
                                       std::vector<double> prior_sigma) {
    if (prior_mu.size() != size() || prior_sigma.size() != size())
        throw std::invalid_argument("prior size mismatch");
    for (double s : prior_sigma)
        if (s <= 0.0) throw std::invalid_argument("prior sigma must be positive");
    prior_mu_ = std::move(prior_mu);
    prior_sigma_ = std::move(prior_sigma);
}

std::vector<double> MeanFieldGaussianLayer::sigma() const {
    std::vector<double> s(rho_.size());
    for (std::size_t i = 0; i < rho_.size(); ++i) s[i] = softplus(rho_[i]);
    return s;
}

std::vector<double> MeanFieldGaussianLayer::sample(std::mt19937_64& rng) const {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> theta(size());
    for (std::size_t i = 0; i < theta.size(); ++i)
        theta[i] = mu_[i] + softplus(rho_[i]) * normal(rng);
    return theta;
}

SampledWeights MeanFieldGaussianLayer::sample_on_tape(ad::Tape& tape,
                                                      std::mt19937_64& rng) const {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> eps(size());
    for (double& e : eps) e = normal(rng);
    SampledWeights w;
    w.mu = tape.leaf(shape_, mu_);
    w.rho = tape.leaf(shape_, rho_);
    ad::Var eps_v = tape.constant(shape_, std::move(eps));
    w.theta = tape.add(w.mu, tape.mul(tape.softplus(w.rho), eps_v));
    return w;
}

ad::Var MeanFieldGaussianLayer::kl_on_tape(ad::Tape& tape,
                                           const SampledWeights& w) const {
    // KL(N(mu,s^2) || N(m0,s0^2)) = sum[ log(s0/s) + (s^2+(mu-m0)^2)/(2 s0^2)
    //                                    - 1/2 ]
    const std::size_t n = size();
    std::vector<double> inv_2s02(n);
    double const_term = -0.5 * static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        inv_2s02[i] = 1.0 / (2.0 * prior_sigma_[i] * prior_sigma_[i]);
        const_term += std::log(prior_sigma_[i]);
    }
    ad::Var s = tape.softplus(w.rho);
    ad::Var d = tape.sub(w.mu, tape.constant(shape_, prior_mu_));
    ad::Var quad = tape.mul(tape.add(tape.square(s), tape.square(d)),
                            tape.constant(shape_, std::move(inv_2s02)));
    ad::Var kl = tape.sum(tape.sub(quad, tape.log(s)));
    return tape.add_const(kl, const_term);
}

double MeanFieldGaussianLayer::kl_value() const {
    double kl = 0.0;
    for (std::size_t i = 0; i < size(); ++i) {
        const double s = softplus(rho_[i]);
        const double s0 = prior_sigma_[i];
        const double d = mu_[i] - prior_mu_[i];
        kl += std::log(s0 / s) + (s * s + d * d) / (2.0 * s0 * s0) - 0.5;
    }
    return kl;
}

void MeanFieldGaussianLayer::freeze_posterior_as_prior() {
    prior_mu_ = mu_;
    prior_sigma_ = sigma();
}

}  // namespace bdgd::vi
