#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "bdgd/training.hpp"
#include "doctest.h"

using namespace bdgd;
using namespace bdgd::train;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed, double lo,
                               double hi) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(n);
    for (double& x : v) x = u(rng);
    return v;
}

// Builds a small synthetic training triplet set on an n x n grid.
struct ToySet {
    std::vector<std::vector<double>> xs, gs, targets;
};
ToySet make_toy_set(int count, int n, int num_angles, std::uint64_t seed) {
    ToySet ts;
    Geometry geom = Geometry::make(n, num_angles);
    for (int i = 0; i < count; ++i) {
        Image gt = random_ellipse_phantom(derive_seed(seed, i, 900), n);
        Sinogram y = add_noise(radon_forward(gt, geom), 0.01,
                               derive_seed(seed, i, 901));
        Image x0 = fbp(y, geom);
        Image g = data_fidelity_gradient(x0, y, geom);
        ts.xs.push_back(x0.v);
        ts.gs.push_back(g.v);
        ts.targets.push_back(gt.v);
    }
    return ts;
}

}  // namespace

TEST_CASE("adam first step and convergence on a quadratic") {
    // First step moves by ~lr * sign(grad), independent of grad magnitude.
    Adam a({0.1, 0.9, 0.999, 1e-8});
    std::vector<double> p = {5.0};
    a.begin_step();
    a.update(0, p, {2.0});
    CHECK(p[0] == doctest::Approx(5.0 - 0.1).epsilon(1e-6));

    // Minimize (p - 3)^2.
    Adam opt({0.05, 0.9, 0.999, 1e-8});
    std::vector<double> q = {-4.0};
    for (int t = 0; t < 2000; ++t) {
        opt.begin_step();
        opt.update(0, q, {2.0 * (q[0] - 3.0)});
    }
    CHECK(q[0] == doctest::Approx(3.0).epsilon(1e-4));

    CHECK_THROWS_AS(opt.update(0, q, {1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("heteroscedastic likelihood matches the worked example") {
    // One sample, two pixels: residuals (1, 2), variances (1, 4)
    // -> quadratic part 1/1 + 4/4 = 2, log part log 1 + log 4 = log 4.
    ad::Tape tape;
    ad::Var pred = tape.constant({1, 1, 1, 2}, {1.0, 2.0});
    ad::Var target = tape.constant({1, 1, 1, 2}, {0.0, 0.0});
    ad::Var logvar = tape.constant({1, 1, 1, 2}, {0.0, std::log(4.0)});
    ad::Var nll = nll_heteroscedastic(tape, pred, target, logvar, 1);
    CHECK(nll.value()[0] == doctest::Approx(2.0 + std::log(4.0)).epsilon(1e-12));

    // Batch-mean: the same sample twice with batch 2 gives the same value.
    ad::Tape t2;
    ad::Var p2 = t2.constant({2, 1, 1, 2}, {1.0, 2.0, 1.0, 2.0});
    ad::Var g2 = t2.constant({2, 1, 1, 2}, {0.0, 0.0, 0.0, 0.0});
    ad::Var l2 = t2.constant({2, 1, 1, 2},
                             {0.0, std::log(4.0), 0.0, std::log(4.0)});
    ad::Var nll2 = nll_heteroscedastic(t2, p2, g2, l2, 2);
    CHECK(nll2.value()[0] == doctest::Approx(2.0 + std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("homoscedastic likelihood closed form") {
    // Residuals (1, 2), shared variance 2:
    // 1/2 * [ (1 + 4)/2 + 2*log 2 ].
    ad::Tape tape;
    ad::Var pred = tape.constant({1, 1, 1, 2}, {1.0, 2.0});
    ad::Var target = tape.constant({1, 1, 1, 2}, {0.0, 0.0});
    ad::Var lv = tape.constant({1}, {std::log(2.0)});
    ad::Var nll = nll_homoscedastic(tape, pred, target, lv, 1);
    const double expect = 0.5 * (2.5 + 2.0 * std::log(2.0));
    CHECK(nll.value()[0] == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("homoscedastic variance is stationary at the mean squared residual") {
    const auto r = random_vec(40, 5, -2.0, 2.0);
    double msr = 0.0;
    for (double x : r) msr += x * x;
    msr /= static_cast<double>(r.size());

    Adam opt({0.05, 0.9, 0.999, 1e-8});
    double lv = 0.0;
    for (int t = 0; t < 3000; ++t) {
        ad::Tape tape;
        ad::Var pred = tape.constant({1, 1, 1, r.size()}, r);
        ad::Var target = tape.constant({1, 1, 1, r.size()},
                                       std::vector<double>(r.size(), 0.0));
        ad::Var lvv = tape.leaf({1}, {lv});
        ad::Var nll = nll_homoscedastic(tape, pred, target, lvv, 1);
        tape.backward(nll);
        std::vector<double> p = {lv};
        opt.begin_step();
        opt.update(0, p, lvv.grad());
        lv = p[0];
    }
    CHECK(std::exp(lv) == doctest::Approx(msr).epsilon(1e-3));
}

TEST_CASE("block loss composition and dataset scaling") {
    net::Block blk(net::Mode::BDGDPlus, net::BlockArch::tiny(), 3);
    const std::size_t n = 4, hw = n * n;
    auto x = random_vec(hw, 7, 0.0, 1.0);
    auto g = random_vec(hw, 8, -0.5, 0.5);
    auto t = random_vec(hw, 9, 0.0, 1.0);

    auto eval = [&](std::size_t dataset_size) {
        std::mt19937_64 rng(11);
        ad::Tape tape;
        auto fwd = blk.forward_on_tape(tape, x, g, 1, n, n, rng);
        ad::Var target = tape.constant({1, 1, n, n}, t);
        LossParts parts = block_loss(tape, blk.mode(), fwd, target, 1,
                                     dataset_size);
        return std::array<double, 3>{parts.loss.value()[0],
                                     parts.nll.value()[0],
                                     parts.kl.value()[0]};
    };
    auto a = eval(100);
    auto b = eval(200);
    CHECK(a[2] == doctest::Approx(b[2]).epsilon(1e-14));
    CHECK(a[0] - a[2] == doctest::Approx(0.5 * (b[0] - b[2])).epsilon(1e-10));
    CHECK(a[0] == doctest::Approx(100.0 * a[1] + a[2]).epsilon(1e-10));

    // DGD: plain batch-mean sum of squared residuals, no KL term.
    net::Block dgd(net::Mode::DGD, net::BlockArch::tiny(), 3);
    std::mt19937_64 rng(11);
    ad::Tape tape;
    auto fwd = dgd.forward_on_tape(tape, x, g, 1, n, n, rng);
    ad::Var target = tape.constant({1, 1, n, n}, t);
    LossParts parts = block_loss(tape, dgd.mode(), fwd, target, 1, 100);
    double mse = 0.0;
    for (std::size_t i = 0; i < hw; ++i) {
        const double r = fwd.x.value()[i] - t[i];
        mse += r * r;
    }
    CHECK(parts.loss.value()[0] == doctest::Approx(mse).epsilon(1e-12));
    CHECK_FALSE(parts.kl.defined());
}

TEST_CASE("block objective gradients match finite differences") {
    const std::size_t n = 5, hw = n * n;
    auto x = random_vec(hw, 17, 0.0, 1.0);
    auto g = random_vec(hw, 18, -0.5, 0.5);
    auto t = random_vec(hw, 19, 0.0, 1.0);

    for (net::Mode mode : {net::Mode::BDGD, net::Mode::BDGDPlus}) {
        CAPTURE(net::mode_name(mode));
        net::Block blk(mode, net::BlockArch::tiny(), 23);
        blk.log_sigma2 = -0.7;
        auto loss_of = [&]() {
            std::mt19937_64 rng(29);
            ad::Tape tape;
            auto fwd = blk.forward_on_tape(tape, x, g, 1, n, n, rng);
            ad::Var target = tape.constant({1, 1, n, n}, t);
            return block_loss(tape, mode, fwd, target, 1, 50).loss.value()[0];
        };
        std::mt19937_64 rng(29);
        ad::Tape tape;
        auto fwd = blk.forward_on_tape(tape, x, g, 1, n, n, rng);
        ad::Var target = tape.constant({1, 1, n, n}, t);
        LossParts parts = block_loss(tape, mode, fwd, target, 1, 50);
        tape.backward(parts.loss);

        const double h = 1e-6;
        auto fd = [&](double& p) {
            const double orig = p;
            p = orig + h;
            const double up = loss_of();
            p = orig - h;
            const double dn = loss_of();
            p = orig;
            return (up - dn) / (2.0 * h);
        };
        for (std::size_t i = 0; i < blk.bayes->w.size(); ++i) {
            CHECK(fwd.bayes_w[0].mu.grad()[i] ==
                  doctest::Approx(fd(blk.bayes->w.mu()[i])).epsilon(2e-4));
            CHECK(fwd.bayes_w[0].rho.grad()[i] ==
                  doctest::Approx(fd(blk.bayes->w.rho()[i])).epsilon(2e-4));
        }
        if (mode == net::Mode::BDGD) {
            CHECK(fwd.logvar.grad()[0] ==
                  doctest::Approx(fd(blk.log_sigma2)).epsilon(2e-4));
        } else {
            for (std::size_t i = 0; i < blk.var_bayes->w.size(); ++i)
                CHECK(fwd.bayes_w[2].mu.grad()[i] ==
                      doctest::Approx(fd(blk.var_bayes->w.mu()[i])).epsilon(2e-4));
        }
    }
}

TEST_CASE("single-stage training reduces the loss for most seeds") {
    const int n = 16;
    ToySet ts = make_toy_set(24, n, 8, 41);
    TrainConfig cfg;
    cfg.epochs = 10;
    cfg.batch_size = 8;
    int improved = 0;
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        net::Block blk(net::Mode::BDGDPlus, net::BlockArch::tiny(), 500 + seed);
        cfg.seed = seed;
        std::ostringstream log;
        auto r = train_block(blk, 0, ts.xs, ts.gs, ts.targets, n, n, cfg, &log);
        REQUIRE_FALSE(r.diverged);
        REQUIRE(r.epoch_losses.size() == 10);
        if (r.epoch_losses.back() < r.epoch_losses.front()) ++improved;
        CHECK(log.str().find("block 0 epoch 0 nll=") != std::string::npos);
        CHECK(log.str().find(" kl=") != std::string::npos);
        CHECK(log.str().find(" loss=") != std::string::npos);
    }
    CHECK(improved >= 3);
}

TEST_CASE("non-finite loss aborts training with a divergence flag") {
    const int n = 16;
    ToySet ts = make_toy_set(4, n, 6, 43);
    net::Block blk(net::Mode::BDGD, net::BlockArch::tiny(), 3);
    blk.bayes->w.mu()[0] = std::numeric_limits<double>::quiet_NaN();
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 2;
    auto r = train_block(blk, 0, ts.xs, ts.gs, ts.targets, n, n, cfg, nullptr);
    CHECK(r.diverged);
    CHECK(r.epoch_losses.empty());
}

TEST_CASE("cascade training is deterministic and resumable") {
    const int n = 16;
    const int count = 8;
    Geometry geom = Geometry::make(n, 8);
    TrainingSet ts;
    ts.geom = geom;
    ts.image_size = n;
    for (int i = 0; i < count; ++i) {
        Image gt = random_ellipse_phantom(derive_seed(77, i, 900), n);
        Sinogram y = add_noise(radon_forward(gt, geom), 0.01,
                               derive_seed(77, i, 901));
        Image x0 = fbp(y, geom);
        ts.targets.push_back(gt.v);
        ts.sinograms.push_back(y);
        ts.x0.push_back(x0.v);
    }
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 4;
    cfg.seed = 5;

    const std::string ckptA = "/tmp/bdgd_train_a.bin";
    net::Cascade a(net::Mode::BDGDPlus, net::BlockArch::tiny(), 2, 99);
    auto ra = train_cascade(a, ts, cfg, ckptA, nullptr);
    REQUIRE_FALSE(ra.diverged);
    CHECK(ra.blocks.size() == 2);
    CHECK(a.trained_blocks == 2);

    // Same config from the same init reproduces the run bit-for-bit.
    net::Cascade b(net::Mode::BDGDPlus, net::BlockArch::tiny(), 2, 99);
    train_cascade(b, ts, cfg, "", nullptr);
    CHECK(a.block(1).bayes->w.mu() == b.block(1).bayes->w.mu());
    CHECK(a.block(1).bayes->w.rho() == b.block(1).bayes->w.rho());
    CHECK(a.block(0).var_bayes->w.mu() == b.block(0).var_bayes->w.mu());

    // Resuming after stage 0 gives the same final parameters.
    net::Cascade c(net::Mode::BDGDPlus, net::BlockArch::tiny(), 2, 99);
    // Simulate a checkpoint written after stage 0: copy stage 0 from the
    // finished run and mark it trained.
    {
        Container tmp;
        a.block(0).save(tmp, "b");
        c.block(0).load(tmp, "b");
    }
    c.trained_blocks = 1;
    auto rc = train_cascade(c, ts, cfg, "", nullptr);
    CHECK(rc.blocks.size() == 1);  // only stage 1 was trained now
    CHECK(c.block(1).bayes->w.mu() == a.block(1).bayes->w.mu());
    CHECK(c.block(1).bayes->w.rho() == a.block(1).bayes->w.rho());
    CHECK(c.block(1).var_bayes->b.mu() == a.block(1).var_bayes->b.mu());

    // The stage-1 prior is stage 0's posterior.
    auto sig0 = a.block(0).bayes->w.sigma();
    CHECK(a.block(1).bayes->w.prior_mu() == a.block(0).bayes->w.mu());
    CHECK(a.block(1).bayes->w.prior_sigma() == sig0);
}
