#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <random>
#include <stdexcept>
#include <vector>

#include "bdgd/cascade.hpp"
#include "bdgd/phantoms.hpp"
#include "doctest.h"

using namespace bdgd;
using namespace bdgd::net;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed,
                               double lo = 0.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(n);
    for (double& x : v) x = u(rng);
    return v;
}

}  // namespace

TEST_CASE("mode names") {
    for (Mode m : {Mode::DGD, Mode::BDGD, Mode::BDGDPlus})
        CHECK(mode_from_name(mode_name(m)) == m);
    CHECK(mode_name(Mode::BDGDPlus) == "bdgd+");
    CHECK_THROWS_AS(mode_from_name("nope"), std::invalid_argument);
}

TEST_CASE("block construction per mode") {
    const BlockArch arch = BlockArch::standard();
    Block dgd(Mode::DGD, arch, 1);
    CHECK(dgd.det_head.has_value());
    CHECK_FALSE(dgd.bayes.has_value());
    CHECK_FALSE(dgd.var_bayes.has_value());

    Block b(Mode::BDGD, arch, 1);
    CHECK(b.bayes.has_value());
    CHECK_FALSE(b.det_head.has_value());
    CHECK(b.var_det.empty());
    CHECK_FALSE(b.var_bayes.has_value());

    Block bp(Mode::BDGDPlus, arch, 1);
    CHECK(bp.bayes.has_value());
    CHECK(bp.var_bayes.has_value());
    CHECK(bp.var_det.size() == arch.var_det.size());
    CHECK(bp.det.size() == 3);
    CHECK(bp.det[0].w.size() == 16 * 2 * 5 * 5);
    CHECK(bp.bayes->w.size() == 1 * 16 * 3 * 3);

    // Same seed reproduces the init; different seed does not.
    Block bp2(Mode::BDGDPlus, arch, 1);
    Block bp3(Mode::BDGDPlus, arch, 2);
    CHECK(bp.det[0].w == bp2.det[0].w);
    CHECK(bp.bayes->w.mu() == bp2.bayes->w.mu());
    CHECK(bp.det[0].w != bp3.det[0].w);
}

TEST_CASE("zeroed update head leaves nonnegative input unchanged") {
    Block blk(Mode::BDGDPlus, BlockArch::tiny(), 5);
    blk.bayes->w.mu().assign(blk.bayes->w.size(), 0.0);
    blk.bayes->b.mu().assign(blk.bayes->b.size(), 0.0);
    const std::size_t n = 6;
    auto x = random_vec(n * n, 11);
    auto g = random_vec(n * n, 12, -1.0, 1.0);
    auto out = blk.forward(x, g, 1, n, n, nullptr);
    for (std::size_t i = 0; i < x.size(); ++i)
        CHECK(out.x[i] == doctest::Approx(x[i]).epsilon(1e-14));
    CHECK(out.logvar.size() == n * n);
    for (double lv : out.logvar) {
        CHECK(lv >= kLogVarMin);
        CHECK(lv <= kLogVarMax);
    }
}

TEST_CASE("output is nonnegative and batch entries are independent") {
    Block blk(Mode::BDGD, BlockArch::standard(), 9);
    const std::size_t n = 8, hw = n * n;
    auto x = random_vec(3 * hw, 21);
    auto g = random_vec(3 * hw, 22, -0.5, 0.5);
    auto out = blk.forward(x, g, 3, n, n, nullptr);
    CHECK(out.x.size() == 3 * hw);
    for (double v : out.x) CHECK(v >= 0.0);
    // Processing sample 1 alone matches its slice of the batch.
    std::vector<double> x1(x.begin() + hw, x.begin() + 2 * hw);
    std::vector<double> g1(g.begin() + hw, g.begin() + 2 * hw);
    auto solo = blk.forward(x1, g1, 1, n, n, nullptr);
    for (std::size_t i = 0; i < hw; ++i)
        CHECK(solo.x[i] == doctest::Approx(out.x[hw + i]).epsilon(1e-13));
    // BDGD log-variance is one broadcast scalar.
    blk.log_sigma2 = -1.25;
    auto out2 = blk.forward(x, g, 3, n, n, nullptr);
    for (double lv : out2.logvar) CHECK(lv == -1.25);

    CHECK_THROWS_AS(blk.forward(x, g, 2, n, n, nullptr), std::invalid_argument);
}

TEST_CASE("tape forward agrees with gradient-free forward") {
    for (Mode mode : {Mode::DGD, Mode::BDGD, Mode::BDGDPlus}) {
        CAPTURE(mode_name(mode));
        Block blk(mode, BlockArch::standard(), 31);
        blk.log_sigma2 = 0.4;
        const std::size_t n = 8, B = 2, hw = n * n;
        auto x = random_vec(B * hw, 41);
        auto g = random_vec(B * hw, 42, -0.5, 0.5);

        std::mt19937_64 rng(7), clone(7);
        ad::Tape tape;
        auto tf = blk.forward_on_tape(tape, x, g, B, n, n, rng);
        auto ff = blk.forward(x, g, B, n, n, mode == Mode::DGD ? nullptr : &clone);

        REQUIRE(tf.x.value().size() == ff.x.size());
        for (std::size_t i = 0; i < ff.x.size(); ++i)
            CHECK(tf.x.value()[i] == doctest::Approx(ff.x[i]).epsilon(1e-13));
        if (mode == Mode::BDGD) {
            CHECK(tf.logvar.value().size() == 1);
            CHECK(tf.logvar.value()[0] == 0.4);
        } else if (mode == Mode::BDGDPlus) {
            REQUIRE(tf.logvar.value().size() == ff.logvar.size());
            for (std::size_t i = 0; i < ff.logvar.size(); ++i)
                CHECK(tf.logvar.value()[i] ==
                      doctest::Approx(ff.logvar[i]).epsilon(1e-12));
        }
        if (mode == Mode::DGD) {
            CHECK_FALSE(tf.kl.defined());
            CHECK_FALSE(tf.logvar.defined());
        } else {
            CHECK(tf.kl.defined());
            CHECK(tf.kl.value()[0] >= 0.0);
        }
    }
}

TEST_CASE("tape forward gradients match finite differences") {
    Block blk(Mode::BDGDPlus, BlockArch::tiny(), 77);
    const std::size_t n = 5, hw = n * n;
    auto x = random_vec(hw, 51);
    auto g = random_vec(hw, 52, -0.5, 0.5);

    // Loss = sum(x_out^2) + kl, rebuilt with the same eps draw each time.
    auto loss_of = [&](const Block& b) {
        std::mt19937_64 rng(3);
        ad::Tape tape;
        auto tf = b.forward_on_tape(tape, x, g, 1, n, n, rng);
        return tape.add(tape.sum(tape.square(tf.x)), tf.kl).value()[0];
    };
    std::mt19937_64 rng(3);
    ad::Tape tape;
    auto tf = blk.forward_on_tape(tape, x, g, 1, n, n, rng);
    ad::Var loss = tape.add(tape.sum(tape.square(tf.x)), tf.kl);
    tape.backward(loss);

    const double h = 1e-6;
    auto fd = [&](std::vector<double>& param, std::size_t i) {
        const double orig = param[i];
        param[i] = orig + h;
        const double up = loss_of(blk);
        param[i] = orig - h;
        const double dn = loss_of(blk);
        param[i] = orig;
        return (up - dn) / (2.0 * h);
    };

    // Bayesian mean-head mu and rho (weights have 2 taps, bias 1).
    for (std::size_t i = 0; i < blk.bayes->w.size(); ++i) {
        CHECK(tf.bayes_w[0].mu.grad()[i] ==
              doctest::Approx(fd(blk.bayes->w.mu(), i)).epsilon(1e-5));
        CHECK(tf.bayes_w[0].rho.grad()[i] ==
              doctest::Approx(fd(blk.bayes->w.rho(), i)).epsilon(1e-5));
    }
    CHECK(tf.bayes_w[1].mu.grad()[0] ==
          doctest::Approx(fd(blk.bayes->b.mu(), 0)).epsilon(1e-5));
    // Variance-head mu only affects the kl term here (logvar unused in loss).
    CHECK(tf.bayes_w[2].mu.grad()[0] ==
          doctest::Approx(fd(blk.var_bayes->w.mu(), 0)).epsilon(1e-5));
}

TEST_CASE("checkpoint roundtrip") {
    for (Mode mode : {Mode::DGD, Mode::BDGD, Mode::BDGDPlus}) {
        CAPTURE(mode_name(mode));
        Cascade cas(mode, BlockArch::tiny(), 3, 123);
        cas.trained_blocks = 2;
        if (mode == Mode::BDGD)
            for (int k = 0; k < 3; ++k) cas.block(k).log_sigma2 = -0.5 * k;
        cas.block(1).freeze_posteriors_as_priors();
        const std::string path = "/tmp/bdgd_test_ckpt.bin";
        cas.save(path);
        Cascade back = Cascade::load(path);
        CHECK(back.mode() == mode);
        CHECK(back.num_blocks() == 3);
        CHECK(back.trained_blocks == 2);

        const std::size_t n = 6, hw = n * n;
        auto x = random_vec(hw, 61);
        auto g = random_vec(hw, 62, -0.3, 0.3);
        for (int k = 0; k < 3; ++k) {
            std::mt19937_64 r1(9), r2(9);
            auto a = cas.block(k).forward(x, g, 1, n, n,
                                          mode == Mode::DGD ? nullptr : &r1);
            auto b = back.block(k).forward(x, g, 1, n, n,
                                           mode == Mode::DGD ? nullptr : &r2);
            CHECK(a.x == b.x);
            CHECK(a.logvar == b.logvar);
        }
        if (mode != Mode::DGD) {
            CHECK(back.block(1).bayes->w.prior_mu() ==
                  cas.block(1).bayes->w.prior_mu());
            CHECK(back.block(1).bayes->w.prior_sigma() ==
                  cas.block(1).bayes->w.prior_sigma());
        }
    }
}

TEST_CASE("cascade reconstruct runs the unrolled refinement") {
    const int n = 16;
    Image gt = random_ellipse_phantom(3, n);
    Geometry geom = Geometry::make(n, 12);
    Sinogram y = radon_forward(gt, geom);
    Image x0 = fbp(y, geom);

    Cascade cas(Mode::BDGDPlus, BlockArch::tiny(), 2, 9);
    std::vector<double> var;
    Image rec = cas.reconstruct(x0, y, geom, nullptr, &var);
    CHECK(rec.n == n);
    CHECK(var.size() == static_cast<std::size_t>(n * n));
    for (double v : var) CHECK(v > 0.0);
    for (double v : rec.v) CHECK(v >= 0.0);

    // reconstruct == running all blocks via run_prefix by hand.
    Image pre = cas.run_prefix(x0, y, geom, 2, nullptr);
    CHECK(rec.v == pre.v);
    // Prefix of zero blocks is the input.
    Image id = cas.run_prefix(x0, y, geom, 0, nullptr);
    CHECK(id.v == x0.v);
    CHECK_THROWS_AS(cas.run_prefix(x0, y, geom, 3, nullptr),
                    std::invalid_argument);

    // DGD emits no variance map.
    Cascade dgd(Mode::DGD, BlockArch::tiny(), 2, 9);
    std::vector<double> dvar = {1.0};
    dgd.reconstruct(x0, y, geom, nullptr, &dvar);
    CHECK(dvar.empty());

    // Sampled weights change the output; identical seeds agree.
    std::mt19937_64 ra(4), rb(4), rc(5);
    Image sa = cas.reconstruct(x0, y, geom, &ra);
    Image sb = cas.reconstruct(x0, y, geom, &rb);
    Image sc = cas.reconstruct(x0, y, geom, &rc);
    CHECK(sa.v == sb.v);
    CHECK(sa.v != sc.v);
}
