#include "bdgd/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace bdgd::train {

void Adam::update(std::size_t slot, std::vector<double>& param,
                  const std::vector<double>& grad) {
    if (param.size() != grad.size())
        throw std::invalid_argument("adam: gradient size mismatch");
    if (slot >= slots_.size()) slots_.resize(slot + 1);
    Slot& s = slots_[slot];
    if (s.m.empty()) {
        s.m.assign(param.size(), 0.0);
        s.v.assign(param.size(), 0.0);
    }
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < param.size(); ++i) {
        s.m[i] = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * grad[i];
        s.v[i] = cfg_.beta2 * s.v[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
        const double mhat = s.m[i] / bc1;
        const double vhat = s.v[i] / bc2;
        param[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
}

ad::Var nll_homoscedastic(ad::Tape& tape, ad::Var pred, ad::Var target,
                          ad::Var log_sigma2, std::size_t batch) {
    if (batch == 0) throw std::invalid_argument("batch must be positive");
    const std::size_t n = pred.size();
    ad::Var r2 = tape.square(tape.sub(pred, target));
    ad::Var quad = tape.sum(tape.mul(r2, tape.exp(tape.scale(log_sigma2, -1.0))));
    ad::Var lv = tape.scale(log_sigma2, static_cast<double>(n));
    return tape.scale(tape.add(quad, lv), 0.5 / static_cast<double>(batch));
}

ad::Var nll_heteroscedastic(ad::Tape& tape, ad::Var pred, ad::Var target,
                            ad::Var log_var, std::size_t batch) {
    if (batch == 0) throw std::invalid_argument("batch must be positive");
    ad::Var r2 = tape.square(tape.sub(pred, target));
    ad::Var quad = tape.sum(tape.mul(r2, tape.exp(tape.scale(log_var, -1.0))));
    ad::Var logs = tape.sum(log_var);
    return tape.scale(tape.add(quad, logs), 1.0 / static_cast<double>(batch));
}

ad::Var mse_loss(ad::Tape& tape, ad::Var pred, ad::Var target,
                 std::size_t batch) {
    if (batch == 0) throw std::invalid_argument("batch must be positive");
    ad::Var r2 = tape.square(tape.sub(pred, target));
    return tape.scale(tape.sum(r2), 1.0 / static_cast<double>(batch));
}

LossParts block_loss(ad::Tape& tape, net::Mode mode,
                     const net::Block::TapeForward& fwd, ad::Var target,
                     std::size_t batch, std::size_t dataset_size) {
    LossParts parts;
    if (mode == net::Mode::DGD) {
        parts.nll = mse_loss(tape, fwd.x, target, batch);
        parts.loss = parts.nll;
        return parts;
    }
    parts.nll = mode == net::Mode::BDGD
                    ? nll_homoscedastic(tape, fwd.x, target, fwd.logvar, batch)
                    : nll_heteroscedastic(tape, fwd.x, target, fwd.logvar, batch);
    parts.kl = fwd.kl;
    parts.loss = tape.add(
        tape.scale(parts.nll, static_cast<double>(dataset_size)), parts.kl);
    return parts;
}

namespace {

// Applies one optimizer step to every trainable tensor of the block, in the
// same order the leaves were created by forward_on_tape.
void apply_step(Adam& adam, net::Block& block,
                const net::Block::TapeForward& fwd) {
    std::vector<std::vector<double>*> dw, db;
    for (auto& c : block.det) {
        dw.push_back(&c.w);
        db.push_back(&c.b);
    }
    if (block.det_head) {
        dw.push_back(&block.det_head->w);
        db.push_back(&block.det_head->b);
    }
    for (auto& c : block.var_det) {
        dw.push_back(&c.w);
        db.push_back(&c.b);
    }
    std::vector<vi::MeanFieldGaussianLayer*> bayes;
    if (block.bayes) {
        bayes.push_back(&block.bayes->w);
        bayes.push_back(&block.bayes->b);
    }
    if (block.var_bayes) {
        bayes.push_back(&block.var_bayes->w);
        bayes.push_back(&block.var_bayes->b);
    }
    if (fwd.det_w.size() != dw.size() || fwd.bayes_w.size() != bayes.size())
        throw std::logic_error("trainable tensor registry out of sync");

    adam.begin_step();
    std::size_t slot = 0;
    for (std::size_t i = 0; i < dw.size(); ++i) {
        adam.update(slot++, *dw[i], fwd.det_w[i].grad());
        adam.update(slot++, *db[i], fwd.det_b[i].grad());
    }
    for (std::size_t i = 0; i < bayes.size(); ++i) {
        adam.update(slot++, bayes[i]->mu(), fwd.bayes_w[i].mu.grad());
        adam.update(slot++, bayes[i]->rho(), fwd.bayes_w[i].rho.grad());
    }
    if (block.mode() == net::Mode::BDGD) {
        std::vector<double> ls = {block.log_sigma2};
        adam.update(slot++, ls, fwd.logvar.grad());
        block.log_sigma2 = ls[0];
    }
}

std::vector<double> gather(const std::vector<std::vector<double>>& rows,
                           const std::vector<std::size_t>& idx,
                           std::size_t begin, std::size_t count) {
    std::vector<double> out;
    out.reserve(count * rows[0].size());
    for (std::size_t i = 0; i < count; ++i) {
        const auto& r = rows[idx[begin + i]];
        out.insert(out.end(), r.begin(), r.end());
    }
    return out;
}

}  // namespace

BlockTrainResult train_block(net::Block& block, int block_index,
                             const std::vector<std::vector<double>>& xs,
                             const std::vector<std::vector<double>>& gs,
                             const std::vector<std::vector<double>>& targets,
                             std::size_t h, std::size_t w,
                             const TrainConfig& cfg, std::ostream* log) {
    const std::size_t n = xs.size();
    if (n == 0 || gs.size() != n || targets.size() != n)
        throw std::invalid_argument("training set arrays must match");
    if (cfg.epochs <= 0 || cfg.batch_size <= 0)
        throw std::invalid_argument("epochs and batch size must be positive");
    const auto bi = static_cast<std::uint64_t>(block_index);

    BlockTrainResult result;
    Adam adam(cfg.adam);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::mt19937_64 shuffle_rng(
            derive_seed(cfg.seed, bi * 100000 + static_cast<std::uint64_t>(epoch), 21));
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double loss_acc = 0.0, nll_acc = 0.0, kl_acc = 0.0;
        std::size_t steps = 0;
        for (std::size_t begin = 0; begin < n; begin += cfg.batch_size) {
            const std::size_t B =
                std::min<std::size_t>(cfg.batch_size, n - begin);
            const auto xb = gather(xs, order, begin, B);
            const auto gb = gather(gs, order, begin, B);
            const auto tb = gather(targets, order, begin, B);

            std::mt19937_64 sample_rng(derive_seed(
                cfg.seed,
                bi * 1000000 + static_cast<std::uint64_t>(epoch) * 1000 + steps,
                22));
            ad::Tape tape;
            auto fwd = block.forward_on_tape(tape, xb, gb, B, h, w, sample_rng);
            ad::Var target = tape.constant({B, 1, h, w}, tb);
            LossParts parts = block_loss(tape, block.mode(), fwd, target, B, n);
            const double loss = parts.loss.value()[0];
            if (!std::isfinite(loss)) {
                result.diverged = true;
                if (log)
                    *log << "block " << block_index << " epoch " << epoch
                         << " diverged (non-finite loss)\n";
                return result;
            }
            tape.backward(parts.loss);
            apply_step(adam, block, fwd);

            loss_acc += loss;
            nll_acc += parts.nll.value()[0];
            kl_acc += parts.kl.defined() ? parts.kl.value()[0] : 0.0;
            ++steps;
        }
        result.epoch_losses.push_back(loss_acc / static_cast<double>(steps));
        if (log)
            *log << "block " << block_index << " epoch " << epoch
                 << " nll=" << nll_acc / static_cast<double>(steps)
                 << " kl=" << kl_acc / static_cast<double>(steps)
                 << " loss=" << loss_acc / static_cast<double>(steps) << "\n";
    }
    return result;
}

TrainingSet load_training_set(const DatasetManifest& manifest) {
    TrainingSet ts;
    ts.geom = manifest.geom;
    ts.image_size = manifest.size;
    for (int i = 0; i < manifest.count; ++i) {
        SampleRecord rec = load_sample(manifest, i);
        ts.targets.push_back(std::move(rec.ground_truth.v));
        ts.sinograms.push_back(std::move(rec.noisy));
        ts.x0.push_back(std::move(rec.x0.v));
    }
    return ts;
}

namespace {

// Warm-starts `next` from `prev` and makes prev's posterior next's prior.
void inherit_block(const net::Block& prev, net::Block& next) {
    for (std::size_t i = 0; i < next.det.size(); ++i) {
        next.det[i].w = prev.det[i].w;
        next.det[i].b = prev.det[i].b;
    }
    if (next.det_head && prev.det_head) {
        next.det_head->w = prev.det_head->w;
        next.det_head->b = prev.det_head->b;
    }
    for (std::size_t i = 0; i < next.var_det.size(); ++i) {
        next.var_det[i].w = prev.var_det[i].w;
        next.var_det[i].b = prev.var_det[i].b;
    }
    if (next.bayes && prev.bayes) {
        next.bayes->w.mu() = prev.bayes->w.mu();
        next.bayes->w.rho() = prev.bayes->w.rho();
        next.bayes->b.mu() = prev.bayes->b.mu();
        next.bayes->b.rho() = prev.bayes->b.rho();
    }
    if (next.var_bayes && prev.var_bayes) {
        next.var_bayes->w.mu() = prev.var_bayes->w.mu();
        next.var_bayes->w.rho() = prev.var_bayes->w.rho();
        next.var_bayes->b.mu() = prev.var_bayes->b.mu();
        next.var_bayes->b.rho() = prev.var_bayes->b.rho();
    }
    next.log_sigma2 = prev.log_sigma2;
    next.freeze_posteriors_as_priors();
}

}  // namespace

CascadeTrainResult train_cascade(net::Cascade& cascade, const TrainingSet& ts,
                                 const TrainConfig& cfg,
                                 const std::string& checkpoint_path,
                                 std::ostream* log) {
    const std::size_t count = ts.targets.size();
    if (count == 0) throw std::invalid_argument("empty training set");
    const int n = ts.image_size;
    const auto hw = static_cast<std::size_t>(n) * static_cast<std::size_t>(n);
    for (const auto& t : ts.targets)
        if (t.size() != hw)
            throw std::invalid_argument("training sample size mismatch");

    CascadeTrainResult result;
    std::vector<std::vector<double>> xs = ts.x0;
    for (int k = 0; k < cascade.num_blocks(); ++k) {
        // Data-term gradients at the fixed iterates entering this stage.
        std::vector<std::vector<double>> gs;
        gs.reserve(count);
        for (std::size_t i = 0; i < count; ++i)
            gs.push_back(
                data_fidelity_gradient(Image(n, xs[i]), ts.sinograms[i], ts.geom)
                    .v);

        if (k >= cascade.trained_blocks) {
            if (k > 0) inherit_block(cascade.block(k - 1), cascade.block(k));
            BlockTrainResult br =
                train_block(cascade.block(k), k, xs, gs, ts.targets,
                            static_cast<std::size_t>(n),
                            static_cast<std::size_t>(n), cfg, log);
            const bool diverged = br.diverged;
            result.blocks.push_back(std::move(br));
            if (diverged) {
                result.diverged = true;
                return result;
            }
            cascade.trained_blocks = k + 1;
            if (!checkpoint_path.empty()) cascade.save(checkpoint_path);
        }

        // Advance the iterates with one posterior draw per sample.
        if (k + 1 < cascade.num_blocks()) {
            std::mt19937_64 prop_rng(
                derive_seed(cfg.seed, static_cast<std::uint64_t>(k), 20));
            std::mt19937_64* rng =
                cascade.mode() == net::Mode::DGD ? nullptr : &prop_rng;
            for (std::size_t i = 0; i < count; ++i) {
                auto out = cascade.block(k).forward(
                    xs[i], gs[i], 1, static_cast<std::size_t>(n),
                    static_cast<std::size_t>(n), rng);
                xs[i] = std::move(out.x);
            }
        }
    }
    return result;
}

}  // namespace bdgd::train
