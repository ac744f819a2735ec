#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "bdgd/cascade.hpp"
#include "bdgd/phantoms.hpp"

namespace bdgd::train {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam with bias correction. Each distinct parameter tensor gets a slot; the
// caller must use a stable slot numbering across steps.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    void begin_step() { ++t_; }
    void update(std::size_t slot, std::vector<double>& param,
                const std::vector<double>& grad);

private:
    struct Slot {
        std::vector<double> m, v;
    };
    AdamConfig cfg_;
    std::vector<Slot> slots_;
    long t_ = 0;
};

// Batch-mean negative log-likelihoods. pred and target are [B,1,H,W];
// log_sigma2 is a scalar (shared observation variance), log_var is per-pixel.
// Homoscedastic: (1/B) * 1/2 * sum[ r^2/s^2 + log s^2 ].
// Heteroscedastic: (1/B) * sum[ r^2/s_l^2 ] + (1/B) * sum[ log s_l^2 ].
ad::Var nll_homoscedastic(ad::Tape& tape, ad::Var pred, ad::Var target,
                          ad::Var log_sigma2, std::size_t batch);
ad::Var nll_heteroscedastic(ad::Tape& tape, ad::Var pred, ad::Var target,
                            ad::Var log_var, std::size_t batch);
// (1/B) * sum r^2, used by the deterministic variant.
ad::Var mse_loss(ad::Tape& tape, ad::Var pred, ad::Var target,
                 std::size_t batch);

// Full per-step objective: dataset_size * batch-mean NLL + KL for the
// Bayesian variants (one reparameterized sample), plain MSE otherwise.
struct LossParts {
    ad::Var loss;
    ad::Var nll;
    ad::Var kl;  // undefined in DGD mode
};
LossParts block_loss(ad::Tape& tape, net::Mode mode,
                     const net::Block::TapeForward& fwd, ad::Var target,
                     std::size_t batch, std::size_t dataset_size);

struct TrainConfig {
    int epochs = 30;
    int batch_size = 16;
    AdamConfig adam;
    std::uint64_t seed = 0;
};

struct BlockTrainResult {
    std::vector<double> epoch_losses;  // mean per-step loss per epoch
    bool diverged = false;
};

// Trains one refinement stage greedily on fixed inputs: xs are the iterates
// entering the stage, gs the matching data-term gradients, targets the ground
// truth, all flattened [H*W] per sample. Applies one optimizer step per
// mini-batch and logs one line per epoch when log is non-null.
BlockTrainResult train_block(net::Block& block, int block_index,
                             const std::vector<std::vector<double>>& xs,
                             const std::vector<std::vector<double>>& gs,
                             const std::vector<std::vector<double>>& targets,
                             std::size_t h, std::size_t w,
                             const TrainConfig& cfg, std::ostream* log);

// In-memory training data.
struct TrainingSet {
    Geometry geom;
    int image_size = 0;
    std::vector<std::vector<double>> targets;  // ground truth, flat
    std::vector<Sinogram> sinograms;           // noisy measurements
    std::vector<std::vector<double>> x0;       // initial iterates, flat
};
TrainingSet load_training_set(const DatasetManifest& manifest);

struct CascadeTrainResult {
    std::vector<BlockTrainResult> blocks;
    bool diverged = false;
};

// Trains all stages in order, warm-starting each from its predecessor and
// making the predecessor's posterior the prior. Stages below
// cascade.trained_blocks are skipped (resume); after each trained stage the
// cascade is written to checkpoint_path when non-empty. Iterates advance
// between stages with one posterior draw per sample from a per-stage stream,
// so resumed runs reproduce the original bit-for-bit.
CascadeTrainResult train_cascade(net::Cascade& cascade, const TrainingSet& ts,
                                 const TrainConfig& cfg,
                                 const std::string& checkpoint_path,
                                 std::ostream* log);

}  // namespace bdgd::train
