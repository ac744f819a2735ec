#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "bdgd/container.hpp"
#include "bdgd/tomo.hpp"
#include "bdgd/variational.hpp"

namespace bdgd::net {

// Reconstruction variants sharing the same unrolled structure:
//   DGD      deterministic refinement, mean-squared-error training
//   BDGD     Bayesian mean head + one scalar observation variance per block
//   BDGDPlus Bayesian mean head + per-pixel predicted variance head
enum class Mode { DGD, BDGD, BDGDPlus };

std::string mode_name(Mode m);
Mode mode_from_name(const std::string& name);

struct ConvSpec {
    std::size_t in_ch = 0, out_ch = 0, k = 0;  // odd square kernels
};

// Plain trainable convolution (He-normal weights, zero bias).
struct DetConv {
    ConvSpec spec;
    std::vector<double> w;  // [out_ch, in_ch, k, k]
    std::vector<double> b;  // [out_ch]
    void init(std::uint64_t seed);
};

// Convolution with a mean-field Gaussian posterior over weights and bias.
struct BayesConv {
    ConvSpec spec;
    vi::MeanFieldGaussianLayer w, b;
    BayesConv(ConvSpec s, std::uint64_t seed);
};

struct BlockArch {
    std::vector<ConvSpec> det;      // feature extractor, relu after each
    ConvSpec bayes;                 // update head, produces one channel
    std::vector<ConvSpec> var_det;  // variance feature extractor, relu after each
    ConvSpec var_bayes;             // log-variance head, produces one channel
    static BlockArch standard();    // 2->16->16->16->1; variance 2->8->1
    static BlockArch tiny();        // 2->1 single Bayesian tap; variance 2->1
};

// Predicted log-variances are clamped to this range everywhere.
inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 6.0;

// One refinement stage: x_out = relu(x + f(x, g)) where g is the data-term
// gradient image and f is the convolutional update network.
class Block {
public:
    Block(Mode mode, const BlockArch& arch, std::uint64_t seed);

    Mode mode() const { return mode_; }

    std::vector<DetConv> det;
    std::optional<BayesConv> bayes;        // BDGD / BDGDPlus
    std::optional<DetConv> det_head;       // DGD update head
    std::vector<DetConv> var_det;          // BDGDPlus
    std::optional<BayesConv> var_bayes;    // BDGDPlus
    double log_sigma2 = 0.0;               // BDGD

    // Batched gradient-free pass. x and g are [B, H*W] images flattened
    // back-to-back; returns the refined batch and, for Bayesian modes, the
    // per-pixel predicted log-variance (BDGDPlus) or the scalar log-variance
    // broadcast (BDGD). Weights are drawn from the posterior when rng is
    // given, otherwise posterior means are used.
    struct ForwardOut {
        std::vector<double> x;       // [B, H*W]
        std::vector<double> logvar;  // [B, H*W], empty for DGD
    };
    ForwardOut forward(const std::vector<double>& x, const std::vector<double>& g,
                       std::size_t batch, std::size_t h, std::size_t w,
                       std::mt19937_64* rng) const;

    // Differentiable pass for training this block. Inputs are constants on
    // the tape (stages are trained greedily); all trainable parameters enter
    // as leaves so their gradients can be read back after backward.
    struct TapeForward {
        ad::Var x;            // refined batch [B,1,H,W]
        ad::Var logvar;       // per-pixel or scalar log-variance; undefined for DGD
        ad::Var kl;           // scalar KL of all Bayesian layers; undefined for DGD
        std::vector<ad::Var> det_w, det_b;        // leaves, det then var_det then DGD head
        std::vector<vi::SampledWeights> bayes_w;  // mean head then variance head
    };
    TapeForward forward_on_tape(ad::Tape& tape, const std::vector<double>& x,
                                const std::vector<double>& g, std::size_t batch,
                                std::size_t h, std::size_t w,
                                std::mt19937_64& rng) const;

    // Makes the current Bayesian posteriors the priors for further training.
    void freeze_posteriors_as_priors();

    void save(Container& c, const std::string& prefix) const;
    void load(const Container& c, const std::string& prefix);

private:
    Mode mode_;
};

// The full unrolled reconstruction x_{k+1} = block_k(x_k, grad D(x_k)).
class Cascade {
public:
    Cascade(Mode mode, BlockArch arch, int num_blocks, std::uint64_t seed);

    Mode mode() const { return mode_; }
    int num_blocks() const { return static_cast<int>(blocks_.size()); }
    const BlockArch& arch() const { return arch_; }
    Block& block(int k) { return blocks_[static_cast<std::size_t>(k)]; }
    const Block& block(int k) const { return blocks_[static_cast<std::size_t>(k)]; }

    // Blocks [0, trained_blocks) have finished training; used to resume.
    int trained_blocks = 0;

    // Runs the cascade from x0. Weights are sampled when rng is given, else
    // posterior means are used. If variance_out is non-null it receives the
    // final block's predicted observation variance (exp of log-variance),
    // one value per pixel; empty in DGD mode.
    Image reconstruct(const Image& x0, const Sinogram& y, const Geometry& geom,
                      std::mt19937_64* rng,
                      std::vector<double>* variance_out = nullptr) const;

    // Runs only blocks [0, upto) — used while training block `upto` greedily.
    Image run_prefix(const Image& x0, const Sinogram& y, const Geometry& geom,
                     int upto, std::mt19937_64* rng) const;

    void save(const std::string& path) const;
    static Cascade load(const std::string& path);

private:
    Mode mode_;
    BlockArch arch_;
    std::vector<Block> blocks_;
};

}  // namespace bdgd::net
