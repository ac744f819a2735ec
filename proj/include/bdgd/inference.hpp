#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bdgd/cascade.hpp"

namespace bdgd::infer {

// Monte-Carlo posterior-predictive summary. The predictive variance splits
// into the spread of the sampled reconstructions (epistemic, from weight
// uncertainty) and the mean predicted observation variance (aleatoric).
struct PredictiveResult {
    Image mean;
    std::vector<double> epistemic;  // per-pixel, biased (1/T) sample variance
    std::vector<double> aleatoric;  // per-pixel mean predicted variance
    int samples = 0;

    std::vector<double> total() const;  // epistemic + aleatoric
};

// Runs T cascade passes with independently sampled weights (one derived RNG
// stream per pass, so results do not depend on evaluation order) and averages
// them. The deterministic variant uses a single pass and zero uncertainty.
PredictiveResult mc_predict(const net::Cascade& cascade, const Image& x0,
                            const Sinogram& y, const Geometry& geom, int T,
                            std::uint64_t seed);

// Writes mean/epistemic/aleatoric/total as 8-bit previews (<prefix>_mean.png,
// _epistemic.png, _aleatoric.png, _total.png), each min-max normalized over
// its own range, with the normalization bounds recorded one map per line in
// <prefix>_bounds.txt ("<name> <lo> <hi>"), plus the raw maps in
// <prefix>_maps.bin.
void save_uncertainty_maps(const PredictiveResult& r, const std::string& prefix);

// Reads back the raw maps written by save_uncertainty_maps.
PredictiveResult load_uncertainty_maps(const std::string& prefix);

}  // namespace bdgd::infer
