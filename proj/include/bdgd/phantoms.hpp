#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bdgd/image.hpp"
#include "bdgd/tomo.hpp"

namespace bdgd {

struct EllipseSpec {
    double cx = 0.0, cy = 0.0;      // center in [-1,1]^2
    double a = 0.0, b = 0.0;        // semi-axes (unit square scale)
    double angle_deg = 0.0;         // rotation
    double intensity = 0.0;         // additive value
};

// Rasterizes the sum of ellipses on [-1,1]^2, sampling at pixel centers, and
// clips to [0,1].
Image render_ellipses(const std::vector<EllipseSpec>& specs, int size);

std::vector<EllipseSpec> random_ellipse_specs(std::uint64_t seed);
Image random_ellipse_phantom(std::uint64_t seed, int size);

// 10-ellipse Shepp-Logan, modified (high-contrast) intensities, values in [0,1].
const std::vector<EllipseSpec>& shepp_logan_ellipses();
Image shepp_logan(int size);

// Fixed "OOD" glyph overlay used for out-of-distribution probes.
Image text_overlay_mask(int size);
void add_text_overlay(Image& img, double intensity = 0.9);

struct DatasetManifest {
    std::uint64_t seed = 0;
    int count = 0;
    int size = 0;
    double noise_level = 0.0;
    Geometry geom;
    std::string dir;                  // directory holding the manifest
    std::vector<std::string> records; // record paths relative to dir

    std::string record_path(int index) const;
};

struct SampleRecord {
    Image ground_truth;
    Sinogram clean;
    Sinogram noisy;
    Image x0;  // FBP of the noisy sinogram
};

DatasetManifest generate_dataset(const std::string& dir, std::uint64_t seed,
                                 int count, int size, const Geometry& geom,
                                 double noise_level);
void save_manifest(const DatasetManifest& m, const std::string& path);
DatasetManifest load_manifest(const std::string& path);
SampleRecord load_sample(const DatasetManifest& m, int index);

// Deterministic per-sample RNG stream derivation.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index,
                          std::uint64_t stream);

}  // namespace bdgd
