#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bdgd/container.hpp"
#include "bdgd/image.hpp"

namespace bdgd {

// Parallel-beam acquisition geometry. Angles are uniform on the half-open
// range [angle_start, angle_end) degrees; detector offsets are in pixel units.
struct Geometry {
    int image_size = 0;
    int num_angles = 0;
    double angle_start = 0.0;
    double angle_end = 180.0;
    int num_detectors = 0;
    double detector_spacing = 1.0;

    // num_detectors < 0 selects the default ceil(sqrt(2) * n) full-diagonal
    // coverage.
    static Geometry make(int image_size, int num_angles, double angle_start = 0.0,
                         double angle_end = 180.0, int num_detectors = -1,
                         double detector_spacing = 1.0);

    double angle_rad(int index) const;
    double detector_offset(int index) const;
    void validate() const;
    bool operator==(const Geometry&) const = default;
};

struct Sinogram {
    Geometry geom;
    std::vector<double> v;  // num_angles x num_detectors, row-major

    Sinogram() = default;
    explicit Sinogram(const Geometry& g)
        : geom(g), v(static_cast<std::size_t>(g.num_angles) * g.num_detectors, 0.0) {}

    double& at(int angle, int det) {
        return v[static_cast<std::size_t>(angle) * geom.num_detectors + det];
    }
    double at(int angle, int det) const {
        return v[static_cast<std::size_t>(angle) * geom.num_detectors + det];
    }
};

Sinogram radon_forward(const Image& x, const Geometry& g);
Image radon_adjoint(const Sinogram& y, const Geometry& g);

struct FbpOptions {
    bool hann = false;
    bool clip_negative = true;
};
Image fbp(const Sinogram& y, const Geometry& g, const FbpOptions& opts = {});

// Adds zero-mean Gaussian noise with std = level * mean(|y|).
Sinogram add_noise(const Sinogram& y, double level, std::uint64_t seed);

// A^T (A x - y)
Image data_fidelity_gradient(const Image& x, const Sinogram& y, const Geometry& g);

// Shared-container persistence with geometry metadata.
void write_geometry(Container& c, const Geometry& g);
Geometry read_geometry(const Container& c);
void save_image(const std::string& path, const Image& img);
Image load_image(const std::string& path);
void save_sinogram(const std::string& path, const Sinogram& y);
Sinogram load_sinogram(const std::string& path);

}  // namespace bdgd
