#include "bdgd/tomo.hpp"

#include <cmath>
#include <complex>
#include <random>
#include <stdexcept>

namespace bdgd {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kRayStep = 0.5;  // marching step in pixel units

void check_shapes(const Sinogram& y, const Geometry& g) {
    if (!(y.geom == g)) throw std::invalid_argument("sinogram geometry mismatch");
    if (y.v.size() != static_cast<std::size_t>(g.num_angles) * g.num_detectors)
        throw std::invalid_argument("sinogram shape inconsistent with geometry");
}

// Marches the ray for (angle, detector) and reports bilinear sample weights.
// Forward and adjoint both use these exact weights, so the adjoint is the
// algebraic transpose of the forward map.
template <class Fn>
void for_each_ray_weight(const Geometry& g, int angle, int det, Fn&& fn) {
    const int n = g.image_size;
    const double phi = g.angle_rad(angle);
    const double c = std::cos(phi), s = std::sin(phi);
    const double offs = g.detector_offset(det);
    const double half = (n - 1) / 2.0;
    const double tmax = n * 0.70710678118654752440 + 1.0;
    const double px0 = offs * c + half, py0 = offs * s + half;
    const double ux = -s, uy = c;
    for (double t = -tmax; t <= tmax; t += kRayStep) {
        const double px = px0 + t * ux;
        const double py = py0 + t * uy;
        const int ix = static_cast<int>(std::floor(px));
        const int iy = static_cast<int>(std::floor(py));
        const double fx = px - ix, fy = py - iy;
        // Bilinear weights over the four neighbours; row index = y, col = x.
        const double w[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy,
                             fx * fy};
        const int cx[4] = {ix, ix + 1, ix, ix + 1};
        const int cy[4] = {iy, iy, iy + 1, iy + 1};
        for (int k = 0; k < 4; ++k) {
            if (cx[k] < 0 || cx[k] >= n || cy[k] < 0 || cy[k] >= n) continue;
            if (w[k] == 0.0) continue;
            fn(static_cast<std::size_t>(cy[k]) * n + cx[k], w[k] * kRayStep);
        }
    }
}

// Iterative radix-2 FFT on power-of-two sized buffers.
void fft_inplace(std::vector<std::complex<double>>& a, bool inverse) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = 2.0 * kPi / double(len) * (inverse ? 1.0 : -1.0);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const auto u = a[i + k];
                const auto v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
    if (inverse)
        for (auto& x : a) x /= double(n);
}

std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

}  // namespace

Geometry Geometry::make(int image_size, int num_angles, double angle_start,
                        double angle_end, int num_detectors,
                        double detector_spacing) {
    Geometry g;
    g.image_size = image_size;
    g.num_angles = num_angles;
    g.angle_start = angle_start;
    g.angle_end = angle_end;
    g.num_detectors = num_detectors < 0
                          ? static_cast<int>(std::ceil(image_size * std::sqrt(2.0)))
                          : num_detectors;
    g.detector_spacing = detector_spacing;
    g.validate();
    return g;
}

void Geometry::validate() const {
    if (image_size < 1) throw std::invalid_argument("geometry: image_size < 1");
    if (num_angles < 1) throw std::invalid_argument("geometry: num_angles < 1");
    if (!(angle_start >= 0.0 && angle_start < angle_end && angle_end <= 180.0))
        throw std::invalid_argument("geometry: need 0 <= start < end <= 180");
    if (num_detectors < image_size)
        throw std::invalid_argument("geometry: num_detectors must cover the image");
    if (detector_spacing <= 0.0)
        throw std::invalid_argument("geometry: detector_spacing <= 0");
}

double Geometry::angle_rad(int index) const {
    const double step = (angle_end - angle_start) / num_angles;
    return (angle_start + step * index) * kPi / 180.0;
}

double Geometry::detector_offset(int index) const {
    return (index - (num_detectors - 1) / 2.0) * detector_spacing;
}

Sinogram radon_forward(const Image& x, const Geometry& g) {
    if (x.n != g.image_size) throw std::invalid_argument("radon_forward: size mismatch");
    Sinogram y(g);
    for (int a = 0; a < g.num_angles; ++a)
        for (int d = 0; d < g.num_detectors; ++d) {
            double sum = 0.0;
            for_each_ray_weight(g, a, d,
                                [&](std::size_t p, double w) { sum += w * x.v[p]; });
            y.at(a, d) = sum;
        }
    return y;
}

Image radon_adjoint(const Sinogram& y, const Geometry& g) {
    check_shapes(y, g);
    Image img(g.image_size);
    for (int a = 0; a < g.num_angles; ++a)
        for (int d = 0; d < g.num_detectors; ++d) {
            const double val = y.at(a, d);
            if (val == 0.0) continue;
            for_each_ray_weight(g, a, d,
                                [&](std::size_t p, double w) { img.v[p] += w * val; });
        }
    return img;
}

Image fbp(const Sinogram& y, const Geometry& g, const FbpOptions& opts) {
    check_shapes(y, g);
    const int n = g.image_size;
    const int nd = g.num_detectors;
    const double ds = g.detector_spacing;
    const std::size_t P = next_pow2(static_cast<std::size_t>(2 * nd));

    // Frequency response of the discrete ramp (band-limited |f|), built by
    // transforming the spatial-domain kernel.
    std::vector<std::complex<double>> ramp(P, 0.0);
    ramp[0] = 1.0 / (4.0 * ds * ds);
    for (std::size_t i = 1; i < P / 2; i += 2) {
        const double v = -1.0 / (kPi * kPi * double(i) * double(i) * ds * ds);
        ramp[i] = v;
        ramp[P - i] = v;
    }
    fft_inplace(ramp, false);
    std::vector<double> filter(P);
    for (std::size_t k = 0; k < P; ++k) {
        double f = ramp[k].real();
        if (opts.hann) {
            const double frac =
                double(k <= P / 2 ? k : P - k) / double(P / 2);  // 0..1 of Nyquist
            f *= 0.5 * (1.0 + std::cos(kPi * frac));
        }
        filter[k] = f;
    }

    // Per-angle filtering.
    std::vector<double> filtered(static_cast<std::size_t>(g.num_angles) * nd);
    std::vector<std::complex<double>> row(P);
    for (int a = 0; a < g.num_angles; ++a) {
        std::fill(row.begin(), row.end(), std::complex<double>(0.0));
        for (int d = 0; d < nd; ++d) row[d] = y.at(a, d);
        fft_inplace(row, false);
        for (std::size_t k = 0; k < P; ++k) row[k] *= filter[k];
        fft_inplace(row, true);
        for (int d = 0; d < nd; ++d)
            filtered[static_cast<std::size_t>(a) * nd + d] = row[d].real() * ds;
    }

    // Pixel-driven back-projection.
    const double dtheta = (g.angle_end - g.angle_start) / g.num_angles * kPi / 180.0;
    const double half = (n - 1) / 2.0;
    Image out(n);
    for (int iy = 0; iy < n; ++iy) {
        for (int ix = 0; ix < n; ++ix) {
            const double xc = ix - half, yc = iy - half;
            double sum = 0.0;
            for (int a = 0; a < g.num_angles; ++a) {
                const double phi = g.angle_rad(a);
                const double s = xc * std::cos(phi) + yc * std::sin(phi);
                const double u = s / ds + (nd - 1) / 2.0;
                const int i0 = static_cast<int>(std::floor(u));
                const double fu = u - i0;
                double q = 0.0;
                if (i0 >= 0 && i0 < nd) q += (1.0 - fu) * filtered[std::size_t(a) * nd + i0];
                if (i0 + 1 >= 0 && i0 + 1 < nd)
                    q += fu * filtered[std::size_t(a) * nd + i0 + 1];
                sum += q;
            }
            double v = sum * dtheta;
            if (opts.clip_negative && v < 0.0) v = 0.0;
            out.at(iy, ix) = v;
        }
    }
    return out;
}

Sinogram add_noise(const Sinogram& y, double level, std::uint64_t seed) {
    if (level < 0.0) throw std::invalid_argument("noise level must be >= 0");
    if (level == 0.0) return y;
    double mean_abs = 0.0;
    for (double v : y.v) mean_abs += std::abs(v);
    mean_abs /= double(y.v.size());
    const double sigma = level * mean_abs;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    Sinogram out = y;
    for (auto& v : out.v) v += sigma * dist(rng);
    return out;
}

Image data_fidelity_gradient(const Image& x, const Sinogram& y, const Geometry& g) {
    check_shapes(y, g);
    Sinogram r = radon_forward(x, g);
    for (std::size_t i = 0; i < r.v.size(); ++i) r.v[i] -= y.v[i];
    return radon_adjoint(r, g);
}

void write_geometry(Container& c, const Geometry& g) {
    c.set("geometry", {6},
          {double(g.image_size), double(g.num_angles), g.angle_start, g.angle_end,
           double(g.num_detectors), g.detector_spacing});
}

Geometry read_geometry(const Container& c) {
    const auto& e = c.get("geometry");
    if (e.values.size() != 6) throw std::runtime_error("bad geometry entry");
    Geometry g;
    g.image_size = int(e.values[0]);
    g.num_angles = int(e.values[1]);
    g.angle_start = e.values[2];
    g.angle_end = e.values[3];
    g.num_detectors = int(e.values[4]);
    g.detector_spacing = e.values[5];
    g.validate();
    return g;
}

void save_image(const std::string& path, const Image& img) {
    Container c;
    c.set("image", {std::uint64_t(img.n), std::uint64_t(img.n)}, img.v);
    c.save(path);
}

Image load_image(const std::string& path) {
    Container c = Container::load(path);
    const auto& e = c.get("image");
    if (e.extents.size() != 2 || e.extents[0] != e.extents[1])
        throw std::runtime_error("'" + path + "': not a square image");
    return Image(int(e.extents[0]), e.values);
}

void save_sinogram(const std::string& path, const Sinogram& y) {
    Container c;
    c.set("sinogram", {std::uint64_t(y.geom.num_angles), std::uint64_t(y.geom.num_detectors)},
          y.v);
    write_geometry(c, y.geom);
    c.save(path);
}

Sinogram load_sinogram(const std::string& path) {
    Container c = Container::load(path);
    Geometry g = read_geometry(c);
    Sinogram y(g);
    y.v = c.get("sinogram").values;
    check_shapes(y, g);
    return y;
}

}  // namespace bdgd
