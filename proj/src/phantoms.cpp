#include "bdgd/phantoms.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace bdgd {

namespace {

constexpr double kPi = 3.14159265358979323846;

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index,
                          std::uint64_t stream) {
    std::uint64_t s = seed ^ (index * 0x9e3779b97f4a7c15ULL) ^
                      (stream * 0xbf58476d1ce4e5b9ULL);
    // one splitmix round to decorrelate nearby (seed, index) pairs
    s += 0x9e3779b97f4a7c15ULL;
    s = (s ^ (s >> 30)) * 0xbf58476d1ce4e5b9ULL;
    s = (s ^ (s >> 27)) * 0x94d049bb133111ebULL;
    return s ^ (s >> 31);
}

Image render_ellipses(const std::vector<EllipseSpec>& specs, int size) {
    Image img(size);
    const double half = (size - 1) / 2.0;
    const double px = 2.0 / size;  // pixel extent in unit-square coords
    struct Pre {
        double cx, cy, c, s, inv_a2, inv_b2, val;
    };
    std::vector<Pre> pre;
    pre.reserve(specs.size());
    for (const auto& e : specs) {
        if (e.a <= 0.0 || e.b <= 0.0)
            throw std::invalid_argument("ellipse semi-axes must be positive");
        const double phi = e.angle_deg * kPi / 180.0;
        pre.push_back({e.cx, e.cy, std::cos(phi), std::sin(phi), 1.0 / (e.a * e.a),
                       1.0 / (e.b * e.b), e.intensity});
    }
    for (int iy = 0; iy < size; ++iy) {
        const double yc = (half - iy) * px;
        for (int ix = 0; ix < size; ++ix) {
            const double xc = (ix - half) * px;
            double acc = 0.0;
            for (const auto& p : pre) {
                const double x = xc - p.cx;
                const double y = yc - p.cy;
                const double u = p.c * x + p.s * y;
                const double v = -p.s * x + p.c * y;
                if (u * u * p.inv_a2 + v * v * p.inv_b2 <= 1.0) acc += p.val;
            }
            img.at(iy, ix) = std::min(1.0, std::max(0.0, acc));
        }
    }
    return img;
}

std::vector<EllipseSpec> random_ellipse_specs(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> count_dist(3, 8);
    std::uniform_real_distribution<double> center(-0.6, 0.6);
    std::uniform_real_distribution<double> axis(0.08, 0.45);
    std::uniform_real_distribution<double> rot(0.0, 180.0);
    std::uniform_real_distribution<double> intensity(0.1, 1.0);
    const int count = count_dist(rng);
    std::vector<EllipseSpec> specs(count);
    for (auto& e : specs) {
        e.cx = center(rng);
        e.cy = center(rng);
        e.a = axis(rng);
        e.b = axis(rng);
        e.angle_deg = rot(rng);
        e.intensity = intensity(rng);
    }
    return specs;
}

Image random_ellipse_phantom(std::uint64_t seed, int size) {
    if (size < 16) throw std::invalid_argument("phantom size must be >= 16");
    return render_ellipses(random_ellipse_specs(seed), size);
}

const std::vector<EllipseSpec>& shepp_logan_ellipses() {
    // Modified (high-contrast) intensity table. The tilted ventricles and the
    // outer bottom ellipses are mirrored so the phantom is exactly left-right
    // symmetric.
    static const std::vector<EllipseSpec> table = {
        {0.0, 0.0, 0.69, 0.92, 0.0, 1.0},
        {0.0, -0.0184, 0.6624, 0.8740, 0.0, -0.8},
        {0.22, 0.0, 0.11, 0.31, -18.0, -0.2},
        {-0.22, 0.0, 0.11, 0.31, 18.0, -0.2},
        {0.0, 0.35, 0.21, 0.25, 0.0, 0.1},
        {0.0, 0.1, 0.046, 0.046, 0.0, 0.1},
        {0.0, -0.1, 0.046, 0.046, 0.0, 0.1},
        {-0.08, -0.605, 0.046, 0.023, 0.0, 0.1},
        {0.0, -0.606, 0.023, 0.023, 0.0, 0.1},
        {0.08, -0.605, 0.046, 0.023, 0.0, 0.1},
    };
    return table;
}

Image shepp_logan(int size) {
    if (size < 32) throw std::invalid_argument("shepp_logan size must be >= 32");
    return render_ellipses(shepp_logan_ellipses(), size);
}

namespace {

// 5x7 glyph bitmaps for the "OOD" overlay.
const char* const kGlyphO[7] = {".###.", "#...#", "#...#", "#...#",
                                "#...#", "#...#", ".###."};
const char* const kGlyphD[7] = {"###..", "#..#.", "#...#", "#...#",
                                "#...#", "#..#.", "###.."};

}  // namespace

Image text_overlay_mask(int size) {
    Image mask(size);
    const int scale = std::max(1, size / 32);
    const char* const* glyphs[3] = {kGlyphO, kGlyphO, kGlyphD};
    const int gx0 = size / 8, gy0 = size / 6;
    for (int gi = 0; gi < 3; ++gi) {
        const int ox = gx0 + gi * 6 * scale;
        for (int r = 0; r < 7; ++r)
            for (int c = 0; c < 5; ++c) {
                if (glyphs[gi][r][c] != '#') continue;
                for (int sy = 0; sy < scale; ++sy)
                    for (int sx = 0; sx < scale; ++sx) {
                        const int y = gy0 + r * scale + sy;
                        const int x = ox + c * scale + sx;
                        if (y >= 0 && y < size && x >= 0 && x < size)
                            mask.at(y, x) = 1.0;
                    }
            }
    }
    return mask;
}

void add_text_overlay(Image& img, double intensity) {
    Image mask = text_overlay_mask(img.n);
    for (std::size_t i = 0; i < img.v.size(); ++i)
        if (mask.v[i] > 0.0) img.v[i] = intensity;
}

std::string DatasetManifest::record_path(int index) const {
    return dir + "/" + records.at(static_cast<std::size_t>(index));
}

DatasetManifest generate_dataset(const std::string& dir, std::uint64_t seed,
                                 int count, int size, const Geometry& geom,
                                 double noise_level) {
    if (count < 1) throw std::invalid_argument("dataset count must be >= 1");
    if (geom.image_size != size)
        throw std::invalid_argument("geometry image size does not match dataset size");
    std::error_code ec;
    std::filesystem::create_directories(dir + "/samples", ec);
    if (!std::filesystem::is_directory(dir + "/samples"))
        throw std::runtime_error("cannot create dataset directory '" + dir + "'");

    DatasetManifest m;
    m.seed = seed;
    m.count = count;
    m.size = size;
    m.noise_level = noise_level;
    m.geom = geom;
    m.dir = dir;
    for (int i = 0; i < count; ++i) {
        Image gt = random_ellipse_phantom(derive_seed(seed, std::uint64_t(i), 0), size);
        Sinogram clean = radon_forward(gt, geom);
        Sinogram noisy = add_noise(clean, noise_level, derive_seed(seed, std::uint64_t(i), 1));
        Image x0 = fbp(noisy, geom);

        char name[64];
        std::snprintf(name, sizeof(name), "samples/sample_%06d.bin", i);
        Container c;
        c.set("image", {std::uint64_t(size), std::uint64_t(size)}, gt.v);
        c.set("sinogram_clean",
              {std::uint64_t(geom.num_angles), std::uint64_t(geom.num_detectors)},
              clean.v);
        c.set("sinogram_noisy",
              {std::uint64_t(geom.num_angles), std::uint64_t(geom.num_detectors)},
              noisy.v);
        c.set("x0", {std::uint64_t(size), std::uint64_t(size)}, x0.v);
        write_geometry(c, geom);
        c.save(dir + "/" + name);
        m.records.emplace_back(name);
    }
    save_manifest(m, dir + "/manifest.txt");
    return m;
}

void save_manifest(const DatasetManifest& m, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write manifest '" + path + "'");
    os << "seed=" << m.seed << "\n";
    os << "count=" << m.count << "\n";
    os << "size=" << m.size << "\n";
    os << "noise_level=" << m.noise_level << "\n";
    os << "num_angles=" << m.geom.num_angles << "\n";
    os << "angle_start=" << m.geom.angle_start << "\n";
    os << "angle_end=" << m.geom.angle_end << "\n";
    os << "num_detectors=" << m.geom.num_detectors << "\n";
    os << "detector_spacing=" << m.geom.detector_spacing << "\n";
    for (const auto& r : m.records) os << "record=" << r << "\n";
}

DatasetManifest load_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open manifest '" + path + "'");
    DatasetManifest m;
    m.dir = std::filesystem::path(path).parent_path().string();
    if (m.dir.empty()) m.dir = ".";
    double spacing = 1.0, a0 = 0.0, a1 = 180.0;
    int angles = 0, nd = -1;
    std::string line;
    while (std::getline(is, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        if (key == "seed") m.seed = std::stoull(val);
        else if (key == "count") m.count = std::stoi(val);
        else if (key == "size") m.size = std::stoi(val);
        else if (key == "noise_level") m.noise_level = std::stod(val);
        else if (key == "num_angles") angles = std::stoi(val);
        else if (key == "angle_start") a0 = std::stod(val);
        else if (key == "angle_end") a1 = std::stod(val);
        else if (key == "num_detectors") nd = std::stoi(val);
        else if (key == "detector_spacing") spacing = std::stod(val);
        else if (key == "record") m.records.push_back(val);
    }
    m.geom = Geometry::make(m.size, angles, a0, a1, nd, spacing);
    if (int(m.records.size()) != m.count)
        throw std::runtime_error("manifest record count mismatch in '" + path + "'");
    return m;
}

SampleRecord load_sample(const DatasetManifest& m, int index) {
    Container c = Container::load(m.record_path(index));
    Geometry g = read_geometry(c);
    SampleRecord rec;
    rec.ground_truth = Image(m.size, c.get("image").values);
    rec.clean = Sinogram(g);
    rec.clean.v = c.get("sinogram_clean").values;
    rec.noisy = Sinogram(g);
    rec.noisy.v = c.get("sinogram_noisy").values;
    rec.x0 = Image(m.size, c.get("x0").values);
    return rec;
}

}  // namespace bdgd
