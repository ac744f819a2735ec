#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "bdgd/phantoms.hpp"

using namespace bdgd;

TEST_CASE("random ellipse phantom determinism and range") {
    Image a = random_ellipse_phantom(123, 64);
    Image b = random_ellipse_phantom(123, 64);
    CHECK(a.v == b.v);

    Image c = random_ellipse_phantom(124, 64);
    CHECK(a.v != c.v);

    for (double v : a.v) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("ellipse interiors are brighter than the background") {
    const auto specs = random_ellipse_specs(55);
    Image img = render_ellipses(specs, 64);
    // Interior of the first ellipse vs. pixels outside every ellipse.
    const double half = (64 - 1) / 2.0;
    const double px = 2.0 / 64;
    double in_sum = 0.0, out_sum = 0.0;
    int in_n = 0, out_n = 0;
    for (int iy = 0; iy < 64; ++iy)
        for (int ix = 0; ix < 64; ++ix) {
            const double x = (ix - half) * px, y = (half - iy) * px;
            bool inside_any = false, inside_first = false;
            for (std::size_t e = 0; e < specs.size(); ++e) {
                const auto& s = specs[e];
                const double phi = s.angle_deg * 3.14159265358979323846 / 180.0;
                const double u = std::cos(phi) * (x - s.cx) + std::sin(phi) * (y - s.cy);
                const double v = -std::sin(phi) * (x - s.cx) + std::cos(phi) * (y - s.cy);
                if (u * u / (s.a * s.a) + v * v / (s.b * s.b) <= 0.9) {
                    inside_any = true;
                    if (e == 0) inside_first = true;
                }
            }
            if (inside_first) {
                in_sum += img.at(iy, ix);
                ++in_n;
            } else if (!inside_any) {
                out_sum += img.at(iy, ix);
                ++out_n;
            }
        }
    REQUIRE(in_n > 0);
    REQUIRE(out_n > 0);
    CHECK(in_sum / in_n > out_sum / out_n);
}

TEST_CASE("shepp-logan structure") {
    Image p = shepp_logan(128);
    SUBCASE("left-right symmetric") {
        double max_asym = 0.0;
        for (int y = 0; y < p.n; ++y)
            for (int x = 0; x < p.n; ++x)
                max_asym = std::max(max_asym,
                                    std::abs(p.at(y, x) - p.at(y, p.n - 1 - x)));
        CHECK(max_asym < 0.02);
    }
    SUBCASE("center value is in (0, 0.3)") {
        const double c = p.at(p.n / 2, p.n / 2);
        CHECK(c > 0.0);
        CHECK(c < 0.3);
    }
    SUBCASE("corners are zero") {
        CHECK(p.at(0, 0) == 0.0);
        CHECK(p.at(0, p.n - 1) == 0.0);
        CHECK(p.at(p.n - 1, 0) == 0.0);
        CHECK(p.at(p.n - 1, p.n - 1) == 0.0);
    }
}

TEST_CASE("text overlay marks a nonempty in-bounds glyph region") {
    Image mask = text_overlay_mask(64);
    double count = 0.0;
    for (double v : mask.v) count += v;
    CHECK(count > 0.0);

    Image img = shepp_logan(64);
    add_text_overlay(img, 0.9);
    for (std::size_t i = 0; i < img.v.size(); ++i)
        if (mask.v[i] > 0.0) CHECK(img.v[i] == 0.9);
}

TEST_CASE("dataset generation, round trip and reproducibility") {
    const std::string dir = "/tmp/bdgd_test_ds";
    std::filesystem::remove_all(dir);
    auto g = Geometry::make(32, 8);
    DatasetManifest m = generate_dataset(dir, 77, 2, 32, g, 0.01);
    REQUIRE(m.records.size() == 2);

    SUBCASE("round trip through the manifest") {
        DatasetManifest loaded = load_manifest(dir + "/manifest.txt");
        CHECK(loaded.seed == 77);
        CHECK(loaded.count == 2);
        CHECK(loaded.geom == g);
        SampleRecord rec = load_sample(loaded, 0);
        CHECK(rec.ground_truth.n == 32);
        // Stored x0 equals fbp(noisy) recomputed on load.
        Image x0 = fbp(rec.noisy, g);
        for (std::size_t i = 0; i < x0.v.size(); ++i)
            CHECK(std::abs(x0.v[i] - rec.x0.v[i]) < 1e-12);
    }

    SUBCASE("different seeds give different first images") {
        std::filesystem::remove_all(dir + "2");
        DatasetManifest m2 = generate_dataset(dir + "2", 78, 1, 32, g, 0.01);
        SampleRecord a = load_sample(m, 0);
        SampleRecord b = load_sample(m2, 0);
        CHECK(a.ground_truth.v != b.ground_truth.v);
        std::filesystem::remove_all(dir + "2");
    }

    SUBCASE("regeneration is bit-identical") {
        SampleRecord before = load_sample(m, 1);
        std::filesystem::remove_all(dir + "_regen");
        DatasetManifest m2 = generate_dataset(dir + "_regen", 77, 2, 32, g, 0.01);
        SampleRecord after = load_sample(m2, 1);
        CHECK(before.ground_truth.v == after.ground_truth.v);
        CHECK(before.clean.v == after.clean.v);
        CHECK(before.noisy.v == after.noisy.v);
        CHECK(before.x0.v == after.x0.v);
        std::filesystem::remove_all(dir + "_regen");
    }

    SUBCASE("unwritable output directory is an I/O error") {
        CHECK_THROWS_AS(generate_dataset("/proc/nope", 1, 1, 32, g, 0.01),
                        std::runtime_error);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("contract errors") {
    auto g = Geometry::make(32, 4);
    CHECK_THROWS_AS(random_ellipse_phantom(1, 8), std::invalid_argument);
    CHECK_THROWS_AS(shepp_logan(16), std::invalid_argument);
    CHECK_THROWS_AS(generate_dataset("/tmp/bdgd_x", 1, 0, 32, g, 0.01),
                    std::invalid_argument);
    CHECK_THROWS_AS(generate_dataset("/tmp/bdgd_x", 1, 1, 64, g, 0.01),
                    std::invalid_argument);
}
