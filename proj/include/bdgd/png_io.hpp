#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace bdgd::png {

// Minimal 8-bit grayscale PNG support (the only flavor this project emits).
struct Gray8 {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;  // row-major
};

void write_gray8(const std::string& path, const Gray8& img);
Gray8 read_gray8(const std::string& path);

// Linearly maps values to [0, 255] over [lo, hi] (clipping outside) and
// writes the result. hi must exceed lo.
void write_normalized(const std::string& path, const std::vector<double>& v,
                      int width, int height, double lo, double hi);

}  // namespace bdgd::png
