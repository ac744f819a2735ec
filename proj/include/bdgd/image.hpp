#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace bdgd {

// Square 2D intensity grid, row-major.
struct Image {
    int n = 0;
    std::vector<double> v;

    Image() = default;
    explicit Image(int size, double fill = 0.0)
        : n(size), v(static_cast<std::size_t>(size) * size, fill) {}
    Image(int size, std::vector<double> values) : n(size), v(std::move(values)) {
        if (v.size() != static_cast<std::size_t>(n) * n)
            throw std::invalid_argument("image data does not match size");
    }

    double& at(int row, int col) { return v[static_cast<std::size_t>(row) * n + col]; }
    double at(int row, int col) const { return v[static_cast<std::size_t>(row) * n + col]; }
    std::size_t size() const { return v.size(); }
};

}  // namespace bdgd
