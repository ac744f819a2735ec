#pragma once

#include <cstddef>

#include "bdgd/image.hpp"

namespace bdgd {

// 10*log10(peak^2 / MSE), capped at 200 dB when MSE == 0.
constexpr double kPsnrCap = 200.0;
double psnr(const double* x, const double* ref, std::size_t count, double peak);
double psnr(const Image& x, const Image& ref, double peak = 1.0);

}  // namespace bdgd
