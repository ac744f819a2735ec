#include "bdgd/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace bdgd {

double psnr(const double* x, const double* ref, std::size_t count, double peak) {
    if (count == 0) throw std::invalid_argument("psnr: empty input");
    if (peak <= 0.0) throw std::invalid_argument("psnr: peak must be positive");
    double mse = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        const double e = x[i] - ref[i];
        mse += e * e;
    }
    mse /= double(count);
    if (mse == 0.0) return kPsnrCap;
    return 10.0 * std::log10(peak * peak / mse);
}

double psnr(const Image& x, const Image& ref, double peak) {
    if (x.n != ref.n) throw std::invalid_argument("psnr: shape mismatch");
    return psnr(x.v.data(), ref.v.data(), x.v.size(), peak);
}

}  // namespace bdgd
