#include "bdgd/inference.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <stdexcept>

#include "bdgd/container.hpp"
#include "bdgd/phantoms.hpp"
#include "bdgd/png_io.hpp"

namespace bdgd::infer {

std::vector<double> PredictiveResult::total() const {
    std::vector<double> t(epistemic.size());
    for (std::size_t i = 0; i < t.size(); ++i)
        t[i] = epistemic[i] + aleatoric[i];
    return t;
}

PredictiveResult mc_predict(const net::Cascade& cascade, const Image& x0,
                            const Sinogram& y, const Geometry& geom, int T,
                            std::uint64_t seed) {
    if (T <= 0) throw std::invalid_argument("sample count must be positive");
    const std::size_t hw = x0.size();
    PredictiveResult r;

    if (cascade.mode() == net::Mode::DGD) {
        r.mean = cascade.reconstruct(x0, y, geom, nullptr);
        r.epistemic.assign(hw, 0.0);
        r.aleatoric.assign(hw, 0.0);
        r.samples = 1;
        return r;
    }

    std::vector<double> sum(hw, 0.0), sum_sq(hw, 0.0), var_sum(hw, 0.0);
    for (int t = 0; t < T; ++t) {
        std::mt19937_64 rng(
            derive_seed(seed, static_cast<std::uint64_t>(t), 30));
        std::vector<double> var;
        Image xt = cascade.reconstruct(x0, y, geom, &rng, &var);
        for (std::size_t i = 0; i < hw; ++i) {
            sum[i] += xt.v[i];
            sum_sq[i] += xt.v[i] * xt.v[i];
            var_sum[i] += var[i];
        }
    }
    const double inv = 1.0 / static_cast<double>(T);
    r.mean = Image(x0.n);
    r.epistemic.resize(hw);
    r.aleatoric.resize(hw);
    for (std::size_t i = 0; i < hw; ++i) {
        const double m = sum[i] * inv;
        r.mean.v[i] = m;
        r.epistemic[i] = std::max(0.0, sum_sq[i] * inv - m * m);
        r.aleatoric[i] = var_sum[i] * inv;
    }
    r.samples = T;
    return r;
}

void save_uncertainty_maps(const PredictiveResult& r,
                           const std::string& prefix) {
    const std::size_t hw = r.mean.size();
    if (r.epistemic.size() != hw || r.aleatoric.size() != hw)
        throw std::invalid_argument("inconsistent predictive result");
    const int n = r.mean.n;

    Container c;
    c.set("mean", {static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(n)},
          r.mean.v);
    c.set("epistemic",
          {static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(n)},
          r.epistemic);
    c.set("aleatoric",
          {static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(n)},
          r.aleatoric);
    c.set_scalar("samples", static_cast<double>(r.samples));
    c.save(prefix + "_maps.bin");

    std::ofstream bounds(prefix + "_bounds.txt");
    if (!bounds)
        throw std::runtime_error("cannot write " + prefix + "_bounds.txt");
    auto emit = [&](const char* name, const std::vector<double>& v) {
        double lo = v[0], hi = v[0];
        for (double x : v) {
            lo = std::min(lo, x);
            hi = std::max(hi, x);
        }
        if (hi <= lo) hi = lo + 1.0;  // constant map: arbitrary nonzero span
        png::write_normalized(prefix + "_" + name + ".png", v, n, n, lo, hi);
        bounds << name << " " << std::setprecision(17) << lo << " " << hi
               << "\n";
    };
    emit("mean", r.mean.v);
    emit("epistemic", r.epistemic);
    emit("aleatoric", r.aleatoric);
    emit("total", r.total());
}

PredictiveResult load_uncertainty_maps(const std::string& prefix) {
    const Container c = Container::load(prefix + "_maps.bin");
    const auto& mean = c.get("mean");
    if (mean.extents.size() != 2 || mean.extents[0] != mean.extents[1])
        throw std::runtime_error("malformed uncertainty maps: " + prefix);
    PredictiveResult r;
    r.mean = Image(static_cast<int>(mean.extents[0]), mean.values);
    r.epistemic = c.get("epistemic").values;
    r.aleatoric = c.get("aleatoric").values;
    r.samples = static_cast<int>(c.get_scalar("samples"));
    if (r.epistemic.size() != r.mean.size() ||
        r.aleatoric.size() != r.mean.size())
        throw std::runtime_error("malformed uncertainty maps: " + prefix);
    return r;
}

}  // namespace bdgd::infer
