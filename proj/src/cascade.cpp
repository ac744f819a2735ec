#include "bdgd/cascade.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "bdgd/phantoms.hpp"

namespace bdgd::net {

namespace {

constexpr const char* kModeNames[] = {"dgd", "bdgd", "bdgd+"};

std::size_t kernel_count(const ConvSpec& s) {
    return s.out_ch * s.in_ch * s.k * s.k;
}

void check_spec(const ConvSpec& s) {
    if (s.in_ch == 0 || s.out_ch == 0 || s.k == 0 || s.k % 2 == 0)
        throw std::invalid_argument("conv spec needs positive channels and odd k");
}

nn::ConvDims dims_for(const ConvSpec& s, std::size_t batch, std::size_t h,
                      std::size_t w) {
    return nn::ConvDims{batch, s.in_ch, h, w, s.out_ch, s.k, s.k};
}

// Interleaves the iterate and the data-gradient into [B,2,H,W].
std::vector<double> stack_channels(const std::vector<double>& x,
                                   const std::vector<double>& g,
                                   std::size_t batch, std::size_t hw) {
    std::vector<double> in(batch * 2 * hw);
    for (std::size_t b = 0; b < batch; ++b) {
        std::copy_n(x.data() + b * hw, hw, in.data() + b * 2 * hw);
        std::copy_n(g.data() + b * hw, hw, in.data() + b * 2 * hw + hw);
    }
    return in;
}

void relu_inplace(std::vector<double>& v) {
    for (double& x : v) x = std::max(0.0, x);
}

}  // namespace

std::string mode_name(Mode m) {
    return kModeNames[static_cast<int>(m)];
}

Mode mode_from_name(const std::string& name) {
    for (int i = 0; i < 3; ++i)
        if (name == kModeNames[i]) return static_cast<Mode>(i);
    throw std::invalid_argument("unknown mode: " + name);
}

void DetConv::init(std::uint64_t seed) {
    check_spec(spec);
    std::mt19937_64 rng(seed);
    const std::size_t fan_in = spec.in_ch * spec.k * spec.k;
    std::normal_distribution<double> normal(
        0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    w.resize(kernel_count(spec));
    for (double& v : w) v = normal(rng);
    b.assign(spec.out_ch, 0.0);
}

BayesConv::BayesConv(ConvSpec s, std::uint64_t seed)
    : spec(s),
      w({s.out_ch, s.in_ch, s.k, s.k}, s.in_ch * s.k * s.k,
        derive_seed(seed, 0, 100)),
      b({s.out_ch}, s.in_ch * s.k * s.k, derive_seed(seed, 1, 100)) {
    check_spec(s);
    b.mu().assign(s.out_ch, 0.0);
}

BlockArch BlockArch::standard() {
    BlockArch a;
    a.det = {{2, 16, 5}, {16, 16, 3}, {16, 16, 3}};
    a.bayes = {16, 1, 3};
    a.var_det = {{2, 8, 3}};
    a.var_bayes = {8, 1, 3};
    return a;
}

BlockArch BlockArch::tiny() {
    BlockArch a;
    a.det = {};
    a.bayes = {2, 1, 1};
    a.var_det = {};
    a.var_bayes = {2, 1, 1};
    return a;
}

Block::Block(Mode mode, const BlockArch& arch, std::uint64_t seed) : mode_(mode) {
    for (std::size_t i = 0; i < arch.det.size(); ++i) {
        DetConv c;
        c.spec = arch.det[i];
        c.init(derive_seed(seed, i, 0));
        det.push_back(std::move(c));
    }
    if (mode == Mode::DGD) {
        DetConv h;
        h.spec = arch.bayes;
        h.init(derive_seed(seed, 0, 4));
        det_head = std::move(h);
    } else {
        bayes.emplace(arch.bayes, derive_seed(seed, 0, 1));
    }
    if (mode == Mode::BDGDPlus) {
        for (std::size_t i = 0; i < arch.var_det.size(); ++i) {
            DetConv c;
            c.spec = arch.var_det[i];
            c.init(derive_seed(seed, i, 2));
            var_det.push_back(std::move(c));
        }
        var_bayes.emplace(arch.var_bayes, derive_seed(seed, 0, 3));
    }
}

Block::ForwardOut Block::forward(const std::vector<double>& x,
                                 const std::vector<double>& g, std::size_t batch,
                                 std::size_t h, std::size_t w,
                                 std::mt19937_64* rng) const {
    const std::size_t hw = h * w;
    if (x.size() != batch * hw || g.size() != batch * hw)
        throw std::invalid_argument("forward: batch size mismatch");
    const std::vector<double> input = stack_channels(x, g, batch, hw);

    auto run_det = [&](const DetConv& c, const std::vector<double>& in) {
        std::vector<double> out(batch * c.spec.out_ch * hw);
        nn::conv2d_forward(in.data(), c.w.data(), c.b.data(), out.data(),
                           dims_for(c.spec, batch, h, w));
        return out;
    };

    std::vector<double> feat = input;
    for (const auto& c : det) {
        feat = run_det(c, feat);
        relu_inplace(feat);
    }

    std::vector<double> delta(batch * hw);
    if (mode_ == Mode::DGD) {
        nn::conv2d_forward(feat.data(), det_head->w.data(), det_head->b.data(),
                           delta.data(), dims_for(det_head->spec, batch, h, w));
    } else {
        const std::vector<double> kw =
            rng ? bayes->w.sample(*rng) : bayes->w.mu();
        const std::vector<double> kb =
            rng ? bayes->b.sample(*rng) : bayes->b.mu();
        nn::conv2d_forward(feat.data(), kw.data(), kb.data(), delta.data(),
                           dims_for(bayes->spec, batch, h, w));
    }

    ForwardOut out;
    out.x.resize(batch * hw);
    for (std::size_t i = 0; i < out.x.size(); ++i)
        out.x[i] = std::max(0.0, x[i] + delta[i]);

    if (mode_ == Mode::BDGD) {
        out.logvar.assign(batch * hw,
                          std::clamp(log_sigma2, kLogVarMin, kLogVarMax));
    } else if (mode_ == Mode::BDGDPlus) {
        std::vector<double> vfeat = input;
        for (const auto& c : var_det) {
            vfeat = run_det(c, vfeat);
            relu_inplace(vfeat);
        }
        const std::vector<double> kw =
            rng ? var_bayes->w.sample(*rng) : var_bayes->w.mu();
        const std::vector<double> kb =
            rng ? var_bayes->b.sample(*rng) : var_bayes->b.mu();
        out.logvar.resize(batch * hw);
        nn::conv2d_forward(vfeat.data(), kw.data(), kb.data(), out.logvar.data(),
                           dims_for(var_bayes->spec, batch, h, w));
        for (double& v : out.logvar) v = std::clamp(v, kLogVarMin, kLogVarMax);
    }
    return out;
}

Block::TapeForward Block::forward_on_tape(ad::Tape& tape,
                                          const std::vector<double>& x,
                                          const std::vector<double>& g,
                                          std::size_t batch, std::size_t h,
                                          std::size_t w,
                                          std::mt19937_64& rng) const {
    const std::size_t hw = h * w;
    if (x.size() != batch * hw || g.size() != batch * hw)
        throw std::invalid_argument("forward_on_tape: batch size mismatch");
    ad::Var input =
        tape.constant({batch, 2, h, w}, stack_channels(x, g, batch, hw));
    ad::Var x_const = tape.constant({batch, 1, h, w}, x);

    TapeForward out;
    auto run_det = [&](const DetConv& c, ad::Var in, bool relu) {
        ad::Var kw = tape.leaf({c.spec.out_ch, c.spec.in_ch, c.spec.k, c.spec.k},
                               c.w);
        ad::Var kb = tape.leaf({c.spec.out_ch}, c.b);
        out.det_w.push_back(kw);
        out.det_b.push_back(kb);
        ad::Var o = tape.conv2d(in, kw, kb);
        return relu ? tape.relu(o) : o;
    };
    auto run_bayes = [&](const BayesConv& c, ad::Var in) {
        vi::SampledWeights sw = c.w.sample_on_tape(tape, rng);
        vi::SampledWeights sb = c.b.sample_on_tape(tape, rng);
        ad::Var o = tape.conv2d(in, sw.theta, sb.theta);
        ad::Var kl = tape.add(c.w.kl_on_tape(tape, sw), c.b.kl_on_tape(tape, sb));
        out.bayes_w.push_back(sw);
        out.bayes_w.push_back(sb);
        out.kl = out.kl.defined() ? tape.add(out.kl, kl) : kl;
        return o;
    };

    ad::Var feat = input;
    for (const auto& c : det) feat = run_det(c, feat, true);

    ad::Var delta = mode_ == Mode::DGD ? run_det(*det_head, feat, false)
                                       : run_bayes(*bayes, feat);
    out.x = tape.relu(tape.add(x_const, delta));

    if (mode_ == Mode::BDGD) {
        // Scalar observation log-variance enters as its own leaf; its gradient
        // is read back from out.logvar directly.
        out.logvar = tape.leaf({1}, {log_sigma2});
    } else if (mode_ == Mode::BDGDPlus) {
        ad::Var vfeat = input;
        for (const auto& c : var_det) vfeat = run_det(c, vfeat, true);
        out.logvar =
            tape.clamp(run_bayes(*var_bayes, vfeat), kLogVarMin, kLogVarMax);
    }
    return out;
}

void Block::freeze_posteriors_as_priors() {
    if (bayes) {
        bayes->w.freeze_posterior_as_prior();
        bayes->b.freeze_posterior_as_prior();
    }
    if (var_bayes) {
        var_bayes->w.freeze_posterior_as_prior();
        var_bayes->b.freeze_posterior_as_prior();
    }
}

namespace {

void save_bayes(Container& c, const std::string& p, const BayesConv& bc) {
    const auto put = [&](const std::string& n, const std::vector<double>& v) {
        c.set(n, {v.size()}, v);
    };
    put(p + ".w.mu", bc.w.mu());
    put(p + ".w.rho", bc.w.rho());
    put(p + ".w.pmu", bc.w.prior_mu());
    put(p + ".w.psig", bc.w.prior_sigma());
    put(p + ".b.mu", bc.b.mu());
    put(p + ".b.rho", bc.b.rho());
    put(p + ".b.pmu", bc.b.prior_mu());
    put(p + ".b.psig", bc.b.prior_sigma());
}

void load_bayes(const Container& c, const std::string& p, BayesConv& bc) {
    const auto vec = [&](const std::string& n) { return c.get(n).values; };
    bc.w.mu() = vec(p + ".w.mu");
    bc.w.rho() = vec(p + ".w.rho");
    bc.w.set_prior(vec(p + ".w.pmu"), vec(p + ".w.psig"));
    bc.b.mu() = vec(p + ".b.mu");
    bc.b.rho() = vec(p + ".b.rho");
    bc.b.set_prior(vec(p + ".b.pmu"), vec(p + ".b.psig"));
    if (bc.w.mu().size() != kernel_count(bc.spec) ||
        bc.b.mu().size() != bc.spec.out_ch)
        throw std::runtime_error("checkpoint layer size mismatch at " + p);
}

}  // namespace

void Block::save(Container& c, const std::string& prefix) const {
    for (std::size_t i = 0; i < det.size(); ++i) {
        c.set(prefix + ".det" + std::to_string(i) + ".w", {det[i].w.size()},
              det[i].w);
        c.set(prefix + ".det" + std::to_string(i) + ".b", {det[i].b.size()},
              det[i].b);
    }
    if (det_head) {
        c.set(prefix + ".head.w", {det_head->w.size()}, det_head->w);
        c.set(prefix + ".head.b", {det_head->b.size()}, det_head->b);
    }
    if (bayes) save_bayes(c, prefix + ".bayes", *bayes);
    if (mode_ == Mode::BDGD) c.set_scalar(prefix + ".logsig2", log_sigma2);
    for (std::size_t i = 0; i < var_det.size(); ++i) {
        c.set(prefix + ".var.det" + std::to_string(i) + ".w",
              {var_det[i].w.size()}, var_det[i].w);
        c.set(prefix + ".var.det" + std::to_string(i) + ".b",
              {var_det[i].b.size()}, var_det[i].b);
    }
    if (var_bayes) save_bayes(c, prefix + ".var.bayes", *var_bayes);
}

void Block::load(const Container& c, const std::string& prefix) {
    for (std::size_t i = 0; i < det.size(); ++i) {
        det[i].w = c.get(prefix + ".det" + std::to_string(i) + ".w").values;
        det[i].b = c.get(prefix + ".det" + std::to_string(i) + ".b").values;
        if (det[i].w.size() != kernel_count(det[i].spec))
            throw std::runtime_error("checkpoint layer size mismatch at " + prefix);
    }
    if (det_head) {
        det_head->w = c.get(prefix + ".head.w").values;
        det_head->b = c.get(prefix + ".head.b").values;
    }
    if (bayes) load_bayes(c, prefix + ".bayes", *bayes);
    if (mode_ == Mode::BDGD) log_sigma2 = c.get_scalar(prefix + ".logsig2");
    for (std::size_t i = 0; i < var_det.size(); ++i) {
        var_det[i].w = c.get(prefix + ".var.det" + std::to_string(i) + ".w").values;
        var_det[i].b = c.get(prefix + ".var.det" + std::to_string(i) + ".b").values;
    }
    if (var_bayes) load_bayes(c, prefix + ".var.bayes", *var_bayes);
}

Cascade::Cascade(Mode mode, BlockArch arch, int num_blocks, std::uint64_t seed)
    : mode_(mode), arch_(std::move(arch)) {
    if (num_blocks <= 0) throw std::invalid_argument("need at least one block");
    for (int k = 0; k < num_blocks; ++k)
        blocks_.emplace_back(mode, arch_,
                             derive_seed(seed, static_cast<std::uint64_t>(k), 7));
}

Image Cascade::run_prefix(const Image& x0, const Sinogram& y,
                          const Geometry& geom, int upto,
                          std::mt19937_64* rng) const {
    if (upto < 0 || upto > num_blocks())
        throw std::invalid_argument("block prefix out of range");
    const std::size_t n = static_cast<std::size_t>(x0.n);
    Image x = x0;
    for (int k = 0; k < upto; ++k) {
        const Image grad = data_fidelity_gradient(x, y, geom);
        auto out = blocks_[static_cast<std::size_t>(k)].forward(x.v, grad.v, 1,
                                                                n, n, rng);
        x.v = std::move(out.x);
    }
    return x;
}

Image Cascade::reconstruct(const Image& x0, const Sinogram& y,
                           const Geometry& geom, std::mt19937_64* rng,
                           std::vector<double>* variance_out) const {
    const std::size_t n = static_cast<std::size_t>(x0.n);
    Image x = run_prefix(x0, y, geom, num_blocks() - 1, rng);
    const Image grad = data_fidelity_gradient(x, y, geom);
    auto out = blocks_.back().forward(x.v, grad.v, 1, n, n, rng);
    x.v = std::move(out.x);
    if (variance_out) {
        variance_out->clear();
        for (double lv : out.logvar) variance_out->push_back(std::exp(lv));
    }
    return x;
}

namespace {

std::vector<double> flatten_specs(const std::vector<ConvSpec>& specs) {
    std::vector<double> v;
    for (const auto& s : specs) {
        v.push_back(static_cast<double>(s.in_ch));
        v.push_back(static_cast<double>(s.out_ch));
        v.push_back(static_cast<double>(s.k));
    }
    return v;
}

std::vector<ConvSpec> unflatten_specs(const std::vector<double>& v) {
    if (v.size() % 3 != 0) throw std::runtime_error("malformed arch entry");
    std::vector<ConvSpec> specs;
    for (std::size_t i = 0; i < v.size(); i += 3)
        specs.push_back({static_cast<std::size_t>(v[i]),
                         static_cast<std::size_t>(v[i + 1]),
                         static_cast<std::size_t>(v[i + 2])});
    return specs;
}

}  // namespace

void Cascade::save(const std::string& path) const {
    Container c;
    c.set("meta", {3},
          {static_cast<double>(static_cast<int>(mode_)),
           static_cast<double>(num_blocks()), static_cast<double>(trained_blocks)});
    c.set("arch.det", {arch_.det.size() * 3}, flatten_specs(arch_.det));
    c.set("arch.bayes", {3}, flatten_specs({arch_.bayes}));
    c.set("arch.var_det", {arch_.var_det.size() * 3},
          flatten_specs(arch_.var_det));
    c.set("arch.var_bayes", {3}, flatten_specs({arch_.var_bayes}));
    for (int k = 0; k < num_blocks(); ++k)
        blocks_[static_cast<std::size_t>(k)].save(c, "block" + std::to_string(k));
    c.save(path);
}

Cascade Cascade::load(const std::string& path) {
    const Container c = Container::load(path);
    const auto& meta = c.get("meta").values;
    if (meta.size() != 3) throw std::runtime_error("malformed checkpoint meta");
    const Mode mode = static_cast<Mode>(static_cast<int>(meta[0]));
    const int num_blocks = static_cast<int>(meta[1]);
    BlockArch arch;
    arch.det = unflatten_specs(c.get("arch.det").values);
    arch.bayes = unflatten_specs(c.get("arch.bayes").values).at(0);
    arch.var_det = unflatten_specs(c.get("arch.var_det").values);
    arch.var_bayes = unflatten_specs(c.get("arch.var_bayes").values).at(0);
    Cascade cas(mode, arch, num_blocks, 0);
    cas.trained_blocks = static_cast<int>(meta[2]);
    for (int k = 0; k < num_blocks; ++k)
        cas.blocks_[static_cast<std::size_t>(k)].load(c,
                                                      "block" + std::to_string(k));
    return cas;
}

}  // namespace bdgd::net
