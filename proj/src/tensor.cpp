#include "bdgd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace bdgd {

namespace nn {

void conv2d_forward(const double* in, const double* kernel, const double* bias,
                    double* out, const ConvDims& d) {
    const std::size_t H = d.H, W = d.W;
    const std::size_t ph = d.kh / 2, pw = d.kw / 2;
    for (std::size_t n = 0; n < d.N; ++n) {
        for (std::size_t f = 0; f < d.F; ++f) {
            double* oplane = out + ((n * d.F + f) * H) * W;
            const double b = bias ? bias[f] : 0.0;
            std::fill(oplane, oplane + H * W, b);
            for (std::size_t c = 0; c < d.C; ++c) {
                const double* iplane = in + ((n * d.C + c) * H) * W;
                const double* kplane = kernel + ((f * d.C + c) * d.kh) * d.kw;
                for (std::size_t ky = 0; ky < d.kh; ++ky) {
                    const std::ptrdiff_t dy = std::ptrdiff_t(ky) - std::ptrdiff_t(ph);
                    const std::size_t y0 = dy < 0 ? std::size_t(-dy) : 0;
                    const std::size_t y1 = dy > 0 ? H - std::size_t(dy) : H;
                    for (std::size_t kx = 0; kx < d.kw; ++kx) {
                        const double kv = kplane[ky * d.kw + kx];
                        if (kv == 0.0) continue;
                        const std::ptrdiff_t dx = std::ptrdiff_t(kx) - std::ptrdiff_t(pw);
                        const std::size_t x0 = dx < 0 ? std::size_t(-dx) : 0;
                        const std::size_t x1 = dx > 0 ? W - std::size_t(dx) : W;
                        for (std::size_t y = y0; y < y1; ++y) {
                            double* orow = oplane + y * W;
                            const double* irow = iplane + std::size_t(std::ptrdiff_t(y) + dy) * W + dx;
                            for (std::size_t x = x0; x < x1; ++x)
                                orow[x] += kv * irow[x];
                        }
                    }
                }
            }
        }
    }
}

void conv2d_backward_input(const double* grad_out, const double* kernel,
                           double* grad_in, const ConvDims& d) {
    const std::size_t H = d.H, W = d.W;
    const std::size_t ph = d.kh / 2, pw = d.kw / 2;
    for (std::size_t n = 0; n < d.N; ++n) {
        for (std::size_t c = 0; c < d.C; ++c) {
            double* gplane = grad_in + ((n * d.C + c) * H) * W;
            for (std::size_t f = 0; f < d.F; ++f) {
                const double* goplane = grad_out + ((n * d.F + f) * H) * W;
                const double* kplane = kernel + ((f * d.C + c) * d.kh) * d.kw;
                for (std::size_t ky = 0; ky < d.kh; ++ky) {
                    const std::ptrdiff_t dy = std::ptrdiff_t(ky) - std::ptrdiff_t(ph);
                    const std::size_t y0 = dy < 0 ? std::size_t(-dy) : 0;
                    const std::size_t y1 = dy > 0 ? H - std::size_t(dy) : H;
                    for (std::size_t kx = 0; kx < d.kw; ++kx) {
                        const double kv = kplane[ky * d.kw + kx];
                        if (kv == 0.0) continue;
                        const std::ptrdiff_t dx = std::ptrdiff_t(kx) - std::ptrdiff_t(pw);
                        const std::size_t x0 = dx < 0 ? std::size_t(-dx) : 0;
                        const std::size_t x1 = dx > 0 ? W - std::size_t(dx) : W;
                        for (std::size_t y = y0; y < y1; ++y) {
                            const double* gorow = goplane + y * W;
                            double* girow = gplane + std::size_t(std::ptrdiff_t(y) + dy) * W + dx;
                            for (std::size_t x = x0; x < x1; ++x)
                                girow[x] += kv * gorow[x];
                        }
                    }
                }
            }
        }
    }
}

void conv2d_backward_kernel(const double* grad_out, const double* in,
                            double* grad_kernel, double* grad_bias,
                            const ConvDims& d) {
    const std::size_t H = d.H, W = d.W;
    const std::size_t ph = d.kh / 2, pw = d.kw / 2;
    for (std::size_t n = 0; n < d.N; ++n) {
        for (std::size_t f = 0; f < d.F; ++f) {
            const double* goplane = grad_out + ((n * d.F + f) * H) * W;
            if (grad_bias) {
                double s = 0.0;
                for (std::size_t i = 0; i < H * W; ++i) s += goplane[i];
                grad_bias[f] += s;
            }
            for (std::size_t c = 0; c < d.C; ++c) {
                const double* iplane = in + ((n * d.C + c) * H) * W;
                double* kplane = grad_kernel + ((f * d.C + c) * d.kh) * d.kw;
                for (std::size_t ky = 0; ky < d.kh; ++ky) {
                    const std::ptrdiff_t dy = std::ptrdiff_t(ky) - std::ptrdiff_t(ph);
                    const std::size_t y0 = dy < 0 ? std::size_t(-dy) : 0;
                    const std::size_t y1 = dy > 0 ? H - std::size_t(dy) : H;
                    for (std::size_t kx = 0; kx < d.kw; ++kx) {
                        const std::ptrdiff_t dx = std::ptrdiff_t(kx) - std::ptrdiff_t(pw);
                        const std::size_t x0 = dx < 0 ? std::size_t(-dx) : 0;
                        const std::size_t x1 = dx > 0 ? W - std::size_t(dx) : W;
                        double s = 0.0;
                        for (std::size_t y = y0; y < y1; ++y) {
                            const double* gorow = goplane + y * W;
                            const double* irow = iplane + std::size_t(std::ptrdiff_t(y) + dy) * W + dx;
                            for (std::size_t x = x0; x < x1; ++x)
                                s += gorow[x] * irow[x];
                        }
                        kplane[ky * d.kw + kx] += s;
                    }
                }
            }
        }
    }
}

}  // namespace nn

namespace ad {

std::size_t shape_size(const Shape& s) {
    std::size_t n = 1;
    for (auto e : s) n *= e;
    return n;
}

const Shape& Var::shape() const { return tape_->node(id_).shape; }
const std::vector<double>& Var::value() const { return tape_->node(id_).values; }
const std::vector<double>& Var::grad() const { return tape_->node(id_).grad; }
std::size_t Var::size() const { return value().size(); }

bool all_finite(const Var& v) {
    for (double x : v.value())
        if (!std::isfinite(x)) return false;
    return true;
}

Var Tape::make(Shape shape, std::vector<double> values, std::function<void()> back) {
    if (shape_size(shape) != values.size())
        throw std::invalid_argument("tensor values do not match shape");
    nodes_.push_back(Node{std::move(shape), std::move(values), {}, std::move(back)});
    return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::check_same_tape(const Var& v) const {
    if (v.tape() != this) throw std::invalid_argument("operands live on different tapes");
}

Var Tape::leaf(Shape shape, std::vector<double> values) {
    return make(std::move(shape), std::move(values), {});
}

Var Tape::constant(Shape shape, std::vector<double> values) {
    return leaf(std::move(shape), std::move(values));
}

Var Tape::scalar(double v) { return leaf({1}, {v}); }

Var Tape::conv2d(Var input, Var kernel, Var bias) {
    check_same_tape(input);
    check_same_tape(kernel);
    check_same_tape(bias);
    const auto& is = input.shape();
    const auto& ks = kernel.shape();
    if (is.size() != 4 || ks.size() != 4)
        throw std::invalid_argument("conv2d expects NCHW input and FCkk kernel");
    nn::ConvDims d{is[0], is[1], is[2], is[3], ks[0], ks[2], ks[3]};
    if (ks[1] != d.C) throw std::invalid_argument("conv2d channel mismatch");
    if (d.kh % 2 == 0 || d.kw % 2 == 0)
        throw std::invalid_argument("conv2d kernel extents must be odd");
    if (bias.shape() != Shape{d.F}) throw std::invalid_argument("conv2d bias mismatch");

    std::vector<double> out(d.N * d.F * d.H * d.W);
    nn::conv2d_forward(input.value().data(), kernel.value().data(),
                       bias.value().data(), out.data(), d);
    const int in_id = input.id(), k_id = kernel.id(), b_id = bias.id();
    Tape* t = this;
    Var o = make({d.N, d.F, d.H, d.W}, std::move(out), {});
    const int out_id = o.id();
    node(out_id).back = [t, in_id, k_id, b_id, out_id, d]() {
        const auto& go = t->node(out_id).grad;
        nn::conv2d_backward_input(go.data(), t->node(k_id).values.data(),
                                  t->node(in_id).grad.data(), d);
        nn::conv2d_backward_kernel(go.data(), t->node(in_id).values.data(),
                                   t->node(k_id).grad.data(),
                                   t->node(b_id).grad.data(), d);
    };
    return o;
}

Var Tape::relu(Var x) {
    check_same_tape(x);
    std::vector<double> out(x.size());
    const auto& v = x.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[i] > 0.0 ? v[i] : 0.0;
    Tape* t = this;
    const int x_id = x.id();
    Var o = make(x.shape(), std::move(out), {});
    const int out_id = o.id();
    // Subgradient at 0 is 0.
    node(out_id).back = [t, x_id, out_id]() {
        const auto& go = t->node(out_id).grad;
        const auto& xv = t->node(x_id).values;
        auto& gx = t->node(x_id).grad;
        for (std::size_t i = 0; i < go.size(); ++i)
            if (xv[i] > 0.0) gx[i] += go[i];
    };
    return o;
}

namespace {

// Broadcast layout: equal shapes, or either operand scalar.
struct Bcast {
    std::size_t n;
    bool a_scalar, b_scalar;
};

Bcast broadcast(const Var& a, const Var& b) {
    if (a.shape() == b.shape()) return {a.size(), false, false};
    if (a.size() == 1) return {b.size(), true, false};
    if (b.size() == 1) return {a.size(), false, true};
    throw std::invalid_argument("shape mismatch (only scalar broadcast supported)");
}

}  // namespace

Var Tape::add(Var a, Var b) {
    check_same_tape(a);
    check_same_tape(b);
    Bcast bc = broadcast(a, b);
    std::vector<double> out(bc.n);
    const auto& av = a.value();
    const auto& bv = b.value();
    for (std::size_t i = 0; i < bc.n; ++i)
        out[i] = av[bc.a_scalar ? 0 : i] + bv[bc.b_scalar ? 0 : i];
    Tape* t = this;
    const int a_id = a.id(), b_id = b.id();
    Var o = make(bc.a_scalar ? b.shape() : a.shape(), std::move(out), {});
    const int out_id = o.id();
    node(out_id).back = [t, a_id, b_id, out_id, bc]() {
        const auto& go = t->node(out_id).grad;
        auto& ga = t->node(a_id).grad;
        auto& gb = t->node(b_id).grad;
        for (std::size_t i = 0; i < bc.n; ++i) {
            ga[bc.a_scalar ? 0 : i] += go[i];
            gb[bc.b_scalar ? 0 : i] += go[i];
        }
    };
    return o;
}

Var Tape::sub(Var a, Var b) {
    check_same_tape(a);
    check_same_tape(b);
    Bcast bc = broadcast(a, b);
    std::vector<double> out(bc.n);
    const auto& av = a.value();
    const auto& bv = b.value();
    for (std::size_t i = 0; i < bc.n; ++i)
        out[i] = av[bc.a_scalar ? 0 : i] - bv[bc.b_scalar ? 0 : i];
    Tape* t = this;
    const int a_id = a.id(), b_id = b.id();
    Var o = make(bc.a_scalar ? b.shape() : a.shape(), std::move(out), {});
    const int out_id = o.id();
    node(out_id).back = [t, a_id, b_id, out_id, bc]() {
        const auto& go = t->node(out_id).grad;
        auto& ga = t->node(a_id).grad;
        auto& gb = t->node(b_id).grad;
        for (std::size_t i = 0; i < bc.n; ++i) {
            ga[bc.a_scalar ? 0 : i] += go[i];
            gb[bc.b_scalar ? 0 : i] -= go[i];
        }
    };
    return o;
}

Var Tape::mul(Var a, Var b) {
    check_same_tape(a);
    check_same_tape(b);
    Bcast bc = broadcast(a, b);
    std::vector<double> out(bc.n);
    const auto& av = a.value();
    const auto& bv = b.value();
    for (std::size_t i = 0; i < bc.n; ++i)
        out[i] = av[bc.a_scalar ? 0 : i] * bv[bc.b_scalar ? 0 : i];
    Tape* t = this;
    const int a_id = a.id(), b_id = b.id();
    Var o = make(bc.a_scalar ? b.shape() : a.shape(), std::move(out), {});
    const int out_id = o.id();
    node(out_id).back = [t, a_id, b_id, out_id, bc]() {
        const auto& go = t->node(out_id).grad;
        const auto& av2 = t->node(a_id).values;
        const auto& bv2 = t->node(b_id).values;
        auto& ga = t->node(a_id).grad;
        auto& gb = t->node(b_id).grad;
        for (std::size_t i = 0; i < bc.n; ++i) {
            ga[bc.a_scalar ? 0 : i] += go[i] * bv2[bc.b_scalar ? 0 : i];
            gb[bc.b_scalar ? 0 : i] += go[i] * av2[bc.a_scalar ? 0 : i];
        }
    };
    return o;
}

Var Tape::scale(Var a, double s) {
    check_same_tape(a);
    std::vector<double> out(a.size());
    const auto& av = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * s;
    Tape* t = this;
    const int a_id = a.id();
    Var o = make(a.shape(), std::move(out), {});
    const int out_id = o.id();
    node(out_id).back = [t, a_id, out_id, s]() {
        const auto& go = t->node(out_id).grad;
        auto& ga = t->node(a_id).grad;
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * s;
    };
    return o;
}

Var Tape::add_const(Var a, double c) {
    check_same_tape(a);
    std::vector<double> out(a.size());
    const auto& av = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + c;
    Tape* t = this;
    const int a_id = a.id();
    Var o = make(a.shape(), std::move(out), {});
    const int out_id = o.id();
    node(out_id).back = [t, a_id, out_id]() {
        const auto& go = t->node(out_id).grad;
        auto& ga = t->node(a_id).grad;
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    };
    return o;
}

Var Tape::exp(Var a) {
    check_same_tape(a);
    std::vector<double> out(a.size());
    const auto& av = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(av[i]);
    Tape* t = this;
    const int a_id = a.id();
    Var o = make(a.shape(), std::move(out), {});
    const int out_id = o.id();
    node(out_id).back = [t, a_id, out_id]() {
        const auto& go = t->node(out_id).grad;
        const auto& ov = t->node(out_id).values;
        auto& ga = t->node(a_id).grad;
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * ov[i];
    };
    return o;
}

Var Tape::log(Var a) {
    check_same_tape(a);
    std::vector<double> out(a.size());
    const auto& av = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (av[i] <= 0.0) throw std::domain_error("log of nonpositive value");
        out[i] = std::log(av[i]);
    }
    Tape* t = this;
    const int a_id = a.id();
    Var o = make(a.shape(), std::move(out), {});
    const int out_id = o.id();
    node(out_id).back = [t, a_id, out_id]() {
        const auto& go = t->node(out_id).grad;
        const auto& av2 = t->node(a_id).values;
        auto& ga = t->node(a_id).grad;
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] / av2[i];
    };
    return o;
}

namespace {

double softplus_val(double x) {
    // log(1 + e^x), stable for large |x|
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

double sigmoid_val(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

Var Tape::softplus(Var a) {
    check_same_tape(a);
    std::vector<double> out(a.size());
    const auto& av = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = softplus_val(av[i]);
    Tape* t = this;
    const int a_id = a.id();
    Var o = make(a.shape(), std::move(out), {});
    const int out_id = o.id();
    node(out_id).back = [t, a_id, out_id]() {
        const auto& go = t->node(out_id).grad;
        const auto& av2 = t->node(a_id).values;
        auto& ga = t->node(a_id).grad;
        for (std::size_t i = 0; i < go.size(); ++i)
            ga[i] += go[i] * sigmoid_val(av2[i]);
    };
    return o;
}

Var Tape::square(Var a) {
    check_same_tape(a);
    std::vector<double> out(a.size());
    const auto& av = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * av[i];
    Tape* t = this;
    const int a_id = a.id();
    Var o = make(a.shape(), std::move(out), {});
    const int out_id = o.id();
    node(out_id).back = [t, a_id, out_id]() {
        const auto& go = t->node(out_id).grad;
        const auto& av2 = t->node(a_id).values;
        auto& ga = t->node(a_id).grad;
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * 2.0 * av2[i];
    };
    return o;
}

Var Tape::clamp(Var a, double lo, double hi) {
    check_same_tape(a);
    std::vector<double> out(a.size());
    const auto& av = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(hi, std::max(lo, av[i]));
    Tape* t = this;
    const int a_id = a.id();
    Var o = make(a.shape(), std::move(out), {});
    const int out_id = o.id();
    node(out_id).back = [t, a_id, out_id, lo, hi]() {
        const auto& go = t->node(out_id).grad;
        const auto& av2 = t->node(a_id).values;
        auto& ga = t->node(a_id).grad;
        for (std::size_t i = 0; i < go.size(); ++i)
            if (av2[i] > lo && av2[i] < hi) ga[i] += go[i];
    };
    return o;
}

Var Tape::sum(Var a) {
    check_same_tape(a);
    double s = 0.0;
    for (double v : a.value()) s += v;
    Tape* t = this;
    const int a_id = a.id();
    Var o = make({1}, {s}, {});
    const int out_id = o.id();
    node(out_id).back = [t, a_id, out_id]() {
        const double g = t->node(out_id).grad[0];
        auto& ga = t->node(a_id).grad;
        for (auto& v : ga) v += g;
    };
    return o;
}

Var Tape::mean(Var a) {
    const double inv = 1.0 / static_cast<double>(a.size());
    return scale(sum(a), inv);
}

void Tape::backward(Var root) {
    check_same_tape(root);
    if (root.size() != 1)
        throw std::logic_error("backward requires a scalar root");
    for (auto& n : nodes_) n.grad.assign(n.values.size(), 0.0);
    node(root.id()).grad[0] = 1.0;
    for (int id = root.id(); id >= 0; --id) {
        auto& n = node(id);
        if (n.back) n.back();
    }
}

}  // namespace ad
}  // namespace bdgd
