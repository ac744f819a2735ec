#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

namespace bdgd {

// Raw convolution kernels, shared between the tape op and gradient-free
// forward passes. Same-padding with zeros, odd kernel sizes, NCHW layout.
namespace nn {

struct ConvDims {
    std::size_t N, C, H, W;  // input
    std::size_t F, kh, kw;   // kernel
};

void conv2d_forward(const double* in, const double* kernel, const double* bias,
                    double* out, const ConvDims& d);
// Accumulating backward passes (callers zero the buffers).
void conv2d_backward_input(const double* grad_out, const double* kernel,
                           double* grad_in, const ConvDims& d);
void conv2d_backward_kernel(const double* grad_out, const double* in,
                            double* grad_kernel, double* grad_bias,
                            const ConvDims& d);

}  // namespace nn

namespace ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& s);

class Tape;

// Lightweight handle to a node on a tape.
class Var {
public:
    Var() = default;

    Tape* tape() const { return tape_; }
    int id() const { return id_; }
    bool defined() const { return tape_ != nullptr; }

    const Shape& shape() const;
    const std::vector<double>& value() const;
    const std::vector<double>& grad() const;
    std::size_t size() const;

private:
    friend class Tape;
    Var(Tape* t, int id) : tape_(t), id_(id) {}
    Tape* tape_ = nullptr;
    int id_ = -1;
};

bool all_finite(const Var& v);

// Append-only record of operations; node ids are topologically ordered.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Shape shape, std::vector<double> values);
    Var constant(Shape shape, std::vector<double> values);  // leaf, same semantics
    Var scalar(double v);

    Var conv2d(Var input, Var kernel, Var bias);
    Var relu(Var x);

    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double s);
    Var add_const(Var a, double c);
    Var exp(Var a);
    Var log(Var a);
    Var softplus(Var a);
    Var square(Var a);
    Var clamp(Var a, double lo, double hi);
    Var sum(Var a);
    Var mean(Var a);

    // Accumulates d(root)/d(node) into every node's grad buffer.
    // root must be scalar.
    void backward(Var root);

    std::size_t num_nodes() const { return nodes_.size(); }

private:
    struct Node {
        Shape shape;
        std::vector<double> values;
        std::vector<double> grad;
        std::function<void()> back;
    };

    Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
    const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }

    Var make(Shape shape, std::vector<double> values, std::function<void()> back);
    void check_same_tape(const Var& v) const;

    std::vector<Node> nodes_;

    friend class Var;
    friend bool all_finite(const Var&);
};

}  // namespace ad
}  // namespace bdgd
