#pragma once

#include <functional>
#include <vector>

#include "revdeq/tensor.hpp"

namespace revdeq {

// Records a straight-line program of primitives and replays VJP rules in
// reverse to produce cotangents for every recorded value. One tape per
// forward evaluation; not shared across threads.
class Tape {
public:
    using Var = int;

    Var leaf(Tensor value);

    Var add(Var a, Var b);
    Var subtract(Var a, Var b);
    Var scale(Var a, double c);
    Var matmul(Var A, Var v);
    Var tanh(Var a);
    Var relu(Var a);
    Var mul(Var a, Var b);
    Var dot(Var a, Var b);

    const Tensor& value(Var v) const { return values_[static_cast<std::size_t>(v)]; }
    std::size_t length() const { return ops_; }  // recorded primitives, leaves excluded
    std::size_t num_vars() const { return values_.size(); }

    // Reverse replay from `output` seeded with `output_cotangent`; element i of
    // the result is the cotangent of var i (zeros where no path exists).
    std::vector<Tensor> vjp(Var output, const Tensor& output_cotangent) const;

private:
    enum class Op { leaf, add, subtract, scale, matmul, tanh, relu, mul, dot };
    struct Node {
        Op op;
        Var a = -1;
        Var b = -1;
        double c = 0.0;
    };

    Var push(Op op, Var a, Var b, double c, Tensor value);

    std::vector<Node> nodes_;
    std::vector<Tensor> values_;
    std::size_t ops_ = 0;
};

// Central differences (func(p+eps*e_i) - func(p-eps*e_i)) / (2 eps) per
// coordinate; the independent oracle for every gradient engine.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& func,
                        const Tensor& params, double eps = 1e-5);

}  // namespace revdeq
