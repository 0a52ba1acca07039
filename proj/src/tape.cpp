#include "revdeq/tape.hpp"

#include <cmath>

namespace revdeq {

Tape::Var Tape::push(Op op, Var a, Var b, double c, Tensor value) {
    nodes_.push_back({op, a, b, c});
    values_.push_back(std::move(value));
    if (op != Op::leaf) ++ops_;
    return static_cast<Var>(nodes_.size() - 1);
}

Tape::Var Tape::leaf(Tensor value) {
    return push(Op::leaf, -1, -1, 0.0, std::move(value));
}

Tape::Var Tape::add(Var a, Var b) {
    return push(Op::add, a, b, 0.0, revdeq::add(value(a), value(b)));
}

Tape::Var Tape::subtract(Var a, Var b) {
    return push(Op::subtract, a, b, 0.0, revdeq::subtract(value(a), value(b)));
}

Tape::Var Tape::scale(Var a, double c) {
    return push(Op::scale, a, -1, c, revdeq::scale(value(a), c));
}

Tape::Var Tape::matmul(Var A, Var v) {
    return push(Op::matmul, A, v, 0.0, revdeq::matmul(value(A), value(v)));
}

Tape::Var Tape::tanh(Var a) {
    return push(Op::tanh, a, -1, 0.0, revdeq::tanh_act(value(a)));
}

Tape::Var Tape::relu(Var a) {
    return push(Op::relu, a, -1, 0.0, revdeq::relu_act(value(a)));
}

Tape::Var Tape::mul(Var a, Var b) {
    return push(Op::mul, a, b, 0.0, revdeq::mul(value(a), value(b)));
}

Tape::Var Tape::dot(Var a, Var b) {
    return push(Op::dot, a, b, 0.0,
                Tensor::scalar(revdeq::dot(value(a), value(b)), value(a).precision()));
}

// v_bar += A^T ct, quantized at the tensors' precision.
static void accumulate_matvec_t(Tensor& v_bar, const Tensor& A, const Tensor& ct) {
    Precision p = v_bar.precision();
    for (std::size_t c = 0; c < A.cols(); ++c) {
        double acc = v_bar[c];
        for (std::size_t r = 0; r < A.rows(); ++r)
            acc = quantize(acc + quantize(A.at(r, c) * ct[r], p), p);
        v_bar.at(c) = acc;
    }
}

std::vector<Tensor> Tape::vjp(Var output, const Tensor& output_cotangent) const {
    const Tensor& out_val = value(output);
    if (!out_val.same_shape(output_cotangent))
        throw shape_error("vjp: cotangent shape " + output_cotangent.shape_str() +
                          " does not match output shape " + out_val.shape_str());

    std::vector<Tensor> cot(values_.size());
    for (std::size_t i = 0; i < values_.size(); ++i) cot[i] = Tensor::zeros_like(values_[i]);
    cot[static_cast<std::size_t>(output)] = output_cotangent;

    for (std::size_t idx = nodes_.size(); idx-- > 0;) {
        const Node& n = nodes_[idx];
        const Tensor& ct = cot[idx];
        if (n.op == Op::leaf) continue;
        switch (n.op) {
            case Op::add:
                axpy(cot[static_cast<std::size_t>(n.a)], 1.0, ct);
                axpy(cot[static_cast<std::size_t>(n.b)], 1.0, ct);
                break;
            case Op::subtract:
                axpy(cot[static_cast<std::size_t>(n.a)], 1.0, ct);
                axpy(cot[static_cast<std::size_t>(n.b)], -1.0, ct);
                break;
            case Op::scale:
                axpy(cot[static_cast<std::size_t>(n.a)], n.c, ct);
                break;
            case Op::matmul:
                axpy_outer(cot[static_cast<std::size_t>(n.a)], 1.0, ct,
                           value(n.b));
                accumulate_matvec_t(cot[static_cast<std::size_t>(n.b)], value(n.a), ct);
                break;
            case Op::tanh: {
                // d tanh(h) = 1 - tanh(h)^2, using the saved output value
                const Tensor& y = values_[idx];
                Tensor& ab = cot[static_cast<std::size_t>(n.a)];
                Precision p = ab.precision();
                for (std::size_t i = 0; i < y.size(); ++i) {
                    double d = quantize(1.0 - quantize(y[i] * y[i], p), p);
                    ab.at(i) = quantize(ab[i] + quantize(ct[i] * d, p), p);
                }
                break;
            }
            case Op::relu: {
                const Tensor& h = value(n.a);
                Tensor& ab = cot[static_cast<std::size_t>(n.a)];
                Precision p = ab.precision();
                for (std::size_t i = 0; i < h.size(); ++i)
                    if (h[i] > 0.0) ab.at(i) = quantize(ab[i] + ct[i], p);
                break;
            }
            case Op::mul: {
                Tensor& ab = cot[static_cast<std::size_t>(n.a)];
                Tensor& bb = cot[static_cast<std::size_t>(n.b)];
                Precision p = ab.precision();
                const Tensor& av = value(n.a);
                const Tensor& bv = value(n.b);
                for (std::size_t i = 0; i < av.size(); ++i) {
                    ab.at(i) = quantize(ab[i] + quantize(ct[i] * bv[i], p), p);
                    bb.at(i) = quantize(bb[i] + quantize(ct[i] * av[i], p), p);
                }
                break;
            }
            case Op::dot: {
                double s = ct[0];
                axpy(cot[static_cast<std::size_t>(n.a)], s, value(n.b));
                axpy(cot[static_cast<std::size_t>(n.b)], s, value(n.a));
                break;
            }
            case Op::leaf:
                break;
        }
    }
    return cot;
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& func,
                        const Tensor& params, double eps) {
    if (eps <= 0.0) throw domain_error("finite_diff_grad: eps must be positive");
    Tensor grad = Tensor::zeros_like(params);
    Tensor p = params;
    for (std::size_t i = 0; i < p.size(); ++i) {
        double orig = p[i];
        p.at(i) = orig + eps;
        double fp = func(p);
        p.at(i) = orig - eps;
        double fm = func(p);
        p.at(i) = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw domain_error("finite_diff_grad: non-finite value at coordinate " +
                               std::to_string(i));
        grad.at(i) = (fp - fm) / (2.0 * eps);
    }
    return grad;
}

}  // namespace revdeq
