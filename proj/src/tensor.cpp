#include "revdeq/tensor.hpp"

#include <cmath>
#include <sstream>

namespace revdeq {

std::string precision_name(Precision p) {
    return p == Precision::single ? "single" : "double";
}

Precision precision_from_name(const std::string& name) {
    if (name == "single") return Precision::single;
    if (name == "double") return Precision::dbl;
    throw config_error("unknown precision '" + name + "' (expected single|double)");
}

static std::size_t shape_count(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

Tensor::Tensor(std::vector<std::size_t> shape, Precision prec)
    : shape_(std::move(shape)), data_(shape_count(shape_), 0.0), prec_(prec) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data, Precision prec)
    : shape_(std::move(shape)), data_(std::move(data)), prec_(prec) {
    if (data_.size() != shape_count(shape_))
        throw shape_error("tensor data size " + std::to_string(data_.size()) +
                          " does not match shape " + shape_str());
    if (prec_ == Precision::single)
        for (double& v : data_) v = quantize(v, prec_);
}

Tensor Tensor::scalar(double v, Precision prec) {
    return Tensor({}, {v}, prec);
}

Tensor Tensor::vector(std::vector<double> data, Precision prec) {
    std::size_t n = data.size();
    return Tensor({n}, std::move(data), prec);
}

Tensor Tensor::zeros_like(const Tensor& t) {
    return Tensor(t.shape(), t.precision());
}

std::size_t Tensor::rows() const {
    if (rank() != 2) throw shape_error("rows() on non-matrix tensor " + shape_str());
    return shape_[0];
}

std::size_t Tensor::cols() const {
    if (rank() != 2) throw shape_error("cols() on non-matrix tensor " + shape_str());
    return shape_[1];
}

double& Tensor::at(std::size_t r, std::size_t c) {
    return data_[r * cols() + c];
}

double Tensor::at(std::size_t r, std::size_t c) const {
    return data_[r * shape_[1] + c];
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape_.size(); ++i)
        os << shape_[i] << (i + 1 < shape_.size() ? "," : "");
    os << "]";
    return os.str();
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw shape_error(std::string(op) + ": shape mismatch " + a.shape_str() +
                          " vs " + b.shape_str());
}

void check_same_precision(const Tensor& a, const Tensor& b, const char* op) {
    if (a.precision() != b.precision())
        throw precision_error(std::string(op) + ": precision mismatch " +
                              precision_name(a.precision()) + " vs " +
                              precision_name(b.precision()));
}

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    check_same_precision(a, b, "add");
    Tensor out(a.shape(), a.precision());
    for (std::size_t i = 0; i < a.size(); ++i)
        out.at(i) = quantize(a[i] + b[i], a.precision());
    return out;
}

Tensor subtract(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "subtract");
    check_same_precision(a, b, "subtract");
    Tensor out(a.shape(), a.precision());
    for (std::size_t i = 0; i < a.size(); ++i)
        out.at(i) = quantize(a[i] - b[i], a.precision());
    return out;
}

Tensor scale(const Tensor& a, double c) {
    Tensor out(a.shape(), a.precision());
    double cq = quantize(c, a.precision());
    for (std::size_t i = 0; i < a.size(); ++i)
        out.at(i) = quantize(a[i] * cq, a.precision());
    return out;
}

Tensor matmul(const Tensor& A, const Tensor& v) {
    if (A.rank() != 2 || v.rank() != 1)
        throw shape_error("matmul: expected matrix and vector, got " + A.shape_str() +
                          " and " + v.shape_str());
    if (A.cols() != v.size())
        throw shape_error("matmul: shape mismatch " + A.shape_str() + " vs " +
                          v.shape_str());
    check_same_precision(A, v, "matmul");
    Precision p = A.precision();
    Tensor out({A.rows()}, p);
    for (std::size_t r = 0; r < A.rows(); ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < A.cols(); ++c)
            acc = quantize(acc + quantize(A.at(r, c) * v[c], p), p);
        out.at(r) = acc;
    }
    return out;
}

Tensor tanh_act(const Tensor& a) {
    Tensor out(a.shape(), a.precision());
    for (std::size_t i = 0; i < a.size(); ++i)
        out.at(i) = quantize(std::tanh(a[i]), a.precision());
    return out;
}

Tensor relu_act(const Tensor& a) {
    Tensor out(a.shape(), a.precision());
    for (std::size_t i = 0; i < a.size(); ++i)
        out.at(i) = a[i] > 0.0 ? a[i] : 0.0;
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    check_same_precision(a, b, "mul");
    Tensor out(a.shape(), a.precision());
    for (std::size_t i = 0; i < a.size(); ++i)
        out.at(i) = quantize(a[i] * b[i], a.precision());
    return out;
}

double dot(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "dot");
    check_same_precision(a, b, "dot");
    Precision p = a.precision();
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        acc = quantize(acc + quantize(a[i] * b[i], p), p);
    return acc;
}

double vector_norm(const Tensor& a, NormKind kind) {
    if (kind == NormKind::max) {
        double m = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i]));
        return m;
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * a[i];
    return std::sqrt(acc);
}

void axpy_outer(Tensor& M, double c, const Tensor& u, const Tensor& v) {
    if (M.rank() != 2 || M.rows() != u.size() || M.cols() != v.size())
        throw shape_error("axpy_outer: shape mismatch " + M.shape_str() + " vs " +
                          u.shape_str() + " x " + v.shape_str());
    Precision p = M.precision();
    for (std::size_t r = 0; r < u.size(); ++r)
        for (std::size_t cidx = 0; cidx < v.size(); ++cidx)
            M.at(r, cidx) = quantize(M.at(r, cidx) + quantize(c * quantize(u[r] * v[cidx], p), p), p);
}

void axpy(Tensor& a, double c, const Tensor& b) {
    check_same_shape(a, b, "axpy");
    Precision p = a.precision();
    for (std::size_t i = 0; i < a.size(); ++i)
        a.at(i) = quantize(a[i] + quantize(c * b[i], p), p);
}

Tensor cast(const Tensor& t, Precision p) {
    if (t.precision() == p) return t;
    return Tensor(t.shape(), t.data(), p);
}

std::string PrecisionPolicy::name() const {
    if (compute == Precision::dbl) return "double";
    return accumulate == Precision::dbl ? "mixed" : "single";
}

PrecisionPolicy policy_double() { return {Precision::dbl, Precision::dbl}; }
PrecisionPolicy policy_single() { return {Precision::single, Precision::single}; }
PrecisionPolicy policy_mixed() { return {Precision::single, Precision::dbl}; }

PrecisionPolicy policy_from_name(const std::string& name) {
    if (name == "double") return policy_double();
    if (name == "single") return policy_single();
    if (name == "mixed") return policy_mixed();
    throw config_error("unknown precision policy '" + name +
                       "' (expected double|single|mixed)");
}

}  // namespace revdeq
