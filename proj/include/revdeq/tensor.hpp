#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "revdeq/errors.hpp"

namespace revdeq {

// Element precision of a tensor. Storage is always double; "single" means
// every element is an exact binary32 value and every primitive rounds its
// result back to binary32 (computing in binary64 and rounding once is
// correctly rounded for +,-,*,/ because 53 >= 2*24 + 2).
enum class Precision { single, dbl };

std::string precision_name(Precision p);
Precision precision_from_name(const std::string& name);

// Round a scalar to the given precision.
inline double quantize(double v, Precision p) {
    return p == Precision::single ? static_cast<double>(static_cast<float>(v)) : v;
}

class Tensor {
public:
    Tensor() = default;
    Tensor(std::vector<std::size_t> shape, Precision prec = Precision::dbl);
    Tensor(std::vector<std::size_t> shape, std::vector<double> data,
           Precision prec = Precision::dbl);

    static Tensor scalar(double v, Precision prec = Precision::dbl);
    static Tensor vector(std::vector<double> data, Precision prec = Precision::dbl);
    static Tensor zeros_like(const Tensor& t);

    const std::vector<std::size_t>& shape() const { return shape_; }
    Precision precision() const { return prec_; }
    std::size_t size() const { return data_.size(); }
    std::size_t rank() const { return shape_.size(); }
    std::size_t rows() const;
    std::size_t cols() const;

    double operator[](std::size_t i) const { return data_[i]; }
    double& at(std::size_t i) { return data_[i]; }
    double at(std::size_t i) const { return data_[i]; }
    double& at(std::size_t r, std::size_t c);
    double at(std::size_t r, std::size_t c) const;
    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    std::string shape_str() const;
    bool all_finite() const;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
    Precision prec_ = Precision::dbl;
};

// --- primitive set ---------------------------------------------------------
// Operands must be shape-compatible and share one precision; results carry
// that precision and are rounded to it element by element.

Tensor add(const Tensor& a, const Tensor& b);
Tensor subtract(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor matmul(const Tensor& A, const Tensor& v);  // matrix-vector product
Tensor tanh_act(const Tensor& a);
Tensor relu_act(const Tensor& a);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise (VJP plumbing)
double dot(const Tensor& a, const Tensor& b);

enum class NormKind { l2, max };
double vector_norm(const Tensor& a, NormKind kind);

// Outer product accumulate: M += c * u v^T (parameter-gradient plumbing).
void axpy_outer(Tensor& M, double c, const Tensor& u, const Tensor& v);
// a += c * b elementwise.
void axpy(Tensor& a, double c, const Tensor& b);

// Re-round a tensor to the target precision (exact when widening).
Tensor cast(const Tensor& t, Precision p);

void check_same_shape(const Tensor& a, const Tensor& b, const char* op);
void check_same_precision(const Tensor& a, const Tensor& b, const char* op);

// compute: precision for cell evaluations; accumulate: precision for the
// add/subtract/divide steps of the solver schemes. accumulate must be at
// least as wide as compute.
struct PrecisionPolicy {
    Precision compute = Precision::dbl;
    Precision accumulate = Precision::dbl;

    void validate() const {
        if (accumulate == Precision::single && compute == Precision::dbl)
            throw config_error(
                "precision policy: accumulate precision must be at least as wide as "
                "compute precision");
    }
    std::string name() const;
};

PrecisionPolicy policy_double();  // double compute / double accumulate
PrecisionPolicy policy_single();  // single compute / single accumulate
PrecisionPolicy policy_mixed();   // single compute / double accumulate
PrecisionPolicy policy_from_name(const std::string& name);

}  // namespace revdeq
