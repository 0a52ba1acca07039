#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "revdeq/rng.hpp"
#include "revdeq/tensor.hpp"

namespace revdeq {

// Cotangents of one cell evaluation: z_bar = (df/dz)^T ct, x_bar = (df/dx)^T ct,
// theta_bar[i] = (df/dtheta_i)^T ct.
struct CellVjp {
    Tensor z_bar;
    Tensor x_bar;
    std::vector<Tensor> theta_bar;
};

// A contractive map f_theta(z, x) with a declared Lipschitz bound in z.
// Evaluation and VJPs run at the precision of the incoming z tensor.
class EquilibriumFunction {
public:
    virtual ~EquilibriumFunction() = default;

    virtual std::size_t width() const = 0;   // dimension of z
    virtual std::size_t x_dim() const = 0;   // dimension of the injected x
    virtual double declared_k() const = 0;

    virtual Tensor eval(const Tensor& z, const Tensor& x) const = 0;
    virtual CellVjp vjp(const Tensor& z, const Tensor& x, const Tensor& cotangent) const = 0;
    Tensor vjp_z(const Tensor& z, const Tensor& x, const Tensor& ct) const {
        return vjp(z, x, ct).z_bar;
    }
    std::vector<Tensor> vjp_theta(const Tensor& z, const Tensor& x, const Tensor& ct) const {
        return vjp(z, x, ct).theta_bar;
    }

    virtual std::size_t num_params() const = 0;
    virtual Tensor& param(std::size_t i) = 0;
    virtual const Tensor& param(std::size_t i) const = 0;
    virtual std::string param_name(std::size_t i) const = 0;
    virtual std::unique_ptr<EquilibriumFunction> clone() const = 0;
};

// f(z, x) = A z + b + x. The canonical contraction instance: k is the
// spectral norm of A.
class LinearCell final : public EquilibriumFunction {
public:
    LinearCell(Tensor A, Tensor b);

    std::size_t width() const override { return b_.size(); }
    std::size_t x_dim() const override { return b_.size(); }
    double declared_k() const override { return k_; }

    Tensor eval(const Tensor& z, const Tensor& x) const override;
    CellVjp vjp(const Tensor& z, const Tensor& x, const Tensor& ct) const override;

    std::size_t num_params() const override { return 2; }
    Tensor& param(std::size_t i) override { return i == 0 ? A_ : b_; }
    const Tensor& param(std::size_t i) const override { return i == 0 ? A_ : b_; }
    std::string param_name(std::size_t i) const override { return i == 0 ? "A" : "b"; }
    std::unique_ptr<EquilibriumFunction> clone() const override {
        return std::make_unique<LinearCell>(*this);
    }

    const Tensor& A() const { return A_; }
    const Tensor& b() const { return b_; }
    void refresh_k();

private:
    Tensor A_, b_;
    double k_ = 0.0;
};

// f(z, x) = W2 tanh(W1 z + b1 + x) + b2, with x injected after the first
// affine layer. Product of the layer spectral norms bounds the Lipschitz
// constant (tanh slope <= 1).
class MlpCell final : public EquilibriumFunction {
public:
    MlpCell(Tensor W1, Tensor b1, Tensor W2, Tensor b2);

    std::size_t width() const override { return b2_.size(); }
    std::size_t x_dim() const override { return b1_.size(); }
    double declared_k() const override { return k_; }

    Tensor eval(const Tensor& z, const Tensor& x) const override;
    CellVjp vjp(const Tensor& z, const Tensor& x, const Tensor& ct) const override;

    std::size_t num_params() const override { return 4; }
    Tensor& param(std::size_t i) override;
    const Tensor& param(std::size_t i) const override;
    std::string param_name(std::size_t i) const override;
    std::unique_ptr<EquilibriumFunction> clone() const override {
        return std::make_unique<MlpCell>(*this);
    }

    void refresh_k();  // recompute declared k from current weights

private:
    Tensor W1_, b1_, W2_, b2_;
    double k_ = 0.0;
};

// Spectral norm by power iteration (100 iterations, tolerance 1e-10).
double spectral_norm(const Tensor& A, int iters = 100, double tol = 1e-10);

// target_k, when given, rescales A so its spectral norm equals target_k.
std::unique_ptr<EquilibriumFunction> make_linear_cell(
    Tensor A, Tensor b, std::optional<double> target_k = std::nullopt);

// Deterministic Gaussian init from seed; both weight matrices scaled so that
// the product of their spectral norms equals target_k.
std::unique_ptr<EquilibriumFunction> make_mlp_cell(std::size_t width, std::size_t hidden,
                                                   double target_k, std::uint64_t seed);

// Empirical lower bound on k: max over sampled pairs of ||f(z)-f(z')||/||z-z'||
// (l2), with x = 0. Coincident pairs are resampled.
double estimate_lipschitz(const EquilibriumFunction& f, std::size_t num_pairs,
                          std::uint64_t seed);

}  // namespace revdeq
