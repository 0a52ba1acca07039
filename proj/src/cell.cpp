#include "revdeq/cell.hpp"

#include <cmath>

#include "revdeq/tape.hpp"

namespace revdeq {

double spectral_norm(const Tensor& A, int iters, double tol) {
    if (A.rank() != 2) throw shape_error("spectral_norm: expected matrix, got " + A.shape_str());
    std::size_t n = A.cols();
    std::vector<double> v(n, 1.0 / std::sqrt(static_cast<double>(n)));
    double sigma = 0.0;
    for (int it = 0; it < iters; ++it) {
        // u = A v
        std::vector<double> u(A.rows(), 0.0);
        for (std::size_t r = 0; r < A.rows(); ++r)
            for (std::size_t c = 0; c < n; ++c) u[r] += A.at(r, c) * v[c];
        double un = 0.0;
        for (double x : u) un += x * x;
        un = std::sqrt(un);
        if (un == 0.0) return 0.0;
        for (double& x : u) x /= un;
        // w = A^T u
        std::vector<double> w(n, 0.0);
        for (std::size_t r = 0; r < A.rows(); ++r)
            for (std::size_t c = 0; c < n; ++c) w[c] += A.at(r, c) * u[r];
        double wn = 0.0;
        for (double x : w) wn += x * x;
        wn = std::sqrt(wn);
        if (wn == 0.0) return 0.0;
        for (std::size_t c = 0; c < n; ++c) v[c] = w[c] / wn;
        if (std::fabs(wn - sigma) < tol * std::max(1.0, wn)) return wn;
        sigma = wn;
    }
    return sigma;
}

// --- LinearCell -------------------------------------------------------------

LinearCell::LinearCell(Tensor A, Tensor b) : A_(std::move(A)), b_(std::move(b)) {
    if (A_.rank() != 2 || A_.rows() != A_.cols())
        throw shape_error("LinearCell: A must be square, got " + A_.shape_str());
    if (b_.rank() != 1 || b_.size() != A_.rows())
        throw shape_error("LinearCell: b shape " + b_.shape_str() + " does not match A " +
                          A_.shape_str());
    refresh_k();
}

void LinearCell::refresh_k() { k_ = spectral_norm(A_); }

Tensor LinearCell::eval(const Tensor& z, const Tensor& x) const {
    Precision p = z.precision();
    return add(add(matmul(cast(A_, p), z), cast(b_, p)), x);
}

CellVjp LinearCell::vjp(const Tensor& z, const Tensor& x, const Tensor& ct) const {
    Precision p = z.precision();
    Tape tape;
    Tape::Var vA = tape.leaf(cast(A_, p));
    Tape::Var vb = tape.leaf(cast(b_, p));
    Tape::Var vz = tape.leaf(z);
    Tape::Var vx = tape.leaf(x);
    Tape::Var out = tape.add(tape.add(tape.matmul(vA, vz), vb), vx);
    auto cot = tape.vjp(out, ct);
    return {cot[static_cast<std::size_t>(vz)], cot[static_cast<std::size_t>(vx)],
            {cot[static_cast<std::size_t>(vA)], cot[static_cast<std::size_t>(vb)]}};
}

// --- MlpCell ----------------------------------------------------------------

MlpCell::MlpCell(Tensor W1, Tensor b1, Tensor W2, Tensor b2)
    : W1_(std::move(W1)), b1_(std::move(b1)), W2_(std::move(W2)), b2_(std::move(b2)) {
    if (W1_.rank() != 2 || W2_.rank() != 2 || W1_.rows() != W2_.cols() ||
        W2_.rows() != W1_.cols())
        throw shape_error("MlpCell: inconsistent layer shapes " + W1_.shape_str() + " / " +
                          W2_.shape_str());
    if (b1_.size() != W1_.rows() || b2_.size() != W2_.rows())
        throw shape_error("MlpCell: bias shapes do not match layers");
    refresh_k();
}

void MlpCell::refresh_k() { k_ = spectral_norm(W1_) * spectral_norm(W2_); }

Tensor& MlpCell::param(std::size_t i) {
    switch (i) {
        case 0: return W1_;
        case 1: return b1_;
        case 2: return W2_;
        default: return b2_;
    }
}

const Tensor& MlpCell::param(std::size_t i) const {
    return const_cast<MlpCell*>(this)->param(i);
}

std::string MlpCell::param_name(std::size_t i) const {
    switch (i) {
        case 0: return "W1";
        case 1: return "b1";
        case 2: return "W2";
        default: return "b2";
    }
}

Tensor MlpCell::eval(const Tensor& z, const Tensor& x) const {
    Precision p = z.precision();
    Tensor h = add(add(matmul(cast(W1_, p), z), cast(b1_, p)), x);
    return add(matmul(cast(W2_, p), tanh_act(h)), cast(b2_, p));
}

CellVjp MlpCell::vjp(const Tensor& z, const Tensor& x, const Tensor& ct) const {
    Precision p = z.precision();
    Tape tape;
    Tape::Var vW1 = tape.leaf(cast(W1_, p));
    Tape::Var vb1 = tape.leaf(cast(b1_, p));
    Tape::Var vW2 = tape.leaf(cast(W2_, p));
    Tape::Var vb2 = tape.leaf(cast(b2_, p));
    Tape::Var vz = tape.leaf(z);
    Tape::Var vx = tape.leaf(x);
    Tape::Var h = tape.add(tape.add(tape.matmul(vW1, vz), vb1), vx);
    Tape::Var out = tape.add(tape.matmul(vW2, tape.tanh(h)), vb2);
    auto cot = tape.vjp(out, ct);
    return {cot[static_cast<std::size_t>(vz)],
            cot[static_cast<std::size_t>(vx)],
            {cot[static_cast<std::size_t>(vW1)], cot[static_cast<std::size_t>(vb1)],
             cot[static_cast<std::size_t>(vW2)], cot[static_cast<std::size_t>(vb2)]}};
}

// --- factories / estimator --------------------------------------------------

std::unique_ptr<EquilibriumFunction> make_linear_cell(Tensor A, Tensor b,
                                                      std::optional<double> target_k) {
    if (A.rank() != 2 || A.rows() != A.cols())
        throw shape_error("make_linear_cell: A must be square, got " + A.shape_str());
    if (target_k) {
        if (*target_k <= 0.0 || *target_k >= 1.0)
            throw domain_error("make_linear_cell: target_k must lie in (0,1), got " +
                               std::to_string(*target_k));
        double sigma = spectral_norm(A);
        if (sigma > 0.0) {
            double c = *target_k / sigma;
            for (std::size_t i = 0; i < A.size(); ++i) A.at(i) *= c;
        }
    }
    return std::make_unique<LinearCell>(std::move(A), std::move(b));
}

std::unique_ptr<EquilibriumFunction> make_mlp_cell(std::size_t width, std::size_t hidden,
                                                   double target_k, std::uint64_t seed) {
    if (target_k <= 0.0 || target_k >= 1.0)
        throw domain_error("make_mlp_cell: target_k must lie in (0,1), got " +
                           std::to_string(target_k));
    Rng rng(seed);
    Tensor W1 = rng.normal_tensor({hidden, width});
    Tensor b1 = rng.normal_tensor({hidden}, 0.1);
    Tensor W2 = rng.normal_tensor({width, hidden});
    Tensor b2 = rng.normal_tensor({width}, 0.1);
    double s1 = spectral_norm(W1);
    double s2 = spectral_norm(W2);
    double c = std::sqrt(target_k / (s1 * s2));
    for (std::size_t i = 0; i < W1.size(); ++i) W1.at(i) *= c;
    for (std::size_t i = 0; i < W2.size(); ++i) W2.at(i) *= c;
    return std::make_unique<MlpCell>(std::move(W1), std::move(b1), std::move(W2),
                                     std::move(b2));
}

double estimate_lipschitz(const EquilibriumFunction& f, std::size_t num_pairs,
                          std::uint64_t seed) {
    if (num_pairs < 1) throw domain_error("estimate_lipschitz: num_pairs must be >= 1");
    Rng rng(seed);
    Tensor x(std::vector<std::size_t>{f.x_dim()});
    double best = 0.0;
    for (std::size_t i = 0; i < num_pairs; ++i) {
        Tensor z = rng.normal_tensor({f.width()});
        Tensor zp = rng.normal_tensor({f.width()});
        double dz = vector_norm(subtract(z, zp), NormKind::l2);
        while (dz == 0.0) {
            zp = rng.normal_tensor({f.width()});
            dz = vector_norm(subtract(z, zp), NormKind::l2);
        }
        double df = vector_norm(subtract(f.eval(z, x), f.eval(zp, x)), NormKind::l2);
        best = std::max(best, df / dz);
    }
    return best;
}

}  // namespace revdeq
