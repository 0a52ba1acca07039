#pragma once

#include <string>
#include <vector>

#include "revdeq/cell.hpp"
#include "revdeq/solver.hpp"

namespace revdeq {

enum class Engine { reversible, ift, unrolled, jfb };

std::string engine_name(Engine e);
Engine engine_from_name(const std::string& name);

struct GradientReport {
    std::vector<Tensor> theta_grad;
    Tensor x_grad;
    Engine engine = Engine::reversible;
    int nfe_forward = 0;
    // Cell evaluations in the backward pass, counting the forward recording
    // inside each VJP application as one evaluation.
    int nfe_backward = 0;
    int peak_stored_tensors = 0;
};

// |a-b| / max(|a|, |b|, 1).
double relerr(double a, double b);
double max_relerr(const Tensor& a, const Tensor& b);
double max_relerr(const std::vector<Tensor>& a, const std::vector<Tensor>& b);

// Exact gradient of the finite N-step iteration in O(1) memory: reconstructs
// (y_n, z_n) backwards via the inverse step, then applies the four adjoint
// updates per step. The loss cotangent attaches to z_N.
GradientReport reversible_backprop(const EquilibriumFunction& f, const Tensor& x,
                                   const SolveResult& result, const Tensor& loss_cotangent,
                                   const SolverConfig& cfg);

// Stored-trajectory oracle: runs the same forward scheme, keeps every state,
// and replays the identical adjoint updates without reconstruction.
GradientReport unrolled_gradient(const EquilibriumFunction& f, const Tensor& x,
                                 const SolverConfig& cfg, const Tensor& loss_cotangent);

// Solves g = (df/dz*)^T g + a_z by damped fixed-point iteration (g_0 = a_z,
// damping beta from adjoint_cfg; beta = 1 gives the undamped iteration), then
// projects: theta_bar = (df/dtheta)^T g at (z*, x).
GradientReport ift_gradient(const EquilibriumFunction& f, const Tensor& x,
                            const Tensor& z_star, const Tensor& loss_cotangent,
                            const SolverConfig& adjoint_cfg);

// Zeroth-order truncation of the adjoint system: g = a_z directly.
GradientReport jfb_gradient(const EquilibriumFunction& f, const Tensor& x,
                            const Tensor& z_star, const Tensor& loss_cotangent);

struct GradCheckEntry {
    std::string param;
    double max_abs = 0.0;
    double max_rel = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> per_param;
    double max_rel = 0.0;
};

// Compares an engine's parameter gradient against central differences of the
// scalar map params -> sum(z_N after a reversible solve).
GradCheckReport grad_check(const EquilibriumFunction& f, const Tensor& x,
                           const SolverConfig& cfg, Engine engine, double fd_eps = 1e-5);

}  // namespace revdeq
