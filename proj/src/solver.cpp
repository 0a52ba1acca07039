#include "revdeq/solver.hpp"

#include <cmath>

namespace revdeq {

namespace {
constexpr double kDivergenceResidual = 1e12;
constexpr double kBetaFloor = 1e-3;  // lower bound on |1-beta| for reversibility

double max_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

void check_divergence(const Tensor& t, double residual, const ReversibleState& last,
                      int step) {
    if (!t.all_finite())
        throw divergence_error("divergence at step " + std::to_string(step) +
                                   ": non-finite iterate",
                               last);
    if (residual > kDivergenceResidual)
        throw divergence_error("divergence at step " + std::to_string(step) +
                                   ": residual " + std::to_string(residual) + " exceeds 1e12",
                               last);
}
}  // namespace

void SolverConfig::validate(SolverKind kind) const {
    if (!(beta > 0.0 && beta < 2.0))
        throw config_error("solver config: beta must lie in (0, 2), got " +
                           std::to_string(beta));
    if (kind == SolverKind::reversible && std::fabs(1.0 - beta) < kBetaFloor)
        throw config_error("solver config: |1 - beta| must be >= 1e-3 for the reversible "
                           "engine (the backward step divides by 1 - beta), got beta = " +
                           std::to_string(beta));
    if (!(tol > 0.0))
        throw config_error("solver config: tol must be positive, got " + std::to_string(tol));
    if (max_steps < 1)
        throw config_error("solver config: max_steps must be >= 1, got " +
                           std::to_string(max_steps));
    policy.validate();
}

// Shared single-state loop: z_{n+1} = (1-beta) z_n + beta f(z_n, x).
static SolveResult single_state_iterate(const EquilibriumFunction& f, const Tensor& x,
                                        const SolverConfig& cfg, double beta,
                                        const StepObserver& observer) {
    Precision comp = cfg.policy.compute;
    Precision acc = cfg.policy.accumulate;
    Tensor x_c = cast(x, comp);
    Tensor z(std::vector<std::size_t>{f.width()}, acc);

    SolveResult res;
    double one_minus_beta = 1.0 - beta;
    for (int n = 0; n < cfg.max_steps; ++n) {
        Tensor fz = cast(f.eval(cast(z, comp), x_c), acc);
        Tensor z_new = beta == 1.0 ? fz : add(scale(z, one_minus_beta), scale(fz, beta));
        res.residual = max_diff(z_new, z);
        ReversibleState last{z, z, n};
        check_divergence(z_new, res.residual, last, n + 1);
        z = std::move(z_new);
        ++res.steps_taken;
        ++res.nfe;
        if (observer) observer(res.steps_taken, ReversibleState{z, z, res.steps_taken});
        if (cfg.stop_rule == StopRule::residual && res.residual < cfg.tol) break;
    }
    res.converged = res.residual < cfg.tol;
    res.state = ReversibleState{z, z, res.steps_taken};
    return res;
}

SolveResult naive_iterate(const EquilibriumFunction& f, const Tensor& x,
                          const SolverConfig& cfg, const StepObserver& observer) {
    cfg.validate(SolverKind::naive);
    return single_state_iterate(f, x, cfg, 1.0, observer);
}

SolveResult relaxed_iterate(const EquilibriumFunction& f, const Tensor& x,
                            const SolverConfig& cfg, const StepObserver& observer) {
    cfg.validate(SolverKind::relaxed);
    return single_state_iterate(f, x, cfg, cfg.beta, observer);
}

SolveResult reversible_forward(const EquilibriumFunction& f, const Tensor& x,
                               const SolverConfig& cfg, const StepObserver& observer) {
    cfg.validate(SolverKind::reversible);
    Precision comp = cfg.policy.compute;
    Precision acc = cfg.policy.accumulate;
    Tensor x_c = cast(x, comp);
    Tensor y(std::vector<std::size_t>{f.width()}, acc);
    Tensor z = y;

    SolveResult res;
    double beta = cfg.beta;
    double one_minus_beta = 1.0 - beta;
    for (int n = 0; n < cfg.max_steps; ++n) {
        Tensor fz = cast(f.eval(cast(z, comp), x_c), acc);
        Tensor y_new = add(scale(y, one_minus_beta), scale(fz, beta));
        Tensor fy = cast(f.eval(cast(y_new, comp), x_c), acc);
        Tensor z_new = add(scale(z, one_minus_beta), scale(fy, beta));
        res.residual = std::max(max_diff(y_new, y), max_diff(z_new, z));
        ReversibleState last{y, z, n};
        check_divergence(y_new, res.residual, last, n + 1);
        check_divergence(z_new, res.residual, last, n + 1);
        y = std::move(y_new);
        z = std::move(z_new);
        ++res.steps_taken;
        res.nfe += 2;
        if (observer) observer(res.steps_taken, ReversibleState{y, z, res.steps_taken});
        if (cfg.stop_rule == StopRule::residual && res.residual < cfg.tol) break;
    }
    res.converged = res.residual < cfg.tol;
    res.state = ReversibleState{std::move(y), std::move(z), res.steps_taken};
    return res;
}

ReversibleState reversible_backward_step(const EquilibriumFunction& f, const Tensor& x,
                                         const ReversibleState& state_next, double beta,
                                         const PrecisionPolicy& policy) {
    if (std::fabs(1.0 - beta) < kBetaFloor)
        throw config_error("reversible_backward_step: |1 - beta| must be >= 1e-3, got beta = " +
                           std::to_string(beta));
    Precision comp = policy.compute;
    Precision acc = policy.accumulate;
    Tensor x_c = cast(x, comp);
    double inv = 1.0 / (1.0 - beta);

    Tensor fy = cast(f.eval(cast(state_next.y, comp), x_c), acc);
    Tensor z_prev = scale(subtract(state_next.z, scale(fy, beta)), inv);
    Tensor fz = cast(f.eval(cast(z_prev, comp), x_c), acc);
    Tensor y_prev = scale(subtract(state_next.y, scale(fz, beta)), inv);
    return ReversibleState{std::move(y_prev), std::move(z_prev), state_next.step - 1};
}

double rate_constant(double beta, double k) {
    if (k < 0.0 || k >= 1.0)
        throw domain_error("rate_constant: k must lie in [0, 1), got " + std::to_string(k));
    if (beta <= 0.0)
        throw domain_error("rate_constant: beta must be positive, got " + std::to_string(beta));
    return std::fabs(1.0 - beta) + beta * k;
}

double rate_constant_coupled(double beta, double k) {
    if (k < 0.0 || k >= 1.0)
        throw domain_error("rate_constant_coupled: k must lie in [0, 1), got " +
                           std::to_string(k));
    if (beta <= 0.0)
        throw domain_error("rate_constant_coupled: beta must be positive, got " +
                           std::to_string(beta));
    double d = std::fabs(1.0 - beta);
    return d + beta * k * d + beta * beta * k * k;
}

double beta_upper_bound(double k) {
    if (k < 0.0 || k >= 1.0)
        throw domain_error("beta_upper_bound: k must lie in [0, 1), got " + std::to_string(k));
    return 2.0 / (k + 1.0);
}

}  // namespace revdeq
