#include "revdeq/gradients.hpp"

#include <cmath>

#include "revdeq/tape.hpp"

namespace revdeq {

std::string engine_name(Engine e) {
    switch (e) {
        case Engine::reversible: return "reversible";
        case Engine::ift: return "ift";
        case Engine::unrolled: return "unrolled";
        default: return "jfb";
    }
}

Engine engine_from_name(const std::string& name) {
    if (name == "reversible") return Engine::reversible;
    if (name == "ift") return Engine::ift;
    if (name == "unrolled") return Engine::unrolled;
    if (name == "jfb") return Engine::jfb;
    throw config_error("unknown engine '" + name + "' (expected reversible|ift|unrolled|jfb)");
}

double relerr(double a, double b) {
    return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1.0});
}

double max_relerr(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "max_relerr");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, relerr(a[i], b[i]));
    return m;
}

double max_relerr(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
    if (a.size() != b.size())
        throw shape_error("max_relerr: tensor collections differ in length");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, max_relerr(a[i], b[i]));
    return m;
}

namespace {

// Live-tensor accounting for the peak_stored_tensors report field.
struct MemCounter {
    int live = 0;
    int peak = 0;
    void alloc(int n = 1) {
        live += n;
        peak = std::max(peak, live);
    }
    void release(int n = 1) { live -= n; }
};

struct AdjointBuffers {
    Tensor y_bar, z_bar, x_bar;
    std::vector<Tensor> theta_bar;
};

AdjointBuffers init_adjoints(const EquilibriumFunction& f, const Tensor& loss_cotangent,
                             Precision acc, MemCounter& mem) {
    AdjointBuffers adj;
    adj.z_bar = cast(loss_cotangent, acc);
    adj.y_bar = Tensor(std::vector<std::size_t>{f.width()}, acc);
    adj.x_bar = Tensor(std::vector<std::size_t>{f.x_dim()}, acc);
    mem.alloc(3);
    for (std::size_t i = 0; i < f.num_params(); ++i) {
        adj.theta_bar.push_back(Tensor(f.param(i).shape(), acc));
        mem.alloc();
    }
    return adj;
}

// One reverse step of the shared adjoint schedule, given the stored or
// reconstructed states y_{n+1} and z_n. Mutates the buffers in place:
//   y_bar += beta * vjp_z(f at y_{n+1})(z_bar);  theta/x accumulate alike
//   z_bar  = (1-beta) z_bar + beta * vjp_z(f at z_n)(y_bar')
//   y_bar  = (1-beta) y_bar'
void adjoint_step(const EquilibriumFunction& f, const Tensor& x_c, const Tensor& y_next,
                  const Tensor& z_prev, double beta, Precision comp, AdjointBuffers& adj) {
    double one_minus_beta = 1.0 - beta;

    CellVjp v1 = f.vjp(cast(y_next, comp), x_c, cast(adj.z_bar, comp));
    axpy(adj.y_bar, beta, cast(v1.z_bar, adj.y_bar.precision()));
    for (std::size_t i = 0; i < adj.theta_bar.size(); ++i)
        axpy(adj.theta_bar[i], beta, cast(v1.theta_bar[i], adj.theta_bar[i].precision()));
    axpy(adj.x_bar, beta, cast(v1.x_bar, adj.x_bar.precision()));

    adj.z_bar = scale(adj.z_bar, one_minus_beta);
    CellVjp v2 = f.vjp(cast(z_prev, comp), x_c, cast(adj.y_bar, comp));
    axpy(adj.z_bar, beta, cast(v2.z_bar, adj.z_bar.precision()));
    for (std::size_t i = 0; i < adj.theta_bar.size(); ++i)
        axpy(adj.theta_bar[i], beta, cast(v2.theta_bar[i], adj.theta_bar[i].precision()));
    axpy(adj.x_bar, beta, cast(v2.x_bar, adj.x_bar.precision()));

    adj.y_bar = scale(adj.y_bar, one_minus_beta);
}

}  // namespace

GradientReport reversible_backprop(const EquilibriumFunction& f, const Tensor& x,
                                   const SolveResult& result, const Tensor& loss_cotangent,
                                   const SolverConfig& cfg) {
    if (result.steps_taken > 0) cfg.validate(SolverKind::reversible);
    Precision comp = cfg.policy.compute;
    Precision acc = cfg.policy.accumulate;
    Tensor x_c = cast(x, comp);

    MemCounter mem;
    Tensor y = result.state.y;
    Tensor z = result.state.z;
    mem.alloc(2);
    AdjointBuffers adj = init_adjoints(f, loss_cotangent, acc, mem);

    GradientReport rep;
    rep.engine = Engine::reversible;
    rep.nfe_forward = result.nfe;

    PrecisionPolicy policy = cfg.policy;
    for (int n = result.steps_taken; n >= 1; --n) {
        ReversibleState prev =
            reversible_backward_step(f, x, ReversibleState{y, z, n}, cfg.beta, policy);
        mem.alloc(2);  // reconstructed pair
        rep.nfe_backward += 2;
        if (!prev.y.all_finite() || !prev.z.all_finite())
            throw divergence_error("reversible_backprop: reconstruction produced non-finite "
                                   "values at step " + std::to_string(n),
                                   ReversibleState{y, z, n});
        adjoint_step(f, x_c, y, prev.z, cfg.beta, comp, adj);
        rep.nfe_backward += 2;  // two VJP applications, one forward recording each
        y = std::move(prev.y);
        z = std::move(prev.z);
        mem.release(2);  // previous pair replaced
    }

    rep.theta_grad = std::move(adj.theta_bar);
    rep.x_grad = std::move(adj.x_bar);
    rep.peak_stored_tensors = mem.peak;
    return rep;
}

GradientReport unrolled_gradient(const EquilibriumFunction& f, const Tensor& x,
                                 const SolverConfig& cfg, const Tensor& loss_cotangent) {
    cfg.validate(SolverKind::reversible);
    Precision comp = cfg.policy.compute;
    Precision acc = cfg.policy.accumulate;
    Tensor x_c = cast(x, comp);

    MemCounter mem;
    // Trajectory tape: states for every step, including the zero initial pair.
    std::vector<ReversibleState> trajectory;
    trajectory.push_back(ReversibleState{Tensor(std::vector<std::size_t>{f.width()}, acc),
                                         Tensor(std::vector<std::size_t>{f.width()}, acc), 0});
    mem.alloc(2);
    SolveResult result = reversible_forward(f, x, cfg, [&](int, const ReversibleState& s) {
        trajectory.push_back(s);
        mem.alloc(2);
    });

    AdjointBuffers adj = init_adjoints(f, loss_cotangent, acc, mem);

    GradientReport rep;
    rep.engine = Engine::unrolled;
    rep.nfe_forward = result.nfe;

    for (int n = result.steps_taken; n >= 1; --n) {
        const ReversibleState& cur = trajectory[static_cast<std::size_t>(n)];
        const ReversibleState& prev = trajectory[static_cast<std::size_t>(n - 1)];
        adjoint_step(f, x_c, cur.y, prev.z, cfg.beta, comp, adj);
        rep.nfe_backward += 2;
    }

    rep.theta_grad = std::move(adj.theta_bar);
    rep.x_grad = std::move(adj.x_bar);
    rep.peak_stored_tensors = mem.peak;
    return rep;
}

GradientReport ift_gradient(const EquilibriumFunction& f, const Tensor& x,
                            const Tensor& z_star, const Tensor& loss_cotangent,
                            const SolverConfig& adjoint_cfg) {
    adjoint_cfg.validate(SolverKind::relaxed);  // beta = 1 (undamped) is admissible here
    Precision comp = adjoint_cfg.policy.compute;
    Precision acc = adjoint_cfg.policy.accumulate;
    Tensor x_c = cast(x, comp);
    Tensor z_c = cast(z_star, comp);

    MemCounter mem;
    Tensor a_z = cast(loss_cotangent, acc);
    Tensor g = a_z;
    mem.alloc(2);

    GradientReport rep;
    rep.engine = Engine::ift;

    double beta = adjoint_cfg.beta;
    double one_minus_beta = 1.0 - beta;
    double residual = 0.0;
    for (int m = 0; m < adjoint_cfg.max_steps; ++m) {
        Tensor jg = cast(f.vjp_z(z_c, x_c, cast(g, comp)), acc);
        ++rep.nfe_backward;
        Tensor g_new = add(scale(g, one_minus_beta), scale(add(jg, a_z), beta));
        residual = vector_norm(subtract(g_new, g), NormKind::max);
        if (!g_new.all_finite() || residual > 1e12)
            throw divergence_error("ift_gradient: adjoint iteration diverged at step " +
                                       std::to_string(m + 1),
                                   ReversibleState{g, g, m});
        g = std::move(g_new);
        if (adjoint_cfg.stop_rule == StopRule::residual && residual < adjoint_cfg.tol) break;
    }

    CellVjp v = f.vjp(z_c, x_c, cast(g, comp));
    ++rep.nfe_backward;
    rep.theta_grad.reserve(f.num_params());
    for (auto& t : v.theta_bar) {
        rep.theta_grad.push_back(cast(t, acc));
        mem.alloc();
    }
    rep.x_grad = cast(v.x_bar, acc);
    mem.alloc();
    rep.peak_stored_tensors = mem.peak;
    return rep;
}

GradientReport jfb_gradient(const EquilibriumFunction& f, const Tensor& x,
                            const Tensor& z_star, const Tensor& loss_cotangent) {
    MemCounter mem;
    CellVjp v = f.vjp(z_star, x, loss_cotangent);
    GradientReport rep;
    rep.engine = Engine::jfb;
    rep.nfe_backward = 1;
    for (auto& t : v.theta_bar) {
        rep.theta_grad.push_back(std::move(t));
        mem.alloc();
    }
    rep.x_grad = std::move(v.x_bar);
    mem.alloc();
    rep.peak_stored_tensors = mem.peak;
    return rep;
}

GradCheckReport grad_check(const EquilibriumFunction& f, const Tensor& x,
                           const SolverConfig& cfg, Engine engine, double fd_eps) {
    // Engine gradient of the scalar loss sum(z_N).
    Tensor ones(std::vector<std::size_t>{f.width()});
    for (std::size_t i = 0; i < ones.size(); ++i) ones.at(i) = 1.0;

    GradientReport rep;
    switch (engine) {
        case Engine::reversible: {
            SolveResult res = reversible_forward(f, x, cfg);
            rep = reversible_backprop(f, x, res, ones, cfg);
            break;
        }
        case Engine::unrolled:
            rep = unrolled_gradient(f, x, cfg, ones);
            break;
        case Engine::ift: {
            SolveResult res = reversible_forward(f, x, cfg);
            rep = ift_gradient(f, x, res.state.z, ones, cfg);
            break;
        }
        case Engine::jfb: {
            SolveResult res = reversible_forward(f, x, cfg);
            rep = jfb_gradient(f, x, res.state.z, ones);
            break;
        }
    }

    // Central differences of the same solve-then-sum map, one parameter
    // tensor at a time.
    GradCheckReport out;
    std::unique_ptr<EquilibriumFunction> probe = f.clone();
    for (std::size_t pi = 0; pi < f.num_params(); ++pi) {
        auto loss_at = [&](const Tensor& p) {
            probe->param(pi) = p;
            SolveResult r = reversible_forward(*probe, x, cfg);
            double s = 0.0;
            for (std::size_t i = 0; i < r.state.z.size(); ++i) s += r.state.z[i];
            return s;
        };
        Tensor fd = finite_diff_grad(loss_at, f.param(pi), fd_eps);
        probe->param(pi) = f.param(pi);

        GradCheckEntry e;
        e.param = f.param_name(pi);
        for (std::size_t i = 0; i < fd.size(); ++i) {
            e.max_abs = std::max(e.max_abs, std::fabs(fd[i] - rep.theta_grad[pi][i]));
            e.max_rel = std::max(e.max_rel, relerr(rep.theta_grad[pi][i], fd[i]));
        }
        out.max_rel = std::max(out.max_rel, e.max_rel);
        out.per_param.push_back(std::move(e));
    }
    return out;
}

}  // namespace revdeq
