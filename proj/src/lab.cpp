#include "revdeq/lab.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace revdeq {

// --- datasets ---------------------------------------------------------------

Dataset two_spirals(std::size_t n_per_class, double noise, double turns,
                    std::uint64_t seed) {
    if (n_per_class == 0) throw config_error("two_spirals: n_per_class must be >= 1");
    Rng rng(seed);
    Dataset ds;
    ds.classification = true;
    const double two_pi = 2.0 * 3.14159265358979323846;
    for (int cls = 0; cls < 2; ++cls) {
        double phase = cls == 0 ? 0.0 : 3.14159265358979323846;
        for (std::size_t i = 0; i < n_per_class; ++i) {
            double t = rng.uniform();
            double rad = 0.25 + 2.0 * t;
            double ang = turns * two_pi * t + phase;
            double px = rad * std::cos(ang) + noise * rng.normal();
            double py = rad * std::sin(ang) + noise * rng.normal();
            ds.inputs.push_back(Tensor::vector({px, py}));
            ds.targets.push_back(cls == 0 ? 1.0 : -1.0);
        }
    }
    return ds;
}

Dataset synthetic_regression(std::size_t n, double noise, std::uint64_t seed) {
    if (n == 0) throw config_error("synthetic_regression: n must be >= 1");
    Rng rng(seed);
    Dataset ds;
    ds.classification = false;
    for (std::size_t i = 0; i < n; ++i) {
        double u0 = rng.uniform(-2.0, 2.0);
        double u1 = rng.uniform(-2.0, 2.0);
        double y = std::sin(2.0 * u0) + 0.5 * std::cos(3.0 * u1) + noise * rng.normal();
        ds.inputs.push_back(Tensor::vector({u0, u1}));
        ds.targets.push_back(y);
    }
    return ds;
}

// --- validation ---------------------------------------------------------------

void ScheduleConfig::validate() const {
    if (window < 1) throw config_error("schedule: window must be >= 1");
    if (patience < 1) throw config_error("schedule: patience must be >= 1");
    if (cooldown < 0) throw config_error("schedule: cooldown must be >= 0");
    if (!(floor_factor > 0.0) || floor_factor > 1.0)
        throw config_error("schedule: floor_factor must be in (0, 1]");
}

void TrainTask::validate() const {
    if (dataset != "two-spirals" && dataset != "synthetic-regression")
        throw config_error("unknown dataset '" + dataset +
                           "' (expected two-spirals|synthetic-regression)");
    if (n_per_class == 0) throw config_error("train task: n_per_class must be >= 1");
    if (width == 0 || hidden == 0)
        throw config_error("train task: width and hidden must be >= 1");
    if (!(k > 0.0) || k >= 1.0) throw config_error("train task: k must be in (0, 1)");
    if (solver_steps < 0) throw config_error("train task: solver steps must be >= 0");
    if (solver_steps > 0) {
        SolverConfig probe;
        probe.beta = beta;
        probe.max_steps = solver_steps;
        probe.validate(SolverKind::reversible);
    }
    if (!(lr0 > 0.0)) throw config_error("train task: lr0 must be positive");
    if (steps < 1) throw config_error("train task: steps must be >= 1");
    if (batch == 0) throw config_error("train task: batch must be >= 1");
    if (!(weight_cap > 0.0)) throw config_error("train task: weight_cap must be positive");
    schedule.validate();
}

// --- training ----------------------------------------------------------------

namespace {

constexpr std::size_t kInputDim = 2;

struct LabModel {
    Tensor Win;  // hidden x 2, embeds the raw input into the injection slot
    std::unique_ptr<EquilibriumFunction> cell;
    MlpCell* mlp = nullptr;  // same object, for the spectral rail
    Tensor Wout;  // width
    double bout = 0.0;
};

LabModel make_model(const TrainTask& task) {
    LabModel m;
    m.cell = make_mlp_cell(task.width, task.hidden, task.k, task.seed);
    m.mlp = dynamic_cast<MlpCell*>(m.cell.get());
    Rng head(task.seed + 500);
    m.Win = head.normal_tensor({task.hidden, kInputDim}, 2.0);
    m.Wout = head.normal_tensor({task.width}, 0.3);
    m.bout = 0.0;
    return m;
}

struct SampleEval {
    double loss = 0.0;
    double logit = 0.0;
    Tensor z;  // state the readout saw
    SolveResult solve;
    bool solved = false;
};

double stable_logistic_loss(double margin) {
    return margin > 0.0 ? std::log1p(std::exp(-margin))
                        : -margin + std::log1p(std::exp(margin));
}

// d loss / d logit for the logistic loss at the given margin = target * logit.
double logistic_dlogit(double target, double margin) {
    double s;  // sigmoid(-margin)
    if (margin > 0.0) {
        double e = std::exp(-margin);
        s = e / (1.0 + e);
    } else {
        s = 1.0 / (1.0 + std::exp(margin));
    }
    return -target * s;
}

SampleEval eval_sample(const LabModel& m, const Tensor& input, double target,
                       bool classification, const SolverConfig& cfg, int N) {
    SampleEval ev;
    Tensor x_inj = matmul(m.Win, input);
    if (N == 0) {
        ev.z = Tensor(std::vector<std::size_t>{m.cell->width()});
    } else {
        ev.solve = reversible_forward(*m.cell, x_inj, cfg);
        ev.solved = true;
        ev.z = ev.solve.state.z;
    }
    ev.logit = dot(m.Wout, ev.z) + m.bout;
    if (classification) {
        ev.loss = stable_logistic_loss(target * ev.logit);
    } else {
        double d = ev.logit - target;
        ev.loss = d * d;
    }
    return ev;
}

struct Grads {
    std::vector<Tensor> cell;  // one per cell parameter
    Tensor Win;
    Tensor Wout;
    double bout = 0.0;
};

Grads zero_grads(const LabModel& m) {
    Grads g;
    for (std::size_t i = 0; i < m.cell->num_params(); ++i)
        g.cell.push_back(Tensor::zeros_like(m.cell->param(i)));
    g.Win = Tensor::zeros_like(m.Win);
    g.Wout = Tensor::zeros_like(m.Wout);
    return g;
}

// Full-dataset forward metrics (mean loss, accuracy for classification).
std::pair<double, double> dataset_metrics(const LabModel& m, const Dataset& ds,
                                          const SolverConfig& cfg, int N) {
    double loss_sum = 0.0;
    double correct = 0.0;
    for (std::size_t i = 0; i < ds.inputs.size(); ++i) {
        SampleEval ev = eval_sample(m, ds.inputs[i], ds.targets[i], ds.classification, cfg, N);
        loss_sum += ev.loss;
        if (ds.classification) {
            double pred = ev.logit >= 0.0 ? 1.0 : -1.0;
            if (pred == ds.targets[i]) correct += 1.0;
        }
    }
    double n = static_cast<double>(ds.inputs.size());
    return {loss_sum / n, ds.classification ? correct / n : 0.0};
}

Dataset load_dataset(const TrainTask& task) {
    if (task.dataset == "two-spirals")
        return two_spirals(task.n_per_class, task.noise, task.turns, task.data_seed);
    return synthetic_regression(task.n_per_class * 2, task.noise, task.data_seed);
}

}  // namespace

TrainResult train(const TrainTask& task, Engine engine) {
    task.validate();
    Dataset ds = load_dataset(task);
    LabModel m = make_model(task);
    Rng batch_rng(task.seed + 1000);

    const int N = task.solver_steps;
    SolverConfig cfg;
    cfg.beta = task.beta;
    cfg.tol = 1e-6;
    cfg.max_steps = std::max(N, 1);
    cfg.stop_rule = StopRule::fixed_steps;

    TrainResult out;
    double lr = task.lr0;
    const double lr_floor = task.lr0 * task.schedule.floor_factor;

    // Plateau schedule state: running mean of the last `window` step losses.
    std::vector<double> loss_hist;
    double window_sum = 0.0;
    double best_mean = std::numeric_limits<double>::infinity();
    int bad_steps = 0;
    int cooldown_until = 0;

    long long nfe_total = 0;
    const double inv_batch = 1.0 / static_cast<double>(task.batch);

    for (int step = 1; step <= task.steps; ++step) {
        Grads g = zero_grads(m);
        double batch_loss = 0.0;
        double batch_correct = 0.0;

        try {
            for (std::size_t bi = 0; bi < task.batch; ++bi) {
                std::size_t idx = batch_rng.index(ds.inputs.size());
                const Tensor& input = ds.inputs[idx];
                double target = ds.targets[idx];

                Tensor x_inj = matmul(m.Win, input);
                SampleEval ev =
                    eval_sample(m, input, target, ds.classification, cfg, N);
                batch_loss += ev.loss;
                if (ds.classification) {
                    double pred = ev.logit >= 0.0 ? 1.0 : -1.0;
                    if (pred == target) batch_correct += 1.0;
                }

                double dlogit = ds.classification
                                    ? logistic_dlogit(target, target * ev.logit)
                                    : 2.0 * (ev.logit - target);

                axpy(g.Wout, dlogit, ev.z);
                g.bout += dlogit;

                if (N > 0) {
                    Tensor ct = scale(m.Wout, dlogit);
                    GradientReport rep;
                    switch (engine) {
                        case Engine::reversible:
                            rep = reversible_backprop(*m.cell, x_inj, ev.solve, ct, cfg);
                            break;
                        case Engine::unrolled:
                            rep = unrolled_gradient(*m.cell, x_inj, cfg, ct);
                            break;
                        case Engine::ift:
                            rep = ift_gradient(*m.cell, x_inj, ev.solve.state.z, ct, cfg);
                            break;
                        case Engine::jfb:
                            rep = jfb_gradient(*m.cell, x_inj, ev.solve.state.z, ct);
                            break;
                    }
                    for (std::size_t i = 0; i < g.cell.size(); ++i)
                        axpy(g.cell[i], 1.0, rep.theta_grad[i]);
                    axpy_outer(g.Win, 1.0, rep.x_grad, input);
                    nfe_total += ev.solve.nfe + rep.nfe_backward;
                    if (engine == Engine::unrolled) nfe_total += rep.nfe_forward;
                }
            }
        } catch (const divergence_error&) {
            out.diverged = true;
        }

        batch_loss *= inv_batch;
        if (!std::isfinite(batch_loss)) out.diverged = true;
        if (out.diverged) break;

        // SGD update with the batch mean.
        double eta = lr * inv_batch;
        for (std::size_t i = 0; i < g.cell.size(); ++i)
            axpy(m.cell->param(i), -eta, g.cell[i]);
        axpy(m.Win, -eta, g.Win);
        axpy(m.Wout, -eta, g.Wout);
        m.bout -= eta * g.bout;

        // Stability rail: cap the product of the cell layer spectral norms.
        double s1 = spectral_norm(m.cell->param(0));
        double s2 = spectral_norm(m.cell->param(2));
        double prod = s1 * s2;
        if (prod > task.weight_cap) {
            double c = std::sqrt(task.weight_cap / prod);
            m.cell->param(0) = scale(m.cell->param(0), c);
            m.cell->param(2) = scale(m.cell->param(2), c);
        }
        if (m.mlp) m.mlp->refresh_k();

        MetricsRow row;
        row.step = step;
        row.loss = batch_loss;
        row.accuracy = ds.classification
                           ? batch_correct / static_cast<double>(task.batch)
                           : 0.0;
        row.nfe_cumulative = nfe_total;
        out.rows.push_back(row);
        out.steps_completed = step;

        // Plateau schedule.
        loss_hist.push_back(batch_loss);
        window_sum += batch_loss;
        std::size_t w = static_cast<std::size_t>(task.schedule.window);
        if (loss_hist.size() > w) window_sum -= loss_hist[loss_hist.size() - 1 - w];
        if (loss_hist.size() >= w) {
            double mean = window_sum / static_cast<double>(w);
            if (mean < best_mean) {
                best_mean = mean;
                bad_steps = 0;
            } else if (step >= cooldown_until) {
                ++bad_steps;
            }
            if (bad_steps >= task.schedule.patience && step >= cooldown_until &&
                lr > lr_floor) {
                lr = std::max(lr * 0.5, lr_floor);
                cooldown_until = step + task.schedule.cooldown;
                bad_steps = 0;
                best_mean = mean;
            }
        }
    }

    out.final_lr = lr;
    out.rng_state = batch_rng.state();
    if (!out.diverged) {
        try {
            auto [floss, facc] = dataset_metrics(m, ds, cfg, N);
            out.final_loss = floss;
            out.final_accuracy = facc;
        } catch (const divergence_error&) {
            out.diverged = true;
        }
    }
    if (out.diverged) {
        out.final_loss = std::numeric_limits<double>::quiet_NaN();
        out.final_accuracy = 0.0;
    }

    out.final_params.emplace_back("Win", m.Win);
    for (std::size_t i = 0; i < m.cell->num_params(); ++i)
        out.final_params.emplace_back("cell." + m.cell->param_name(i), m.cell->param(i));
    out.final_params.emplace_back("Wout", m.Wout);
    out.final_params.emplace_back("bout", Tensor::scalar(m.bout));
    return out;
}

Csv metrics_to_csv(const std::vector<MetricsRow>& rows) {
    Csv csv({"step", "loss", "accuracy", "nfe_cumulative"});
    for (const auto& r : rows)
        csv.add_row({std::to_string(r.step), format_double(r.loss),
                     format_double(r.accuracy), std::to_string(r.nfe_cumulative)});
    return csv;
}

// --- experiments --------------------------------------------------------------

void ExperimentSpec::validate() const {
    if (kind != "convergence" && kind != "reconstruction" &&
        kind != "gradient-accuracy" && kind != "nfe")
        throw config_error("unknown experiment kind '" + kind +
                           "' (expected convergence|reconstruction|gradient-accuracy|nfe)");
    if (betas.empty() || ks.empty() || Ns.empty() || policies.empty())
        throw config_error("experiment spec: all grids must be non-empty");
    if (!(tol > 0.0)) throw config_error("experiment spec: tol must be positive");
    if (max_steps < 1) throw config_error("experiment spec: max_steps must be >= 1");
    if (width == 0 || hidden == 0)
        throw config_error("experiment spec: width and hidden must be >= 1");
    for (const auto& p : policies) p.validate();

    SolverKind solver_kind =
        kind == "convergence" ? SolverKind::relaxed : SolverKind::reversible;
    for (double b : betas) {
        SolverConfig probe;
        probe.beta = b;
        probe.tol = tol;
        probe.max_steps = max_steps;
        probe.validate(solver_kind);
    }
    for (double k : ks) {
        if (kind == "convergence") {
            if (k < 0.0 || k >= 1.0)
                throw config_error("experiment spec: convergence needs k in [0, 1)");
        } else if (!(k > 0.0) || k >= 1.0) {
            throw config_error("experiment spec: cell k must be in (0, 1)");
        }
    }
    int n_min = kind == "nfe" ? 0 : 1;  // the nfe sweep admits the bypass N = 0
    for (int n : Ns)
        if (n < n_min)
            throw config_error("experiment spec: N values must be >= " +
                               std::to_string(n_min));
}

std::vector<ConvergenceRow> convergence_sweep(const ExperimentSpec& spec) {
    spec.validate();
    std::vector<ConvergenceRow> rows;
    const std::size_t d = spec.width;

    for (double k : spec.ks) {
        Tensor A({d, d});
        for (std::size_t i = 0; i < d; ++i) A.at(i, i) = k;
        Tensor b(std::vector<std::size_t>{d});
        for (std::size_t i = 0; i < d; ++i) b.at(i) = 1.0;
        auto cell = make_linear_cell(A, b);
        Tensor x(std::vector<std::size_t>{d});
        // Fixed point of z = k z + 1 (x = 0), per coordinate.
        Tensor q(std::vector<std::size_t>{d});
        for (std::size_t i = 0; i < d; ++i) q.at(i) = 1.0 / (1.0 - k);

        for (double beta : spec.betas) {
            SolverConfig cfg;
            cfg.beta = beta;
            cfg.tol = spec.tol;
            cfg.max_steps = spec.max_steps;
            cfg.stop_rule = StopRule::residual;

            std::vector<double> errs;
            errs.push_back(vector_norm(q, NormKind::max));  // z_0 = 0
            ConvergenceRow row;
            row.k = k;
            row.beta = beta;
            row.L_predicted = rate_constant(beta, k);
            try {
                SolveResult res = relaxed_iterate(
                    *cell, x, cfg, [&](int, const ReversibleState& s) {
                        errs.push_back(vector_norm(subtract(s.z, q), NormKind::max));
                    });
                row.converged = res.converged;
                row.steps_to_tol = res.converged ? res.steps_taken : -1;
            } catch (const divergence_error&) {
                row.converged = false;
                row.steps_to_tol = -1;
            }

            // Geometric mean of successive error ratios from step 2 on; the
            // first step is skipped (transient).
            double log_sum = 0.0;
            int count = 0;
            for (std::size_t n = 2; n < errs.size(); ++n) {
                if (errs[n - 1] < 1e-300 || errs[n] <= 0.0) break;
                log_sum += std::log(errs[n] / errs[n - 1]);
                ++count;
            }
            row.L_measured = count > 0 ? std::exp(log_sum / count) : 0.0;
            rows.push_back(row);
        }
    }
    return rows;
}

Csv convergence_to_csv(const std::vector<ConvergenceRow>& rows) {
    Csv csv({"k", "beta", "L_predicted", "L_measured", "steps_to_tol", "converged"});
    for (const auto& r : rows)
        csv.add_row({format_double(r.k), format_double(r.beta),
                     format_double(r.L_predicted), format_double(r.L_measured),
                     std::to_string(r.steps_to_tol), r.converged ? "true" : "false"});
    return csv;
}

std::vector<ReconstructionRow> reconstruction_bench(const ExperimentSpec& spec) {
    spec.validate();
    std::vector<ReconstructionRow> rows;

    std::uint64_t cell_seed = spec.seed;
    for (double k : spec.ks) {
        auto cell = make_mlp_cell(spec.width, spec.hidden, k, cell_seed++);
        Rng xrng(spec.seed + 9000 + cell_seed);
        Tensor x = xrng.normal_tensor({spec.hidden});

        for (const auto& policy : spec.policies) {
            for (double beta : spec.betas) {
                for (int N : spec.Ns) {
                    SolverConfig cfg;
                    cfg.beta = beta;
                    cfg.tol = spec.tol;
                    cfg.max_steps = N;
                    cfg.policy = policy;
                    cfg.stop_rule = StopRule::fixed_steps;

                    std::vector<ReversibleState> traj;
                    traj.push_back(ReversibleState{
                        Tensor(std::vector<std::size_t>{spec.width}, policy.accumulate),
                        Tensor(std::vector<std::size_t>{spec.width}, policy.accumulate),
                        0});
                    ReconstructionRow row;
                    row.policy = policy.name();
                    row.beta = beta;
                    row.N = N;
                    row.k = k;
                    try {
                        SolveResult res = reversible_forward(
                            *cell, x, cfg,
                            [&](int, const ReversibleState& s) { traj.push_back(s); });

                        double err = 0.0;
                        ReversibleState st = res.state;
                        for (int j = res.steps_taken; j >= 1; --j) {
                            st = reversible_backward_step(*cell, x, st, beta, policy);
                            if (!st.y.all_finite() || !st.z.all_finite()) {
                                err = std::numeric_limits<double>::infinity();
                                break;
                            }
                            const ReversibleState& ref = traj[static_cast<std::size_t>(j - 1)];
                            err = std::max(err, vector_norm(subtract(st.y, ref.y), NormKind::max));
                            err = std::max(err, vector_norm(subtract(st.z, ref.z), NormKind::max));
                        }
                        row.max_roundtrip_error = err;
                    } catch (const divergence_error&) {
                        row.max_roundtrip_error = std::numeric_limits<double>::infinity();
                    }
                    rows.push_back(row);
                }
            }
        }
    }
    return rows;
}

Csv reconstruction_to_csv(const std::vector<ReconstructionRow>& rows) {
    Csv csv({"policy", "beta", "N", "k", "max_roundtrip_error"});
    for (const auto& r : rows)
        csv.add_row({r.policy, format_double(r.beta), std::to_string(r.N),
                     format_double(r.k), format_double(r.max_roundtrip_error)});
    return csv;
}

std::vector<GradientBenchRow> gradient_accuracy_bench(const ExperimentSpec& spec) {
    spec.validate();
    const double k = spec.ks.front();
    const double beta = spec.betas.front();
    const PrecisionPolicy policy = spec.policies.front();

    auto cell = make_mlp_cell(spec.width, spec.hidden, k, spec.seed);
    Rng xrng(spec.seed + 7000);
    Tensor x = xrng.normal_tensor({spec.hidden});
    Tensor ct(std::vector<std::size_t>{spec.width});
    for (std::size_t i = 0; i < ct.size(); ++i) ct.at(i) = 1.0;

    constexpr int kOracleSteps = 256;
    SolverConfig oracle_cfg;
    oracle_cfg.beta = beta;
    oracle_cfg.tol = spec.tol;
    oracle_cfg.max_steps = kOracleSteps;
    oracle_cfg.policy = policy;
    oracle_cfg.stop_rule = StopRule::fixed_steps;
    GradientReport oracle = unrolled_gradient(*cell, x, oracle_cfg, ct);

    auto error_vs_oracle = [&](const GradientReport& rep) {
        double e = max_relerr(rep.theta_grad, oracle.theta_grad);
        return std::max(e, max_relerr(rep.x_grad, oracle.x_grad));
    };

    std::vector<GradientBenchRow> rows;
    for (int N : spec.Ns) {
        SolverConfig cfg = oracle_cfg;
        cfg.max_steps = N;

        // The unrolled gradient of the same N-step graph is the reference for
        // the reversible engine (exactness); its own row reports the
        // truncation gap against the long-N oracle.
        GradientReport unr = unrolled_gradient(*cell, x, cfg, ct);
        SolveResult res = reversible_forward(*cell, x, cfg);
        GradientReport rev = reversible_backprop(*cell, x, res, ct, cfg);
        double rev_err = std::max(max_relerr(rev.theta_grad, unr.theta_grad),
                                  max_relerr(rev.x_grad, unr.x_grad));
        rows.push_back({"reversible", N, rev_err, res.nfe + rev.nfe_backward});
        rows.push_back({"unrolled", N, error_vs_oracle(unr),
                        unr.nfe_forward + unr.nfe_backward});
    }

    SolveResult star = reversible_forward(*cell, x, oracle_cfg);
    for (int m : spec.Ns) {
        SolverConfig acfg = oracle_cfg;
        acfg.max_steps = m;
        GradientReport ift = ift_gradient(*cell, x, star.state.z, ct, acfg);
        rows.push_back({"ift", m, error_vs_oracle(ift), star.nfe + ift.nfe_backward});
    }

    GradientReport jfb = jfb_gradient(*cell, x, star.state.z, ct);
    rows.push_back({"jfb", 0, error_vs_oracle(jfb), star.nfe + jfb.nfe_backward});
    return rows;
}

Csv gradient_bench_to_csv(const std::vector<GradientBenchRow>& rows) {
    Csv csv({"engine", "steps", "error_vs_oracle", "nfe"});
    for (const auto& r : rows)
        csv.add_row({r.engine, std::to_string(r.steps), format_double(r.error_vs_oracle),
                     std::to_string(r.nfe)});
    return csv;
}

std::vector<NfeRow> nfe_sweep(const TrainTask& task, const std::vector<int>& Ns,
                              Engine engine) {
    if (Ns.empty()) throw config_error("nfe sweep: N grid must be non-empty");
    std::vector<NfeRow> rows;
    for (int N : Ns) {
        if (N < 0) throw config_error("nfe sweep: N values must be >= 0");
        std::vector<double> losses;
        for (std::uint64_t s = 0; s < 3; ++s) {
            TrainTask t = task;
            t.solver_steps = N;
            t.seed = task.seed + s;
            losses.push_back(train(t, engine).final_loss);
        }
        // Median of three; NaN (diverged run) sorts to the top.
        std::sort(losses.begin(), losses.end(), [](double a, double b) {
            if (std::isnan(a)) return false;
            if (std::isnan(b)) return true;
            return a < b;
        });
        rows.push_back({N, 2 * N, losses[1]});
    }
    return rows;
}

Csv nfe_to_csv(const std::vector<NfeRow>& rows) {
    Csv csv({"N", "nfe", "final_loss"});
    for (const auto& r : rows)
        csv.add_row({std::to_string(r.N), std::to_string(r.nfe),
                     format_double(r.final_loss)});
    return csv;
}

}  // namespace revdeq
