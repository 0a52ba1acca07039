// revdeq: command-line front end for the reversible deep-equilibrium lab.
#include <iostream>
#include <memory>

#include "CLI11.hpp"
#include "revdeq/checkpoint.hpp"
#include "revdeq/config.hpp"

namespace {

using namespace revdeq;

std::unique_ptr<EquilibriumFunction> parse_cell(const std::string& spec,
                                                std::uint64_t seed) {
    std::vector<std::string> parts;
    std::string item;
    for (std::size_t i = 0; i <= spec.size(); ++i) {
        if (i == spec.size() || spec[i] == ':') {
            parts.push_back(item);
            item.clear();
        } else {
            item += spec[i];
        }
    }
    try {
        if (parts.size() == 2 && parts[0] == "linear") {
            double k = std::stod(parts[1]);
            Tensor A({1, 1}, {k});
            Tensor b = Tensor::vector({1.0});
            return make_linear_cell(std::move(A), std::move(b));
        }
        if (parts.size() == 4 && parts[0] == "mlp") {
            auto width = static_cast<std::size_t>(std::stoul(parts[1]));
            auto hidden = static_cast<std::size_t>(std::stoul(parts[2]));
            double k = std::stod(parts[3]);
            return make_mlp_cell(width, hidden, k, seed);
        }
    } catch (const std::logic_error&) {
        // fall through to the config_error below
    }
    throw config_error("bad cell spec '" + spec +
                       "' (expected linear:K or mlp:WIDTH:HIDDEN:K)");
}

// Binds flags to a scratch RunConfig and replays only user-set flags over the
// effective config, so the precedence is defaults < config file < flags.
struct Binder {
    CLI::App* sub;
    std::shared_ptr<RunConfig> scratch = std::make_shared<RunConfig>();
    std::shared_ptr<std::string> config_path = std::make_shared<std::string>();
    std::vector<std::function<void(RunConfig&)>> appliers;

    explicit Binder(CLI::App* s, const RunConfig& defaults) : sub(s) {
        *scratch = defaults;
        sub->add_option("--config", *config_path, "JSON config file (flags win)");
    }

    template <typename T>
    CLI::Option* opt(const std::string& name, T RunConfig::* field,
                     const std::string& desc) {
        CLI::Option* o = sub->add_option(name, (*scratch).*field, desc)
                             ->capture_default_str();
        auto sc = scratch;
        appliers.push_back([o, sc, field](RunConfig& cfg) {
            if (o->count() > 0) cfg.*field = (*sc).*field;
        });
        return o;
    }

    RunConfig resolve(const RunConfig& defaults) const {
        RunConfig cfg = defaults;
        if (!config_path->empty()) cfg.load_file(*config_path);
        for (const auto& apply : appliers) apply(cfg);
        return cfg;
    }
};

enum class Sub { solve, grad_check, sweep, reconstruct, train, nfe };

std::shared_ptr<Binder> add_flags(CLI::App* sub, Sub kind, const RunConfig& defaults) {
    auto b = std::make_shared<Binder>(sub, defaults);

    if (kind == Sub::sweep) {
        // Sweep flags take grids where the scalar commands take one value.
        b->opt("--beta,--beta-grid", &RunConfig::beta_grid,
               "beta grid, lo:hi:step or comma list");
        b->opt("--k,--k-grid", &RunConfig::k_grid, "k grid, lo:hi:step or comma list");
    } else {
        b->opt("--beta", &RunConfig::beta, "relaxation factor");
        b->opt("--k", &RunConfig::k, "cell contraction target (training)");
        b->opt("--beta-grid", &RunConfig::beta_grid, "beta grid for experiments");
        b->opt("--k-grid", &RunConfig::k_grid, "k grid for experiments");
    }
    b->opt("--tol", &RunConfig::tol, "residual tolerance");
    if (kind == Sub::grad_check) {
        b->opt("--steps,--max-steps", &RunConfig::max_steps, "solver steps N");
    } else {
        b->opt("--max-steps", &RunConfig::max_steps, "solver step budget");
    }
    b->opt("--precision", &RunConfig::precision, "double|mixed|single");
    b->opt("--stop", &RunConfig::stop, "fixed|residual");
    b->opt("--cell", &RunConfig::cell, "linear:K or mlp:WIDTH:HIDDEN:K");
    b->opt("--engine", &RunConfig::engine, "reversible|ift|unrolled|jfb");
    b->opt("--seed", &RunConfig::seed, "random seed");
    b->opt("--n-grid", &RunConfig::n_grid, "N grid for experiments");
    b->opt("--policy-grid", &RunConfig::policy_grid, "precision policy grid");
    b->opt("--sweep-max-steps", &RunConfig::sweep_max_steps,
           "per-point step budget for the convergence sweep");
    b->opt("--task,--dataset", &RunConfig::dataset,
           "training dataset: spirals|regression");
    b->opt("--n-per-class", &RunConfig::n_per_class, "samples per class");
    b->opt("--noise", &RunConfig::noise, "dataset noise");
    b->opt("--turns", &RunConfig::turns, "spiral turns");
    b->opt("--data-seed", &RunConfig::data_seed, "dataset seed");
    b->opt("--width", &RunConfig::width, "equilibrium state width (training)");
    b->opt("--hidden", &RunConfig::hidden, "cell hidden size (training)");
    b->opt("--lr0", &RunConfig::lr0, "initial learning rate");
    if (kind == Sub::train) {
        b->opt("--steps,--train-steps", &RunConfig::train_steps, "training steps");
    } else {
        b->opt("--train-steps", &RunConfig::train_steps, "training steps");
    }
    b->opt("--batch", &RunConfig::batch, "batch size");
    b->opt("--weight-cap", &RunConfig::weight_cap,
           "max product of cell layer spectral norms");
    b->opt("--solver-steps", &RunConfig::solver_steps, "training solver steps N");
    b->opt("--window", &RunConfig::window, "plateau schedule loss window");
    b->opt("--patience", &RunConfig::patience, "plateau schedule patience");
    b->opt("--cooldown", &RunConfig::cooldown, "plateau schedule cooldown");
    b->opt("--floor-factor", &RunConfig::floor_factor,
           "learning-rate floor as a fraction of lr0");
    b->opt("--out", &RunConfig::out, "output CSV path");
    b->opt("--checkpoint,--checkpoint-path", &RunConfig::checkpoint_path,
           "checkpoint file to write (train)");
    return b;
}

void print_state_vector(const Tensor& z) {
    std::cout << "z = [";
    std::size_t show = std::min<std::size_t>(z.size(), 8);
    for (std::size_t i = 0; i < show; ++i)
        std::cout << (i ? ", " : "") << format_double(z[i]);
    if (show < z.size()) std::cout << ", ...";
    std::cout << "]\n";
}

int run_solve(const RunConfig& cfg) {
    SolverConfig scfg = cfg.to_solver_config();
    scfg.validate(SolverKind::reversible);
    auto cell = parse_cell(cfg.cell, cfg.seed);
    Tensor x(std::vector<std::size_t>{cell->x_dim()});

    SolveResult res;
    try {
        res = reversible_forward(*cell, x, scfg);
    } catch (const divergence_error& e) {
        std::cout << "diverged: " << e.what() << "\n";
        std::cout << "last finite state at step " << e.last_state.step << "\n";
        return 2;
    }

    std::cout << "converged=" << (res.converged ? "true" : "false")
              << " steps=" << res.steps_taken << " residual=" << format_double(res.residual)
              << " nfe=" << res.nfe << "\n";
    print_state_vector(res.state.z);
    double gap = vector_norm(subtract(res.state.y, res.state.z), NormKind::max);
    std::cout << "|y-z|_inf = " << format_double(gap) << "\n";

    if (!cfg.out.empty()) {
        Csv csv({"beta", "k", "steps", "residual", "nfe", "converged"});
        csv.add_row({format_double(scfg.beta), format_double(cell->declared_k()),
                     std::to_string(res.steps_taken), format_double(res.residual),
                     std::to_string(res.nfe), res.converged ? "true" : "false"});
        csv.write_atomic(resolve_out_path(cfg.out));
    }
    return res.converged ? 0 : 2;
}

int run_grad_check(const RunConfig& cfg) {
    SolverConfig scfg = cfg.to_solver_config();
    scfg.stop_rule = StopRule::fixed_steps;  // the check differentiates the N-step map
    scfg.validate(SolverKind::reversible);
    auto cell = parse_cell(cfg.cell, cfg.seed);
    Rng xrng(cfg.seed + 123);
    Tensor x = xrng.normal_tensor({cell->x_dim()});

    Engine engine = engine_from_name(cfg.engine);
    GradCheckReport rep = grad_check(*cell, x, scfg, engine);
    for (const auto& e : rep.per_param)
        std::cout << "param " << e.param << ": max_abs=" << format_double(e.max_abs)
                  << " max_rel=" << format_double(e.max_rel) << "\n";
    std::cout << "max relative discrepancy = " << format_double(rep.max_rel) << "\n";

    if (!cfg.out.empty()) {
        ExperimentSpec spec = cfg.to_experiment_spec("gradient-accuracy");
        spec.betas = {cfg.beta};
        spec.ks = {cell->declared_k()};
        gradient_bench_to_csv(gradient_accuracy_bench(spec))
            .write_atomic(resolve_out_path(cfg.out));
    }
    return 0;
}

int run_sweep(const RunConfig& cfg) {
    ExperimentSpec spec = cfg.to_experiment_spec("convergence");
    auto rows = convergence_sweep(spec);
    std::string out = cfg.out.empty() ? "sweep.csv" : cfg.out;
    convergence_to_csv(rows).write_atomic(resolve_out_path(out));
    std::cout << "wrote " << rows.size() << " rows to " << resolve_out_path(out).string()
              << "\n";
    return 0;
}

int run_reconstruct(const RunConfig& cfg) {
    ExperimentSpec spec = cfg.to_experiment_spec("reconstruction");
    spec.width = 8;
    spec.hidden = 16;
    auto rows = reconstruction_bench(spec);
    std::string out = cfg.out.empty() ? "reconstruct.csv" : cfg.out;
    reconstruction_to_csv(rows).write_atomic(resolve_out_path(out));
    std::cout << "wrote " << rows.size() << " rows to " << resolve_out_path(out).string()
              << "\n";
    return 0;
}

int run_train(const RunConfig& cfg) {
    TrainTask task = cfg.to_train_task();
    task.validate();
    Engine engine = engine_from_name(cfg.engine);
    TrainResult result = train(task, engine);

    std::string out = cfg.out.empty() ? "train_metrics.csv" : cfg.out;
    metrics_to_csv(result.rows).write_atomic(resolve_out_path(out));

    if (!cfg.checkpoint_path.empty()) {
        Checkpoint ck;
        for (const auto& [name, t] : result.final_params) ck.add(name, t);
        ck.add_scalar("opt.lr", result.final_lr);
        ck.add_scalar("opt.step", static_cast<double>(result.steps_completed));
        ck.add_u64("rng.state", result.rng_state);
        ck.add_u64("seed", task.seed);
        ck.save(resolve_out_path(cfg.checkpoint_path));
    }

    std::cout << "steps=" << result.steps_completed
              << " final_loss=" << format_double(result.final_loss)
              << " final_accuracy=" << format_double(result.final_accuracy)
              << " final_lr=" << format_double(result.final_lr)
              << " diverged=" << (result.diverged ? "true" : "false") << "\n";
    return 0;
}

int run_nfe(const RunConfig& cfg) {
    TrainTask task = cfg.to_train_task();
    task.validate();
    std::vector<int> Ns = parse_int_grid(cfg.n_grid);
    auto rows = nfe_sweep(task, Ns, engine_from_name(cfg.engine));
    std::string out = cfg.out.empty() ? "nfe.csv" : cfg.out;
    nfe_to_csv(rows).write_atomic(resolve_out_path(out));
    std::cout << "wrote " << rows.size() << " rows to " << resolve_out_path(out).string()
              << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"revdeq: reversible deep-equilibrium solvers, gradients, and lab"};
    app.require_subcommand(1);
    int exit_code = 0;

    RunConfig solve_defaults;
    solve_defaults.stop = "residual";
    solve_defaults.max_steps = 1000;

    RunConfig nfe_defaults;
    nfe_defaults.n_grid = "0,1,2,4,8";

    RunConfig recon_defaults;
    recon_defaults.beta_grid = "0.5,0.8,0.9";
    recon_defaults.k_grid = "0.5,0.9";
    recon_defaults.n_grid = "2,4,8,16,32";

    struct Entry {
        const char* name;
        const char* desc;
        Sub kind;
        RunConfig defaults;
        int (*fn)(const RunConfig&);
    };
    std::vector<Entry> entries = {
        {"solve", "run the coupled fixed-point solver once", Sub::solve, solve_defaults,
         run_solve},
        {"grad-check", "compare an engine gradient against finite differences",
         Sub::grad_check, RunConfig{}, run_grad_check},
        {"sweep", "convergence-rate sweep over (beta, k)", Sub::sweep, RunConfig{},
         run_sweep},
        {"reconstruct", "backward-reconstruction round-trip errors", Sub::reconstruct,
         recon_defaults, run_reconstruct},
        {"train", "train embedding + equilibrium cell + readout", Sub::train,
         RunConfig{}, run_train},
        {"nfe", "final loss vs compute budget N", Sub::nfe, nfe_defaults, run_nfe},
    };

    for (auto& e : entries) {
        CLI::App* sub = app.add_subcommand(e.name, e.desc);
        auto binder = add_flags(sub, e.kind, e.defaults);
        RunConfig defaults = e.defaults;
        auto fn = e.fn;
        sub->callback([binder, defaults, fn, &exit_code]() {
            RunConfig cfg = binder->resolve(defaults);
            exit_code = fn(cfg);
        });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const revdeq::config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const revdeq::divergence_error& e) {
        std::cerr << "diverged: " << e.what() << "\n";
        return 2;
    } catch (const revdeq::error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return exit_code;
}
