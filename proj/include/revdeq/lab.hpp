#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "revdeq/csv.hpp"
#include "revdeq/gradients.hpp"

namespace revdeq {

// --- datasets ---------------------------------------------------------------

struct Dataset {
    std::vector<Tensor> inputs;   // one vector per sample
    std::vector<double> targets;  // +/-1 labels or regression values
    bool classification = true;
};

// Two interleaved spirals, labels +1/-1. radius = 0.25 + 2t, angle =
// turns*2*pi*t (+ pi for the second class), Gaussian jitter of the given
// noise on both coordinates.
Dataset two_spirals(std::size_t n_per_class, double noise, double turns,
                    std::uint64_t seed);

// y = sin(2 u0) + 0.5 cos(3 u1) + noise, inputs uniform on [-2, 2]^2.
Dataset synthetic_regression(std::size_t n, double noise, std::uint64_t seed);

// --- training ----------------------------------------------------------------

// Plateau schedule on the running mean of recent step losses: when the mean
// has not improved for `patience` consecutive steps, halve the learning rate
// (never below lr0 * floor_factor) and hold for `cooldown` steps.
struct ScheduleConfig {
    int window = 200;
    int patience = 50;
    int cooldown = 200;
    double floor_factor = 1e-3;

    void validate() const;
};

struct TrainTask {
    std::string dataset = "two-spirals";  // or "synthetic-regression"
    std::size_t n_per_class = 100;        // samples per class (or total for regression)
    double noise = 0.05;
    double turns = 2.5;
    std::uint64_t data_seed = 42;

    std::size_t width = 12;   // equilibrium state dimension
    std::size_t hidden = 24;  // cell hidden layer and injection dimension
    double k = 0.9;           // spectral product at construction

    double beta = 0.9;
    int solver_steps = 4;  // N; 0 bypasses the solver (z = 0)

    double lr0 = 0.25;
    int steps = 2000;
    std::size_t batch = 32;
    double weight_cap = 2.5;  // max product of cell layer spectral norms
    ScheduleConfig schedule{};

    std::uint64_t seed = 0;  // model init and batch sampling

    void validate() const;
};

struct MetricsRow {
    int step = 0;
    double loss = 0.0;      // batch mean
    double accuracy = 0.0;  // batch fraction correct (0 for regression)
    long long nfe_cumulative = 0;
};

struct TrainResult {
    std::vector<MetricsRow> rows;
    std::vector<std::pair<std::string, Tensor>> final_params;  // named, fixed order
    double final_loss = 0.0;      // full dataset, after training
    double final_accuracy = 0.0;  // full dataset (0 for regression)
    double final_lr = 0.0;
    int steps_completed = 0;
    std::uint64_t rng_state = 0;  // batch stream state after training
    bool diverged = false;
};

// SGD on embedding + equilibrium cell + linear readout; the chosen engine
// supplies the cell and injection gradients. Deterministic given (task, engine).
TrainResult train(const TrainTask& task, Engine engine);

Csv metrics_to_csv(const std::vector<MetricsRow>& rows);

// --- experiments --------------------------------------------------------------

struct ExperimentSpec {
    std::string kind;  // convergence | reconstruction | gradient-accuracy | nfe
    std::vector<double> betas{0.8};
    std::vector<double> ks{0.5};
    std::vector<int> Ns{8};
    std::vector<PrecisionPolicy> policies{policy_double()};
    std::uint64_t seed = 0;
    double tol = 1e-6;
    int max_steps = 64;     // step budget for rate measurement
    std::size_t width = 4;  // convergence cells; benches use width/hidden below
    std::size_t hidden = 16;

    void validate() const;
};

// Relaxed iteration on f(z) = k z + 1 (diagonal cell, known fixed point);
// L_measured is the geometric mean of successive error ratios from step 2 on.
struct ConvergenceRow {
    double k = 0.0;
    double beta = 0.0;
    double L_predicted = 0.0;
    double L_measured = 0.0;
    int steps_to_tol = -1;  // -1 when tolerance not reached
    bool converged = false;
};
std::vector<ConvergenceRow> convergence_sweep(const ExperimentSpec& spec);
Csv convergence_to_csv(const std::vector<ConvergenceRow>& rows);

// Forward N steps storing the trajectory, then invert back to the origin and
// report the worst absolute deviation from the stored states.
struct ReconstructionRow {
    std::string policy;
    double beta = 0.0;
    int N = 0;
    double k = 0.0;
    double max_roundtrip_error = 0.0;
};
std::vector<ReconstructionRow> reconstruction_bench(const ExperimentSpec& spec);
Csv reconstruction_to_csv(const std::vector<ReconstructionRow>& rows);

// Gradient accuracy on one cell. Reversible rows report the gap to the
// unrolled gradient of the same N-step graph (exactness check); unrolled,
// ift and jfb rows report the gap to a long stored-trajectory oracle
// (N = 256). steps is N for reversible/unrolled rows, the adjoint iteration
// count for ift rows, 0 for jfb.
struct GradientBenchRow {
    std::string engine;
    int steps = 0;
    double error_vs_oracle = 0.0;
    int nfe = 0;
};
std::vector<GradientBenchRow> gradient_accuracy_bench(const ExperimentSpec& spec);
Csv gradient_bench_to_csv(const std::vector<GradientBenchRow>& rows);

// Trains the task at each N (3 seeds, median final loss). nfe is the
// per-sample forward cost 2N.
struct NfeRow {
    int N = 0;
    int nfe = 0;
    double final_loss = 0.0;
};
std::vector<NfeRow> nfe_sweep(const TrainTask& task, const std::vector<int>& Ns,
                              Engine engine = Engine::reversible);
Csv nfe_to_csv(const std::vector<NfeRow>& rows);

}  // namespace revdeq
