#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "revdeq/lab.hpp"

namespace revdeq {

// Flat run configuration shared by every CLI subcommand. Grid-valued fields
// use either "lo:hi:step" (inclusive range) or a comma list. Values come from
// defaults, then an optional JSON config file, then flags (flags win).
struct RunConfig {
    // solver
    double beta = 0.8;
    double tol = 1e-6;
    int max_steps = 8;
    std::string precision = "double";  // double | mixed | single
    std::string stop = "fixed";        // fixed | residual

    // model / engine
    std::string cell = "mlp:8:16:0.9";  // linear:K or mlp:WIDTH:HIDDEN:K
    std::string engine = "reversible";  // reversible | ift | unrolled | jfb
    std::uint64_t seed = 0;

    // experiment grids
    std::string beta_grid = "0.5:1.3:0.1";
    std::string k_grid = "0.1:0.9:0.2";
    std::string n_grid = "2,4,8,16,32";
    std::string policy_grid = "double,mixed,single";
    int sweep_max_steps = 10000;  // rate-measurement budget per grid point

    // training task
    std::string dataset = "two-spirals";
    int n_per_class = 100;
    double noise = 0.05;
    double turns = 2.5;
    std::uint64_t data_seed = 42;
    int width = 12;
    int hidden = 24;
    double k = 0.9;
    double lr0 = 0.25;
    int train_steps = 2000;
    int batch = 32;
    double weight_cap = 2.5;
    int solver_steps = 4;
    int window = 200;
    int patience = 50;
    int cooldown = 200;
    double floor_factor = 1e-3;

    // io
    std::string out;              // CSV path (resolved against REVDEQ_OUT_DIR)
    std::string checkpoint_path;  // optional checkpoint target for train

    // Merge a JSON object file over this config; unknown keys are rejected
    // by name, as are values of the wrong type.
    void load_file(const std::filesystem::path& path);

    TrainTask to_train_task() const;
    ExperimentSpec to_experiment_spec(const std::string& kind) const;
    SolverConfig to_solver_config() const;
};

// "lo:hi:step" inclusive range (half-step slack on the endpoint) or comma
// list; a bare number is a one-element grid.
std::vector<double> parse_double_grid(const std::string& text);
std::vector<int> parse_int_grid(const std::string& text);

// Relative paths resolve against $REVDEQ_OUT_DIR when it is set.
std::filesystem::path resolve_out_path(const std::string& out);

}  // namespace revdeq
