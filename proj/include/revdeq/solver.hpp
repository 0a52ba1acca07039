#pragma once

#include <functional>

#include "revdeq/cell.hpp"
#include "revdeq/tensor.hpp"

namespace revdeq {

enum class StopRule { fixed_steps, residual };
enum class SolverKind { naive, relaxed, reversible };

struct SolverConfig {
    double beta = 0.8;
    double tol = 1e-6;
    int max_steps = 8;
    PrecisionPolicy policy{};
    StopRule stop_rule = StopRule::fixed_steps;

    void validate(SolverKind kind) const;
};

// Coupled solver state. At step 0 both y and z are zero vectors.
struct ReversibleState {
    Tensor y;
    Tensor z;
    int step = 0;
};

struct SolveResult {
    ReversibleState state;  // non-reversible solvers fill y = z
    double residual = 0.0;
    int steps_taken = 0;
    int nfe = 0;  // 2 per step for the reversible solver, 1 otherwise
    bool converged = false;
};

// Thrown when an iterate becomes non-finite or the residual exceeds 1e12;
// carries the last finite state.
class divergence_error : public error {
public:
    divergence_error(const std::string& msg, ReversibleState last)
        : error(msg), last_state(std::move(last)) {}
    ReversibleState last_state;
};

// Observer runs after every completed step (both states updated).
using StepObserver = std::function<void(int step, const ReversibleState&)>;

// z_{n+1} = f(z_n, x) from z_0 = 0, stop at ||dz||_inf < tol or max_steps.
SolveResult naive_iterate(const EquilibriumFunction& f, const Tensor& x,
                          const SolverConfig& cfg, const StepObserver& observer = {});

// z_{n+1} = (1-beta) z_n + beta f(z_n, x); beta = 1 reduces to naive_iterate.
SolveResult relaxed_iterate(const EquilibriumFunction& f, const Tensor& x,
                            const SolverConfig& cfg, const StepObserver& observer = {});

// Coupled scheme from y_0 = z_0 = 0:
//   y_{n+1} = (1-beta) y_n + beta f(z_n, x)
//   z_{n+1} = (1-beta) z_n + beta f(y_{n+1}, x)
// f runs at compute precision, the mixing arithmetic at accumulate precision.
SolveResult reversible_forward(const EquilibriumFunction& f, const Tensor& x,
                               const SolverConfig& cfg, const StepObserver& observer = {});

// Algebraic inverse of one forward step:
//   z_n = (z_{n+1} - beta f(y_{n+1}, x)) / (1-beta)
//   y_n = (y_{n+1} - beta f(z_n, x)) / (1-beta)
ReversibleState reversible_backward_step(const EquilibriumFunction& f, const Tensor& x,
                                         const ReversibleState& state_next, double beta,
                                         const PrecisionPolicy& policy = {});

// L = |1-beta| + beta k, the per-step error contraction factor.
double rate_constant(double beta, double k);
// Contraction factor of one full coupled step: |1-b| + bk|1-b| + b^2 k^2.
double rate_constant_coupled(double beta, double k);
// Largest admissible beta: 2 / (k + 1).
double beta_upper_bound(double k);

}  // namespace revdeq
