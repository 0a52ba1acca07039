#pragma once

#include <cstdint>
#include <vector>

#include "revdeq/tensor.hpp"

namespace revdeq {

// Deterministic generator with a portable state (splitmix64 core). The
// standard <random> distributions are implementation-defined, which would
// break byte-identical CSV output across toolchains, so the few draws we
// need are implemented here.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64();
    double uniform();                       // [0, 1)
    double uniform(double lo, double hi);   // [lo, hi)
    double normal();                        // standard normal, Box-Muller
    std::size_t index(std::size_t n);       // uniform integer in [0, n)

    Tensor normal_tensor(std::vector<std::size_t> shape, double stddev = 1.0,
                         Precision prec = Precision::dbl);

    std::uint64_t state() const { return state_; }
    void set_state(std::uint64_t s) { state_ = s; has_spare_ = false; }

private:
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace revdeq
