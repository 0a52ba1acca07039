#include "revdeq/rng.hpp"

#include <cmath>

namespace revdeq {

std::uint64_t Rng::next_u64() {
    // splitmix64 (Steele, Lea, Flood 2014; public domain reference constants)
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
}

std::size_t Rng::index(std::size_t n) {
    return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
}

Tensor Rng::normal_tensor(std::vector<std::size_t> shape, double stddev, Precision prec) {
    Tensor t(std::move(shape), prec);
    for (std::size_t i = 0; i < t.size(); ++i)
        t.at(i) = quantize(stddev * normal(), prec);
    return t;
}

}  // namespace revdeq
