#pragma once

#include <cstdint>

#include "streamdit/tensor.hpp"

namespace streamdit {

/// Counter-based deterministic generator: draw n is a pure function of
/// (seed, n), so the sequence is identical across runs and platforms and
/// substreams can be forked without perturbing the parent.
class Rng {
  public:
    explicit Rng(uint64_t seed) : seed_(seed) {}

    uint64_t next_u64() {
        uint64_t z = seed_ + (++counter_) * 0x9E3779B97F4A7C15ull;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform in (0, 1].
    double uniform_pos() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

    /// Standard normal via Box-Muller; consumes exactly two draws.
    double normal() {
        const double u1 = uniform_pos();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    Tensor normal_tensor(std::vector<long> shape) {
        Tensor t(std::move(shape));
        for (auto& x : t.data)
            x = normal();
        return t;
    }

    Tensor uniform_tensor(std::vector<long> shape, double lo, double hi) {
        Tensor t(std::move(shape));
        for (auto& x : t.data)
            x = lo + (hi - lo) * uniform();
        return t;
    }

    /// Derive an independent substream; the parent's counter is untouched.
    Rng fork(uint64_t stream) const {
        uint64_t z = seed_ ^ (0xD1B54A32D192ED03ull + stream * 0xABCDEF0123456789ull);
        z = (z ^ (z >> 33)) * 0xFF51AFD7ED558CCDull;
        z = (z ^ (z >> 33)) * 0xC4CEB9FE1A85EC53ull;
        return Rng(z ^ (z >> 33));
    }

    uint64_t seed() const { return seed_; }

  private:
    uint64_t seed_;
    uint64_t counter_ = 0;
};

}  // namespace streamdit
