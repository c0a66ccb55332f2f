#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace star {

// Deterministic 64-bit generator (splitmix64). Used everywhere instead of
// std:: distributions so that identical seeds give identical streams on
// every platform and build.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Independent child stream; stable under reordering of sibling draws.
    Rng child(std::uint64_t index) const {
        Rng mix(state_ ^ 0xd1b54a32d192ed03ULL);
        mix.next_u64();
        Rng out(mix.state_ + 0x9e3779b97f4a7c15ULL * (index + 1));
        out.next_u64();
        return out;
    }

    double uniform() {  // [0, 1)
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller without cached spare; two uniforms per draw keeps the
    // stream position independent of call parity.
    double normal(double mean = 0.0, double stddev = 1.0) {
        double u1 = 0.0;
        do { u1 = uniform(); } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(6.283185307179586476925286766559 * u2);
    }

    bool bernoulli(double p) { return uniform() < p; }

    std::uint64_t below(std::uint64_t n) { return n ? next_u64() % n : 0; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
};

}  // namespace star
