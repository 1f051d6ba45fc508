#pragma once

#include <cmath>
#include <cstdint>

namespace conclab {

namespace detail {

// Stafford "mix13" finalizer; full avalanche on 64 bits.
inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Combine two words into a well-mixed key. Two finalizer rounds with distinct
// pre-whitening constants keep substream keys decorrelated from the parent.
inline std::uint64_t mix_key(std::uint64_t a, std::uint64_t b) {
    return mix64(mix64(a ^ 0x9e3779b97f4a7c15ULL) + b * 0xd1342543de82ef95ULL + 1);
}

}  // namespace detail

// Counter-based splittable stream: the n-th output is a pure function of
// (key, n), so replicate results depend only on their index, never on
// scheduling. Substreams derive fresh keys and are statistically independent.
class RngStream {
public:
    RngStream() : RngStream(0, 0) {}
    RngStream(std::uint64_t seed, std::uint64_t stream_id)
        : key_(detail::mix_key(seed, stream_id)), counter_(0) {}

    static RngStream from_key(std::uint64_t key) {
        RngStream s;
        s.key_ = key;
        s.counter_ = 0;
        return s;
    }

    RngStream substream(std::uint64_t id) const {
        return from_key(detail::mix_key(key_, id));
    }

    std::uint64_t key() const { return key_; }

    std::uint64_t next_u64() {
        return detail::mix64(key_ + (counter_++) * 0x9e3779b97f4a7c15ULL);
    }

    // Strictly inside (0, 1): the offset by half an ulp step keeps log() finite.
    double uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // true with probability p.
    bool bernoulli(double p) { return uniform() < p; }

    // Non-caching Box-Muller: consumes exactly two uniforms per draw.
    double gaussian() {
        const double u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    // Uniform integer in [0, bound) by rejection on the top bits.
    std::uint64_t uniform_below(std::uint64_t bound) {
        const std::uint64_t threshold = (0 - bound) % bound;
        for (;;) {
            const std::uint64_t r = next_u64();
            if (r >= threshold) return r % bound;
        }
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_;
};

// Neumaier compensated accumulator. Enumeration checks promise results that
// are stable to 1e-10 under re-partitioning, which plain doubles do not give.
class KahanSum {
public:
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x))
            comp_ += (sum_ - t) + x;
        else
            comp_ += (x - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

}  // namespace conclab
