#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace gapl {

std::uint64_t splitmix64(std::uint64_t& state);

// xoshiro256** seeded by four successive splitmix64 outputs. Every random
// decision in the library goes through this type so that a seed fixes the
// stream independently of platform or standard library.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    // Child generator for a named purpose (init, split, shuffle, ...), so that
    // adding draws to one stream never perturbs another.
    static Rng derive(std::uint64_t seed, std::uint64_t stream);

    std::uint64_t next();
    // Top 53 bits scaled to [0, 1).
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    // Uniform integer in [0, n) via 128-bit multiply-shift. n must be > 0.
    std::uint64_t below(std::uint64_t n);
    // Box-Muller, cosine branch only: each call consumes exactly two uniforms.
    double normal();

    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    const std::array<std::uint64_t, 4>& state() const { return s_; }

private:
    std::array<std::uint64_t, 4> s_{};
};

}  // namespace gapl
