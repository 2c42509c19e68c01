#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace qa {

/// Seeded generator with platform-independent derived draws. The standard
/// distributions are implementation-defined, so bounded integers and
/// shuffles are computed here from the raw mt19937_64 stream.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform integer in [0, bound). `bound` must be > 0.
    std::uint64_t uniform_index(std::uint64_t bound);

    /// Uniform double in [0, 1) with 53 bits of precision.
    double uniform_real();

    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(uniform_index(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

/// Seed for randomized commands that were not given one explicitly.
std::uint64_t generate_seed();

}  // namespace qa
