#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace magma {

// Seeded generator with platform-independent transforms. std::mt19937_64 is
// fully specified by the standard; the standard distributions are not, so
// uniform and normal draws are implemented here.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64() { return engine_(); }
    // Uniform on [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi);
    // Uniform integer in [lo, hi], unbiased.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
    double normal();

    template <class It>
    void shuffle(It first, It last) {
        const auto n = last - first;
        for (auto i = n - 1; i > 0; --i) {
            const auto j = uniform_int(0, static_cast<std::int64_t>(i));
            std::swap(first[i], first[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view bytes);

// Named seed derivation: splitmix64(seed ^ fnv1a64(component) ^ splitmix64(index)).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view component, std::uint64_t index = 0);
// Per-entity derivation: splitmix64(seed ^ fnv1a64(id)).
std::uint64_t entity_seed(std::uint64_t seed, std::string_view id);

}  // namespace magma
