#pragma once

#include <cstdint>
#include <random>

namespace fav {

// mt19937_64 output is fixed by the standard; distributions are not, so bounded
// draws and uniform doubles are implemented here to keep runs bit-identical across
// standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    // Uniform integer in [0, bound); bound > 0. Rejection removes modulo bias.
    std::uint64_t below(std::uint64_t bound) {
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % bound;
    }

    // Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

private:
    std::mt19937_64 engine_;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Independent stream seed for (seed, stream, substream).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t sub = 0) {
    return splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ sub);
}

}  // namespace fav
