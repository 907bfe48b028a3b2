#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace gnnaudit {

// splitmix64; used to derive well-separated seeds from (master, stream, index).
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Named randomness streams. Every stochastic operation draws from exactly one
// stream so that experiments are reproducible bit-for-bit from a master seed
// and independent pipeline stages do not perturb each other.
enum class StreamId : std::uint64_t {
    split = 1,
    init = 2,
    train = 3,
    defense = 4,
    attack = 5,
    data = 6,
    query = 7,
};

// Deterministic generator. All sampling is hand-rolled on top of the raw
// 64-bit output so results do not depend on the standard library's
// distribution implementations.
struct RngStream {
    std::mt19937_64 gen;

    explicit RngStream(std::uint64_t seed) : gen(seed) {}

    RngStream(std::uint64_t master_seed, StreamId stream, std::uint64_t index = 0) {
        std::uint64_t s = master_seed;
        (void)splitmix64(s);
        s ^= static_cast<std::uint64_t>(stream) * 0x9e3779b97f4a7c15ULL;
        (void)splitmix64(s);
        s ^= index * 0xd1342543de82ef95ULL;
        gen.seed(splitmix64(s));
    }

    std::uint64_t next_u64() { return gen(); }

    // Uniform in [0, 1) with 53 bits of precision.
    double uniform01() { return static_cast<double>(gen() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Uniform integer in [0, n). Rejection keeps it exactly uniform.
    std::uint64_t uniform_int(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("uniform_int: n must be positive");
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = gen();
        } while (x >= limit);
        return x % n;
    }

    bool bernoulli(double p) { return uniform01() < p; }

    // Box-Muller; draws two uniforms per call.
    double normal(double mean = 0.0, double stddev = 1.0) {
        double u1 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(6.283185307179586476925286766559 * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // k distinct indices drawn uniformly from [0, n), in random order.
    std::vector<std::int32_t> sample_without_replacement(std::int32_t n, std::int32_t k) {
        if (k < 0 || k > n) throw std::invalid_argument("sample_without_replacement: k out of range");
        std::vector<std::int32_t> pool(static_cast<std::size_t>(n));
        for (std::int32_t i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
        for (std::int32_t i = 0; i < k; ++i) {
            const std::int32_t j = i + static_cast<std::int32_t>(uniform_int(static_cast<std::uint64_t>(n - i)));
            std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
        }
        pool.resize(static_cast<std::size_t>(k));
        return pool;
    }
};

}  // namespace gnnaudit
