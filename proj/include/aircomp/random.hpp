// Seeded random streams with reproducible substream derivation.
#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace aircomp {

namespace detail {

// SplitMix64 finalizer; used to spread user seeds and derive substreams.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

} // namespace detail

/**
 * @brief One independent stream of random numbers.
 *
 * A stream is owned by exactly one thread. Parallel work derives one
 * substream per unit of work from a root stream; the substream sequence
 * depends only on (root seed, index), never on thread scheduling.
 *
 * Sequences are reproducible for a fixed seed within one build.
 */
class RngStream {
  public:
    explicit RngStream(std::uint64_t seed)
        : seed_(seed), engine_(detail::splitmix64(seed)) {}

    /// Standard normal draw.
    double normal() { return normal_(engine_); }

    /// Uniform draw on [0, 1).
    double uniform() { return uniform_(engine_); }

    /// Rayleigh draw normalized to E[h^2] = 1 (scale 1/sqrt(2)); strictly positive.
    double rayleigh() {
        double u;
        do {
            u = uniform_(engine_);
        } while (u <= 0.0);
        return std::sqrt(-std::log(u)); // sigma*sqrt(-2 ln u) with sigma = 1/sqrt(2)
    }

    /// Vector of n iid standard normals.
    Eigen::VectorXd normal_vector(Eigen::Index n) {
        Eigen::VectorXd v(n);
        for (Eigen::Index i = 0; i < n; ++i) v(i) = normal_(engine_);
        return v;
    }

    /// Independent stream number `index` derived from this stream's seed.
    RngStream substream(std::uint64_t index) const {
        return RngStream(detail::splitmix64(seed_ ^ detail::splitmix64(index + 1)));
    }

    std::uint64_t seed() const { return seed_; }

  private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

} // namespace aircomp
