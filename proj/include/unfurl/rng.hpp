#pragma once

#include <cmath>
#include <cstdint>

#include <Eigen/Core>

namespace unfurl {

// Deterministic RNG used everywhere. We roll the distributions by hand
// (instead of <random> distributions, whose output is implementation-defined)
// so that seeded runs reproduce bit-exactly on any standard library.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {
        // splitmix64 warmup so nearby seeds decorrelate
        next_u64();
        next_u64();
    }

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 bits of entropy.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Integer in [0, n).
    std::uint64_t uniform_index(std::uint64_t n) { return next_u64() % n; }

    // Standard normal via Box-Muller (no cached spare; keeps state trivial).
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

    Eigen::Vector3d normal3(double sigma) {
        return {normal(0.0, sigma), normal(0.0, sigma), normal(0.0, sigma)};
    }

    // Uniform direction on the unit sphere.
    Eigen::Vector3d unit_vector() {
        const double z = uniform(-1.0, 1.0);
        const double phi = uniform(0.0, 2.0 * M_PI);
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        return {r * std::cos(phi), z, r * std::sin(phi)};
    }

    // Uniform direction in the ground (x,z) plane.
    Eigen::Vector3d ground_direction() {
        const double phi = uniform(0.0, 2.0 * M_PI);
        return {std::cos(phi), 0.0, std::sin(phi)};
    }

private:
    std::uint64_t state_;
};

// Derives a child seed from a root seed and a stream index; used by the CLI
// `--seed` override to rewrite every named seed deterministically.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) {
    Rng r(root ^ (0xa0761d6478bd642fULL * (stream + 1)));
    return r.next_u64();
}

}  // namespace unfurl
