#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace diffcore {

// splitmix64, used to derive independent stream seeds from (seed, label).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);
std::uint64_t hash_label(const std::string& label);

// Deterministic random stream. std::mt19937_64 output is pinned by the
// standard, and every distribution here is hand-rolled on top of it, so a
// stream replays identically across platforms and runs.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}
    Rng(std::uint64_t seed, const std::string& label) : Rng(mix_seed(seed, hash_label(label))) {}

    // Child stream derived from this stream's base seed and a label; does not
    // consume from or depend on this stream's position.
    Rng fork(const std::string& label) const { return Rng(seed_, label); }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t next_u64() { return engine_(); }

    // Uniform on [0, 1).
    double uniform();
    double uniform(double lo, double hi);
    // Integer in [0, n), n > 0.
    std::uint64_t uniform_index(std::uint64_t n);
    int uniform_int(int lo, int hi);  // inclusive bounds
    bool bernoulli(double p);

    // Standard normal via the polar method (pairs drawn, spare discarded so
    // the stream has no hidden state).
    double normal();
    double normal(double mean, double std);

    // Gamma(shape, 1) for shape > 0 (Marsaglia-Tsang, with the boost for
    // shape < 1).
    double gamma(double shape);
    // Beta(a, b) via two gamma draws.
    double beta(double a, double b);

    // Index sampled proportionally to nonnegative weights.
    std::size_t categorical(const std::vector<double>& weights);

    // Fisher-Yates over indices 0..n-1.
    std::vector<std::size_t> permutation(std::size_t n);

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

}  // namespace diffcore
