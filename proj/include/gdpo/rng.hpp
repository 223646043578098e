#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

namespace gdpo {

// Mixes a seed with a stream id (splitmix64 finalizer). Used to give every
// topic / split / record its own independent stream so that parallel and
// serial generation agree.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

// Deterministic random source. The engine is std::mt19937_64, whose output
// sequence is fixed by the standard; the distributions below are written out
// by hand because the std:: distributions are implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on [0, 1) with 53 random bits.
    double uniform();

    // Uniform integer in [0, n). n must be > 0.
    std::size_t index(std::size_t n);

    // Draws an index with probability proportional to weights[i].
    std::size_t categorical(std::span<const double> weights);

    double normal();

    // Marsaglia-Tsang; shape > 0, unit scale.
    double gamma(double shape);

    template <class T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = index(i);
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace gdpo
