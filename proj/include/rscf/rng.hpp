// SPDX-License-Identifier: Apache-2.0

#ifndef RSCF_RNG_HPP
#define RSCF_RNG_HPP

#include <cmath>
#include <complex>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace rscf {

// Named substreams. Every random draw in the library comes from an Rng
// derived from (master seed, stream tag, indices); no global generator.
enum class Stream : std::uint64_t {
    placement = 1,
    shadowing,
    clusters,
    pilots,
    channel,
    estimation_noise,
    messages,
    receiver_noise,
    moments,
    ga,
    diffusion_init,
    diffusion_train,
    diffusion_sample,
    experiment,
};

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, Stream stream, std::initializer_list<std::uint64_t> indices = {})
{
    std::uint64_t h = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(stream)));
    for (auto i : indices) h = splitmix64(h ^ splitmix64(i + 0x632be59bd9b4e019ULL));
    return h;
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    Rng(std::uint64_t seed, Stream stream, std::initializer_list<std::uint64_t> indices = {})
        : engine_(derive_seed(seed, stream, indices)) {}

    double uniform(double lo = 0.0, double hi = 1.0)
    {
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }
    double normal() { return normal_(engine_); }
    // CN(0,1): real and imaginary parts each N(0, 1/2).
    std::complex<double> cnormal()
    {
        constexpr double s = 0.70710678118654752440;
        double re = normal_(engine_);
        double im = normal_(engine_);
        return {s * re, s * im};
    }
    std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }
    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace rscf

#endif
