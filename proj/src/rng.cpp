#include "phenoseq/rng.hpp"

#include <cmath>
#include <numbers>

namespace phenoseq {

std::uint64_t mix64(std::uint64_t x) {
    // SplitMix64 finalizer.
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t hash_key(std::string_view key) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : key) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return mix64(h);
}

namespace {

std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream_id) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream_id), static_cast<std::uint32_t>(stream_id >> 32)};
    return std::mt19937_64(seq);
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id), engine_(make_engine(seed, stream_id)) {}

RngStream RngStream::substream(std::uint64_t key) const {
    return RngStream(seed_, mix64(stream_id_ ^ mix64(key + 0x632be59bd9b4e019ULL)));
}

RngStream RngStream::substream(std::string_view key) const { return substream(hash_key(key)); }

double RngStream::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

std::uint64_t RngStream::below(std::uint64_t n) {
    if (n == 0) throw ValidationError("RngStream::below requires n > 0");
    // Rejection sampling keeps the draw exactly uniform.
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return x % n;
}

double RngStream::normal(double mean, double stddev) {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * radius * std::cos(2.0 * std::numbers::pi * u2);
}

double glorot_limit(std::size_t fan_in, std::size_t fan_out) {
    if (fan_in == 0 || fan_out == 0) throw ValidationError("glorot_uniform: fans must be positive");
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

Tensor glorot_uniform(RngStream& rng, std::size_t fan_in, std::size_t fan_out, Shape shape) {
    const double limit = glorot_limit(fan_in, fan_out);
    Tensor out(std::move(shape));
    for (double& v : out.values()) v = rng.uniform(-limit, limit);
    return out;
}

Tensor gaussian_sample(RngStream& rng, double mu, double sigma, Shape shape) {
    if (!(sigma >= 0.0)) throw ValidationError("gaussian_sample: sigma must be non-negative");
    Tensor out(std::move(shape), mu);
    if (sigma == 0.0) return out;
    for (double& v : out.values()) v = rng.normal(mu, sigma);
    return out;
}

}  // namespace phenoseq
