#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "phenoseq/tensor.hpp"

namespace phenoseq {

/// Reproducible random stream keyed by (seed, stream_id).
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// standard; the uniform and normal transforms are implemented here rather
/// than through <random> distributions, which are implementation-defined.
/// Child streams are derived by hashing a key into the stream id, so any
/// sample or augmentation can be regenerated without replaying its siblings.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream_id);

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream_id() const noexcept { return stream_id_; }

    RngStream substream(std::uint64_t key) const;
    RngStream substream(std::string_view key) const;

    std::uint64_t next_u64() { return engine_(); }
    /// Uniform on [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer on [0, n).
    std::uint64_t below(std::uint64_t n);
    bool bernoulli(double p) { return uniform() < p; }
    /// Box-Muller normal draw.
    double normal(double mean, double stddev);

private:
    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::mt19937_64 engine_;
};

/// 64-bit finalizer used to combine stream keys.
std::uint64_t mix64(std::uint64_t x);
std::uint64_t hash_key(std::string_view key);

/// Samples uniform on [-L, L] with L = sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(RngStream& rng, std::size_t fan_in, std::size_t fan_out, Shape shape);
double glorot_limit(std::size_t fan_in, std::size_t fan_out);

/// I.i.d. normal draws; sigma = 0 yields a constant tensor.
Tensor gaussian_sample(RngStream& rng, double mu, double sigma, Shape shape);

}  // namespace phenoseq
