#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "ssga/tensor.hpp"

namespace ssga {

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

/// A named, seeded random stream. State is (seed, draw count) so it can be
/// stored in a checkpoint and restored exactly.
class RngStream {
public:
    RngStream() : RngStream(0, "default") {}
    RngStream(std::uint64_t run_seed, std::string_view name);

    static RngStream restore(std::uint64_t stream_seed, std::uint64_t draws);

    std::uint64_t next_u64();
    /// Uniform in [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Standard normal via Box-Muller (one value per two uniforms).
    double normal();
    std::size_t index(std::size_t n);

    Tensor normal_tensor(const Shape& shape);

    /// Deterministic child stream; does not advance this stream.
    RngStream fork(std::string_view name) const;

    std::uint64_t stream_seed() const noexcept { return seed_; }
    std::uint64_t draws() const noexcept { return draws_; }

private:
    std::uint64_t seed_ = 0;
    std::uint64_t draws_ = 0;
    std::mt19937_64 engine_;
};

}  // namespace ssga
