#include "ssga/rng.hpp"

#include <cmath>
#include <numbers>

namespace ssga {

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {

std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

RngStream::RngStream(std::uint64_t run_seed, std::string_view name)
    : seed_(mix(run_seed ^ fnv1a64(name))), engine_(seed_) {}

RngStream RngStream::restore(std::uint64_t stream_seed, std::uint64_t draws) {
    RngStream s;
    s.seed_ = stream_seed;
    s.engine_.seed(stream_seed);
    s.engine_.discard(draws);
    s.draws_ = draws;
    return s;
}

std::uint64_t RngStream::next_u64() {
    ++draws_;
    return engine_();
}

double RngStream::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double RngStream::normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t RngStream::index(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)); }

Tensor RngStream::normal_tensor(const Shape& shape) {
    Tensor t(shape);
    for (auto& v : t.data()) v = normal();
    return t;
}

RngStream RngStream::fork(std::string_view name) const {
    RngStream child;
    child.seed_ = mix(seed_ ^ mix(draws_) ^ fnv1a64(name));
    child.engine_.seed(child.seed_);
    return child;
}

}  // namespace ssga
