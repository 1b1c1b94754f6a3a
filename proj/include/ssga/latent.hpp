#pragma once

#include <cstdint>
#include <vector>

#include "ssga/rng.hpp"
#include "ssga/tensor.hpp"

namespace ssga {

enum class LatentMode : std::uint8_t { noise_only, joint_noise_class };

/// Generator input space: noise (d_z) optionally followed by a continuous
/// class embedding (d_c). In noise_only mode with d_c > 0 the class part is a
/// fixed stored embedding row; in joint mode the whole vector is Gaussian.
struct LatentSpace {
    std::size_t noise_dim = 32;
    std::size_t class_dim = 0;
    LatentMode mode = LatentMode::noise_only;
    std::vector<double> class_row;

    std::size_t dim() const { return noise_dim + class_dim; }
    /// Leading coordinates the smoothness regularizer differentiates against.
    std::size_t regularized_dims() const { return mode == LatentMode::joint_noise_class ? dim() : noise_dim; }
    void validate() const;
};

/// One latent vector, shape (d_z + d_c).
Tensor sample_latent(const LatentSpace& space, RngStream& rng);
/// A batch, shape (B, d_z + d_c).
Tensor sample_latents(const LatentSpace& space, RngStream& rng, std::size_t batch);

/// Standard-normal probe tensor with exactly the tap shape.
Tensor sample_probe(const Shape& tap_shape, RngStream& rng);

struct InterpolationPath {
    Tensor start;
    Tensor end;
    std::size_t steps = 2;
};

/// Waypoint t = start + (t / (S - 1)) (end - start), endpoints reproduced exactly.
std::vector<Tensor> interpolate(const InterpolationPath& path);

/// Independent named streams of one run.
struct RunStreams {
    explicit RunStreams(std::uint64_t seed)
        : latent(seed, "latent"), probe(seed, "probe"), data(seed, "data"), init(seed, "init") {}

    RngStream latent;
    RngStream probe;
    RngStream data;
    RngStream init;
};

}  // namespace ssga
