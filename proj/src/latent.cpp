#include "ssga/latent.hpp"

#include "ssga/error.hpp"

namespace ssga {

void LatentSpace::validate() const {
    if (noise_dim == 0) throw config_error("latent: noise dimension must be positive");
    if (mode == LatentMode::joint_noise_class && class_dim == 0)
        throw config_error("latent: joint noise-class mode requires a class embedding (d_c > 0)");
    if (mode == LatentMode::noise_only && class_dim > 0 && class_row.size() != class_dim)
        throw config_error("latent: noise-only mode with d_c > 0 needs a stored class row of length " +
                           std::to_string(class_dim));
}

Tensor sample_latent(const LatentSpace& space, RngStream& rng) {
    space.validate();
    Tensor z({space.dim()});
    const std::size_t gaussian = space.mode == LatentMode::joint_noise_class ? space.dim() : space.noise_dim;
    for (std::size_t i = 0; i < gaussian; ++i) z[i] = rng.normal();
    for (std::size_t i = gaussian; i < space.dim(); ++i) z[i] = space.class_row[i - gaussian];
    return z;
}

Tensor sample_latents(const LatentSpace& space, RngStream& rng, std::size_t batch) {
    Tensor out({batch, space.dim()});
    for (std::size_t b = 0; b < batch; ++b) {
        Tensor z = sample_latent(space, rng);
        std::copy(z.data().begin(), z.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(b * space.dim()));
    }
    return out;
}

Tensor sample_probe(const Shape& tap_shape, RngStream& rng) { return rng.normal_tensor(tap_shape); }

std::vector<Tensor> interpolate(const InterpolationPath& path) {
    if (path.steps < 2) throw config_error("interpolate: need at least 2 steps, got " + std::to_string(path.steps));
    if (path.start.shape() != path.end.shape()) throw config_error("interpolate: endpoint shapes differ");
    std::vector<Tensor> out;
    out.reserve(path.steps);
    const double last = static_cast<double>(path.steps - 1);
    for (std::size_t t = 0; t < path.steps; ++t) {
        if (t == 0) {
            out.push_back(path.start);
            continue;
        }
        if (t + 1 == path.steps) {
            out.push_back(path.end);
            continue;
        }
        const double s = static_cast<double>(t) / last;
        Tensor w(path.start.shape());
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = path.start[i] + s * (path.end[i] - path.start[i]);
        out.push_back(std::move(w));
    }
    return out;
}

}  // namespace ssga
