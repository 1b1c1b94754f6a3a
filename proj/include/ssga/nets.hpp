#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ssga/tape.hpp"

namespace ssga {

/// Named tensors: weights, biases and the class embedding table.
using ParameterSet = std::map<std::string, Tensor>;

std::size_t parameter_count(const ParameterSet& params);

// linear exists for exact-oracle tests (a tap that is an affine map of z).
enum class Activation : std::uint8_t { leaky_relu, tanh, linear };

/// Generator: dense latent -> (C0, R0, R0), then per block nearest upsample x2,
/// 3x3 conv, activation. A 1x1 conv and tanh produce the image.
struct GeneratorSpec {
    std::size_t latent_dim = 32;
    std::size_t class_embed_dim = 0;  // 0 = unconditional
    std::size_t num_classes = 0;      // rows of the embedding table when class_embed_dim > 0
    std::vector<std::size_t> resolutions{4, 8, 16, 32};
    std::vector<std::size_t> channels{32, 16, 8, 8};
    std::size_t tap_resolution = 8;
    std::size_t out_channels = 1;
    Activation activation = Activation::leaky_relu;
    double slope = 0.2;

    std::size_t input_dim() const { return latent_dim + class_embed_dim; }
    std::size_t output_resolution() const { return resolutions.back(); }
    std::size_t tap_block() const;
    Shape tap_shape(std::size_t batch) const;
    void validate() const;
};

/// Discriminator: per block 3x3 conv, leaky relu, 2x2 mean pool. Head i
/// (global mean pool, affine to a scalar) reads the output of block i.
struct DiscriminatorSpec {
    std::size_t input_resolution = 32;
    std::size_t in_channels = 1;
    std::vector<std::size_t> channels{8, 16, 16, 32};
    double slope = 0.2;

    std::size_t blocks() const { return channels.size(); }
    void validate() const;
};

std::size_t generator_parameter_count(const GeneratorSpec& spec);
std::size_t discriminator_parameter_count(const DiscriminatorSpec& spec);

ParameterSet init_generator(const GeneratorSpec& spec, std::uint64_t seed);
ParameterSet init_discriminator(const DiscriminatorSpec& spec, std::uint64_t seed);

using BoundParams = std::map<std::string, ad::Var>;

/// Puts every tensor on the tape, as trainable parameters or as constants.
BoundParams bind_parameters(ad::Tape& tape, const ParameterSet& params, bool trainable);

struct GeneratorOutput {
    ad::Var image;                    // (B, C, R, R)
    std::optional<ad::Var> features;  // (B, C_tap, R_tap, R_tap)
};

/// latent: (B, d_z + d_c)
GeneratorOutput generator_forward(const GeneratorSpec& spec, const BoundParams& params, ad::Var latent,
                                  bool tap);
/// Runs only the blocks up to and including the tap.
ad::Var generator_features(const GeneratorSpec& spec, const BoundParams& params, ad::Var latent);
/// Continues from tap features to the image.
ad::Var generator_tail(const GeneratorSpec& spec, const BoundParams& params, ad::Var features);

/// Logits l^1..l^upto, each (B, 1). upto defaults to all blocks; blocks past
/// `upto` are never evaluated.
std::vector<ad::Var> discriminator_forward(const DiscriminatorSpec& spec, const BoundParams& params, ad::Var image,
                                           std::optional<std::size_t> upto = std::nullopt);

/// Tape-free conveniences for evaluation.
Tensor generate(const GeneratorSpec& spec, const ParameterSet& params, const Tensor& latents);
std::vector<Tensor> discriminate(const DiscriminatorSpec& spec, const ParameterSet& params, const Tensor& images);

}  // namespace ssga
