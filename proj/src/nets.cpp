#include "ssga/nets.hpp"

#include <algorithm>
#include <cmath>

#include "ssga/error.hpp"
#include "ssga/ops.hpp"
#include "ssga/rng.hpp"

namespace ssga {

using namespace ad;

std::size_t parameter_count(const ParameterSet& params) {
    std::size_t n = 0;
    for (const auto& [_, t] : params) n += t.size();
    return n;
}

// ---------------------------------------------------------------------------
// Specs

void GeneratorSpec::validate() const {
    if (latent_dim == 0) throw config_error("generator: latent_dim must be positive");
    if (resolutions.empty() || resolutions.size() != channels.size())
        throw config_error("generator: resolutions and channels must be non-empty and of equal length");
    for (std::size_t i = 1; i < resolutions.size(); ++i)
        if (resolutions[i] != 2 * resolutions[i - 1])
            throw config_error("generator: block resolutions must double, got " + shape_str(resolutions));
    if (std::find(resolutions.begin(), resolutions.end(), tap_resolution) == resolutions.end())
        throw config_error("generator: tap resolution " + std::to_string(tap_resolution) +
                           " is not a block resolution");
    if (class_embed_dim > 0 && num_classes == 0)
        throw config_error("generator: class_embed_dim > 0 needs num_classes > 0");
    if (out_channels == 0) throw config_error("generator: out_channels must be positive");
}

std::size_t GeneratorSpec::tap_block() const {
    auto it = std::find(resolutions.begin(), resolutions.end(), tap_resolution);
    if (it == resolutions.end()) throw config_error("generator: tap resolution not among block resolutions");
    return static_cast<std::size_t>(it - resolutions.begin());
}

Shape GeneratorSpec::tap_shape(std::size_t batch) const {
    const auto b = tap_block();
    return {batch, channels[b], resolutions[b], resolutions[b]};
}

void DiscriminatorSpec::validate() const {
    if (channels.empty()) throw config_error("discriminator: need at least one block");
    if (input_resolution >> channels.size() == 0 || input_resolution % (std::size_t{1} << channels.size()))
        throw config_error("discriminator: " + std::to_string(channels.size()) + " pooling blocks do not fit " +
                           std::to_string(input_resolution) + "px input");
}

std::size_t generator_parameter_count(const GeneratorSpec& s) {
    const std::size_t base = s.channels[0] * s.resolutions[0] * s.resolutions[0];
    std::size_t n = s.input_dim() * base + base;
    for (std::size_t i = 1; i < s.channels.size(); ++i) n += s.channels[i] * s.channels[i - 1] * 9 + s.channels[i];
    n += s.out_channels * s.channels.back() + s.out_channels;
    n += s.num_classes * s.class_embed_dim;
    return n;
}

std::size_t discriminator_parameter_count(const DiscriminatorSpec& s) {
    std::size_t n = 0;
    std::size_t cin = s.in_channels;
    for (auto c : s.channels) {
        n += c * cin * 9 + c;  // conv
        n += c + 1;            // head
        cin = c;
    }
    return n;
}

namespace {

std::string gname(const std::string& part) { return "g." + part; }
std::string block(std::size_t i) { return "b" + std::to_string(i); }

Tensor scaled_normal(RngStream& rng, const Shape& shape, double stddev) {
    Tensor t = rng.normal_tensor(shape);
    for (auto& v : t.data()) v *= stddev;
    return t;
}

}  // namespace

ParameterSet init_generator(const GeneratorSpec& spec, std::uint64_t seed) {
    spec.validate();
    RngStream rng = RngStream(seed, "init").fork("generator");
    ParameterSet p;
    const std::size_t base = spec.channels[0] * spec.resolutions[0] * spec.resolutions[0];
    const double fc_std = std::sqrt(2.0 / static_cast<double>(spec.input_dim()));
    p[gname("fc.w")] = scaled_normal(rng, {spec.input_dim(), base}, fc_std);
    p[gname("fc.b")] = Tensor({base});
    for (std::size_t i = 1; i < spec.channels.size(); ++i) {
        const double fan_in = static_cast<double>(spec.channels[i - 1] * 9);
        p[gname(block(i) + ".w")] =
            scaled_normal(rng, {spec.channels[i], spec.channels[i - 1], 3, 3}, std::sqrt(2.0 / fan_in));
        p[gname(block(i) + ".b")] = Tensor({spec.channels[i]});
    }
    p[gname("out.w")] = scaled_normal(rng, {spec.out_channels, spec.channels.back(), 1, 1},
                                      std::sqrt(1.0 / static_cast<double>(spec.channels.back())));
    p[gname("out.b")] = Tensor({spec.out_channels});
    if (spec.class_embed_dim > 0) p[gname("embed")] = rng.normal_tensor({spec.num_classes, spec.class_embed_dim});
    return p;
}

ParameterSet init_discriminator(const DiscriminatorSpec& spec, std::uint64_t seed) {
    spec.validate();
    RngStream rng = RngStream(seed, "init").fork("discriminator");
    ParameterSet p;
    std::size_t cin = spec.in_channels;
    for (std::size_t i = 0; i < spec.blocks(); ++i) {
        const std::size_t c = spec.channels[i];
        const double fan_in = static_cast<double>(cin * 9);
        const std::string b = "d." + block(i + 1);
        p[b + ".w"] = scaled_normal(rng, {c, cin, 3, 3}, std::sqrt(2.0 / fan_in));
        p[b + ".b"] = Tensor({c});
        const std::string h = "d.h" + std::to_string(i + 1);
        p[h + ".w"] = scaled_normal(rng, {c, 1}, 0.01);
        p[h + ".b"] = Tensor({1});
        cin = c;
    }
    return p;
}

BoundParams bind_parameters(Tape& tape, const ParameterSet& params, bool trainable) {
    BoundParams out;
    for (const auto& [name, value] : params)
        out[name] = trainable ? tape.parameter(name, value) : tape.constant(value);
    return out;
}

// ---------------------------------------------------------------------------
// Forward passes

namespace {

const Var& get(const BoundParams& p, const std::string& name) {
    auto it = p.find(name);
    if (it == p.end()) throw config_error("missing parameter '" + name + "'");
    return it->second;
}

Var activate(const GeneratorSpec& spec, Var x) {
    switch (spec.activation) {
        case Activation::tanh: return ad::tanh(x);
        case Activation::linear: return x;
        case Activation::leaky_relu: break;
    }
    return leaky_relu(x, spec.slope);
}

Var generator_block(const GeneratorSpec& spec, const BoundParams& p, std::size_t i, Var x) {
    if (i == 0) {
        const std::size_t batch = x.shape()[0];
        auto h = add_row_bias(matmul(x, get(p, gname("fc.w"))), get(p, gname("fc.b")));
        h = reshape(h, {batch, spec.channels[0], spec.resolutions[0], spec.resolutions[0]});
        return activate(spec, h);
    }
    auto h = conv2d(upsample2x(x), get(p, gname(block(i) + ".w")), 1);
    return activate(spec, add_channel_bias(h, get(p, gname(block(i) + ".b"))));
}

void check_latent(const GeneratorSpec& spec, Var latent) {
    const auto& s = latent.shape();
    if (s.size() != 2 || s[1] != spec.input_dim())
        throw config_error("generator: latent shape " + shape_str(s) + ", expected (B, " +
                           std::to_string(spec.input_dim()) + ")");
}

}  // namespace

Var generator_features(const GeneratorSpec& spec, const BoundParams& params, Var latent) {
    check_latent(spec, latent);
    const std::size_t tap = spec.tap_block();
    Var h = latent;
    for (std::size_t i = 0; i <= tap; ++i) h = generator_block(spec, params, i, h);
    return h;
}

Var generator_tail(const GeneratorSpec& spec, const BoundParams& params, Var features) {
    const std::size_t tap = spec.tap_block();
    const Shape expected = spec.tap_shape(features.shape().empty() ? 0 : features.shape()[0]);
    if (features.shape() != expected)
        throw config_error("generator: tap features " + shape_str(features.shape()) + ", expected " +
                           shape_str(expected));
    Var h = features;
    for (std::size_t i = tap + 1; i < spec.channels.size(); ++i) h = generator_block(spec, params, i, h);
    auto out = add_channel_bias(conv2d(h, get(params, gname("out.w")), 0), get(params, gname("out.b")));
    return ad::tanh(out);
}

GeneratorOutput generator_forward(const GeneratorSpec& spec, const BoundParams& params, Var latent, bool tap) {
    auto features = generator_features(spec, params, latent);
    GeneratorOutput out{generator_tail(spec, params, features), std::nullopt};
    if (tap) out.features = features;
    return out;
}

std::vector<Var> discriminator_forward(const DiscriminatorSpec& spec, const BoundParams& params, Var image,
                                       std::optional<std::size_t> upto) {
    const auto& s = image.shape();
    if (s.size() != 4 || s[1] != spec.in_channels || s[2] != spec.input_resolution || s[3] != spec.input_resolution)
        throw config_error("discriminator: image shape " + shape_str(s) + ", expected (B, " +
                           std::to_string(spec.in_channels) + ", " + std::to_string(spec.input_resolution) + ", " +
                           std::to_string(spec.input_resolution) + ")");
    const std::size_t last = upto.value_or(spec.blocks());
    if (last == 0 || last > spec.blocks()) throw config_error("discriminator: head index out of range");
    std::vector<Var> logits;
    Var h = image;
    for (std::size_t i = 1; i <= last; ++i) {
        const std::string b = "d." + block(i);
        h = conv2d(h, get(params, b + ".w"), 1);
        h = mean_pool2x(leaky_relu(add_channel_bias(h, get(params, b + ".b")), spec.slope));
        const std::string hd = "d.h" + std::to_string(i);
        logits.push_back(add_row_bias(matmul(global_mean_pool(h), get(params, hd + ".w")), get(params, hd + ".b")));
    }
    return logits;
}

Tensor generate(const GeneratorSpec& spec, const ParameterSet& params, const Tensor& latents) {
    Tape tape;
    auto bound = bind_parameters(tape, params, false);
    return generator_forward(spec, bound, tape.constant(latents), false).image.value();
}

std::vector<Tensor> discriminate(const DiscriminatorSpec& spec, const ParameterSet& params, const Tensor& images) {
    Tape tape;
    auto bound = bind_parameters(tape, params, false);
    std::vector<Tensor> out;
    for (auto v : discriminator_forward(spec, bound, tape.constant(images))) out.push_back(v.value());
    return out;
}

}  // namespace ssga
