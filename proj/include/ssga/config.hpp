#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ssga/data.hpp"
#include "ssga/latent.hpp"
#include "ssga/losses.hpp"
#include "ssga/nets.hpp"

namespace ssga {

struct ConfigKey {
    std::string key;
    std::string default_value;
    std::string help;
};

/// Every accepted key with its default, in help order.
const std::vector<ConfigKey>& config_keys();

/// Raw `key = value` settings. Only explicitly given keys are stored.
class ConfigFile {
public:
    static ConfigFile parse(const std::string& text, const std::string& origin = "<config>");
    static ConfigFile load(const std::string& path);

    void set(const std::string& key, const std::string& value);
    const std::map<std::string, std::string>& values() const noexcept { return values_; }

private:
    std::map<std::string, std::string> values_;
};

enum class Phase : std::uint8_t { pretrain = 0, adapt = 1 };

struct TrainConfig {
    std::string preset = "desk";
    std::uint64_t seed = 0;
    std::size_t batch_size = 8;
    std::optional<std::size_t> steps;  // unset: schedule default for the phase and data preset
    std::size_t d_steps = 1;
    double ema_decay = 0.0;

    double lr_g = 2e-3;
    double lr_d = 2e-3;
    double beta1 = 0.0;
    double beta2 = 0.99;
    double eps = 1e-8;

    std::size_t latent_dim = 32;
    std::size_t class_dim = 0;
    std::size_t num_classes = 4;
    std::vector<std::size_t> g_channels{32, 16, 8, 8};
    Activation g_activation = Activation::leaky_relu;
    std::vector<std::size_t> d_channels{8, 16, 16, 32};
    std::size_t resolution = 32;

    std::string data_preset = "dissimilar";
    std::size_t shots = 10;
    std::uint64_t data_seed = 0;
    std::size_t val_size = 500;

    AdvLossKind adv = AdvLossKind::non_saturating_logistic;
    std::string d_blocks = "all";  // all | last | patchgan_<k>
    std::string weights = "uniform";
    double lambda_ss = 5.0;
    std::size_t tap_resolution = 8;
    std::size_t ss_interval = 1;
    bool ss_squared = false;
    double ppl_weight = 0.0;

    LatentMode latent_mode = LatentMode::noise_only;

    std::size_t eval_interval = 1000;
    std::vector<std::size_t> eval_extra{500, 750};
    std::size_t eval_paths = 20;
    std::size_t eval_path_steps = 16;
    std::uint64_t eval_seed = 1234;
    std::size_t eval_features = 64;

    std::vector<std::uint64_t> ablate_seeds{0};

    /// Resolves defaults, preset overrides and explicit settings; validates.
    static TrainConfig from(const ConfigFile& file);
    static TrainConfig defaults() { return from(ConfigFile{}); }

    /// Canonical `key = value` text with every key; from(parse(text)) round-trips.
    std::string canonical() const;
    std::uint64_t hash() const;

    GeneratorSpec generator() const;
    DiscriminatorSpec discriminator() const;
    LatentSpace latent_space() const;
    BlockWeights block_weights() const;
    SmoothnessConfig smoothness() const;
    DomainPair domains() const;
    std::size_t total_steps(Phase phase) const;
    /// Sorted evaluation epochs in (0, total], always including the last one.
    std::vector<std::size_t> eval_epochs(Phase phase) const;
};

}  // namespace ssga
