#include "ssga/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "ssga/error.hpp"

namespace ssga {

const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = {
        {"train.preset", "desk", "desk | paper-biggan (lr 2e-4/8e-4, EMA 0.999) | paper-schedule (30k dissimilar steps)"},
        {"train.seed", "0", "run seed for latent, probe, data and init streams"},
        {"train.batch_size", "8", "images per step"},
        {"train.steps", "auto", "optimization steps; auto = pretrain 5000, adapt close 5000, adapt dissimilar 10000"},
        {"train.d_steps", "1", "discriminator updates per step (0 freezes D)"},
        {"train.ema_decay", "0", "generator EMA decay, 0 = off"},
        {"optim.lr_g", "0.002", "Adam learning rate for G"},
        {"optim.lr_d", "0.002", "Adam learning rate for D"},
        {"optim.beta1", "0", "Adam beta1"},
        {"optim.beta2", "0.99", "Adam beta2"},
        {"optim.eps", "1e-08", "Adam epsilon"},
        {"model.latent_dim", "32", "noise dimension"},
        {"model.class_dim", "0", "class embedding width, 0 = unconditional"},
        {"model.num_classes", "4", "embedding rows when class_dim > 0"},
        {"model.g_channels", "32,16,8,8", "generator channels per block; resolution doubles per block"},
        {"model.activation", "leaky_relu", "generator block activation: leaky_relu | tanh (smooth, for exact descent checks)"},
        {"model.d_channels", "8,16,16,32", "discriminator channels per block (one logit head each)"},
        {"model.resolution", "32", "image side in pixels"},
        {"data.preset", "dissimilar", "close (ellipses -> faint ellipses) | dissimilar (ellipses -> triangles)"},
        {"data.shots", "10", "few-shot training images"},
        {"data.seed", "0", "seed for choosing the few-shot and validation images"},
        {"data.val_size", "500", "held-out validation images (also the generated-set size for FID)"},
        {"loss.adv", "non_saturating", "non_saturating | hinge"},
        {"loss.d_blocks", "all", "all (a head after every block) | last | patchgan_<k> (truncate D after block k)"},
        {"loss.weights", "uniform", "uniform | earlier | later, used with d_blocks = all"},
        {"loss.lambda_ss", "5", "smoothness similarity weight (adapt only)"},
        {"loss.tap_resolution", "8", "generator block resolution where the smoothness term is taken"},
        {"loss.ss_interval", "1", "apply the smoothness term every n steps"},
        {"loss.ss_squared", "false", "squared distance instead of distance"},
        {"loss.ppl_weight", "0", "path length penalty weight (baseline regularizer)"},
        {"latent.mode", "noise_only", "noise_only | joint (sample and regularize the joint noise-class vector)"},
        {"eval.interval", "1000", "evaluate every n steps"},
        {"eval.extra", "500,750", "additional evaluation steps"},
        {"eval.paths", "20", "interpolation paths for the staircase metric"},
        {"eval.path_steps", "16", "frames per interpolation path"},
        {"eval.seed", "1234", "seed for evaluation latents"},
        {"eval.features", "64", "frozen feature dimension"},
        {"ablate.seeds", "0", "seeds run for every ablation cell"},
    };
    return keys;
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

bool known_key(const std::string& key) {
    const auto& keys = config_keys();
    return std::any_of(keys.begin(), keys.end(), [&](const ConfigKey& k) { return k.key == key; });
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    // shortest form that round-trips
    for (int p = 1; p <= 17; ++p) {
        char shorter[32];
        std::snprintf(shorter, sizeof shorter, "%.*g", p, v);
        if (std::stod(shorter) == v) return shorter;
    }
    return buf;
}

template <class T>
std::string join(const std::vector<T>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
    return out;
}

struct Reader {
    const std::map<std::string, std::string>& m;

    const std::string& raw(const std::string& key) const { return m.at(key); }

    [[noreturn]] void bad(const std::string& key, const std::string& why) const {
        throw config_error("config: " + key + " = '" + raw(key) + "': " + why);
    }

    std::uint64_t u64(const std::string& key) const {
        const auto& s = raw(key);
        if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) bad(key, "expected an integer");
        try {
            return std::stoull(s);
        } catch (const std::exception&) {
            bad(key, "integer out of range");
        }
    }
    std::size_t size(const std::string& key) const { return static_cast<std::size_t>(u64(key)); }
    double real(const std::string& key) const {
        const auto& s = raw(key);
        try {
            std::size_t used = 0;
            const double v = std::stod(s, &used);
            if (used != s.size() || !std::isfinite(v)) bad(key, "expected a finite number");
            return v;
        } catch (const std::logic_error&) {
            bad(key, "expected a number");
        }
    }
    bool boolean(const std::string& key) const {
        const auto& s = raw(key);
        if (s == "true" || s == "1") return true;
        if (s == "false" || s == "0") return false;
        bad(key, "expected true or false");
    }
    template <class T>
    std::vector<T> list(const std::string& key) const {
        std::vector<T> out;
        std::stringstream ss(raw(key));
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (item.empty() || item.find_first_not_of("0123456789") != std::string::npos)
                bad(key, "expected a comma-separated list of integers");
            out.push_back(static_cast<T>(std::stoull(item)));
        }
        return out;
    }
};

}  // namespace

ConfigFile ConfigFile::parse(const std::string& text, const std::string& origin) {
    ConfigFile f;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        const std::string where = origin + ":" + std::to_string(lineno);
        if (eq == std::string::npos) throw config_error("config: " + where + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!known_key(key)) throw config_error("config: " + where + ": unknown key '" + key + "'");
        if (f.values_.count(key)) throw config_error("config: " + where + ": duplicate key '" + key + "'");
        f.values_[key] = value;
    }
    return f;
}

ConfigFile ConfigFile::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("config: cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
}

void ConfigFile::set(const std::string& key, const std::string& value) {
    if (!known_key(key)) throw config_error("config: unknown key '" + key + "'");
    values_[key] = value;
}

TrainConfig TrainConfig::from(const ConfigFile& file) {
    std::map<std::string, std::string> m;
    for (const auto& k : config_keys()) m[k.key] = k.default_value;
    const auto& given = file.values();
    const std::string preset = given.count("train.preset") ? given.at("train.preset") : "desk";
    if (preset == "paper-biggan") {
        m["optim.lr_g"] = "0.0002";
        m["optim.lr_d"] = "0.0008";
        m["train.ema_decay"] = "0.999";
    } else if (preset != "desk" && preset != "paper-schedule") {
        throw config_error("config: train.preset = '" + preset + "': expected desk, paper-biggan or paper-schedule");
    }
    for (const auto& [k, v] : given) m[k] = v;

    Reader r{m};
    TrainConfig c;
    c.preset = preset;
    c.seed = r.u64("train.seed");
    c.batch_size = r.size("train.batch_size");
    if (r.raw("train.steps") != "auto") c.steps = r.size("train.steps");
    c.d_steps = r.size("train.d_steps");
    c.ema_decay = r.real("train.ema_decay");
    c.lr_g = r.real("optim.lr_g");
    c.lr_d = r.real("optim.lr_d");
    c.beta1 = r.real("optim.beta1");
    c.beta2 = r.real("optim.beta2");
    c.eps = r.real("optim.eps");
    c.latent_dim = r.size("model.latent_dim");
    c.class_dim = r.size("model.class_dim");
    c.num_classes = r.size("model.num_classes");
    c.g_channels = r.list<std::size_t>("model.g_channels");
    const auto& act = r.raw("model.activation");
    if (act == "leaky_relu")
        c.g_activation = Activation::leaky_relu;
    else if (act == "tanh")
        c.g_activation = Activation::tanh;
    else
        r.bad("model.activation", "expected leaky_relu or tanh");
    c.d_channels = r.list<std::size_t>("model.d_channels");
    c.resolution = r.size("model.resolution");
    c.data_preset = r.raw("data.preset");
    c.shots = r.size("data.shots");
    c.data_seed = r.u64("data.seed");
    c.val_size = r.size("data.val_size");
    const auto& adv = r.raw("loss.adv");
    if (adv == "non_saturating")
        c.adv = AdvLossKind::non_saturating_logistic;
    else if (adv == "hinge")
        c.adv = AdvLossKind::hinge;
    else
        r.bad("loss.adv", "expected non_saturating or hinge");
    c.d_blocks = r.raw("loss.d_blocks");
    c.weights = r.raw("loss.weights");
    c.lambda_ss = r.real("loss.lambda_ss");
    c.tap_resolution = r.size("loss.tap_resolution");
    c.ss_interval = r.size("loss.ss_interval");
    c.ss_squared = r.boolean("loss.ss_squared");
    c.ppl_weight = r.real("loss.ppl_weight");
    const auto& mode = r.raw("latent.mode");
    if (mode == "noise_only")
        c.latent_mode = LatentMode::noise_only;
    else if (mode == "joint")
        c.latent_mode = LatentMode::joint_noise_class;
    else
        r.bad("latent.mode", "expected noise_only or joint");
    c.eval_interval = r.size("eval.interval");
    c.eval_extra = r.list<std::size_t>("eval.extra");
    c.eval_paths = r.size("eval.paths");
    c.eval_path_steps = r.size("eval.path_steps");
    c.eval_seed = r.u64("eval.seed");
    c.eval_features = r.size("eval.features");
    c.ablate_seeds = r.list<std::uint64_t>("ablate.seeds");

    // cross-field checks
    if (c.batch_size == 0) r.bad("train.batch_size", "must be positive");
    if (c.lr_g <= 0.0) r.bad("optim.lr_g", "must be positive");
    if (c.lr_d <= 0.0) r.bad("optim.lr_d", "must be positive");
    if (c.ema_decay < 0.0 || c.ema_decay >= 1.0) r.bad("train.ema_decay", "must be in [0, 1)");
    if (c.beta1 < 0.0 || c.beta1 >= 1.0) r.bad("optim.beta1", "must be in [0, 1)");
    if (c.beta2 < 0.0 || c.beta2 >= 1.0) r.bad("optim.beta2", "must be in [0, 1)");
    if (c.lambda_ss < 0.0) r.bad("loss.lambda_ss", "must be nonnegative");
    if (c.ppl_weight < 0.0) r.bad("loss.ppl_weight", "must be nonnegative");
    if (c.ss_interval == 0) r.bad("loss.ss_interval", "must be positive");
    if (c.shots == 0) r.bad("data.shots", "must be at least 1");
    if (c.eval_interval == 0) r.bad("eval.interval", "must be positive");
    if (c.ablate_seeds.empty()) r.bad("ablate.seeds", "need at least one seed");
    if (c.g_channels.empty()) r.bad("model.g_channels", "need at least one block");
    if (c.eval_path_steps < 3) r.bad("eval.path_steps", "need at least 3 frames");
    if (c.val_size < c.eval_features + 1)
        r.bad("data.val_size", "must be at least eval.features + 1 for the covariance");
    c.generator().validate();
    c.discriminator().validate();
    auto space = c.latent_space();
    space.class_row.assign(c.class_dim, 0.0);  // the real row lives in the generator parameters
    space.validate();
    c.block_weights();
    c.domains();
    return c;
}

std::string TrainConfig::canonical() const {
    std::map<std::string, std::string> m;
    m["train.preset"] = preset;
    m["train.seed"] = std::to_string(seed);
    m["train.batch_size"] = std::to_string(batch_size);
    m["train.steps"] = steps ? std::to_string(*steps) : "auto";
    m["train.d_steps"] = std::to_string(d_steps);
    m["train.ema_decay"] = fmt(ema_decay);
    m["optim.lr_g"] = fmt(lr_g);
    m["optim.lr_d"] = fmt(lr_d);
    m["optim.beta1"] = fmt(beta1);
    m["optim.beta2"] = fmt(beta2);
    m["optim.eps"] = fmt(eps);
    m["model.latent_dim"] = std::to_string(latent_dim);
    m["model.class_dim"] = std::to_string(class_dim);
    m["model.num_classes"] = std::to_string(num_classes);
    m["model.g_channels"] = join(g_channels);
    m["model.activation"] = g_activation == Activation::tanh ? "tanh" : "leaky_relu";
    m["model.d_channels"] = join(d_channels);
    m["model.resolution"] = std::to_string(resolution);
    m["data.preset"] = data_preset;
    m["data.shots"] = std::to_string(shots);
    m["data.seed"] = std::to_string(data_seed);
    m["data.val_size"] = std::to_string(val_size);
    m["loss.adv"] = adv == AdvLossKind::hinge ? "hinge" : "non_saturating";
    m["loss.d_blocks"] = d_blocks;
    m["loss.weights"] = weights;
    m["loss.lambda_ss"] = fmt(lambda_ss);
    m["loss.tap_resolution"] = std::to_string(tap_resolution);
    m["loss.ss_interval"] = std::to_string(ss_interval);
    m["loss.ss_squared"] = ss_squared ? "true" : "false";
    m["loss.ppl_weight"] = fmt(ppl_weight);
    m["latent.mode"] = latent_mode == LatentMode::joint_noise_class ? "joint" : "noise_only";
    m["eval.interval"] = std::to_string(eval_interval);
    m["eval.extra"] = join(eval_extra);
    m["eval.paths"] = std::to_string(eval_paths);
    m["eval.path_steps"] = std::to_string(eval_path_steps);
    m["eval.seed"] = std::to_string(eval_seed);
    m["eval.features"] = std::to_string(eval_features);
    m["ablate.seeds"] = join(ablate_seeds);
    std::string out;
    for (const auto& k : config_keys()) out += k.key + " = " + m.at(k.key) + "\n";
    return out;
}

std::uint64_t TrainConfig::hash() const { return fnv1a64(canonical()); }

GeneratorSpec TrainConfig::generator() const {
    GeneratorSpec g;
    g.latent_dim = latent_dim;
    g.class_embed_dim = class_dim;
    g.num_classes = class_dim > 0 ? num_classes : 0;
    g.channels = g_channels;
    g.resolutions.clear();
    const std::size_t n = g_channels.size();
    if (n > 0 && (resolution >> (n - 1)) << (n - 1) != resolution)
        throw config_error("config: model.resolution " + std::to_string(resolution) + " does not halve " +
                           std::to_string(n - 1) + " times");
    for (std::size_t i = 0; i < n; ++i) g.resolutions.push_back(resolution >> (n - 1 - i));
    g.tap_resolution = tap_resolution;
    g.activation = g_activation;
    return g;
}

DiscriminatorSpec TrainConfig::discriminator() const {
    DiscriminatorSpec d;
    d.input_resolution = resolution;
    d.channels = d_channels;
    return d;
}

LatentSpace TrainConfig::latent_space() const {
    LatentSpace s;
    s.noise_dim = latent_dim;
    s.class_dim = class_dim;
    s.mode = latent_mode;
    return s;
}

BlockWeights TrainConfig::block_weights() const {
    const std::size_t n = d_channels.size();
    if (d_blocks == "all") return BlockWeights::named(weights, n);
    if (d_blocks == "last") return BlockWeights::one_hot(n, n);
    if (d_blocks.rfind("patchgan_", 0) == 0) {
        const std::string k = d_blocks.substr(9);
        if (!k.empty() && k.find_first_not_of("0123456789") == std::string::npos) {
            const std::size_t kk = std::stoul(k);
            if (kk >= 1 && kk <= n) return BlockWeights::one_hot(kk, n);
        }
    }
    throw config_error("config: loss.d_blocks = '" + d_blocks + "': expected all, last or patchgan_<1.." +
                       std::to_string(n) + ">");
}

SmoothnessConfig TrainConfig::smoothness() const {
    SmoothnessConfig s;
    s.lambda = lambda_ss;
    s.tap_resolution = tap_resolution;
    s.apply_interval = ss_interval;
    s.squared = ss_squared;
    return s;
}

DomainPair TrainConfig::domains() const { return dissimilarity_pair(data_preset, resolution); }

std::size_t TrainConfig::total_steps(Phase phase) const {
    if (steps) return *steps;
    if (phase == Phase::pretrain) return 5000;
    if (data_preset == "close") return 5000;
    return preset == "paper-schedule" ? 30000 : 10000;
}

std::vector<std::size_t> TrainConfig::eval_epochs(Phase phase) const {
    const std::size_t total = total_steps(phase);
    std::set<std::size_t> e;
    for (std::size_t s = eval_interval; s <= total; s += eval_interval) e.insert(s);
    for (auto s : eval_extra)
        if (s > 0 && s <= total) e.insert(s);
    if (total > 0) e.insert(total);
    return {e.begin(), e.end()};
}

}  // namespace ssga
