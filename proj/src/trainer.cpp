#include "ssga/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>

#include "ssga/error.hpp"
#include "ssga/ops.hpp"

namespace ssga {

using namespace ad;

bool TrainState::operator==(const TrainState& o) const {
    auto same_rng = [](const RngStream& a, const RngStream& b) {
        return a.stream_seed() == b.stream_seed() && a.draws() == b.draws();
    };
    return phase == o.phase && epoch == o.epoch && config_hash == o.config_hash && config_text == o.config_text &&
           g == o.g && d == o.d && ema == o.ema && source_g == o.source_g && best_g == o.best_g &&
           selected_epoch == o.selected_epoch && adam_m == o.adam_m && adam_v == o.adam_v &&
           adam_steps_g == o.adam_steps_g && adam_steps_d == o.adam_steps_d && same_rng(latent, o.latent) &&
           same_rng(probe, o.probe) && same_rng(data, o.data) && ppl_mean == o.ppl_mean && history == o.history;
}

namespace {

// ---------------------------------------------------------------------------
// Latents

// Rows of the class embedding enter the generator input next to the noise.
// Pretraining draws a class per sample; adaptation targets class 0.
Tensor embed_row(const ParameterSet& g, std::size_t cls) {
    const Tensor& e = g.at("g.embed");
    const std::size_t w = e.shape()[1];
    Tensor row({w});
    for (std::size_t k = 0; k < w; ++k) row[k] = e[cls * w + k];
    return row;
}

Tensor target_latents(const TrainConfig& cfg, const ParameterSet& g, RngStream& rng, std::size_t batch) {
    const std::size_t d = cfg.latent_dim + cfg.class_dim;
    if (cfg.class_dim == 0 || cfg.latent_mode == LatentMode::joint_noise_class) return rng.normal_tensor({batch, d});
    const Tensor row = embed_row(g, 0);
    Tensor z({batch, d});
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t k = 0; k < cfg.latent_dim; ++k) z[b * d + k] = rng.normal();
        for (std::size_t k = 0; k < cfg.class_dim; ++k) z[b * d + cfg.latent_dim + k] = row[k];
    }
    return z;
}

struct PretrainLatent {
    Tensor noise;
    Tensor onehot;  // empty when unconditional
};

PretrainLatent pretrain_latents(const TrainConfig& cfg, RngStream& rng, std::size_t batch) {
    PretrainLatent p{rng.normal_tensor({batch, cfg.latent_dim}), {}};
    if (cfg.class_dim > 0) {
        p.onehot = Tensor({batch, cfg.num_classes});
        for (std::size_t b = 0; b < batch; ++b) p.onehot[b * cfg.num_classes + rng.index(cfg.num_classes)] = 1.0;
    }
    return p;
}

Var pretrain_latent_var(Tape& t, const BoundParams& g, const PretrainLatent& p) {
    Var z = t.input("z", p.noise);
    if (p.onehot.shape().empty()) return z;
    return concat_cols(z, matmul(t.constant(p.onehot), g.at("g.embed")));
}

// ---------------------------------------------------------------------------
// Optimizer

struct Trainable {
    std::vector<std::string> names;
    std::vector<Var> vars;
};

Trainable collect(const BoundParams& bound, const std::set<std::string>& skip = {}) {
    Trainable t;
    for (const auto& [name, v] : bound) {
        if (skip.count(name)) continue;
        t.names.push_back(name);
        t.vars.push_back(v);
    }
    return t;
}

void adam_step(const TrainConfig& cfg, double lr, ParameterSet& params, const std::vector<std::string>& names,
               const std::vector<Tensor>& grads, TrainState& s, std::uint64_t& steps) {
    ++steps;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(steps));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(steps));
    for (std::size_t i = 0; i < names.size(); ++i) {
        Tensor& p = params.at(names[i]);
        const Tensor& g = grads[i];
        auto [mi, m_new] = s.adam_m.try_emplace(names[i], p.shape());
        auto [vi, v_new] = s.adam_v.try_emplace(names[i], p.shape());
        Tensor& m = mi->second;
        Tensor& v = vi->second;
        for (std::size_t k = 0; k < p.size(); ++k) {
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
            p[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg.eps);
        }
    }
}

void ema_step(const TrainConfig& cfg, TrainState& s) {
    if (cfg.ema_decay <= 0.0) return;
    for (auto& [name, e] : s.ema) {
        const Tensor& p = s.g.at(name);
        for (std::size_t k = 0; k < e.size(); ++k) e[k] = cfg.ema_decay * e[k] + (1.0 - cfg.ema_decay) * p[k];
    }
}

void guard(double v, const char* what, std::uint64_t epoch) {
    if (!std::isfinite(v))
        throw numerical_error(std::string("non-finite ") + what + " at step " + std::to_string(epoch + 1));
}

// ---------------------------------------------------------------------------
// One step

struct RealSource {
    const ProceduralFamily* family = nullptr;  // pretrain: unlimited samples
    const Tensor* images = nullptr;             // adapt: the few-shot set
};

Tensor real_batch(const RealSource& src, RngStream& rng, std::size_t batch) {
    if (src.family) return sample_source_batch(*src.family, rng, batch);
    const auto& s = src.images->shape();
    const std::size_t per = s[1] * s[2] * s[3];
    Tensor out({batch, s[1], s[2], s[3]}, src.images->dtype());
    for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t i = rng.index(s[0]);
        for (std::size_t k = 0; k < per; ++k) out[b * per + k] = (*src.images)[i * per + k];
    }
    return out;
}

struct StepLosses {
    double d = 0.0;
    double g = 0.0;
    double ss = 0.0;
};

StepLosses train_step(const TrainConfig& cfg, TrainState& s, const RealSource& reals) {
    const auto gspec = cfg.generator();
    const auto dspec = cfg.discriminator();
    const auto weights = cfg.block_weights();
    const std::size_t upto = weights.deepest_active();
    const std::size_t B = cfg.batch_size;
    const bool adapting = s.phase == Phase::adapt;
    StepLosses out;

    for (std::size_t k = 0; k < cfg.d_steps; ++k) {
        const Tensor real = real_batch(reals, s.data, B);
        Tensor fake;
        {
            Tape t;
            auto g = bind_parameters(t, s.g, false);
            Var z = adapting ? t.constant(target_latents(cfg, s.g, s.latent, B))
                             : pretrain_latent_var(t, g, pretrain_latents(cfg, s.latent, B));
            fake = generator_forward(gspec, g, z, false).image.value();
        }
        Tape t;
        auto d = bind_parameters(t, s.d, true);
        auto lr = discriminator_forward(dspec, d, t.constant(real), upto);
        auto lf = discriminator_forward(dspec, d, t.constant(fake), upto);
        auto loss = multi_block_d_loss(lr, lf, cfg.adv, weights);
        out.d = loss.total.value().item();
        guard(out.d, "discriminator loss", s.epoch);
        auto tr = collect(d);
        auto grads = t.grad_values(loss.total, tr.vars);
        adam_step(cfg, cfg.lr_d, s.d, tr.names, grads, s, s.adam_steps_d);
    }

    Tape t;
    auto g = bind_parameters(t, s.g, true);
    auto d = bind_parameters(t, s.d, false);
    Var z = adapting ? t.input("z", target_latents(cfg, s.g, s.latent, B))
                     : pretrain_latent_var(t, g, pretrain_latents(cfg, s.latent, B));
    auto fake = generator_forward(gspec, g, z, false).image;
    auto lf = discriminator_forward(dspec, d, fake, upto);
    Var total = multi_block_g_loss(lf, cfg.adv, weights).total;
    out.g = total.value().item();

    const auto space = cfg.latent_space();
    if (adapting && cfg.lambda_ss > 0.0 && s.epoch % cfg.ss_interval == 0) {
        Var y = t.constant(sample_probe(gspec.tap_shape(B), s.probe));
        Var ss = smoothness_similarity_loss(gspec, s.source_g, gspec, g, z, y, cfg.smoothness(),
                                            space.regularized_dims());
        out.ss = ss.value().item();
        total = total + ss;
    }
    if (cfg.ppl_weight > 0.0) {
        Var y = t.constant(sample_probe(gspec.tap_shape(B), s.probe));
        auto ppl = ppl_regularizer(gspec, g, z, y, s.ppl_mean);
        s.ppl_mean = ppl.running_mean;
        total = total + cfg.ppl_weight * ppl.penalty;
    }
    guard(total.value().item(), "generator loss", s.epoch);

    // the class table is learned in pretraining only
    auto tr = collect(g, adapting ? std::set<std::string>{"g.embed"} : std::set<std::string>{});
    auto grads = t.grad_values(total, tr.vars);
    adam_step(cfg, cfg.lr_g, s.g, tr.names, grads, s, s.adam_steps_g);
    ema_step(cfg, s);
    return out;
}

void run(const TrainConfig& cfg, TrainState& s, const RealSource& reals, const EvalData& eval, const RunControl& ctl) {
    const std::size_t total = cfg.total_steps(s.phase);
    const auto epochs = cfg.eval_epochs(s.phase);
    const std::set<std::size_t> eval_at(epochs.begin(), epochs.end());
    const std::uint64_t end = std::min<std::uint64_t>(total, ctl.stop_at.value_or(total));
    while (s.epoch < end) {
        const auto losses = train_step(cfg, s, reals);
        ++s.epoch;
        if (eval_at.count(s.epoch)) {
            const auto& g = eval_generator(s);
            auto row = evaluate(cfg, g, s.d, eval, s.epoch);
            // strictly better only, so ties keep the earlier epoch
            const bool best = std::all_of(s.history.begin(), s.history.end(),
                                          [&](const MetricsRow& r) { return row.fid_proxy < r.fid_proxy; });
            if (best) {
                s.best_g = g;
                s.selected_epoch = s.epoch;
            }
            s.history.push_back(std::move(row));
        }
        if (ctl.observer) ctl.observer({s.epoch, losses.d, losses.g, losses.ss, &s});
    }
}

TrainState fresh_state(const TrainConfig& cfg, Phase phase) {
    TrainState s;
    s.phase = phase;
    s.config_hash = cfg.hash();
    s.config_text = cfg.canonical();
    RunStreams streams(cfg.seed);
    s.latent = streams.latent;
    s.probe = streams.probe;
    s.data = streams.data;
    return s;
}

void check_shapes(const ParameterSet& have, const ParameterSet& want, const std::string& what) {
    if (have.size() != want.size())
        throw config_error(what + ": parameter count differs from the configured model");
    for (const auto& [name, t] : want) {
        auto it = have.find(name);
        if (it == have.end() || it->second.shape() != t.shape())
            throw config_error(what + ": parameter '" + name + "' does not match the configured model");
    }
}

}  // namespace

// ---------------------------------------------------------------------------

EvalData eval_data(const TrainConfig& cfg, Phase phase) {
    if (phase == Phase::adapt) {
        auto d = target_dataset(cfg);
        return {d.train_images(), d.val_images()};
    }
    auto d = make_fewshot(cfg.domains().source, cfg.shots, cfg.data_seed, cfg.val_size);
    return {d.train_images(), d.val_images()};
}

FewShotDataset target_dataset(const TrainConfig& cfg) {
    return make_fewshot(cfg.domains().target, cfg.shots, cfg.data_seed, cfg.val_size);
}

Tensor sample_target_latents(const TrainConfig& cfg, const ParameterSet& g, RngStream& rng, std::size_t batch) {
    return target_latents(cfg, g, rng, batch);
}

InterpGrid interpolation_grid(GeneratorRef target, const GeneratorRef* source, std::size_t rows, std::size_t steps,
                              std::uint64_t seed) {
    if (rows == 0) throw config_error("interp: need at least one row");
    const auto tspec = target.cfg->generator();
    const std::size_t dim = tspec.input_dim();
    std::optional<GeneratorSpec> sspec;
    if (source) {
        sspec = source->cfg->generator();
        if (sspec->input_dim() != dim)
            throw config_error("interp: source latent dimension " + std::to_string(sspec->input_dim()) +
                               " differs from the target's " + std::to_string(dim));
        if (source->cfg->resolution != target.cfg->resolution)
            throw config_error("interp: source and target resolutions differ");
    }
    RngStream rng(seed, "interp");
    const std::size_t R = target.cfg->resolution;
    const std::size_t per = R * R;
    InterpGrid grid;
    grid.rows = source ? 2 * rows : rows;
    grid.cols = steps;
    grid.images = Tensor({grid.rows * steps, 1, R, R});
    for (std::size_t r = 0; r < rows; ++r) {
        const Tensor ends = target_latents(*target.cfg, *target.g, rng, 2);
        InterpolationPath path{Tensor({dim}), Tensor({dim}), steps};
        for (std::size_t k = 0; k < dim; ++k) {
            path.start[k] = ends[k];
            path.end[k] = ends[dim + k];
        }
        const auto frames = interpolate(path);
        Tensor z({steps, dim});
        for (std::size_t f = 0; f < steps; ++f)
            std::copy(frames[f].data().begin(), frames[f].data().end(), z.data().begin() + static_cast<std::ptrdiff_t>(f * dim));
        auto place = [&](const Tensor& imgs, std::size_t grid_row) {
            std::copy(imgs.data().begin(), imgs.data().end(),
                      grid.images.data().begin() + static_cast<std::ptrdiff_t>(grid_row * steps * per));
        };
        if (source) {
            place(generate(*sspec, *source->g, z), 2 * r);
            place(generate(tspec, *target.g, z), 2 * r + 1);
        } else {
            place(generate(tspec, *target.g, z), r);
        }
    }
    return grid;
}

const ParameterSet& eval_generator(const TrainState& state) { return state.ema.empty() ? state.g : state.ema; }

TrainState init_pretrain_state(const TrainConfig& cfg) {
    TrainState s = fresh_state(cfg, Phase::pretrain);
    s.g = init_generator(cfg.generator(), cfg.seed);
    s.d = init_discriminator(cfg.discriminator(), cfg.seed);
    if (cfg.ema_decay > 0.0) s.ema = s.g;
    return s;
}

void run_pretrain(const TrainConfig& cfg, TrainState& state, const RunControl& ctl) {
    if (state.phase != Phase::pretrain) throw config_error("pretrain: state is not a pretraining state");
    const auto source = cfg.domains().source;
    RealSource reals{&source, nullptr};
    run(cfg, state, reals, eval_data(cfg, Phase::pretrain), ctl);
}

TrainState pretrain(const TrainConfig& cfg, const RunControl& ctl) {
    TrainState s = init_pretrain_state(cfg);
    run_pretrain(cfg, s, ctl);
    return s;
}

TrainState init_adapt_state(const TrainConfig& cfg, const TrainState& source) {
    const auto gspec = cfg.generator();
    const auto& src_g = eval_generator(source);
    check_shapes(src_g, init_generator(gspec, 0), "source checkpoint generator");
    check_shapes(source.d, init_discriminator(cfg.discriminator(), 0), "source checkpoint discriminator");
    TrainState s = fresh_state(cfg, Phase::adapt);
    s.g = src_g;
    s.source_g = src_g;
    s.d = source.d;
    if (cfg.ema_decay > 0.0) s.ema = s.g;
    return s;
}

void run_adapt(const TrainConfig& cfg, TrainState& state, const FewShotDataset& data, const RunControl& ctl) {
    if (state.phase != Phase::adapt) throw config_error("adapt: state is not an adaptation state");
    if (data.shots() == 0) throw config_error("adapt: empty few-shot set");
    if (state.source_g.empty()) throw config_error("adapt: state has no source generator");
    const Tensor images = data.train_images();
    RealSource reals{nullptr, &images};
    run(cfg, state, reals, EvalData{images, data.val_images()}, ctl);
}

TrainState adapt(const TrainConfig& cfg, const TrainState& source, const FewShotDataset& data, const RunControl& ctl) {
    TrainState s = init_adapt_state(cfg, source);
    run_adapt(cfg, s, data, ctl);
    return s;
}

void check_resume(const TrainConfig& cfg, const TrainState& state) {
    if (state.config_hash != cfg.hash())
        throw config_error("resume: checkpoint config hash " + std::to_string(state.config_hash) +
                           " does not match the given config (" + std::to_string(cfg.hash()) + ")");
}

// ---------------------------------------------------------------------------
// Evaluation

MetricsRow evaluate(const TrainConfig& cfg, const ParameterSet& g, const ParameterSet& d, const EvalData& data,
                    std::uint64_t epoch) {
    const auto gspec = cfg.generator();
    const auto dspec = cfg.discriminator();
    const FrozenFeatureNet feat(cfg.resolution, cfg.eval_features);
    RngStream rng(cfg.eval_seed, "eval");

    const std::size_t n = data.val.shape()[0];
    const std::size_t R = cfg.resolution;
    Tensor generated({n, 1, R, R});
    for (std::size_t lo = 0; lo < n; lo += 100) {
        const std::size_t hi = std::min(n, lo + 100);
        const Tensor imgs = generate(gspec, g, target_latents(cfg, g, rng, hi - lo));
        std::copy(imgs.data().begin(), imgs.data().end(),
                  generated.data().begin() + static_cast<std::ptrdiff_t>(lo * R * R));
    }

    MetricsRow row;
    row.epoch = epoch;
    row.fid_proxy = fid_proxy(generated, data.val, feat);
    row.intra_div = intra_diversity(generated, data.train, feat);

    double mean_step = 0.0, stair = 0.0;
    for (std::size_t p = 0; p < cfg.eval_paths; ++p) {
        const Tensor ends = target_latents(cfg, g, rng, 2);
        const std::size_t dim = gspec.input_dim();
        InterpolationPath path{Tensor({dim}), Tensor({dim}), cfg.eval_path_steps};
        for (std::size_t k = 0; k < dim; ++k) {
            path.start[k] = ends[k];
            path.end[k] = ends[dim + k];
        }
        const auto score = path_smoothness(gspec, g, path, feat);
        mean_step += score.mean_step;
        stair += score.staircase;
    }
    if (cfg.eval_paths > 0) {
        row.path_mean = mean_step / static_cast<double>(cfg.eval_paths);
        row.staircase = stair / static_cast<double>(cfg.eval_paths);
    }

    // losses on a fixed batch: every training image against as many generated ones
    const std::size_t k = std::min(data.train.shape()[0], n);
    Tensor real({k, 1, R, R}), fake({k, 1, R, R});
    std::copy(data.train.data().begin(), data.train.data().begin() + static_cast<std::ptrdiff_t>(k * R * R),
              real.data().begin());
    std::copy(generated.data().begin(), generated.data().begin() + static_cast<std::ptrdiff_t>(k * R * R),
              fake.data().begin());
    const auto lr = discriminate(dspec, d, real);
    const auto lf = discriminate(dspec, d, fake);
    const auto w = cfg.block_weights();
    std::vector<std::vector<double>> terms(w.size(), std::vector<double>(k));
    for (std::size_t i = 0; i < w.size(); ++i) {
        double di = 0.0, gi = 0.0;
        for (std::size_t b = 0; b < k; ++b) {
            terms[i][b] = adv_d_term(cfg.adv, lr[i][b], lf[i][b]);
            di += terms[i][b];
            gi += adv_g_term(cfg.adv, lf[i][b]);
        }
        row.loss_d += w[i] * di / static_cast<double>(k);
        row.loss_g += w[i] * gi / static_cast<double>(k);
    }
    row.contributions = per_block_contributions(terms, w);
    return row;
}

}  // namespace ssga
