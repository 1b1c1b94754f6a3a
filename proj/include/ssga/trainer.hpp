#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ssga/config.hpp"
#include "ssga/data.hpp"
#include "ssga/metrics.hpp"

namespace ssga {

/// Everything needed to continue a run bit-exactly.
struct TrainState {
    Phase phase = Phase::pretrain;
    std::uint64_t epoch = 0;
    std::uint64_t config_hash = 0;
    std::string config_text;

    ParameterSet g;
    ParameterSet d;
    ParameterSet ema;       // empty when EMA is off
    ParameterSet source_g;  // frozen G_s (adapt only)
    ParameterSet best_g;    // evaluated parameters at the selected epoch
    std::uint64_t selected_epoch = 0;

    // Adam moments, keyed by parameter name; step counters per network
    ParameterSet adam_m;
    ParameterSet adam_v;
    std::uint64_t adam_steps_g = 0;
    std::uint64_t adam_steps_d = 0;

    RngStream latent;
    RngStream probe;
    RngStream data;
    double ppl_mean = 0.0;

    std::vector<MetricsRow> history;

    bool operator==(const TrainState& other) const;
};

struct StepInfo {
    std::uint64_t epoch;  // steps completed, including this one
    double loss_d;
    double loss_g;
    double loss_ss;  // 0 when not applied
    const TrainState* state;
};

using StepObserver = std::function<void(const StepInfo&)>;

struct RunControl {
    std::optional<std::uint64_t> stop_at;  // stop early (for resumable runs); not part of the config
    StepObserver observer;
};

/// The images a run is evaluated against.
struct EvalData {
    Tensor train;  // few-shot targets (adapt) or a fixed source subset (pretrain)
    Tensor val;    // held-out images, same count as the generated set
};

EvalData eval_data(const TrainConfig& cfg, Phase phase);

TrainState init_pretrain_state(const TrainConfig& cfg);
/// Continues `state` up to the configured number of steps.
void run_pretrain(const TrainConfig& cfg, TrainState& state, const RunControl& ctl = {});
TrainState pretrain(const TrainConfig& cfg, const RunControl& ctl = {});

/// G_t and D start from the source checkpoint; G_s is kept frozen inside the state.
TrainState init_adapt_state(const TrainConfig& cfg, const TrainState& source);
void run_adapt(const TrainConfig& cfg, TrainState& state, const FewShotDataset& data, const RunControl& ctl = {});
TrainState adapt(const TrainConfig& cfg, const TrainState& source, const FewShotDataset& data,
                 const RunControl& ctl = {});

FewShotDataset target_dataset(const TrainConfig& cfg);

/// Adaptation and evaluation latents (B, d). Joint mode samples the whole
/// vector; noise-only mode appends the target class row of g.embed.
Tensor sample_target_latents(const TrainConfig& cfg, const ParameterSet& g, RngStream& rng, std::size_t batch);

/// Generator parameters used for evaluation: the EMA copy when enabled.
const ParameterSet& eval_generator(const TrainState& state);

/// Metrics of `g` on the evaluation set. Losses and contributions are taken
/// on a fixed batch (the training images against the first generated ones).
MetricsRow evaluate(const TrainConfig& cfg, const ParameterSet& g, const ParameterSet& d, const EvalData& data,
                    std::uint64_t epoch);

struct InterpGrid {
    Tensor images;  // (rows * steps, 1, R, R), row-major
    std::size_t rows = 0;
    std::size_t cols = 0;
};

struct GeneratorRef {
    const TrainConfig* cfg;
    const ParameterSet* g;
};

/// `rows` latent pairs drawn from RngStream(seed, "interp") with the target
/// generator's latent layout, each walked in `steps` frames. With a source
/// generator every pair yields two grid rows: source first, then target,
/// from the same waypoints.
InterpGrid interpolation_grid(GeneratorRef target, const GeneratorRef* source, std::size_t rows, std::size_t steps,
                              std::uint64_t seed);

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const std::map<std::string, Tensor>& entries);
std::map<std::string, Tensor> decode_checkpoint(const std::string& bytes);

std::map<std::string, Tensor> state_entries(const TrainState& state);
TrainState state_from_entries(const std::map<std::string, Tensor>& entries);

void save_checkpoint(const std::filesystem::path& path, const TrainState& state);
TrainState load_checkpoint(const std::filesystem::path& path);

/// Refuses (config error) when the checkpoint was written under another config.
void check_resume(const TrainConfig& cfg, const TrainState& state);

// ---------------------------------------------------------------------------
// Ablation

struct AblationAxis {
    std::string name;  // lambda_ss | tap | d_loss | weights | latent
    std::vector<std::string> values;
};

/// "lambda_ss=0,5;d_loss=all,last"
std::vector<AblationAxis> parse_axes(const std::string& text);

struct AblationRun {
    std::vector<std::string> cell;  // axis values, in axis order
    std::uint64_t seed;
    MetricsRow selected;  // row at the selected epoch
    MetricsRow final;
};

struct AblationReport {
    std::vector<AblationAxis> axes;
    std::vector<AblationRun> runs;  // grid order, then seed order

    std::string csv() const;
};

/// Config for one grid cell and seed.
TrainConfig ablation_cell_config(const TrainConfig& base, const std::vector<AblationAxis>& axes,
                                 const std::vector<std::string>& cell, std::uint64_t seed);

/// Runs the cross product; `threads` cells at a time, joined in grid order.
AblationReport ablation_grid(const TrainConfig& base, const std::vector<AblationAxis>& axes, const TrainState& source,
                             std::size_t threads = 1);

}  // namespace ssga
