#pragma once

#include <span>
#include <string>
#include <vector>

#include "ssga/latent.hpp"
#include "ssga/nets.hpp"

namespace ssga {

enum class AdvLossKind : std::uint8_t { non_saturating_logistic, hinge };

/// Per-block weights w_1..w_N, normalized to sum 1 at construction.
class BlockWeights {
public:
    explicit BlockWeights(std::vector<double> raw);

    static BlockWeights uniform(std::size_t blocks);
    /// Only block k (1-based) contributes: last_block_only is one_hot(N, N),
    /// the truncated PatchGAN baseline is one_hot(k, N) with k < N.
    static BlockWeights one_hot(std::size_t k, std::size_t blocks);
    /// "uniform", "earlier" (1.6 .. 0.4 linearly) or "later" (0.4 .. 1.6).
    static BlockWeights named(const std::string& name, std::size_t blocks);

    std::size_t size() const noexcept { return w_.size(); }
    double operator[](std::size_t i) const { return w_[i]; }
    const std::vector<double>& values() const noexcept { return w_; }
    /// 1-based index of the deepest block with nonzero weight.
    std::size_t deepest_active() const;

private:
    std::vector<double> w_;
};

struct SmoothnessConfig {
    double lambda = 5.0;
    std::size_t tap_resolution = 8;
    std::size_t apply_interval = 1;
    std::size_t probe_count = 0;  // 0: one probe pair per batch element
    bool squared = false;         // ablation: squared L2 instead of L2
};

// --- base adversarial losses ------------------------------------------------

/// L_D on one head: real and fake logits are (B, 1).
ad::Var adv_d_loss(AdvLossKind kind, ad::Var real, ad::Var fake);
ad::Var adv_g_loss(AdvLossKind kind, ad::Var fake);

/// Per-sample value-level forms, used for bookkeeping.
double adv_d_term(AdvLossKind kind, double real_logit, double fake_logit);
double adv_g_term(AdvLossKind kind, double fake_logit);

struct MultiBlockLoss {
    ad::Var total;
    std::vector<double> per_block;  // L_D[l^i] (or generator term), unweighted; 0 for inactive blocks
};

/// sum_i w_i L_D[l^i]. Logit lists may be shorter than the weights when the
/// discriminator was truncated, provided every missing block has weight 0.
MultiBlockLoss multi_block_d_loss(std::span<const ad::Var> real, std::span<const ad::Var> fake, AdvLossKind kind,
                                  const BlockWeights& weights);
MultiBlockLoss multi_block_g_loss(std::span<const ad::Var> fake, AdvLossKind kind, const BlockWeights& weights);

// --- smoothness ---------------------------------------------------------------

/// grad_z <G^l(z), y> = J^T y per batch row, recorded with create_graph so it
/// can be differentiated again. z: (B, d), y: tap shape. Returns (B, d).
ad::Var jvp_transpose(const GeneratorSpec& spec, const BoundParams& params, ad::Var z, ad::Var y);

/// Value of J^T y for a frozen generator (computed on a scratch tape).
Tensor jvp_transpose_value(const GeneratorSpec& spec, const ParameterSet& params, const Tensor& z, const Tensor& y);

/// lambda * mean_pairs || J_s^T y - J_t^T y ||_2 over the first `dims` latent
/// coordinates. Gradients reach the target parameters only.
ad::Var smoothness_similarity_loss(const GeneratorSpec& source_spec, const ParameterSet& source,
                                   const GeneratorSpec& target_spec, const BoundParams& target, ad::Var z, ad::Var y,
                                   const SmoothnessConfig& cfg, std::size_t dims);

struct PplResult {
    ad::Var penalty;
    double running_mean;
};

/// Path-length baseline: mean over pairs of (||J^T y|| - a)^2; a is updated
/// as an exponential moving average (decay 0.99) of the batch mean norm.
PplResult ppl_regularizer(const GeneratorSpec& spec, const BoundParams& params, ad::Var z, ad::Var y,
                          double running_mean, double decay = 0.99);

// --- bookkeeping --------------------------------------------------------------

/// c_i = mean|w_i L_i| / sum_j mean|w_j L_j| over per-sample terms[i].
/// An all-zero denominator yields 1/N each and a warning on stderr.
std::vector<double> per_block_contributions(const std::vector<std::vector<double>>& terms,
                                            const BlockWeights& weights);

}  // namespace ssga
