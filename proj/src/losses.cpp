#include "ssga/losses.hpp"

#include <cmath>
#include <iostream>
#include <numeric>

#include "ssga/error.hpp"
#include "ssga/ops.hpp"

namespace ssga {

using namespace ad;

BlockWeights::BlockWeights(std::vector<double> raw) : w_(std::move(raw)) {
    if (w_.empty()) throw config_error("block weights: need at least one block");
    double total = 0.0;
    for (double v : w_) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw config_error("block weights must be finite and nonnegative");
        total += v;
    }
    if (total == 0.0) throw config_error("block weights: all zero");
    for (auto& v : w_) v /= total;
}

BlockWeights BlockWeights::uniform(std::size_t blocks) { return BlockWeights(std::vector<double>(blocks, 1.0)); }

BlockWeights BlockWeights::one_hot(std::size_t k, std::size_t blocks) {
    if (k == 0 || k > blocks) throw config_error("block weights: head " + std::to_string(k) + " out of range");
    std::vector<double> w(blocks, 0.0);
    w[k - 1] = 1.0;
    return BlockWeights(std::move(w));
}

BlockWeights BlockWeights::named(const std::string& name, std::size_t blocks) {
    if (name == "uniform") return uniform(blocks);
    if (name != "earlier" && name != "later") throw config_error("unknown block weighting '" + name + "'");
    if (blocks == 1) return uniform(1);
    // 1.6 .. 0.4 in equal steps; exactly [1.6, 1.4, 1.2, 1.0, 0.8, 0.6, 0.4] for 7 blocks
    std::vector<double> w(blocks);
    for (std::size_t i = 0; i < blocks; ++i)
        w[i] = (16.0 - 12.0 * static_cast<double>(i) / static_cast<double>(blocks - 1)) / 10.0;
    if (name == "later") std::reverse(w.begin(), w.end());
    return BlockWeights(std::move(w));
}

std::size_t BlockWeights::deepest_active() const {
    for (std::size_t i = w_.size(); i-- > 0;)
        if (w_[i] != 0.0) return i + 1;
    return 0;
}

// ---------------------------------------------------------------------------

Var adv_d_loss(AdvLossKind kind, Var real, Var fake) {
    if (kind == AdvLossKind::hinge) return add(mean(relu(offset(scale(real, -1.0), 1.0))), mean(relu(offset(fake, 1.0))));
    return add(mean(softplus(scale(real, -1.0))), mean(softplus(fake)));
}

Var adv_g_loss(AdvLossKind kind, Var fake) {
    if (kind == AdvLossKind::hinge) return scale(mean(fake), -1.0);
    return mean(softplus(scale(fake, -1.0)));
}

namespace {

double softplus_value(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

double adv_d_term(AdvLossKind kind, double real, double fake) {
    if (kind == AdvLossKind::hinge) return std::max(0.0, 1.0 - real) + std::max(0.0, 1.0 + fake);
    return softplus_value(-real) + softplus_value(fake);
}

double adv_g_term(AdvLossKind kind, double fake) {
    return kind == AdvLossKind::hinge ? -fake : softplus_value(-fake);
}

namespace {

template <class Term>
MultiBlockLoss weighted_sum(std::size_t blocks, const BlockWeights& weights, Term term) {
    if (blocks > weights.size())
        throw config_error("multi-block loss: " + std::to_string(blocks) + " logits for " +
                           std::to_string(weights.size()) + " weights");
    for (std::size_t i = blocks; i < weights.size(); ++i)
        if (weights[i] != 0.0) throw config_error("multi-block loss: missing logits for weighted block " +
                                                  std::to_string(i + 1));
    MultiBlockLoss out{{}, std::vector<double>(weights.size(), 0.0)};
    bool first = true;
    for (std::size_t i = 0; i < blocks; ++i) {
        if (weights[i] == 0.0) continue;
        Var li = term(i);
        out.per_block[i] = li.value().item();
        Var wl = scale(li, weights[i]);
        out.total = first ? wl : add(out.total, wl);
        first = false;
    }
    return out;
}

}  // namespace

MultiBlockLoss multi_block_d_loss(std::span<const Var> real, std::span<const Var> fake, AdvLossKind kind,
                                  const BlockWeights& weights) {
    if (real.size() != fake.size())
        throw config_error("multi-block D loss: " + std::to_string(real.size()) + " real vs " +
                           std::to_string(fake.size()) + " fake logit heads");
    return weighted_sum(real.size(), weights, [&](std::size_t i) { return adv_d_loss(kind, real[i], fake[i]); });
}

MultiBlockLoss multi_block_g_loss(std::span<const Var> fake, AdvLossKind kind, const BlockWeights& weights) {
    return weighted_sum(fake.size(), weights, [&](std::size_t i) { return adv_g_loss(kind, fake[i]); });
}

// ---------------------------------------------------------------------------

Var jvp_transpose(const GeneratorSpec& spec, const BoundParams& params, Var z, Var y) {
    Var features = generator_features(spec, params, z);
    if (features.shape() != y.shape())
        throw config_error("jvp: probe shape " + shape_str(y.shape()) + " does not match tap features " +
                           shape_str(features.shape()));
    Var s = inner(features, y);
    return z.tape->grad({s.id, {z.id}, true}).front();
}

Tensor jvp_transpose_value(const GeneratorSpec& spec, const ParameterSet& params, const Tensor& z, const Tensor& y) {
    Tape tape;
    auto bound = bind_parameters(tape, params, false);
    auto zv = tape.input("z", z);
    return jvp_transpose(spec, bound, zv, tape.constant(y)).value();
}

Var smoothness_similarity_loss(const GeneratorSpec& source_spec, const ParameterSet& source,
                               const GeneratorSpec& target_spec, const BoundParams& target, Var z, Var y,
                               const SmoothnessConfig& cfg, std::size_t dims) {
    const std::size_t batch = z.shape()[0];
    if (source_spec.tap_shape(batch) != target_spec.tap_shape(batch))
        throw config_error("smoothness: source tap " + shape_str(source_spec.tap_shape(batch)) +
                           " vs target tap " + shape_str(target_spec.tap_shape(batch)));
    if (source_spec.input_dim() != target_spec.input_dim())
        throw config_error("smoothness: source and target latent sizes differ");
    if (dims == 0 || dims > z.shape()[1]) throw config_error("smoothness: regularized dims out of range");

    Tape& tape = *z.tape;
    Var js = tape.constant(jvp_transpose_value(source_spec, source, z.value(), y.value()));
    Var jt = jvp_transpose(target_spec, target, z, y);
    Var diff = sub(js, jt);
    if (dims < z.shape()[1]) diff = slice_cols(diff, 0, dims);
    Var per_pair = reduce_sum_to(square(diff), {batch, 1});
    if (!cfg.squared) per_pair = ad::sqrt(per_pair);
    return scale(mean(per_pair), cfg.lambda);
}

PplResult ppl_regularizer(const GeneratorSpec& spec, const BoundParams& params, Var z, Var y, double running_mean,
                          double decay) {
    Var norms = row_norms(jvp_transpose(spec, params, z, y));
    Var penalty = mean(square(offset(norms, -running_mean)));
    double batch_mean = 0.0;
    for (double v : norms.value().data()) batch_mean += v;
    batch_mean /= static_cast<double>(norms.value().size());
    return {penalty, decay * running_mean + (1.0 - decay) * batch_mean};
}

std::vector<double> per_block_contributions(const std::vector<std::vector<double>>& terms,
                                            const BlockWeights& weights) {
    if (terms.empty()) throw config_error("contributions: need at least one block");
    if (terms.size() != weights.size()) throw config_error("contributions: terms/weights length mismatch");
    std::vector<double> mags(terms.size(), 0.0);
    for (std::size_t i = 0; i < terms.size(); ++i) {
        if (terms[i].empty()) continue;
        double acc = 0.0;
        for (double v : terms[i]) acc += std::abs(weights[i] * v);
        mags[i] = acc / static_cast<double>(terms[i].size());
    }
    const double total = std::accumulate(mags.begin(), mags.end(), 0.0);
    if (total == 0.0) {
        std::cerr << "warning: per-block contributions are all zero; reporting uniform fractions\n";
        return std::vector<double>(terms.size(), 1.0 / static_cast<double>(terms.size()));
    }
    for (auto& m : mags) m /= total;
    return mags;
}

}  // namespace ssga
