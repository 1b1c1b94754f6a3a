#include "ssga/oracles.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

#include "ssga/gradcheck.hpp"
#include "ssga/losses.hpp"
#include "ssga/metrics.hpp"
#include "ssga/ops.hpp"

namespace ssga {

using namespace ad;

GeneratorSpec oracle_generator() {
    GeneratorSpec g;
    g.latent_dim = 6;
    g.resolutions = {4, 8, 16};
    g.channels = {6, 4, 2};
    g.tap_resolution = 8;
    g.activation = Activation::tanh;
    return g;
}

GeneratorSpec linear_tap_generator(std::size_t d) {
    GeneratorSpec g;
    g.latent_dim = d;
    g.resolutions = {1, 2};
    g.channels = {d, 1};
    g.tap_resolution = 1;
    g.activation = Activation::linear;
    return g;
}

ParameterSet linear_tap_params(const GeneratorSpec& spec, const std::vector<double>& a_rowmajor) {
    // fc.w is (d_in, d_out) applied as z W, so it holds A^T
    auto p = init_generator(spec, 1);
    const std::size_t d = spec.latent_dim;
    Tensor w({d, d});
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) w[j * d + i] = a_rowmajor[i * d + j];
    p["g.fc.w"] = w;
    p["g.fc.b"] = Tensor({d});
    return p;
}

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

template <class F>
OracleResult timed(const std::string& name, double tolerance, F body) {
    OracleResult r;
    r.name = name;
    r.tolerance = tolerance;
    const auto t0 = std::chrono::steady_clock::now();
    body(r);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

}  // namespace

OracleResult oracle_first_order(std::uint64_t seed) {
    return timed("first-order gradients", 1e-4, [&](OracleResult& r) {
        const auto spec = oracle_generator();
        RngStream rng(seed, "oracle/first");
        const auto params = init_generator(spec, seed);
        const Tensor z = rng.normal_tensor({2, spec.input_dim()});
        const Tensor probe = rng.normal_tensor({2, 1, 16, 16});
        ScalarBuilder build = [&](Tape& t, const std::map<std::string, Tensor>& p) {
            auto bound = bind_parameters(t, p, true);
            return inner(generator_forward(spec, bound, t.constant(z), false).image, t.constant(probe));
        };
        const auto rep = check_gradient(build, params, 1e-5);
        r.value = rep.max_rel_error;
        r.pass = rep.checked == parameter_count(params) && rep.max_rel_error < r.tolerance;
        r.detail = std::to_string(rep.checked) + " entries, worst " + rep.worst_entry;
    });
}

OracleResult oracle_second_order(std::uint64_t seed) {
    return timed("second-order gradients", 1e-4, [&](OracleResult& r) {
        const auto spec = oracle_generator();
        RngStream rng(seed, "oracle/second");
        const auto params = init_generator(spec, seed + 1);
        const Tensor y = sample_probe(spec.tap_shape(2), rng);
        const Tensor z = rng.normal_tensor({2, spec.input_dim()});
        const Tensor c = rng.normal_tensor({2, spec.input_dim()});
        ScalarBuilder inner_f = [&](Tape& t, const std::map<std::string, Tensor>& p) {
            auto bound = bind_parameters(t, p, true);
            return inner(generator_features(spec, bound, t.input("z", z)), t.constant(y));
        };
        const auto rep = grad_of_grad_check(inner_f, params, c, 1e-5);
        r.value = rep.max_rel_error;
        r.pass = rep.checked == parameter_count(params) && rep.max_rel_error < r.tolerance;
        r.detail = std::to_string(rep.checked) + " entries, worst " + rep.worst_entry;
    });
}

OracleResult oracle_ss_gradient(std::uint64_t seed) {
    return timed("smoothness loss gradient", 1e-4, [&](OracleResult& r) {
        const auto spec = oracle_generator();
        const auto source = init_generator(spec, seed + 11);
        const auto target = init_generator(spec, seed + 12);
        RngStream rng(seed, "oracle/ss");
        const Tensor z = rng.normal_tensor({3, spec.input_dim()});
        const Tensor y = sample_probe(spec.tap_shape(3), rng);
        SmoothnessConfig cfg;
        cfg.lambda = 5.0;
        ScalarBuilder build = [&](Tape& t, const std::map<std::string, Tensor>& p) {
            auto bound = bind_parameters(t, p, true);
            return smoothness_similarity_loss(spec, source, spec, bound, t.input("z", z), t.constant(y), cfg,
                                              spec.input_dim());
        };
        const auto rep = check_gradient(build, target, 1e-5);
        r.value = rep.max_rel_error;
        r.pass = rep.checked == parameter_count(target) && rep.max_rel_error < r.tolerance;
        r.detail = std::to_string(rep.checked) + " parameters, worst " + rep.worst_entry;
    });
}

OracleResult oracle_jvp(std::uint64_t seed) {
    return timed("J^T y on linear taps", 1e-10, [&](OracleResult& r) {
        RngStream rng(seed, "oracle/jvp");
        double worst = 0.0;
        std::size_t identity_mismatch = 0;
        for (std::size_t d : {1, 3, 8}) {
            const auto spec = linear_tap_generator(d);
            std::vector<double> a(d * d), eye(d * d, 0.0);
            for (auto& v : a) v = rng.normal();
            for (std::size_t i = 0; i < d; ++i) eye[i * d + i] = 1.0;
            const Tensor z = rng.normal_tensor({4, d});
            const Tensor y = rng.normal_tensor({4, d, 1, 1});
            const Tensor g = jvp_transpose_value(spec, linear_tap_params(spec, a), z, y);
            for (std::size_t b = 0; b < 4; ++b)
                for (std::size_t k = 0; k < d; ++k) {
                    double expected = 0.0;
                    for (std::size_t i = 0; i < d; ++i) expected += a[i * d + k] * y[b * d + i];
                    worst = std::max(worst, std::abs(g[b * d + k] - expected));
                }
            const Tensor gi = jvp_transpose_value(spec, linear_tap_params(spec, eye), z, y);
            for (std::size_t k = 0; k < gi.size(); ++k)
                if (gi[k] != y[k]) ++identity_mismatch;
        }
        r.value = worst;
        r.pass = worst <= r.tolerance && identity_mismatch == 0;
        r.detail = "max abs error " + num(worst) + ", identity mismatches " + std::to_string(identity_mismatch);
    });
}

OracleResult oracle_d_loss(std::uint64_t seed) {
    return timed("multi-block D loss degeneracy", 1e-12, [&](OracleResult& r) {
        RngStream rng(seed, "oracle/dloss");
        std::size_t mismatches = 0;
        for (int trial = 0; trial < 1000; ++trial) {
            const auto kind = trial % 2 ? AdvLossKind::hinge : AdvLossKind::non_saturating_logistic;
            Tape t;
            auto real = t.constant(rng.normal_tensor({4, 1}));
            auto fake = t.constant(rng.normal_tensor({4, 1}));
            std::vector<Var> rs{real}, fs{fake};
            const double multi = multi_block_d_loss(rs, fs, kind, BlockWeights::uniform(1)).total.value().item();
            if (multi != adv_d_loss(kind, real, fake).value().item()) ++mismatches;
        }
        double worst = 0.0;
        for (int trial = 0; trial < 200; ++trial) {
            const std::size_t n = 1 + rng.index(7);
            Tape t;
            std::vector<Var> rs, fs;
            double mean = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                rs.push_back(t.constant(rng.normal_tensor({4, 1})));
                fs.push_back(t.constant(rng.normal_tensor({4, 1})));
                mean += adv_d_loss(AdvLossKind::non_saturating_logistic, rs.back(), fs.back()).value().item();
            }
            mean /= static_cast<double>(n);
            const double multi = multi_block_d_loss(rs, fs, AdvLossKind::non_saturating_logistic,
                                                    BlockWeights::uniform(n))
                                     .total.value()
                                     .item();
            worst = std::max(worst, std::abs(multi - mean));
        }
        r.value = worst;
        r.pass = mismatches == 0 && worst <= r.tolerance;
        r.detail = "N=1 mismatches " + std::to_string(mismatches) + " / 1000, uniform vs mean " + num(worst);
    });
}

OracleResult oracle_frechet(std::uint64_t seed) {
    return timed("Frechet closed form", 1e-6, [&](OracleResult& r) {
        RngStream rng(seed, "oracle/frechet");
        Eigen::MatrixXd a(400, 16);
        for (Eigen::Index i = 0; i < a.rows(); ++i)
            for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) = rng.normal();
        // a random direction of norm 2
        Eigen::RowVectorXd offset(16);
        for (Eigen::Index j = 0; j < 16; ++j) offset(j) = rng.normal();
        offset *= 2.0 / offset.norm();
        const Eigen::MatrixXd b = a.rowwise() + offset;
        const double shifted = std::abs(frechet_distance(a, b) - 4.0);
        const double same = std::abs(frechet_distance(a, a));
        r.value = shifted;
        r.pass = shifted <= 1e-6 && same <= 1e-8;
        r.detail = "|d(offset 2) - 4| = " + num(shifted) + ", |d(identical)| = " + num(same);
    });
}

std::vector<OracleResult> oracle_suite(std::uint64_t seed) {
    return {oracle_first_order(seed), oracle_second_order(seed), oracle_ss_gradient(seed),
            oracle_jvp(seed),         oracle_d_loss(seed),       oracle_frechet(seed)};
}

}  // namespace ssga
