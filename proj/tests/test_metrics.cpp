#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "ssga/data.hpp"
#include "ssga/error.hpp"
#include "ssga/metrics.hpp"

using namespace ssga;

namespace {

Eigen::MatrixXd gaussian_cloud(RngStream& rng, Eigen::Index n, Eigen::Index f, double scale = 1.0) {
    Eigen::MatrixXd m(n, f);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < f; ++j) m(i, j) = scale * rng.normal();
    return m;
}

// Straight-line Frechet distance: eigenvalues of the (non-symmetric) product
// cov_a * cov_b are real and nonnegative; their square roots sum to the trace.
double frechet_oracle(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    auto stats = [](const Eigen::MatrixXd& x, Eigen::VectorXd& mu, Eigen::MatrixXd& cov) {
        const double n = static_cast<double>(x.rows());
        mu = Eigen::VectorXd::Zero(x.cols());
        for (Eigen::Index i = 0; i < x.rows(); ++i) mu += x.row(i).transpose();
        mu /= n;
        cov = Eigen::MatrixXd::Zero(x.cols(), x.cols());
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            const Eigen::VectorXd d = x.row(i).transpose() - mu;
            cov += d * d.transpose();
        }
        cov /= n - 1.0;
    };
    Eigen::VectorXd ma, mb;
    Eigen::MatrixXd ca, cb;
    stats(a, ma, ca);
    stats(b, mb, cb);
    Eigen::EigenSolver<Eigen::MatrixXd> es(ca * cb);
    double tr = 0.0;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) tr += std::sqrt(std::max(es.eigenvalues()(i).real(), 0.0));
    return (ma - mb).squaredNorm() + ca.trace() + cb.trace() - 2.0 * tr;
}

}  // namespace

TEST_CASE("Frechet distance: identical sets and a pure mean offset") {
    RngStream rng(1, "test");
    auto a = gaussian_cloud(rng, 200, 16);
    CHECK(std::abs(frechet_distance(a, a)) <= 1e-8);

    Eigen::RowVectorXd offset = Eigen::RowVectorXd::Zero(16);
    offset(0) = 1.2;
    offset(5) = -1.6;  // norm 2
    Eigen::MatrixXd b = a.rowwise() + offset;
    CHECK(std::abs(frechet_distance(a, b) - 4.0) <= 1e-6);
}

TEST_CASE("Frechet distance matches a straight-line implementation and is symmetric") {
    RngStream rng(2, "test");
    for (int trial = 0; trial < 5; ++trial) {
        auto a = gaussian_cloud(rng, 120, 10, 1.0);
        auto b = gaussian_cloud(rng, 120, 10, 1.5);
        b.col(3) += 0.5 * b.col(1);
        const double got = frechet_distance(a, b);
        CHECK(got == doctest::Approx(frechet_oracle(a, b)).epsilon(1e-8));
        CHECK(std::abs(got - frechet_distance(b, a)) <= 1e-9);
    }
}

TEST_CASE("Frechet distance preconditions") {
    RngStream rng(3, "test");
    CHECK_THROWS_AS(frechet_distance(gaussian_cloud(rng, 50, 4), gaussian_cloud(rng, 60, 4)), Error);
    CHECK_THROWS_AS(frechet_distance(gaussian_cloud(rng, 8, 8), gaussian_cloud(rng, 8, 8)), Error);
    CHECK_NOTHROW(frechet_distance(gaussian_cloud(rng, 9, 8), gaussian_cloud(rng, 9, 8)));
}

TEST_CASE("frozen features are fixed by their seed") {
    FrozenFeatureNet a, b, c(32, 64, 7);
    auto imgs = render_batch(family_from_name("ellipses"), {1, 2, 3});
    auto fa = a.features(imgs);
    CHECK(fa.rows() == 3);
    CHECK(fa.cols() == 64);
    CHECK(fa == b.features(imgs));
    CHECK(fa != c.features(imgs));
    CHECK_THROWS_AS(a.features(Tensor({1, 1, 16, 16})), Error);
}

TEST_CASE("proxy FID between same-distribution samples shrinks with n") {
    FrozenFeatureNet feat(32, 32);
    auto f = family_from_name("ellipses");
    auto sample = [&](std::uint64_t base, std::size_t n) {
        std::vector<std::uint64_t> seeds(n);
        std::iota(seeds.begin(), seeds.end(), base);
        return render_batch(f, seeds);
    };
    const double small = fid_proxy(sample(0, 64), sample(10000, 64), feat);
    const double large = fid_proxy(sample(0, 256), sample(10000, 256), feat);
    INFO(small << " vs " << large);
    CHECK(large < small);
    CHECK_THROWS_AS(fid_proxy(sample(0, 64), sample(0, 65), feat), Error);
}

TEST_CASE("intra-cluster diversity") {
    SUBCASE("identical generated images give 0") {
        Eigen::MatrixXd g = Eigen::MatrixXd::Constant(5, 3, 0.7);
        Eigen::MatrixXd t = Eigen::MatrixXd::Random(2, 3);
        CHECK(intra_diversity_features(g, t, false) == 0.0);
        CHECK(intra_diversity_features(g, t, true) == 0.0);
    }
    SUBCASE("one cluster of two images at distance d") {
        Eigen::MatrixXd g(2, 2);
        g << 0.0, 0.0, 3.0, 4.0;
        Eigen::MatrixXd t(1, 2);
        t << 1.0, 1.0;
        CHECK(intra_diversity_features(g, t, false) == doctest::Approx(5.0).epsilon(1e-15));
    }
    SUBCASE("hand-placed clusters match brute force") {
        Eigen::MatrixXd t(2, 2);
        t << 0.0, 0.0, 10.0, 0.0;
        Eigen::MatrixXd g(6, 2);
        g << 1.0, 0.0, 0.0, 1.0, -1.0, -1.0, 9.0, 0.0, 11.0, 1.0, 4.0, 3.0;
        // cluster 0: rows 0,1,2,5 (row 5 is 5 from anchor 0, sqrt(45) from anchor 1)
        // cluster 1: rows 3,4
        auto mean_pairwise = [&](const std::vector<int>& idx, const Eigen::MatrixXd& m) {
            double s = 0.0;
            int n = 0;
            for (std::size_t i = 0; i < idx.size(); ++i)
                for (std::size_t j = i + 1; j < idx.size(); ++j, ++n) s += (m.row(idx[i]) - m.row(idx[j])).norm();
            return s / n;
        };
        const double raw = 0.5 * (mean_pairwise({0, 1, 2, 5}, g) + mean_pairwise({3, 4}, g));
        CHECK(intra_diversity_features(g, t, false) == doctest::Approx(raw).epsilon(1e-14));

        Eigen::MatrixXd gn = g;
        for (int c = 0; c < 2; ++c) {
            const double mu = gn.col(c).mean();
            const double sd = std::sqrt((gn.col(c).array() - mu).square().mean());
            gn.col(c) /= sd;
        }
        const double norm = 0.5 * (mean_pairwise({0, 1, 2, 5}, gn) + mean_pairwise({3, 4}, gn));
        CHECK(intra_diversity_features(g, t, true) == doctest::Approx(norm).epsilon(1e-14));
    }
    SUBCASE("singletons contribute 0 and ties go to the lowest anchor") {
        Eigen::MatrixXd t(2, 1);
        t << -1.0, 1.0;
        Eigen::MatrixXd g(3, 1);
        g << 0.0, 0.0, 5.0;  // the two zeros tie and join anchor 0
        CHECK(intra_diversity_features(g, t, false) == doctest::Approx(0.0));
        g << 0.0, -3.0, 5.0;
        // cluster 0: {0, -3} -> 3; cluster 1: {5} -> 0
        CHECK(intra_diversity_features(g, t, false) == doctest::Approx(1.5));
    }
    SUBCASE("permutation invariance") {
        RngStream rng(4, "test");
        auto g = gaussian_cloud(rng, 30, 5);
        auto t = gaussian_cloud(rng, 4, 5);
        const double base = intra_diversity_features(g, t, true);
        Eigen::MatrixXd gp = g.colwise().reverse();
        Eigen::MatrixXd tp = t.colwise().reverse();
        CHECK(intra_diversity_features(gp, tp, true) == doctest::Approx(base).epsilon(1e-12));
    }
    CHECK_THROWS_AS(intra_diversity_features(Eigen::MatrixXd(0, 2), Eigen::MatrixXd::Zero(1, 2), true), Error);
}

TEST_CASE("path scores") {
    CHECK(path_score({1.0, 1.0, 4.0}).staircase == doctest::Approx(2.0).epsilon(1e-15));
    auto flat = path_score({0.0, 0.0});
    CHECK(flat.mean_step == 0.0);
    CHECK(flat.staircase == 1.0);

    // features moving linearly along the path give equal steps
    Eigen::VectorXd a = Eigen::VectorXd::Random(6), b = Eigen::VectorXd::Random(6);
    std::vector<double> steps;
    for (int t = 1; t < 8; ++t) steps.push_back(((a + (t / 7.0) * b) - (a + ((t - 1) / 7.0) * b)).norm());
    CHECK(std::abs(path_score(steps).staircase - 1.0) <= 1e-6);

    RngStream rng(5, "test");
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> d(2 + rng.index(10));
        for (auto& v : d) v = std::abs(rng.normal());
        CHECK(path_score(d).staircase >= 1.0 - 1e-12);
    }
}

TEST_CASE("path smoothness of a constant generator") {
    GeneratorSpec spec;
    auto p = init_generator(spec, 1);
    p["g.out.w"] = Tensor(p["g.out.w"].shape());
    FrozenFeatureNet feat;
    RngStream rng(6, "latent");
    InterpolationPath path{rng.normal_tensor({spec.input_dim()}), rng.normal_tensor({spec.input_dim()}), 8};
    auto s = path_smoothness(spec, p, path, feat);
    CHECK(s.mean_step == 0.0);
    CHECK(s.staircase == 1.0);
    path.steps = 2;
    CHECK_THROWS_AS(path_smoothness(spec, p, path, feat), Error);
}

TEST_CASE("checkpoint selection") {
    CHECK(checkpoint_select({MetricsRow{.epoch = 7}}) == 7);
    std::vector<MetricsRow> rows{{.epoch = 1, .fid_proxy = 5.0}, {.epoch = 2, .fid_proxy = 3.0},
                                 {.epoch = 3, .fid_proxy = 3.0}};
    CHECK(checkpoint_select(rows) == 2);
    CHECK_THROWS_AS(checkpoint_select({}), Error);

    RngStream rng(7, "test");
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<MetricsRow> r(1 + rng.index(12));
        for (std::size_t i = 0; i < r.size(); ++i) {
            r[i].epoch = 100 * (i + 1);
            r[i].fid_proxy = static_cast<double>(rng.index(5));
        }
        std::uint64_t best = r[0].epoch;
        double best_f = r[0].fid_proxy;
        for (const auto& row : r)
            if (row.fid_proxy < best_f) {
                best_f = row.fid_proxy;
                best = row.epoch;
            }
        CHECK(checkpoint_select(r) == best);
    }
}

TEST_CASE("metrics CSV round trip") {
    std::vector<MetricsRow> rows{{500, 12.25, 0.5, 1.0 / 3.0, 1.75, 0.693, 1.386, {0.25, 0.75}},
                                 {1000, 10.0, 0.125, 2.0, 1.5, -0.1, 1e-300, {0.5, 0.5}}};
    const auto text = metrics_csv(rows);
    CHECK(text.rfind("epoch,fid_proxy,intra_div,path_mean,staircase,loss_g,loss_d,c1,c2\n", 0) == 0);
    CHECK(parse_metrics_csv(text) == rows);
    CHECK_THROWS_AS(parse_metrics_csv("nope\n"), Error);
}
