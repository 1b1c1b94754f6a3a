#include "ssga/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "ssga/error.hpp"
#include "ssga/ops.hpp"
#include "ssga/rng.hpp"

namespace ssga {

using namespace ad;

namespace {

constexpr std::size_t kStages = 3;
constexpr std::size_t kChannels[kStages] = {8, 16, 32};
constexpr std::size_t kChunk = 100;

Tensor scaled(RngStream& rng, const Shape& shape, double stddev) {
    Tensor t = rng.normal_tensor(shape);
    for (auto& v : t.data()) v *= stddev;
    return t;
}

}  // namespace

FrozenFeatureNet::FrozenFeatureNet(std::size_t resolution, std::size_t dim, std::uint64_t seed)
    : resolution_(resolution), dim_(dim) {
    if (resolution % 8 != 0 || resolution == 0) throw config_error("features: resolution must be a multiple of 8");
    if (dim == 0) throw config_error("features: dim must be positive");
    RngStream rng(seed, "frozen-features");
    std::size_t cin = 1;
    for (std::size_t i = 0; i < kStages; ++i) {
        const std::string n = "f" + std::to_string(i);
        params_[n + ".w"] = scaled(rng, {kChannels[i], cin, 3, 3}, std::sqrt(2.0 / static_cast<double>(cin * 9)));
        params_[n + ".b"] = scaled(rng, {kChannels[i]}, 0.1);
        cin = kChannels[i];
    }
    const std::size_t flat = cin * (resolution / 8) * (resolution / 8);
    params_["proj"] = scaled(rng, {flat, dim}, 1.0 / std::sqrt(static_cast<double>(flat)));
}

Eigen::MatrixXd FrozenFeatureNet::features(const Tensor& images) const {
    const auto& s = images.shape();
    if (s.size() != 4 || s[1] != 1 || s[2] != resolution_ || s[3] != resolution_)
        throw config_error("features: expected (B, 1, " + std::to_string(resolution_) + ", " +
                           std::to_string(resolution_) + ") images, got " + shape_str(s));
    const std::size_t n = s[0];
    const std::size_t per = resolution_ * resolution_;
    Eigen::MatrixXd out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim_));
    for (std::size_t lo = 0; lo < n; lo += kChunk) {
        const std::size_t hi = std::min(n, lo + kChunk);
        Tensor chunk({hi - lo, 1, resolution_, resolution_});
        std::copy(images.data().begin() + static_cast<std::ptrdiff_t>(lo * per),
                  images.data().begin() + static_cast<std::ptrdiff_t>(hi * per), chunk.data().begin());
        Tape t;
        auto p = bind_parameters(t, params_, false);
        Var h = t.constant(chunk);
        for (std::size_t i = 0; i < kStages; ++i) {
            const std::string name = "f" + std::to_string(i);
            h = mean_pool2x(leaky_relu(add_channel_bias(conv2d(h, p[name + ".w"], 1), p[name + ".b"]), 0.2));
        }
        h = matmul(reshape(h, {hi - lo, numel(h.shape()) / (hi - lo)}), p["proj"]);
        const Tensor& f = h.value();
        for (std::size_t r = lo; r < hi; ++r)
            for (std::size_t c = 0; c < dim_; ++c)
                out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = f[(r - lo) * dim_ + c];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Frechet distance

namespace {

void moments(const Eigen::MatrixXd& x, Eigen::VectorXd& mu, Eigen::MatrixXd& cov) {
    mu = x.colwise().mean().transpose();
    const Eigen::MatrixXd c = x.rowwise() - mu.transpose();
    cov = (c.transpose() * c) / static_cast<double>(x.rows() - 1);
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double frechet_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    if (a.rows() != b.rows())
        throw config_error("fid: sets must have the same size (" + std::to_string(a.rows()) + " vs " +
                           std::to_string(b.rows()) + ")");
    if (a.cols() != b.cols()) throw config_error("fid: feature dimensions differ");
    if (a.rows() < a.cols() + 1)
        throw config_error("fid: need at least " + std::to_string(a.cols() + 1) + " samples per set, got " +
                           std::to_string(a.rows()));
    Eigen::VectorXd mu_a, mu_b;
    Eigen::MatrixXd cov_a, cov_b;
    moments(a, mu_a, cov_a);
    moments(b, mu_b, cov_b);
    // Tr (A B)^{1/2} = Tr (A^{1/2} B A^{1/2})^{1/2}; the inner product is symmetric PSD
    const Eigen::MatrixXd sa = psd_sqrt(cov_a);
    Eigen::MatrixXd m = sa * cov_b * sa;
    m = 0.5 * (m + m.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
    const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
    const double d = (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * tr_sqrt;
    return std::max(d, 0.0);
}

double fid_proxy(const Tensor& set_a, const Tensor& set_b, const FrozenFeatureNet& feat) {
    if (set_a.shape().empty() || set_b.shape().empty() || set_a.shape()[0] != set_b.shape()[0])
        throw config_error("fid: image sets must have the same size");
    return frechet_distance(feat.features(set_a), feat.features(set_b));
}

// ---------------------------------------------------------------------------
// Intra-cluster diversity

double intra_diversity_features(const Eigen::MatrixXd& generated, const Eigen::MatrixXd& train, bool normalize) {
    if (generated.rows() == 0) throw config_error("intra_diversity: empty generated set");
    if (train.rows() == 0) throw config_error("intra_diversity: empty training set");
    if (generated.cols() != train.cols()) throw config_error("intra_diversity: feature dimensions differ");

    std::vector<std::vector<Eigen::Index>> clusters(static_cast<std::size_t>(train.rows()));
    for (Eigen::Index i = 0; i < generated.rows(); ++i) {
        Eigen::Index best = 0;
        double best_d = (generated.row(i) - train.row(0)).squaredNorm();
        for (Eigen::Index j = 1; j < train.rows(); ++j) {
            const double d = (generated.row(i) - train.row(j)).squaredNorm();
            if (d < best_d) {
                best_d = d;
                best = j;
            }
        }
        clusters[static_cast<std::size_t>(best)].push_back(i);
    }

    Eigen::MatrixXd g = generated;
    if (normalize) {
        const Eigen::RowVectorXd mu = g.colwise().mean();
        const Eigen::RowVectorXd sd =
            ((g.rowwise() - mu).array().square().colwise().sum() / static_cast<double>(g.rows())).sqrt();
        for (Eigen::Index c = 0; c < g.cols(); ++c)
            if (sd(c) > 0.0) g.col(c) /= sd(c);
    }

    double total = 0.0;
    std::size_t nonempty = 0;
    for (const auto& members : clusters) {
        if (members.empty()) continue;
        ++nonempty;
        if (members.size() < 2) continue;
        double sum = 0.0;
        std::size_t pairs = 0;
        for (std::size_t a = 0; a < members.size(); ++a)
            for (std::size_t b = a + 1; b < members.size(); ++b) {
                sum += (g.row(members[a]) - g.row(members[b])).norm();
                ++pairs;
            }
        total += sum / static_cast<double>(pairs);
    }
    return total / static_cast<double>(nonempty);
}

double intra_diversity(const Tensor& generated, const Tensor& train, const FrozenFeatureNet& feat) {
    return intra_diversity_features(feat.features(generated), feat.features(train), true);
}

// ---------------------------------------------------------------------------
// Interpolation smoothness

PathScore path_score(const std::vector<double>& steps) {
    if (steps.empty()) throw config_error("path: no steps");
    double sum = 0.0, mx = 0.0;
    for (double d : steps) {
        sum += d;
        mx = std::max(mx, d);
    }
    const double mean = sum / static_cast<double>(steps.size());
    if (mean == 0.0) return {0.0, 1.0};
    return {mean, mx / mean};
}

PathScore path_smoothness(const GeneratorSpec& spec, const ParameterSet& params, const InterpolationPath& path,
                          const FrozenFeatureNet& feat) {
    if (path.steps < 3) throw config_error("path: need at least 3 steps");
    const auto points = interpolate(path);
    const std::size_t d = spec.input_dim();
    Tensor z({points.size(), d});
    for (std::size_t t = 0; t < points.size(); ++t) {
        if (points[t].size() != d) throw config_error("path: latent length does not match the generator");
        std::copy(points[t].data().begin(), points[t].data().end(),
                  z.data().begin() + static_cast<std::ptrdiff_t>(t * d));
    }
    const Eigen::MatrixXd f = feat.features(generate(spec, params, z));
    std::vector<double> steps;
    for (Eigen::Index t = 1; t < f.rows(); ++t) steps.push_back((f.row(t) - f.row(t - 1)).norm());
    return path_score(steps);
}

// ---------------------------------------------------------------------------
// Selection and CSV

std::uint64_t checkpoint_select(const std::vector<MetricsRow>& rows) {
    if (rows.empty()) throw config_error("checkpoint_select: no metrics rows");
    const MetricsRow* best = &rows[0];
    for (const auto& r : rows)
        if (r.fid_proxy < best->fid_proxy || (r.fid_proxy == best->fid_proxy && r.epoch < best->epoch)) best = &r;
    return best->epoch;
}

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
    const std::size_t n = rows.empty() ? 0 : rows[0].contributions.size();
    std::string out = "epoch,fid_proxy,intra_div,path_mean,staircase,loss_g,loss_d";
    for (std::size_t i = 1; i <= n; ++i) out += ",c" + std::to_string(i);
    out += "\n";
    for (const auto& r : rows) {
        if (r.contributions.size() != n) throw config_error("metrics: rows disagree on the number of blocks");
        out += std::to_string(r.epoch);
        for (double v : {r.fid_proxy, r.intra_div, r.path_mean, r.staircase, r.loss_g, r.loss_d}) out += "," + num(v);
        for (double c : r.contributions) out += "," + num(c);
        out += "\n";
    }
    return out;
}

std::vector<MetricsRow> parse_metrics_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line.rfind("epoch,fid_proxy,intra_div,path_mean,staircase,loss_g,loss_d", 0) != 0)
        throw io_error("metrics csv: bad header");
    std::vector<MetricsRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() < 7) throw io_error("metrics csv: short row");
        try {
            MetricsRow r;
            r.epoch = std::stoull(cells[0]);
            r.fid_proxy = std::stod(cells[1]);
            r.intra_div = std::stod(cells[2]);
            r.path_mean = std::stod(cells[3]);
            r.staircase = std::stod(cells[4]);
            r.loss_g = std::stod(cells[5]);
            r.loss_d = std::stod(cells[6]);
            for (std::size_t i = 7; i < cells.size(); ++i) r.contributions.push_back(std::stod(cells[i]));
            rows.push_back(std::move(r));
        } catch (const std::logic_error&) {
            throw io_error("metrics csv: unparsable row '" + line + "'");
        }
    }
    return rows;
}

}  // namespace ssga
