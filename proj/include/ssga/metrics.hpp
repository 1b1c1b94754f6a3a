#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "ssga/latent.hpp"
#include "ssga/nets.hpp"

namespace ssga {

/// Random conv net with fixed weights: three conv3x3 + leaky relu + pool
/// stages, then a fixed linear map to `dim` features. Never trained.
class FrozenFeatureNet {
public:
    explicit FrozenFeatureNet(std::size_t resolution = 32, std::size_t dim = 64, std::uint64_t seed = 0x5eedfea7);

    std::size_t dim() const noexcept { return dim_; }
    std::size_t resolution() const noexcept { return resolution_; }
    /// images (B, 1, R, R) -> (B, dim)
    Eigen::MatrixXd features(const Tensor& images) const;

private:
    std::size_t resolution_;
    std::size_t dim_;
    ParameterSet params_;
};

/// Frechet distance between the Gaussian fits of two feature clouds (rows are
/// samples). Both sets must have the same size, at least dim + 1.
double frechet_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);
double fid_proxy(const Tensor& set_a, const Tensor& set_b, const FrozenFeatureNet& feat);

/// Clusters generated samples by nearest training sample (ties to the lowest
/// index) and averages the mean pairwise distance of each nonempty cluster.
/// With `normalize`, features are scaled to unit variance over the generated
/// set before distances are taken.
double intra_diversity_features(const Eigen::MatrixXd& generated, const Eigen::MatrixXd& train, bool normalize);
double intra_diversity(const Tensor& generated, const Tensor& train, const FrozenFeatureNet& feat);

struct PathScore {
    double mean_step = 0.0;
    double staircase = 1.0;  // max step / mean step
};

PathScore path_score(const std::vector<double>& steps);
/// Frames along a latent path, consecutive feature distances, then path_score.
PathScore path_smoothness(const GeneratorSpec& spec, const ParameterSet& params, const InterpolationPath& path,
                          const FrozenFeatureNet& feat);

struct MetricsRow {
    std::uint64_t epoch = 0;
    double fid_proxy = 0.0;
    double intra_div = 0.0;
    double path_mean = 0.0;
    double staircase = 1.0;
    double loss_g = 0.0;
    double loss_d = 0.0;
    std::vector<double> contributions;

    bool operator==(const MetricsRow&) const = default;
};

/// Epoch of the lowest fid_proxy; ties go to the earliest epoch.
std::uint64_t checkpoint_select(const std::vector<MetricsRow>& rows);

std::string metrics_csv(const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> parse_metrics_csv(const std::string& text);

}  // namespace ssga
