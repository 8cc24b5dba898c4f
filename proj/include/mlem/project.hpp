#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mlem/io.hpp"
#include "mlem/schema.hpp"
#include "mlem/signatures.hpp"

namespace mlem {

struct ProjectionResult {
    std::vector<std::string> ids;
    /// ids.size() × k.
    Eigen::MatrixXd coordinates;
    std::string method;
    /// MDS: all Gram eigenvalues, descending. PCA: all covariance eigenvalues, descending.
    std::vector<double> eigenvalues;
    /// Share of variance carried by each returned component.
    std::vector<double> explained_variance_ratio;
    /// MDS only: summed magnitude of the negative eigenvalues that were clamped to zero.
    double negative_eigenvalue_mass = 0.0;
    /// PCA only: column means removed before projection and the m × k principal directions.
    Eigen::RowVectorXd mean;
    Eigen::MatrixXd components;
    std::optional<double> sigma;
    std::vector<std::string> warnings;
};

/// Torgerson MDS. Each eigenvector's largest-magnitude component is made positive.
/// Throws ValidationError unless 1 <= k <= n - 1.
ProjectionResult classical_mds(const Eigen::MatrixXd& distances, std::size_t k, std::vector<std::string> ids = {});
ProjectionResult classical_mds(const PairwiseDistanceMatrix& distances, std::size_t k, std::vector<std::string> ids = {});

/// Kernel radius used for smoothing: round(4σ).
std::size_t gaussian_radius(double sigma);

/// 1-D Gaussian filter along rows (layers) of each column, truncated at 4σ, with
/// half-sample reflection at the boundaries and a kernel normalized to sum 1.
Eigen::MatrixXd gaussian_smooth(const Eigen::MatrixXd& rows_by_feature, double sigma);

/// PCA over the (optionally smoothed) mean FI rows of every layer of every model.
/// Models with fewer layers than the filter support are left unsmoothed with a warning.
ProjectionResult pca_layers(const std::vector<ModelSignature>& signatures, std::optional<double> sigma, std::size_t k);

/// id,x1..xk CSV with round-trip decimals.
std::string coordinates_csv(const ProjectionResult& r);
io::json diagnostics_json(const ProjectionResult& r);

}  // namespace mlem
