#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "mlem/schema.hpp"

namespace mlem {

/// Per-feature pairwise distances over one stimulus set, max-normalized to [0, 1].
struct FeatureDistanceTensor {
    std::vector<std::string> names;
    std::vector<FeatureKind> kinds;
    std::vector<PairwiseDistanceMatrix> matrices;
    /// Factor each raw matrix was divided by (1 for constant features).
    std::vector<double> scale;
    /// True when every pair has distance 0.
    std::vector<bool> constant;

    std::size_t features() const { return matrices.size(); }
    std::size_t size() const { return matrices.empty() ? 0 : matrices.front().size(); }

    /// Distance vector of pair p (condensed index) written into out.
    void pair_vector(std::size_t p, std::span<double> out) const {
        for (std::size_t k = 0; k < matrices.size(); ++k) out[k] = matrices[k].condensed()[p];
    }
};

/// Euclidean distances between rows, accumulated in double. OpenMP-parallel over rows.
/// Throws ValidationError naming the first non-finite row.
PairwiseDistanceMatrix neural_distances(const RowMatrix& layer);

/// Categorical: 0 for equal levels, 1 otherwise. Ordinal: |v_i - v_j|. Unnormalized.
FeatureDistanceTensor raw_feature_distances(const StimulusSet& set);

/// Divides every non-constant matrix by its maximum entry; idempotent.
FeatureDistanceTensor normalize(FeatureDistanceTensor t);

/// raw_feature_distances followed by normalize.
FeatureDistanceTensor feature_distances(const StimulusSet& set);

/// sqrt(dFᵀ W dF). Throws ValidationError if W is not symmetric positive definite.
double predicted_distance(const Eigen::MatrixXd& W, const Eigen::VectorXd& dF);

}  // namespace mlem
