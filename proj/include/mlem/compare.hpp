#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "mlem/metric_model.hpp"
#include "mlem/schema.hpp"
#include "mlem/signatures.hpp"

namespace mlem {

struct DtwResult {
    /// Accumulated symmetric2 cost of the optimal alignment.
    double distance = 0.0;
    /// distance / (L_A + L_B).
    double normalized = 0.0;
    /// Optimal warping path from (0, 0) to (L_A - 1, L_B - 1).
    std::vector<std::pair<std::size_t, std::size_t>> path;
};

/// Multi-dimensional DTW between two layer × feature matrices. Local cost is the Euclidean
/// distance between rows; symmetric2 steps (diagonal weight 2, origin weight 2).
/// Throws ValidationError on a feature-count mismatch or an empty sequence.
DtwResult dtw(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);
double dtw_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

struct ModelDistanceMatrix {
    std::vector<std::string> model_ids;
    Eigen::MatrixXd distances;
    /// nullopt: mean-over-folds signatures; otherwise the fold whose FIs were used.
    std::optional<std::size_t> fold;
};

/// Normalized DTW between every pair of model signatures (OpenMP over pairs).
ModelDistanceMatrix dtw_matrix(const std::vector<ModelSignature>& signatures, std::optional<std::size_t> fold = std::nullopt);

struct LayerRef {
    std::string model_id;
    std::size_t layer = 0;
    double relative_position = 0.0;
    /// Family from the model properties; the model id when properties are absent.
    std::string family;

    std::string label() const { return model_id + ":" + std::to_string(layer); }
};

struct LayerDistanceMatrix {
    std::vector<LayerRef> layers;
    Eigen::MatrixXd distances;
};

/// Euclidean distance between the mean FI vectors of every pair of layers across models.
LayerDistanceMatrix layer_distance_matrix(const std::vector<ModelSignature>& signatures);

/// floor(relative position × 8), clamped to [0, 7].
std::size_t depth_eighth(double relative_position);

struct LayerCandidate {
    LayerRef ref;
    double distance = 0.0;
};

struct NearFar {
    LayerCandidate closest;
    LayerCandidate farthest;
};

/// Among candidates in the same depth eighth as `reference` and of a different family, the
/// closest and farthest by distance; ties go to the lexicographically smaller (model_id, layer).
/// Throws ValidationError when no candidate survives the filter.
NearFar nearest_and_farthest(const LayerRef& reference, const std::vector<LayerCandidate>& candidates);
NearFar nearest_and_farthest(const LayerDistanceMatrix& matrix, std::size_t reference);

struct RsaMatrix {
    std::vector<std::string> labels;  // "model:layer"
    /// Spearman between condensed neural distance matrices; nullopt when a layer's distances are constant.
    std::vector<std::vector<std::optional<double>>> values;
};

/// Layer × layer RSA over all layers of all containers, which must share one stimulus set.
RsaMatrix rsa_matrix(const std::vector<AlignedEmbeddings>& embeddings);

/// Meta-predictor names, in column order.
std::vector<std::string> meta_predictor_names();

/// Normalized distances between models over family, architecture class, log10 parameter count,
/// release date (days), log10 depth, depth-to-width ratio and log10 training tokens.
FeatureDistanceTensor meta_predictor_distances(const std::vector<ModelPropertiesRecord>& models);

struct MetaResult {
    std::vector<std::string> features;
    std::vector<ImportanceResult> folds;
    std::vector<double> mean;
    std::vector<double> stddev;
    /// True when a fold could not be scored (e.g. all DTW distances equal).
    bool degenerate = false;
    std::string message;
};

/// One MLEM per fold with models as stimuli, the fold's DTW distances as targets and the
/// meta-predictors as features; fitted and scored over all model pairs.
MetaResult meta_mlem(const std::vector<ModelDistanceMatrix>& per_fold, const std::vector<ModelPropertiesRecord>& table,
                     const TrainConfig& config, std::size_t repeats = 10);

}  // namespace mlem
