#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mlem/io.hpp"
#include "mlem/metric_model.hpp"
#include "mlem/schema.hpp"

namespace mlem {

struct LayerSignature {
    std::string model_id;
    std::size_t layer = 0;
    /// layer / (layer_count - 1), 0 for single-layer models.
    double relative_position = 0.0;
    /// folds × features.
    std::vector<std::vector<double>> fold_importance;
    std::vector<double> mean;
    /// Population standard deviation across folds.
    std::vector<double> stddev;
    std::vector<double> fold_scores;
};

struct ModelSignature {
    std::string model_id;
    std::vector<std::string> features;
    std::string schema_fingerprint;
    std::vector<LayerSignature> layers;
    std::optional<ModelPropertiesRecord> properties;
    /// Config snapshot and seed of the run that produced the signature.
    io::json provenance = io::json::object();

    std::size_t fold_count() const { return layers.empty() ? 0 : layers.front().fold_importance.size(); }
};

/// Fingerprint of an ordered feature-name list; embedded in signature files.
std::string feature_fingerprint(const std::vector<std::string>& features);

/// Groups results by layer. Throws ValidationError on a missing layer (layers must be 0..L-1,
/// or 0..expected_layers-1 when given), a fold-count mismatch or a feature-schema mismatch.
ModelSignature assemble(const std::string& model_id, const std::vector<ImportanceResult>& results,
                        std::optional<ModelPropertiesRecord> properties = std::nullopt,
                        std::optional<std::size_t> expected_layers = std::nullopt);

/// Layers × features; `fold` selects one fold's FIs instead of the mean.
Eigen::MatrixXd signature_matrix(const ModelSignature& sig, std::optional<std::size_t> fold = std::nullopt);

io::json to_json(const ModelSignature& sig);
ModelSignature signature_from_json(const io::json& j);
void save_signature(const io::fs::path& path, const ModelSignature& sig);
ModelSignature load_signature(const io::fs::path& path);

/// Throws SchemaMismatch unless all signatures share the same feature list.
void require_shared_schema(const std::vector<ModelSignature>& sigs);

}  // namespace mlem
