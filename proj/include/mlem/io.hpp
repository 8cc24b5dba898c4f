#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mlem/schema.hpp"

namespace mlem::io {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

/// Shortest decimal that parses back to the same double.
std::string format_double(double v);
double parse_double(std::string_view s);

std::string read_file(const fs::path& path);
/// Writes via a temporary sibling and rename, so readers never see partial files.
void write_file(const fs::path& path, std::string_view contents);

json schema_to_json(const FeatureSchema& schema);
FeatureSchema schema_from_json(const json& j);

/// TSV with header `sentence<TAB>feature...` in schema order.
std::string stimulus_tsv(const StimulusSet& set);
void write_stimulus_set(const fs::path& tsv, const fs::path& schema_json, const StimulusSet& set);
StimulusSet read_stimulus_set(const fs::path& tsv, const fs::path& schema_json);
StimulusSet parse_stimulus_tsv(std::string_view tsv, const FeatureSchema& schema);

/// Fingerprint of the canonical TSV serialization; recorded in embeddings containers.
std::string dataset_fingerprint(const StimulusSet& set);

// Embeddings container: "MLEM", u32 version, u64 header length, JSON header, then
// per-layer row-major little-endian float32 or float64 arrays in layer order.
inline constexpr std::uint32_t kContainerVersion = 1;

enum class StoredPrecision { float32, float64 };

std::string encode_container(const EmbeddingsContainer& c, StoredPrecision precision = StoredPrecision::float32);
EmbeddingsContainer decode_container(std::string_view bytes);
void write_container(const fs::path& path, const EmbeddingsContainer& c,
                     StoredPrecision precision = StoredPrecision::float32);
EmbeddingsContainer read_container(const fs::path& path);

/// Model properties TSV: model_id, family, architecture, parameter_count, release_date,
/// depth, width, training_tokens[, vocabulary_size].
std::vector<ModelPropertiesRecord> parse_properties_tsv(std::string_view tsv);
std::vector<ModelPropertiesRecord> read_properties(const fs::path& path);
std::string properties_tsv(const std::vector<ModelPropertiesRecord>& records);

/// Distance cache: u64 JSON header length, JSON header {n, name, normalization},
/// then the little-endian float64 upper triangle.
std::string encode_distance_cache(const PairwiseDistanceMatrix& d, const std::string& name, double normalization);
struct CachedDistances {
    PairwiseDistanceMatrix matrix;
    std::string name;
    double normalization = 1.0;
};
CachedDistances decode_distance_cache(std::string_view bytes);

/// Square labelled matrix; entries without a value are written as `NA`.
std::string matrix_csv(const std::vector<std::string>& labels, const std::vector<std::vector<std::optional<double>>>& rows);
std::string matrix_csv(const std::vector<std::string>& labels, const Eigen::MatrixXd& m);

struct LabelledMatrix {
    std::vector<std::string> labels;
    std::vector<std::vector<std::optional<double>>> rows;
};
LabelledMatrix parse_matrix_csv(std::string_view csv);

std::vector<std::string> split(std::string_view s, char sep);

}  // namespace mlem::io
