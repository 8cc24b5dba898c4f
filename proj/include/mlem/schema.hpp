#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

namespace mlem {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class FeatureKind { categorical, ordinal };

struct FeatureSpec {
    std::string name;
    FeatureKind kind = FeatureKind::categorical;
    /// Admissible levels of a categorical feature.
    std::vector<std::string> levels;
    /// Optional closed range of an ordinal feature.
    std::optional<std::pair<double, double>> range;

    bool operator==(const FeatureSpec&) const = default;
};

/// Ordered feature list. The position of a feature is its index everywhere downstream.
class FeatureSchema {
public:
    FeatureSchema() = default;
    /// Throws ValidationError on empty or duplicate names, or categorical features with < 2 levels.
    explicit FeatureSchema(std::vector<FeatureSpec> features);

    std::size_t size() const { return features_.size(); }
    const FeatureSpec& operator[](std::size_t k) const { return features_[k]; }
    const std::vector<FeatureSpec>& features() const { return features_; }
    std::optional<std::size_t> index_of(std::string_view name) const;
    std::vector<std::string> names() const;

    /// Stable 64-bit fingerprint of names, kinds, levels and order.
    std::uint64_t fingerprint() const;

    bool operator==(const FeatureSchema&) const = default;

private:
    std::vector<FeatureSpec> features_;
};

using CellValue = std::variant<std::string, double>;

struct StimulusSet {
    std::vector<std::string> sentences;
    /// n rows of m values, in schema order.
    std::vector<std::vector<CellValue>> annotations;
    FeatureSchema schema;

    std::size_t size() const { return sentences.size(); }
};

struct Violation {
    std::optional<std::size_t> row;
    std::string feature;
    std::string message;
};

std::vector<Violation> validate_stimulus_set(const StimulusSet& set);

/// Throws ValidationError carrying the first violations when the set is invalid.
void require_valid(const StimulusSet& set);

std::string to_string(const Violation& v);

struct EmbeddingsContainer {
    std::string model_id;
    /// One n × d_layer matrix per layer; layer 0 is the embedding output.
    std::vector<RowMatrix> layers;
    std::map<std::string, std::string> metadata;
    std::string dataset_fingerprint;

    std::size_t layer_count() const { return layers.size(); }
    std::size_t rows() const { return layers.empty() ? 0 : static_cast<std::size_t>(layers.front().rows()); }
};

/// Row i of every layer corresponds to sentence i of the stimulus set.
class AlignedEmbeddings {
public:
    const EmbeddingsContainer& container() const { return *container_; }
    const StimulusSet& stimuli() const { return *stimuli_; }
    const RowMatrix& layer(std::size_t l) const { return container_->layers[l]; }
    std::size_t layer_count() const { return container_->layers.size(); }

private:
    friend AlignedEmbeddings align(const EmbeddingsContainer&, const StimulusSet&);
    AlignedEmbeddings(const EmbeddingsContainer& c, const StimulusSet& s) : container_(&c), stimuli_(&s) {}
    const EmbeddingsContainer* container_;
    const StimulusSet* stimuli_;
};

/// Throws AlignmentError on a row-count mismatch or empty layer list, ValidationError on non-finite values.
AlignedEmbeddings align(const EmbeddingsContainer& container, const StimulusSet& set);

/// Index of pair (i, j), i < j, in the row-major upper triangle of an n × n matrix.
constexpr std::size_t pair_index(std::size_t n, std::size_t i, std::size_t j) {
    return i * n - i * (i + 1) / 2 + (j - i - 1);
}

constexpr std::size_t pair_count(std::size_t n) { return n * (n - 1) / 2; }

/// Symmetric, zero-diagonal, non-negative matrix stored as its condensed upper triangle.
class PairwiseDistanceMatrix {
public:
    PairwiseDistanceMatrix() = default;
    /// Throws ValidationError if any entry is negative or non-finite, or the length is not n(n-1)/2.
    PairwiseDistanceMatrix(std::size_t n, std::vector<double> condensed);
    static PairwiseDistanceMatrix zeros(std::size_t n);

    std::size_t size() const { return n_; }
    double operator()(std::size_t i, std::size_t j) const {
        if (i == j) return 0.0;
        return i < j ? condensed_[pair_index(n_, i, j)] : condensed_[pair_index(n_, j, i)];
    }
    std::span<const double> condensed() const { return condensed_; }
    Eigen::MatrixXd dense() const;

    bool operator==(const PairwiseDistanceMatrix&) const = default;

private:
    std::size_t n_ = 0;
    std::vector<double> condensed_;
};

enum class ArchitectureClass { transformer, ssm, rnn };

std::string to_string(ArchitectureClass a);
ArchitectureClass parse_architecture(std::string_view s);

struct ModelPropertiesRecord {
    std::string model_id;
    std::string family;
    ArchitectureClass architecture = ArchitectureClass::transformer;
    std::uint64_t parameter_count = 0;
    std::chrono::year_month_day release_date{};
    std::uint64_t depth = 0;
    std::uint64_t width = 0;
    std::uint64_t training_tokens = 0;
    std::uint64_t vocabulary_size = 0;

    double depth_to_width() const { return static_cast<double>(depth) / static_cast<double>(width); }
    /// Days since 1970-01-01.
    std::int64_t release_days() const;
};

/// Throws ValidationError when a positive quantity is zero.
void validate(const ModelPropertiesRecord& r);

std::chrono::year_month_day parse_iso_date(std::string_view s);
std::string format_iso_date(std::chrono::year_month_day d);

}  // namespace mlem
