#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "mlem/distances.hpp"
#include "mlem/error.hpp"
#include "mlem/io.hpp"
#include "mlem/softrank.hpp"

namespace mlem {

enum class Optimizer { sgd, momentum };

struct TrainConfig {
    std::size_t batch_pairs = 1024;
    std::size_t epochs = 50;
    double learning_rate = 0.05;
    double momentum = 0.9;
    std::uint64_t seed = 0;
    Optimizer optimizer = Optimizer::momentum;
    SoftRankConfig softrank{};
    bool diagonal_only = false;
    /// Pairs sampled per epoch when the training set has more.
    std::size_t max_pairs_per_fold = 500000;
};

/// Throws ValidationError on batch_pairs < 2, non-positive learning rate or ε.
void validate(const TrainConfig& config);

io::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const io::json& j);

/// W = L·Lᵀ with L lower triangular and a strictly positive diagonal.
class MetricModel {
public:
    MetricModel() = default;
    /// Identity metric over m features.
    explicit MetricModel(std::size_t m);
    /// Throws ValidationError unless L is square, lower triangular, with positive diagonal.
    explicit MetricModel(Eigen::MatrixXd cholesky_factor);

    const Eigen::MatrixXd& cholesky_factor() const { return L_; }
    Eigen::MatrixXd metric() const { return L_ * L_.transpose(); }
    std::size_t features() const { return static_cast<std::size_t>(L_.rows()); }

    std::vector<std::string> feature_names;
    TrainConfig config;
    /// Mean training loss (negative soft Spearman) per epoch.
    std::vector<double> loss_trace;
    /// Sorted stimulus indices the model was fitted on.
    std::vector<std::size_t> train_indices;

private:
    Eigen::MatrixXd L_;
};

class FitError : public Error {
public:
    FitError(std::string what, MetricModel last) : Error(std::move(what)), last_(std::move(last)) {}
    const MetricModel& last_finite_state() const { return last_; }

private:
    MetricModel last_;
};

/// Called after every optimizer step with the current model.
using StepObserver = std::function<void(const MetricModel&)>;

/// Fits W by mini-batch SGD maximizing the soft Spearman between dFᵀWdF and the neural distances.
MetricModel fit(const FeatureDistanceTensor& features, const PairwiseDistanceMatrix& neural,
                std::span<const std::size_t> train_indices, const TrainConfig& config,
                const StepObserver& observer = {});

/// Hard Spearman between modeled and neural distances over all pairs inside `test_indices`.
/// Throws ValidationError if the indices overlap the training stimuli (unless allowed),
/// UndefinedCorrelation for constant predictions or fewer than 2 pairs.
double score(const MetricModel& model, const FeatureDistanceTensor& features, const PairwiseDistanceMatrix& neural,
             std::span<const std::size_t> test_indices, bool allow_training_overlap = false);

struct ImportanceOptions {
    std::size_t repeats = 10;
    std::uint64_t seed = 0;
    bool with_interactions = false;
    bool allow_training_overlap = false;
};

struct ImportanceResult {
    std::string model_id;
    std::size_t layer = 0;
    std::size_t fold = 0;
    std::vector<std::string> features;
    /// Mean held-out score drop per feature.
    std::vector<double> importance;
    std::vector<std::pair<std::size_t, std::size_t>> interaction_pairs;
    std::vector<double> interaction_importance;
    double score = 0.0;
    std::size_t repeats = 0;
    std::uint64_t seed = 0;
    TrainConfig config;
};

io::json to_json(const ImportanceResult& r);
ImportanceResult importance_from_json(const io::json& j);

ImportanceResult permutation_importance(const MetricModel& model, const FeatureDistanceTensor& features,
                                        const PairwiseDistanceMatrix& neural, std::span<const std::size_t> test_indices,
                                        const ImportanceOptions& options = {});

struct CrossValidationPlan {
    std::size_t fold_count = 5;
    std::uint64_t seed = 0;
    std::vector<std::vector<std::size_t>> test;
    std::vector<std::vector<std::size_t>> train;

    /// Seeded partition of n stimuli into near-equal folds. Throws ValidationError if fold_count ∉ [2, n].
    static CrossValidationPlan make(std::size_t n, std::size_t fold_count, std::uint64_t seed);
};

struct CvOptions {
    std::size_t repeats = 10;
    bool with_interactions = false;
};

/// Fit, score and permutation importance for one fold; seeds derive from (config.seed, fold).
ImportanceResult run_fold(const FeatureDistanceTensor& features, const PairwiseDistanceMatrix& neural,
                          const CrossValidationPlan& plan, std::size_t fold, const TrainConfig& config,
                          const CvOptions& options = {});

/// One ImportanceResult per fold, in fold order. Folds run in parallel.
std::vector<ImportanceResult> run_cv(const FeatureDistanceTensor& features, const PairwiseDistanceMatrix& neural,
                                     const CrossValidationPlan& plan, const TrainConfig& config,
                                     const CvOptions& options = {});

}  // namespace mlem
