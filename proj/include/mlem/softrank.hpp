#pragma once

#include <span>
#include <vector>

namespace mlem {

struct SoftRankConfig {
    /// Regularization strength; larger values smooth more.
    double epsilon = 0.1;
};

/// Ascending ranks in [1, n]; tied values share their average rank.
std::vector<double> hard_rank(std::span<const double> values);

/// Euclidean projection of values/ε onto the permutahedron of (1..n), solved with
/// pool-adjacent-violators. Ascending: as ε → 0 the result tends to hard_rank.
std::vector<double> soft_rank(std::span<const double> values, const SoftRankConfig& config = {});

/// Jacobian-vector product of soft_rank at `values`. The Jacobian is symmetric, so
/// this is also the vector-Jacobian product used for backpropagation.
std::vector<double> soft_rank_jvp(std::span<const double> values, std::span<const double> tangent,
                                  const SoftRankConfig& config = {});

/// Throws UndefinedCorrelation when either input has zero variance or sizes differ.
double pearson(std::span<const double> x, std::span<const double> y);

/// Pearson correlation of the ranks of x and y (tie-averaged hard ranks, or soft ranks of both).
double spearman(std::span<const double> x, std::span<const double> y, bool soft = false,
                const SoftRankConfig& config = {});

struct SoftSpearman {
    double rho = 0.0;
    /// d rho / d prediction.
    std::vector<double> gradient;
};

/// Training objective: predictions are z-scored and soft-ranked, targets enter as fixed
/// hard ranks. Throws UndefinedCorrelation when predictions or target ranks are constant.
SoftSpearman soft_spearman(std::span<const double> predictions, std::span<const double> target_ranks,
                           const SoftRankConfig& config = {});

}  // namespace mlem
