#include "mlem/distances.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>

#include "mlem/error.hpp"

namespace mlem {

PairwiseDistanceMatrix neural_distances(const RowMatrix& layer) {
    const auto n = static_cast<std::size_t>(layer.rows());
    for (Eigen::Index i = 0; i < layer.rows(); ++i)
        if (!layer.row(i).allFinite())
            throw ValidationError("non-finite value in embedding row " + std::to_string(i));
    std::vector<double> out(pair_count(n));
    const Eigen::Index d = layer.cols();
    const double* data = layer.data();
#pragma omp parallel for schedule(dynamic, 16)
    for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        const double* xi = data + i * static_cast<std::size_t>(d);
        std::size_t p = pair_index(n, i, i + 1);
        for (std::size_t j = i + 1; j < n; ++j, ++p) {
            const double* xj = data + j * static_cast<std::size_t>(d);
            double acc = 0.0;
            for (Eigen::Index c = 0; c < d; ++c) {
                const double diff = xi[c] - xj[c];
                acc += diff * diff;
            }
            out[p] = std::sqrt(acc);
        }
    }
    return PairwiseDistanceMatrix(n, std::move(out));
}

FeatureDistanceTensor raw_feature_distances(const StimulusSet& set) {
    require_valid(set);
    const std::size_t n = set.size();
    const std::size_t m = set.schema.size();
    FeatureDistanceTensor t;
    t.names = set.schema.names();
    for (std::size_t k = 0; k < m; ++k) {
        const auto& spec = set.schema[k];
        t.kinds.push_back(spec.kind);
        std::vector<double> v(pair_count(n));
        std::size_t p = 0;
        if (spec.kind == FeatureKind::categorical) {
            // Compare interned level indices rather than strings.
            std::vector<std::size_t> code(n);
            for (std::size_t i = 0; i < n; ++i) {
                const auto& s = std::get<std::string>(set.annotations[i][k]);
                code[i] = static_cast<std::size_t>(std::find(spec.levels.begin(), spec.levels.end(), s) - spec.levels.begin());
            }
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = i + 1; j < n; ++j) v[p++] = code[i] == code[j] ? 0.0 : 1.0;
        } else {
            for (std::size_t i = 0; i < n; ++i) {
                const double a = std::get<double>(set.annotations[i][k]);
                for (std::size_t j = i + 1; j < n; ++j) v[p++] = std::abs(a - std::get<double>(set.annotations[j][k]));
            }
        }
        t.matrices.emplace_back(n, std::move(v));
        t.scale.push_back(1.0);
        t.constant.push_back(false);
    }
    return t;
}

FeatureDistanceTensor normalize(FeatureDistanceTensor t) {
    for (std::size_t k = 0; k < t.matrices.size(); ++k) {
        const auto c = t.matrices[k].condensed();
        const double mx = c.empty() ? 0.0 : *std::max_element(c.begin(), c.end());
        if (mx <= 0.0) {
            t.constant[k] = true;
            continue;
        }
        t.constant[k] = false;
        if (mx == 1.0) continue;
        std::vector<double> v(c.begin(), c.end());
        for (auto& x : v) x /= mx;
        t.matrices[k] = PairwiseDistanceMatrix(t.matrices[k].size(), std::move(v));
        t.scale[k] *= mx;
    }
    return t;
}

FeatureDistanceTensor feature_distances(const StimulusSet& set) { return normalize(raw_feature_distances(set)); }

double predicted_distance(const Eigen::MatrixXd& W, const Eigen::VectorXd& dF) {
    if (W.rows() != W.cols() || W.rows() != dF.size())
        throw ValidationError("metric and feature-distance dimensions disagree");
    if (!W.isApprox(W.transpose(), 1e-12) || W.llt().info() != Eigen::Success)
        throw ValidationError("metric matrix is not symmetric positive definite");
    const double q = dF.dot(W * dF);
    return std::sqrt(std::max(q, 0.0));
}

}  // namespace mlem
