#include "mlem/reference.hpp"

#include <cmath>

#include "mlem/error.hpp"
#include "mlem/softrank.hpp"

namespace mlem::reference {

PairwiseDistanceMatrix neural_distances(const RowMatrix& layer) {
    const auto n = static_cast<std::size_t>(layer.rows());
    std::vector<double> out;
    out.reserve(pair_count(n));
    for (Eigen::Index i = 0; i < layer.rows(); ++i) {
        for (Eigen::Index c = 0; c < layer.cols(); ++c)
            if (!std::isfinite(layer(i, c))) throw ValidationError("non-finite value in embedding row " + std::to_string(i));
        for (Eigen::Index j = i + 1; j < layer.rows(); ++j) {
            double acc = 0.0;
            for (Eigen::Index c = 0; c < layer.cols(); ++c) acc += (layer(i, c) - layer(j, c)) * (layer(i, c) - layer(j, c));
            out.push_back(std::sqrt(acc));
        }
    }
    return PairwiseDistanceMatrix(n, std::move(out));
}

ModelDistanceMatrix dtw_matrix(const std::vector<ModelSignature>& signatures, std::optional<std::size_t> fold) {
    require_shared_schema(signatures);
    ModelDistanceMatrix out;
    out.fold = fold;
    const auto n = static_cast<Eigen::Index>(signatures.size());
    out.distances = Eigen::MatrixXd::Zero(n, n);
    for (const auto& s : signatures) out.model_ids.push_back(s.model_id);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j)
            out.distances(i, j) = out.distances(j, i) =
                dtw_distance(signature_matrix(signatures[static_cast<std::size_t>(i)], fold),
                             signature_matrix(signatures[static_cast<std::size_t>(j)], fold));
    return out;
}

LayerDistanceMatrix layer_distance_matrix(const std::vector<ModelSignature>& signatures) {
    require_shared_schema(signatures);
    LayerDistanceMatrix out;
    std::vector<Eigen::VectorXd> rows;
    for (const auto& s : signatures)
        for (const auto& l : s.layers) {
            out.layers.push_back({s.model_id, l.layer, l.relative_position, s.properties ? s.properties->family : s.model_id});
            rows.push_back(Eigen::Map<const Eigen::VectorXd>(l.mean.data(), static_cast<Eigen::Index>(l.mean.size())));
        }
    const auto n = static_cast<Eigen::Index>(rows.size());
    out.distances = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            out.distances(i, j) = (rows[static_cast<std::size_t>(i)] - rows[static_cast<std::size_t>(j)]).norm();
    return out;
}

RsaMatrix rsa_matrix(const std::vector<AlignedEmbeddings>& embeddings) {
    RsaMatrix out;
    std::vector<PairwiseDistanceMatrix> d;
    for (const auto& e : embeddings)
        for (std::size_t l = 0; l < e.layer_count(); ++l) {
            out.labels.push_back(e.container().model_id + ":" + std::to_string(l));
            d.push_back(neural_distances(e.layer(l)));
        }
    out.values.assign(d.size(), std::vector<std::optional<double>>(d.size()));
    for (std::size_t i = 0; i < d.size(); ++i)
        for (std::size_t j = 0; j < d.size(); ++j) {
            try {
                out.values[i][j] = spearman(d[i].condensed(), d[j].condensed());
            } catch (const UndefinedCorrelation&) {
            }
        }
    return out;
}

}  // namespace mlem::reference
