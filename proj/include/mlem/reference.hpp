#pragma once

// Single-threaded reference versions of the OpenMP kernels. They favour the most direct
// formulation and exist to check the parallel paths and to benchmark against.

#include <optional>
#include <vector>

#include "mlem/compare.hpp"
#include "mlem/schema.hpp"

namespace mlem::reference {

PairwiseDistanceMatrix neural_distances(const RowMatrix& layer);

ModelDistanceMatrix dtw_matrix(const std::vector<ModelSignature>& signatures, std::optional<std::size_t> fold = std::nullopt);

LayerDistanceMatrix layer_distance_matrix(const std::vector<ModelSignature>& signatures);

RsaMatrix rsa_matrix(const std::vector<AlignedEmbeddings>& embeddings);

}  // namespace mlem::reference
