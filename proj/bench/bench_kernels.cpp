// Parallel kernels against their serial references.

#include <string>
#include <vector>

#include <benchmark/benchmark.h>

#include "mlem/compare.hpp"
#include "mlem/distances.hpp"
#include "mlem/reference.hpp"
#include "mlem/rng.hpp"
#include "mlem/schema.hpp"
#include "mlem/signatures.hpp"

namespace {

using namespace mlem;

RowMatrix random_rows(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    RowMatrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
    return m;
}

std::vector<ModelSignature> signatures(std::size_t models, std::size_t layers, std::size_t features) {
    Rng rng(1);
    std::vector<std::string> names;
    for (std::size_t k = 0; k < features; ++k) names.push_back("f" + std::to_string(k));
    std::vector<ModelSignature> out;
    for (std::size_t m = 0; m < models; ++m) {
        std::vector<ImportanceResult> rs;
        for (std::size_t f = 0; f < 5; ++f)
            for (std::size_t l = 0; l < layers + m % 7; ++l) {
                ImportanceResult r;
                r.model_id = "m" + std::to_string(m);
                r.layer = l;
                r.fold = f;
                r.features = names;
                r.score = 0.5;
                for (std::size_t k = 0; k < features; ++k) r.importance.push_back(rng.uniform());
                rs.push_back(r);
            }
        out.push_back(assemble("m" + std::to_string(m), rs));
    }
    return out;
}

std::vector<AlignedEmbeddings> embeddings(std::size_t models, std::size_t layers, Eigen::Index n, Eigen::Index d) {
    Rng rng(2);
    StimulusSet set;
    FeatureSpec spec;
    spec.name = "f0";
    spec.levels = {"a", "b"};
    set.schema = FeatureSchema({spec});
    for (Eigen::Index i = 0; i < n; ++i) {
        set.sentences.push_back("s" + std::to_string(i));
        set.annotations.push_back({CellValue(std::string(i % 2 ? "a" : "b"))});
    }
    std::vector<AlignedEmbeddings> out;
    for (std::size_t m = 0; m < models; ++m) {
        EmbeddingsContainer c;
        c.model_id = "m" + std::to_string(m);
        for (std::size_t l = 0; l < layers; ++l) c.layers.push_back(random_rows(rng, n, d));
        out.push_back(align(c, set));
    }
    return out;
}

void BM_neural_distances(benchmark::State& state) {
    Rng rng(3);
    const auto x = random_rows(rng, state.range(0), 256);
    for (auto _ : state) benchmark::DoNotOptimize(neural_distances(x));
}

void BM_neural_distances_reference(benchmark::State& state) {
    Rng rng(3);
    const auto x = random_rows(rng, state.range(0), 256);
    for (auto _ : state) benchmark::DoNotOptimize(reference::neural_distances(x));
}

void BM_dtw_matrix(benchmark::State& state) {
    const auto s = signatures(static_cast<std::size_t>(state.range(0)), 24, 12);
    for (auto _ : state) benchmark::DoNotOptimize(dtw_matrix(s));
}

void BM_dtw_matrix_reference(benchmark::State& state) {
    const auto s = signatures(static_cast<std::size_t>(state.range(0)), 24, 12);
    for (auto _ : state) benchmark::DoNotOptimize(reference::dtw_matrix(s));
}

void BM_layer_distance_matrix(benchmark::State& state) {
    const auto s = signatures(static_cast<std::size_t>(state.range(0)), 24, 12);
    for (auto _ : state) benchmark::DoNotOptimize(layer_distance_matrix(s));
}

void BM_layer_distance_matrix_reference(benchmark::State& state) {
    const auto s = signatures(static_cast<std::size_t>(state.range(0)), 24, 12);
    for (auto _ : state) benchmark::DoNotOptimize(reference::layer_distance_matrix(s));
}

void BM_rsa_matrix(benchmark::State& state) {
    const auto e = embeddings(4, static_cast<std::size_t>(state.range(0)), 200, 32);
    for (auto _ : state) benchmark::DoNotOptimize(rsa_matrix(e));
}

void BM_rsa_matrix_reference(benchmark::State& state) {
    const auto e = embeddings(4, static_cast<std::size_t>(state.range(0)), 200, 32);
    for (auto _ : state) benchmark::DoNotOptimize(reference::rsa_matrix(e));
}

}  // namespace

BENCHMARK(BM_neural_distances)->Arg(200)->Arg(800)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_neural_distances_reference)->Arg(200)->Arg(800)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_dtw_matrix)->Arg(16)->Arg(48)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_dtw_matrix_reference)->Arg(16)->Arg(48)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_layer_distance_matrix)->Arg(16)->Arg(48)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_layer_distance_matrix_reference)->Arg(16)->Arg(48)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_rsa_matrix)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_rsa_matrix_reference)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
