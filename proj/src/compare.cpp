#include "mlem/compare.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <set>
#include <tuple>

#include "mlem/distances.hpp"
#include "mlem/rng.hpp"
#include "mlem/softrank.hpp"

namespace mlem {

DtwResult dtw(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    if (a.cols() != b.cols())
        throw ValidationError("DTW inputs differ in feature count (" + std::to_string(a.cols()) + " vs " +
                              std::to_string(b.cols()) + ")");
    if (a.rows() < 1 || b.rows() < 1) throw ValidationError("DTW needs at least one row per sequence");
    const Eigen::Index na = a.rows(), nb = b.rows();
    Eigen::MatrixXd cost(na, nb);
    for (Eigen::Index i = 0; i < na; ++i)
        for (Eigen::Index j = 0; j < nb; ++j) cost(i, j) = (a.row(i) - b.row(j)).norm();

    constexpr double inf = std::numeric_limits<double>::infinity();
    Eigen::MatrixXd g = Eigen::MatrixXd::Constant(na, nb, inf);
    g(0, 0) = 2.0 * cost(0, 0);
    for (Eigen::Index i = 0; i < na; ++i)
        for (Eigen::Index j = 0; j < nb; ++j) {
            if (i == 0 && j == 0) continue;
            double best = inf;
            if (i > 0 && j > 0) best = std::min(best, g(i - 1, j - 1) + 2.0 * cost(i, j));
            if (i > 0) best = std::min(best, g(i - 1, j) + cost(i, j));
            if (j > 0) best = std::min(best, g(i, j - 1) + cost(i, j));
            g(i, j) = best;
        }

    DtwResult r;
    r.distance = g(na - 1, nb - 1);
    r.normalized = r.distance / static_cast<double>(na + nb);
    // Backtrack, preferring the diagonal on ties.
    Eigen::Index i = na - 1, j = nb - 1;
    r.path.emplace_back(i, j);
    while (i > 0 || j > 0) {
        const double here = g(i, j);
        if (i > 0 && j > 0 && g(i - 1, j - 1) + 2.0 * cost(i, j) == here) {
            --i;
            --j;
        } else if (i > 0 && g(i - 1, j) + cost(i, j) == here) {
            --i;
        } else {
            --j;
        }
        r.path.emplace_back(i, j);
    }
    std::reverse(r.path.begin(), r.path.end());
    return r;
}

double dtw_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) { return dtw(a, b).normalized; }

ModelDistanceMatrix dtw_matrix(const std::vector<ModelSignature>& signatures, std::optional<std::size_t> fold) {
    require_shared_schema(signatures);
    const std::size_t n = signatures.size();
    std::vector<Eigen::MatrixXd> mats;
    mats.reserve(n);
    for (const auto& s : signatures) mats.push_back(signature_matrix(s, fold));
    ModelDistanceMatrix out;
    out.fold = fold;
    for (const auto& s : signatures) out.model_ids.push_back(s.model_id);
    out.distances = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    const std::size_t P = pair_count(n);
#pragma omp parallel for schedule(dynamic, 4)
    for (std::ptrdiff_t pp = 0; pp < static_cast<std::ptrdiff_t>(P); ++pp) {
        // Invert the condensed index.
        std::size_t p = static_cast<std::size_t>(pp), i = 0;
        while (p >= n - 1 - i) {
            p -= n - 1 - i;
            ++i;
        }
        const std::size_t j = i + 1 + p;
        const double d = dtw_distance(mats[i], mats[j]);
        out.distances(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = d;
        out.distances(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = d;
    }
    return out;
}

namespace {

std::vector<LayerRef> layer_refs(const std::vector<ModelSignature>& signatures) {
    std::vector<LayerRef> refs;
    for (const auto& s : signatures)
        for (const auto& l : s.layers)
            refs.push_back({s.model_id, l.layer, l.relative_position, s.properties ? s.properties->family : s.model_id});
    return refs;
}

}  // namespace

LayerDistanceMatrix layer_distance_matrix(const std::vector<ModelSignature>& signatures) {
    require_shared_schema(signatures);
    LayerDistanceMatrix out;
    out.layers = layer_refs(signatures);
    std::vector<const std::vector<double>*> rows;
    for (const auto& s : signatures)
        for (const auto& l : s.layers) rows.push_back(&l.mean);
    const auto n = static_cast<std::ptrdiff_t>(rows.size());
    out.distances = Eigen::MatrixXd::Zero(n, n);
#pragma omp parallel for schedule(dynamic, 8)
    for (std::ptrdiff_t i = 0; i < n; ++i)
        for (std::ptrdiff_t j = i + 1; j < n; ++j) {
            const auto& a = *rows[static_cast<std::size_t>(i)];
            const auto& b = *rows[static_cast<std::size_t>(j)];
            double s = 0.0;
            for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
            out.distances(i, j) = out.distances(j, i) = std::sqrt(s);
        }
    return out;
}

std::size_t depth_eighth(double relative_position) {
    const double bin = std::floor(relative_position * 8.0);
    return static_cast<std::size_t>(std::clamp(bin, 0.0, 7.0));
}

NearFar nearest_and_farthest(const LayerRef& reference, const std::vector<LayerCandidate>& candidates) {
    const std::size_t bin = depth_eighth(reference.relative_position);
    std::vector<const LayerCandidate*> kept;
    for (const auto& c : candidates)
        if (c.ref.family != reference.family && depth_eighth(c.ref.relative_position) == bin) kept.push_back(&c);
    if (kept.empty())
        throw ValidationError("no candidate layer of another family in depth eighth " + std::to_string(bin) + " of " +
                              reference.label());
    const auto key = [](const LayerCandidate* c) { return std::tie(c->ref.model_id, c->ref.layer); };
    const LayerCandidate* lo = kept.front();
    const LayerCandidate* hi = kept.front();
    for (const auto* c : kept) {
        if (c->distance < lo->distance || (c->distance == lo->distance && key(c) < key(lo))) lo = c;
        if (c->distance > hi->distance || (c->distance == hi->distance && key(c) < key(hi))) hi = c;
    }
    return {*lo, *hi};
}

NearFar nearest_and_farthest(const LayerDistanceMatrix& matrix, std::size_t reference) {
    if (reference >= matrix.layers.size()) throw ValidationError("reference layer index out of range");
    std::vector<LayerCandidate> cands;
    for (std::size_t c = 0; c < matrix.layers.size(); ++c)
        if (c != reference)
            cands.push_back({matrix.layers[c], matrix.distances(static_cast<Eigen::Index>(reference), static_cast<Eigen::Index>(c))});
    return nearest_and_farthest(matrix.layers[reference], cands);
}

RsaMatrix rsa_matrix(const std::vector<AlignedEmbeddings>& embeddings) {
    RsaMatrix out;
    if (embeddings.empty()) return out;
    const std::size_t n = embeddings.front().stimuli().size();
    for (const auto& e : embeddings)
        if (e.stimuli().size() != n) throw AlignmentError("RSA containers are aligned to different stimulus sets", n, e.stimuli().size());

    // Hard ranks of every layer's condensed distances; nullopt for constant layers.
    std::vector<std::optional<std::vector<double>>> ranks;
    for (const auto& e : embeddings)
        for (std::size_t l = 0; l < e.layer_count(); ++l) {
            out.labels.push_back(e.container().model_id + ":" + std::to_string(l));
            const auto d = neural_distances(e.layer(l));
            const auto c = d.condensed();
            const bool constant = std::all_of(c.begin(), c.end(), [&](double v) { return v == c.front(); });
            if (constant)
                ranks.emplace_back(std::nullopt);
            else
                ranks.emplace_back(hard_rank(c));
        }
    const std::size_t L = ranks.size();
    out.values.assign(L, std::vector<std::optional<double>>(L));
    const std::size_t P = pair_count(L) + L;
#pragma omp parallel for schedule(dynamic, 4)
    for (std::ptrdiff_t pp = 0; pp < static_cast<std::ptrdiff_t>(P); ++pp) {
        // Upper triangle including the diagonal.
        std::size_t p = static_cast<std::size_t>(pp), i = 0;
        while (p >= L - i) {
            p -= L - i;
            ++i;
        }
        const std::size_t j = i + p;
        if (!ranks[i] || !ranks[j]) continue;
        const double v = i == j ? 1.0 : pearson(*ranks[i], *ranks[j]);
        out.values[i][j] = out.values[j][i] = v;
    }
    return out;
}

std::vector<std::string> meta_predictor_names() {
    return {"Family", "Architecture", "Parameter count (log10)", "Release date", "Depth (log10)", "Depth-to-width ratio",
            "Training tokens (log10)"};
}

FeatureDistanceTensor meta_predictor_distances(const std::vector<ModelPropertiesRecord>& models) {
    std::set<std::string> families;
    for (const auto& m : models) {
        validate(m);
        families.insert(m.family);
    }
    std::vector<std::string> family_levels(families.begin(), families.end());
    if (family_levels.size() < 2) family_levels.push_back(family_levels.front() + "\x1f" "other");
    const auto names = meta_predictor_names();
    StimulusSet set;
    set.schema = FeatureSchema({
        {names[0], FeatureKind::categorical, family_levels, std::nullopt},
        {names[1], FeatureKind::categorical, {"Transformer", "SSM", "RNN"}, std::nullopt},
        {names[2], FeatureKind::ordinal, {}, std::nullopt},
        {names[3], FeatureKind::ordinal, {}, std::nullopt},
        {names[4], FeatureKind::ordinal, {}, std::nullopt},
        {names[5], FeatureKind::ordinal, {}, std::nullopt},
        {names[6], FeatureKind::ordinal, {}, std::nullopt},
    });
    for (const auto& m : models) {
        set.sentences.push_back(m.model_id);
        set.annotations.push_back({
            m.family,
            to_string(m.architecture),
            std::log10(static_cast<double>(m.parameter_count)),
            static_cast<double>(m.release_days()),
            std::log10(static_cast<double>(m.depth)),
            m.depth_to_width(),
            std::log10(static_cast<double>(m.training_tokens)),
        });
    }
    return feature_distances(set);
}

MetaResult meta_mlem(const std::vector<ModelDistanceMatrix>& per_fold, const std::vector<ModelPropertiesRecord>& table,
                     const TrainConfig& config, std::size_t repeats) {
    if (per_fold.empty()) throw ValidationError("meta-MLEM needs at least one DTW matrix");
    const auto& ids = per_fold.front().model_ids;
    if (ids.size() < 3) throw ValidationError("meta-MLEM needs at least 3 models");
    std::vector<ModelPropertiesRecord> ordered;
    for (const auto& id : ids) {
        auto it = std::find_if(table.begin(), table.end(), [&](const auto& r) { return r.model_id == id; });
        if (it == table.end()) throw ValidationError("model '" + id + "' missing from the properties table");
        ordered.push_back(*it);
    }
    const auto features = meta_predictor_distances(ordered);
    const std::size_t n = ids.size();
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});

    TrainConfig cfg = config;
    cfg.batch_pairs = std::min(cfg.batch_pairs, pair_count(n));
    cfg.max_pairs_per_fold = std::max(cfg.max_pairs_per_fold, cfg.batch_pairs);

    MetaResult out;
    out.features = features.names;
    for (std::size_t f = 0; f < per_fold.size(); ++f) {
        const auto& m = per_fold[f];
        if (m.model_ids != ids) throw ValidationError("DTW matrices list models in different orders");
        std::vector<double> condensed;
        condensed.reserve(pair_count(n));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                condensed.push_back(m.distances(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
        const PairwiseDistanceMatrix target(n, std::move(condensed));
        TrainConfig fold_cfg = cfg;
        fold_cfg.seed = derive_seed(config.seed, f, 1);
        try {
            const auto model = fit(features, target, all, fold_cfg);
            ImportanceOptions opts;
            opts.repeats = repeats;
            opts.seed = derive_seed(config.seed, f, 2);
            opts.allow_training_overlap = true;
            auto r = permutation_importance(model, features, target, all, opts);
            r.fold = f;
            r.model_id = "meta";
            r.config = config;
            out.folds.push_back(std::move(r));
        } catch (const FitError& e) {
            out.degenerate = true;
            out.message = "fold " + std::to_string(f) + ": " + e.what();
        } catch (const UndefinedCorrelation& e) {
            out.degenerate = true;
            out.message = "fold " + std::to_string(f) + ": " + e.what();
        }
    }
    const std::size_t m = features.features();
    out.mean.assign(m, 0.0);
    out.stddev.assign(m, 0.0);
    if (!out.folds.empty()) {
        const double F = static_cast<double>(out.folds.size());
        for (std::size_t k = 0; k < m; ++k) {
            for (const auto& r : out.folds) out.mean[k] += r.importance[k] / F;
            for (const auto& r : out.folds) out.stddev[k] += (r.importance[k] - out.mean[k]) * (r.importance[k] - out.mean[k]) / F;
            out.stddev[k] = std::sqrt(out.stddev[k]);
        }
    }
    return out;
}

}  // namespace mlem
