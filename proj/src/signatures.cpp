#include "mlem/signatures.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "mlem/hash.hpp"

namespace mlem {

std::string feature_fingerprint(const std::vector<std::string>& features) {
    std::uint64_t h = fnv1a64("mlem-features-v1");
    for (const auto& f : features) {
        h = fnv1a64(f, h);
        h = fnv1a64("\x1f", h);
    }
    return hex64(h);
}

ModelSignature assemble(const std::string& model_id, const std::vector<ImportanceResult>& results,
                        std::optional<ModelPropertiesRecord> properties, std::optional<std::size_t> expected_layers) {
    if (results.empty()) throw ValidationError("no importance results to assemble");
    std::map<std::size_t, std::vector<const ImportanceResult*>> by_layer;
    for (const auto& r : results) by_layer[r.layer].push_back(&r);
    const std::size_t layer_count = expected_layers ? *expected_layers : by_layer.rbegin()->first + 1;
    for (std::size_t l = 0; l < layer_count; ++l)
        if (!by_layer.count(l)) throw ValidationError("missing results for layer " + std::to_string(l));
    if (by_layer.rbegin()->first >= layer_count)
        throw ValidationError("result for layer " + std::to_string(by_layer.rbegin()->first) + " beyond layer count");

    ModelSignature sig;
    sig.model_id = model_id;
    sig.features = results.front().features;
    sig.schema_fingerprint = feature_fingerprint(sig.features);
    sig.properties = std::move(properties);
    const std::size_t m = sig.features.size();
    const std::size_t folds = by_layer.begin()->second.size();

    for (auto& [layer, rs] : by_layer) {
        if (rs.size() != folds)
            throw ValidationError("layer " + std::to_string(layer) + " has " + std::to_string(rs.size()) +
                                  " folds, expected " + std::to_string(folds));
        std::sort(rs.begin(), rs.end(), [](auto* a, auto* b) { return a->fold < b->fold; });
        LayerSignature ls;
        ls.model_id = model_id;
        ls.layer = layer;
        ls.relative_position = layer_count > 1 ? static_cast<double>(layer) / static_cast<double>(layer_count - 1) : 0.0;
        for (std::size_t f = 0; f < rs.size(); ++f) {
            if (rs[f]->fold != f) throw ValidationError("layer " + std::to_string(layer) + " folds are not 0..F-1");
            if (rs[f]->features != sig.features)
                throw ValidationError("layer " + std::to_string(layer) + " fold " + std::to_string(f) +
                                      " uses a different feature schema");
            ls.fold_importance.push_back(rs[f]->importance);
            ls.fold_scores.push_back(rs[f]->score);
        }
        ls.mean.assign(m, 0.0);
        ls.stddev.assign(m, 0.0);
        for (std::size_t k = 0; k < m; ++k) {
            double s = 0.0;
            for (const auto& v : ls.fold_importance) s += v[k];
            ls.mean[k] = s / static_cast<double>(folds);
            double ss = 0.0;
            for (const auto& v : ls.fold_importance) ss += (v[k] - ls.mean[k]) * (v[k] - ls.mean[k]);
            ls.stddev[k] = std::sqrt(ss / static_cast<double>(folds));
        }
        sig.layers.push_back(std::move(ls));
    }
    return sig;
}

Eigen::MatrixXd signature_matrix(const ModelSignature& sig, std::optional<std::size_t> fold) {
    const auto L = static_cast<Eigen::Index>(sig.layers.size());
    const auto m = static_cast<Eigen::Index>(sig.features.size());
    if (fold && *fold >= sig.fold_count())
        throw ValidationError("fold " + std::to_string(*fold) + " out of range (" + std::to_string(sig.fold_count()) +
                              " folds)");
    Eigen::MatrixXd out(L, m);
    for (Eigen::Index l = 0; l < L; ++l) {
        const auto& ls = sig.layers[static_cast<std::size_t>(l)];
        const auto& row = fold ? ls.fold_importance[*fold] : ls.mean;
        for (Eigen::Index k = 0; k < m; ++k) out(l, k) = row[static_cast<std::size_t>(k)];
    }
    return out;
}

namespace {

io::json properties_json(const ModelPropertiesRecord& p) {
    io::json j;
    j["model_id"] = p.model_id;
    j["family"] = p.family;
    j["architecture"] = to_string(p.architecture);
    j["parameter_count"] = p.parameter_count;
    j["release_date"] = format_iso_date(p.release_date);
    j["depth"] = p.depth;
    j["width"] = p.width;
    j["training_tokens"] = p.training_tokens;
    j["vocabulary_size"] = p.vocabulary_size;
    return j;
}

ModelPropertiesRecord properties_from_json(const io::json& j) {
    ModelPropertiesRecord p;
    p.model_id = j.at("model_id").get<std::string>();
    p.family = j.at("family").get<std::string>();
    p.architecture = parse_architecture(j.at("architecture").get<std::string>());
    p.parameter_count = j.at("parameter_count").get<std::uint64_t>();
    p.release_date = parse_iso_date(j.at("release_date").get<std::string>());
    p.depth = j.at("depth").get<std::uint64_t>();
    p.width = j.at("width").get<std::uint64_t>();
    p.training_tokens = j.at("training_tokens").get<std::uint64_t>();
    p.vocabulary_size = j.value("vocabulary_size", std::uint64_t{0});
    validate(p);
    return p;
}

}  // namespace

io::json to_json(const ModelSignature& sig) {
    io::json j;
    j["format"] = "mlem-signature";
    j["version"] = 1;
    j["model_id"] = sig.model_id;
    j["schema_fingerprint"] = sig.schema_fingerprint;
    j["features"] = sig.features;
    j["properties"] = sig.properties ? properties_json(*sig.properties) : io::json(nullptr);
    io::json layers = io::json::array();
    for (const auto& ls : sig.layers) {
        io::json jl;
        jl["layer"] = ls.layer;
        jl["relative_position"] = ls.relative_position;
        jl["fold_scores"] = ls.fold_scores;
        jl["fold_importance"] = ls.fold_importance;
        jl["mean"] = ls.mean;
        jl["std"] = ls.stddev;
        layers.push_back(std::move(jl));
    }
    j["layers"] = std::move(layers);
    j["provenance"] = sig.provenance;
    return j;
}

ModelSignature signature_from_json(const io::json& j) {
    ModelSignature sig;
    try {
        if (j.at("format").get<std::string>() != "mlem-signature") throw FormatError("not a signature file");
        sig.model_id = j.at("model_id").get<std::string>();
        sig.features = j.at("features").get<std::vector<std::string>>();
        sig.schema_fingerprint = j.at("schema_fingerprint").get<std::string>();
        if (sig.schema_fingerprint != feature_fingerprint(sig.features))
            throw FormatError("signature '" + sig.model_id + "' fingerprint does not match its feature list");
        if (!j.at("properties").is_null()) sig.properties = properties_from_json(j.at("properties"));
        std::size_t expect = 0;
        for (const auto& jl : j.at("layers")) {
            LayerSignature ls;
            ls.model_id = sig.model_id;
            ls.layer = jl.at("layer").get<std::size_t>();
            if (ls.layer != expect++) throw FormatError("signature layers must be contiguous from 0");
            ls.relative_position = jl.at("relative_position").get<double>();
            ls.fold_scores = jl.at("fold_scores").get<std::vector<double>>();
            ls.fold_importance = jl.at("fold_importance").get<std::vector<std::vector<double>>>();
            ls.mean = jl.at("mean").get<std::vector<double>>();
            ls.stddev = jl.at("std").get<std::vector<double>>();
            sig.layers.push_back(std::move(ls));
        }
        if (j.contains("provenance")) sig.provenance = j.at("provenance");
    } catch (const io::json::exception& e) {
        throw FormatError(std::string("malformed signature file: ") + e.what());
    }
    return sig;
}

void save_signature(const io::fs::path& path, const ModelSignature& sig) {
    io::write_file(path, to_json(sig).dump(1) + "\n");
}

ModelSignature load_signature(const io::fs::path& path) {
    try {
        return signature_from_json(io::json::parse(io::read_file(path)));
    } catch (const io::json::parse_error& e) {
        throw FormatError("cannot parse '" + path.string() + "': " + e.what());
    }
}

void require_shared_schema(const std::vector<ModelSignature>& sigs) {
    for (const auto& s : sigs)
        if (s.schema_fingerprint != sigs.front().schema_fingerprint)
            throw SchemaMismatch("signature '" + s.model_id + "' (schema " + s.schema_fingerprint +
                                 ") does not share the feature schema of '" + sigs.front().model_id + "' (" +
                                 sigs.front().schema_fingerprint + ")");
}

}  // namespace mlem
