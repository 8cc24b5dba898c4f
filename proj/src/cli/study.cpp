#include "study.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <map>
#include <set>

#include "mlem/compare.hpp"
#include "mlem/distances.hpp"
#include "mlem/error.hpp"
#include "mlem/hash.hpp"
#include "mlem/project.hpp"
#include "mlem/rng.hpp"
#include "mlem/signatures.hpp"

namespace mlem::cli {

using io::json;

namespace {

constexpr const char* kSignatureSuffix = ".signature.json";
constexpr const char* kContainerSuffix = ".mlem";

fs::path tsv_path(const StudyConfig& c) {
    return c.dataset_tsv.empty() ? c.output / "dataset" / "stimuli.tsv" : c.resolve(c.dataset_tsv);
}

fs::path schema_path(const StudyConfig& c) {
    return c.dataset_schema.empty() ? c.output / "dataset" / "schema.json" : c.resolve(c.dataset_schema);
}

fs::path embeddings_path(const StudyConfig& c) {
    return c.embeddings_dir.empty() ? c.output / "embeddings" : c.resolve(c.embeddings_dir);
}

void require_exists(const fs::path& p, const std::string& what) {
    if (!fs::exists(p)) throw IoError(what + " not found: " + p.string());
}

void require_model_id(const std::string& id) {
    if (id.empty() || id.find_first_of("/\\") != std::string::npos || id == "." || id == "..")
        throw ValidationError("invalid model id '" + id + "'");
}

std::string hash_of(const json& j) { return hex64(fnv1a64(j.dump())).substr(0, 12); }

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json provenance(const StudyConfig& c) { return json{{"seed", c.seed}, {"config", snapshot(c)}}; }

void write_sidecar(const fs::path& data_file, json extra, const StudyConfig& c, Outputs& out) {
    json j = provenance(c);
    j["file"] = data_file.filename().string();
    for (const auto& item : extra.items()) j[item.key()] = item.value();
    fs::path side = data_file;
    side.replace_extension(".meta.json");
    io::write_file(side, dump(j));
    out.written.push_back(side);
}

StimulusSet load_dataset(const StudyConfig& c) {
    const auto tsv = tsv_path(c), schema = schema_path(c);
    require_exists(tsv, "dataset");
    require_exists(schema, "dataset schema");
    return io::read_stimulus_set(tsv, schema);
}

std::vector<ModelSignature> load_signatures(const fs::path& dir, const std::vector<std::string>& ids) {
    std::vector<fs::path> files;
    if (!ids.empty()) {
        std::vector<std::string> missing;
        for (const auto& id : ids) {
            auto p = dir / (id + kSignatureSuffix);
            if (fs::exists(p)) files.push_back(p);
            else missing.push_back(id);
        }
        if (!missing.empty()) {
            std::string msg = "missing signatures in " + dir.string() + ":";
            for (const auto& m : missing) msg += " " + m;
            throw IoError(msg);
        }
    } else if (fs::exists(dir)) {
        for (const auto& e : fs::directory_iterator(dir)) {
            const auto name = e.path().filename().string();
            if (name.size() > std::string(kSignatureSuffix).size() && name.ends_with(kSignatureSuffix))
                files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
    }
    if (files.empty()) throw IoError("no signatures found in " + dir.string() + "; run `fit` first");
    std::vector<ModelSignature> sigs;
    for (const auto& f : files) sigs.push_back(load_signature(f));
    return sigs;
}

std::vector<std::string> ids_of(const std::vector<ModelSignature>& sigs) {
    std::vector<std::string> ids;
    for (const auto& s : sigs) ids.push_back(s.model_id);
    return ids;
}

std::vector<ModelPropertiesRecord> load_properties(const StudyConfig& c) {
    if (!c.properties) return {};
    const auto p = c.resolve(*c.properties);
    require_exists(p, "model properties table");
    return io::read_properties(p);
}

std::optional<ModelPropertiesRecord> find_properties(const std::vector<ModelPropertiesRecord>& table, const std::string& id) {
    for (const auto& r : table)
        if (r.model_id == id) return r;
    return std::nullopt;
}

json train_json(const TrainConfig& t) {
    json j = to_json(t);
    j.erase("seed");
    return j;
}

TrainConfig merged_train(const json& j, TrainConfig base) {
    json merged = to_json(base);
    for (auto& [k, v] : j.items()) merged[k] = v;
    return train_config_from_json(merged);
}

fs::path compare_dir(const StudyConfig& c, const std::string& fingerprint) { return fit_dir(c, fingerprint) / "compare"; }

fs::path rsa_dir(const StudyConfig& c, const std::string& fingerprint) {
    const json key{{"dataset", fingerprint}, {"exclude_embedding_layer", c.exclude_embedding_layer}};
    return c.output / ("rsa-" + hash_of(key));
}

/// Drops layer 0 when the embedding output is excluded.
EmbeddingsContainer trimmed(EmbeddingsContainer container, bool exclude_embedding_layer) {
    if (!exclude_embedding_layer) return container;
    if (container.layers.size() < 2)
        throw ValidationError("model '" + container.model_id + "' has no layers left after excluding the embedding layer");
    container.layers.erase(container.layers.begin());
    return container;
}

EmbeddingsContainer load_container(const StudyConfig& c, const std::string& id, const std::string& fingerprint) {
    const auto p = embeddings_path(c) / (id + kContainerSuffix);
    require_exists(p, "embeddings container");
    auto container = io::read_container(p);
    if (container.model_id != id)
        throw ValidationError("container " + p.string() + " holds model '" + container.model_id + "', expected '" + id + "'");
    if (!container.dataset_fingerprint.empty() && container.dataset_fingerprint != fingerprint)
        throw ValidationError("container " + p.string() + " was extracted from a different dataset (fingerprint " +
                              container.dataset_fingerprint + ", dataset " + fingerprint + ")");
    return trimmed(std::move(container), c.exclude_embedding_layer);
}

std::string format_row(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + io::format_double(v[i]);
    return s;
}

}  // namespace

StudyConfig default_config() {
    StudyConfig c;
    c.base = fs::path(".");
    c.embeddings_dir.clear();
    c.enumeration = grammar::Enumeration::sample;
    c.sample_per_cell = 50;
    c.meta_train.epochs = 300;
    c.meta_train.batch_pairs = 64;
    return c;
}

StudyConfig load_config(const fs::path& path) {
    require_exists(path, "config file");
    json j;
    try {
        j = json::parse(io::read_file(path));
    } catch (const json::exception& e) {
        throw ValidationError("config " + path.string() + ": " + e.what());
    }
    if (!j.is_object()) throw ValidationError("config " + path.string() + ": expected a JSON object");

    StudyConfig c = default_config();
    c.base = path.parent_path().empty() ? fs::path(".") : path.parent_path();
    c.raw = j;
    try {
        c.seed = j.value("seed", c.seed);
        if (j.contains("output")) c.output = c.resolve(j["output"].get<std::string>());
        if (auto g = j.find("generate"); g != j.end()) {
            if (g->contains("lexicon") && !(*g)["lexicon"].is_null()) c.lexicon = (*g)["lexicon"].get<std::string>();
            const auto e = g->value("enumeration", std::string(c.enumeration == grammar::Enumeration::full ? "full" : "sample"));
            if (e == "full") c.enumeration = grammar::Enumeration::full;
            else if (e == "sample") c.enumeration = grammar::Enumeration::sample;
            else throw ValidationError("generate.enumeration must be 'full' or 'sample'");
            c.sample_per_cell = g->value("sample_per_cell", c.sample_per_cell);
        }
        if (auto d = j.find("dataset"); d != j.end()) {
            c.dataset_tsv = d->value("tsv", std::string());
            c.dataset_schema = d->value("schema", std::string());
        }
        if (j.contains("embeddings")) c.embeddings_dir = j["embeddings"].get<std::string>();
        if (j.contains("properties") && !j["properties"].is_null()) c.properties = j["properties"].get<std::string>();
        if (auto f = j.find("fit"); f != j.end()) {
            c.folds = f->value("folds", c.folds);
            c.repeats = f->value("repeats", c.repeats);
            c.interactions = f->value("interactions", c.interactions);
            c.exclude_embedding_layer = f->value("exclude_embedding_layer", c.exclude_embedding_layer);
            if (f->contains("train")) c.train = merged_train((*f)["train"], c.train);
        }
        if (auto m = j.find("meta"); m != j.end()) {
            c.meta_repeats = m->value("repeats", c.meta_repeats);
            if (m->contains("train")) c.meta_train = merged_train((*m)["train"], c.meta_train);
        }
        if (auto p = j.find("project"); p != j.end()) {
            c.k = p->value("k", c.k);
            if (p->contains("sigma")) {
                if ((*p)["sigma"].is_null()) c.sigma.reset();
                else c.sigma = (*p)["sigma"].get<double>();
            }
        }
    } catch (const json::exception& e) {
        throw ValidationError("config " + path.string() + ": " + e.what());
    }
    validate(c.train);
    validate(c.meta_train);
    return c;
}

json snapshot(const StudyConfig& c) {
    json g{{"enumeration", c.enumeration == grammar::Enumeration::full ? "full" : "sample"},
           {"sample_per_cell", c.sample_per_cell}};
    if (c.lexicon) g["lexicon_fingerprint"] = hex64(fnv1a64(io::read_file(c.resolve(*c.lexicon))));
    return json{{"seed", c.seed},
                {"generate", g},
                {"fit",
                 {{"folds", c.folds},
                  {"repeats", c.repeats},
                  {"interactions", c.interactions},
                  {"exclude_embedding_layer", c.exclude_embedding_layer},
                  {"train", train_json(c.train)}}},
                {"meta", {{"repeats", c.meta_repeats}, {"train", train_json(c.meta_train)}}},
                {"project", {{"k", c.k}, {"sigma", c.sigma ? json(*c.sigma) : json(nullptr)}}}};
}

fs::path fit_dir(const StudyConfig& c, const std::string& dataset_fingerprint) {
    const json s = snapshot(c);
    const json key{{"dataset", dataset_fingerprint}, {"seed", c.seed}, {"fit", s["fit"]}};
    return c.output / ("fit-" + hash_of(key));
}

Outputs cmd_generate(const StudyConfig& c, std::ostream& log) {
    grammar::Lexicon lex = grammar::default_lexicon();
    if (c.lexicon) {
        const auto p = c.resolve(*c.lexicon);
        require_exists(p, "lexicon file");
        json j;
        try {
            j = json::parse(io::read_file(p));
        } catch (const json::exception& e) {
            throw ValidationError("lexicon " + p.string() + ": " + e.what());
        }
        lex = grammar::lexicon_from_json(j);
    }
    grammar::GenerationConfig gc;
    gc.enumeration = c.enumeration;
    gc.sample_per_cell = c.sample_per_cell;
    gc.seed = c.seed;
    const StimulusSet set = grammar::generate(lex, gc);
    require_valid(set);

    Outputs out;
    const auto tsv = tsv_path(c), schema = schema_path(c);
    io::write_stimulus_set(tsv, schema, set);
    out.written.push_back(tsv);
    out.written.push_back(schema);

    const auto balance = grammar::balance_report(set);
    const fs::path balance_csv = tsv.parent_path() / "balance.csv";
    io::write_file(balance_csv, io::matrix_csv(balance.features, balance.correlation));
    out.written.push_back(balance_csv);

    std::map<std::string, std::size_t> cells;
    const auto rc = *set.schema.index_of("Relative Clause type");
    const auto site = *set.schema.index_of("Attachment site");
    for (const auto& row : set.annotations)
        ++cells[std::get<std::string>(row[site]) + "/" + std::get<std::string>(row[rc])];
    json cell_json = json::object();
    for (const auto& [k, v] : cells) cell_json[k] = v;

    const auto fingerprint = io::dataset_fingerprint(set);
    write_sidecar(tsv,
                  json{{"sentences", set.size()},
                       {"dataset_fingerprint", fingerprint},
                       {"cells", cell_json},
                       {"balance_max_off_diagonal", balance.max_off_diagonal()}},
                  c, out);
    log << "generated " << set.size() << " sentences (dataset " << fingerprint << "), balance max |r| = "
        << io::format_double(balance.max_off_diagonal()) << "\n";
    return out;
}

Outputs cmd_fit(const StudyConfig& c, const std::vector<std::string>& model_ids, std::ostream& log) {
    if (model_ids.empty()) throw ValidationError("fit requires at least one --model");
    for (const auto& id : model_ids) require_model_id(id);
    const StimulusSet set = load_dataset(c);
    require_exists(embeddings_path(c), "embeddings directory");
    const auto fingerprint = io::dataset_fingerprint(set);
    const auto features = feature_distances(set);
    const auto plan = CrossValidationPlan::make(set.size(), c.folds, c.seed);
    const auto table = load_properties(c);
    const auto dir = fit_dir(c, fingerprint);

    Outputs out;
    for (const auto& id : model_ids) {
        const auto container = load_container(c, id, fingerprint);
        const auto aligned = align(container, set);
        const std::size_t layers = aligned.layer_count();

        std::vector<PairwiseDistanceMatrix> neural;
        neural.reserve(layers);
        for (std::size_t l = 0; l < layers; ++l) neural.push_back(neural_distances(aligned.layer(l)));

        const std::size_t jobs = layers * plan.fold_count;
        std::vector<ImportanceResult> results(jobs);
        std::vector<std::exception_ptr> errors(jobs);
        CvOptions cv;
        cv.repeats = c.repeats;
        cv.with_interactions = c.interactions;
#pragma omp parallel for schedule(dynamic, 1)
        for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(jobs); ++j) {
            const std::size_t l = static_cast<std::size_t>(j) / plan.fold_count;
            const std::size_t f = static_cast<std::size_t>(j) % plan.fold_count;
            try {
                TrainConfig t = c.train;
                t.seed = derive_seed(c.seed, fnv1a64(id), l);
                auto r = run_fold(features, neural[l], plan, f, t, cv);
                r.model_id = id;
                r.layer = l;
                results[static_cast<std::size_t>(j)] = std::move(r);
            } catch (...) {
                errors[static_cast<std::size_t>(j)] = std::current_exception();
            }
        }
        for (std::size_t j = 0; j < jobs; ++j) {
            if (errors[j]) {
                log << "model " << id << " layer " << j / plan.fold_count << " fold " << j % plan.fold_count
                    << " failed\n";
                std::rethrow_exception(errors[j]);
            }
        }
        for (const auto& r : results)
            log << "model " << id << " layer " << r.layer << " fold " << r.fold << " score "
                << io::format_double(r.score) << "\n";

        ModelSignature sig = assemble(id, results, find_properties(table, id), layers);
        sig.provenance = provenance(c);
        sig.provenance["dataset_fingerprint"] = fingerprint;
        sig.provenance["container_layers"] = container.layer_count() + (c.exclude_embedding_layer ? 1 : 0);
        sig.provenance["first_layer"] = c.exclude_embedding_layer ? 1 : 0;
        const auto path = dir / (id + kSignatureSuffix);
        save_signature(path, sig);
        out.written.push_back(path);
        log << "wrote " << path.string() << "\n";
    }
    return out;
}

namespace {

Outputs compare_models_dtw(const StudyConfig& c, const std::vector<ModelSignature>& sigs, const fs::path& dir,
                           std::ostream& log) {
    Outputs out;
    const auto mean = dtw_matrix(sigs);
    const auto path = dir / "dtw.csv";
    io::write_file(path, io::matrix_csv(mean.model_ids, mean.distances));
    out.written.push_back(path);
    json folds = json::array();
    for (std::size_t f = 0; f < sigs.front().fold_count(); ++f) {
        const auto m = dtw_matrix(sigs, f);
        const auto p = dir / ("dtw-fold" + std::to_string(f) + ".csv");
        io::write_file(p, io::matrix_csv(m.model_ids, m.distances));
        out.written.push_back(p);
        folds.push_back(p.filename().string());
    }
    write_sidecar(path, json{{"mode", "models-dtw"}, {"models", mean.model_ids}, {"fold_files", folds}}, c, out);
    log << "DTW over " << sigs.size() << " models\n";
    return out;
}

Outputs compare_layers(const StudyConfig& c, const std::vector<ModelSignature>& sigs, const fs::path& dir,
                       std::ostream& log) {
    Outputs out;
    const auto m = layer_distance_matrix(sigs);
    std::vector<std::string> labels;
    for (const auto& l : m.layers) labels.push_back(l.label());
    const auto path = dir / "layers-euclidean.csv";
    io::write_file(path, io::matrix_csv(labels, m.distances));
    out.written.push_back(path);

    json nearest = json::array();
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        json entry{{"layer", labels[i]}, {"eighth", depth_eighth(m.layers[i].relative_position)}};
        try {
            const auto nf = nearest_and_farthest(m, i);
            entry["closest"] = {{"layer", nf.closest.ref.label()}, {"distance", nf.closest.distance}};
            entry["farthest"] = {{"layer", nf.farthest.ref.label()}, {"distance", nf.farthest.distance}};
        } catch (const ValidationError&) {
            entry["closest"] = nullptr;
            entry["farthest"] = nullptr;
        }
        nearest.push_back(entry);
    }
    const auto near_path = dir / "layers-nearest.json";
    json nj = provenance(c);
    nj["layers"] = nearest;
    io::write_file(near_path, dump(nj));
    out.written.push_back(near_path);
    write_sidecar(path, json{{"mode", "layers-euclidean"}, {"models", ids_of(sigs)}}, c, out);
    log << "layer distances over " << labels.size() << " layers\n";
    return out;
}

Outputs compare_meta(const StudyConfig& c, const std::vector<ModelSignature>& sigs, const fs::path& dir,
                     std::ostream& log) {
    if (!c.properties) throw IoError("meta comparison requires a model properties table (config key 'properties')");
    const auto table = load_properties(c);
    std::vector<ModelPropertiesRecord> rows;
    std::vector<std::string> missing;
    for (const auto& s : sigs) {
        if (auto r = find_properties(table, s.model_id)) rows.push_back(*r);
        else missing.push_back(s.model_id);
    }
    if (!missing.empty()) {
        std::string msg = "model properties missing for:";
        for (const auto& m : missing) msg += " " + m;
        throw ValidationError(msg);
    }
    std::vector<ModelDistanceMatrix> per_fold;
    for (std::size_t f = 0; f < sigs.front().fold_count(); ++f) per_fold.push_back(dtw_matrix(sigs, f));
    TrainConfig t = c.meta_train;
    t.seed = derive_seed(c.seed, fnv1a64("meta"));
    const auto result = meta_mlem(per_fold, rows, t, c.meta_repeats);

    json j = provenance(c);
    j["models"] = ids_of(sigs);
    j["features"] = result.features;
    json folds = json::array();
    for (const auto& r : result.folds) folds.push_back(json{{"fold", r.fold}, {"score", r.score}, {"importance", r.importance}});
    j["folds"] = folds;
    j["mean"] = result.mean;
    j["std"] = result.stddev;
    j["degenerate"] = result.degenerate;
    if (!result.message.empty()) j["message"] = result.message;

    Outputs out;
    const json key{{"meta", snapshot(c)["meta"]}, {"properties", io::properties_tsv(rows)}};
    const auto path = dir / ("meta-" + hash_of(key) + ".json");
    io::write_file(path, dump(j));
    out.written.push_back(path);
    if (result.degenerate) log << "meta-MLEM degenerate: " << result.message << "\n";
    for (std::size_t k = 0; k < result.features.size() && k < result.mean.size(); ++k)
        log << result.features[k] << " " << io::format_double(result.mean[k]) << " +- "
            << io::format_double(result.stddev[k]) << "\n";
    return out;
}

std::vector<std::string> rsa_models(const StudyConfig& c, const std::vector<std::string>& requested,
                                    const fs::path& signatures_dir) {
    if (!requested.empty()) return requested;
    std::vector<std::string> ids;
    if (fs::exists(signatures_dir)) {
        for (const auto& e : fs::directory_iterator(signatures_dir)) {
            const auto name = e.path().filename().string();
            if (name.ends_with(kSignatureSuffix)) ids.push_back(name.substr(0, name.size() - std::string(kSignatureSuffix).size()));
        }
    }
    const auto emb = embeddings_path(c);
    if (ids.empty() && fs::exists(emb)) {
        for (const auto& e : fs::directory_iterator(emb)) {
            const auto name = e.path().filename().string();
            if (name.ends_with(kContainerSuffix)) ids.push_back(name.substr(0, name.size() - std::string(kContainerSuffix).size()));
        }
    }
    if (ids.empty()) throw IoError("no embeddings containers found in " + emb.string());
    std::sort(ids.begin(), ids.end());
    return ids;
}

Outputs compare_rsa(const StudyConfig& c, const StimulusSet& set, const std::string& fingerprint,
                    const std::vector<std::string>& requested, std::ostream& log) {
    const auto ids = rsa_models(c, requested, fit_dir(c, fingerprint));
    std::vector<std::string> missing;
    for (const auto& id : ids) {
        require_model_id(id);
        if (!fs::exists(embeddings_path(c) / (id + kContainerSuffix))) missing.push_back(id);
    }
    if (!missing.empty()) {
        std::string msg = "missing embeddings containers in " + embeddings_path(c).string() + ":";
        for (const auto& m : missing) msg += " " + m + kContainerSuffix;
        throw IoError(msg);
    }
    std::vector<EmbeddingsContainer> containers;
    containers.reserve(ids.size());
    for (const auto& id : ids) containers.push_back(load_container(c, id, fingerprint));
    std::vector<AlignedEmbeddings> aligned;
    for (const auto& ct : containers) aligned.push_back(align(ct, set));
    const auto rsa = rsa_matrix(aligned);

    Outputs out;
    const auto path = rsa_dir(c, fingerprint) / "rsa.csv";
    io::write_file(path, io::matrix_csv(rsa.labels, rsa.values));
    out.written.push_back(path);
    write_sidecar(path, json{{"mode", "rsa"}, {"models", ids}, {"dataset_fingerprint", fingerprint}}, c, out);
    log << "RSA over " << rsa.labels.size() << " layers\n";
    return out;
}

Eigen::MatrixXd dense(const io::LabelledMatrix& m, const fs::path& source) {
    const auto n = static_cast<Eigen::Index>(m.labels.size());
    Eigen::MatrixXd d(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            const auto& v = m.rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            if (!v) throw ValidationError(source.string() + ": undefined entry at (" + m.labels[i] + ", " + m.labels[j] + ")");
            d(i, j) = *v;
        }
    return d;
}

io::LabelledMatrix read_matrix(const fs::path& p, const std::string& hint) {
    if (!fs::exists(p)) throw IoError("source artifact not found: " + p.string() + "; run `" + hint + "` first");
    return io::parse_matrix_csv(io::read_file(p));
}

}  // namespace

Outputs cmd_compare(const StudyConfig& c, const std::string& mode, const std::vector<std::string>& model_ids,
                    std::ostream& log) {
    const StimulusSet set = load_dataset(c);
    const auto fingerprint = io::dataset_fingerprint(set);
    if (mode == "rsa") return compare_rsa(c, set, fingerprint, model_ids, log);

    const auto sigs = load_signatures(fit_dir(c, fingerprint), model_ids);
    require_shared_schema(sigs);
    const auto dir = compare_dir(c, fingerprint);
    if (mode == "models-dtw") {
        if (sigs.size() < 2) throw ValidationError("models-dtw needs at least 2 signatures");
        return compare_models_dtw(c, sigs, dir, log);
    }
    if (mode == "layers-euclidean") return compare_layers(c, sigs, dir, log);
    if (mode == "meta") return compare_meta(c, sigs, dir, log);
    throw ValidationError("unknown compare mode '" + mode + "'");
}

Outputs cmd_project(const StudyConfig& c, const std::string& source, const std::string& method_in, std::ostream& log) {
    const StimulusSet set = load_dataset(c);
    const auto fingerprint = io::dataset_fingerprint(set);
    std::string method = method_in;
    if (method.empty()) method = source == "layer-signatures" ? "pca" : "mds";
    if (method != "mds" && method != "pca") throw ValidationError("unknown projection method '" + method + "'");

    ProjectionResult r;
    fs::path dir;
    if (source == "dtw") {
        if (method != "mds") throw ValidationError("dtw source supports only mds");
        const auto p = compare_dir(c, fingerprint) / "dtw.csv";
        const auto m = read_matrix(p, "compare --mode models-dtw");
        r = classical_mds(dense(m, p), c.k, m.labels);
        dir = fit_dir(c, fingerprint) / "project";
    } else if (source == "layer-signatures") {
        if (method == "pca") {
            r = pca_layers(load_signatures(fit_dir(c, fingerprint), {}), c.sigma, c.k);
        } else {
            const auto p = compare_dir(c, fingerprint) / "layers-euclidean.csv";
            const auto m = read_matrix(p, "compare --mode layers-euclidean");
            r = classical_mds(dense(m, p), c.k, m.labels);
        }
        dir = fit_dir(c, fingerprint) / "project";
    } else if (source == "rsa") {
        if (method != "mds") throw ValidationError("rsa source supports only mds");
        const auto p = rsa_dir(c, fingerprint) / "rsa.csv";
        const auto m = read_matrix(p, "compare --mode rsa");
        Eigen::MatrixXd d = dense(m, p);
        d = (1.0 - d.array()).matrix();
        d.diagonal().setZero();
        r = classical_mds(d.cwiseMax(0.0), c.k, m.labels);
        dir = rsa_dir(c, fingerprint) / "project";
    } else {
        throw ValidationError("unknown projection source '" + source + "'");
    }

    std::string stem = source + "-" + method + "-k" + std::to_string(c.k);
    if (method == "pca" && c.sigma) stem += "-sigma" + io::format_double(*c.sigma);
    Outputs out;
    const auto csv = dir / (stem + ".csv");
    io::write_file(csv, coordinates_csv(r));
    out.written.push_back(csv);
    json diag = provenance(c);
    diag["source"] = source;
    const json d = diagnostics_json(r);
    for (const auto& item : d.items()) diag[item.key()] = item.value();
    const auto diag_path = dir / (stem + ".diagnostics.json");
    io::write_file(diag_path, dump(diag));
    out.written.push_back(diag_path);
    for (const auto& w : r.warnings) log << "warning: " << w << "\n";
    log << "projected " << r.ids.size() << " items with " << method << ", explained variance "
        << format_row(r.explained_variance_ratio) << "\n";
    return out;
}

Outputs cmd_synth(const StudyConfig& c, const SynthOptions& o, std::ostream& log) {
    require_model_id(o.model_id);
    if (o.layers == 0) throw ValidationError("synth needs at least one layer");
    const StimulusSet set = load_dataset(c);
    const auto tensor = raw_feature_distances(set);
    const std::string family = o.family.empty() ? o.model_id : o.family;

    // Feature weight profiles over depth are shared within a family.
    Rng profile_rng(derive_seed(c.seed, fnv1a64(family), 1));
    const std::size_t m = set.schema.size();
    std::vector<double> amplitude(m), centre(m);
    for (std::size_t k = 0; k < m; ++k) {
        amplitude[k] = 0.2 + 0.8 * profile_rng.uniform();
        centre[k] = profile_rng.uniform();
    }

    std::vector<std::size_t> offset(m + 1, 0);
    for (std::size_t k = 0; k < m; ++k) {
        const auto& spec = set.schema[k];
        offset[k + 1] = offset[k] + (spec.kind == FeatureKind::categorical ? spec.levels.size() : 1);
    }
    const std::size_t natural = offset[m];
    const std::size_t dim = std::max(o.dim, natural);

    std::vector<double> ordinal_scale(m, 1.0);
    for (std::size_t k = 0; k < m; ++k)
        if (set.schema[k].kind == FeatureKind::ordinal && tensor.scale[k] > 0) ordinal_scale[k] = tensor.scale[k];

    Rng noise_rng(derive_seed(c.seed, fnv1a64(o.model_id), 2));
    EmbeddingsContainer container;
    container.model_id = o.model_id;
    container.dataset_fingerprint = io::dataset_fingerprint(set);
    container.metadata["family"] = family;
    container.metadata["source"] = "synthetic";
    const auto n = static_cast<Eigen::Index>(set.size());
    for (std::size_t l = 0; l < o.layers; ++l) {
        const double t = o.layers > 1 ? static_cast<double>(l) / static_cast<double>(o.layers - 1) : 0.0;
        RowMatrix y = RowMatrix::Zero(n, static_cast<Eigen::Index>(dim));
        for (std::size_t k = 0; k < m; ++k) {
            const double z = (t - centre[k]) / 0.3;
            const double w = amplitude[k] * std::exp(-0.5 * z * z) + 0.02;
            const auto& spec = set.schema[k];
            for (Eigen::Index i = 0; i < n; ++i) {
                const auto& cell = set.annotations[static_cast<std::size_t>(i)][k];
                if (spec.kind == FeatureKind::categorical) {
                    const auto& level = std::get<std::string>(cell);
                    const auto pos = std::find(spec.levels.begin(), spec.levels.end(), level) - spec.levels.begin();
                    y(i, static_cast<Eigen::Index>(offset[k]) + pos) = std::sqrt(w / 2.0);
                } else {
                    y(i, static_cast<Eigen::Index>(offset[k])) = std::get<double>(cell) / ordinal_scale[k] * std::sqrt(w);
                }
            }
        }
        for (Eigen::Index i = 0; i < y.rows(); ++i)
            for (Eigen::Index d = 0; d < y.cols(); ++d) y(i, d) += o.noise * noise_rng.normal();
        container.layers.push_back(std::move(y));
    }
    Outputs out;
    const auto path = embeddings_path(c) / (o.model_id + kContainerSuffix);
    io::write_container(path, container);
    out.written.push_back(path);
    log << "wrote synthetic container " << path.string() << " (" << o.layers << " layers, " << dim << " dims)\n";
    return out;
}

}  // namespace mlem::cli
