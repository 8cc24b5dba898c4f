#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mlem/grammar.hpp"
#include "mlem/io.hpp"
#include "mlem/metric_model.hpp"

namespace mlem::cli {

namespace fs = std::filesystem;

struct StudyConfig {
    /// Directory that relative paths are resolved against.
    fs::path base;
    io::json raw = io::json::object();

    std::uint64_t seed = 0;
    fs::path output = "out";

    // generate
    std::optional<fs::path> lexicon;
    grammar::Enumeration enumeration = grammar::Enumeration::full;
    std::size_t sample_per_cell = 0;

    // dataset consumed by fit / compare
    fs::path dataset_tsv;
    fs::path dataset_schema;
    fs::path embeddings_dir = "embeddings";
    std::optional<fs::path> properties;

    // fit
    TrainConfig train;
    std::size_t folds = 5;
    std::size_t repeats = 10;
    bool interactions = false;
    bool exclude_embedding_layer = false;

    // compare: meta
    TrainConfig meta_train;
    std::size_t meta_repeats = 10;

    // project
    std::optional<double> sigma = 1.0;
    std::size_t k = 2;

    fs::path resolve(const fs::path& p) const { return p.is_absolute() ? p : base / p; }
};

/// Parses a JSON config file. Paths in it are relative to the file's directory.
StudyConfig load_config(const fs::path& path);
/// Defaults with paths relative to the working directory.
StudyConfig default_config();

/// Canonical snapshot of the effective configuration, embedded in every output.
io::json snapshot(const StudyConfig& c);

/// Content-addressed directory for signatures produced by this fit configuration.
fs::path fit_dir(const StudyConfig& c, const std::string& dataset_fingerprint);

struct Outputs {
    std::vector<fs::path> written;
};

Outputs cmd_generate(const StudyConfig& c, std::ostream& log);
Outputs cmd_fit(const StudyConfig& c, const std::vector<std::string>& model_ids, std::ostream& log);
Outputs cmd_compare(const StudyConfig& c, const std::string& mode, const std::vector<std::string>& model_ids,
                    std::ostream& log);
Outputs cmd_project(const StudyConfig& c, const std::string& source, const std::string& method, std::ostream& log);

struct SynthOptions {
    std::string model_id;
    std::size_t layers = 4;
    std::size_t dim = 32;
    double noise = 0.05;
    std::string family;
};

/// Writes a planted embeddings container whose per-layer feature weights follow a smooth
/// depth profile; stands in for extracted hidden states.
Outputs cmd_synth(const StudyConfig& c, const SynthOptions& options, std::ostream& log);

}  // namespace mlem::cli
