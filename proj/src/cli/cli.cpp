#include "cli.hpp"

#include <iostream>
#include <optional>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "CLI11.hpp"
#include "mlem/error.hpp"
#include "study.hpp"

namespace mlem::cli {

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Metric-learning encoding models: linguistic signatures of neural representations", "mlem"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> output;
    int jobs = 0;
    app.add_option("--config", config_path, "Study configuration (JSON)");
    app.add_option("--seed", seed, "Override the configured seed");
    app.add_option("--output", output, "Override the output directory");
    app.add_option("--jobs", jobs, "Worker threads (default: all cores)")->check(CLI::NonNegativeNumber);

    auto* generate = app.add_subcommand("generate", "Generate the relative-clause dataset and its balance report");

    std::vector<std::string> fit_models;
    auto* fit = app.add_subcommand("fit", "Fit per-layer MLEMs and write a model signature");
    fit->add_option("--model", fit_models, "Model id(s); reads <embeddings>/<id>.mlem")->required();

    std::string mode;
    std::vector<std::string> compare_models;
    auto* compare = app.add_subcommand("compare", "Compare models or layers");
    compare->add_option("--mode", mode, "Analysis")
        ->required()
        ->check(CLI::IsMember({"models-dtw", "layers-euclidean", "rsa", "meta"}));
    compare->add_option("--model", compare_models, "Restrict to these model ids");

    std::string source, method;
    std::optional<std::size_t> k;
    std::optional<std::string> sigma;
    auto* project = app.add_subcommand("project", "Project a comparison into low-dimensional coordinates");
    project->add_option("--source", source, "Input artifact")
        ->required()
        ->check(CLI::IsMember({"dtw", "layer-signatures", "rsa"}));
    project->add_option("--method", method, "mds or pca (default: pca for layer-signatures, else mds)")
        ->check(CLI::IsMember({"mds", "pca"}));
    project->add_option("--k", k, "Output dimensions");
    project->add_option("--sigma", sigma, "Gaussian smoothing over layers for PCA, or 'none'");

    SynthOptions synth_options;
    auto* synth = app.add_subcommand("synth", "Write a synthetic embeddings container for the current dataset");
    synth->add_option("--model", synth_options.model_id, "Model id")->required();
    synth->add_option("--layers", synth_options.layers, "Layer count including layer 0");
    synth->add_option("--dim", synth_options.dim, "Hidden size (raised to fit the planted features)");
    synth->add_option("--noise", synth_options.noise, "Gaussian noise standard deviation");
    synth->add_option("--family", synth_options.family, "Family whose depth profile to share");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    try {
        StudyConfig c = config_path.empty() ? default_config() : load_config(config_path);
        if (seed) c.seed = *seed;
        if (output) c.output = *output;
        if (k) c.k = *k;
        if (sigma) {
            if (*sigma == "none") c.sigma.reset();
            else c.sigma = std::stod(*sigma);
        }
#ifdef _OPENMP
        if (jobs > 0) omp_set_num_threads(jobs);
#endif

        Outputs result;
        if (*generate) result = cmd_generate(c, err);
        else if (*fit) result = cmd_fit(c, fit_models, err);
        else if (*compare) result = cmd_compare(c, mode, compare_models, err);
        else if (*project) result = cmd_project(c, source, method, err);
        else if (*synth) result = cmd_synth(c, synth_options, err);
        for (const auto& p : result.written) out << p.string() << "\n";
        return kOk;
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return kMissingInput;
    } catch (const FormatError& e) {
        err << "error: " << e.what() << "\n";
        return kBadFormat;
    } catch (const SchemaMismatch& e) {
        err << "error: " << e.what() << "\n";
        return kSchemaMismatch;
    } catch (const AlignmentError& e) {
        err << "error: " << e.what() << "\n";
        return kAlignment;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kFailure;
    }
}

int run_cli(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run_cli(args, std::cout, std::cerr);
}

}  // namespace mlem::cli
