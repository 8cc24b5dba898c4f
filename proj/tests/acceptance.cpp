// Prints one PASS/FAIL line per acceptance criterion; exits non-zero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "mlem/compare.hpp"
#include "mlem/distances.hpp"
#include "mlem/grammar.hpp"
#include "mlem/io.hpp"
#include "mlem/metric_model.hpp"
#include "mlem/project.hpp"
#include "mlem/softrank.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace mlem;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::vector<double> fold_mean(const std::vector<ImportanceResult>& folds) {
    std::vector<double> m(folds.front().importance.size(), 0.0);
    for (const auto& r : folds)
        for (std::size_t k = 0; k < m.size(); ++k) m[k] += r.importance[k] / static_cast<double>(folds.size());
    return m;
}

double mean_score(const std::vector<ImportanceResult>& folds) {
    double s = 0;
    for (const auto& r : folds) s += r.score / static_cast<double>(folds.size());
    return s;
}

struct Planted {
    StimulusSet set;
    FeatureDistanceTensor features;
    PairwiseDistanceMatrix neural;
    CrossValidationPlan plan;
};

Planted planted(std::uint64_t seed) {
    Planted p;
    p.set = oracle::categorical_stimuli(200, {3, 3, 3, 3}, seed);
    p.features = feature_distances(p.set);
    p.neural = neural_distances(oracle::planted_embeddings(p.set, {1.0, 0.5, 0.25, 0.0}));
    p.plan = CrossValidationPlan::make(200, 5, seed);
    return p;
}

Outcome planted_recovery() {
    const auto start = std::chrono::steady_clock::now();
    const auto p = planted(7);
    TrainConfig cfg;
    cfg.seed = 7;
    const auto folds = run_cv(p.features, p.neural, p.plan, cfg);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const double score = mean_score(folds);
    const auto fi = fold_mean(folds);
    const bool ordered = fi[0] > fi[1] && fi[1] > fi[2] && fi[2] > fi[3];
    const bool ok = score >= 0.95 && ordered && fi[3] <= 0.02 && secs <= 60.0;
    return {ok, "spearman " + fmt(score) + ", FI (" + fmt(fi[0]) + ", " + fmt(fi[1]) + ", " + fmt(fi[2]) + ", " +
                    fmt(fi[3]) + "), " + fmt(secs) + " s"};
}

Outcome null_calibration() {
    const auto p = planted(11);
    TrainConfig cfg;
    cfg.seed = 11;
    const auto folds = run_cv(p.features, oracle::shuffled(p.neural, 99), p.plan, cfg);
    const double score = mean_score(folds);
    const auto fi = fold_mean(folds);
    double worst = 0;
    for (double v : fi) worst = std::max(worst, std::abs(v));
    return {std::abs(score) <= 0.1 && worst <= 0.02, "spearman " + fmt(score) + ", max |FI| " + fmt(worst)};
}

Outcome soft_rank_correctness() {
    Rng rng(3);
    double sum_err = 0;
    for (int t = 0; t < 1000; ++t) {
        const std::size_t n = 2 + rng.below(50);
        std::vector<double> x(n);
        for (auto& v : x) v = rng.normal() * 3.0;
        const double eps = 0.01 + rng.uniform() * 2.0;
        const auto r = soft_rank(x, {eps});
        double s = 0;
        for (double v : r) s += v;
        sum_err = std::max(sum_err, std::abs(s - static_cast<double>(n * (n + 1)) / 2.0));
    }
    double hard_err = 0;
    for (int t = 0; t < 200; ++t) {
        std::vector<double> x(2 + rng.below(30));
        for (auto& v : x) v = rng.normal();
        const auto s = soft_rank(x, {1e-6});
        const auto h = hard_rank(x);
        for (std::size_t i = 0; i < x.size(); ++i) hard_err = std::max(hard_err, std::abs(s[i] - h[i]));
    }
    double jvp_err = 0;
    for (int t = 0; t < 200; ++t) {
        std::vector<double> x(8), u(8);
        for (auto& v : x) v = rng.normal();
        for (auto& v : u) v = rng.normal();
        const SoftRankConfig cfg{0.5 + rng.uniform()};
        const auto j = soft_rank_jvp(x, u, cfg);
        const double h = 1e-6;
        std::vector<double> xp = x, xm = x;
        for (std::size_t i = 0; i < 8; ++i) {
            xp[i] += h * u[i];
            xm[i] -= h * u[i];
        }
        const auto rp = soft_rank(xp, cfg), rm = soft_rank(xm, cfg);
        double num = 0, den = 0;
        for (std::size_t i = 0; i < 8; ++i) {
            const double fd = (rp[i] - rm[i]) / (2 * h);
            num += (j[i] - fd) * (j[i] - fd);
            den += fd * fd;
        }
        jvp_err = std::max(jvp_err, std::sqrt(num) / std::max(std::sqrt(den), 1e-12));
    }
    return {sum_err <= 1e-9 && hard_err <= 1e-4 && jvp_err <= 1e-4,
            "sum error " + fmt(sum_err) + ", eps=1e-6 max abs " + fmt(hard_err) + ", JVP relative " + fmt(jvp_err)};
}

Outcome spearman_oracle() {
    const std::vector<double> x{1, 2, 3, 4}, y{1, 3, 2, 4};
    const double rho = spearman(x, y);
    Rng rng(5);
    double worst = 0;
    bool ranks_equal = true;
    for (int t = 0; t < 100; ++t) {
        std::vector<double> a(5 + rng.below(40)), b(a.size());
        for (auto& v : a) v = static_cast<double>(rng.below(6));
        for (auto& v : b) v = static_cast<double>(rng.below(4));
        ranks_equal = ranks_equal && hard_rank(a) == oracle::counting_rank(a);
        try {
            worst = std::max(worst, std::abs(spearman(a, b) - oracle::naive_spearman(a, b)));
        } catch (const UndefinedCorrelation&) {
        }
    }
    return {rho == 0.8 && ranks_equal && worst <= 1e-12,
            "rho " + fmt(rho) + ", tie ranks " + (ranks_equal ? "match" : "differ") + ", max diff " + fmt(worst)};
}

Outcome dtw_oracle() {
    Rng rng(9);
    double worst = 0;
    bool identity = true, symmetric = true;
    for (int la = 1; la <= 4; ++la)
        for (int lb = 1; lb <= 4; ++lb)
            for (int t = 0; t < 20; ++t) {
                const auto a = oracle::random_matrix(rng, la, 2), b = oracle::random_matrix(rng, lb, 2);
                worst = std::max(worst, std::abs(dtw_distance(a, b) - oracle::dtw_enumerate(a, b)));
                symmetric = symmetric && dtw_distance(a, b) == dtw_distance(b, a);
                identity = identity && dtw_distance(a, a) == 0.0;
            }
    return {worst <= 1e-12 && identity && symmetric, "max diff " + fmt(worst) + (identity ? "" : ", identity fails") +
                                                        (symmetric ? "" : ", asymmetric")};
}

Outcome rsa_sanity() {
    Rng rng(13);
    StimulusSet set = oracle::categorical_stimuli(30, {2}, 1);
    std::vector<EmbeddingsContainer> containers(4);
    for (std::size_t c = 0; c < 4; ++c) {
        containers[c].model_id = "m" + std::to_string(c);
        for (int l = 0; l < 5; ++l) containers[c].layers.push_back(oracle::random_rows(rng, 30, 6));
    }
    std::vector<AlignedEmbeddings> aligned;
    for (const auto& c : containers) aligned.push_back(align(c, set));
    const auto rsa = rsa_matrix(aligned);
    double self_err = 0;
    for (std::size_t i = 0; i < rsa.labels.size(); ++i) self_err = std::max(self_err, std::abs(*rsa.values[i][i] - 1.0));

    double invariance_err = 0;
    const std::vector<std::function<double(double)>> transforms{
        [](double d) { return std::log1p(d); }, [](double d) { return d * d * d; }, [](double d) { return std::exp(d) + 3.0; }};
    std::size_t layer = 0;
    for (const auto& c : containers)
        for (const auto& y : c.layers) {
            const auto d = neural_distances(y);
            const auto other = neural_distances(containers[(layer + 1) % 4].layers[layer % 5]);
            const double base = spearman(d.condensed(), other.condensed());
            for (const auto& f : transforms) {
                std::vector<double> td(d.condensed().begin(), d.condensed().end());
                for (auto& v : td) v = f(v);
                invariance_err = std::max(invariance_err, std::abs(spearman(td, other.condensed()) - base));
            }
            ++layer;
        }
    return {self_err <= 1e-12 && invariance_err <= 1e-12 && layer == 20,
            "self-correlation error " + fmt(self_err) + ", transform invariance error " + fmt(invariance_err) + " over " +
                std::to_string(layer) + " layers"};
}

Outcome classical_mds_check() {
    Rng rng(17);
    Eigen::MatrixXd pts = oracle::random_matrix(rng, 5, 2);
    Eigen::MatrixXd d(5, 5);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) d(i, j) = (pts.row(i) - pts.row(j)).norm();
    const auto r = classical_mds(d, 2);
    double rel = 0;
    for (int i = 0; i < 5; ++i)
        for (int j = i + 1; j < 5; ++j)
            rel = std::max(rel, std::abs((r.coordinates.row(i) - r.coordinates.row(j)).norm() - d(i, j)) / d(i, j));
    Eigen::MatrixXd tri = Eigen::MatrixXd::Ones(3, 3) - Eigen::MatrixXd::Identity(3, 3);
    const auto t = classical_mds(tri, 2);
    double tri_err = 0;
    for (int i = 0; i < 3; ++i)
        for (int j = i + 1; j < 3; ++j) tri_err = std::max(tri_err, std::abs((t.coordinates.row(i) - t.coordinates.row(j)).norm() - 1.0));
    return {rel <= 1e-9 && tri_err <= 1e-9, "relative error " + fmt(rel) + ", triangle error " + fmt(tri_err)};
}

Outcome meta_planted() {
    const auto models = oracle::meta_models();
    std::vector<ModelDistanceMatrix> folds;
    for (std::size_t f = 0; f < 5; ++f) folds.push_back(oracle::family_indicator(models, f));
    TrainConfig cfg;
    cfg.epochs = 300;
    cfg.batch_pairs = 64;
    cfg.seed = 21;
    const auto r = meta_mlem(folds, models, cfg);
    std::size_t family = 0;
    bool strictly_largest = !r.degenerate && r.folds.size() == 5;
    for (std::size_t k = 1; k < r.mean.size(); ++k) strictly_largest = strictly_largest && r.mean[family] > r.mean[k];
    std::string detail = "family FI " + fmt(r.mean[family]) + " +- " + fmt(r.stddev[family]);
    double runner_up = 0;
    for (std::size_t k = 1; k < r.mean.size(); ++k) runner_up = std::max(runner_up, r.mean[k]);
    detail += ", next largest " + fmt(runner_up) + ", folds " + std::to_string(r.folds.size());
    return {strictly_largest && r.stddev.size() == r.mean.size(), detail};
}

Outcome dataset_generator() {
    const auto lex = grammar::default_lexicon();
    const auto set = grammar::generate(lex, {});
    std::map<std::string, std::size_t> cells;
    const auto rc = *set.schema.index_of("Relative Clause type");
    const auto site = *set.schema.index_of("Attachment site");
    for (const auto& row : set.annotations) ++cells[std::get<std::string>(row[rc]) + "/" + std::get<std::string>(row[site])];
    bool equal = cells.size() == 4;
    for (const auto& [k, v] : cells) equal = equal && v == cells.begin()->second;
    const double max_r = grammar::balance_report(set).max_off_diagonal();
    const bool deterministic = io::stimulus_tsv(grammar::generate(lex, {})) == io::stimulus_tsv(set) &&
                               io::stimulus_tsv(grammar::generate(lex, {grammar::Enumeration::sample, 30, 4})) ==
                                   io::stimulus_tsv(grammar::generate(lex, {grammar::Enumeration::sample, 30, 4}));
    return {equal && max_r <= 0.1 && deterministic,
            std::to_string(set.size()) + " sentences, " + std::to_string(cells.size()) + " cells of " +
                std::to_string(cells.begin()->second) + ", max |r| " + fmt(max_r) +
                (deterministic ? ", deterministic" : ", NOT deterministic")};
}

std::map<std::string, std::string> snapshot_tree(const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) files[fs::relative(e.path(), root).generic_string()] = io::read_file(e.path());
    return files;
}

bool run_pipeline(const fs::path& dir) {
    std::ostringstream out, err;
    const std::string o = dir.string();
    const std::string cfg = (dir / "study.json").string();
    io::write_file(cfg, R"({"seed": 5, "generate": {"enumeration": "sample", "sample_per_cell": 15},
        "properties": "models.tsv", "fit": {"folds": 3, "repeats": 3, "train": {"epochs": 20, "batch_pairs": 256}},
        "meta": {"repeats": 3, "train": {"epochs": 40}}, "project": {"k": 2, "sigma": 1.0}})");
    auto models = oracle::meta_models();
    models.resize(4);
    io::write_file(dir / "models.tsv", io::properties_tsv(models));
    const std::vector<std::vector<std::string>> steps{
        {"generate"},
        {"synth", "--model", models[0].model_id, "--layers", "10", "--family", "x"},
        {"synth", "--model", models[1].model_id, "--layers", "10", "--family", "x"},
        {"synth", "--model", models[2].model_id, "--layers", "7", "--family", "y"},
        {"synth", "--model", models[3].model_id, "--layers", "4", "--family", "z"},
        {"fit", "--model", models[0].model_id, "--model", models[1].model_id, "--model", models[2].model_id, "--model", models[3].model_id},
        {"compare", "--mode", "models-dtw"},
        {"compare", "--mode", "layers-euclidean"},
        {"compare", "--mode", "rsa"},
        {"compare", "--mode", "meta"},
        {"project", "--source", "dtw"},
        {"project", "--source", "layer-signatures"},
        {"project", "--source", "rsa"},
    };
    for (auto step : steps) {
        step.insert(step.begin(), {"--config", cfg, "--output", o});
        if (cli::run_cli(step, out, err) != 0) {
            std::fprintf(stderr, "%s\n", err.str().c_str());
            return false;
        }
    }
    return true;
}

Outcome end_to_end() {
    const fs::path root = fs::temp_directory_path() / "mlem-acceptance-e2e";
    fs::remove_all(root);
    const fs::path a = root / "a", b = root / "b";
    fs::create_directories(a);
    fs::create_directories(b);
    if (!run_pipeline(a) || !run_pipeline(b)) return {false, "pipeline failed"};
    const auto ta = snapshot_tree(a), tb = snapshot_tree(b);
    std::string diff;
    for (const auto& [name, bytes] : ta) {
        auto it = tb.find(name);
        if (it == tb.end() || it->second != bytes) diff += " " + name;
    }
    const bool ok = ta.size() == tb.size() && diff.empty() && ta.size() > 20;
    fs::remove_all(root);
    return {ok, std::to_string(ta.size()) + " files" + (diff.empty() ? ", byte-identical" : ", differing:" + diff)};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"planted-metric recovery", planted_recovery},
        {"null calibration", null_calibration},
        {"soft-rank correctness", soft_rank_correctness},
        {"spearman oracle", spearman_oracle},
        {"dtw oracle", dtw_oracle},
        {"rsa sanity", rsa_sanity},
        {"classical mds", classical_mds_check},
        {"meta-mlem planted oracle", meta_planted},
        {"dataset generator", dataset_generator},
        {"end-to-end determinism", end_to_end},
    };
    int failures = 0;
    for (const auto& [name, check] : criteria) {
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += !o.pass;
        std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
