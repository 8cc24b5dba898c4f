#include "mlem/metric_model.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>

#include "mlem/rng.hpp"

namespace mlem {

namespace {

// Diagonal of L is floor + softplus(theta); theta0 gives exactly 1 at initialization.
constexpr double kDiagonalFloor = 1e-3;
const double kTheta0 = std::log(std::expm1(1.0 - kDiagonalFloor));

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

const char* optimizer_name(Optimizer o) { return o == Optimizer::sgd ? "sgd" : "momentum"; }

std::vector<std::size_t> sorted_unique(std::span<const std::size_t> idx) {
    std::vector<std::size_t> v(idx.begin(), idx.end());
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

// Condensed indices of all pairs inside a sorted index set.
std::vector<std::size_t> pairs_within(std::size_t n, const std::vector<std::size_t>& idx) {
    std::vector<std::size_t> out;
    out.reserve(pair_count(idx.size()));
    for (std::size_t a = 0; a < idx.size(); ++a)
        for (std::size_t b = a + 1; b < idx.size(); ++b) out.push_back(pair_index(n, idx[a], idx[b]));
    return out;
}

}  // namespace

void validate(const TrainConfig& c) {
    if (c.batch_pairs < 2) throw ValidationError("batch_pairs must be >= 2");
    if (!(c.learning_rate > 0.0)) throw ValidationError("learning_rate must be > 0");
    if (!(c.softrank.epsilon > 0.0)) throw ValidationError("soft-rank epsilon must be > 0");
    if (c.epochs == 0) throw ValidationError("epochs must be >= 1");
    if (c.max_pairs_per_fold < c.batch_pairs) throw ValidationError("max_pairs_per_fold must be >= batch_pairs");
    if (c.optimizer == Optimizer::momentum && !(c.momentum >= 0.0 && c.momentum < 1.0))
        throw ValidationError("momentum must be in [0, 1)");
}

io::json to_json(const TrainConfig& c) {
    io::json j;
    j["batch_pairs"] = c.batch_pairs;
    j["epochs"] = c.epochs;
    j["learning_rate"] = c.learning_rate;
    j["momentum"] = c.momentum;
    j["seed"] = c.seed;
    j["optimizer"] = optimizer_name(c.optimizer);
    j["softrank_epsilon"] = c.softrank.epsilon;
    j["diagonal_only"] = c.diagonal_only;
    j["max_pairs_per_fold"] = c.max_pairs_per_fold;
    return j;
}

TrainConfig train_config_from_json(const io::json& j) {
    TrainConfig c;
    try {
        c.batch_pairs = j.value("batch_pairs", c.batch_pairs);
        c.epochs = j.value("epochs", c.epochs);
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.momentum = j.value("momentum", c.momentum);
        c.seed = j.value("seed", c.seed);
        const auto opt = j.value("optimizer", std::string(optimizer_name(c.optimizer)));
        if (opt == "sgd")
            c.optimizer = Optimizer::sgd;
        else if (opt == "momentum")
            c.optimizer = Optimizer::momentum;
        else
            throw ValidationError("unknown optimizer '" + opt + "'");
        c.softrank.epsilon = j.value("softrank_epsilon", c.softrank.epsilon);
        c.diagonal_only = j.value("diagonal_only", c.diagonal_only);
        c.max_pairs_per_fold = j.value("max_pairs_per_fold", c.max_pairs_per_fold);
    } catch (const io::json::exception& e) {
        throw FormatError(std::string("malformed training config: ") + e.what());
    }
    validate(c);
    return c;
}

MetricModel::MetricModel(std::size_t m)
    : L_(Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m))) {}

MetricModel::MetricModel(Eigen::MatrixXd cholesky_factor) : L_(std::move(cholesky_factor)) {
    if (L_.rows() != L_.cols()) throw ValidationError("Cholesky factor must be square");
    for (Eigen::Index i = 0; i < L_.rows(); ++i) {
        if (!(L_(i, i) > 0.0) || !std::isfinite(L_(i, i)))
            throw ValidationError("Cholesky factor diagonal must be strictly positive");
        for (Eigen::Index j = i + 1; j < L_.cols(); ++j)
            if (L_(i, j) != 0.0) throw ValidationError("Cholesky factor must be lower triangular");
    }
}

MetricModel fit(const FeatureDistanceTensor& features, const PairwiseDistanceMatrix& neural,
                std::span<const std::size_t> train_indices, const TrainConfig& config, const StepObserver& observer) {
    validate(config);
    const std::size_t n = neural.size();
    const std::size_t m = features.features();
    if (features.size() != n) throw ValidationError("feature and neural distance matrices differ in size");
    const auto train = sorted_unique(train_indices);
    if (train.size() < 2) throw ValidationError("fit needs at least 2 training stimuli");
    if (train.back() >= n) throw ValidationError("training index out of range");
    auto pairs = pairs_within(n, train);
    if (pairs.size() < config.batch_pairs)
        throw ValidationError("only " + std::to_string(pairs.size()) + " training pairs, fewer than batch_pairs = " +
                              std::to_string(config.batch_pairs));

    const auto mi = static_cast<Eigen::Index>(m);
    Eigen::VectorXd theta = Eigen::VectorXd::Constant(mi, kTheta0);
    Eigen::MatrixXd off = Eigen::MatrixXd::Zero(mi, mi);  // strictly lower part used
    Eigen::VectorXd vel_theta = Eigen::VectorXd::Zero(mi);
    Eigen::MatrixXd vel_off = Eigen::MatrixXd::Zero(mi, mi);

    const auto build_L = [&] {
        Eigen::MatrixXd L = Eigen::MatrixXd::Zero(mi, mi);
        for (Eigen::Index k = 0; k < mi; ++k) {
            L(k, k) = kDiagonalFloor + softplus(theta(k));
            for (Eigen::Index l = 0; l < k; ++l) L(k, l) = off(k, l);
        }
        return L;
    };
    const auto make_model = [&](Eigen::MatrixXd L) {
        MetricModel model(std::move(L));
        model.feature_names = features.names;
        model.config = config;
        model.train_indices = train;
        return model;
    };

    MetricModel last = make_model(build_L());
    Rng rng(config.seed);
    const std::size_t per_epoch = std::min(pairs.size(), config.max_pairs_per_fold);
    const std::size_t B = config.batch_pairs;
    Eigen::MatrixXd D(static_cast<Eigen::Index>(B), mi);
    std::vector<double> target(B), pred(B);
    std::vector<double> trace;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        // Uniform sample without replacement (partial Fisher-Yates) or a full shuffle.
        for (std::size_t i = 0; i < per_epoch; ++i) std::swap(pairs[i], pairs[i + rng.below(pairs.size() - i)]);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start + 1 < per_epoch; start += B) {
            const std::size_t bsz = std::min(B, per_epoch - start);
            if (bsz < 2) break;
            const auto bi = static_cast<Eigen::Index>(bsz);
            const Eigen::MatrixXd L = build_L();
            for (std::size_t b = 0; b < bsz; ++b) {
                const std::size_t p = pairs[start + b];
                for (std::size_t k = 0; k < m; ++k)
                    D(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(k)) = features.matrices[k].condensed()[p];
                target[b] = neural.condensed()[p];
            }
            const auto Dt = D.topRows(bi);
            const Eigen::MatrixXd DL = Dt * L;
            for (std::size_t b = 0; b < bsz; ++b) pred[b] = DL.row(static_cast<Eigen::Index>(b)).squaredNorm();

            const auto ranks = hard_rank(std::span<const double>(target.data(), bsz));
            SoftSpearman ss;
            try {
                ss = soft_spearman(std::span<const double>(pred.data(), bsz), ranks, config.softrank);
            } catch (const UndefinedCorrelation&) {
                continue;  // constant batch carries no ranking signal
            }
            const double loss = -ss.rho;
            // d(-rho)/dL = -2 Dᵀ diag(g) D L
            const Eigen::Map<const Eigen::VectorXd> g(ss.gradient.data(), bi);
            const Eigen::MatrixXd gradL = -2.0 * Dt.transpose() * (g.asDiagonal() * DL);

            Eigen::VectorXd grad_theta(mi);
            for (Eigen::Index k = 0; k < mi; ++k) grad_theta(k) = gradL(k, k) * sigmoid(theta(k));
            Eigen::MatrixXd grad_off = Eigen::MatrixXd::Zero(mi, mi);
            if (!config.diagonal_only)
                for (Eigen::Index k = 0; k < mi; ++k)
                    for (Eigen::Index l = 0; l < k; ++l) grad_off(k, l) = gradL(k, l);

            if (!std::isfinite(loss) || !grad_theta.allFinite() || !grad_off.allFinite())
                throw FitError("non-finite loss or gradient at epoch " + std::to_string(epoch), last);

            if (config.optimizer == Optimizer::momentum) {
                vel_theta = config.momentum * vel_theta + grad_theta;
                vel_off = config.momentum * vel_off + grad_off;
                theta -= config.learning_rate * vel_theta;
                off -= config.learning_rate * vel_off;
            } else {
                theta -= config.learning_rate * grad_theta;
                off -= config.learning_rate * grad_off;
            }
            Eigen::MatrixXd next = build_L();
            if (!next.allFinite()) throw FitError("parameters diverged at epoch " + std::to_string(epoch), last);
            last = make_model(std::move(next));
            if (observer) observer(last);
            loss_sum += loss;
            ++batches;
        }
        if (batches == 0) throw FitError("no batch with non-constant targets in epoch " + std::to_string(epoch), last);
        trace.push_back(loss_sum / static_cast<double>(batches));
        last.loss_trace = trace;
    }
    return last;
}

namespace {

// Test-set pair gather shared by score and permutation importance.
struct TestPairs {
    std::vector<std::size_t> stimuli;       // sorted test indices
    std::vector<std::size_t> condensed;     // pair index into full matrices
    std::vector<std::pair<std::size_t, std::size_t>> local;  // positions in `stimuli`
    Eigen::MatrixXd D;                       // pairs × m
    std::vector<double> neural;
};

TestPairs gather(const MetricModel& model, const FeatureDistanceTensor& features, const PairwiseDistanceMatrix& neural,
                 std::span<const std::size_t> test_indices, bool allow_overlap) {
    const std::size_t n = neural.size();
    if (features.size() != n) throw ValidationError("feature and neural distance matrices differ in size");
    if (features.features() != model.features()) throw ValidationError("model and feature tensor differ in feature count");
    TestPairs t;
    t.stimuli = sorted_unique(test_indices);
    if (!t.stimuli.empty() && t.stimuli.back() >= n) throw ValidationError("test index out of range");
    if (!allow_overlap) {
        std::vector<std::size_t> both;
        std::set_intersection(t.stimuli.begin(), t.stimuli.end(), model.train_indices.begin(),
                              model.train_indices.end(), std::back_inserter(both));
        if (!both.empty())
            throw ValidationError("test stimulus " + std::to_string(both.front()) + " was used for training");
    }
    const std::size_t P = pair_count(t.stimuli.size());
    if (P < 2) throw UndefinedCorrelation("fewer than 2 test pairs");
    t.condensed.reserve(P);
    t.local.reserve(P);
    for (std::size_t a = 0; a < t.stimuli.size(); ++a)
        for (std::size_t b = a + 1; b < t.stimuli.size(); ++b) {
            t.condensed.push_back(pair_index(n, t.stimuli[a], t.stimuli[b]));
            t.local.emplace_back(a, b);
        }
    const auto m = static_cast<Eigen::Index>(features.features());
    t.D.resize(static_cast<Eigen::Index>(P), m);
    t.neural.resize(P);
    for (std::size_t p = 0; p < P; ++p) {
        for (Eigen::Index k = 0; k < m; ++k)
            t.D(static_cast<Eigen::Index>(p), k) = features.matrices[static_cast<std::size_t>(k)].condensed()[t.condensed[p]];
        t.neural[p] = neural.condensed()[t.condensed[p]];
    }
    return t;
}

}  // namespace

double score(const MetricModel& model, const FeatureDistanceTensor& features, const PairwiseDistanceMatrix& neural,
             std::span<const std::size_t> test_indices, bool allow_training_overlap) {
    const auto t = gather(model, features, neural, test_indices, allow_training_overlap);
    const Eigen::MatrixXd DL = t.D * model.cholesky_factor();
    std::vector<double> pred(t.neural.size());
    for (std::size_t p = 0; p < pred.size(); ++p) pred[p] = DL.row(static_cast<Eigen::Index>(p)).squaredNorm();
    return spearman(pred, t.neural);
}

ImportanceResult permutation_importance(const MetricModel& model, const FeatureDistanceTensor& features,
                                        const PairwiseDistanceMatrix& neural, std::span<const std::size_t> test_indices,
                                        const ImportanceOptions& options) {
    if (options.repeats < 1) throw ValidationError("permutation repeats must be >= 1");
    const auto t = gather(model, features, neural, test_indices, options.allow_training_overlap);
    const Eigen::MatrixXd W = model.metric();
    const std::size_t P = t.neural.size();
    const std::size_t m = model.features();
    const std::size_t ns = t.stimuli.size();
    const std::size_t n = neural.size();

    // Squared predictions and S = D W, so one permuted column updates p in O(1) per pair.
    const Eigen::MatrixXd S = t.D * W;
    std::vector<double> pred(P);
    for (std::size_t p = 0; p < P; ++p) pred[p] = S.row(static_cast<Eigen::Index>(p)).dot(t.D.row(static_cast<Eigen::Index>(p)));
    const auto neural_ranks = hard_rank(t.neural);
    const auto rank_corr = [&](const std::vector<double>& v) { return pearson(hard_rank(v), neural_ranks); };
    const double base = rank_corr(pred);

    ImportanceResult r;
    r.features = features.names;
    r.score = base;
    r.repeats = options.repeats;
    r.seed = options.seed;
    r.config = model.config;
    r.importance.assign(m, 0.0);

    const auto permuted_pair = [&](const std::vector<std::size_t>& perm, std::size_t p) {
        auto [a, b] = t.local[p];
        std::size_t i = t.stimuli[perm[a]], j = t.stimuli[perm[b]];
        if (i > j) std::swap(i, j);
        return pair_index(n, i, j);
    };
    // Score of a permuted model; an undefined correlation means the permutation erased all signal.
    const auto permuted_score = [&](const std::vector<double>& v) {
        try {
            return rank_corr(v);
        } catch (const UndefinedCorrelation&) {
            return 0.0;
        }
    };

    Rng rng(options.seed);
    std::vector<double> alt(P);
    for (std::size_t k = 0; k < m; ++k) {
        const auto ki = static_cast<Eigen::Index>(k);
        const auto& col = features.matrices[k].condensed();
        double drop = 0.0;
        for (std::size_t rep = 0; rep < options.repeats; ++rep) {
            const auto perm = rng.permutation(ns);
            for (std::size_t p = 0; p < P; ++p) {
                const auto pi = static_cast<Eigen::Index>(p);
                const double d = t.D(pi, ki);
                const double dp = col[permuted_pair(perm, p)];
                const double cross = S(pi, ki) - W(ki, ki) * d;
                alt[p] = pred[p] + 2.0 * (dp - d) * cross + W(ki, ki) * (dp * dp - d * d);
            }
            drop += base - permuted_score(alt);
        }
        r.importance[k] = drop / static_cast<double>(options.repeats);
    }

    if (options.with_interactions) {
        for (std::size_t k = 0; k < m; ++k)
            for (std::size_t l = k + 1; l < m; ++l) {
                const auto ki = static_cast<Eigen::Index>(k), li = static_cast<Eigen::Index>(l);
                const auto& ck = features.matrices[k].condensed();
                const auto& cl = features.matrices[l].condensed();
                double drop = 0.0;
                for (std::size_t rep = 0; rep < options.repeats; ++rep) {
                    const auto perm = rng.permutation(ns);
                    for (std::size_t p = 0; p < P; ++p) {
                        const auto pi = static_cast<Eigen::Index>(p);
                        const std::size_t q = permuted_pair(perm, p);
                        const double prod = t.D(pi, ki) * t.D(pi, li);
                        alt[p] = pred[p] + 2.0 * W(ki, li) * (ck[q] * cl[q] - prod);
                    }
                    drop += base - permuted_score(alt);
                }
                r.interaction_pairs.emplace_back(k, l);
                r.interaction_importance.push_back(drop / static_cast<double>(options.repeats));
            }
    }
    return r;
}

io::json to_json(const ImportanceResult& r) {
    io::json j;
    j["model_id"] = r.model_id;
    j["layer"] = r.layer;
    j["fold"] = r.fold;
    j["score"] = r.score;
    io::json fi = io::json::array();
    for (std::size_t k = 0; k < r.features.size(); ++k) fi.push_back({{"feature", r.features[k]}, {"fi", r.importance[k]}});
    j["importance"] = fi;
    if (!r.interaction_pairs.empty()) {
        io::json inter = io::json::array();
        for (std::size_t q = 0; q < r.interaction_pairs.size(); ++q)
            inter.push_back({{"features", {r.features[r.interaction_pairs[q].first], r.features[r.interaction_pairs[q].second]}},
                             {"fi", r.interaction_importance[q]}});
        j["interactions"] = inter;
    }
    j["repeats"] = r.repeats;
    j["seed"] = r.seed;
    j["config"] = to_json(r.config);
    return j;
}

ImportanceResult importance_from_json(const io::json& j) {
    ImportanceResult r;
    try {
        r.model_id = j.at("model_id").get<std::string>();
        r.layer = j.at("layer").get<std::size_t>();
        r.fold = j.at("fold").get<std::size_t>();
        r.score = j.at("score").get<double>();
        for (const auto& e : j.at("importance")) {
            r.features.push_back(e.at("feature").get<std::string>());
            r.importance.push_back(e.at("fi").get<double>());
        }
        if (j.contains("interactions"))
            for (const auto& e : j.at("interactions")) {
                const auto names = e.at("features").get<std::vector<std::string>>();
                const auto pos = [&](const std::string& s) {
                    auto it = std::find(r.features.begin(), r.features.end(), s);
                    if (it == r.features.end()) throw FormatError("interaction names unknown feature '" + s + "'");
                    return static_cast<std::size_t>(it - r.features.begin());
                };
                r.interaction_pairs.emplace_back(pos(names.at(0)), pos(names.at(1)));
                r.interaction_importance.push_back(e.at("fi").get<double>());
            }
        r.repeats = j.at("repeats").get<std::size_t>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.config = train_config_from_json(j.at("config"));
    } catch (const io::json::exception& e) {
        throw FormatError(std::string("malformed importance result: ") + e.what());
    }
    return r;
}

CrossValidationPlan CrossValidationPlan::make(std::size_t n, std::size_t fold_count, std::uint64_t seed) {
    if (fold_count < 2 || fold_count > n)
        throw ValidationError("fold_count must be in [2, n] (got " + std::to_string(fold_count) + " for n = " +
                              std::to_string(n) + ")");
    CrossValidationPlan plan;
    plan.fold_count = fold_count;
    plan.seed = seed;
    Rng rng(seed);
    const auto order = rng.permutation(n);
    std::size_t start = 0;
    for (std::size_t f = 0; f < fold_count; ++f) {
        const std::size_t len = n / fold_count + (f < n % fold_count ? 1 : 0);
        std::vector<std::size_t> test(order.begin() + static_cast<std::ptrdiff_t>(start),
                                      order.begin() + static_cast<std::ptrdiff_t>(start + len));
        std::sort(test.begin(), test.end());
        std::vector<std::size_t> train;
        train.reserve(n - len);
        std::size_t t = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (t < test.size() && test[t] == i)
                ++t;
            else
                train.push_back(i);
        }
        plan.test.push_back(std::move(test));
        plan.train.push_back(std::move(train));
        start += len;
    }
    return plan;
}

ImportanceResult run_fold(const FeatureDistanceTensor& features, const PairwiseDistanceMatrix& neural,
                          const CrossValidationPlan& plan, std::size_t fold, const TrainConfig& config,
                          const CvOptions& options) {
    if (fold >= plan.fold_count) throw ValidationError("fold index out of range");
    TrainConfig fold_config = config;
    fold_config.seed = derive_seed(config.seed, fold, 1);
    const auto model = fit(features, neural, plan.train[fold], fold_config);
    ImportanceOptions io;
    io.repeats = options.repeats;
    io.seed = derive_seed(config.seed, fold, 2);
    io.with_interactions = options.with_interactions;
    auto r = permutation_importance(model, features, neural, plan.test[fold], io);
    r.fold = fold;
    r.config = config;
    return r;
}

std::vector<ImportanceResult> run_cv(const FeatureDistanceTensor& features, const PairwiseDistanceMatrix& neural,
                                     const CrossValidationPlan& plan, const TrainConfig& config,
                                     const CvOptions& options) {
    std::vector<ImportanceResult> out(plan.fold_count);
    std::vector<std::exception_ptr> errors(plan.fold_count);
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t f = 0; f < static_cast<std::ptrdiff_t>(plan.fold_count); ++f) {
        try {
            out[static_cast<std::size_t>(f)] = run_fold(features, neural, plan, static_cast<std::size_t>(f), config, options);
        } catch (...) {
            errors[static_cast<std::size_t>(f)] = std::current_exception();
        }
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

}  // namespace mlem
