#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "doctest.h"
#include "mlem/distances.hpp"
#include "mlem/error.hpp"
#include "mlem/metric_model.hpp"
#include "oracles.hpp"

using namespace mlem;

namespace {

struct Data {
    StimulusSet set;
    FeatureDistanceTensor features;
    PairwiseDistanceMatrix neural;
};

Data planted(std::vector<double> w, std::size_t n = 120, std::uint64_t seed = 1) {
    Data d;
    d.set = oracle::categorical_stimuli(n, std::vector<std::size_t>(w.size(), 3), seed);
    d.features = feature_distances(d.set);
    d.neural = neural_distances(oracle::planted_embeddings(d.set, w));
    return d;
}

std::vector<std::size_t> range(std::size_t a, std::size_t b) {
    std::vector<std::size_t> v(b - a);
    std::iota(v.begin(), v.end(), a);
    return v;
}

std::vector<double> mean_importance(const std::vector<ImportanceResult>& rs) {
    std::vector<double> m(rs.front().importance.size(), 0.0);
    for (const auto& r : rs)
        for (std::size_t k = 0; k < m.size(); ++k) m[k] += r.importance[k] / static_cast<double>(rs.size());
    return m;
}

}  // namespace

TEST_SUITE("mlem") {
    TEST_CASE("metric model construction") {
        const MetricModel id(3);
        CHECK(id.metric() == Eigen::MatrixXd::Identity(3, 3));
        Eigen::MatrixXd L = Eigen::MatrixXd::Identity(2, 2);
        L(0, 1) = 0.5;
        CHECK_THROWS_AS(MetricModel{L}, ValidationError);
        L(0, 1) = 0.0;
        L(1, 1) = 0.0;
        CHECK_THROWS_AS(MetricModel{L}, ValidationError);
    }

    TEST_CASE("train config validation and JSON") {
        TrainConfig c;
        CHECK_NOTHROW(validate(c));
        c.batch_pairs = 1;
        CHECK_THROWS_AS(validate(c), ValidationError);
        c = TrainConfig{};
        c.learning_rate = 0;
        CHECK_THROWS_AS(validate(c), ValidationError);
        c = TrainConfig{};
        c.epochs = 7;
        c.optimizer = Optimizer::sgd;
        c.softrank.epsilon = 0.25;
        c.seed = 42;
        const auto back = train_config_from_json(to_json(c));
        CHECK(back.epochs == 7);
        CHECK(back.optimizer == Optimizer::sgd);
        CHECK(back.softrank.epsilon == 0.25);
        CHECK(back.seed == 42);
    }

    TEST_CASE("cross-validation plan partitions the stimuli") {
        const auto plan = CrossValidationPlan::make(100, 5, 3);
        std::vector<int> seen(100, 0);
        for (std::size_t f = 0; f < 5; ++f) {
            CHECK(plan.test[f].size() == 20);
            CHECK(plan.train[f].size() == 80);
            CHECK(std::is_sorted(plan.test[f].begin(), plan.test[f].end()));
            for (auto i : plan.test[f]) ++seen[i];
            std::vector<std::size_t> both;
            std::set_intersection(plan.test[f].begin(), plan.test[f].end(), plan.train[f].begin(), plan.train[f].end(),
                                  std::back_inserter(both));
            CHECK(both.empty());
        }
        for (int s : seen) CHECK(s == 1);
        const auto uneven = CrossValidationPlan::make(23, 5, 3);
        for (const auto& t : uneven.test) CHECK((t.size() == 4 || t.size() == 5));
        CHECK_THROWS_AS(CrossValidationPlan::make(4, 5, 0), ValidationError);
        CHECK_THROWS_AS(CrossValidationPlan::make(10, 1, 0), ValidationError);
    }

    TEST_CASE("fit keeps W SPD after every step") {
        const auto d = planted({1.0, 0.5, 0.25, 0.0});
        TrainConfig cfg;
        cfg.epochs = 5;
        cfg.batch_pairs = 256;
        std::size_t steps = 0;
        double min_eig = 1e300;
        const auto model = fit(d.features, d.neural, range(0, 100), cfg, [&](const MetricModel& m) {
            ++steps;
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m.metric());
            min_eig = std::min(min_eig, es.eigenvalues().minCoeff());
        });
        CHECK(steps > 0);
        CHECK(min_eig > 1e-10);
        CHECK(model.loss_trace.size() == 5);
        CHECK(model.train_indices == range(0, 100));
    }

    TEST_CASE("planted single feature dominates") {
        const auto d = planted({1.0, 0.0, 0.0, 0.0}, 150, 2);
        const auto plan = CrossValidationPlan::make(150, 5, 2);
        TrainConfig cfg;
        cfg.seed = 2;
        const auto rs = run_cv(d.features, d.neural, plan, cfg);
        const auto fi = mean_importance(rs);
        CHECK(fi[0] >= 0.5);
        for (std::size_t k = 1; k < 4; ++k) CHECK(fi[k] <= 0.05);
    }

    TEST_CASE("planted metric with every feature relevant is recovered") {
        const auto d = planted({1.0, 0.5, 0.25, 0.125}, 150, 4);
        const auto plan = CrossValidationPlan::make(150, 5, 4);
        TrainConfig cfg;
        cfg.seed = 4;
        for (const auto& r : run_cv(d.features, d.neural, plan, cfg)) CHECK(r.score >= 0.99);
    }

    TEST_CASE("planted weights: scores, learned diagonal and fold stability") {
        const auto d = planted({1.0, 0.5, 0.25, 0.0}, 200, 3);
        const auto plan = CrossValidationPlan::make(200, 5, 3);
        TrainConfig cfg;
        cfg.seed = 3;
        const auto model = fit(d.features, d.neural, plan.train[0], cfg);
        Eigen::Index argmax;
        model.metric().diagonal().maxCoeff(&argmax);
        CHECK(argmax == 0);
        CHECK(score(model, d.features, d.neural, plan.test[0]) >= 0.95);
        CHECK(score(model, d.features, d.neural, plan.train[0], true) >= 0.95);

        const auto rs = run_cv(d.features, d.neural, plan, cfg);
        const auto fi = mean_importance(rs);
        double var = 0;
        for (const auto& r : rs) var += (r.importance[0] - fi[0]) * (r.importance[0] - fi[0]) / 5.0;
        CHECK(std::sqrt(var) <= 0.1 * fi[0]);
    }

    TEST_CASE("fit and score are rank-invariant in the targets") {
        const auto d = planted({1.0, 0.5, 0.25, 0.0});
        std::vector<double> cubed(d.neural.condensed().begin(), d.neural.condensed().end());
        for (auto& v : cubed) v = v * v * v + 1.0;
        const PairwiseDistanceMatrix transformed(d.neural.size(), cubed);
        TrainConfig cfg;
        cfg.epochs = 5;
        cfg.batch_pairs = 256;
        const auto a = fit(d.features, d.neural, range(0, 90), cfg);
        const auto b = fit(d.features, transformed, range(0, 90), cfg);
        CHECK(a.cholesky_factor() == b.cholesky_factor());
        CHECK(score(a, d.features, d.neural, range(90, 120)) == score(a, d.features, transformed, range(90, 120)));
    }

    TEST_CASE("determinism") {
        const auto d = planted({1.0, 0.5, 0.25, 0.0});
        const auto plan = CrossValidationPlan::make(120, 5, 9);
        TrainConfig cfg;
        cfg.epochs = 10;
        cfg.seed = 9;
        const auto a = run_cv(d.features, d.neural, plan, cfg);
        const auto b = run_cv(d.features, d.neural, plan, cfg);
        for (std::size_t f = 0; f < 5; ++f) {
            CHECK(a[f].importance == b[f].importance);
            CHECK(a[f].score == b[f].score);
            CHECK(to_json(a[f]).dump() == to_json(b[f]).dump());
        }
    }

    TEST_CASE("score guards") {
        const auto d = planted({1.0, 0.5, 0.25, 0.0});
        TrainConfig cfg;
        cfg.epochs = 2;
        cfg.batch_pairs = 256;
        const auto model = fit(d.features, d.neural, range(0, 90), cfg);
        CHECK_THROWS_AS(score(model, d.features, d.neural, range(80, 120)), ValidationError);
        CHECK_THROWS_AS(score(model, d.features, d.neural, range(100, 101)), UndefinedCorrelation);
        CHECK_THROWS_AS(fit(d.features, d.neural, range(0, 1), cfg), ValidationError);
        cfg.batch_pairs = 100000;
        cfg.max_pairs_per_fold = 100000;
        CHECK_THROWS_AS(fit(d.features, d.neural, range(0, 90), cfg), ValidationError);

        auto zero = d.features;
        for (auto& m : zero.matrices) m = PairwiseDistanceMatrix::zeros(m.size());
        CHECK_THROWS_AS(score(MetricModel(4), zero, d.neural, range(0, 20)), UndefinedCorrelation);
    }

    TEST_CASE("permutation importance: unused and constant features") {
        auto set = oracle::categorical_stimuli(80, {3, 3, 3}, 5);
        set.schema = FeatureSchema({set.schema[0], set.schema[1], set.schema[2], {"flat", FeatureKind::ordinal, {}, {}}});
        for (auto& row : set.annotations) row.emplace_back(1.0);
        const auto features = feature_distances(set);
        const auto neural = neural_distances(oracle::planted_embeddings(set, {1.0, 0.5, 0.0}));

        Eigen::MatrixXd L = Eigen::MatrixXd::Identity(4, 4);
        L(2, 2) = 1e-12;
        const MetricModel unused(L);
        ImportanceOptions opts;
        opts.allow_training_overlap = true;
        const auto r = permutation_importance(unused, features, neural, range(0, 80), opts);
        CHECK(std::abs(r.importance[2]) <= 0.01);
        CHECK(r.importance[3] == 0.0);
        CHECK(r.importance[0] > r.importance[1]);
        CHECK(r.repeats == 10);

        opts.with_interactions = true;
        const auto ri = permutation_importance(unused, features, neural, range(0, 80), opts);
        CHECK(ri.interaction_pairs.size() == 6);
        CHECK(ri.interaction_importance.size() == 6);
        CHECK(ri.importance == r.importance);
    }

    TEST_CASE("interaction importance reflects the cross term") {
        const auto d = planted({1.0, 1.0, 0.0}, 90, 6);
        Eigen::MatrixXd L = Eigen::MatrixXd::Identity(3, 3);
        const MetricModel diag(L);
        L(1, 0) = 0.9;
        const MetricModel coupled(L);
        ImportanceOptions opts;
        opts.allow_training_overlap = true;
        opts.with_interactions = true;
        const auto a = permutation_importance(diag, d.features, d.neural, range(0, 90), opts);
        const auto b = permutation_importance(coupled, d.features, d.neural, range(0, 90), opts);
        REQUIRE(a.interaction_pairs[0] == std::pair<std::size_t, std::size_t>{0, 1});
        CHECK(a.interaction_importance[0] == 0.0);
        CHECK(b.interaction_importance[0] > 0.0);
    }

    TEST_CASE("importance ordering is stable across repeat counts") {
        const auto d = planted({1.0, 0.5, 0.25, 0.0}, 150, 8);
        const auto plan = CrossValidationPlan::make(150, 5, 8);
        TrainConfig cfg;
        cfg.seed = 8;
        const auto model = fit(d.features, d.neural, plan.train[0], cfg);
        ImportanceOptions one, ten;
        one.repeats = 1;
        ten.repeats = 10;
        const auto a = permutation_importance(model, d.features, d.neural, plan.test[0], one);
        const auto b = permutation_importance(model, d.features, d.neural, plan.test[0], ten);
        for (std::size_t k = 0; k < 3; ++k) {
            CHECK(a.importance[k] > 0);
            CHECK(b.importance[k] > 0);
        }
        CHECK(a.importance[0] > a.importance[1]);
        CHECK(b.importance[0] > b.importance[1]);
    }

    TEST_CASE("null targets give calibrated scores and importances") {
        double sum_fi = 0, sum_sq = 0, worst_score = 0;
        int count = 0;
        for (std::uint64_t seed = 1; seed <= 8; ++seed) {
            const auto d = planted({1.0, 0.5, 0.25, 0.0}, 200, seed);
            const auto plan = CrossValidationPlan::make(200, 5, seed);
            TrainConfig cfg;
            cfg.seed = seed;
            const auto rs = run_cv(d.features, oracle::shuffled(d.neural, seed + 100), plan, cfg);
            double s = 0;
            for (const auto& r : rs) s += r.score / 5.0;
            worst_score = std::max(worst_score, std::abs(s));
            for (double v : mean_importance(rs)) {
                sum_fi += v;
                sum_sq += v * v;
                ++count;
            }
        }
        CHECK(worst_score <= 0.1);
        CHECK(std::abs(sum_fi / count) <= 0.01);
        CHECK(std::sqrt(sum_sq / count) <= 0.02);
    }

    TEST_CASE("importance result JSON round-trip") {
        const auto d = planted({1.0, 0.5, 0.25});
        ImportanceOptions opts;
        opts.allow_training_overlap = true;
        opts.with_interactions = true;
        auto r = permutation_importance(MetricModel(3), d.features, d.neural, range(0, 60), opts);
        r.model_id = "m";
        r.layer = 4;
        r.fold = 2;
        const auto back = importance_from_json(to_json(r));
        CHECK(back.model_id == "m");
        CHECK(back.layer == 4);
        CHECK(back.fold == 2);
        CHECK(back.importance == r.importance);
        CHECK(back.interaction_pairs == r.interaction_pairs);
        CHECK(back.interaction_importance == r.interaction_importance);
        CHECK(back.score == r.score);
        CHECK(back.features == r.features);
    }
}
