#include "doctest.h"
#include "mlem/error.hpp"
#include "mlem/project.hpp"
#include "oracles.hpp"

using namespace mlem;

TEST_SUITE("project") {
    TEST_CASE("classical MDS recovers Euclidean configurations") {
        Rng rng(1);
        const auto pts = oracle::random_matrix(rng, 6, 3);
        Eigen::MatrixXd d(6, 6);
        for (int i = 0; i < 6; ++i)
            for (int j = 0; j < 6; ++j) d(i, j) = (pts.row(i) - pts.row(j)).norm();
        const auto r = classical_mds(d, 3);
        for (int i = 0; i < 6; ++i)
            for (int j = 0; j < 6; ++j)
                CHECK((r.coordinates.row(i) - r.coordinates.row(j)).norm() == doctest::Approx(d(i, j)).epsilon(1e-9));
        CHECK(r.negative_eigenvalue_mass == doctest::Approx(0.0).scale(1.0).epsilon(1e-9));
        CHECK(r.ids[0] == "0");
        double total = 0;
        for (double v : r.explained_variance_ratio) total += v;
        CHECK(total == doctest::Approx(1.0));
        CHECK_THROWS_AS(classical_mds(d, 6), ValidationError);
        CHECK_THROWS_AS(classical_mds(d, 0), ValidationError);
    }

    TEST_CASE("MDS sign convention and non-Euclidean input") {
        Eigen::MatrixXd d(4, 4);
        d << 0, 1, 1, 3, 1, 0, 1, 1, 1, 1, 0, 1, 3, 1, 1, 0;
        const auto r = classical_mds(d, 2, {"a", "b", "c", "d"});
        CHECK(r.negative_eigenvalue_mass > 0.0);
        for (int c = 0; c < 2; ++c) {
            Eigen::Index arg;
            r.coordinates.col(c).cwiseAbs().maxCoeff(&arg);
            CHECK(r.coordinates(arg, c) > 0);
        }
        const auto p = classical_mds(PairwiseDistanceMatrix(4, {1, 1, 3, 1, 1, 1}), 2);
        CHECK(p.coordinates.isApprox(r.coordinates, 1e-12));
    }

    TEST_CASE("gaussian smoothing") {
        CHECK(gaussian_radius(1.0) == 4);
        CHECK(gaussian_radius(0.3) == 1);
        Eigen::MatrixXd flat = Eigen::MatrixXd::Constant(12, 2, 3.0);
        CHECK(gaussian_smooth(flat, 1.0).isApprox(flat, 1e-14));
        Eigen::MatrixXd impulse = Eigen::MatrixXd::Zero(11, 1);
        impulse(5, 0) = 1.0;
        const auto s = gaussian_smooth(impulse, 1.0);
        CHECK(s.sum() == doctest::Approx(1.0));
        CHECK(s(4, 0) == doctest::Approx(s(6, 0)));
        CHECK(s(5, 0) == doctest::Approx(1.0 / (1.0 + 2 * (std::exp(-0.5) + std::exp(-2.0) + std::exp(-4.5) + std::exp(-8.0)))));
        Eigen::MatrixXd edge = Eigen::MatrixXd::Zero(10, 1);
        edge(0, 0) = 1.0;
        CHECK(gaussian_smooth(edge, 1.0).sum() == doctest::Approx(1.0));
        CHECK_THROWS_AS(gaussian_smooth(flat, 0.0), ValidationError);
    }

    TEST_CASE("PCA over layer signatures") {
        Rng rng(2);
        std::vector<ModelSignature> sigs{oracle::signature_from("long", {oracle::random_matrix(rng, 12, 4)}),
                                         oracle::signature_from("short", {oracle::random_matrix(rng, 5, 4)})};
        const auto r = pca_layers(sigs, 1.0, 2);
        CHECK(r.ids.size() == 17);
        CHECK(r.ids[0] == "long:0");
        CHECK(r.coordinates.rows() == 17);
        CHECK(r.coordinates.cols() == 2);
        CHECK(r.sigma == 1.0);
        REQUIRE(r.warnings.size() == 1);
        CHECK(r.warnings[0].find("short") != std::string::npos);
        CHECK(r.explained_variance_ratio[0] >= r.explained_variance_ratio[1]);
        CHECK(std::abs(r.coordinates.col(0).mean()) < 1e-12);
        CHECK(diagnostics_json(r)["sigma"] == 1.0);

        const auto raw = pca_layers(sigs, std::nullopt, 2);
        CHECK(raw.warnings.empty());
        CHECK_FALSE(raw.sigma);
        CHECK_THROWS_AS(pca_layers(sigs, std::nullopt, 5), ValidationError);
    }

    TEST_CASE("coordinates CSV") {
        Eigen::MatrixXd tri = Eigen::MatrixXd::Ones(3, 3) - Eigen::MatrixXd::Identity(3, 3);
        const auto r = classical_mds(tri, 2, {"x", "y", "z"});
        const auto csv = coordinates_csv(r);
        CHECK(csv.rfind("id,x1,x2\n", 0) == 0);
        CHECK(csv.find("\ny,") != std::string::npos);
    }
}
