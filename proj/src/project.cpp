#include "mlem/project.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "mlem/compare.hpp"
#include "mlem/error.hpp"

namespace mlem {

namespace {

// Flip each column so its largest-magnitude entry is positive (first index wins ties).
void normalize_signs(Eigen::MatrixXd& vectors) {
    for (Eigen::Index c = 0; c < vectors.cols(); ++c) {
        Eigen::Index arg = 0;
        for (Eigen::Index r = 1; r < vectors.rows(); ++r)
            if (std::abs(vectors(r, c)) > std::abs(vectors(arg, c))) arg = r;
        if (vectors(arg, c) < 0.0) vectors.col(c) *= -1.0;
    }
}

std::vector<std::string> default_ids(std::size_t n) {
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) ids.push_back(std::to_string(i));
    return ids;
}

}  // namespace

ProjectionResult classical_mds(const Eigen::MatrixXd& D, std::size_t k, std::vector<std::string> ids) {
    const auto n = D.rows();
    if (D.cols() != n) throw ValidationError("distance matrix must be square");
    if (k < 1 || static_cast<Eigen::Index>(k) > n - 1)
        throw ValidationError("MDS dimension k = " + std::to_string(k) + " must be in [1, " + std::to_string(n - 1) + "]");
    if (ids.empty()) ids = default_ids(static_cast<std::size_t>(n));
    if (static_cast<Eigen::Index>(ids.size()) != n) throw ValidationError("id count does not match matrix size");

    const Eigen::MatrixXd D2 = D.array().square().matrix();
    const Eigen::MatrixXd J =
        Eigen::MatrixXd::Identity(n, n) - Eigen::MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n));
    Eigen::MatrixXd B = -0.5 * J * D2 * J;
    B = 0.5 * (B + B.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(B);
    if (es.info() != Eigen::Success) throw Error("MDS eigendecomposition failed");

    // Eigen returns ascending order.
    const Eigen::VectorXd evals = es.eigenvalues().reverse();
    Eigen::MatrixXd evecs = es.eigenvectors().rowwise().reverse();
    ProjectionResult r;
    r.ids = std::move(ids);
    r.method = "classical-mds";
    double positive = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        r.eigenvalues.push_back(evals(i));
        if (evals(i) < 0.0)
            r.negative_eigenvalue_mass += -evals(i);
        else
            positive += evals(i);
    }
    const auto ki = static_cast<Eigen::Index>(k);
    Eigen::MatrixXd top = evecs.leftCols(ki);
    normalize_signs(top);
    r.coordinates.resize(n, ki);
    for (Eigen::Index c = 0; c < ki; ++c) {
        const double lambda = std::max(evals(c), 0.0);
        r.coordinates.col(c) = top.col(c) * std::sqrt(lambda);
        r.explained_variance_ratio.push_back(positive > 0.0 ? lambda / positive : 0.0);
    }
    return r;
}

ProjectionResult classical_mds(const PairwiseDistanceMatrix& distances, std::size_t k, std::vector<std::string> ids) {
    return classical_mds(distances.dense(), k, std::move(ids));
}

std::size_t gaussian_radius(double sigma) { return static_cast<std::size_t>(4.0 * sigma + 0.5); }

Eigen::MatrixXd gaussian_smooth(const Eigen::MatrixXd& x, double sigma) {
    if (!(sigma > 0.0)) throw ValidationError("smoothing sigma must be positive");
    const auto r = static_cast<Eigen::Index>(gaussian_radius(sigma));
    std::vector<double> w(static_cast<std::size_t>(2 * r + 1));
    double sum = 0.0;
    for (Eigen::Index t = -r; t <= r; ++t) {
        const double v = std::exp(-0.5 * static_cast<double>(t * t) / (sigma * sigma));
        w[static_cast<std::size_t>(t + r)] = v;
        sum += v;
    }
    for (auto& v : w) v /= sum;
    const Eigen::Index L = x.rows();
    // Half-sample symmetric extension: d c b a | a b c d | d c b a, period 2L.
    const auto reflect = [L](Eigen::Index i) {
        Eigen::Index p = i % (2 * L);
        if (p < 0) p += 2 * L;
        return p < L ? p : 2 * L - 1 - p;
    };
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(L, x.cols());
    for (Eigen::Index i = 0; i < L; ++i)
        for (Eigen::Index t = -r; t <= r; ++t) out.row(i) += w[static_cast<std::size_t>(t + r)] * x.row(reflect(i + t));
    return out;
}

ProjectionResult pca_layers(const std::vector<ModelSignature>& signatures, std::optional<double> sigma, std::size_t k) {
    require_shared_schema(signatures);
    ProjectionResult r;
    r.method = "pca";
    r.sigma = sigma;
    std::vector<Eigen::MatrixXd> blocks;
    Eigen::Index rows = 0;
    for (const auto& s : signatures) {
        Eigen::MatrixXd x = signature_matrix(s);
        if (sigma) {
            const auto support = static_cast<Eigen::Index>(2 * gaussian_radius(*sigma) + 1);
            if (x.rows() < support)
                r.warnings.push_back("model '" + s.model_id + "' has " + std::to_string(x.rows()) +
                                     " layers, fewer than the filter support " + std::to_string(support) +
                                     "; smoothing skipped");
            else
                x = gaussian_smooth(x, *sigma);
        }
        for (const auto& l : s.layers) r.ids.push_back(s.model_id + ":" + std::to_string(l.layer));
        rows += x.rows();
        blocks.push_back(std::move(x));
    }
    if (blocks.empty()) throw ValidationError("no signatures to project");
    const Eigen::Index m = blocks.front().cols();
    if (k < 1 || static_cast<Eigen::Index>(k) > std::min<Eigen::Index>(m, rows - 1))
        throw ValidationError("PCA dimension k = " + std::to_string(k) + " exceeds the data rank bound " +
                              std::to_string(std::min<Eigen::Index>(m, rows - 1)));
    Eigen::MatrixXd X(rows, m);
    Eigen::Index at = 0;
    for (const auto& b : blocks) {
        X.middleRows(at, b.rows()) = b;
        at += b.rows();
    }
    r.mean = X.colwise().mean();
    const Eigen::MatrixXd Xc = X.rowwise() - r.mean;
    Eigen::MatrixXd C = Xc.transpose() * Xc / static_cast<double>(rows - 1);
    C = 0.5 * (C + C.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C);
    if (es.info() != Eigen::Success) throw Error("PCA eigendecomposition failed");
    const Eigen::VectorXd evals = es.eigenvalues().reverse();
    Eigen::MatrixXd evecs = es.eigenvectors().rowwise().reverse();
    double total = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
        const double v = std::max(evals(i), 0.0);
        r.eigenvalues.push_back(v);
        total += v;
    }
    const auto ki = static_cast<Eigen::Index>(k);
    r.components = evecs.leftCols(ki);
    normalize_signs(r.components);
    r.coordinates = Xc * r.components;
    for (Eigen::Index c = 0; c < ki; ++c) r.explained_variance_ratio.push_back(total > 0.0 ? r.eigenvalues[static_cast<std::size_t>(c)] / total : 0.0);
    return r;
}

std::string coordinates_csv(const ProjectionResult& r) {
    std::string out = "id";
    for (Eigen::Index c = 0; c < r.coordinates.cols(); ++c) out += ",x" + std::to_string(c + 1);
    out += '\n';
    for (Eigen::Index i = 0; i < r.coordinates.rows(); ++i) {
        out += r.ids[static_cast<std::size_t>(i)];
        for (Eigen::Index c = 0; c < r.coordinates.cols(); ++c) out += "," + io::format_double(r.coordinates(i, c));
        out += '\n';
    }
    return out;
}

io::json diagnostics_json(const ProjectionResult& r) {
    io::json j;
    j["method"] = r.method;
    j["k"] = r.coordinates.cols();
    j["eigenvalues"] = r.eigenvalues;
    j["explained_variance_ratio"] = r.explained_variance_ratio;
    if (r.method == "classical-mds") j["negative_eigenvalue_mass"] = r.negative_eigenvalue_mass;
    j["sigma"] = r.sigma ? io::json(*r.sigma) : io::json(nullptr);
    j["warnings"] = r.warnings;
    return j;
}

}  // namespace mlem
