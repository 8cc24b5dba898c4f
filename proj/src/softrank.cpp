#include "mlem/softrank.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mlem/error.hpp"

namespace mlem {

std::vector<double> hard_rank(std::span<const double> values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i + 1;
        while (j < n && values[order[j]] == values[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1 .. j
        for (std::size_t k = i; k < j; ++k) ranks[order[k]] = avg;
        i = j;
    }
    return ranks;
}

namespace {

// Solution of the projection plus the block partition needed by its Jacobian.
struct Projection {
    std::vector<std::size_t> order;     // descending argsort of the scaled input
    std::vector<std::size_t> block_end; // exclusive end of each PAV block, in sorted positions
    std::vector<double> ranks;
};

Projection project(std::span<const double> values, double epsilon) {
    if (!(epsilon > 0.0)) throw ValidationError("soft-rank regularization must be positive");
    const std::size_t n = values.size();
    Projection pr;
    pr.order.resize(n);
    std::iota(pr.order.begin(), pr.order.end(), std::size_t{0});
    std::stable_sort(pr.order.begin(), pr.order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });

    // Isotonic regression (non-increasing) of y = s - w, with w = (n, n-1, ..., 1).
    std::vector<double> s(n), sums, counts;
    std::vector<std::size_t> ends;
    sums.reserve(n);
    counts.reserve(n);
    ends.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        s[i] = values[pr.order[i]] / epsilon;
        sums.push_back(s[i] - static_cast<double>(n - i));
        counts.push_back(1.0);
        ends.push_back(i + 1);
        while (sums.size() > 1 && sums[sums.size() - 2] / counts[counts.size() - 2] <= sums.back() / counts.back()) {
            sums[sums.size() - 2] += sums.back();
            counts[counts.size() - 2] += counts.back();
            ends[ends.size() - 2] = ends.back();
            sums.pop_back();
            counts.pop_back();
            ends.pop_back();
        }
    }
    pr.ranks.resize(n);
    std::size_t start = 0;
    for (std::size_t b = 0; b < ends.size(); ++b) {
        const double mean = sums[b] / counts[b];
        for (std::size_t i = start; i < ends[b]; ++i) pr.ranks[pr.order[i]] = s[i] - mean;
        start = ends[b];
    }
    pr.block_end = std::move(ends);
    return pr;
}

// (I - block average) applied in sorted coordinates, scaled by 1/ε.
std::vector<double> apply_jacobian(const Projection& pr, std::span<const double> tangent, double epsilon) {
    std::vector<double> out(tangent.size());
    std::size_t start = 0;
    for (std::size_t end : pr.block_end) {
        double mean = 0.0;
        for (std::size_t i = start; i < end; ++i) mean += tangent[pr.order[i]];
        mean /= static_cast<double>(end - start);
        for (std::size_t i = start; i < end; ++i) out[pr.order[i]] = (tangent[pr.order[i]] - mean) / epsilon;
        start = end;
    }
    return out;
}

}  // namespace

std::vector<double> soft_rank(std::span<const double> values, const SoftRankConfig& config) {
    return project(values, config.epsilon).ranks;
}

std::vector<double> soft_rank_jvp(std::span<const double> values, std::span<const double> tangent,
                                  const SoftRankConfig& config) {
    if (tangent.size() != values.size()) throw ValidationError("tangent size does not match input size");
    return apply_jacobian(project(values, config.epsilon), tangent, config.epsilon);
}

double pearson(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    if (n != y.size()) throw UndefinedCorrelation("correlation inputs differ in length");
    if (n < 2) throw UndefinedCorrelation("correlation needs at least 2 observations");
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (!(sxx > 0.0) || !(syy > 0.0)) throw UndefinedCorrelation("correlation of a constant vector is undefined");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double spearman(std::span<const double> x, std::span<const double> y, bool soft, const SoftRankConfig& config) {
    if (x.size() != y.size()) throw UndefinedCorrelation("correlation inputs differ in length");
    if (soft) return pearson(soft_rank(x, config), soft_rank(y, config));
    return pearson(hard_rank(x), hard_rank(y));
}

SoftSpearman soft_spearman(std::span<const double> predictions, std::span<const double> target_ranks,
                           const SoftRankConfig& config) {
    const std::size_t n = predictions.size();
    if (n != target_ranks.size() || n < 2) throw UndefinedCorrelation("soft Spearman needs matching inputs, n >= 2");
    double mean = 0.0;
    for (double p : predictions) mean += p;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double p : predictions) var += (p - mean) * (p - mean);
    var /= static_cast<double>(n);
    if (!(var > 0.0)) throw UndefinedCorrelation("constant predictions");
    const double sd = std::sqrt(var);
    std::vector<double> z(n);
    for (std::size_t i = 0; i < n; ++i) z[i] = (predictions[i] - mean) / sd;

    const auto pr = project(z, config.epsilon);
    const auto& r = pr.ranks;
    double rm = 0.0, tm = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        rm += r[i];
        tm += target_ranks[i];
    }
    rm /= static_cast<double>(n);
    tm /= static_cast<double>(n);
    double srr = 0.0, stt = 0.0, srt = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double a = r[i] - rm, b = target_ranks[i] - tm;
        srr += a * a;
        stt += b * b;
        srt += a * b;
    }
    if (!(srr > 0.0) || !(stt > 0.0)) throw UndefinedCorrelation("constant ranks");
    const double norm = std::sqrt(srr * stt);
    SoftSpearman out;
    out.rho = srt / norm;

    std::vector<double> g_r(n);
    for (std::size_t i = 0; i < n; ++i)
        g_r[i] = (target_ranks[i] - tm) / norm - out.rho * (r[i] - rm) / srr;
    const auto g_z = apply_jacobian(pr, g_r, config.epsilon);

    double gz_mean = 0.0, gzz_mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        gz_mean += g_z[i];
        gzz_mean += g_z[i] * z[i];
    }
    gz_mean /= static_cast<double>(n);
    gzz_mean /= static_cast<double>(n);
    out.gradient.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.gradient[i] = (g_z[i] - gz_mean - z[i] * gzz_mean) / sd;
    return out;
}

}  // namespace mlem
