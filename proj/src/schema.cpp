#include "mlem/schema.hpp"

#include <charconv>
#include <cmath>
#include <set>
#include <sstream>

#include "mlem/error.hpp"
#include "mlem/hash.hpp"

namespace mlem {

FeatureSchema::FeatureSchema(std::vector<FeatureSpec> features) : features_(std::move(features)) {
    std::set<std::string> seen;
    for (const auto& f : features_) {
        if (f.name.empty()) throw ValidationError("feature name must be non-empty");
        if (!seen.insert(f.name).second) throw ValidationError("duplicate feature name '" + f.name + "'");
        if (f.kind == FeatureKind::categorical) {
            if (f.levels.size() < 2)
                throw ValidationError("categorical feature '" + f.name + "' needs at least 2 levels");
            std::set<std::string> lv(f.levels.begin(), f.levels.end());
            if (lv.size() != f.levels.size())
                throw ValidationError("categorical feature '" + f.name + "' has duplicate levels");
        } else if (f.range) {
            if (!std::isfinite(f.range->first) || !std::isfinite(f.range->second) ||
                f.range->first > f.range->second)
                throw ValidationError("ordinal feature '" + f.name + "' has an invalid range");
        }
    }
}

std::optional<std::size_t> FeatureSchema::index_of(std::string_view name) const {
    for (std::size_t k = 0; k < features_.size(); ++k)
        if (features_[k].name == name) return k;
    return std::nullopt;
}

std::vector<std::string> FeatureSchema::names() const {
    std::vector<std::string> out;
    out.reserve(features_.size());
    for (const auto& f : features_) out.push_back(f.name);
    return out;
}

std::uint64_t FeatureSchema::fingerprint() const {
    std::uint64_t h = fnv1a64("mlem-schema-v1");
    for (const auto& f : features_) {
        h = fnv1a64(f.name, h);
        h = fnv1a64(f.kind == FeatureKind::categorical ? "\x1f" "c" : "\x1f" "o", h);
        for (const auto& l : f.levels) {
            h = fnv1a64("\x1f", h);
            h = fnv1a64(l, h);
        }
        h = fnv1a64("\x1e", h);
    }
    return h;
}

namespace {

std::string describe(const CellValue& v) {
    if (const auto* s = std::get_if<std::string>(&v)) return "'" + *s + "'";
    std::ostringstream os;
    os << std::get<double>(v);
    return os.str();
}

}  // namespace

std::vector<Violation> validate_stimulus_set(const StimulusSet& set) {
    std::vector<Violation> out;
    const std::size_t n = set.sentences.size();
    const std::size_t m = set.schema.size();
    if (n < 2) out.push_back({std::nullopt, "", "n >= 2 required (got " + std::to_string(n) + ")"});
    if (set.annotations.size() != n) {
        out.push_back({std::nullopt, "",
                       "annotation row count " + std::to_string(set.annotations.size()) +
                           " does not match sentence count " + std::to_string(n)});
        return out;
    }
    for (std::size_t i = 0; i < n; ++i) {
        const auto& row = set.annotations[i];
        if (row.size() != m) {
            out.push_back({i, "", "expected " + std::to_string(m) + " feature values, got " + std::to_string(row.size())});
            continue;
        }
        for (std::size_t k = 0; k < m; ++k) {
            const auto& spec = set.schema[k];
            const auto& cell = row[k];
            if (spec.kind == FeatureKind::categorical) {
                const auto* s = std::get_if<std::string>(&cell);
                if (!s) {
                    out.push_back({i, spec.name, "categorical value expected, got " + describe(cell)});
                } else if (std::find(spec.levels.begin(), spec.levels.end(), *s) == spec.levels.end()) {
                    out.push_back({i, spec.name, "unknown level " + describe(cell)});
                }
            } else {
                const auto* d = std::get_if<double>(&cell);
                if (!d || !std::isfinite(*d)) {
                    out.push_back({i, spec.name, "finite numeric value expected, got " + describe(cell)});
                } else if (spec.range && (*d < spec.range->first || *d > spec.range->second)) {
                    out.push_back({i, spec.name, "value " + describe(cell) + " outside declared range"});
                }
            }
        }
    }
    // Duplicate (sentence, annotation) rows. Same annotations with different text are allowed.
    std::map<std::pair<std::string, std::string>, std::size_t> first_seen;
    for (std::size_t i = 0; i < n; ++i) {
        std::string key;
        for (const auto& cell : set.annotations[i]) key += describe(cell) + '\x1f';
        auto [it, inserted] = first_seen.emplace(std::make_pair(set.sentences[i], key), i);
        if (!inserted)
            out.push_back({i, "", "duplicate of row " + std::to_string(it->second)});
    }
    return out;
}

std::string to_string(const Violation& v) {
    std::string s;
    if (v.row) s += "row " + std::to_string(*v.row) + ": ";
    if (!v.feature.empty()) s += "feature '" + v.feature + "': ";
    return s + v.message;
}

void require_valid(const StimulusSet& set) {
    const auto violations = validate_stimulus_set(set);
    if (violations.empty()) return;
    std::string msg = "invalid stimulus set (" + std::to_string(violations.size()) + " violations)";
    for (std::size_t i = 0; i < std::min<std::size_t>(violations.size(), 5); ++i)
        msg += "\n  " + to_string(violations[i]);
    throw ValidationError(msg);
}

AlignedEmbeddings align(const EmbeddingsContainer& container, const StimulusSet& set) {
    if (container.layers.empty()) throw AlignmentError("layer_count >= 1 required", 1, 0);
    const std::size_t n = set.size();
    for (std::size_t l = 0; l < container.layers.size(); ++l) {
        const auto& layer = container.layers[l];
        const auto rows = static_cast<std::size_t>(layer.rows());
        if (rows != n)
            throw AlignmentError("layer " + std::to_string(l) + " of '" + container.model_id + "' has " +
                                     std::to_string(rows) + " rows but the stimulus set has " +
                                     std::to_string(n) + " sentences (expected " + std::to_string(n) +
                                     ", got " + std::to_string(rows) + ")",
                                 n, rows);
        if (!layer.allFinite())
            throw ValidationError("layer " + std::to_string(l) + " of '" + container.model_id +
                                  "' contains non-finite values");
    }
    return AlignedEmbeddings(container, set);
}

PairwiseDistanceMatrix::PairwiseDistanceMatrix(std::size_t n, std::vector<double> condensed)
    : n_(n), condensed_(std::move(condensed)) {
    if (condensed_.size() != pair_count(n))
        throw ValidationError("condensed distance vector has " + std::to_string(condensed_.size()) +
                              " entries, expected " + std::to_string(pair_count(n)));
    for (double v : condensed_)
        if (!(v >= 0.0) || !std::isfinite(v))
            throw ValidationError("distance entries must be finite and non-negative");
}

PairwiseDistanceMatrix PairwiseDistanceMatrix::zeros(std::size_t n) {
    return PairwiseDistanceMatrix(n, std::vector<double>(pair_count(n), 0.0));
}

Eigen::MatrixXd PairwiseDistanceMatrix::dense() const {
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(n_));
    std::size_t p = 0;
    for (std::size_t i = 0; i < n_; ++i)
        for (std::size_t j = i + 1; j < n_; ++j, ++p) {
            d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = condensed_[p];
            d(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = condensed_[p];
        }
    return d;
}

std::string to_string(ArchitectureClass a) {
    switch (a) {
        case ArchitectureClass::transformer: return "Transformer";
        case ArchitectureClass::ssm: return "SSM";
        case ArchitectureClass::rnn: return "RNN";
    }
    return "?";
}

ArchitectureClass parse_architecture(std::string_view s) {
    if (s == "Transformer") return ArchitectureClass::transformer;
    if (s == "SSM") return ArchitectureClass::ssm;
    if (s == "RNN") return ArchitectureClass::rnn;
    throw ValidationError("unknown architecture class '" + std::string(s) + "' (Transformer | SSM | RNN)");
}

std::int64_t ModelPropertiesRecord::release_days() const {
    return std::chrono::sys_days(release_date).time_since_epoch().count();
}

void validate(const ModelPropertiesRecord& r) {
    if (r.model_id.empty()) throw ValidationError("model_id must be non-empty");
    if (r.parameter_count == 0 || r.depth == 0 || r.width == 0 || r.training_tokens == 0)
        throw ValidationError("model '" + r.model_id +
                              "': parameter_count, depth, width and training_tokens must be positive");
    if (!r.release_date.ok()) throw ValidationError("model '" + r.model_id + "': invalid release date");
}

std::chrono::year_month_day parse_iso_date(std::string_view s) {
    int y = 0;
    unsigned mo = 0, d = 0;
    const auto bad = [&] { return ValidationError("invalid ISO-8601 date '" + std::string(s) + "'"); };
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') throw bad();
    if (std::from_chars(s.data(), s.data() + 4, y).ec != std::errc{}) throw bad();
    if (std::from_chars(s.data() + 5, s.data() + 7, mo).ec != std::errc{}) throw bad();
    if (std::from_chars(s.data() + 8, s.data() + 10, d).ec != std::errc{}) throw bad();
    std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{mo}, std::chrono::day{d}};
    if (!ymd.ok()) throw bad();
    return ymd;
}

std::string format_iso_date(std::chrono::year_month_day d) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()), static_cast<unsigned>(d.month()),
                  static_cast<unsigned>(d.day()));
    return buf;
}

}  // namespace mlem
