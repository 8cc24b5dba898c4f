#include "mlem/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "mlem/error.hpp"
#include "mlem/hash.hpp"

namespace mlem::io {

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc{}) throw Error("cannot format double");
    return std::string(buf, ptr);
}

double parse_double(std::string_view s) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw FormatError("not a number: '" + std::string(s) + "'");
    return v;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, std::string_view contents) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write '" + tmp.string() + "'");
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw IoError("short write to '" + tmp.string() + "'");
    }
    fs::rename(tmp, path);
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            out.emplace_back(s.substr(start));
            return out;
        }
        out.emplace_back(s.substr(start, pos - start));
        start = pos + 1;
    }
}

namespace {

std::vector<std::string_view> lines_of(std::string_view text) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (start < text.size()) {
        auto pos = text.find('\n', start);
        if (pos == std::string_view::npos) pos = text.size();
        auto line = text.substr(start, pos - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        out.push_back(line);
        start = pos + 1;
    }
    return out;
}

void check_field(std::string_view s) {
    if (s.find_first_of("\t\n\r") != std::string_view::npos)
        throw ValidationError("field contains a tab or newline: '" + std::string(s) + "'");
}

}  // namespace

json schema_to_json(const FeatureSchema& schema) {
    json features = json::array();
    for (const auto& f : schema.features()) {
        json jf;
        jf["name"] = f.name;
        jf["kind"] = f.kind == FeatureKind::categorical ? "categorical" : "ordinal";
        if (f.kind == FeatureKind::categorical) {
            jf["levels"] = f.levels;
        } else if (f.range) {
            jf["levels"] = json::array({f.range->first, f.range->second});
        }
        features.push_back(std::move(jf));
    }
    json j;
    j["features"] = std::move(features);
    j["fingerprint"] = hex64(schema.fingerprint());
    return j;
}

FeatureSchema schema_from_json(const json& j) {
    try {
        std::vector<FeatureSpec> specs;
        for (const auto& jf : j.at("features")) {
            FeatureSpec f;
            f.name = jf.at("name").get<std::string>();
            const auto kind = jf.at("kind").get<std::string>();
            if (kind == "categorical") {
                f.kind = FeatureKind::categorical;
                f.levels = jf.at("levels").get<std::vector<std::string>>();
            } else if (kind == "ordinal") {
                f.kind = FeatureKind::ordinal;
                if (jf.contains("levels")) {
                    const auto r = jf.at("levels").get<std::vector<double>>();
                    if (r.size() != 2) throw FormatError("ordinal feature '" + f.name + "' range must be [lo, hi]");
                    f.range = std::make_pair(r[0], r[1]);
                }
            } else {
                throw FormatError("unknown feature kind '" + kind + "'");
            }
            specs.push_back(std::move(f));
        }
        return FeatureSchema(std::move(specs));
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed schema JSON: ") + e.what());
    }
}

std::string stimulus_tsv(const StimulusSet& set) {
    std::string out = "sentence";
    for (const auto& f : set.schema.features()) {
        check_field(f.name);
        out += '\t';
        out += f.name;
    }
    out += '\n';
    for (std::size_t i = 0; i < set.size(); ++i) {
        check_field(set.sentences[i]);
        out += set.sentences[i];
        for (const auto& cell : set.annotations[i]) {
            out += '\t';
            if (const auto* s = std::get_if<std::string>(&cell)) {
                check_field(*s);
                out += *s;
            } else {
                out += format_double(std::get<double>(cell));
            }
        }
        out += '\n';
    }
    return out;
}

void write_stimulus_set(const fs::path& tsv, const fs::path& schema_json, const StimulusSet& set) {
    write_file(tsv, stimulus_tsv(set));
    write_file(schema_json, schema_to_json(set.schema).dump(2) + "\n");
}

StimulusSet parse_stimulus_tsv(std::string_view tsv, const FeatureSchema& schema) {
    const auto lines = lines_of(tsv);
    if (lines.empty()) throw FormatError("empty stimulus TSV");
    const auto header = split(lines[0], '\t');
    if (header.empty() || header[0] != "sentence") throw FormatError("first TSV column must be 'sentence'");
    if (header.size() != schema.size() + 1) throw FormatError("TSV header does not match schema feature count");
    for (std::size_t k = 0; k < schema.size(); ++k)
        if (header[k + 1] != schema[k].name)
            throw FormatError("TSV column " + std::to_string(k + 2) + " is '" + header[k + 1] + "', schema expects '" +
                              schema[k].name + "'");
    StimulusSet set;
    set.schema = schema;
    for (std::size_t r = 1; r < lines.size(); ++r) {
        if (lines[r].empty()) continue;
        const auto cols = split(lines[r], '\t');
        if (cols.size() != header.size())
            throw FormatError("TSV line " + std::to_string(r + 1) + " has " + std::to_string(cols.size()) +
                              " columns, expected " + std::to_string(header.size()));
        set.sentences.push_back(cols[0]);
        std::vector<CellValue> row;
        row.reserve(schema.size());
        for (std::size_t k = 0; k < schema.size(); ++k) {
            if (schema[k].kind == FeatureKind::ordinal) {
                try {
                    row.emplace_back(parse_double(cols[k + 1]));
                } catch (const FormatError&) {
                    row.emplace_back(cols[k + 1]);  // left for the validator to report
                }
            } else {
                row.emplace_back(cols[k + 1]);
            }
        }
        set.annotations.push_back(std::move(row));
    }
    return set;
}

StimulusSet read_stimulus_set(const fs::path& tsv, const fs::path& schema_json) {
    json j;
    try {
        j = json::parse(read_file(schema_json));
    } catch (const json::exception& e) {
        throw FormatError("cannot parse '" + schema_json.string() + "': " + e.what());
    }
    return parse_stimulus_tsv(read_file(tsv), schema_from_json(j));
}

std::string dataset_fingerprint(const StimulusSet& set) { return hex64(fnv1a64(stimulus_tsv(set))); }

namespace {

template <typename T>
void put_le(std::string& out, T v) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    const U u = std::bit_cast<U>(v);
    for (std::size_t b = 0; b < sizeof(U); ++b) out.push_back(static_cast<char>((u >> (8 * b)) & 0xFF));
}

template <typename T>
T get_le(std::string_view bytes, std::size_t offset) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    U u = 0;
    for (std::size_t b = 0; b < sizeof(U); ++b)
        u |= static_cast<U>(static_cast<unsigned char>(bytes[offset + b])) << (8 * b);
    return std::bit_cast<T>(u);
}

}  // namespace

std::string encode_container(const EmbeddingsContainer& c, StoredPrecision precision) {
    json header;
    header["model_id"] = c.model_id;
    header["n"] = c.rows();
    header["layer_count"] = c.layer_count();
    json dims = json::array();
    for (const auto& l : c.layers) dims.push_back(l.cols());
    header["dims"] = dims;
    header["dtype"] = precision == StoredPrecision::float32 ? "float32" : "float64";
    header["dataset_fingerprint"] = c.dataset_fingerprint;
    header["metadata"] = c.metadata;
    const std::string h = header.dump();

    std::string out = "MLEM";
    put_le<std::uint32_t>(out, kContainerVersion);
    put_le<std::uint64_t>(out, h.size());
    out += h;
    for (const auto& layer : c.layers) {
        for (Eigen::Index i = 0; i < layer.rows(); ++i)
            for (Eigen::Index j = 0; j < layer.cols(); ++j) {
                if (precision == StoredPrecision::float32)
                    put_le<float>(out, static_cast<float>(layer(i, j)));
                else
                    put_le<double>(out, layer(i, j));
            }
    }
    return out;
}

EmbeddingsContainer decode_container(std::string_view bytes) {
    if (bytes.size() < 16 || bytes.substr(0, 4) != "MLEM") throw FormatError("not an embeddings container (bad magic)");
    const auto version = get_le<std::uint32_t>(bytes, 4);
    if (version != kContainerVersion) throw FormatError("unsupported container version " + std::to_string(version));
    const auto hlen = get_le<std::uint64_t>(bytes, 8);
    if (hlen > bytes.size() - 16) throw FormatError("container header length exceeds file size");
    EmbeddingsContainer c;
    std::size_t n = 0;
    std::vector<std::size_t> dims;
    std::size_t width = 4;
    try {
        const auto header = json::parse(bytes.substr(16, hlen));
        c.model_id = header.at("model_id").get<std::string>();
        n = header.at("n").get<std::size_t>();
        const auto layer_count = header.at("layer_count").get<std::size_t>();
        dims = header.at("dims").get<std::vector<std::size_t>>();
        if (dims.size() != layer_count) throw FormatError("container dims length does not match layer_count");
        const auto dtype = header.at("dtype").get<std::string>();
        if (dtype == "float32")
            width = 4;
        else if (dtype == "float64")
            width = 8;
        else
            throw FormatError("unsupported container dtype '" + dtype + "'");
        if (header.contains("dataset_fingerprint") && header["dataset_fingerprint"].is_string())
            c.dataset_fingerprint = header["dataset_fingerprint"].get<std::string>();
        if (header.contains("metadata") && header["metadata"].is_object())
            for (const auto& [k, v] : header["metadata"].items())
                c.metadata[k] = v.is_string() ? v.get<std::string>() : v.dump();
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed container header: ") + e.what());
    }
    std::size_t expected = 0;
    for (auto d : dims) expected += n * d * width;
    std::size_t offset = 16 + hlen;
    if (bytes.size() - offset != expected)
        throw FormatError("container payload is " + std::to_string(bytes.size() - offset) + " bytes, header implies " +
                          std::to_string(expected));
    for (auto d : dims) {
        RowMatrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) {
                m(i, j) = width == 4 ? static_cast<double>(get_le<float>(bytes, offset)) : get_le<double>(bytes, offset);
                offset += width;
            }
        c.layers.push_back(std::move(m));
    }
    return c;
}

void write_container(const fs::path& path, const EmbeddingsContainer& c, StoredPrecision precision) {
    write_file(path, encode_container(c, precision));
}

EmbeddingsContainer read_container(const fs::path& path) { return decode_container(read_file(path)); }

std::vector<ModelPropertiesRecord> parse_properties_tsv(std::string_view tsv) {
    const auto lines = lines_of(tsv);
    if (lines.empty()) throw FormatError("empty model properties table");
    const auto header = split(lines[0], '\t');
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
    for (const char* required : {"model_id", "family", "architecture", "parameter_count", "release_date", "depth",
                                 "width", "training_tokens"})
        if (!col.count(required)) throw FormatError(std::string("model properties table lacks column '") + required + "'");
    const auto to_u64 = [](const std::string& s) {
        std::uint64_t v = 0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || p != s.data() + s.size()) throw FormatError("not a positive integer: '" + s + "'");
        return v;
    };
    std::vector<ModelPropertiesRecord> out;
    for (std::size_t r = 1; r < lines.size(); ++r) {
        if (lines[r].empty()) continue;
        const auto cols = split(lines[r], '\t');
        if (cols.size() != header.size())
            throw FormatError("properties line " + std::to_string(r + 1) + " has the wrong column count");
        ModelPropertiesRecord rec;
        rec.model_id = cols[col["model_id"]];
        rec.family = cols[col["family"]];
        rec.architecture = parse_architecture(cols[col["architecture"]]);
        rec.parameter_count = to_u64(cols[col["parameter_count"]]);
        rec.release_date = parse_iso_date(cols[col["release_date"]]);
        rec.depth = to_u64(cols[col["depth"]]);
        rec.width = to_u64(cols[col["width"]]);
        rec.training_tokens = to_u64(cols[col["training_tokens"]]);
        if (col.count("vocabulary_size")) rec.vocabulary_size = to_u64(cols[col["vocabulary_size"]]);
        validate(rec);
        out.push_back(std::move(rec));
    }
    return out;
}

std::vector<ModelPropertiesRecord> read_properties(const fs::path& path) { return parse_properties_tsv(read_file(path)); }

std::string properties_tsv(const std::vector<ModelPropertiesRecord>& records) {
    std::string out =
        "model_id\tfamily\tarchitecture\tparameter_count\trelease_date\tdepth\twidth\ttraining_tokens\tvocabulary_size\n";
    for (const auto& r : records) {
        out += r.model_id + '\t' + r.family + '\t' + to_string(r.architecture) + '\t' +
               std::to_string(r.parameter_count) + '\t' + format_iso_date(r.release_date) + '\t' +
               std::to_string(r.depth) + '\t' + std::to_string(r.width) + '\t' + std::to_string(r.training_tokens) +
               '\t' + std::to_string(r.vocabulary_size) + '\n';
    }
    return out;
}

std::string encode_distance_cache(const PairwiseDistanceMatrix& d, const std::string& name, double normalization) {
    json header;
    header["n"] = d.size();
    header["name"] = name;
    header["normalization"] = normalization;
    const auto h = header.dump();
    std::string out;
    put_le<std::uint64_t>(out, h.size());
    out += h;
    for (double v : d.condensed()) put_le<double>(out, v);
    return out;
}

CachedDistances decode_distance_cache(std::string_view bytes) {
    if (bytes.size() < 8) throw FormatError("truncated distance cache");
    const auto hlen = get_le<std::uint64_t>(bytes, 0);
    if (hlen > bytes.size() - 8) throw FormatError("distance cache header length exceeds file size");
    CachedDistances out;
    std::size_t n = 0;
    try {
        const auto header = json::parse(bytes.substr(8, hlen));
        n = header.at("n").get<std::size_t>();
        out.name = header.at("name").get<std::string>();
        out.normalization = header.at("normalization").get<double>();
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed distance cache header: ") + e.what());
    }
    const std::size_t offset = 8 + hlen;
    if (bytes.size() - offset != pair_count(n) * 8) throw FormatError("distance cache payload size mismatch");
    std::vector<double> v(pair_count(n));
    for (std::size_t p = 0; p < v.size(); ++p) v[p] = get_le<double>(bytes, offset + 8 * p);
    out.matrix = PairwiseDistanceMatrix(n, std::move(v));
    return out;
}

std::string matrix_csv(const std::vector<std::string>& labels, const std::vector<std::vector<std::optional<double>>>& rows) {
    std::string out = "id";
    for (const auto& l : labels) out += "," + l;
    out += '\n';
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out += labels[i];
        for (const auto& v : rows[i]) out += "," + (v ? format_double(*v) : std::string("NA"));
        out += '\n';
    }
    return out;
}

std::string matrix_csv(const std::vector<std::string>& labels, const Eigen::MatrixXd& m) {
    std::vector<std::vector<std::optional<double>>> rows(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) rows[static_cast<std::size_t>(i)].emplace_back(m(i, j));
    return matrix_csv(labels, rows);
}

LabelledMatrix parse_matrix_csv(std::string_view csv) {
    const auto lines = lines_of(csv);
    if (lines.empty()) throw FormatError("empty matrix CSV");
    LabelledMatrix out;
    auto header = split(lines[0], ',');
    out.labels.assign(header.begin() + 1, header.end());
    for (std::size_t r = 1; r < lines.size(); ++r) {
        if (lines[r].empty()) continue;
        const auto cols = split(lines[r], ',');
        if (cols.size() != header.size()) throw FormatError("matrix CSV row has the wrong column count");
        std::vector<std::optional<double>> row;
        for (std::size_t c = 1; c < cols.size(); ++c)
            row.push_back(cols[c] == "NA" ? std::nullopt : std::optional<double>(parse_double(cols[c])));
        out.rows.push_back(std::move(row));
    }
    if (out.rows.size() != out.labels.size()) throw FormatError("matrix CSV is not square");
    return out;
}

}  // namespace mlem::io
