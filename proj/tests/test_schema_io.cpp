#include <filesystem>

#include "doctest.h"
#include "mlem/error.hpp"
#include "mlem/io.hpp"
#include "mlem/schema.hpp"
#include "oracles.hpp"

using namespace mlem;
namespace fs = std::filesystem;

TEST_SUITE("schema") {
    TEST_CASE("feature schema rejects bad definitions") {
        CHECK_THROWS_AS(FeatureSchema({{"a", FeatureKind::categorical, {"x"}, {}}}), ValidationError);
        CHECK_THROWS_AS(FeatureSchema({{"a", FeatureKind::ordinal, {}, {}}, {"a", FeatureKind::ordinal, {}, {}}}),
                        ValidationError);
        CHECK_THROWS_AS(FeatureSchema({{"", FeatureKind::ordinal, {}, {}}}), ValidationError);
        FeatureSchema ok({{"a", FeatureKind::categorical, {"x", "y"}, {}}, {"b", FeatureKind::ordinal, {}, {}}});
        CHECK(ok.size() == 2);
        CHECK(ok.index_of("b") == 1);
        CHECK_FALSE(ok.index_of("c"));
    }

    TEST_CASE("fingerprint depends on order") {
        FeatureSpec a{"a", FeatureKind::ordinal, {}, {}}, b{"b", FeatureKind::ordinal, {}, {}};
        CHECK(FeatureSchema({a, b}).fingerprint() != FeatureSchema({b, a}).fingerprint());
        CHECK(FeatureSchema({a, b}).fingerprint() == FeatureSchema({a, b}).fingerprint());
    }

    TEST_CASE("stimulus validation reports violations") {
        auto set = oracle::categorical_stimuli(5, {2}, 1);
        CHECK(validate_stimulus_set(set).empty());
        set.annotations[2][0] = std::string("bogus");
        const auto v = validate_stimulus_set(set);
        REQUIRE(v.size() == 1);
        CHECK(v[0].row == 2);
        CHECK_THROWS_AS(require_valid(set), ValidationError);

        auto one = oracle::categorical_stimuli(1, {2}, 1);
        CHECK_FALSE(validate_stimulus_set(one).empty());
    }

    TEST_CASE("alignment checks rows and layers") {
        const auto set = oracle::categorical_stimuli(4, {2}, 1);
        EmbeddingsContainer c;
        c.model_id = "m";
        CHECK_THROWS_AS(align(c, set), AlignmentError);
        c.layers.push_back(RowMatrix::Zero(3, 2));
        try {
            align(c, set);
            FAIL("expected AlignmentError");
        } catch (const AlignmentError& e) {
            CHECK(e.expected() == 4);
            CHECK(e.actual() == 3);
        }
        c.layers[0] = RowMatrix::Zero(4, 2);
        c.layers[0](1, 1) = std::nan("");
        CHECK_THROWS_AS(align(c, set), ValidationError);
        c.layers[0](1, 1) = 0.0;
        CHECK(align(c, set).layer_count() == 1);
    }

    TEST_CASE("pair index enumerates the upper triangle") {
        std::size_t p = 0;
        for (std::size_t i = 0; i < 6; ++i)
            for (std::size_t j = i + 1; j < 6; ++j) CHECK(pair_index(6, i, j) == p++);
        CHECK(pair_count(6) == p);
    }

    TEST_CASE("distance matrix invariants") {
        CHECK_THROWS_AS(PairwiseDistanceMatrix(3, {1, 2}), ValidationError);
        CHECK_THROWS_AS(PairwiseDistanceMatrix(3, {1, -2, 3}), ValidationError);
        PairwiseDistanceMatrix d(3, {1, 2, 3});
        CHECK(d(0, 2) == 2);
        CHECK(d(2, 1) == 3);
        CHECK(d(1, 1) == 0);
        CHECK(d.dense() == d.dense().transpose());
    }

    TEST_CASE("model properties") {
        CHECK(parse_architecture("SSM") == ArchitectureClass::ssm);
        CHECK_THROWS_AS(parse_architecture("MLP"), ValidationError);
        CHECK(format_iso_date(parse_iso_date("2023-02-28")) == "2023-02-28");
        CHECK_THROWS(parse_iso_date("2023-02-30"));
        ModelPropertiesRecord r = oracle::meta_models()[0];
        CHECK_NOTHROW(validate(r));
        r.width = 0;
        CHECK_THROWS_AS(validate(r), ValidationError);
        CHECK(ModelPropertiesRecord{.release_date = parse_iso_date("1970-01-11")}.release_days() == 10);
    }
}

TEST_SUITE("io") {
    TEST_CASE("doubles round-trip") {
        mlem::Rng rng(1);
        for (int i = 0; i < 1000; ++i) {
            const double v = rng.normal() * std::pow(10.0, static_cast<double>(rng.below(20)) - 10.0);
            CHECK(io::parse_double(io::format_double(v)) == v);
        }
        CHECK_THROWS_AS(io::parse_double("1.5x"), FormatError);
    }

    TEST_CASE("container round-trip in both precisions") {
        mlem::Rng rng(2);
        EmbeddingsContainer c;
        c.model_id = "toy";
        c.dataset_fingerprint = "abc";
        c.metadata["family"] = "toys";
        c.layers.push_back(oracle::random_rows(rng, 4, 3));
        c.layers.push_back(oracle::random_rows(rng, 4, 5));
        const auto d64 = io::decode_container(io::encode_container(c, io::StoredPrecision::float64));
        CHECK(d64.layers[1] == c.layers[1]);
        CHECK(d64.metadata.at("family") == "toys");
        CHECK(d64.dataset_fingerprint == "abc");
        const auto d32 = io::decode_container(io::encode_container(c));
        CHECK(d32.layers[0].cast<float>().cast<double>() == c.layers[0].cast<float>().cast<double>());
        CHECK(d32.layers[1].cols() == 5);
    }

    TEST_CASE("container byte layout") {
        EmbeddingsContainer c;
        c.model_id = "m";
        c.layers.push_back(RowMatrix::Constant(1, 1, 1.0));
        const auto bytes = io::encode_container(c);
        CHECK(bytes.substr(0, 4) == "MLEM");
        CHECK(static_cast<unsigned char>(bytes[4]) == 1);
        std::uint64_t hlen = 0;
        for (int i = 0; i < 8; ++i) hlen |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[8 + i])) << (8 * i);
        const auto header = io::json::parse(bytes.substr(16, hlen));
        CHECK(header["n"] == 1);
        CHECK(header["layer_count"] == 1);
        CHECK(header["dtype"] == "float32");
        CHECK(bytes.size() == 16 + hlen + 4);
        CHECK(bytes.substr(16 + hlen) == std::string("\x00\x00\x80\x3f", 4));
    }

    TEST_CASE("corrupted containers are rejected") {
        EmbeddingsContainer c;
        c.model_id = "m";
        c.layers.push_back(RowMatrix::Zero(2, 2));
        auto bytes = io::encode_container(c);
        auto bad = bytes;
        bad[0] = 'X';
        CHECK_THROWS_AS(io::decode_container(bad), FormatError);
        CHECK_THROWS_AS(io::decode_container(bytes.substr(0, bytes.size() - 1)), FormatError);
        CHECK_THROWS_AS(io::decode_container("ML"), FormatError);
    }

    TEST_CASE("stimulus set and schema files round-trip") {
        const auto set = oracle::categorical_stimuli(10, {2, 3}, 4);
        const auto dir = fs::temp_directory_path() / "mlem-test-io";
        fs::remove_all(dir);
        io::write_stimulus_set(dir / "s.tsv", dir / "schema.json", set);
        const auto back = io::read_stimulus_set(dir / "s.tsv", dir / "schema.json");
        CHECK(back.sentences == set.sentences);
        CHECK(back.annotations == set.annotations);
        CHECK(back.schema == set.schema);
        CHECK(io::dataset_fingerprint(back) == io::dataset_fingerprint(set));
        CHECK_THROWS_AS(io::read_file(dir / "missing"), IoError);
        fs::remove_all(dir);
    }

    TEST_CASE("properties table round-trip") {
        const auto models = oracle::meta_models();
        const auto back = io::parse_properties_tsv(io::properties_tsv(models));
        REQUIRE(back.size() == models.size());
        CHECK(back[5].model_id == models[5].model_id);
        CHECK(back[5].release_date == models[5].release_date);
        CHECK(back[5].training_tokens == models[5].training_tokens);
        CHECK(back[7].architecture == models[7].architecture);
        CHECK_THROWS_AS(io::parse_properties_tsv("model_id\tfamily\nx\ty\n"), FormatError);
    }

    TEST_CASE("distance cache and matrix CSV round-trip") {
        PairwiseDistanceMatrix d(4, {0.1, 0.2, 0.3, 1.0 / 3.0, 0.5, 0.6});
        const auto c = io::decode_distance_cache(io::encode_distance_cache(d, "layer3", 2.5));
        CHECK(c.matrix == d);
        CHECK(c.name == "layer3");
        CHECK(c.normalization == 2.5);

        const auto m = io::parse_matrix_csv(io::matrix_csv({"a", "b"}, {{0.0, std::nullopt}, {1.0 / 3.0, 0.0}}));
        CHECK(m.labels == std::vector<std::string>{"a", "b"});
        CHECK_FALSE(m.rows[0][1]);
        CHECK(*m.rows[1][0] == 1.0 / 3.0);
    }
}
