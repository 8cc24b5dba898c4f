#include <map>
#include <set>

#include "doctest.h"
#include "mlem/distances.hpp"
#include "mlem/error.hpp"
#include "mlem/grammar.hpp"
#include "mlem/softrank.hpp"
#include "oracles.hpp"

using namespace mlem;
using namespace mlem::grammar;

TEST_SUITE("grammar") {
    TEST_CASE("morphology") {
        CHECK(third_singular("see") == "sees");
        CHECK(third_singular("watch") == "watches");
        CHECK(third_singular("kiss") == "kisses");
        CHECK(third_singular("go") == "goes");
        CHECK(Noun{"woman", "women", Gender::feminine, 5.0}.plural_form() == "women");
        CHECK(Noun{"girl", "", Gender::feminine, 5.0}.plural_form() == "girls");
    }

    TEST_CASE("templates realize the four cells") {
        const auto lex = default_lexicon();
        Instantiation inst{{AttachmentSite::center_embedded, RcType::subject_relative}, 0, 5, 1, false, true, false, 0, 1};
        CHECK(realize(lex, inst) == "The woman who likes the girl sees the men.");
        inst.tmpl = {AttachmentSite::center_embedded, RcType::object_relative};
        CHECK(realize(lex, inst) == "The woman who the girl likes sees the men.");
        inst.tmpl = {AttachmentSite::peripheral, RcType::subject_relative};
        CHECK(realize(lex, inst) == "The woman sees the men who like the girl.");
        inst.tmpl = {AttachmentSite::peripheral, RcType::object_relative};
        CHECK(realize(lex, inst) == "The woman sees the men who the girl likes.");
    }

    TEST_CASE("schema has twelve features") {
        const auto schema = relative_clause_schema(default_lexicon());
        CHECK(schema.size() == 12);
        CHECK(schema[0].name == "Relative Clause type");
        CHECK(schema[1].name == "Attachment site");
        CHECK(schema[11].name == "Verb lemma");
    }

    TEST_CASE("every generated sentence parses back to its annotation") {
        const auto lex = default_lexicon();
        const auto set = generate(lex, {Enumeration::sample, 40, 3});
        CHECK(set.size() == 160);
        CHECK(validate_stimulus_set(set).empty());
        for (std::size_t i = 0; i < set.size(); ++i) {
            const auto parsed = parse_sentence(lex, set.sentences[i]);
            REQUIRE(parsed);
            CHECK(*parsed == set.annotations[i]);
        }
        CHECK_FALSE(parse_sentence(lex, "The woman sees."));
    }

    TEST_CASE("full cross size and uniqueness") {
        const auto lex = default_lexicon();
        const auto set = generate(lex);
        CHECK(set.size() == full_cross_size(lex));
        CHECK(set.size() == 4u * 10 * 9 * 8 * 8 * 2);
        std::set<std::string> unique(set.sentences.begin(), set.sentences.end());
        CHECK(unique.size() == set.size());
    }

    TEST_CASE("sample mode is seeded and balanced across cells") {
        const auto lex = default_lexicon();
        const auto a = generate(lex, {Enumeration::sample, 25, 1});
        const auto b = generate(lex, {Enumeration::sample, 25, 1});
        const auto c = generate(lex, {Enumeration::sample, 25, 2});
        CHECK(io::stimulus_tsv(a) == io::stimulus_tsv(b));
        CHECK(io::stimulus_tsv(a) != io::stimulus_tsv(c));
        std::map<std::string, int> cells;
        for (const auto& row : a.annotations) ++cells[std::get<std::string>(row[0]) + std::get<std::string>(row[1])];
        CHECK(cells.size() == 4);
        for (const auto& [k, v] : cells) CHECK(v == 25);
    }

    TEST_CASE("lexicon errors name the slot") {
        auto lex = default_lexicon();
        lex.nouns.resize(2);
        try {
            generate(lex, {Enumeration::sample, 1, 0});
            FAIL("expected GenerationError");
        } catch (const GenerationError& e) {
            CHECK(std::string(e.what()).find("embedded") != std::string::npos);
        }
        lex = default_lexicon();
        lex.verbs = {"see"};
        CHECK_THROWS_AS(generate(lex), GenerationError);
        lex = default_lexicon();
        lex.nouns[1].lemma = "woman";
        CHECK_THROWS_AS(generate(lex), GenerationError);
    }

    TEST_CASE("lexicon JSON round-trip") {
        const auto lex = default_lexicon();
        const auto back = lexicon_from_json(lexicon_to_json(lex));
        CHECK(back.verbs == lex.verbs);
        REQUIRE(back.nouns.size() == lex.nouns.size());
        CHECK(back.nouns[5].plural_form() == lex.nouns[5].plural_form());
        CHECK(back.nouns[3].zipf == lex.nouns[3].zipf);
    }

    TEST_CASE("balance report matches brute-force correlations") {
        const auto set = generate(default_lexicon(), {Enumeration::sample, 30, 9});
        const auto report = balance_report(set);
        const auto t = feature_distances(set);
        REQUIRE(report.features == t.names);
        for (std::size_t a = 0; a < t.features(); ++a)
            for (std::size_t b = 0; b < t.features(); ++b) {
                std::vector<double> x(t.matrices[a].condensed().begin(), t.matrices[a].condensed().end());
                std::vector<double> y(t.matrices[b].condensed().begin(), t.matrices[b].condensed().end());
                if (t.constant[a] || t.constant[b]) {
                    CHECK_FALSE(report.correlation[a][b]);
                    continue;
                }
                REQUIRE(report.correlation[a][b]);
                CHECK(*report.correlation[a][b] == doctest::Approx(oracle::naive_pearson(x, y)).epsilon(1e-10));
            }
    }

    TEST_CASE("full cross is balanced") {
        CHECK(balance_report(generate(default_lexicon())).max_off_diagonal() <= 0.1);
    }
}
