#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mlem/io.hpp"
#include "mlem/schema.hpp"

namespace mlem::grammar {

enum class Gender { feminine, masculine };
enum class AttachmentSite { center_embedded, peripheral };
enum class RcType { subject_relative, object_relative };

struct Noun {
    std::string lemma;
    /// Empty means regular "+s" plural.
    std::string plural;
    Gender gender = Gender::feminine;
    double zipf = 0.0;

    std::string plural_form() const { return plural.empty() ? lemma + "s" : plural; }
};

struct Lexicon {
    std::vector<Noun> nouns;
    std::vector<std::string> verbs;
    std::string relativizer = "who";
    std::string determiner = "the";
};

/// Five nouns per gender carrying the five dataset Zipf values, verbs {see, like}.
Lexicon default_lexicon();

Lexicon lexicon_from_json(const io::json& j);
io::json lexicon_to_json(const Lexicon& lex);

/// Present-tense third-person singular via the suffix table (+s, +es after sibilants and -o).
std::string third_singular(const std::string& lemma);

struct TemplateSpec {
    AttachmentSite site;
    RcType rc;
};

/// The four cells of the 2×2 design, in (site, rc) order.
std::vector<TemplateSpec> templates();

enum class Enumeration { full, sample };

struct GenerationConfig {
    Enumeration enumeration = Enumeration::full;
    /// Sentences drawn per design cell in sample mode.
    std::size_t sample_per_cell = 0;
    std::uint64_t seed = 0;
};

/// One fully specified template instantiation.
struct Instantiation {
    TemplateSpec tmpl;
    std::size_t subject, object, embedded;  // noun indices, pairwise distinct
    bool subject_plural, object_plural, embedded_plural;
    std::size_t main_verb, embedded_verb;  // verb indices, distinct
};

std::string realize(const Lexicon& lex, const Instantiation& inst);

/// The 12-feature schema of the relative-clause dataset.
FeatureSchema relative_clause_schema(const Lexicon& lex);

std::vector<CellValue> annotate(const Lexicon& lex, const Instantiation& inst);

/// Recovers the annotation row of a generated sentence; nullopt if it matches no template.
std::optional<std::vector<CellValue>> parse_sentence(const Lexicon& lex, const std::string& sentence);

/// Throws GenerationError naming the first slot the lexicon cannot fill, or an invalid lexicon entry.
StimulusSet generate(const Lexicon& lex, const GenerationConfig& config = {});

/// Number of sentences in the full cross for a lexicon.
std::size_t full_cross_size(const Lexicon& lex);

struct BalanceReport {
    std::vector<std::string> features;
    /// m × m; nullopt where a feature's distance vector has zero variance.
    std::vector<std::vector<std::optional<double>>> correlation;

    /// Largest |r| off the diagonal over defined entries.
    double max_off_diagonal() const;
};

/// Pearson correlation between the upper triangles of every pair of feature-distance matrices.
BalanceReport balance_report(const StimulusSet& set);

}  // namespace mlem::grammar
