#include "mlem/grammar.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "mlem/error.hpp"
#include "mlem/rng.hpp"

namespace mlem::grammar {

namespace {

const char* kRcType = "Relative Clause type";
const char* kAttachment = "Attachment site";

const char* gender_name(Gender g) { return g == Gender::feminine ? "Feminine" : "Masculine"; }
const char* number_name(bool plural) { return plural ? "Plural" : "Singular"; }

std::vector<std::string> tokenize(const std::string& sentence) {
    std::string s = sentence;
    if (!s.empty() && s.back() == '.') s.pop_back();
    std::vector<std::string> out;
    std::istringstream is(s);
    for (std::string w; is >> w;) {
        std::transform(w.begin(), w.end(), w.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        out.push_back(std::move(w));
    }
    return out;
}

std::string capitalize(std::string s) {
    if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
    return s;
}

void check_slots(const Lexicon& lex) {
    static const char* noun_slots[] = {"subject", "object", "embedded"};
    if (lex.nouns.size() < 3)
        throw GenerationError("lexicon has " + std::to_string(lex.nouns.size()) +
                              " nouns; cannot fill the distinct '" + noun_slots[lex.nouns.size()] + "' noun slot");
    if (lex.verbs.empty()) throw GenerationError("lexicon has no verbs; cannot fill the 'main verb' slot");
    if (lex.verbs.size() < 2)
        throw GenerationError("lexicon has one verb; cannot fill the distinct 'embedded verb' slot");
}

void check_lexicon(const Lexicon& lex) {
    check_slots(lex);
    std::size_t fem = 0, masc = 0;
    std::set<std::string> forms;
    for (const auto& n : lex.nouns) {
        if (n.lemma.empty()) throw GenerationError("noun with empty lemma");
        if (!std::isfinite(n.zipf)) throw GenerationError("noun '" + n.lemma + "' has a non-finite Zipf value");
        (n.gender == Gender::feminine ? fem : masc)++;
        if (!forms.insert(n.lemma).second || !forms.insert(n.plural_form()).second)
            throw GenerationError("noun form of '" + n.lemma + "' is ambiguous");
    }
    if (fem < 2 || masc < 2) throw GenerationError("lexicon needs at least 2 nouns per gender");
    for (const auto& v : lex.verbs)
        if (!forms.insert(v).second || !forms.insert(third_singular(v)).second)
            throw GenerationError("verb form of '" + v + "' is ambiguous");
    if (forms.count(lex.relativizer) || forms.count(lex.determiner))
        throw GenerationError("relativizer or determiner collides with a content word");
}

}  // namespace

Lexicon default_lexicon() {
    // The same five Zipf values in each gender keep gender and frequency uncorrelated.
    Lexicon lex;
    lex.nouns = {
        {"woman", "women", Gender::feminine, 5.82}, {"girl", "", Gender::feminine, 5.38},
        {"mother", "", Gender::feminine, 5.35},     {"sister", "", Gender::feminine, 5.17},
        {"queen", "", Gender::feminine, 4.86},      {"man", "men", Gender::masculine, 5.82},
        {"boy", "", Gender::masculine, 5.38},       {"father", "", Gender::masculine, 5.35},
        {"brother", "", Gender::masculine, 5.17},   {"king", "", Gender::masculine, 4.86},
    };
    lex.verbs = {"see", "like"};
    return lex;
}

Lexicon lexicon_from_json(const io::json& j) {
    try {
        Lexicon lex;
        for (const auto& jn : j.at("nouns")) {
            Noun n;
            n.lemma = jn.at("lemma").get<std::string>();
            n.plural = jn.value("plural", std::string{});
            const auto g = jn.at("gender").get<std::string>();
            if (g == "feminine")
                n.gender = Gender::feminine;
            else if (g == "masculine")
                n.gender = Gender::masculine;
            else
                throw GenerationError("unknown gender '" + g + "'");
            n.zipf = jn.at("zipf").get<double>();
            lex.nouns.push_back(std::move(n));
        }
        lex.verbs = j.at("verbs").get<std::vector<std::string>>();
        lex.relativizer = j.value("relativizer", std::string("who"));
        return lex;
    } catch (const io::json::exception& e) {
        throw FormatError(std::string("malformed lexicon: ") + e.what());
    }
}

io::json lexicon_to_json(const Lexicon& lex) {
    io::json j;
    j["nouns"] = io::json::array();
    for (const auto& n : lex.nouns) {
        io::json jn;
        jn["lemma"] = n.lemma;
        if (!n.plural.empty()) jn["plural"] = n.plural;
        jn["gender"] = n.gender == Gender::feminine ? "feminine" : "masculine";
        jn["zipf"] = n.zipf;
        j["nouns"].push_back(std::move(jn));
    }
    j["verbs"] = lex.verbs;
    j["relativizer"] = lex.relativizer;
    return j;
}

std::string third_singular(const std::string& lemma) {
    static const char* sibilant[] = {"s", "sh", "ch", "x", "z", "o"};
    for (const char* suf : sibilant) {
        const std::string s(suf);
        if (lemma.size() >= s.size() && lemma.compare(lemma.size() - s.size(), s.size(), s) == 0) return lemma + "es";
    }
    return lemma + "s";
}

std::vector<TemplateSpec> templates() {
    return {{AttachmentSite::center_embedded, RcType::subject_relative},
            {AttachmentSite::center_embedded, RcType::object_relative},
            {AttachmentSite::peripheral, RcType::subject_relative},
            {AttachmentSite::peripheral, RcType::object_relative}};
}

std::string realize(const Lexicon& lex, const Instantiation& inst) {
    const auto np = [&](std::size_t noun, bool plural) {
        const auto& n = lex.nouns[noun];
        return lex.determiner + " " + (plural ? n.plural_form() : n.lemma);
    };
    const auto vp = [&](std::size_t verb, bool subject_plural) {
        return subject_plural ? lex.verbs[verb] : third_singular(lex.verbs[verb]);
    };
    const auto& rel = lex.relativizer;
    const std::string subj = np(inst.subject, inst.subject_plural);
    const std::string obj = np(inst.object, inst.object_plural);
    const std::string emb = np(inst.embedded, inst.embedded_plural);
    std::string s;
    if (inst.tmpl.site == AttachmentSite::center_embedded) {
        // The RC modifies the main subject.
        const std::string rc = inst.tmpl.rc == RcType::subject_relative
                                   ? rel + " " + vp(inst.embedded_verb, inst.subject_plural) + " " + emb
                                   : rel + " " + emb + " " + vp(inst.embedded_verb, inst.embedded_plural);
        s = subj + " " + rc + " " + vp(inst.main_verb, inst.subject_plural) + " " + obj;
    } else {
        // The RC modifies the main object.
        const std::string rc = inst.tmpl.rc == RcType::subject_relative
                                   ? rel + " " + vp(inst.embedded_verb, inst.object_plural) + " " + emb
                                   : rel + " " + emb + " " + vp(inst.embedded_verb, inst.embedded_plural);
        s = subj + " " + vp(inst.main_verb, inst.subject_plural) + " " + obj + " " + rc;
    }
    return capitalize(s) + ".";
}

FeatureSchema relative_clause_schema(const Lexicon& lex) {
    double lo = 0.0, hi = 0.0;
    if (!lex.nouns.empty()) {
        lo = hi = lex.nouns.front().zipf;
        for (const auto& n : lex.nouns) {
            lo = std::min(lo, n.zipf);
            hi = std::max(hi, n.zipf);
        }
    }
    const auto cat = [](std::string name, std::vector<std::string> levels) {
        return FeatureSpec{std::move(name), FeatureKind::categorical, std::move(levels), std::nullopt};
    };
    const auto ord = [&](std::string name) {
        return FeatureSpec{std::move(name), FeatureKind::ordinal, {}, std::make_pair(lo, hi)};
    };
    const std::vector<std::string> number{"Singular", "Plural"};
    const std::vector<std::string> gender{"Feminine", "Masculine"};
    return FeatureSchema({
        cat(kRcType, {"Subject relative", "Object relative"}),
        cat(kAttachment, {"Peripheral", "Center-embedded"}),
        cat("Subject number", number),
        cat("Subject gender", gender),
        ord("Subject frequency"),
        cat("Object number", number),
        cat("Object gender", gender),
        ord("Object frequency"),
        cat("Embedded number", number),
        cat("Embedded gender", gender),
        ord("Embedded frequency"),
        cat("Verb lemma", lex.verbs),
    });
}

std::vector<CellValue> annotate(const Lexicon& lex, const Instantiation& inst) {
    const auto& s = lex.nouns[inst.subject];
    const auto& o = lex.nouns[inst.object];
    const auto& e = lex.nouns[inst.embedded];
    return {
        std::string(inst.tmpl.rc == RcType::subject_relative ? "Subject relative" : "Object relative"),
        std::string(inst.tmpl.site == AttachmentSite::peripheral ? "Peripheral" : "Center-embedded"),
        std::string(number_name(inst.subject_plural)),
        std::string(gender_name(s.gender)),
        s.zipf,
        std::string(number_name(inst.object_plural)),
        std::string(gender_name(o.gender)),
        o.zipf,
        std::string(number_name(inst.embedded_plural)),
        std::string(gender_name(e.gender)),
        e.zipf,
        lex.verbs[inst.main_verb],
    };
}

std::optional<std::vector<CellValue>> parse_sentence(const Lexicon& lex, const std::string& sentence) {
    const auto t = tokenize(sentence);
    if (t.size() != 9) return std::nullopt;
    struct NounHit {
        std::size_t index;
        bool plural;
    };
    const auto noun = [&](const std::string& w) -> std::optional<NounHit> {
        for (std::size_t i = 0; i < lex.nouns.size(); ++i) {
            if (w == lex.nouns[i].lemma) return NounHit{i, false};
            if (w == lex.nouns[i].plural_form()) return NounHit{i, true};
        }
        return std::nullopt;
    };
    struct VerbHit {
        std::size_t index;
        bool plural_agreement;
    };
    const auto verb = [&](const std::string& w) -> std::optional<VerbHit> {
        for (std::size_t i = 0; i < lex.verbs.size(); ++i) {
            if (w == lex.verbs[i]) return VerbHit{i, true};
            if (w == third_singular(lex.verbs[i])) return VerbHit{i, false};
        }
        return std::nullopt;
    };
    const auto& det = lex.determiner;
    const auto& rel = lex.relativizer;
    if (t[0] != det) return std::nullopt;

    Instantiation inst{};
    std::optional<NounHit> subj, obj, emb;
    std::optional<VerbHit> main_v, emb_v;
    bool emb_verb_agrees_with_plural = false;
    if (t[2] == rel) {
        inst.tmpl.site = AttachmentSite::center_embedded;
        subj = noun(t[1]);
        if (t[3] == det) {  // who the N V
            inst.tmpl.rc = RcType::object_relative;
            emb = noun(t[4]);
            emb_v = verb(t[5]);
            emb_verb_agrees_with_plural = emb && emb->plural;
        } else {  // who V the N
            inst.tmpl.rc = RcType::subject_relative;
            emb_v = verb(t[3]);
            if (t[4] != det) return std::nullopt;
            emb = noun(t[5]);
            emb_verb_agrees_with_plural = subj && subj->plural;
        }
        main_v = verb(t[6]);
        if (t[7] != det) return std::nullopt;
        obj = noun(t[8]);
    } else if (t[5] == rel) {
        inst.tmpl.site = AttachmentSite::peripheral;
        subj = noun(t[1]);
        main_v = verb(t[2]);
        if (t[3] != det) return std::nullopt;
        obj = noun(t[4]);
        if (t[6] == det) {
            inst.tmpl.rc = RcType::object_relative;
            emb = noun(t[7]);
            emb_v = verb(t[8]);
            emb_verb_agrees_with_plural = emb && emb->plural;
        } else {
            inst.tmpl.rc = RcType::subject_relative;
            emb_v = verb(t[6]);
            if (t[7] != det) return std::nullopt;
            emb = noun(t[8]);
            emb_verb_agrees_with_plural = obj && obj->plural;
        }
    } else {
        return std::nullopt;
    }
    if (!subj || !obj || !emb || !main_v || !emb_v) return std::nullopt;
    if (main_v->plural_agreement != subj->plural) return std::nullopt;
    if (emb_v->plural_agreement != emb_verb_agrees_with_plural) return std::nullopt;
    inst.subject = subj->index;
    inst.subject_plural = subj->plural;
    inst.object = obj->index;
    inst.object_plural = obj->plural;
    inst.embedded = emb->index;
    inst.embedded_plural = emb->plural;
    inst.main_verb = main_v->index;
    inst.embedded_verb = emb_v->index;
    return annotate(lex, inst);
}

std::size_t full_cross_size(const Lexicon& lex) {
    const std::size_t nn = lex.nouns.size(), nv = lex.verbs.size();
    if (nn < 3 || nv < 2) return 0;
    return 4 * nn * (nn - 1) * (nn - 2) * 8 * nv * (nv - 1);
}

namespace {

// Enumerates every instantiation of one design cell in a fixed order.
std::vector<Instantiation> enumerate_cell(const Lexicon& lex, TemplateSpec tmpl) {
    std::vector<Instantiation> out;
    const std::size_t nn = lex.nouns.size(), nv = lex.verbs.size();
    for (std::size_t s = 0; s < nn; ++s)
        for (std::size_t o = 0; o < nn; ++o) {
            if (o == s) continue;
            for (std::size_t e = 0; e < nn; ++e) {
                if (e == s || e == o) continue;
                for (unsigned numbers = 0; numbers < 8; ++numbers)
                    for (std::size_t mv = 0; mv < nv; ++mv)
                        for (std::size_t ev = 0; ev < nv; ++ev) {
                            if (ev == mv) continue;
                            out.push_back({tmpl, s, o, e, (numbers & 4u) != 0, (numbers & 2u) != 0,
                                           (numbers & 1u) != 0, mv, ev});
                        }
            }
        }
    return out;
}

}  // namespace

StimulusSet generate(const Lexicon& lex, const GenerationConfig& config) {
    check_lexicon(lex);
    StimulusSet set;
    set.schema = relative_clause_schema(lex);
    const auto cells = templates();
    for (std::size_t c = 0; c < cells.size(); ++c) {
        auto insts = enumerate_cell(lex, cells[c]);
        if (config.enumeration == Enumeration::sample) {
            if (config.sample_per_cell == 0 || config.sample_per_cell > insts.size())
                throw GenerationError("sample_per_cell must be in [1, " + std::to_string(insts.size()) + "]");
            Rng rng(derive_seed(config.seed, c));
            // Partial Fisher-Yates, then restore enumeration order for readability.
            std::vector<std::size_t> idx(insts.size());
            std::iota(idx.begin(), idx.end(), std::size_t{0});
            for (std::size_t i = 0; i < config.sample_per_cell; ++i)
                std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
            idx.resize(config.sample_per_cell);
            std::sort(idx.begin(), idx.end());
            std::vector<Instantiation> picked;
            picked.reserve(idx.size());
            for (auto i : idx) picked.push_back(insts[i]);
            insts = std::move(picked);
        }
        for (const auto& inst : insts) {
            set.sentences.push_back(realize(lex, inst));
            set.annotations.push_back(annotate(lex, inst));
        }
    }
    return set;
}

double BalanceReport::max_off_diagonal() const {
    double best = 0.0;
    for (std::size_t k = 0; k < correlation.size(); ++k)
        for (std::size_t l = 0; l < correlation.size(); ++l)
            if (k != l && correlation[k][l]) best = std::max(best, std::abs(*correlation[k][l]));
    return best;
}

namespace {

struct Coded {
    std::vector<double> values;
    bool categorical;
    double distance(double a, double b) const { return categorical ? (a == b ? 0.0 : 1.0) : std::abs(a - b); }
};

Coded code_feature(const StimulusSet& set, std::size_t k) {
    Coded c;
    c.categorical = set.schema[k].kind == FeatureKind::categorical;
    c.values.reserve(set.size());
    for (const auto& row : set.annotations) {
        if (c.categorical) {
            const auto& levels = set.schema[k].levels;
            const auto& s = std::get<std::string>(row[k]);
            c.values.push_back(static_cast<double>(std::find(levels.begin(), levels.end(), s) - levels.begin()));
        } else {
            c.values.push_back(std::get<double>(row[k]));
        }
    }
    return c;
}

}  // namespace

BalanceReport balance_report(const StimulusSet& set) {
    require_valid(set);
    const std::size_t m = set.schema.size();
    std::vector<Coded> coded;
    for (std::size_t k = 0; k < m; ++k) coded.push_back(code_feature(set, k));
    const double pairs = static_cast<double>(pair_count(set.size()));

    BalanceReport rep;
    rep.features = set.schema.names();
    rep.correlation.assign(m, std::vector<std::optional<double>>(m));
    // Pair sums only depend on the joint values of the two features, so stimuli are
    // grouped by distinct (value_k, value_l) and pairs are counted per group pair.
    for (std::size_t k = 0; k < m; ++k)
        for (std::size_t l = k; l < m; ++l) {
            std::map<std::pair<double, double>, double> groups;
            for (std::size_t i = 0; i < set.size(); ++i) groups[{coded[k].values[i], coded[l].values[i]}] += 1.0;
            std::vector<std::pair<std::pair<double, double>, double>> g(groups.begin(), groups.end());
            long double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
            for (std::size_t a = 0; a < g.size(); ++a)
                for (std::size_t b = a + 1; b < g.size(); ++b) {
                    const long double w = static_cast<long double>(g[a].second) * g[b].second;
                    const double x = coded[k].distance(g[a].first.first, g[b].first.first);
                    const double y = coded[l].distance(g[a].first.second, g[b].first.second);
                    sx += w * x;
                    sy += w * y;
                    sxx += w * x * x;
                    syy += w * y * y;
                    sxy += w * x * y;
                }
            const long double P = pairs;
            const long double vx = sxx / P - (sx / P) * (sx / P);
            const long double vy = syy / P - (sy / P) * (sy / P);
            const long double cov = sxy / P - (sx / P) * (sy / P);
            constexpr long double tiny = 1e-14L;
            if (vx <= tiny || vy <= tiny) continue;
            const double r = static_cast<double>(cov / std::sqrt(vx * vy));
            rep.correlation[k][l] = rep.correlation[l][k] = k == l ? 1.0 : std::clamp(r, -1.0, 1.0);
        }
    return rep;
}

}  // namespace mlem::grammar
