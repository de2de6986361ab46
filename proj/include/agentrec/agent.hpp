#pragma once
// The action side of an agent: reaction / next-page / interview prompts, their
// parsers, and one agent's page-by-page session against a recommender.

#include <algorithm>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include "agentrec/diagnostics.hpp"
#include "agentrec/llm.hpp"
#include "agentrec/memory.hpp"
#include "agentrec/profiles.hpp"
#include "agentrec/recommenders.hpp"
#include "agentrec/record.hpp"

namespace agentrec {

struct PageItem {
    std::string item_id;
    std::string title;
    double quality = 0.0;
    std::string summary;
};

inline PageItem page_item(const ItemProfile& p) { return {p.item_id, p.title, p.quality, p.summary}; }

// ---------------------------------------------------------------------------
// Prompts
// ---------------------------------------------------------------------------

inline constexpr std::string_view kRoleLine =
    "You excel at role-playing. Picture yourself as a user exploring a movie recommendation system.";
inline constexpr std::string_view kReactionMarker = "## Recommended List ##";
inline constexpr std::string_view kTastesLead = "Beyond that, your movie tastes are: ";
inline constexpr std::string_view kTendencyLead = "And your rating tendency is: ";
inline constexpr std::string_view kActivityLead = "Your activity trait is described as: ";
inline constexpr std::string_view kConformityLead = "Your conformity trait is described as: ";
inline constexpr std::string_view kDiversityLead = "Your diversity trait is described as: ";
inline constexpr std::string_view kMemoryLead = "Relevant context from your memory:";
inline constexpr std::string_view kExitMarker = "Now you are in page ";
inline constexpr std::string_view kInterviewQuestion =
    "Do you feel satisfied with the recommender system? Rate it from 1-10 and give an explanation.";
inline constexpr std::string_view kFeelingsLead = "Your feelings while browsing:";

inline std::string render_page_item(const PageItem& item) {
    return "<- " + item.title + " -> <- History ratings: " + format_fixed(item.quality, 2) + " -> <- Summary: " +
           item.summary + " ->";
}

inline std::string render_tastes(const AgentProfile& p) { return join(p.tastes, "; "); }

inline std::string build_reaction_prompt(const AgentProfile& profile, const std::vector<std::string>& memories,
                                         int page, const std::vector<PageItem>& items) {
    if (items.empty()) throw ArgumentError("reaction prompt needs at least one item");
    std::string p;
    p += std::string(kRoleLine) + "\n";
    p += "You have the following social traits:\n";
    p += std::string(kActivityLead) + std::string(profile.activity_text()) + "\n";
    p += std::string(kConformityLead) + std::string(profile.conformity_text()) + "\n";
    p += std::string(kDiversityLead) + std::string(profile.diversity_text()) + "\n";
    p += "The activity characteristic pertains to the frequency of your movie-watching habits. The conformity "
         "characteristic measures the degree to which your ratings are influenced by historical ratings. The "
         "diversity characteristic gauges your likelihood of watching movies that may not align with your usual "
         "taste.\n";
    p += std::string(kTastesLead) + render_tastes(profile) + ".\n";
    p += std::string(kTendencyLead) + profile.high_rating_tendency + "\n";
    p += std::string(kMemoryLead) + "\n" + render_memories(memories) + "\n";
    p += std::string(kReactionMarker) + "\n";
    p += "PAGE: " + std::to_string(page) + "\n";
    for (const auto& item : items) p += render_page_item(item) + "\n";
    p += "Please respond to all the movies in the ## Recommended List ## and provide explanations.\n";
    p += "Firstly, determine which movies align with your taste and which do not, and provide reasons. You must "
         "respond to all the recommended movies using this format:\n";
    p += "MOVIE: [movie name]; ALIGN: [yes or no]; REASON: [brief reason]\n";
    p += "Secondly, among the movies that align with your tastes, decide the number of movies you want to watch based "
         "on your activity and diversity traits. Use this format:\n";
    p += "NUM: [number of movies you choose to watch]; WATCH: [all movie names you choose to watch]; REASON: [brief "
         "reason];\n";
    p += "Thirdly, assume it's your first time watching the movies you've chosen, and rate them on a scale of 1-5 to "
         "reflect different degrees of liking, considering your feeling and conformity trait. Use this format:\n";
    p += "MOVIE: [movie you choose to watch]; RATING: [integer between 1-5]; FEELING: [aftermath sentence];\n";
    p += "Do not include any additional information or explanations and stay grounded.";
    return p;
}

inline std::string build_exit_prompt(const AgentProfile& profile, int page,
                                     const std::vector<std::string>& satisfaction_memories) {
    if (page < 1) throw ArgumentError("page index must be >= 1");
    std::string p;
    p += std::string(kRoleLine) + "\n";
    p += "You have the following social traits:\n";
    p += std::string(kActivityLead) + std::string(profile.activity_text()) + "\n";
    p += std::string(kExitMarker) + std::to_string(page) +
         ". You may get tired with the increase of the pages you have browsed. (Exceed 2 pages is a little bit "
         "tiring, exceed 3 pages is tiring, exceed 4 pages is very tiring)\n";
    p += std::string(kMemoryLead) + "\n" + render_memories(satisfaction_memories) + "\n";
    p += "Firstly, generate an overall feeling based on your memory, in accordance with your activity trait and your "
         "satisfaction with recommender system.\n";
    p += "If your overall feeling is positive, write:\nPOSITIVE: [reason]\n";
    p += "If it's negative, write:\nNEGATIVE: [reason]\n";
    p += "Next, assess your level of fatigue. You may become tired more easily if you have an inactive activity "
         "trait.\n";
    p += "Now, decide whether to continue browsing or exit the recommendation system based on your overall feeling, "
         "activity trait, and tiredness.\n";
    p += "You will exit the recommender system either you have negative feelings or you are tired, especially if you "
         "have a low activity trait.\n";
    p += "To leave, write:\n[EXIT]; Reason: [brief reason]\n";
    p += "To continue browsing, write:\n[NEXT]; Reason: [brief reason]";
    return p;
}

inline std::string build_interview_prompt(const AgentProfile& profile, const std::vector<std::string>& memories,
                                          const std::vector<std::string>& feelings) {
    std::string p;
    p += "You excel at role-playing. Picture yourself as a user who has just finished exploring a movie "
         "recommendation system.\n";
    p += "You have the following social traits:\n";
    p += std::string(kActivityLead) + std::string(profile.activity_text()) + "\n";
    p += std::string(kConformityLead) + std::string(profile.conformity_text()) + "\n";
    p += std::string(kDiversityLead) + std::string(profile.diversity_text()) + "\n";
    p += std::string(kTastesLead) + render_tastes(profile) + ".\n";
    p += std::string(kMemoryLead) + "\n" + render_memories(memories) + "\n";
    p += std::string(kFeelingsLead) + "\n" + render_memories(feelings) + "\n";
    p += std::string(kInterviewQuestion) + "\n";
    p += "Use this format:\nRating: [integer between 1-10]\nReason: [explanation]";
    return p;
}

// ---------------------------------------------------------------------------
// Title matching
// ---------------------------------------------------------------------------

// Lowercase, unquote, drop a trailing "(yyyy)", collapse whitespace.
inline std::string normalize_title(std::string_view raw) {
    std::string s = to_lower(trim(raw));
    auto strip_ends = [&] {
        bool changed = true;
        while (changed && !s.empty()) {
            changed = false;
            const char f = s.front(), b = s.back();
            if (s.size() >= 2 && ((f == '"' && b == '"') || (f == '\'' && b == '\'') || (f == '[' && b == ']'))) {
                s = trim(std::string_view(s).substr(1, s.size() - 2));
                changed = true;
            }
        }
    };
    strip_ends();
    static const std::regex year(R"(\s*\(\d{4}\)\s*$)");
    s = std::regex_replace(s, year, "");
    std::string out;
    bool space = false;
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            space = !out.empty();
            continue;
        }
        if (space) out += ' ';
        space = false;
        out += c;
    }
    return out;
}

class TitleMatcher {
  public:
    explicit TitleMatcher(const std::vector<PageItem>& items) {
        for (std::size_t i = 0; i < items.size(); ++i) {
            exact_.emplace(to_lower(trim(items[i].title)), i);
            normal_.emplace(normalize_title(items[i].title), i);
        }
    }
    std::optional<std::size_t> match(std::string_view raw) const {
        std::string t = trim(raw);
        while (!t.empty() && (t.back() == ';' || t.back() == '.' || t.back() == ',')) t.pop_back();
        if (auto it = exact_.find(to_lower(trim(t))); it != exact_.end()) return it->second;
        if (auto it = normal_.find(normalize_title(t)); it != normal_.end()) return it->second;
        return std::nullopt;
    }

  private:
    std::multimap<std::string, std::size_t> exact_;
    std::multimap<std::string, std::size_t> normal_;
};

// Splits a WATCH list on commas, re-joining fragments so titles that contain
// commas ("Full Monty, The (1997)") still resolve. Longest match first.
inline std::vector<std::optional<std::size_t>> match_watch_list(std::string_view list, const TitleMatcher& m,
                                                                std::vector<std::string>* unmatched = nullptr) {
    std::string s = trim(list);
    if (s.size() >= 2 && s.front() == '[' && s.back() == ']') s = trim(std::string_view(s).substr(1, s.size() - 2));
    std::vector<std::optional<std::size_t>> out;
    const std::string lower = to_lower(s);
    if (s.empty() || lower == "none" || lower == "n/a" || lower == "nothing") return out;
    std::vector<std::string> tokens;
    for (auto& t : split(s, ",")) tokens.push_back(trim(t));
    std::size_t i = 0;
    while (i < tokens.size()) {
        if (tokens[i].empty()) {
            ++i;
            continue;
        }
        bool found = false;
        for (std::size_t j = tokens.size(); j-- > i;) {
            std::vector<std::string> part(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                          tokens.begin() + static_cast<std::ptrdiff_t>(j + 1));
            if (auto idx = m.match(join(part, ", "))) {
                out.push_back(idx);
                i = j + 1;
                found = true;
                break;
            }
        }
        if (!found) {
            if (unmatched) unmatched->push_back(tokens[i]);
            out.push_back(std::nullopt);
            ++i;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Parsers
// ---------------------------------------------------------------------------

inline PageReaction parse_reaction(std::string_view text, const std::vector<PageItem>& page) {
    static const std::regex align_re(
        R"(^MOVIE:\s*(.+?)\s*;\s*ALIGN:\s*\[?\s*(yes|no)\s*\]?\s*(?:;\s*(?:REASON:\s*)?(.*?))?\s*$)",
        std::regex::icase);
    static const std::regex num_re(
        R"(^NUM:\s*\[?\s*(-?\d+)\s*\]?\s*;\s*WATCH:\s*(.*?)\s*(?:;\s*REASON:\s*(.*?))?;?\s*$)", std::regex::icase);
    static const std::regex rating_re(
        R"(^MOVIE:\s*(.+?)\s*;\s*RATING:\s*\[?\s*(-?\d+)(?:\.\d+)?\s*\]?\s*(?:;\s*(?:FEELING:\s*)?(.*?))?;?\s*$)",
        std::regex::icase);

    const TitleMatcher matcher(page);
    PageReaction out;
    auto& w = out.warnings;
    std::vector<std::optional<ItemAlignment>> align(page.size());
    std::size_t align_lines = 0;
    std::optional<std::string> watch_text;
    int declared = 0;
    struct RawRating {
        std::string title;
        int value;
        std::string feeling;
    };
    std::vector<RawRating> raw_ratings;

    for (const auto& raw : split_lines(text)) {
        const std::string line = strip_decoration(raw);
        std::smatch m;
        if (std::regex_match(line, m, rating_re)) {
            raw_ratings.push_back({m[1].str(), std::stoi(m[2].str()), trim(m[3].str())});
        } else if (std::regex_match(line, m, align_re)) {
            ++align_lines;
            auto idx = matcher.match(m[1].str());
            if (!idx) {
                ++w.hallucinated_titles;
                continue;
            }
            if (!align[*idx]) align[*idx] = ItemAlignment{page[*idx].item_id, to_lower(m[2].str()) == "yes", trim(m[3].str())};
        } else if (!watch_text && std::regex_match(line, m, num_re)) {
            declared = std::stoi(m[1].str());
            watch_text = m[2].str();
        }
    }
    if (align_lines == 0) throw ParseError("reaction has no ALIGN lines");

    for (std::size_t i = 0; i < page.size(); ++i) {
        if (align[i]) {
            out.alignment.push_back(*align[i]);
        } else {
            ++w.missing_items;
            out.alignment.push_back({page[i].item_id, false, ""});
        }
    }
    const auto aligned = out.aligned_set();

    std::vector<std::string> listed;
    if (watch_text) {
        const auto matches = match_watch_list(*watch_text, matcher);
        if (static_cast<std::size_t>(declared) != matches.size()) ++w.num_mismatch;
        for (const auto& idx : matches) {
            if (!idx) {
                ++w.hallucinated_titles;
                continue;
            }
            const auto& id = page[*idx].item_id;
            if (std::find(listed.begin(), listed.end(), id) != listed.end()) continue;
            if (!aligned.count(id)) {
                ++w.unaligned_watch;
                continue;
            }
            listed.push_back(id);
        }
    } else {
        ++w.missing_watch_line;
    }

    std::map<std::string, WatchRating> rated;
    for (const auto& r : raw_ratings) {
        auto idx = matcher.match(r.title);
        if (!idx) {
            ++w.hallucinated_titles;
            continue;
        }
        const auto& id = page[*idx].item_id;
        if (std::find(listed.begin(), listed.end(), id) == listed.end() || rated.count(id)) {
            ++w.dropped_ratings;
            continue;
        }
        int v = r.value;
        if (v < 1 || v > 5) {
            ++w.clamped_ratings;
            v = std::clamp(v, 1, 5);
        }
        rated[id] = {id, v, r.feeling};
    }
    for (const auto& id : listed) {
        auto it = rated.find(id);
        if (it == rated.end()) {
            ++w.unrated_watch;
            continue;
        }
        out.watched.push_back(id);
        out.ratings.push_back(it->second);
    }
    out.declared_num = static_cast<int>(out.watched.size());
    return out;
}

struct ExitParse {
    ExitDecision decision;
    bool polarity_inferred = false;
};

inline ExitParse parse_exit(std::string_view text) {
    const std::string upper = [&] {
        std::string s(text);
        for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        return s;
    }();
    const auto pe = upper.find("[EXIT]");
    const auto pn = upper.find("[NEXT]");
    if (pe == std::string::npos && pn == std::string::npos) throw ParseError("decision has neither [EXIT] nor [NEXT]");
    ExitParse out;
    auto& d = out.decision;
    d.ambiguous = pe != std::string::npos && pn != std::string::npos;
    const auto at = std::min(pe, pn);
    d.verdict = at == pn ? Verdict::next : Verdict::exit;
    std::string rest(text.substr(at + 6));
    rest = rest.substr(0, rest.find('\n'));
    rest = trim(rest);
    if (!rest.empty() && rest.front() == ';') rest = trim(std::string_view(rest).substr(1));
    if (istarts_with(rest, "Reason:")) rest = trim(std::string_view(rest).substr(7));
    d.reason = rest;
    bool found = false;
    for (const auto& raw : split_lines(text)) {
        const std::string line = strip_decoration(raw);
        if (istarts_with(line, "POSITIVE:")) {
            d.polarity = Polarity::positive;
            found = true;
            break;
        }
        if (istarts_with(line, "NEGATIVE:")) {
            d.polarity = Polarity::negative;
            found = true;
            break;
        }
    }
    if (!found) {
        out.polarity_inferred = true;
        d.polarity = d.verdict == Verdict::next ? Polarity::positive : Polarity::negative;
    }
    return out;
}

inline InterviewResult parse_interview(std::string_view text) {
    static const std::regex int_re(R"(^\s*\[?\s*(-?\d+))");
    const auto lines = split_lines(text);
    std::optional<int> score;
    std::string reason;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::string line = strip_decoration(lines[i]);
        if (!score && istarts_with(line, "Rating:")) {
            std::string value = trim(std::string_view(line).substr(7));
            for (std::size_t j = i + 1; value.empty() && j < lines.size(); ++j) value = strip_decoration(lines[j]);
            std::smatch m;
            if (!std::regex_search(value, m, int_re)) throw ParseError("Rating line has no integer");
            score = std::stoi(m[1].str());
        } else if (reason.empty() && istarts_with(line, "Reason:")) {
            reason = trim(std::string_view(line).substr(7));
            for (std::size_t j = i + 1; j < lines.size(); ++j) {
                const std::string more = strip_decoration(lines[j]);
                if (more.empty()) continue;
                reason += (reason.empty() ? "" : " ") + more;
            }
        }
    }
    if (!score) throw ParseError("interview has no Rating line");
    InterviewResult r;
    r.score = std::clamp(*score, 1, 10);
    r.clamped = r.score != *score;
    r.reason = reason;
    return r;
}

// ---------------------------------------------------------------------------
// Session
// ---------------------------------------------------------------------------

struct SessionConfig {
    std::size_t page_size = 4;
    int max_pages = 5;
    std::size_t retrieve_k = 5;
    std::uint64_t seed = 0;
    bool keep_transcript = true;
};

struct SessionContext {
    const ItemProfileMap* items = nullptr;         // page rendering data
    const std::vector<std::string>* pool = nullptr;  // recommendable items (kept profiles)
    const ItemSet* train_items = nullptr;          // the agent's own training interactions
};

inline constexpr std::string_view kSatisfactionQuery = "satisfied with the recommendation result";

// Reacts to one page; nullopt when the reaction stays unreadable after a retry.
inline std::optional<PageReaction> react_to_page(const AgentProfile& profile, const std::vector<std::string>& memories,
                                                 int page, const std::vector<PageItem>& items, Gateway& gateway,
                                                 Diagnostics* diag, std::vector<Exchange>* transcript) {
    try {
        auto r = complete_and_parse(gateway, build_reaction_prompt(profile, memories, page, items),
                                    [&](const std::string& t) { return parse_reaction(t, items); }, diag, transcript,
                                    "reaction");
        if (diag) diag->add(r.warnings);
        return r;
    } catch (const ParseError&) {
        if (diag) diag->add(Diagnostics::skipped_reactions);
        return std::nullopt;
    }
}

inline SimRecord run_agent_session(const AgentProfile& profile, const Recommender& recommender, Gateway& gateway,
                                   const SessionContext& ctx, const SessionConfig& cfg = {},
                                   Diagnostics* diag = nullptr, MemoryStore* memory_out = nullptr) {
    if (!ctx.items) throw ArgumentError("session needs item profiles");
    if (cfg.page_size < 1 || cfg.max_pages < 1) throw ArgumentError("page size and max pages must be >= 1");
    SimRecord rec;
    rec.agent = profile.user_id;
    auto* transcript = cfg.keep_transcript ? &rec.transcript : nullptr;
    MemoryStore store(profile.user_id, gateway_embedder(gateway));
    ItemSet exclude;
    if (ctx.train_items) exclude = *ctx.train_items;

    try {
        for (int page = 1; page <= cfg.max_pages; ++page) {
            RecommendRequest req{profile.user_id, cfg.page_size, &exclude, ctx.pool, mix_seed(cfg.seed, page)};
            const auto ranked = recommender.recommend(req);
            if (ranked.empty()) {
                if (page == 1) {
                    rec.valid = false;
                    rec.invalid_reason = "no recommendable items";
                }
                rec.forced_exit = true;
                break;
            }
            PageRecord pr;
            pr.page = page;
            std::vector<PageItem> items;
            std::vector<std::string> titles;
            for (const auto& s : ranked) {
                auto it = ctx.items->find(s.item);
                if (it == ctx.items->end()) throw ArgumentError("recommended item " + s.item + " has no profile");
                items.push_back(page_item(it->second));
                titles.push_back(it->second.title);
                pr.exposed.push_back(s.item);
                exclude.insert(s.item);
            }

            const auto memories = memory_texts(store.retrieve(join(titles, ", "), cfg.retrieve_k));
            if (auto r = react_to_page(profile, memories, page, items, gateway, diag, transcript)) {
                pr.reaction = std::move(*r);
            } else {
                pr.reaction_skipped = true;
                for (const auto& id : pr.exposed) pr.reaction.alignment.push_back({id, false, ""});
            }

            std::vector<std::string> watched_titles;
            std::vector<int> ratings;
            for (const auto& r : pr.reaction.ratings) {
                watched_titles.push_back(ctx.items->at(r.item).title);
                ratings.push_back(r.rating);
            }
            const auto& fact = write_factual(store, page, titles, watched_titles, ratings);

            try {
                auto refl = reflect(store, gateway, fact.text, page, cfg.retrieve_k, diag, transcript);
                pr.satisfied = refl.satisfied;
                pr.feeling = refl.sentence;
            } catch (const ParseError&) {
                pr.satisfied = false;
                pr.feeling = "Unsatisfied with the recommendation result because I cannot tell how I feel about it.";
                write_emotional(store, pr.feeling, page);
            }

            if (page == cfg.max_pages) {
                pr.decision = {Verdict::exit, pr.satisfied ? Polarity::positive : Polarity::negative,
                               "maximum number of pages reached", false, false};
                rec.forced_exit = true;
                rec.pages.push_back(std::move(pr));
                break;
            }

            auto sat = store.retrieve(std::string(kSatisfactionQuery), cfg.retrieve_k, MemoryKind::emotional);
            std::sort(sat.begin(), sat.end(),
                      [](const ScoredMemory& a, const ScoredMemory& b) { return a.entry->sequence < b.entry->sequence; });
            try {
                auto ep = complete_and_parse(gateway, build_exit_prompt(profile, page, memory_texts(sat)),
                                             [](const std::string& t) { return parse_exit(t); }, diag, transcript,
                                             "decision");
                if (diag && ep.decision.ambiguous) diag->add(Diagnostics::exit_ambiguous);
                if (diag && ep.polarity_inferred) diag->add(Diagnostics::exit_missing_polarity);
                pr.decision = ep.decision;
            } catch (const ParseError&) {
                if (diag) diag->add(Diagnostics::exit_unparseable);
                pr.decision = {Verdict::exit, Polarity::negative, "unparseable", false, true};
            }
            const bool leave = pr.decision.verdict == Verdict::exit;
            rec.pages.push_back(std::move(pr));
            if (leave) break;
        }
        rec.exit_page = static_cast<int>(rec.pages.size());

        if (rec.valid && !rec.pages.empty()) {
            std::vector<std::string> feelings;
            for (const auto* e : store.of_kind(MemoryKind::emotional)) feelings.push_back(e->text);
            const auto memories = memory_texts(store.retrieve(std::string(kInterviewQuestion), cfg.retrieve_k));
            try {
                auto iv = complete_and_parse(gateway, build_interview_prompt(profile, memories, feelings),
                                             [](const std::string& t) { return parse_interview(t); }, diag,
                                             transcript, "interview");
                if (diag && iv.clamped) diag->add(Diagnostics::interview_clamps);
                rec.interview = iv;
            } catch (const ParseError&) {
            }
        }
    } catch (const BackendError& e) {
        rec.valid = false;
        rec.invalid_reason = e.what();
        rec.exit_page = static_cast<int>(rec.pages.size());
        if (diag) diag->add(Diagnostics::aborted_sessions);
    }
    if (memory_out) *memory_out = std::move(store);
    return rec;
}

}  // namespace agentrec
