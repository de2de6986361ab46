#pragma once
// Per-agent session trace: what was exposed, viewed and rated on each page,
// how the agent felt, when it left, and the post-exit interview.

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "agentrec/common.hpp"

namespace agentrec {

struct ItemAlignment {
    std::string item;
    bool aligned = false;
    std::string reason;
};

struct WatchRating {
    std::string item;
    int rating = 0;
    std::string feeling;
};

// Counters for tolerated defects in a generated reaction.
struct ReactionWarnings {
    int hallucinated_titles = 0;  // titles not on the page
    int num_mismatch = 0;         // declared NUM differs from the WATCH list
    int dropped_ratings = 0;      // ratings for unwatched items, duplicates
    int clamped_ratings = 0;
    int missing_items = 0;        // page items without an ALIGN line
    int unaligned_watch = 0;      // watched items not marked aligned
    int unrated_watch = 0;        // watched items with no RATING line
    int missing_watch_line = 0;

    int total() const {
        return hallucinated_titles + num_mismatch + dropped_ratings + clamped_ratings + missing_items +
               unaligned_watch + unrated_watch + missing_watch_line;
    }
    ReactionWarnings& operator+=(const ReactionWarnings& o) {
        hallucinated_titles += o.hallucinated_titles;
        num_mismatch += o.num_mismatch;
        dropped_ratings += o.dropped_ratings;
        clamped_ratings += o.clamped_ratings;
        missing_items += o.missing_items;
        unaligned_watch += o.unaligned_watch;
        unrated_watch += o.unrated_watch;
        missing_watch_line += o.missing_watch_line;
        return *this;
    }
};

// watch ⊆ aligned ⊆ page, one rating per watched item (enforced by the parser).
struct PageReaction {
    std::vector<ItemAlignment> alignment;
    std::vector<std::string> watched;
    std::vector<WatchRating> ratings;
    int declared_num = 0;
    ReactionWarnings warnings;

    std::set<std::string> aligned_set() const {
        std::set<std::string> out;
        for (const auto& a : alignment)
            if (a.aligned) out.insert(a.item);
        return out;
    }
    std::optional<int> rating_of(const std::string& item) const {
        for (const auto& r : ratings)
            if (r.item == item) return r.rating;
        return std::nullopt;
    }
};

enum class Verdict { next, exit };
enum class Polarity { positive, negative };

struct ExitDecision {
    Verdict verdict = Verdict::exit;
    Polarity polarity = Polarity::negative;
    std::string reason;
    bool ambiguous = false;    // both tokens present
    bool unparseable = false;  // fallback after a failed retry
};

struct InterviewResult {
    int score = 1;
    std::string reason;
    bool clamped = false;
};

struct Exchange {
    std::string kind;
    std::string prompt;
    std::string response;
};

struct PageRecord {
    int page = 0;
    std::vector<std::string> exposed;
    PageReaction reaction;
    bool reaction_skipped = false;
    std::string feeling;  // reflection sentence written to emotional memory
    bool satisfied = false;
    ExitDecision decision;
};

struct SimRecord {
    std::string agent;
    std::vector<PageRecord> pages;
    int exit_page = 0;
    bool forced_exit = false;
    std::optional<InterviewResult> interview;
    bool valid = true;
    std::string invalid_reason;
    std::vector<Exchange> transcript;

    std::size_t n_expose() const {
        std::size_t n = 0;
        for (const auto& p : pages) n += p.exposed.size();
        return n;
    }
    std::size_t n_view() const {
        std::size_t n = 0;
        for (const auto& p : pages) n += p.reaction.watched.size();
        return n;
    }
    // Like = rating strictly above 3.
    std::size_t n_like() const {
        std::size_t n = 0;
        for (const auto& p : pages)
            for (const auto& r : p.reaction.ratings)
                if (r.rating > 3) ++n;
        return n;
    }
    std::set<std::string> exposed_items() const {
        std::set<std::string> out;
        for (const auto& p : pages) out.insert(p.exposed.begin(), p.exposed.end());
        return out;
    }
    // item -> simulated rating, for every viewed item.
    std::map<std::string, int> viewed() const {
        std::map<std::string, int> out;
        for (const auto& p : pages)
            for (const auto& r : p.reaction.ratings) out[r.item] = r.rating;
        return out;
    }
    std::set<std::string> unviewed_exposed() const {
        auto v = viewed();
        std::set<std::string> out;
        for (const auto& item : exposed_items())
            if (!v.count(item)) out.insert(item);
        return out;
    }
    int dissatisfied_pages() const {
        int n = 0;
        for (const auto& p : pages)
            if (!p.satisfied) ++n;
        return n;
    }
};

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

inline json to_json(const ReactionWarnings& w) {
    return {{"hallucinated_titles", w.hallucinated_titles}, {"num_mismatch", w.num_mismatch},
            {"dropped_ratings", w.dropped_ratings},         {"clamped_ratings", w.clamped_ratings},
            {"missing_items", w.missing_items},             {"unaligned_watch", w.unaligned_watch},
            {"unrated_watch", w.unrated_watch},             {"missing_watch_line", w.missing_watch_line}};
}

inline ReactionWarnings reaction_warnings_from_json(const json& j) {
    ReactionWarnings w;
    w.hallucinated_titles = j.value("hallucinated_titles", 0);
    w.num_mismatch = j.value("num_mismatch", 0);
    w.dropped_ratings = j.value("dropped_ratings", 0);
    w.clamped_ratings = j.value("clamped_ratings", 0);
    w.missing_items = j.value("missing_items", 0);
    w.unaligned_watch = j.value("unaligned_watch", 0);
    w.unrated_watch = j.value("unrated_watch", 0);
    w.missing_watch_line = j.value("missing_watch_line", 0);
    return w;
}

inline json to_json(const SimRecord& r, bool with_transcript = true) {
    json pages = json::array();
    for (const auto& p : r.pages) {
        json align = json::array();
        for (const auto& a : p.reaction.alignment)
            align.push_back({{"item", a.item}, {"aligned", a.aligned}, {"reason", a.reason}});
        json ratings = json::array();
        for (const auto& x : p.reaction.ratings)
            ratings.push_back({{"item", x.item}, {"rating", x.rating}, {"feeling", x.feeling}});
        pages.push_back({{"page", p.page},
                         {"exposed", p.exposed},
                         {"alignment", align},
                         {"watched", p.reaction.watched},
                         {"ratings", ratings},
                         {"declared_num", p.reaction.declared_num},
                         {"warnings", to_json(p.reaction.warnings)},
                         {"reaction_skipped", p.reaction_skipped},
                         {"feeling", p.feeling},
                         {"satisfied", p.satisfied},
                         {"decision",
                          {{"verdict", p.decision.verdict == Verdict::next ? "NEXT" : "EXIT"},
                           {"polarity", p.decision.polarity == Polarity::positive ? "POSITIVE" : "NEGATIVE"},
                           {"reason", p.decision.reason},
                           {"ambiguous", p.decision.ambiguous},
                           {"unparseable", p.decision.unparseable}}}});
    }
    json j = {{"agent", r.agent},           {"pages", pages},
              {"exit_page", r.exit_page},   {"forced_exit", r.forced_exit},
              {"valid", r.valid},           {"invalid_reason", r.invalid_reason},
              {"n_expose", r.n_expose()},   {"n_view", r.n_view()},
              {"n_like", r.n_like()}};
    if (r.interview)
        j["interview"] = {{"score", r.interview->score}, {"reason", r.interview->reason},
                          {"clamped", r.interview->clamped}};
    else
        j["interview"] = nullptr;
    if (with_transcript) {
        json t = json::array();
        for (const auto& e : r.transcript) t.push_back({{"kind", e.kind}, {"prompt", e.prompt}, {"response", e.response}});
        j["transcript"] = t;
    }
    return j;
}

inline SimRecord sim_record_from_json(const json& j) {
    SimRecord r;
    r.agent = j.at("agent").get<std::string>();
    r.exit_page = j.at("exit_page").get<int>();
    r.forced_exit = j.value("forced_exit", false);
    r.valid = j.value("valid", true);
    r.invalid_reason = j.value("invalid_reason", "");
    for (const auto& pj : j.at("pages")) {
        PageRecord p;
        p.page = pj.at("page").get<int>();
        p.exposed = pj.at("exposed").get<std::vector<std::string>>();
        for (const auto& a : pj.at("alignment"))
            p.reaction.alignment.push_back({a.at("item"), a.at("aligned"), a.value("reason", "")});
        p.reaction.watched = pj.at("watched").get<std::vector<std::string>>();
        for (const auto& x : pj.at("ratings"))
            p.reaction.ratings.push_back({x.at("item"), x.at("rating"), x.value("feeling", "")});
        p.reaction.declared_num = pj.value("declared_num", 0);
        if (pj.contains("warnings")) p.reaction.warnings = reaction_warnings_from_json(pj["warnings"]);
        p.reaction_skipped = pj.value("reaction_skipped", false);
        p.feeling = pj.value("feeling", "");
        p.satisfied = pj.value("satisfied", false);
        const auto& d = pj.at("decision");
        p.decision.verdict = d.at("verdict") == "NEXT" ? Verdict::next : Verdict::exit;
        p.decision.polarity = d.at("polarity") == "POSITIVE" ? Polarity::positive : Polarity::negative;
        p.decision.reason = d.value("reason", "");
        p.decision.ambiguous = d.value("ambiguous", false);
        p.decision.unparseable = d.value("unparseable", false);
        r.pages.push_back(std::move(p));
    }
    if (j.contains("interview") && !j["interview"].is_null()) {
        InterviewResult iv;
        iv.score = j["interview"].at("score");
        iv.reason = j["interview"].value("reason", "");
        iv.clamped = j["interview"].value("clamped", false);
        r.interview = iv;
    }
    if (j.contains("transcript"))
        for (const auto& e : j["transcript"]) r.transcript.push_back({e.at("kind"), e.at("prompt"), e.at("response")});
    return r;
}

}  // namespace agentrec
