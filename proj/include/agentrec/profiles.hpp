#pragma once
// User profiles (tier texts, tastes, rating tendencies) and item profiles
// (genres, one-sentence summary) built through the gateway, plus the
// genre-agreement filter that prunes items the model does not know.

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "agentrec/dataset.hpp"
#include "agentrec/diagnostics.hpp"
#include "agentrec/llm.hpp"
#include "agentrec/traits.hpp"

namespace agentrec {

inline constexpr std::string_view kFormatReminder =
    "\n\nReminder: your previous answer could not be read. Answer strictly in the output format described above.";

// ---------------------------------------------------------------------------
// Tier descriptions
// ---------------------------------------------------------------------------

namespace detail {

// [trait][level]
inline constexpr std::array<std::array<std::string_view, 3>, 3> kTraitTexts = {{
    {"An Incredibly Elusive Occasional Viewer, so seldom attracted by movie recommendations that it's almost a "
     "legendary event when you do watch a movie. Your movie-watching habits are extraordinarily infrequent. And you "
     "will exit the recommender system immediately even if you just feel a little unsatisfied.",
     "An Occasional Viewer, seldom attracted by movie recommendations. Only curious about watching movies that "
     "strictly align with the taste. The movie-watching habits are not very infrequent. And you tend to exit the "
     "recommender system if you have a few unsatisfied memories.",
     "A Movie Enthusiast with an insatiable appetite for films, willing to watch nearly every movie recommended to "
     "you. Movies are a central part of your life, and movie recommendations are integral to your existence. You are "
     "tolerant of recommender system, which means you are not easy to exit recommender system even if you have some "
     "unsatisfied memory."},
    {"A Dedicated Follower who gives ratings heavily relies on movie historical ratings, rarely expressing "
     "independent opinions. Usually give ratings that are the same as historical ratings.",
     "A Balanced Evaluator who considers both historical ratings and personal preferences when giving ratings to "
     "movies. Sometimes give ratings that are different from historical ratings.",
     "A Maverick Critic who completely ignores historical ratings and evaluates movies solely based on their own "
     "taste. Usually give ratings that are a lot different from historical ratings."},
    {"An Exceedingly Discerning Selective Viewer who watches movies with a level of selectivity that borders on "
     "exclusivity. The movie choices are meticulously curated to match personal taste, leaving no room for even a "
     "hint of variety.",
     "A Niche Explorer who occasionally explores different genres and mostly sticks to preferred movie types.",
     "A Cinematic Trailblazer, a relentless seeker of the unique and the obscure in the world of movies. The movie "
     "choices are so diverse and avant-garde that they defy categorization."},
}};

}  // namespace detail

inline std::string_view trait_text(TraitKind kind, TierLevel level) {
    const auto k = static_cast<std::size_t>(kind);
    const auto l = static_cast<std::size_t>(level);
    if (k >= 3 || l >= 3) throw ArgumentError("invalid trait/level pair");
    return detail::kTraitTexts[k][l];
}

inline std::string_view trait_text(std::string_view kind, std::string_view level) {
    return trait_text(parse_trait_kind(kind), parse_tier_level(level));
}

// Inverse lookup: which tier does a rendered description belong to.
inline std::optional<TierLevel> tier_from_text(TraitKind kind, std::string_view text) {
    const std::string t = trim(text);
    for (auto level : kTierLevels)
        if (t == trait_text(kind, level)) return level;
    // Longest-prefix match tolerates trailing punctuation differences.
    std::optional<TierLevel> best;
    std::size_t best_len = 0;
    for (auto level : kTierLevels) {
        auto canon = trait_text(kind, level);
        auto head = canon.substr(0, canon.find(','));
        if (t.rfind(head, 0) == 0 && head.size() > best_len) {
            best = level;
            best_len = head.size();
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Profiles
// ---------------------------------------------------------------------------

struct AgentProfile {
    std::string user_id;
    TierLevel activity = TierLevel::low;
    TierLevel conformity = TierLevel::low;
    TierLevel diversity = TierLevel::low;
    std::vector<std::string> tastes;
    std::string high_rating_tendency;
    std::string low_rating_tendency;
    std::vector<std::string> seed_items;  // items the tastes were distilled from

    std::string_view activity_text() const { return trait_text(TraitKind::activity, activity); }
    std::string_view conformity_text() const { return trait_text(TraitKind::conformity, conformity); }
    std::string_view diversity_text() const { return trait_text(TraitKind::diversity, diversity); }
    TierLevel level(TraitKind k) const {
        switch (k) {
            case TraitKind::activity: return activity;
            case TraitKind::conformity: return conformity;
            case TraitKind::diversity: return diversity;
        }
        return activity;
    }
};

struct ItemProfile {
    std::string item_id;
    std::string title;
    double quality = 0.0;
    int popularity = 0;
    GenreSet genres;      // dataset genres
    GenreSet llm_genres;  // genres named by the model
    std::string summary;
    bool kept = true;
    std::string prune_reason;
};

using ItemProfileMap = std::map<std::string, ItemProfile>;

// ---------------------------------------------------------------------------
// Taste generation
// ---------------------------------------------------------------------------

struct ProfileSample {
    std::vector<Interaction> liked;     // rating >= 3
    std::vector<Interaction> disliked;  // rating < 3
};

inline ProfileSample sample_profile_items(std::span<const Interaction> history, std::size_t n, std::uint64_t seed) {
    std::vector<Interaction> rows(history.begin(), history.end());
    const std::string owner = rows.empty() ? std::string() : rows.front().user;
    std::mt19937_64 rng(mix_seed(seed, "profile-items:" + owner));
    std::shuffle(rows.begin(), rows.end(), rng);
    if (rows.size() > n) rows.resize(n);
    ProfileSample out;
    for (auto& r : rows) (r.rating >= 3 ? out.liked : out.disliked).push_back(std::move(r));
    return out;
}

using RatingBuckets = std::array<std::vector<std::string>, 5>;  // titles by rating 1..5

inline constexpr std::string_view kTitleSeparator = "; ";

inline RatingBuckets rating_buckets(const ProfileSample& sample, const ItemStatsMap& stats) {
    RatingBuckets b;
    auto add = [&](const Interaction& r) {
        auto it = stats.find(r.item);
        b[r.rating - 1].push_back(it != stats.end() && !it->second.title.empty() ? it->second.title : r.item);
    };
    for (const auto& r : sample.liked) add(r);
    for (const auto& r : sample.disliked) add(r);
    return b;
}

inline constexpr std::string_view kTasteMarker = "act as a movie taste analyst";

inline std::string build_taste_prompt(const RatingBuckets& buckets) {
    std::string p;
    p += "I want you to act as an agent. You will act as a movie taste analyst roleplaying the user using the first "
         "person pronoun \"I\".\n";
    p += "Given a user's rating history:\n";
    for (int k = 1; k <= 5; ++k) {
        const auto& titles = buckets[k - 1];
        p += "user gives " + std::to_string(k) + " rating to movies: ";
        p += titles.empty() ? std::string("none") : join(titles, kTitleSeparator);
        p += "\n";
    }
    p += "My first request is \"I need help creating movie taste for a user given the movie-rating history. (in no "
         "particular order)\"  Generate as many TASTE-REASON pairs as possible, taste should focus on the movies' "
         "genres. Strictly follow the output format below:\n";
    p += "TASTE: [descriptive taste]\n";
    p += "REASON: [brief reason]\n";
    p += "Secondly, analyze user tend to give what kinds of movies high ratings, and tend to give what kinds of movies "
         "low ratings. Strictly follow the output format below:\n";
    p += "HIGH RATINGS: [conclusion of movies of high ratings (above 3)]\n";
    p += "LOW RATINGS: [conclusion of movies of low ratings (below 2)]\n";
    p += "Answer should not be a combination of above two parts and not contain other words and should not contain "
         "movie names.";
    return p;
}

struct TasteParse {
    std::vector<std::string> tastes;
    std::vector<std::string> reasons;  // parsed for audit, never stored in a profile
    std::string high;
    std::string low;
};

inline TasteParse parse_taste_response(std::string_view text) {
    TasteParse out;
    bool have_high = false, have_low = false;
    for (const auto& raw : split_lines(text)) {
        const std::string line = strip_decoration(raw);
        auto value_after = [&](std::string_view tag) { return trim(std::string_view(line).substr(tag.size())); };
        if (istarts_with(line, "TASTE:")) {
            auto v = value_after("TASTE:");
            if (!v.empty()) out.tastes.push_back(v);
        } else if (istarts_with(line, "REASON:")) {
            out.reasons.push_back(value_after("REASON:"));
        } else if (istarts_with(line, "HIGH RATINGS:")) {
            out.high = value_after("HIGH RATINGS:");
            have_high = true;
        } else if (istarts_with(line, "LOW RATINGS:")) {
            out.low = value_after("LOW RATINGS:");
            have_low = true;
        }
    }
    if (out.tastes.empty()) throw ParseError("taste response has no TASTE lines");
    if (!have_high) throw ParseError("taste response is missing the HIGH RATINGS section");
    if (!have_low) throw ParseError("taste response is missing the LOW RATINGS section");
    return out;
}

// ---------------------------------------------------------------------------
// Item profile generation
// ---------------------------------------------------------------------------

inline constexpr std::string_view kItemProfileMarker = "choose the genre of this movie named";

inline std::string build_item_profile_prompt(std::string_view title) {
    std::string p;
    p += "Suppose you are a movie summarizing expert, who is skilled in summarizing different movies.\n";
    p += "Firstly, choose the genre of this movie named " + std::string(title) + " from the following list:\n";
    p += "[";
    for (std::size_t i = 0; i < kGenreCount; ++i) p += std::string(i ? ", " : "") + std::string(kGenreNames[i]);
    p += "]\n";
    p += "Strictly follow the output format below:\n";
    p += "<movie name>: <genre1>|<genre2>|<genre3>\n";
    p += "Examples: \n";
    p += "Godfather, The (1972): Action|Crime|Drama\n";
    p += "American Dream (1990): Documentary\n";
    p += "Then, generate the summary of this movie named: " + std::string(title) + " using one sentence.\n";
    p += "This sentence will be shown under the movie title to attract users to watch.\n";
    p += "Only the sentence needs to be output, without any other textual explanation. The output should not contain "
         "any movie name.";
    return p;
}

struct ItemProfileParse {
    std::string name;
    GenreSet genres;
    std::string summary;
};

// First line with a colon is "<name>: <g1>|<g2>|..." (split at the last colon,
// since titles may contain colons); the summary is the last other non-empty line.
inline ItemProfileParse parse_item_profile(std::string_view text) {
    ItemProfileParse out;
    std::optional<std::size_t> genre_line;
    const auto lines = split_lines(text);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::string line = strip_decoration(lines[i]);
        if (line.empty()) continue;
        const auto colon = line.rfind(':');
        if (colon == std::string::npos) continue;
        out.name = trim(std::string_view(line).substr(0, colon));
        const auto tail = trim(std::string_view(line).substr(colon + 1));
        if (tail.empty()) throw ParseError("genre line has no genres: " + line, i + 1);
        for (const auto& g : split(tail, "|")) {
            auto idx = genre_index(trim(g));
            if (!idx) throw ParseError("genre '" + trim(g) + "' is not in the catalog", i + 1);
            out.genres.set(*idx);
        }
        genre_line = i;
        break;
    }
    if (!genre_line) throw ParseError("item profile response has no genre line");
    for (std::size_t i = lines.size(); i-- > 0;) {
        if (i == *genre_line) continue;
        std::string line = strip_decoration(lines[i]);
        if (istarts_with(line, "Summary:")) line = trim(std::string_view(line).substr(8));
        if (!line.empty()) {
            out.summary = line;
            break;
        }
    }
    if (out.summary.empty()) throw ParseError("item profile response has an empty summary");
    return out;
}

// Keep iff the model's genres overlap the dataset genres.
inline bool hallucination_filter(const GenreSet& llm_genres, const GenreSet& dataset_genres) {
    if (dataset_genres.none()) throw ArgumentError("dataset genres are empty");
    return (llm_genres & dataset_genres).any();
}

// Lowercase alphanumeric tokens of length >= 3 that are not years or articles.
inline std::vector<std::string> title_tokens(std::string_view title) {
    static const std::array<std::string_view, 6> kStop = {"the", "and", "for", "les", "der", "una"};
    std::vector<std::string> out;
    std::string tok;
    auto flush = [&] {
        bool digits = !tok.empty() && std::all_of(tok.begin(), tok.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
        if (tok.size() >= 3 && !digits && std::find(kStop.begin(), kStop.end(), tok) == kStop.end()) out.push_back(tok);
        tok.clear();
    };
    for (unsigned char c : title) {
        if (std::isalnum(c))
            tok += static_cast<char>(std::tolower(c));
        else
            flush();
    }
    flush();
    return out;
}

inline bool mentions_title(std::string_view summary, std::string_view title) {
    const auto words = title_tokens(summary);
    for (const auto& t : title_tokens(title))
        if (std::find(words.begin(), words.end(), t) != words.end()) return true;
    return false;
}

template <class Parse>
auto complete_and_parse(Gateway& gateway, const std::string& prompt, Parse&& parse, Diagnostics* diag,
                        std::vector<Exchange>* transcript = nullptr, std::string_view kind = "")
    -> decltype(parse(std::string())) {
    std::string response = gateway.complete(prompt);
    if (transcript) transcript->push_back({std::string(kind), prompt, response});
    try {
        return parse(response);
    } catch (const ParseError&) {
        if (diag) diag->add(Diagnostics::parse_retries);
        const std::string retry_prompt = prompt + std::string(kFormatReminder);
        response = gateway.complete(retry_prompt);
        if (transcript) transcript->push_back({std::string(kind) + ":retry", retry_prompt, response});
        try {
            return parse(response);
        } catch (const ParseError&) {
            if (diag) diag->add(Diagnostics::parse_failures);
            throw;
        }
    }
}

inline ItemProfileParse generate_item_profile(Gateway& gateway, std::string_view title, Diagnostics* diag = nullptr) {
    return complete_and_parse(gateway, build_item_profile_prompt(title),
                              [](const std::string& r) { return parse_item_profile(r); }, diag);
}

inline ItemProfile build_item_profile(const std::string& item_id, const ItemStats& stats, Gateway& gateway,
                                      Diagnostics* diag = nullptr) {
    ItemProfile p;
    p.item_id = item_id;
    p.title = stats.title.empty() ? item_id : stats.title;
    p.quality = stats.quality;
    p.popularity = stats.popularity;
    p.genres = stats.genres;
    try {
        auto parsed = generate_item_profile(gateway, p.title, diag);
        p.llm_genres = parsed.genres;
        p.summary = parsed.summary;
        if (diag && mentions_title(p.summary, p.title)) diag->add(Diagnostics::summary_title_leaks);
        if (p.genres.none()) {
            p.kept = false;
            p.prune_reason = "no dataset genres";
        } else if (!hallucination_filter(p.llm_genres, p.genres)) {
            p.kept = false;
            p.prune_reason = "genre mismatch";
        }
    } catch (const ParseError& e) {
        p.kept = false;
        p.prune_reason = std::string("unparseable: ") + e.what();
    }
    if (!p.kept && diag) diag->add(Diagnostics::pruned_items);
    return p;
}

struct TierAssignment {
    TierLevel activity = TierLevel::low;
    TierLevel conformity = TierLevel::low;
    TierLevel diversity = TierLevel::low;
};

inline AgentProfile build_agent_profile(const std::string& user, std::span<const Interaction> train_history,
                                        const TierAssignment& tiers, const ItemStatsMap& stats, Gateway& gateway,
                                        std::uint64_t seed, Diagnostics* diag = nullptr,
                                        std::size_t sample_size = 25) {
    if (train_history.empty()) throw ArgumentError("user " + user + " has no training history");
    auto sample = sample_profile_items(train_history, sample_size, seed);
    auto parsed = complete_and_parse(gateway, build_taste_prompt(rating_buckets(sample, stats)),
                                     [](const std::string& r) { return parse_taste_response(r); }, diag);
    AgentProfile p;
    p.user_id = user;
    p.activity = tiers.activity;
    p.conformity = tiers.conformity;
    p.diversity = tiers.diversity;
    p.tastes = std::move(parsed.tastes);
    p.high_rating_tendency = std::move(parsed.high);
    p.low_rating_tendency = std::move(parsed.low);
    for (const auto& r : sample.liked) p.seed_items.push_back(r.item);
    for (const auto& r : sample.disliked) p.seed_items.push_back(r.item);
    return p;
}

// ---------------------------------------------------------------------------
// Persistence: one JSON document per user / item
// ---------------------------------------------------------------------------

inline json to_json(const AgentProfile& p) {
    return {{"user_id", p.user_id},
            {"activity", to_string(p.activity)},
            {"conformity", to_string(p.conformity)},
            {"diversity", to_string(p.diversity)},
            {"activity_text", p.activity_text()},
            {"conformity_text", p.conformity_text()},
            {"diversity_text", p.diversity_text()},
            {"tastes", p.tastes},
            {"high_rating_tendency", p.high_rating_tendency},
            {"low_rating_tendency", p.low_rating_tendency},
            {"seed_items", p.seed_items}};
}

inline AgentProfile agent_profile_from_json(const json& j) {
    AgentProfile p;
    p.user_id = j.at("user_id");
    p.activity = parse_tier_level(j.at("activity").get<std::string>());
    p.conformity = parse_tier_level(j.at("conformity").get<std::string>());
    p.diversity = parse_tier_level(j.at("diversity").get<std::string>());
    p.tastes = j.at("tastes").get<std::vector<std::string>>();
    p.high_rating_tendency = j.value("high_rating_tendency", "");
    p.low_rating_tendency = j.value("low_rating_tendency", "");
    p.seed_items = j.value("seed_items", std::vector<std::string>{});
    if (p.tastes.empty()) throw ValidationError("profile " + p.user_id + " has no tastes");
    return p;
}

inline json to_json(const ItemProfile& p) {
    return {{"item_id", p.item_id},     {"title", p.title},
            {"quality", p.quality},     {"popularity", p.popularity},
            {"genres", genre_list(p.genres)}, {"llm_genres", genre_list(p.llm_genres)},
            {"summary", p.summary},     {"kept", p.kept},
            {"prune_reason", p.prune_reason}};
}

inline GenreSet parse_genre_list(std::string_view s) {
    GenreSet g;
    if (trim(s).empty()) return g;
    for (const auto& name : split(s, "|")) {
        auto idx = genre_index(trim(name));
        if (!idx) throw ValidationError("unknown genre '" + name + "'");
        g.set(*idx);
    }
    return g;
}

inline ItemProfile item_profile_from_json(const json& j) {
    ItemProfile p;
    p.item_id = j.at("item_id");
    p.title = j.at("title");
    p.quality = j.at("quality");
    p.popularity = j.at("popularity");
    p.genres = parse_genre_list(j.at("genres").get<std::string>());
    p.llm_genres = parse_genre_list(j.at("llm_genres").get<std::string>());
    p.summary = j.value("summary", "");
    p.kept = j.value("kept", true);
    p.prune_reason = j.value("prune_reason", "");
    return p;
}

// File names are derived from ids; ids with path separators are escaped.
inline std::string safe_file_stem(std::string_view id) {
    std::string out;
    for (unsigned char c : id) {
        if (std::isalnum(c) || c == '-' || c == '_' || c == '.') {
            out += static_cast<char>(c);
        } else {
            char buf[4];
            std::snprintf(buf, sizeof buf, "%%%02X", c);
            out += buf;
        }
    }
    return out;
}

inline void write_json_file(const std::filesystem::path& path, const json& j) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << json_text(j, 2) << '\n';
}

inline json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path.string());
    return json::parse(in);
}

}  // namespace agentrec
