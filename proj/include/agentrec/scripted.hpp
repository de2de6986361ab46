#pragma once
// Deterministic stand-in for the language model. It reads the same prompts a
// live model would see, recovers the persona from them, and answers in the
// grammars the parsers expect.
//
// Persona rules:
//   align    iff item genres intersect the liked genres
//   watch    first min(quota, aligned) aligned items; quota by activity 1/2/4
//   rating   clamp(round(w*quality + (1-w)*affinity), 1, 5), affinity 5 if
//            aligned else 2; w by conformity tier low/medium/high = 1/0.5/0
//   exit     when the trailing run of unsatisfied pages exceeds the patience
//            (activity low/medium/high = 0/1/2)
//   interview 7 without any unsatisfied page, else 4

#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "agentrec/agent.hpp"
#include "agentrec/llm.hpp"
#include "agentrec/memory.hpp"
#include "agentrec/profiles.hpp"

namespace agentrec {

struct PersonaSpec {
    GenreSet liked_genres;
    int quota = 1;
    double w = 1.0;
    int patience = 0;
};

inline int watch_quota(TierLevel activity) {
    static constexpr std::array<int, 3> q = {1, 2, 4};
    return q[static_cast<std::size_t>(activity)];
}

inline double rating_weight(TierLevel conformity) {
    static constexpr std::array<double, 3> w = {1.0, 0.5, 0.0};
    return w[static_cast<std::size_t>(conformity)];
}

inline int patience_for(TierLevel activity) { return static_cast<int>(activity); }

// Catalog genres named in free text, matched case-insensitively on word edges.
inline GenreSet genres_mentioned(std::string_view text) {
    const std::string lower = to_lower(text);
    auto word_char = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };
    GenreSet out;
    for (std::size_t g = 0; g < kGenreCount; ++g) {
        const std::string name = to_lower(kGenreNames[g]);
        for (auto at = lower.find(name); at != std::string::npos; at = lower.find(name, at + 1)) {
            const bool left = at == 0 || !word_char(lower[at - 1]);
            const bool right = at + name.size() >= lower.size() || !word_char(lower[at + name.size()]);
            if (left && right) {
                out.set(g);
                break;
            }
        }
    }
    return out;
}

inline PersonaSpec persona_from_profile(const AgentProfile& p) {
    PersonaSpec s;
    s.liked_genres = genres_mentioned(join(p.tastes, "; "));
    s.quota = watch_quota(p.activity);
    s.w = rating_weight(p.conformity);
    s.patience = patience_for(p.activity);
    return s;
}

struct ScriptedPageItem {
    std::string title;
    double quality = 0.0;
    GenreSet genres;
};

inline int scripted_rating(const PersonaSpec& persona, double quality, bool aligned) {
    const double affinity = aligned ? 5.0 : 2.0;
    return std::clamp(static_cast<int>(std::lround(persona.w * quality + (1.0 - persona.w) * affinity)), 1, 5);
}

inline std::string scripted_reaction(const PersonaSpec& persona, const std::vector<ScriptedPageItem>& items,
                                     std::string_view /*memory*/ = {}) {
    if (items.empty()) throw ArgumentError("scripted reaction needs a non-empty page");
    std::string out;
    std::vector<const ScriptedPageItem*> watch;
    for (const auto& it : items) {
        const auto common = it.genres & persona.liked_genres;
        if (common.any()) {
            std::size_t g = 0;
            while (!common.test(g)) ++g;
            out += "MOVIE: " + it.title + "; ALIGN: Yes; REASON: It fits my taste for " + std::string(kGenreNames[g]) +
                   " movies.\n";
            if (static_cast<int>(watch.size()) < persona.quota) watch.push_back(&it);
        } else {
            out += "MOVIE: " + it.title + "; ALIGN: No; REASON: It is outside the genres I enjoy.\n";
        }
    }
    std::vector<std::string> names;
    for (const auto* it : watch) names.push_back(it->title);
    out += "NUM: " + std::to_string(watch.size()) + "; WATCH: " + join(names, ", ") + "; REASON: " +
           (watch.empty() ? "None of these movies fit my taste." : "These movies fit my taste.") + "\n";
    for (const auto* it : watch)
        out += "MOVIE: " + it->title + "; RATING: " + std::to_string(scripted_rating(persona, it->quality, true)) +
               "; FEELING: It was what I expected from a movie like this.\n";
    return out;
}

struct ScriptedWorld {
    struct Entry {
        GenreSet genres;
        double quality = 0.0;
    };
    std::map<std::string, Entry> by_title;
    double hallucination_rate = 0.0;  // share of item profiles answered with a wrong genre
    std::uint64_t seed = 0;

    static ScriptedWorld from_stats(const ItemStatsMap& stats, double hallucination_rate = 0.0,
                                    std::uint64_t seed = 0) {
        ScriptedWorld w;
        for (const auto& [id, s] : stats) w.by_title[s.title.empty() ? id : s.title] = {s.genres, s.quality};
        w.hallucination_rate = hallucination_rate;
        w.seed = seed;
        return w;
    }
};

class ScriptedBackend : public TextBackend {
  public:
    explicit ScriptedBackend(ScriptedWorld world) : world_(std::move(world)) {}

    std::string mode() const override { return "scripted"; }

    std::vector<double> embed(const std::string& text) override { return hashed_embedding(text); }

    std::string complete(const CompletionRequest& req) override {
        const std::string& p = req.prompt;
        if (p.find(kTasteMarker) != std::string::npos) return taste(p);
        if (p.find(kItemProfileMarker) != std::string::npos) return item_profile(p);
        if (p.find(kInterviewQuestion) != std::string::npos) return interview(p);
        if (p.find(kExitMarker) != std::string::npos) return decision(p);
        if (p.find(kReactionMarker) != std::string::npos) return reaction(p);
        if (p.find(kReflectionMarker) != std::string::npos) return reflection(p);
        return "I am not sure how to answer that.";
    }

    const ScriptedWorld& world() const { return world_; }

    // Persona as recovered from a reaction or decision prompt.
    static PersonaSpec persona_from_prompt(const std::string& p) {
        PersonaSpec s;
        const auto activity = tier_from_text(TraitKind::activity, line_after(p, kActivityLead));
        const auto conformity = tier_from_text(TraitKind::conformity, line_after(p, kConformityLead));
        const auto a = activity.value_or(TierLevel::low);
        s.quota = watch_quota(a);
        s.patience = patience_for(a);
        s.w = rating_weight(conformity.value_or(TierLevel::low));
        const auto t0 = p.find(kTastesLead);
        if (t0 != std::string::npos) {
            const auto begin = t0 + kTastesLead.size();
            const auto end = p.find(std::string("\n") + std::string(kTendencyLead), begin);
            s.liked_genres = genres_mentioned(std::string_view(p).substr(begin, end == std::string::npos ? std::string::npos : end - begin));
        }
        return s;
    }

  private:
    ScriptedWorld world_;

    static std::string line_after(const std::string& p, std::string_view lead) {
        const auto at = p.find(lead);
        if (at == std::string::npos) return {};
        const auto begin = at + lead.size();
        return p.substr(begin, p.find('\n', begin) - begin);
    }

    // "- " lines following `lead` up to the next blank or non-bullet line.
    static std::vector<std::string> bullets_after(const std::string& p, std::string_view lead) {
        std::vector<std::string> out;
        const auto at = p.find(lead);
        if (at == std::string::npos) return out;
        auto lines = split_lines(std::string_view(p).substr(at + lead.size()));
        std::size_t i = 0;
        while (i < lines.size() && trim(lines[i]).empty()) ++i;
        for (; i < lines.size(); ++i) {
            if (lines[i].rfind("- ", 0) != 0) break;
            out.push_back(lines[i].substr(2));
        }
        return out;
    }

    std::string taste(const std::string& p) const {
        std::array<int, kGenreCount> score{}, seen{};
        static const std::regex row(R"(^user gives (\d) rating to movies: (.*)$)");
        for (const auto& line : split_lines(p)) {
            std::smatch m;
            if (!std::regex_match(line, m, row) || m[2].str() == "none") continue;
            const int rating = std::stoi(m[1].str());
            for (const auto& title : split(m[2].str(), kTitleSeparator)) {
                auto it = world_.by_title.find(title);
                if (it == world_.by_title.end()) continue;
                for (std::size_t g = 0; g < kGenreCount; ++g) {
                    if (!it->second.genres.test(g)) continue;
                    score[g] += rating >= 3 ? 1 : -1;
                    ++seen[g];
                }
            }
        }
        const int best = *std::max_element(score.begin(), score.end());
        std::vector<std::size_t> liked;
        for (std::size_t g = 0; g < kGenreCount; ++g)
            if (score[g] >= std::max(1.0, 0.5 * best)) liked.push_back(g);
        std::stable_sort(liked.begin(), liked.end(), [&](auto a, auto b) { return score[a] > score[b]; });
        if (liked.size() > 3) liked.resize(3);
        if (liked.empty()) {
            const auto most = static_cast<std::size_t>(std::max_element(seen.begin(), seen.end()) - seen.begin());
            liked.push_back(seen[most] > 0 ? most : *genre_index("Drama"));
        }
        std::string out;
        std::vector<std::string> names;
        for (auto g : liked) {
            const std::string name(kGenreNames[g]);
            names.push_back(name);
            out += "TASTE: I enjoy " + name + " movies.\n";
            out += "REASON: I gave good ratings to several " + name + " movies.\n";
        }
        out += "HIGH RATINGS: I tend to give high ratings (above 3) to " + join(names, " and ") + " movies.\n";
        out += "LOW RATINGS: I tend to give low ratings (below 2) to movies outside my favourite genres.\n";
        return out;
    }

    std::string item_profile(const std::string& p) const {
        const std::string lead(kItemProfileMarker);
        const auto at = p.find(lead);
        const auto begin = at + lead.size() + 1;
        const std::string title = p.substr(begin, p.find(" from the following list", begin) - begin);
        GenreSet genres;
        if (auto it = world_.by_title.find(title); it != world_.by_title.end()) genres = it->second.genres;
        if (genres.none()) genres.set(*genre_index("Drama"));
        const double u = static_cast<double>(mix_seed(world_.seed, "hallucinate:" + title) >> 11) * 0x1.0p-53;
        if (u < world_.hallucination_rate) {
            std::size_t g = 0;
            while (genres.test(g)) ++g;
            genres.reset();
            genres.set(g);
        }
        static const std::array<std::string_view, 4> summaries = {
            "A memorable story told with care and conviction.",
            "An engaging tale that rewards patient viewers.",
            "A lively picture with striking moments throughout.",
            "Something worth seeing at least once.",
        };
        std::string summary(summaries.back());
        for (auto s : summaries)
            if (!mentions_title(s, title)) {
                summary = s;
                break;
            }
        return title + ": " + genre_list(genres) + "\n" + summary;
    }

    std::string reaction(const std::string& p) const {
        const auto persona = persona_from_prompt(p);
        static const std::regex item_re(R"(^<- (.*) -> <- History ratings: ([0-9.]+) -> <- Summary: .* ->$)");
        std::vector<ScriptedPageItem> items;
        for (const auto& line : split_lines(p)) {
            std::smatch m;
            if (!std::regex_match(line, m, item_re)) continue;
            ScriptedPageItem it{m[1].str(), std::stod(m[2].str()), {}};
            if (auto w = world_.by_title.find(it.title); w != world_.by_title.end()) it.genres = w->second.genres;
            items.push_back(std::move(it));
        }
        if (items.empty()) return "I cannot see any movies.";
        return scripted_reaction(persona, items);
    }

    static std::string reflection(const std::string& p) {
        bool watched = false;
        for (const auto& m : bullets_after(p, kMemoryLead)) {
            const auto at = m.find("I watched [");
            if (at == std::string::npos) continue;
            watched = m.compare(at + 11, 1, "]") != 0;
            break;
        }
        return watched ? "Satisfied with the recommendation result because I watched movies that match my taste."
                       : "Unsatisfied with the recommendation result because none of the movies matched my taste.";
    }

    static std::string decision(const std::string& p) {
        const auto persona = persona_from_prompt(p);
        int streak = 0;
        for (const auto& m : bullets_after(p, kMemoryLead)) streak = to_lower(m).find("unsatisfied") != std::string::npos ? streak + 1 : 0;
        const std::string feeling = streak > 0 ? "NEGATIVE: The latest recommendations did not match my taste.\n"
                                               : "POSITIVE: The recommendations match my taste.\n";
        if (streak > persona.patience) return feeling + "[EXIT]; Reason: I am unsatisfied with the recommendations.";
        return feeling + "[NEXT]; Reason: I am willing to see another page.";
    }

    static std::string interview(const std::string& p) {
        bool unsatisfied = false;
        for (const auto& m : bullets_after(p, kFeelingsLead))
            if (to_lower(m).find("unsatisfied") != std::string::npos) unsatisfied = true;
        return unsatisfied ? "Rating: 4\nReason: Some pages did not match my taste."
                           : "Rating: 7\nReason: The recommendations matched my taste on every page.";
    }
};

}  // namespace agentrec
