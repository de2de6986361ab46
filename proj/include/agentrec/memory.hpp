#pragma once
// Per-agent memory stream: factual entries (what was shown, watched, rated)
// and emotional entries (how the agent felt), retrieved by embedding cosine.

#include <algorithm>
#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "agentrec/diagnostics.hpp"
#include "agentrec/llm.hpp"
#include "agentrec/profiles.hpp"

namespace agentrec {

enum class MemoryKind { factual, emotional };

inline std::string_view to_string(MemoryKind k) { return k == MemoryKind::factual ? "factual" : "emotional"; }

struct MemoryEntry {
    MemoryKind kind = MemoryKind::factual;
    std::string text;
    std::vector<double> embedding;
    int page = 0;
    std::size_t sequence = 0;
};

struct ScoredMemory {
    const MemoryEntry* entry = nullptr;
    double score = 0.0;
};

using Embedder = std::function<std::vector<double>(const std::string&)>;

inline Embedder hashed_embedder() {
    return [](const std::string& t) { return hashed_embedding(t); };
}

inline Embedder gateway_embedder(Gateway& g) {
    return [&g](const std::string& t) { return g.embed(t); };
}

// Append-only. Not internally synchronised: a store belongs to one session.
class MemoryStore {
  public:
    explicit MemoryStore(std::string owner = {}, Embedder embed = hashed_embedder())
        : owner_(std::move(owner)), embed_(std::move(embed)) {}

    const std::string& owner() const { return owner_; }
    const std::vector<MemoryEntry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

    const MemoryEntry& append(MemoryKind kind, std::string text, int page) {
        MemoryEntry e;
        e.kind = kind;
        e.embedding = embed_(text);
        e.text = std::move(text);
        e.page = page;
        e.sequence = entries_.size();
        entries_.push_back(std::move(e));
        return entries_.back();
    }

    // Cosine relevance, descending; ties go to the more recent entry.
    std::vector<ScoredMemory> retrieve(const std::string& query, std::size_t k = 5,
                                       std::optional<MemoryKind> kind = std::nullopt) const {
        if (k == 0) throw ArgumentError("retrieve needs k >= 1");
        if (entries_.empty()) return {};
        const auto q = embed_(query);
        std::vector<ScoredMemory> scored;
        for (const auto& e : entries_)
            if (!kind || e.kind == *kind) scored.push_back({&e, cosine(q, e.embedding)});
        std::stable_sort(scored.begin(), scored.end(), [](const ScoredMemory& a, const ScoredMemory& b) {
            if (a.score != b.score) return a.score > b.score;
            return a.entry->sequence > b.entry->sequence;
        });
        if (scored.size() > k) scored.resize(k);
        return scored;
    }

    std::vector<const MemoryEntry*> of_kind(MemoryKind kind) const {
        std::vector<const MemoryEntry*> out;
        for (const auto& e : entries_)
            if (e.kind == kind) out.push_back(&e);
        return out;
    }

    void write_jsonl(std::ostream& out, bool with_embeddings = false) const {
        for (const auto& e : entries_) {
            json j = {{"owner", owner_}, {"kind", to_string(e.kind)}, {"text", e.text}, {"page", e.page},
                      {"sequence", e.sequence}};
            if (with_embeddings) j["embedding"] = e.embedding;
            out << json_text(j) << '\n';
        }
    }

    // Entries are re-embedded unless the line carries its vector.
    static MemoryStore read_jsonl(std::istream& in, Embedder embed = hashed_embedder()) {
        MemoryStore store({}, std::move(embed));
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (trim(line).empty()) continue;
            json j;
            try {
                j = json::parse(line);
            } catch (const json::exception& e) {
                throw ParseError(e.what(), lineno);
            }
            store.owner_ = j.value("owner", store.owner_);
            MemoryEntry e;
            e.kind = j.at("kind") == "factual" ? MemoryKind::factual : MemoryKind::emotional;
            e.text = j.at("text");
            e.page = j.value("page", 0);
            e.sequence = store.entries_.size();
            if (j.value("sequence", e.sequence) != e.sequence) throw ParseError("memory sequence gap", lineno);
            e.embedding = j.contains("embedding") ? j["embedding"].get<std::vector<double>>() : store.embed_(e.text);
            store.entries_.push_back(std::move(e));
        }
        return store;
    }

  private:
    std::string owner_;
    Embedder embed_;
    std::vector<MemoryEntry> entries_;
};

// ---------------------------------------------------------------------------
// Writing
// ---------------------------------------------------------------------------

namespace detail {

inline std::string quoted_list(const std::vector<std::string>& xs) {
    std::string out = "[";
    for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? ", '" : "'") + xs[i] + "'";
    return out + "]";
}

}  // namespace detail

// Titles of the whole page, the watched subset with ratings, and the rest.
inline std::string factual_text(int page, const std::vector<std::string>& exposed_titles,
                                const std::vector<std::string>& watched_titles, const std::vector<int>& ratings) {
    if (ratings.size() != watched_titles.size()) throw ArgumentError("one rating per watched title is required");
    std::vector<std::string> rest;
    for (const auto& t : exposed_titles)
        if (std::find(watched_titles.begin(), watched_titles.end(), t) == watched_titles.end()) rest.push_back(t);
    std::vector<std::string> r;
    for (int x : ratings) r.push_back(std::to_string(x));
    return "The recommender recommended the following movies to me on page " + std::to_string(page) + ": " +
           join(exposed_titles, ", ") + ", among them, I watched " + detail::quoted_list(watched_titles) +
           " and rate them " + detail::quoted_list(r) + " respectively. I dislike the rest movies: " +
           detail::quoted_list(rest) + ".";
}

inline const MemoryEntry& write_factual(MemoryStore& store, int page, const std::vector<std::string>& exposed_titles,
                                        const std::vector<std::string>& watched_titles,
                                        const std::vector<int>& ratings) {
    return store.append(MemoryKind::factual, factual_text(page, exposed_titles, watched_titles, ratings), page);
}

inline const MemoryEntry& write_emotional(MemoryStore& store, const std::string& feeling, int page) {
    if (trim(feeling).empty()) throw ArgumentError("emotional memory text is empty");
    return store.append(MemoryKind::emotional, feeling, page);
}

// ---------------------------------------------------------------------------
// Reflection
// ---------------------------------------------------------------------------

inline constexpr std::string_view kReflectionMarker = "describe your feeling about the recommendation result";

inline std::string render_memories(const std::vector<std::string>& texts) {
    if (texts.empty()) return "none";
    std::string out;
    for (std::size_t i = 0; i < texts.size(); ++i) out += (i ? "\n- " : "- ") + texts[i];
    return out;
}

inline std::vector<std::string> memory_texts(const std::vector<ScoredMemory>& ms) {
    std::vector<std::string> out;
    for (const auto& m : ms) out.push_back(m.entry->text);
    return out;
}

inline std::string build_reflection_prompt(const std::vector<std::string>& memories) {
    std::string p;
    p += "Relevant context from your memory:\n";
    p += render_memories(memories) + "\n";
    p += "Given only the information above, describe your feeling about the recommendation result using a sentence.\n";
    p += "The output format must be:\n";
    p += "[unsatisfied/satisfied] with the recommendation result because [reason]";
    return p;
}

struct Reflection {
    bool satisfied = false;
    std::string sentence;
};

// Polarity is the first of "unsatisfied"/"dissatisfied"/"satisfied" to appear.
inline Reflection parse_reflection(std::string_view text) {
    const std::string lower = to_lower(text);
    std::size_t neg = std::min(lower.find("unsatisfied"), lower.find("dissatisfied"));
    std::size_t pos = std::string::npos;
    for (std::size_t at = lower.find("satisfied"); at != std::string::npos; at = lower.find("satisfied", at + 1)) {
        const bool prefixed = (at >= 2 && lower.compare(at - 2, 2, "un") == 0) ||
                              (at >= 3 && lower.compare(at - 3, 3, "dis") == 0);
        if (!prefixed) {
            pos = at;
            break;
        }
    }
    if (neg == std::string::npos && pos == std::string::npos)
        throw ParseError("reflection has no satisfied/unsatisfied keyword");
    Reflection r;
    r.satisfied = pos < neg;
    const std::size_t at = std::min(pos, neg);
    // Keep the line holding the keyword as the stored sentence.
    const std::size_t begin = lower.rfind('\n', at) == std::string::npos ? 0 : lower.rfind('\n', at) + 1;
    const std::size_t end = lower.find('\n', at);
    r.sentence = strip_decoration(text.substr(begin, end == std::string::npos ? std::string_view::npos : end - begin));
    return r;
}

// Prompts with memories relevant to `query`, parses the polarity (one retry)
// and writes the sentence back as an emotional entry.
inline Reflection reflect(MemoryStore& store, Gateway& gateway, const std::string& query, int page,
                          std::size_t k = 5, Diagnostics* diag = nullptr, std::vector<Exchange>* transcript = nullptr) {
    const auto prompt = build_reflection_prompt(memory_texts(store.retrieve(query, k)));
    auto r = complete_and_parse(gateway, prompt, [](const std::string& t) { return parse_reflection(t); }, diag,
                                transcript, "reflection");
    write_emotional(store, r.sentence, page);
    return r;
}

}  // namespace agentrec
