#pragma once
// Run-wide warning counters. Thread-safe; surfaced in every run manifest.

#include <array>
#include <atomic>
#include <string_view>

#include "agentrec/common.hpp"
#include "agentrec/record.hpp"

namespace agentrec {

class Diagnostics {
  public:
    enum Counter : std::size_t {
        parse_retries,
        parse_failures,
        hallucinated_titles,
        clamped_ratings,
        num_mismatch,
        dropped_ratings,
        missing_items,
        unaligned_watch,
        unrated_watch,
        missing_watch_line,
        skipped_reactions,
        exit_unparseable,
        exit_ambiguous,
        exit_missing_polarity,
        interview_clamps,
        aborted_sessions,
        pruned_items,
        profile_failures,
        summary_title_leaks,
        alignment_skips,
        kCount
    };

    static constexpr std::array<std::string_view, kCount> kNames = {
        "parse_retries",       "parse_failures",      "hallucinated_titles", "clamped_ratings",
        "num_mismatch",        "dropped_ratings",     "missing_items",       "unaligned_watch",
        "unrated_watch",       "missing_watch_line",  "skipped_reactions",   "exit_unparseable",
        "exit_ambiguous",      "exit_missing_polarity", "interview_clamps",  "aborted_sessions",
        "pruned_items",        "profile_failures",    "summary_title_leaks", "alignment_skips"};

    void add(Counter c, long n = 1) { counters_[c].fetch_add(n, std::memory_order_relaxed); }
    long get(Counter c) const { return counters_[c].load(std::memory_order_relaxed); }

    void add(const ReactionWarnings& w) {
        add(hallucinated_titles, w.hallucinated_titles);
        add(num_mismatch, w.num_mismatch);
        add(dropped_ratings, w.dropped_ratings);
        add(clamped_ratings, w.clamped_ratings);
        add(missing_items, w.missing_items);
        add(unaligned_watch, w.unaligned_watch);
        add(unrated_watch, w.unrated_watch);
        add(missing_watch_line, w.missing_watch_line);
    }

    long total() const {
        long t = 0;
        for (const auto& c : counters_) t += c.load();
        return t;
    }

    json to_json() const {
        json j = json::object();
        for (std::size_t i = 0; i < kCount; ++i) j[std::string(kNames[i])] = counters_[i].load();
        return j;
    }

  private:
    std::array<std::atomic<long>, kCount> counters_{};
};

}  // namespace agentrec
