#pragma once
// Social traits (activity, conformity, diversity) of real users, their tier
// labels, the same quantities measured on simulated behaviour, and the one-way
// ANOVA used to compare tiers.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "agentrec/dataset.hpp"
#include "agentrec/record.hpp"
#include "agentrec/stats.hpp"

namespace agentrec {

enum class TraitKind { activity, conformity, diversity };
enum class TierLevel { low, medium, high };

inline constexpr std::array<TraitKind, 3> kTraitKinds = {TraitKind::activity, TraitKind::conformity,
                                                         TraitKind::diversity};
inline constexpr std::array<TierLevel, 3> kTierLevels = {TierLevel::low, TierLevel::medium, TierLevel::high};

inline std::string_view to_string(TraitKind k) {
    switch (k) {
        case TraitKind::activity: return "activity";
        case TraitKind::conformity: return "conformity";
        case TraitKind::diversity: return "diversity";
    }
    return "?";
}

inline std::string_view to_string(TierLevel l) {
    switch (l) {
        case TierLevel::low: return "low";
        case TierLevel::medium: return "medium";
        case TierLevel::high: return "high";
    }
    return "?";
}

inline TraitKind parse_trait_kind(std::string_view s) {
    for (auto k : kTraitKinds)
        if (to_string(k) == s) return k;
    throw ArgumentError("unknown trait kind: " + std::string(s));
}

inline TierLevel parse_tier_level(std::string_view s) {
    for (auto l : kTierLevels)
        if (to_string(l) == s) return l;
    throw ArgumentError("unknown tier level: " + std::string(s));
}

struct TraitVector {
    int activity = 0;
    double conformity = 0.0;
    int diversity = 0;
};

struct TierLabel {
    TraitKind trait;
    TierLevel level;
};

struct SimScoreVector {
    int activity = 0;
    std::optional<double> conformity;  // absent when nothing was viewed
    int diversity = 0;
};

// ---------------------------------------------------------------------------
// Ground-truth traits
// ---------------------------------------------------------------------------

inline int activity_trait(std::span<const Interaction> history) { return static_cast<int>(history.size()); }

inline double conformity_trait(std::span<const Interaction> history, const ItemStatsMap& stats) {
    if (history.empty()) throw UndefinedResultError("conformity of an empty history is undefined");
    double sum = 0.0;
    for (const auto& r : history) {
        auto it = stats.find(r.item);
        if (it == stats.end()) throw ArgumentError("no statistics for item " + r.item);
        const double d = r.rating - it->second.quality;
        sum += d * d;
    }
    return sum / static_cast<double>(history.size());
}

inline int diversity_trait(std::span<const Interaction> history, const ItemStatsMap& stats) {
    GenreSet all;
    for (const auto& r : history) {
        auto it = stats.find(r.item);
        if (it == stats.end()) throw ArgumentError("no genres for item " + r.item);
        all |= it->second.genres;
    }
    return static_cast<int>(all.count());
}

inline TraitVector trait_vector(std::span<const Interaction> history, const ItemStatsMap& stats) {
    return {activity_trait(history), history.empty() ? 0.0 : conformity_trait(history, stats),
            diversity_trait(history, stats)};
}

// ---------------------------------------------------------------------------
// Tiers
// ---------------------------------------------------------------------------

// low:medium:high bucket ratios over users sorted by ascending trait value.
inline std::array<double, 3> tier_ratio(TraitKind kind) {
    switch (kind) {
        case TraitKind::activity: return {6, 3, 1};
        case TraitKind::conformity: return {1, 2, 1};
        case TraitKind::diversity: return {1, 1, 1};
    }
    throw ArgumentError("unknown trait kind");
}

inline std::map<std::string, TierLevel> assign_tiers(const std::map<std::string, double>& values, TraitKind kind) {
    if (values.empty()) throw ArgumentError("assign_tiers needs at least one user");
    std::vector<std::pair<std::string, double>> sorted(values.begin(), values.end());
    // std::map iteration already orders by user id, so a stable sort breaks ties by id.
    std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.second < b.second; });
    const auto ratio = tier_ratio(kind);
    const auto counts = apportion(sorted.size(), ratio);
    std::map<std::string, TierLevel> out;
    std::size_t k = 0;
    for (std::size_t bucket = 0; bucket < 3; ++bucket)
        for (std::size_t n = 0; n < counts[bucket]; ++n, ++k) out[sorted[k].first] = kTierLevels[bucket];
    return out;
}

// ---------------------------------------------------------------------------
// Simulated behaviour scores
// ---------------------------------------------------------------------------

inline SimScoreVector simulated_scores(const SimRecord& record, const ItemStatsMap& stats) {
    SimScoreVector out;
    const auto viewed = record.viewed();
    out.activity = static_cast<int>(viewed.size());
    if (viewed.empty()) return out;
    double sum = 0.0;
    GenreSet genres;
    for (const auto& [item, rating] : viewed) {
        auto it = stats.find(item);
        if (it == stats.end()) throw ArgumentError("no statistics for viewed item " + item);
        const double d = rating - it->second.quality;
        sum += d * d;
        genres |= it->second.genres;
    }
    out.conformity = sum / static_cast<double>(viewed.size());
    out.diversity = static_cast<int>(genres.count());
    return out;
}

// ---------------------------------------------------------------------------
// One-way ANOVA
// ---------------------------------------------------------------------------

struct AnovaResult {
    double f = 0.0;
    double p = 1.0;
    int df_between = 0;
    int df_within = 0;
};

inline AnovaResult anova_f_test(std::span<const std::vector<double>> groups) {
    if (groups.size() < 2) throw ArgumentError("anova needs at least two groups");
    std::size_t total = 0;
    double grand_sum = 0.0;
    for (const auto& g : groups) {
        if (g.empty()) throw ArgumentError("anova group is empty");
        total += g.size();
        for (double v : g) grand_sum += v;
    }
    const int k = static_cast<int>(groups.size());
    if (total <= groups.size()) throw ArgumentError("anova needs more observations than groups");
    const double grand = grand_sum / static_cast<double>(total);
    double ss_between = 0.0, ss_within = 0.0;
    for (const auto& g : groups) {
        double s = 0.0;
        for (double v : g) s += v;
        const double m = s / static_cast<double>(g.size());
        ss_between += static_cast<double>(g.size()) * (m - grand) * (m - grand);
        for (double v : g) ss_within += (v - m) * (v - m);
    }
    AnovaResult r;
    r.df_between = k - 1;
    r.df_within = static_cast<int>(total) - k;
    const double ms_between = ss_between / r.df_between;
    const double ms_within = ss_within / r.df_within;
    if (ms_within == 0.0) {
        if (ms_between == 0.0) return r;  // F = 0, p = 1
        r.f = std::numeric_limits<double>::infinity();
        r.p = 0.0;
        return r;
    }
    r.f = ms_between / ms_within;
    r.p = stats::f_survival(r.f, r.df_between, r.df_within);
    return r;
}

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

struct TraitRow {
    std::string user;
    double value = 0.0;
    TierLevel tier = TierLevel::low;
    std::optional<double> sim;
};

// Rows in descending trait order with trailing 5-user rolling means of the
// trait value and of the simulated score.
inline void write_trait_csv(std::ostream& out, TraitKind kind, std::vector<TraitRow> rows) {
    std::stable_sort(rows.begin(), rows.end(), [](const TraitRow& a, const TraitRow& b) {
        if (a.value != b.value) return a.value > b.value;
        return a.user < b.user;
    });
    out << "user,trait,value,tier,sim_score,value_rolling5,sim_rolling5\n";
    constexpr std::size_t kWindow = 5;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const std::size_t lo = i + 1 >= kWindow ? i + 1 - kWindow : 0;
        double vs = 0.0, ss = 0.0;
        int sn = 0;
        for (std::size_t j = lo; j <= i; ++j) {
            vs += rows[j].value;
            if (rows[j].sim) {
                ss += *rows[j].sim;
                ++sn;
            }
        }
        const auto& r = rows[i];
        out << r.user << ',' << to_string(kind) << ',' << format_fixed(r.value, 6) << ',' << to_string(r.tier) << ','
            << (r.sim ? format_fixed(*r.sim, 6) : "") << ',' << format_fixed(vs / static_cast<double>(i - lo + 1), 6)
            << ',' << (sn ? format_fixed(ss / sn, 6) : "") << '\n';
    }
}

}  // namespace agentrec
