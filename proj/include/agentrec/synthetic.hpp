#pragma once
// Synthetic datasets for tests, acceptance runs and desk-scale demos.

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "agentrec/dataset.hpp"
#include "agentrec/recommenders.hpp"

namespace agentrec {

inline std::string padded_id(char prefix, std::size_t n, int width = 4) {
    std::string digits = std::to_string(n);
    if (static_cast<int>(digits.size()) < width) digits.insert(0, static_cast<std::size_t>(width) - digits.size(), '0');
    return std::string(1, prefix) + digits;
}

// ---------------------------------------------------------------------------
// Two communities: users and items split in halves; users interact with
// items of their own half with probability p_in and of the other with p_out.
// ---------------------------------------------------------------------------

struct TwoCommunityConfig {
    std::size_t users = 200;
    std::size_t items = 200;
    double p_in = 0.9;
    double p_out = 0.02;
    std::uint64_t seed = 0;
};

inline InteractionLog two_community_log(const TwoCommunityConfig& cfg) {
    std::mt19937_64 rng(mix_seed(cfg.seed, "two-community"));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<Interaction> rows;
    for (std::size_t u = 0; u < cfg.users; ++u) {
        const bool cu = u < cfg.users / 2;
        std::int64_t ts = 0;
        for (std::size_t i = 0; i < cfg.items; ++i) {
            const bool ci = i < cfg.items / 2;
            if (unit(rng) < (cu == ci ? cfg.p_in : cfg.p_out))
                rows.push_back({padded_id('u', u), padded_id('i', i), 5, ++ts});
        }
        if (ts == 0) rows.push_back({padded_id('u', u), padded_id('i', cu ? 0 : cfg.items - 1), 5, 1});
    }
    return InteractionLog(std::move(rows));
}

// Expected recall@k of a uniformly random ranking, averaged over users with
// positives: k / |candidates| per user (1 once k covers every candidate).
inline double random_recall_baseline(const ImplicitFeedback& positives, const ImplicitFeedback& exclude,
                                     std::size_t n_items, std::size_t k = 20) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& [user, pos] : positives) {
        if (pos.empty()) continue;
        auto it = exclude.find(user);
        const std::size_t excluded = it == exclude.end() ? 0 : it->second.size();
        const double cand = static_cast<double>(n_items - excluded);
        sum += std::min(1.0, static_cast<double>(k) / cand);
        ++n;
    }
    return n ? sum / static_cast<double>(n) : 0.0;
}

// ---------------------------------------------------------------------------
// Genre world: items with genres, popularity and quality; genre-locked users
// who draw most interactions from one or two liked genres and rate them up.
// ---------------------------------------------------------------------------

struct GenreWorldConfig {
    std::size_t users = 100;
    std::size_t items = 400;
    std::size_t genres = 8;              // first n catalog genres are used
    double secondary_genre_rate = 0.3;   // chance an item carries a second genre
    double liked_share = 0.85;           // share of a user's interactions from liked genres
    std::size_t min_interactions = 20;
    std::size_t max_interactions = 80;
    double two_genre_users = 0.3;        // chance a user likes two genres
    std::uint64_t seed = 0;
};

struct GenreWorld {
    InteractionLog log;
    ItemCatalog catalog;
    std::map<std::string, GenreSet> liked;  // user -> liked genres
    std::map<std::string, double> latent_quality;
};

inline GenreWorld genre_world(const GenreWorldConfig& cfg) {
    if (cfg.genres < 2 || cfg.genres > kGenreCount) throw ArgumentError("genre world needs 2..18 genres");
    std::mt19937_64 rng(mix_seed(cfg.seed, "genre-world"));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::lognormal_distribution<double> pop(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, 0.5);

    GenreWorld w;
    std::vector<std::string> ids;
    std::vector<double> weight, quality;
    std::vector<GenreSet> genres;
    for (std::size_t i = 0; i < cfg.items; ++i) {
        const auto id = padded_id('m', i);
        GenreSet g;
        g.set(i % cfg.genres);
        if (unit(rng) < cfg.secondary_genre_rate) g.set(static_cast<std::size_t>(unit(rng) * static_cast<double>(cfg.genres)) % cfg.genres);
        const int year = 1950 + static_cast<int>(mix_seed(cfg.seed, id) % 50);
        w.catalog[id] = {"Picture " + padded_id('#', i).substr(1) + " (" + std::to_string(year) + ")", g};
        ids.push_back(id);
        weight.push_back(pop(rng));
        quality.push_back(2.0 + 2.6 * unit(rng));
        genres.push_back(g);
        w.latent_quality[id] = quality.back();
    }

    std::vector<Interaction> rows;
    const double span = std::log(static_cast<double>(cfg.max_interactions) / static_cast<double>(cfg.min_interactions));
    for (std::size_t u = 0; u < cfg.users; ++u) {
        const auto uid = padded_id('u', u);
        GenreSet liked;
        liked.set(static_cast<std::size_t>(unit(rng) * static_cast<double>(cfg.genres)) % cfg.genres);
        if (unit(rng) < cfg.two_genre_users) liked.set(static_cast<std::size_t>(unit(rng) * static_cast<double>(cfg.genres)) % cfg.genres);
        w.liked[uid] = liked;
        // Long-tailed activity: log-uniform between the bounds.
        const auto n = static_cast<std::size_t>(std::lround(static_cast<double>(cfg.min_interactions) * std::exp(span * unit(rng) * unit(rng))));
        std::vector<std::size_t> in, out;
        for (std::size_t i = 0; i < cfg.items; ++i) ((genres[i] & liked).any() ? in : out).push_back(i);
        std::set<std::size_t> chosen;
        auto draw = [&](std::vector<std::size_t>& from) {
            double total = 0.0;
            for (auto i : from) total += chosen.count(i) ? 0.0 : weight[i];
            if (total <= 0.0) return false;
            double r = unit(rng) * total;
            for (auto i : from) {
                if (chosen.count(i)) continue;
                r -= weight[i];
                if (r <= 0.0) {
                    chosen.insert(i);
                    return true;
                }
            }
            for (auto it = from.rbegin(); it != from.rend(); ++it)
                if (!chosen.count(*it)) return chosen.insert(*it), true;
            return false;
        };
        std::size_t guard = 0;
        while (chosen.size() < std::min(n, cfg.items) && guard++ < 10 * cfg.items) {
            if (!draw(unit(rng) < cfg.liked_share ? in : out)) draw(in.empty() ? out : (out.empty() ? in : out));
        }
        std::int64_t ts = 1'000'000;
        for (auto i : chosen) {
            const bool likes = (genres[i] & liked).any();
            const double r = quality[i] + (likes ? 0.7 : -1.5) + noise(rng);
            rows.push_back({uid, ids[i], std::clamp(static_cast<int>(std::lround(r)), 1, 5), ts++});
        }
    }
    w.log = InteractionLog(std::move(rows));
    return w;
}

}  // namespace agentrec
