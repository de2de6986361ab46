#pragma once
// Shared fixtures and oracles for the test binaries.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <unistd.h>

#include "agentrec/agent.hpp"
#include "agentrec/dataset.hpp"
#include "agentrec/llm.hpp"
#include "agentrec/profiles.hpp"
#include "agentrec/recommenders.hpp"
#include "agentrec/scripted.hpp"
#include "agentrec/synthetic.hpp"
#include "agentrec/traits.hpp"

namespace testing {

using namespace agentrec;
namespace fs = std::filesystem;

class TempDir {
  public:
    explicit TempDir(const std::string& tag = "t") {
        static std::atomic<int> counter{0};
        path_ = fs::temp_directory_path() /
                ("agentrec-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& rel) const { return path_ / rel; }

  private:
    fs::path path_;
};

inline void write_file(const fs::path& p, const std::string& text) {
    fs::create_directories(p.parent_path());
    std::ofstream(p, std::ios::binary) << text;
}

inline std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline GenreSet genres_of(std::initializer_list<const char*> names) {
    GenreSet g;
    for (auto n : names) g.set(*genre_index(n));
    return g;
}

// Backend wrapper that counts calls and can fail on demand.
class CountingBackend : public TextBackend {
  public:
    explicit CountingBackend(std::shared_ptr<TextBackend> inner) : inner_(std::move(inner)) {}
    std::string complete(const CompletionRequest& r) override {
        ++completions;
        if (fail_remaining > 0) {
            --fail_remaining;
            throw BackendError("injected failure", retryable_failures);
        }
        return inner_->complete(r);
    }
    std::vector<double> embed(const std::string& t) override {
        ++embeddings;
        return inner_->embed(t);
    }
    std::string mode() const override { return inner_->mode(); }

    std::atomic<int> completions{0}, embeddings{0};
    std::atomic<int> fail_remaining{0};
    bool retryable_failures = true;

  private:
    std::shared_ptr<TextBackend> inner_;
};

// Returns canned text for every prompt.
class FixedBackend : public TextBackend {
  public:
    explicit FixedBackend(std::vector<std::string> replies) : replies_(std::move(replies)) {}
    std::string complete(const CompletionRequest& r) override {
        prompts.push_back(r.prompt);
        const auto i = std::min(next_++, replies_.size() - 1);
        return replies_[i];
    }
    std::vector<double> embed(const std::string& t) override { return hashed_embedding(t); }
    std::string mode() const override { return "fixed"; }
    std::vector<std::string> prompts;

  private:
    std::vector<std::string> replies_;
    std::size_t next_ = 0;
};

// Recommends items whose genres meet the agent's liked genres first, then the
// rest, each group in a seeded shuffle.
class GenreOracleRecommender : public Recommender {
  public:
    GenreOracleRecommender(std::map<std::string, GenreSet> liked, const ItemProfileMap* items)
        : liked_(std::move(liked)), items_(items) {}
    std::string strategy() const override { return "genre-oracle"; }
    RankedList recommend(const RecommendRequest& req) const override {
        std::vector<std::string> match, rest;
        const GenreSet liked = liked_.count(req.user) ? liked_.at(req.user) : GenreSet{};
        auto consider = [&](const std::string& id) {
            if (req.exclude && req.exclude->count(id)) return;
            auto it = items_->find(id);
            if (it == items_->end()) return;
            ((it->second.genres & liked).any() ? match : rest).push_back(id);
        };
        if (req.candidates)
            for (const auto& id : *req.candidates) consider(id);
        else
            for (const auto& [id, p] : *items_) consider(id);
        std::mt19937_64 rng(mix_seed(req.seed, "oracle:" + req.user));
        std::shuffle(match.begin(), match.end(), rng);
        std::shuffle(rest.begin(), rest.end(), rng);
        RankedList out;
        for (auto* group : {&match, &rest})
            for (const auto& id : *group) {
                if (out.size() >= req.k) return out;
                out.push_back({id, group == &match ? 1.0 : 0.0});
            }
        return out;
    }

  private:
    std::map<std::string, GenreSet> liked_;
    const ItemProfileMap* items_;
};

// Item profiles straight from statistics, skipping generation.
inline ItemProfileMap direct_item_profiles(const ItemStatsMap& stats) {
    ItemProfileMap out;
    for (const auto& [id, s] : stats) {
        ItemProfile p;
        p.item_id = id;
        p.title = s.title.empty() ? id : s.title;
        p.quality = s.quality;
        p.popularity = s.popularity;
        p.genres = s.genres;
        p.llm_genres = s.genres;
        p.summary = "A story worth a look.";
        out[id] = p;
    }
    return out;
}

inline std::vector<std::string> kept_pool(const ItemProfileMap& items) {
    std::vector<std::string> out;
    for (const auto& [id, p] : items)
        if (p.kept) out.push_back(id);
    return out;
}

// Interaction log from compact (user, item, rating) triples; timestamps follow input order.
inline InteractionLog make_log(const std::vector<std::tuple<std::string, std::string, int>>& rows) {
    std::vector<Interaction> out;
    std::int64_t ts = 0;
    for (const auto& [u, i, r] : rows) out.push_back({u, i, r, ++ts});
    return InteractionLog(std::move(out));
}

// A genre world with scripted profiles and direct item profiles, ready to simulate.
struct Population {
    GenreWorld world;
    ItemStatsMap stats;
    Split split;
    ItemProfileMap items;
    std::vector<std::string> pool;
    std::vector<AgentProfile> agents;
    ImplicitFeedback train;
    std::map<std::string, GenreSet> liked;
    std::shared_ptr<Gateway> gateway;
};

inline std::map<std::string, TierAssignment> tiers_for(const InteractionLog& log, const ItemStatsMap& stats) {
    std::array<std::map<std::string, double>, 3> values;
    for (const auto& u : log.users()) {
        const auto t = trait_vector(log.history(u), stats);
        values[0][u] = t.activity;
        values[1][u] = t.conformity;
        values[2][u] = t.diversity;
    }
    std::array<std::map<std::string, TierLevel>, 3> tiers;
    for (std::size_t k = 0; k < 3; ++k) tiers[k] = assign_tiers(values[k], kTraitKinds[k]);
    std::map<std::string, TierAssignment> out;
    for (const auto& u : log.users()) out[u] = {tiers[0].at(u), tiers[1].at(u), tiers[2].at(u)};
    return out;
}

inline Population scripted_population(const GenreWorldConfig& cfg, std::size_t profile_items = 25) {
    Population p;
    p.world = genre_world(cfg);
    p.stats = item_stats(p.world.log, p.world.catalog);
    p.split = split_per_user(p.world.log, {}, cfg.seed);
    p.train = implicit_feedback(p.split.train);
    ItemStatsMap train_stats;
    for (const auto& i : p.split.train.items()) train_stats[i] = p.stats.at(i);
    p.items = direct_item_profiles(train_stats);
    p.pool = kept_pool(p.items);
    p.gateway = std::make_shared<Gateway>(std::make_shared<ScriptedBackend>(ScriptedWorld::from_stats(p.stats)));
    const auto tiers = tiers_for(p.world.log, p.stats);
    for (const auto& u : p.split.train.users()) {
        auto prof = build_agent_profile(u, p.split.train.history(u), tiers.at(u), p.stats, *p.gateway, cfg.seed, nullptr,
                                        profile_items);
        p.liked[u] = genres_mentioned(join(prof.tastes, " "));
        p.agents.push_back(std::move(prof));
    }
    return p;
}

}  // namespace testing
