#include <catch_amalgamated.hpp>

#include "agentrec/simulation.hpp"
#include "support.hpp"

using namespace agentrec;
using namespace testing;

namespace {

// A record with `pages` pages of `per_page` exposures; each rating is one
// watched item on page 1.
SimRecord make_record(std::string agent, int pages, int per_page, std::vector<int> ratings, int exit_page,
                      std::optional<int> interview) {
    SimRecord r;
    r.agent = std::move(agent);
    int id = 0;
    for (int p = 1; p <= pages; ++p) {
        PageRecord page;
        page.page = p;
        for (int k = 0; k < per_page; ++k) page.exposed.push_back("i" + std::to_string(id++));
        r.pages.push_back(std::move(page));
    }
    for (std::size_t k = 0; k < ratings.size(); ++k) {
        const auto& item = r.pages[0].exposed[k];
        r.pages[0].reaction.alignment.push_back({item, true, ""});
        r.pages[0].reaction.watched.push_back(item);
        r.pages[0].reaction.ratings.push_back({item, ratings[k], ""});
    }
    r.exit_page = exit_page;
    if (interview) r.interview = InterviewResult{*interview, "", false};
    return r;
}

AgentProfile persona(std::string user, std::string taste, TierLevel activity = TierLevel::medium) {
    AgentProfile p;
    p.user_id = std::move(user);
    p.activity = activity;
    p.conformity = TierLevel::medium;
    p.diversity = TierLevel::medium;
    p.tastes = {std::move(taste)};
    p.high_rating_tendency = "I rate favourites highly.";
    p.low_rating_tendency = "I rate the rest low.";
    return p;
}

std::string records_digest(const std::vector<SimRecord>& records) {
    std::string all;
    for (const auto& r : records) all += to_json(r).dump() + '\n';
    return sha256_hex(all);
}

}  // namespace

TEST_CASE("aggregate metrics for one agent") {
    // 8 exposures, 4 views, ratings {5,4,3,2} -> 2 likes, exit 2, interview 6.
    const auto r = make_record("a", 2, 4, {5, 4, 3, 2}, 2, 6);
    const auto m = aggregate_metrics({r});
    CHECK(m.p_view == 0.5);
    CHECK(m.n_like == 2.0);
    CHECK(m.p_like == 0.25);
    CHECK(m.n_exit == 2.0);
    CHECK(m.s_sat == 6.0);
    CHECK(m.agents == 1);
}

TEST_CASE("aggregate metrics are macro averages") {
    // P_view 1/4 and 3/4 average to 0.5 regardless of exposure counts.
    const auto a = make_record("a", 1, 4, {4}, 1, 3);
    const auto b = make_record("b", 2, 2, {4, 4, 4}, 2, std::nullopt);
    const auto m = aggregate_metrics({a, b});
    CHECK(m.p_view == Catch::Approx(0.5).margin(1e-12));
    CHECK(m.n_exit == 1.5);
    CHECK(m.s_sat == 3.0);
    CHECK(m.interviewed == 1);
    auto bad = a;
    bad.valid = false;
    CHECK_THROWS_AS(aggregate_metrics({}), UndefinedResultError);
    CHECK_THROWS_AS(aggregate_metrics({bad}), UndefinedResultError);
    CHECK(aggregate_metrics({bad, b}).agents == 1);

    std::ostringstream csv;
    write_metrics_csv(csv, m);
    CHECK(csv.str().rfind("P_view,N_like,P_like,N_exit,S_sat\n", 0) == 0);
}

TEST_CASE("rating distribution") {
    const auto h = rating_distribution({make_record("a", 1, 4, {4, 4, 5}, 1, 5)});
    CHECK(h.total == 3);
    CHECK(h.proportions[0] == 0.0);
    CHECK(h.proportions[2] == 0.0);
    CHECK(h.proportions[3] == Catch::Approx(2.0 / 3.0).margin(1e-12));
    CHECK(h.proportions[4] == Catch::Approx(1.0 / 3.0).margin(1e-12));
    const auto empty = rating_distribution({});
    CHECK(empty.total == 0);
    for (double p : empty.proportions) CHECK(p == 0.0);
}

TEST_CASE("scripted simulation: replay, determinism and session invariants") {
    auto pop = scripted_population({.users = 100, .items = 400, .seed = 3});
    REQUIRE(pop.agents.size() == 100);
    auto rec = fit_random(pop.pool);
    SimulationConfig cfg;
    cfg.threads = 4;
    cfg.session.seed = 3;
    const auto res = run_simulation(pop.agents, *rec, *pop.gateway, pop.items, pop.pool, pop.train, cfg);
    REQUIRE(res.records.size() == 100);
    CHECK(res.aborted == 0);
    CHECK_FALSE(res.failed);

    SECTION("every record respects watch <= aligned <= exposed and the page cap") {
        for (const auto& r : res.records) {
            CHECK(r.exit_page >= 1);
            CHECK(r.exit_page <= 5);
            const auto& train = pop.train.at(r.agent);
            for (const auto& p : r.pages) {
                const std::set<std::string> exposed(p.exposed.begin(), p.exposed.end());
                CHECK(exposed.size() == p.exposed.size());
                for (const auto& i : p.exposed) CHECK_FALSE(train.count(i));
                const auto aligned = p.reaction.aligned_set();
                for (const auto& a : aligned) CHECK(exposed.count(a));
                for (const auto& w : p.reaction.watched) CHECK(aligned.count(w));
                CHECK(p.reaction.warnings.total() == 0);
            }
        }
    }

    SECTION("metrics equal an independent recount of the JSONL records") {
        std::stringstream jsonl;
        for (const auto& r : res.records) jsonl << to_json(r).dump() << '\n';
        double p_view = 0, n_like = 0, p_like = 0, n_exit = 0, s_sat = 0;
        std::array<std::size_t, 5> counts{};
        std::size_t n = 0, total = 0, interviewed = 0;
        for (std::string line; std::getline(jsonl, line);) {
            const auto j = json::parse(line);
            double expose = 0, view = 0, like = 0;
            for (const auto& p : j["pages"]) {
                expose += static_cast<double>(p["exposed"].size());
                view += static_cast<double>(p["watched"].size());
                for (const auto& x : p["ratings"]) {
                    const int v = x["rating"].get<int>();
                    if (v >= 4) ++like;
                    ++counts[static_cast<std::size_t>(v - 1)];
                    ++total;
                }
            }
            p_view += view / expose;
            n_like += like;
            p_like += like / expose;
            n_exit += j["exit_page"].get<double>();
            if (!j["interview"].is_null()) {
                s_sat += j["interview"]["score"].get<double>();
                ++interviewed;
            }
            ++n;
        }
        const auto m = aggregate_metrics(res.records);
        CHECK(std::abs(m.p_view - p_view / n) < 1e-12);
        CHECK(std::abs(m.n_like - n_like / n) < 1e-12);
        CHECK(std::abs(m.p_like - p_like / n) < 1e-12);
        CHECK(std::abs(m.n_exit - n_exit / n) < 1e-12);
        CHECK(std::abs(m.s_sat - s_sat / interviewed) < 1e-12);
        const auto h = rating_distribution(res.records);
        CHECK(h.total == total);
        CHECK(h.counts == counts);
    }

    SECTION("fixed seed gives byte-identical records") {
        cfg.threads = 1;
        const auto again = run_simulation(pop.agents, *rec, *pop.gateway, pop.items, pop.pool, pop.train, cfg);
        CHECK(records_digest(again.records) == records_digest(res.records));
        cfg.session.seed = 4;
        const auto other = run_simulation(pop.agents, *rec, *pop.gateway, pop.items, pop.pool, pop.train, cfg);
        CHECK(records_digest(other.records) != records_digest(res.records));
    }
}

TEST_CASE("genre oracle recommender beats random on P_like") {
    auto pop = scripted_population({.users = 60, .items = 300, .seed = 1});
    GenreOracleRecommender oracle(pop.liked, &pop.items);
    auto random = fit_random(pop.pool);
    SimulationConfig cfg;
    cfg.threads = 2;
    const auto a = aggregate_metrics(
        run_simulation(pop.agents, oracle, *pop.gateway, pop.items, pop.pool, pop.train, cfg).records);
    const auto b = aggregate_metrics(
        run_simulation(pop.agents, *random, *pop.gateway, pop.items, pop.pool, pop.train, cfg).records);
    CHECK(a.p_like > b.p_like);
    CHECK(a.p_view > b.p_view);
}

TEST_CASE("abort rate above the limit fails the run") {
    std::vector<AgentProfile> agents;
    for (int i = 0; i < 20; ++i)
        agents.push_back(persona(padded_id('u', static_cast<std::size_t>(i)),
                                 i == 0 ? "I enjoy Horror movies." : "I enjoy Comedy movies."));
    ItemStatsMap stats;
    for (int i = 0; i < 40; ++i)
        stats[padded_id('m', static_cast<std::size_t>(i))] = {3.5, 5, genres_of({i % 2 ? "Comedy" : "Horror"}),
                                                               "Title " + std::to_string(i) + " (1990)"};
    const auto items = direct_item_profiles(stats);
    const auto pool = kept_pool(items);
    // Any prompt carrying the Horror taste fails terminally.
    struct Picky : TextBackend {
        ScriptedBackend inner;
        explicit Picky(ScriptedWorld w) : inner(std::move(w)) {}
        std::string complete(const CompletionRequest& r) override {
            if (r.prompt.find("Horror movies") != std::string::npos) throw BackendError("refused", false);
            return inner.complete(r);
        }
        std::vector<double> embed(const std::string& t) override { return hashed_embedding(t); }
        std::string mode() const override { return "picky"; }
    };
    Gateway gw(std::make_shared<Picky>(ScriptedWorld::from_stats(stats)));
    auto rec = fit_random(pool);
    SimulationConfig cfg;
    cfg.threads = 2;
    // 1 of 20 is exactly 5%: tolerated.
    auto res = run_simulation(agents, *rec, gw, items, pool, {}, cfg);
    CHECK(res.aborted == 1);
    CHECK_FALSE(res.records[0].valid);
    CHECK_FALSE(res.failed);
    CHECK(aggregate_metrics(res.records).agents == 19);
    CHECK(res.valid_records().size() == 19);
    agents[1].tastes = {"I enjoy Horror movies."};
    res = run_simulation(agents, *rec, gw, items, pool, {}, cfg);
    CHECK(res.aborted == 2);
    CHECK(res.failed);
}

TEST_CASE("taste alignment") {
    // One Comedy fan who touched every Comedy title; distractors are all Horror.
    ItemStatsMap stats;
    ImplicitFeedback held, touched;
    for (int i = 0; i < 60; ++i) {
        const auto id = padded_id('m', static_cast<std::size_t>(i));
        const bool comedy = i < 30;
        stats[id] = {3.5, 5, genres_of({comedy ? "Comedy" : "Horror"}), "Title " + std::to_string(i) + " (1990)"};
        if (comedy) {
            touched["u1"].insert(id);
            touched["u2"].insert(id);
            if (i >= 5) held["u1"].insert(id);
            if (i >= 5) held["u2"].insert(id);
        }
    }
    const auto items = direct_item_profiles(stats);
    Gateway gw(std::make_shared<ScriptedBackend>(ScriptedWorld::from_stats(stats)));
    std::vector<AgentProfile> fans = {persona("u1", "I enjoy Comedy movies."), persona("u2", "I enjoy Comedy movies.")};
    AlignmentInputs in{&fans, &held, &touched, &items, 20, 7, 2};

    CHECK(alignment_positives(1) == 10);
    CHECK(alignment_positives(2) == 7);
    CHECK(alignment_positives(3) == 5);
    CHECK(alignment_positives(9) == 2);
    CHECK_THROWS_AS(alignment_positives(0), ArgumentError);

    for (int m : {1, 2, 3, 9}) {
        const auto rep = alignment_experiment(in, m, gw);
        CHECK(rep.agents == 2);
        CHECK(rep.decisions() == 40);
        CHECK(rep.accuracy == 1.0);
        CHECK(rep.f1 == 1.0);
        CHECK(rep.tp == 2 * alignment_positives(m));
    }

    SECTION("an agent that accepts everything scores the positive share") {
        std::vector<AgentProfile> yes = {persona("u1", "I enjoy Comedy and Horror movies."),
                                         persona("u2", "I enjoy Comedy and Horror movies.")};
        in.profiles = &yes;
        for (int m : {1, 3}) {
            const auto rep = alignment_experiment(in, m, gw);
            const double share = static_cast<double>(alignment_positives(m)) / 20.0;
            CHECK(std::abs(rep.accuracy - share) < 1e-12);
            CHECK(std::abs(rep.precision - share) < 1e-12);
            CHECK(rep.recall == 1.0);
            CHECK(rep.tn == 0);
            CHECK(std::abs(rep.macro_accuracy - share) < 1e-12);
        }
    }

    SECTION("agents without enough held-out positives are skipped") {
        std::vector<AgentProfile> three = {fans[0], fans[1], persona("u3", "I enjoy Comedy movies.")};
        in.profiles = &three;
        const auto rep = alignment_experiment(in, 1, gw);
        CHECK(rep.skipped == 1);
        CHECK(rep.decisions() == 20 * rep.agents);
    }
}

TEST_CASE("augmentation: origin reproduces the base model") {
    auto pop = scripted_population({.users = 60, .items = 200, .genres = 4, .seed = 2});
    const auto val = implicit_feedback(pop.split.validation), test = implicit_feedback(pop.split.test);
    TrainConfig cfg;
    cfg.seed = 2;
    cfg.batch_size = 256;
    cfg.max_epochs = 40;
    auto rec = fit_random(pop.pool);
    SimulationConfig sc;
    sc.threads = 2;
    const auto res = run_simulation(pop.agents, *rec, *pop.gateway, pop.items, pop.pool, pop.train, sc);
    AugmentationInputs in;
    in.train = &pop.train;
    in.validation = &val;
    in.test = &test;
    in.records = &res.records;
    in.config = cfg;
    in.extra_items = pop.pool;
    int reruns = 0;
    const auto rows = augmentation_experiment(in, [&](const Recommender&) {
        ++reruns;
        return SimMetrics{};
    });
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].mode == "origin");
    CHECK(rows[1].mode == "+unviewed");
    CHECK(rows[2].mode == "+viewed");
    CHECK(reruns == 3);
    const auto base = fit_mf(pop.train, val, cfg, pop.pool);
    const auto direct = evaluate_offline(*base, test, merge_feedback(pop.train, val));
    CHECK(rows[0].offline.recall == direct.recall);
    CHECK(rows[0].offline.ndcg == direct.ndcg);
    CHECK(rows[0].train_size == feedback_size(pop.train));
    CHECK(rows[1].train_size ==
          feedback_size(merge_feedback(pop.train, feedback_from_records(res.records, FeedbackMode::unviewed))));
    CHECK(rows[2].train_size ==
          feedback_size(merge_feedback(pop.train, feedback_from_records(res.records, FeedbackMode::viewed))));
    // Viewed and unviewed feedback partition the exposures.
    for (const auto& r : res.records) {
        const auto v = r.viewed();
        for (const auto& i : r.unviewed_exposed()) CHECK_FALSE(v.count(i));
        CHECK(v.size() + r.unviewed_exposed().size() == r.exposed_items().size());
    }

    std::ostringstream csv;
    write_augmentation_csv(csv, rows);
    CHECK(csv.str().rfind("mode,train_size,recall,ndcg,N_exit,S_sat\n", 0) == 0);
}

TEST_CASE("genre concentration") {
    ItemStatsMap stats;
    std::vector<std::string> top;
    for (int i = 0; i < 20; ++i) {
        const auto id = padded_id('m', static_cast<std::size_t>(i));
        stats[id] = {3.5, 5, genres_of({i < 12 ? "Comedy" : "Drama"}), "T (1990)"};
        top.push_back(id);
    }
    auto items = direct_item_profiles(stats);
    const auto c = genre_concentration(top, items);
    CHECK(c.top1_share == Catch::Approx(0.6).margin(1e-12));
    CHECK(c.distinct == 2);
    for (auto& [id, p] : items) p.genres = genres_of({"War"});
    const auto one = genre_concentration(top, items);
    CHECK(one.top1_share == 1.0);
    CHECK(one.distinct == 1);
    // A two-genre item counts for both.
    items.at(top[0]).genres = genres_of({"War", "Western"});
    const auto multi = genre_concentration({top[0], top[1]}, items);
    CHECK(multi.top1_share == Catch::Approx(2.0 / 3.0).margin(1e-12));
    CHECK(multi.distinct == 2);
}

TEST_CASE("pool partition") {
    std::vector<std::string> pool;
    for (int i = 0; i < 103; ++i) pool.push_back(padded_id('m', static_cast<std::size_t>(i)));
    const auto parts = partition_pool(pool, 4, 9);
    REQUIRE(parts.size() == 4);
    CHECK(parts[0].size() == 25);
    CHECK(parts[3].size() == 28);
    std::set<std::string> all;
    for (const auto& p : parts) all.insert(p.begin(), p.end());
    CHECK(all.size() == 103);
    CHECK(partition_pool(pool, 4, 9) == parts);
    auto reversed = pool;
    std::reverse(reversed.begin(), reversed.end());
    CHECK(partition_pool(reversed, 4, 9) == parts);
    CHECK_THROWS_AS(partition_pool(pool, 0, 9), ArgumentError);
}

TEST_CASE("filter bubble rounds") {
    auto pop = scripted_population({.users = 40, .items = 200, .genres = 4, .seed = 5});
    const auto val = implicit_feedback(pop.split.validation);
    BubbleInputs in;
    in.profiles = &pop.agents;
    in.items = &pop.items;
    in.pool = &pop.pool;
    in.train = &pop.train;
    in.validation = &val;
    in.config.batch_size = 256;
    in.config.max_epochs = 20;
    in.sim.threads = 2;
    in.seed = 5;
    const auto rep = filter_bubble_experiment(in, *pop.gateway);
    REQUIRE(rep.rounds.size() == 4);
    CHECK(rep.pools_disjoint());
    const auto parts = partition_pool(pop.pool, 4, 5);
    for (std::size_t t = 0; t < 4; ++t) {
        const auto& r = rep.rounds[t];
        CHECK(r.round == static_cast<int>(t) + 1);
        CHECK(r.pool_size == parts[t].size());
        const std::set<std::string> part(parts[t].begin(), parts[t].end());
        for (const auto& i : r.recommended) CHECK(part.count(i));
        CHECK(r.top1_share > 0.0);
        CHECK(r.top1_share <= 1.0);
        CHECK(r.n_genres >= 1.0);
        CHECK(r.n_genres <= 18.0);
        CHECK(r.viewed > 0);
    }
    std::ostringstream csv;
    write_bubble_csv(csv, rep);
    const auto text = csv.str();
    CHECK(std::count(text.begin(), text.end(), '\n') == 5);
}
