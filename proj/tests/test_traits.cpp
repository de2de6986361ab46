#include <catch_amalgamated.hpp>

#include <boost/math/distributions/fisher_f.hpp>

#include "agentrec/simulation.hpp"
#include "agentrec/traits.hpp"
#include "support.hpp"

using namespace agentrec;
using namespace testing;

namespace {

// Textbook one-way ANOVA via the total/within decomposition and Boost's F distribution.
std::pair<double, double> textbook_anova(const std::vector<std::vector<double>>& groups) {
    double n = 0, sum = 0;
    for (const auto& g : groups)
        for (double v : g) {
            sum += v;
            n += 1;
        }
    const double grand = sum / n;
    double sst = 0, ssw = 0;
    for (const auto& g : groups) {
        double m = 0;
        for (double v : g) m += v;
        m /= static_cast<double>(g.size());
        for (double v : g) {
            sst += (v - grand) * (v - grand);
            ssw += (v - m) * (v - m);
        }
    }
    const double k = static_cast<double>(groups.size());
    const double ssb = sst - ssw;
    const double f = (ssb / (k - 1)) / (ssw / (n - k));
    boost::math::fisher_f dist(k - 1, n - k);
    return {f, boost::math::cdf(boost::math::complement(dist, f))};
}

}  // namespace

TEST_CASE("trait formulas on small histories") {
    ItemStatsMap stats;
    stats["a"] = {3.0, 1, genres_of({"Comedy"}), "A"};
    stats["b"] = {4.0, 1, genres_of({"Comedy", "Drama"}), "B"};
    const std::vector<Interaction> three = {{"u", "a", 5, 1}, {"u", "b", 4, 2}, {"u", "a", 3, 3}};
    CHECK(activity_trait(three) == 3);
    CHECK(activity_trait({}) == 0);
    const std::vector<Interaction> one = {{"u", "a", 5, 1}};
    CHECK(conformity_trait(one, stats) == 4.0);
    const std::vector<Interaction> exact = {{"u", "a", 3, 1}, {"u", "b", 4, 2}};
    CHECK(conformity_trait(exact, stats) == 0.0);
    CHECK_THROWS_AS(conformity_trait({}, stats), UndefinedResultError);
    CHECK(diversity_trait(exact, stats) == 2);
    CHECK(diversity_trait({}, stats) == 0);
}

TEST_CASE("traits on a 100-user log match brute-force recomputation") {
    const auto world = genre_world({.users = 100, .items = 300, .seed = 21});
    const auto stats = item_stats(world.log, world.catalog);
    // Oracle: scan the flat row list per user with no spans or maps from the library.
    const auto& rows = world.log.rows();
    for (const auto& u : world.log.users()) {
        int count = 0;
        double sq = 0;
        std::set<std::size_t> genres;
        for (const auto& r : rows) {
            if (r.user != u) continue;
            ++count;
            double qsum = 0, qn = 0;
            for (const auto& x : rows)
                if (x.item == r.item) {
                    qsum += x.rating;
                    qn += 1;
                }
            const double d = r.rating - qsum / qn;
            sq += d * d;
            for (std::size_t g = 0; g < kGenreCount; ++g)
                if (world.catalog.at(r.item).genres.test(g)) genres.insert(g);
        }
        const auto t = trait_vector(world.log.history(u), stats);
        CHECK(t.activity == count);
        CHECK(std::abs(t.conformity - sq / count) < 1e-12);
        CHECK(t.diversity == static_cast<int>(genres.size()));
    }
}

TEST_CASE("tier assignment") {
    auto values = [](std::size_t n) {
        std::map<std::string, double> v;
        for (std::size_t i = 0; i < n; ++i) v[padded_id('u', i)] = static_cast<double>((i * 7919) % 1000);
        return v;
    };
    auto count = [](const std::map<std::string, TierLevel>& t) {
        std::array<std::size_t, 3> c{};
        for (const auto& [u, l] : t) ++c[static_cast<std::size_t>(l)];
        return c;
    };
    CHECK(count(assign_tiers(values(10), TraitKind::activity)) == std::array<std::size_t, 3>{6, 3, 1});
    CHECK(count(assign_tiers(values(1000), TraitKind::activity)) == std::array<std::size_t, 3>{600, 300, 100});
    CHECK(count(assign_tiers(values(4), TraitKind::conformity)) == std::array<std::size_t, 3>{1, 2, 1});
    CHECK(assign_tiers(values(1), TraitKind::diversity).begin()->second == TierLevel::low);
    CHECK_THROWS_AS(assign_tiers({}, TraitKind::activity), ArgumentError);
    CHECK_THROWS_AS(parse_trait_kind("charisma"), ArgumentError);

    // Bucket sizes within one of the exact share; higher tiers never hold smaller values.
    for (std::size_t n : {7u, 13u, 101u, 333u}) {
        for (auto kind : kTraitKinds) {
            const auto v = values(n);
            const auto tiers = assign_tiers(v, kind);
            const auto c = count(tiers);
            const auto r = tier_ratio(kind);
            const double total = r[0] + r[1] + r[2];
            std::size_t sum = 0;
            for (std::size_t b = 0; b < 3; ++b) {
                CHECK(std::abs(static_cast<double>(c[b]) - static_cast<double>(n) * r[b] / total) < 1.0);
                sum += c[b];
            }
            CHECK(sum == n);
            for (const auto& [u1, l1] : tiers)
                for (const auto& [u2, l2] : tiers)
                    if (l1 > l2) CHECK(v.at(u1) >= v.at(u2));
        }
    }
}

TEST_CASE("tie-breaking is by user id") {
    std::map<std::string, double> v = {{"b", 1}, {"a", 1}, {"c", 1}};
    const auto t = assign_tiers(v, TraitKind::diversity);
    CHECK(t.at("a") == TierLevel::low);
    CHECK(t.at("b") == TierLevel::medium);
    CHECK(t.at("c") == TierLevel::high);
}

TEST_CASE("simulated scores") {
    ItemStatsMap stats;
    stats["a"] = {4.0, 3, genres_of({"Comedy"}), "A"};
    stats["b"] = {2.0, 3, genres_of({"Drama"}), "B"};
    SimRecord r;
    PageRecord p;
    p.exposed = {"a", "b", "c"};
    p.reaction.watched = {"a", "b"};
    p.reaction.ratings = {{"a", 4, ""}, {"b", 2, ""}};
    r.pages.push_back(p);
    const auto s = simulated_scores(r, stats);
    CHECK(s.activity == 2);
    CHECK(s.conformity == 0.0);
    CHECK(s.diversity == 2);
    CHECK(static_cast<std::size_t>(s.activity) <= r.n_expose());

    SimRecord empty;
    const auto e = simulated_scores(empty, stats);
    CHECK(e.activity == 0);
    CHECK_FALSE(e.conformity.has_value());
    CHECK(e.diversity == 0);
}

TEST_CASE("simulated scores of scripted runs equal a replay of the serialized event log") {
    auto pop = scripted_population({.users = 40, .items = 200, .seed = 2});
    auto rec = fit_random(pop.pool);
    const auto result = run_simulation(pop.agents, *rec, *pop.gateway, pop.items, pop.pool, pop.train);
    for (const auto& r : result.records) {
        const json j = to_json(r, false);
        std::map<std::string, int> rated;
        for (const auto& page : j.at("pages"))
            for (const auto& x : page.at("ratings")) rated[x.at("item")] = x.at("rating");
        double sq = 0;
        std::set<std::size_t> genres;
        for (const auto& [item, rating] : rated) {
            const double d = rating - pop.stats.at(item).quality;
            sq += d * d;
            for (std::size_t g = 0; g < kGenreCount; ++g)
                if (pop.world.catalog.at(item).genres.test(g)) genres.insert(g);
        }
        const auto s = simulated_scores(r, pop.stats);
        CHECK(s.activity == static_cast<int>(rated.size()));
        CHECK(s.diversity == static_cast<int>(genres.size()));
        if (rated.empty()) {
            CHECK_FALSE(s.conformity.has_value());
        } else {
            REQUIRE(s.conformity.has_value());
            CHECK(std::abs(*s.conformity - sq / static_cast<double>(rated.size())) < 1e-12);
        }
    }
}

TEST_CASE("anova edge cases") {
    const std::vector<std::vector<double>> same = {{1, 1}, {1, 1}};
    const auto r = anova_f_test(same);
    CHECK(r.f == 0.0);
    CHECK(r.p == 1.0);
    const std::vector<std::vector<double>> one = {{1, 2}};
    CHECK_THROWS_AS(anova_f_test(one), ArgumentError);
    const std::vector<std::vector<double>> tiny = {{1}, {2}};
    CHECK_THROWS_AS(anova_f_test(tiny), ArgumentError);
    const std::vector<std::vector<double>> hole = {{1, 2}, {}};
    CHECK_THROWS_AS(anova_f_test(hole), ArgumentError);
}

TEST_CASE("anova matches the textbook oracle") {
    const std::vector<std::vector<double>> g = {{1, 2, 3}, {4, 5, 6}, {7, 8, 9}};
    const auto r = anova_f_test(g);
    // Between MS 27, within MS 1.
    CHECK(std::abs(r.f - 27.0) < 1e-9);
    const auto [f, p] = textbook_anova(g);
    CHECK(std::abs(r.f - f) < 1e-9);
    CHECK(std::abs(r.p - p) < 1e-9);
    CHECK(r.df_between == 2);
    CHECK(r.df_within == 6);

    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 20; ++trial) {
        std::uniform_int_distribution<int> k_dist(2, 5), n_dist(2, 12);
        std::normal_distribution<double> noise(0, 1);
        std::vector<std::vector<double>> groups(static_cast<std::size_t>(k_dist(rng)));
        for (std::size_t i = 0; i < groups.size(); ++i) {
            const double shift = 0.3 * static_cast<double>(i);
            groups[i].resize(static_cast<std::size_t>(n_dist(rng)));
            for (auto& v : groups[i]) v = shift + noise(rng);
        }
        const auto lib = anova_f_test(groups);
        const auto [tf, tp] = textbook_anova(groups);
        CHECK(std::abs(lib.f - tf) < 1e-9 * std::max(1.0, tf));
        CHECK(std::abs(lib.p - tp) < 1e-9);
    }
}

TEST_CASE("anova p-values are uniform under the null") {
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> noise(0, 1);
    std::vector<double> ps;
    for (int i = 0; i < 1000; ++i) {
        std::vector<std::vector<double>> groups(3, std::vector<double>(10));
        for (auto& g : groups)
            for (auto& v : g) v = noise(rng);
        ps.push_back(anova_f_test(groups).p);
    }
    std::sort(ps.begin(), ps.end());
    double d = 0;
    const double n = static_cast<double>(ps.size());
    for (std::size_t i = 0; i < ps.size(); ++i)
        d = std::max({d, std::abs(static_cast<double>(i + 1) / n - ps[i]), std::abs(ps[i] - static_cast<double>(i) / n)});
    CHECK(d < 1.358 / std::sqrt(n));
}

TEST_CASE("trait csv has rolling means") {
    std::vector<TraitRow> rows;
    for (int i = 0; i < 7; ++i) rows.push_back({"u" + std::to_string(i), static_cast<double>(i), TierLevel::low, i % 2 ? std::optional<double>(i) : std::nullopt});
    std::ostringstream out;
    write_trait_csv(out, TraitKind::activity, rows);
    const auto lines = split_lines(out.str());
    REQUIRE(lines.size() >= 8);
    CHECK(lines[0] == "user,trait,value,tier,sim_score,value_rolling5,sim_rolling5");
    CHECK(lines[1].rfind("u6,activity,6.000000,low,,6.000000", 0) == 0);
    // Fifth row averages values 6..2.
    CHECK(split(lines[5], ",")[5] == "4.000000");
}
