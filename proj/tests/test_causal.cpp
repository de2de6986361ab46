#include <catch_amalgamated.hpp>

#include "agentrec/causal.hpp"
#include "agentrec/simulation.hpp"
#include "support.hpp"

using namespace agentrec;
using namespace testing;

namespace {

struct Sem {
    Eigen::MatrixXd x;               // columns shuffled
    std::vector<std::size_t> order;  // true causal order as column indices
    Eigen::MatrixXd b;               // b(i, j): weight of column j -> column i
};

// Fully connected lower-triangular SEM with uniform noise, |weights| in [0.5, 1.5].
Sem random_sem(std::size_t p, std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> noise(-1.0, 1.0), mag(0.5, 1.5);
    std::bernoulli_distribution sign(0.5);
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
    for (std::size_t i = 1; i < p; ++i)
        for (std::size_t j = 0; j < i; ++j) w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (sign(rng) ? 1 : -1) * mag(rng);
    Eigen::MatrixXd latent(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
    for (Eigen::Index r = 0; r < latent.rows(); ++r)
        for (Eigen::Index i = 0; i < latent.cols(); ++i) {
            double v = noise(rng);
            for (Eigen::Index j = 0; j < i; ++j) v += w(i, j) * latent(r, j);
            latent(r, i) = v;
        }
    // Latent variable k lands in column perm[k].
    std::vector<std::size_t> perm(p);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Sem s;
    s.x.resize(latent.rows(), latent.cols());
    s.b = Eigen::MatrixXd::Zero(w.rows(), w.cols());
    for (std::size_t k = 0; k < p; ++k) {
        s.x.col(static_cast<Eigen::Index>(perm[k])) = latent.col(static_cast<Eigen::Index>(k));
        s.order.push_back(perm[k]);
        for (std::size_t j = 0; j < p; ++j)
            s.b(static_cast<Eigen::Index>(perm[k]), static_cast<Eigen::Index>(perm[j])) =
                w(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j));
    }
    return s;
}

Eigen::MatrixXd uniform_columns(std::size_t n, std::size_t p, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
    for (Eigen::Index r = 0; r < x.rows(); ++r)
        for (Eigen::Index c = 0; c < x.cols(); ++c) x(r, c) = u(rng);
    return x;
}

SimRecord exposure_record(std::string agent, std::vector<std::string> exposed, std::vector<std::pair<std::string, int>> rated) {
    SimRecord r;
    r.agent = std::move(agent);
    PageRecord p;
    p.page = 1;
    p.exposed = std::move(exposed);
    for (const auto& [i, v] : rated) {
        p.reaction.alignment.push_back({i, true, ""});
        p.reaction.watched.push_back(i);
        p.reaction.ratings.push_back({i, v, ""});
    }
    r.pages.push_back(std::move(p));
    r.exit_page = 1;
    return r;
}

}  // namespace

TEST_CASE("z-scores have zero mean and unit population variance") {
    const Eigen::MatrixXd x = uniform_columns(500, 3, 1) * 7.0;
    const auto z = zscore(x);
    for (Eigen::Index c = 0; c < z.cols(); ++c) {
        CHECK(std::abs(z.col(c).mean()) < 1e-9);
        CHECK(std::abs(z.col(c).squaredNorm() / 500.0 - 1.0) < 1e-9);
    }
    Eigen::MatrixXd flat = x;
    flat.col(1).setConstant(3.0);
    try {
        zscore(flat, {"a", "b", "c"});
        FAIL("expected an error");
    } catch (const UndefinedResultError& e) {
        CHECK(std::string(e.what()).find("column b") != std::string::npos);
    }
}

TEST_CASE("factor collection: exposure rate, exclusion and replay") {
    // 100 agents; item k (k = 0..11) is exposed to 10 + k agents, item "rare" to 4.
    ItemStatsMap stats;
    for (int k = 0; k < 12; ++k)
        stats[padded_id('m', static_cast<std::size_t>(k))] = {2.0 + 0.2 * k, 50 + 3 * k, genres_of({"Drama"}), "T (1990)"};
    stats["rare"] = {4.0, 7, genres_of({"Drama"}), "R (1990)"};
    std::vector<SimRecord> records;
    for (int a = 0; a < 100; ++a) {
        std::vector<std::string> exposed;
        std::vector<std::pair<std::string, int>> rated;
        for (int k = 0; k < 12; ++k)
            if (a < 10 + k) {
                const auto id = padded_id('m', static_cast<std::size_t>(k));
                exposed.push_back(id);
                if (a % 3 == 0 || a == k) rated.push_back({id, 1 + (a + k) % 5});
            }
        if (a < 4) exposed.push_back("rare");
        records.push_back(exposure_record("u" + std::to_string(a), exposed, rated));
    }
    const auto f = collect_factors(records, stats);
    REQUIRE(f.items.size() == 12);
    CHECK(std::find(f.items.begin(), f.items.end(), "rare") == f.items.end());
    CHECK(f.columns == std::vector<std::string>{"quality", "popularity", "exposure", "views", "rating"});
    // Item 0: exposed to 10 of 100 agents.
    CHECK(f.raw(0, 2) == Catch::Approx(0.1).margin(1e-12));

    // Replay oracle straight from the records.
    for (std::size_t r = 0; r < f.items.size(); ++r) {
        const auto& id = f.items[r];
        int exposed = 0, views = 0, sum = 0;
        for (const auto& rec : records) {
            const auto& p = rec.pages[0];
            if (std::find(p.exposed.begin(), p.exposed.end(), id) != p.exposed.end()) ++exposed;
            for (const auto& x : p.reaction.ratings)
                if (x.item == id) {
                    ++views;
                    sum += x.rating;
                }
        }
        const auto row = static_cast<Eigen::Index>(r);
        CHECK(std::abs(f.raw(row, 0) - stats.at(id).quality) < 1e-9);
        CHECK(std::abs(f.raw(row, 1) - stats.at(id).popularity) < 1e-9);
        CHECK(std::abs(f.raw(row, 2) - exposed / 100.0) < 1e-9);
        CHECK(std::abs(f.raw(row, 3) - views) < 1e-9);
        CHECK(std::abs(f.raw(row, 4) - static_cast<double>(sum) / views) < 1e-9);
    }
    for (Eigen::Index c = 0; c < 5; ++c) {
        CHECK(std::abs(f.z.col(c).mean()) < 1e-9);
        CHECK(std::abs(f.z.col(c).squaredNorm() / 12.0 - 1.0) < 1e-9);
    }

    std::ostringstream csv;
    write_factors_csv(csv, f);
    CHECK(csv.str().rfind("item,quality,quality_z,popularity,popularity_z", 0) == 0);

    SECTION("too few surviving items") {
        CHECK_THROWS_AS(collect_factors(records, stats, 5, 13), UndefinedResultError);
    }
    SECTION("exposed items without statistics") {
        stats.erase(padded_id('m', 3));
        CHECK_THROWS_AS(collect_factors(records, stats), ArgumentError);
    }
}

TEST_CASE("two-variable SEM recovers direction and weight") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Eigen::MatrixXd x(5000, 2);
    for (Eigen::Index r = 0; r < 5000; ++r) {
        x(r, 0) = u(rng);
        x(r, 1) = 2.0 * x(r, 0) + u(rng);
    }
    const auto g = direct_lingam(x, {"x", "y"});
    CHECK(g.order == std::vector<std::size_t>{0, 1});
    CHECK(std::abs(g.b(1, 0) - 2.0) < 0.1);
    CHECK(g.b(0, 1) == 0.0);
    const auto edges = edge_report(g);
    REQUIRE(edges.size() == 1);
    CHECK(edges[0].from == "x");
    CHECK(edges[0].to == "y");

    // Swapping the columns swaps the answer.
    Eigen::MatrixXd swapped(5000, 2);
    swapped << x.col(1), x.col(0);
    const auto h = direct_lingam(swapped);
    CHECK(h.order == std::vector<std::size_t>{1, 0});
    CHECK(std::abs(h.b(0, 1) - 2.0) < 0.1);
}

TEST_CASE("independent variables get near-zero weights") {
    const auto g = direct_lingam(uniform_columns(5000, 2, 5));
    CHECK(std::abs(g.b(0, 1)) <= 0.05);
    CHECK(std::abs(g.b(1, 0)) <= 0.05);
    CHECK(edge_report(g).empty());
}

TEST_CASE("five-variable SEM: order and weights over 20 seeds") {
    int exact = 0;
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto sem = random_sem(5, 5000, 100 + seed);
        const auto g = direct_lingam(sem.x);
        if (g.order == sem.order) {
            ++exact;
            worst = std::max(worst, (g.b - sem.b).cwiseAbs().maxCoeff());
        }
        // Acyclic: nothing flows from a later variable to an earlier one.
        for (std::size_t a = 0; a < 5; ++a)
            for (std::size_t c = a; c < 5; ++c)
                CHECK(g.b(static_cast<Eigen::Index>(g.order[a]), static_cast<Eigen::Index>(g.order[c])) == 0.0);
    }
    CHECK(exact >= 19);
    CHECK(worst <= 0.1);
}

TEST_CASE("row permutation leaves the graph unchanged") {
    const auto sem = random_sem(4, 2000, 7);
    std::vector<Eigen::Index> rows(2000);
    std::iota(rows.begin(), rows.end(), 0);
    std::shuffle(rows.begin(), rows.end(), std::mt19937_64(3));
    Eigen::MatrixXd shuffled(sem.x.rows(), sem.x.cols());
    for (Eigen::Index r = 0; r < shuffled.rows(); ++r) shuffled.row(r) = sem.x.row(rows[static_cast<std::size_t>(r)]);
    const auto a = direct_lingam(sem.x);
    const auto b = direct_lingam(shuffled);
    CHECK(a.order == b.order);
    CHECK((a.b - b.b).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("residuals are uncorrelated with their predecessors") {
    const auto sem = random_sem(5, 5000, 21);
    const auto g = direct_lingam(sem.x);
    const Eigen::MatrixXd c = sem.x.rowwise() - sem.x.colwise().mean();
    const Eigen::MatrixXd e = c - c * g.b.transpose();
    for (std::size_t k = 1; k < 5; ++k)
        for (std::size_t j = 0; j < k; ++j) {
            const auto ei = e.col(static_cast<Eigen::Index>(g.order[k]));
            const auto xj = c.col(static_cast<Eigen::Index>(g.order[j]));
            const double corr = ei.dot(xj) / (ei.norm() * xj.norm());
            CHECK(std::abs(corr) < 0.05);
        }
}

TEST_CASE("lingam input errors") {
    CHECK_THROWS_AS(direct_lingam(uniform_columns(100, 1, 1)), ArgumentError);
    CHECK_THROWS_AS(direct_lingam(uniform_columns(15, 2, 1)), ArgumentError);
    Eigen::MatrixXd dup = uniform_columns(200, 3, 2);
    dup.col(2) = 3.0 * dup.col(0);
    try {
        direct_lingam(dup, {"a", "b", "c"});
        FAIL("expected an error");
    } catch (const UndefinedResultError& e) {
        const std::string what = e.what();
        CHECK(what.find('a') != std::string::npos);
        CHECK(what.find('c') != std::string::npos);
    }
}

TEST_CASE("edge report") {
    CausalGraph g;
    g.names = {"a", "b", "c"};
    g.order = {0, 1, 2};
    g.b = Eigen::MatrixXd::Zero(3, 3);
    CHECK(edge_report(g).empty());
    g.b(2, 0) = 0.3;
    auto edges = edge_report(g);
    REQUIRE(edges.size() == 1);
    CHECK(edges[0].from == "a");
    CHECK(edges[0].to == "c");
    CHECK(edges[0].weight == 0.3);
    g.b(1, 0) = -0.9;
    g.b(2, 1) = 0.04;
    edges = edge_report(g);
    REQUIRE(edges.size() == 2);
    CHECK(edges[0].weight == -0.9);
    CHECK(edge_report(g, 0.01).size() == 3);
    std::ostringstream csv;
    write_edges_csv(csv, edges);
    CHECK(csv.str() == "from,to,weight\na,b,-0.900000\na,c,0.300000\n");
    const auto j = to_json(g);
    CHECK(j["order"] == json({"a", "b", "c"}));
    CHECK(j["B"][2][0] == 0.3);
}

TEST_CASE("scripted run: quality drives rating more than popularity") {
    auto pop = scripted_population({.users = 300, .items = 200, .seed = 4});
    auto rec = fit_random(pop.pool);
    SimulationConfig cfg;
    cfg.threads = 2;
    const auto res = run_simulation(pop.agents, *rec, *pop.gateway, pop.items, pop.pool, pop.train, cfg);
    const auto f = collect_factors(res.records, pop.stats);
    REQUIRE(f.raw.rows() >= 50);
    const auto g = direct_lingam(f.z, f.columns);
    auto weight = [&](const std::string& from, const std::string& to) {
        for (const auto& e : edge_report(g, 0.0))
            if (e.from == from && e.to == to) return e.weight;
        return 0.0;
    };
    CHECK(weight("quality", "rating") > weight("popularity", "rating"));
    CHECK(weight("quality", "rating") > 0.0);
}
