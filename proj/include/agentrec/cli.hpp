#pragma once
// Command-line pipelines over one run directory: configuration, manifest with
// output digests, and one command per experiment.

#include <CLI11.hpp>
#include <Eigen/Core>
#include <openssl/opensslv.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "agentrec/causal.hpp"
#include "agentrec/diagnostics.hpp"
#include "agentrec/digest.hpp"
#include "agentrec/llm.hpp"
#include "agentrec/profiles.hpp"
#include "agentrec/recommenders.hpp"
#include "agentrec/scripted.hpp"
#include "agentrec/simulation.hpp"
#include "agentrec/synthetic.hpp"
#include "agentrec/traits.hpp"

namespace agentrec::cli {

namespace fs = std::filesystem;

inline constexpr std::string_view kVersion = "0.1.0";

enum ExitCode : int { ok = 0, failure = 1, input_error = 2, missing_prerequisite = 3, backend_failure = 4 };

// ---------------------------------------------------------------------------
// Configuration: key=value lines, flags win
// ---------------------------------------------------------------------------

class RunConfig {
  public:
    RunConfig() : values_(defaults()) {}

    static const std::map<std::string, std::string>& defaults() {
        static const std::map<std::string, std::string> d = {
            {"data", ""},
            {"items", ""},
            {"schema", "movielens"},
            {"items_delimiter", "::"},
            {"backend", "scripted"},
            {"recommender", "mf"},
            {"agents", "1000"},
            {"seed", "0"},
            {"page_size", "4"},
            {"max_pages", "5"},
            {"retrieve_k", "5"},
            {"profile_items", "25"},
            {"threads", "16"},
            {"max_in_flight", "8"},
            {"max_abort_rate", "0.05"},
            {"transcripts", "true"},
            {"cache", "auto"},
            {"hallucination_rate", "0"},
            {"api_base", ""},
            {"model", ""},
            {"embed_model", ""},
            {"lr", "0.0005"},
            {"dim", "64"},
            {"layers", "2"},
            {"batch_size", "1024"},
            {"max_epochs", "500"},
            {"patience", "20"},
            {"eval_k", "20"},
            {"reg", "0.0001"},
            {"init_std", "0.1"},
            {"ratios", "1,2,3,9"},
            {"bubble_rounds", "4"},
            {"augment_simulate", "false"},
            {"min_exposures", "5"},
            {"edge_threshold", "0.05"},
        };
        return d;
    }

    void set(const std::string& key, const std::string& value) {
        if (!defaults().count(key)) throw ArgumentError("unknown config key: " + key);
        values_[key] = value;
    }

    void load_file(const fs::path& path) {
        std::ifstream in(path);
        if (!in) throw ArgumentError("cannot open config file: " + path.string());
        std::string line;
        std::size_t no = 0;
        while (std::getline(in, line)) {
            ++no;
            const auto t = trim(line);
            if (t.empty() || t.front() == '#') continue;
            const auto eq = t.find('=');
            if (eq == std::string::npos) throw ParseError("expected key=value in " + path.string(), no);
            set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
        }
    }

    const std::string& get(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw ArgumentError("unknown config key: " + key);
        return it->second;
    }

    long long get_int(const std::string& key) const {
        try {
            std::size_t used = 0;
            const auto v = std::stoll(get(key), &used);
            if (used != get(key).size()) throw std::invalid_argument(key);
            return v;
        } catch (const std::logic_error&) {
            throw ArgumentError("config " + key + " must be an integer, got '" + get(key) + "'");
        }
    }

    std::size_t get_count(const std::string& key) const {
        const auto v = get_int(key);
        if (v < 0) throw ArgumentError("config " + key + " must be non-negative");
        return static_cast<std::size_t>(v);
    }

    double get_double(const std::string& key) const {
        try {
            std::size_t used = 0;
            const auto v = std::stod(get(key), &used);
            if (used != get(key).size()) throw std::invalid_argument(key);
            return v;
        } catch (const std::logic_error&) {
            throw ArgumentError("config " + key + " must be a number, got '" + get(key) + "'");
        }
    }

    bool get_bool(const std::string& key) const {
        const auto v = to_lower(get(key));
        if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
        if (v == "false" || v == "0" || v == "no" || v == "off") return false;
        throw ArgumentError("config " + key + " must be a boolean, got '" + get(key) + "'");
    }

    std::uint64_t seed() const { return static_cast<std::uint64_t>(get_int("seed")); }

    TrainConfig train_config() const {
        TrainConfig c;
        c.lr = get_double("lr");
        c.dim = static_cast<int>(get_int("dim"));
        c.layers = static_cast<int>(get_int("layers"));
        c.batch_size = static_cast<int>(get_int("batch_size"));
        c.max_epochs = static_cast<int>(get_int("max_epochs"));
        c.patience = static_cast<int>(get_int("patience"));
        c.eval_k = static_cast<int>(get_int("eval_k"));
        c.reg = get_double("reg");
        c.init_std = get_double("init_std");
        c.seed = mix_seed(seed(), "train");
        c.validate();
        return c;
    }

    SimulationConfig simulation_config() const {
        SimulationConfig s;
        s.session.page_size = get_count("page_size");
        s.session.max_pages = static_cast<int>(get_int("max_pages"));
        s.session.retrieve_k = get_count("retrieve_k");
        s.session.seed = mix_seed(seed(), "simulate");
        s.session.keep_transcript = get_bool("transcripts");
        s.threads = std::max<std::size_t>(1, get_count("threads"));
        s.max_abort_rate = get_double("max_abort_rate");
        return s;
    }

    // Throws ArgumentError on any malformed value.
    void validate() const {
        const auto& b = get("backend");
        if (b != "live" && b != "scripted") throw ArgumentError("backend must be live or scripted");
        const auto& r = get("recommender");
        if (r != "random" && r != "pop" && r != "mf" && r != "lightgcn")
            throw ArgumentError("recommender must be random, pop, mf or lightgcn");
        const auto& s = get("schema");
        if (s != "movielens" && s != "csv") throw ArgumentError("schema must be movielens or csv");
        const auto& c = get("cache");
        if (c != "auto" && c != "on" && c != "off") throw ArgumentError("cache must be auto, on or off");
        if (get_count("agents") < 1) throw ArgumentError("agents must be >= 1");
        if (get_count("page_size") < 1 || get_int("max_pages") < 1) throw ArgumentError("page_size and max_pages must be >= 1");
        const double h = get_double("hallucination_rate");
        if (h < 0 || h > 1) throw ArgumentError("hallucination_rate must lie in [0, 1]");
        (void)get_bool("transcripts");
        (void)get_bool("augment_simulate");
        (void)get_double("edge_threshold");
        (void)get_count("min_exposures");
        (void)get_count("retrieve_k");
        (void)get_count("profile_items");
        (void)get_count("max_in_flight");
        (void)ratios();
        if (get_int("bubble_rounds") < 1) throw ArgumentError("bubble_rounds must be >= 1");
        (void)simulation_config();
        (void)train_config();
    }

    std::vector<int> ratios() const {
        std::vector<int> out;
        for (const auto& p : split(get("ratios"), ",")) {
            const auto t = trim(p);
            auto v = detail::parse_int(t);
            if (!v || *v < 1) throw ArgumentError("ratios must be positive integers, got '" + get("ratios") + "'");
            out.push_back(static_cast<int>(*v));
        }
        return out;
    }

    json snapshot() const {
        json j = json::object();
        for (const auto& [k, v] : values_) j[k] = v;
        return j;
    }

  private:
    std::map<std::string, std::string> values_;
};

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

inline json component_versions() {
    return {{"agentrec", kVersion},
            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                          std::to_string(EIGEN_MINOR_VERSION)},
            {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
            {"openssl", OPENSSL_VERSION_TEXT},
            {"cpp_httplib", CPPHTTPLIB_VERSION}};
}

inline constexpr std::string_view kManifestName = "manifest.json";

// Every regular file under the run directory except the manifest and the response cache.
inline std::map<std::string, std::string> digest_outputs(const fs::path& run_dir) {
    std::map<std::string, std::string> out;
    if (!fs::exists(run_dir)) return out;
    for (auto it = fs::recursive_directory_iterator(run_dir); it != fs::recursive_directory_iterator(); ++it) {
        const auto rel = fs::relative(it->path(), run_dir).generic_string();
        if (it->is_directory() && rel == "cache") {
            it.disable_recursion_pending();
            continue;
        }
        if (!it->is_regular_file() || rel == kManifestName) continue;
        out[rel] = sha256_file(it->path());
    }
    return out;
}

struct RunManifest {
    json config = json::object();
    json components = component_versions();
    json warnings = json::object();  // cumulative counters
    std::map<std::string, std::string> digests;
    json commands = json::array();
    bool failed = false;

    json to_json() const {
        return {{"config", config},     {"components", components}, {"warnings", warnings},
                {"digests", digests},   {"commands", commands},     {"failed", failed}};
    }

    static RunManifest from_json(const json& j) {
        RunManifest m;
        m.config = j.value("config", json::object());
        m.components = j.value("components", component_versions());
        m.warnings = j.value("warnings", json::object());
        m.digests = j.value("digests", std::map<std::string, std::string>{});
        m.commands = j.value("commands", json::array());
        m.failed = j.value("failed", false);
        return m;
    }

    static std::optional<RunManifest> load(const fs::path& run_dir) {
        const auto p = run_dir / kManifestName;
        if (!fs::exists(p)) return std::nullopt;
        return from_json(read_json_file(p));
    }

    void add_warnings(const json& counters) {
        for (const auto& [k, v] : counters.items()) warnings[k] = warnings.value(k, 0LL) + v.get<long long>();
    }

    // Mismatched, missing or unlisted outputs.
    std::vector<std::string> verify(const fs::path& run_dir) const {
        std::vector<std::string> problems;
        const auto now = digest_outputs(run_dir);
        for (const auto& [path, d] : digests) {
            auto it = now.find(path);
            if (it == now.end())
                problems.push_back("missing: " + path);
            else if (it->second != d)
                problems.push_back("digest mismatch: " + path);
        }
        for (const auto& [path, d] : now)
            if (!digests.count(path)) problems.push_back("unlisted: " + path);
        return problems;
    }
};

// ---------------------------------------------------------------------------
// Run directory I/O
// ---------------------------------------------------------------------------

inline void require(const fs::path& path, const std::string& hint) {
    if (!fs::exists(path)) throw MissingPrerequisite(path.string() + " (run `" + hint + "` first)");
}

// Refuses to overwrite unless forced; forced reruns start from an empty directory.
inline void claim_output(const fs::path& dir, bool force) {
    if (fs::exists(dir) && !fs::is_empty(dir)) {
        if (!force) throw ArgumentError(dir.string() + " already exists; pass --force to overwrite");
        fs::remove_all(dir);
    }
    fs::create_directories(dir);
}

inline void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
}

inline json to_json(const ItemStatsMap& stats) {
    json j = json::object();
    for (const auto& [id, s] : stats)
        j[id] = {{"title", s.title}, {"genres", genre_list(s.genres)}, {"quality", s.quality}, {"popularity", s.popularity}};
    return j;
}

inline ItemStatsMap item_stats_from_json(const json& j) {
    ItemStatsMap out;
    for (const auto& [id, v] : j.items()) {
        ItemStats s;
        s.title = v.at("title");
        s.genres = parse_genre_list(v.at("genres").get<std::string>());
        s.quality = v.at("quality");
        s.popularity = v.at("popularity");
        out[id] = s;
    }
    return out;
}

struct PreparedData {
    InteractionLog train, validation, test, pruned;
    ItemStatsMap stats;
    InteractionLog full() const {
        std::vector<Interaction> rows;
        for (const auto* l : {&train, &validation, &test, &pruned}) rows.insert(rows.end(), l->rows().begin(), l->rows().end());
        return InteractionLog(std::move(rows));
    }
};

inline PreparedData load_prepared(const fs::path& run) {
    const auto d = run / "data";
    for (const char* f : {"train.csv", "validation.csv", "test.csv", "pruned.csv", "items.json"})
        require(d / f, "agentrec prepare");
    PreparedData p;
    p.train = load_interactions_csv(d / "train.csv");
    p.validation = load_interactions_csv(d / "validation.csv");
    p.test = load_interactions_csv(d / "test.csv");
    p.pruned = load_interactions_csv(d / "pruned.csv");
    p.stats = item_stats_from_json(read_json_file(d / "items.json"));
    return p;
}

struct ProfileSet {
    std::vector<AgentProfile> agents;  // sorted by user id
    ItemProfileMap items;
    std::vector<std::string> pool;     // kept items
    std::map<std::string, TraitVector> traits;
};

inline ProfileSet load_profiles(const fs::path& run) {
    const auto d = run / "profiles";
    require(d / "index.json", "agentrec profiles");
    const auto index = read_json_file(d / "index.json");
    ProfileSet s;
    for (const auto& u : index.at("users"))
        s.agents.push_back(agent_profile_from_json(read_json_file(d / "users" / (safe_file_stem(u.get<std::string>()) + ".json"))));
    for (const auto& i : index.at("items")) {
        auto p = item_profile_from_json(read_json_file(d / "items" / (safe_file_stem(i.get<std::string>()) + ".json")));
        if (p.kept) s.pool.push_back(p.item_id);
        s.items[p.item_id] = std::move(p);
    }
    const auto traits = read_json_file(d / "traits.json");
    for (const auto& [u, t] : traits.items())
        s.traits[u] = {t.at("activity").get<int>(), t.at("conformity").get<double>(), t.at("diversity").get<int>()};
    return s;
}

inline std::vector<SimRecord> load_records(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingPrerequisite(path.string() + " (run `agentrec simulate` first)");
    std::vector<SimRecord> out;
    std::string line;
    std::size_t no = 0;
    while (std::getline(in, line)) {
        ++no;
        if (trim(line).empty()) continue;
        try {
            out.push_back(sim_record_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw ParseError(e.what(), no);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Backends and recommenders
// ---------------------------------------------------------------------------

inline std::shared_ptr<TextBackend> make_backend(const RunConfig& cfg, const ItemStatsMap& stats) {
    if (cfg.get("backend") == "scripted")
        return std::make_shared<ScriptedBackend>(
            ScriptedWorld::from_stats(stats, cfg.get_double("hallucination_rate"), mix_seed(cfg.seed(), "scripted")));
    auto live = LiveConfig::from_env();
    if (!cfg.get("api_base").empty()) live.base_url = cfg.get("api_base");
    if (!cfg.get("model").empty()) live.model = cfg.get("model");
    if (!cfg.get("embed_model").empty()) live.embed_model = cfg.get("embed_model");
    if (live.api_key.empty() && live.base_url.rfind("https://api.openai.com", 0) == 0)
        throw BackendError("live backend needs AGENTREC_API_KEY or OPENAI_API_KEY", false);
    return std::make_shared<OpenAIBackend>(live);
}

inline GatewayOptions gateway_options(const RunConfig& cfg, const fs::path& run) {
    GatewayOptions o;
    const bool live = cfg.get("backend") == "live";
    const auto& c = cfg.get("cache");
    if (c == "on" || (c == "auto" && live)) o.cache_dir = run / "cache";
    o.max_in_flight = static_cast<int>(std::max<std::size_t>(1, cfg.get_count("max_in_flight")));
    o.model_tag = live ? (cfg.get("model").empty() ? LiveConfig::from_env().model : cfg.get("model")) : "scripted";
    o.embed_tag = live ? "embed:" + (cfg.get("embed_model").empty() ? LiveConfig::from_env().embed_model : cfg.get("embed_model"))
                       : "embed:hashed";
    return o;
}

inline std::shared_ptr<Recommender> build_recommender(const std::string& strategy, const PreparedData& data,
                                                      const std::vector<std::string>& pool, const RunConfig& cfg,
                                                      const fs::path& model_dir) {
    const auto train = implicit_feedback(data.train);
    if (strategy == "random") return fit_random(pool);
    if (strategy == "pop") return fit_pop(train);
    auto m = train_embedding_model(strategy, train, implicit_feedback(data.validation), cfg.train_config(), pool);
    m->save(model_dir);
    return m;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

struct CommandContext {
    fs::path run;
    RunConfig config;
    bool force = false;
    std::ostream* log = &std::cerr;
    Diagnostics diag;
    std::optional<Gateway> gateway;
    bool failed = false;

    std::ostream& out() { return *log; }
};

inline Gateway& open_gateway(CommandContext& c, const ItemStatsMap& stats) {
    if (!c.gateway) c.gateway.emplace(make_backend(c.config, stats), gateway_options(c.config, c.run));
    return *c.gateway;
}

inline void cmd_prepare(CommandContext& c) {
    const auto& cfg = c.config;
    if (cfg.get("data").empty()) throw ArgumentError("prepare needs --data");
    const fs::path data_path = cfg.get("data");
    if (!fs::exists(data_path)) throw ArgumentError("dataset file not found: " + data_path.string());
    const auto schema = cfg.get("schema") == "csv" ? ColumnSchema::csv() : ColumnSchema::movielens();
    const auto log = load_interactions(data_path, schema);
    ItemCatalog catalog;
    if (!cfg.get("items").empty()) {
        const fs::path items_path = cfg.get("items");
        if (!fs::exists(items_path)) throw ArgumentError("items file not found: " + items_path.string());
        catalog = load_items(items_path, cfg.get("items_delimiter"), cfg.get("schema") == "csv");
    }
    const auto stats = item_stats(log, catalog);
    const auto n = cfg.get_count("agents");
    const auto sampled = sample_users(log, n, mix_seed(cfg.seed(), "prepare"));
    const auto split = split_per_user(sampled, {}, mix_seed(cfg.seed(), "split"));

    const auto dir = c.run / "data";
    claim_output(dir, c.force);
    save_interactions_csv(split.train, dir / "train.csv");
    save_interactions_csv(split.validation, dir / "validation.csv");
    save_interactions_csv(split.test, dir / "test.csv");
    save_interactions_csv(InteractionLog(split.pruned), dir / "pruned.csv");
    ItemStatsMap used;
    for (const auto& i : sampled.items()) used[i] = stats.at(i);
    write_json_file(dir / "items.json", to_json(used));
    write_json_file(dir / "summary.json", {{"users", sampled.users().size()},
                                           {"items", used.size()},
                                           {"interactions", sampled.size()},
                                           {"train", split.train.size()},
                                           {"validation", split.validation.size()},
                                           {"test", split.test.size()},
                                           {"pruned", split.pruned.size()},
                                           {"source_users", log.users().size()},
                                           {"source_interactions", log.size()}});
    c.out() << "prepared " << sampled.users().size() << " users, " << split.train.size() << '/'
            << split.validation.size() << '/' << split.test.size() << " train/validation/test rows, "
            << split.pruned.size() << " pruned\n";
}

inline void cmd_profiles(CommandContext& c) {
    const auto data = load_prepared(c.run);
    const auto dir = c.run / "profiles";
    claim_output(dir, c.force);
    auto& gw = open_gateway(c, data.stats);
    const auto full = data.full();

    // Ground-truth traits and tiers over each user's full history.
    std::map<std::string, TraitVector> traits;
    std::array<std::map<std::string, double>, 3> values;
    for (const auto& u : full.users()) {
        const auto t = trait_vector(full.history(u), data.stats);
        traits[u] = t;
        values[0][u] = t.activity;
        values[1][u] = t.conformity;
        values[2][u] = t.diversity;
    }
    std::array<std::map<std::string, TierLevel>, 3> tiers;
    for (std::size_t k = 0; k < 3; ++k) tiers[k] = assign_tiers(values[k], kTraitKinds[k]);

    json traits_json = json::object();
    std::ostringstream traits_csv;
    traits_csv << "user,activity,conformity,diversity,activity_tier,conformity_tier,diversity_tier\n";
    for (const auto& [u, t] : traits) {
        traits_json[u] = {{"activity", t.activity}, {"conformity", t.conformity}, {"diversity", t.diversity}};
        traits_csv << u << ',' << t.activity << ',' << format_fixed(t.conformity, 9) << ',' << t.diversity << ','
                   << to_string(tiers[0].at(u)) << ',' << to_string(tiers[1].at(u)) << ',' << to_string(tiers[2].at(u))
                   << '\n';
    }
    write_json_file(dir / "traits.json", traits_json);
    write_text(dir / "traits.csv", traits_csv.str());

    const auto threads = std::max<std::size_t>(1, c.config.get_count("threads"));
    const auto& train_items = data.train.items();
    std::vector<ItemProfile> items(train_items.size());
    parallel_for(train_items.size(), threads, [&](std::size_t i) {
        items[i] = build_item_profile(train_items[i], data.stats.at(train_items[i]), gw, &c.diag);
    });
    std::ostringstream pruned;
    pruned << "item,title,reason\n";
    json item_ids = json::array();
    std::size_t kept = 0;
    for (const auto& p : items) {
        write_json_file(dir / "items" / (safe_file_stem(p.item_id) + ".json"), to_json(p));
        item_ids.push_back(p.item_id);
        if (p.kept) {
            ++kept;
        } else {
            json title = p.title;
            pruned << p.item_id << ',' << title.dump() << ',' << p.prune_reason << '\n';
        }
    }
    write_text(dir / "pruned_items.csv", pruned.str());

    const auto& users = data.train.users();
    std::vector<std::optional<AgentProfile>> agents(users.size());
    const auto sample = c.config.get_count("profile_items");
    parallel_for(users.size(), threads, [&](std::size_t i) {
        const auto& u = users[i];
        TierAssignment t{tiers[0].at(u), tiers[1].at(u), tiers[2].at(u)};
        try {
            agents[i] = build_agent_profile(u, data.train.history(u), t, data.stats, gw, c.config.seed(), &c.diag, sample);
        } catch (const ParseError&) {
            c.diag.add(Diagnostics::profile_failures);
        }
    });
    json user_ids = json::array(), failed = json::array();
    for (std::size_t i = 0; i < users.size(); ++i) {
        if (!agents[i]) {
            failed.push_back(users[i]);
            continue;
        }
        write_json_file(dir / "users" / (safe_file_stem(users[i]) + ".json"), to_json(*agents[i]));
        user_ids.push_back(users[i]);
    }
    write_json_file(dir / "index.json", {{"users", user_ids}, {"items", item_ids}, {"failed_users", failed}});
    c.out() << "profiled " << user_ids.size() << " agents (" << failed.size() << " failed), " << kept << '/'
            << items.size() << " items kept\n";
}

inline std::vector<double> tier_scores(const std::map<std::string, std::pair<TierLevel, std::optional<double>>>& rows,
                                       TierLevel level) {
    std::vector<double> out;
    for (const auto& [u, r] : rows)
        if (r.first == level && r.second) out.push_back(*r.second);
    return out;
}

inline void write_trait_reports(const fs::path& dir, const ProfileSet& ps, const std::vector<SimRecord>& records,
                                const ItemStatsMap& stats) {
    std::map<std::string, const AgentProfile*> by_user;
    for (const auto& a : ps.agents) by_user[a.user_id] = &a;
    std::ostringstream anova;
    anova << "trait,F,p,df_between,df_within\n";
    for (auto kind : kTraitKinds) {
        std::vector<TraitRow> rows;
        std::map<std::string, std::pair<TierLevel, std::optional<double>>> scored;
        for (const auto& r : records) {
            if (!r.valid || !by_user.count(r.agent) || !ps.traits.count(r.agent)) continue;
            const auto s = simulated_scores(r, stats);
            const auto& t = ps.traits.at(r.agent);
            TraitRow row;
            row.user = r.agent;
            row.tier = by_user.at(r.agent)->level(kind);
            switch (kind) {
                case TraitKind::activity:
                    row.value = t.activity;
                    row.sim = s.activity;
                    break;
                case TraitKind::conformity:
                    row.value = t.conformity;
                    row.sim = s.conformity;
                    break;
                case TraitKind::diversity:
                    row.value = t.diversity;
                    row.sim = s.diversity;
                    break;
            }
            scored[row.user] = {row.tier, row.sim};
            rows.push_back(row);
        }
        std::ostringstream csv;
        write_trait_csv(csv, kind, rows);
        write_text(dir / ("traits_" + std::string(to_string(kind)) + ".csv"), csv.str());
        std::vector<std::vector<double>> groups;
        for (auto level : kTierLevels) groups.push_back(tier_scores(scored, level));
        anova << to_string(kind) << ',';
        try {
            const auto a = anova_f_test(groups);
            anova << format_fixed(a.f, 9) << ',' << (a.p < 1e-12 ? "0" : format_fixed(a.p, 12)) << ',' << a.df_between
                  << ',' << a.df_within << '\n';
        } catch (const ArgumentError&) {
            anova << "NA,NA,NA,NA\n";
        }
    }
    write_text(dir / "anova.csv", anova.str());
}

inline void cmd_simulate(CommandContext& c) {
    const auto data = load_prepared(c.run);
    const auto ps = load_profiles(c.run);
    const auto dir = c.run / "simulation";
    claim_output(dir, c.force);
    auto& gw = open_gateway(c, data.stats);
    const auto strategy = c.config.get("recommender");
    const auto rec = build_recommender(strategy, data, ps.pool, c.config, c.run / "models" / strategy);
    auto sim = c.config.simulation_config();
    std::vector<MemoryStore> memories;
    const auto result = run_simulation(ps.agents, *rec, gw, ps.items, ps.pool, implicit_feedback(data.train), sim,
                                       &c.diag, &memories);
    {
        std::ofstream out(dir / "records.jsonl", std::ios::binary);
        for (const auto& r : result.records) out << json_text(to_json(r, sim.session.keep_transcript)) << '\n';
    }
    for (std::size_t i = 0; i < memories.size(); ++i) {
        std::ostringstream ss;
        memories[i].write_jsonl(ss);
        write_text(dir / "memory" / (safe_file_stem(ps.agents[i].user_id) + ".jsonl"), ss.str());
    }
    const auto valid = result.valid_records();
    if (!valid.empty()) {
        std::ostringstream m;
        write_metrics_csv(m, aggregate_metrics(valid));
        write_text(dir / "metrics.csv", m.str());
    }
    std::ostringstream h;
    write_rating_csv(h, rating_distribution(valid));
    write_text(dir / "ratings.csv", h.str());
    write_trait_reports(dir, ps, valid, data.stats);
    write_json_file(dir / "summary.json", {{"recommender", strategy},
                                           {"agents", result.records.size()},
                                           {"aborted", result.aborted},
                                           {"failed", result.failed}});
    c.failed = result.failed;
    c.out() << "simulated " << result.records.size() << " agents with " << strategy << ", " << result.aborted
            << " aborted\n";
    if (result.failed) throw BackendError("abort rate above " + c.config.get("max_abort_rate") + "; run flagged failed", false);
}

inline void cmd_eval_offline(CommandContext& c) {
    const auto data = load_prepared(c.run);
    const auto dir = c.run / "offline";
    claim_output(dir, c.force);
    const auto strategy = c.config.get("recommender");
    std::vector<std::string> pool = data.train.items();
    const auto rec = build_recommender(strategy, data, pool, c.config, c.run / "models" / strategy);
    const auto exclude = merge_feedback(implicit_feedback(data.train), implicit_feedback(data.validation));
    const auto k = c.config.get_count("eval_k");
    const auto m = evaluate_offline(*rec, implicit_feedback(data.test), exclude, k);
    std::ostringstream out;
    out << "strategy,k,recall,ndcg,users\n"
        << strategy << ',' << k << ',' << format_fixed(m.recall, 9) << ',' << format_fixed(m.ndcg, 9) << ',' << m.users
        << '\n';
    write_text(dir / "offline.csv", out.str());
    c.out() << strategy << " Recall@" << k << ' ' << format_fixed(m.recall, 4) << " NDCG@" << k << ' '
            << format_fixed(m.ndcg, 4) << '\n';
}

inline void cmd_alignment(CommandContext& c) {
    const auto data = load_prepared(c.run);
    const auto ps = load_profiles(c.run);
    const auto dir = c.run / "alignment";
    claim_output(dir, c.force);
    auto& gw = open_gateway(c, data.stats);
    const auto interacted = implicit_feedback(data.full());
    AlignmentInputs in;
    in.profiles = &ps.agents;
    in.held_out = &interacted;
    in.interacted = &interacted;
    in.items = &ps.items;
    in.seed = mix_seed(c.config.seed(), "alignment");
    in.threads = std::max<std::size_t>(1, c.config.get_count("threads"));
    std::vector<AlignmentReport> reports;
    for (int m : c.config.ratios()) reports.push_back(alignment_experiment(in, m, gw, &c.diag));
    std::ostringstream out;
    write_alignment_csv(out, reports);
    write_text(dir / "alignment.csv", out.str());
    for (const auto& r : reports)
        c.out() << "1:" << r.m << " accuracy " << format_fixed(r.accuracy, 4) << " over " << r.agents << " agents\n";
}

inline void cmd_augment(CommandContext& c) {
    const auto data = load_prepared(c.run);
    const auto records = load_records(c.run / "simulation" / "records.jsonl");
    const auto dir = c.run / "augment";
    claim_output(dir, c.force);
    auto strategy = c.config.get("recommender");
    if (strategy != "mf" && strategy != "lightgcn") throw ArgumentError("augment needs --recommender mf or lightgcn");
    const auto train = implicit_feedback(data.train);
    const auto val = implicit_feedback(data.validation);
    const auto test = implicit_feedback(data.test);
    AugmentationInputs in;
    in.strategy = strategy;
    in.train = &train;
    in.validation = &val;
    in.test = &test;
    in.records = &records;
    in.config = c.config.train_config();
    in.extra_items = data.train.items();
    in.k = c.config.get_count("eval_k");
    std::function<SimMetrics(const Recommender&)> rerun;
    std::optional<ProfileSet> ps;
    if (c.config.get_bool("augment_simulate")) {
        ps = load_profiles(c.run);
        auto& gw = open_gateway(c, data.stats);
        rerun = [&](const Recommender& r) {
            auto res = run_simulation(ps->agents, r, gw, ps->items, ps->pool, train, c.config.simulation_config(), &c.diag);
            return aggregate_metrics(res.valid_records());
        };
    }
    const auto rows = augmentation_experiment(in, rerun);
    std::ostringstream out;
    write_augmentation_csv(out, rows);
    write_text(dir / "augmentation.csv", out.str());
    for (const auto& r : rows) c.out() << r.mode << " Recall@" << in.k << ' ' << format_fixed(r.offline.recall, 4) << '\n';
}

inline void cmd_bubble(CommandContext& c) {
    const auto data = load_prepared(c.run);
    const auto ps = load_profiles(c.run);
    const auto dir = c.run / "bubble";
    claim_output(dir, c.force);
    auto& gw = open_gateway(c, data.stats);
    const auto train = implicit_feedback(data.train);
    const auto val = implicit_feedback(data.validation);
    BubbleInputs in;
    in.profiles = &ps.agents;
    in.items = &ps.items;
    in.pool = &ps.pool;
    in.train = &train;
    in.validation = &val;
    in.config = c.config.train_config();
    in.sim = c.config.simulation_config();
    in.rounds = static_cast<int>(c.config.get_int("bubble_rounds"));
    in.seed = mix_seed(c.config.seed(), "bubble");
    const auto rep = filter_bubble_experiment(in, gw, &c.diag);
    if (!rep.pools_disjoint()) throw Error("round pools overlap");
    std::ostringstream out;
    write_bubble_csv(out, rep);
    write_text(dir / "bubble.csv", out.str());
    for (const auto& r : rep.rounds)
        c.out() << "round " << r.round << " top1 " << format_fixed(r.top1_share, 4) << " genres "
                << format_fixed(r.n_genres, 2) << '\n';
}

inline void cmd_causal(CommandContext& c) {
    const auto records = load_records(c.run / "simulation" / "records.jsonl");
    const auto data = load_prepared(c.run);
    const auto dir = c.run / "causal";
    claim_output(dir, c.force);
    const auto f = collect_factors(records, data.stats, static_cast<int>(c.config.get_count("min_exposures")));
    const auto g = direct_lingam(f.z, f.columns);
    const auto edges = edge_report(g, c.config.get_double("edge_threshold"));
    write_json_file(dir / "graph.json", to_json(g));
    std::ostringstream e, x;
    write_edges_csv(e, edges);
    write_factors_csv(x, f);
    write_text(dir / "edges.csv", e.str());
    write_text(dir / "factors.csv", x.str());
    for (const auto& edge : edges)
        c.out() << edge.from << " -> " << edge.to << ' ' << format_fixed(edge.weight, 3) << '\n';
}

// Synthetic MovieLens-format files for demos and tests.
inline void cmd_synth(const fs::path& out_dir, const std::string& kind, std::size_t users, std::size_t items,
                      std::uint64_t seed, std::ostream& log) {
    InteractionLog ratings;
    ItemCatalog catalog;
    if (kind == "genre-world") {
        GenreWorldConfig g;
        g.users = users;
        g.items = items;
        g.seed = seed;
        auto w = genre_world(g);
        ratings = std::move(w.log);
        catalog = std::move(w.catalog);
    } else if (kind == "two-community") {
        TwoCommunityConfig t;
        t.users = users;
        t.items = items;
        t.seed = seed;
        ratings = two_community_log(t);
        for (std::size_t i = 0; i < items; ++i) {
            GenreSet g;
            g.set(i < items / 2 ? *genre_index("Drama") : *genre_index("Comedy"));
            catalog[padded_id('i', i)] = {"Feature " + std::to_string(i) + " (1990)", g};
        }
    } else {
        throw ArgumentError("unknown synthetic kind: " + kind);
    }
    fs::create_directories(out_dir);
    std::ostringstream r, m;
    for (const auto& row : ratings.rows())
        r << row.user << "::" << row.item << "::" << row.rating << "::" << row.timestamp << '\n';
    for (const auto& [id, info] : catalog) m << id << "::" << info.title << "::" << genre_list(info.genres) << '\n';
    write_text(out_dir / "ratings.dat", r.str());
    write_text(out_dir / "movies.dat", m.str());
    log << "wrote " << ratings.size() << " ratings for " << ratings.users().size() << " users to " << out_dir.string()
        << '\n';
}

// Manifest rewrite after a command: cumulative counters, fresh digests.
inline void finalize_manifest(CommandContext& c, const std::string& command) {
    auto m = RunManifest::load(c.run).value_or(RunManifest{});
    m.config = c.config.snapshot();
    m.components = component_versions();
    const auto counters = c.diag.to_json();
    m.add_warnings(counters);
    json entry = {{"command", command}, {"config", c.config.snapshot()}, {"warnings", counters}, {"failed", c.failed}};
    if (c.gateway)
        entry["gateway"] = {{"mode", c.gateway->mode()},
                            {"backend_calls", c.gateway->backend_calls()},
                            {"cache_hits", c.gateway->cache_hits()},
                            {"retries", c.gateway->retries()}};
    m.commands.push_back(entry);
    m.failed = m.failed || c.failed;
    m.digests = digest_outputs(c.run);
    write_json_file(c.run / kManifestName, m.to_json());
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Agent-based recommender simulation toolkit", "agentrec"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kVersion));

    struct Shared {
        std::string run_dir, config_file, backend, recommender;
        std::optional<long long> seed, agents;
        std::vector<std::string> sets;
        bool force = false;
        std::string data, items, schema;
    } s;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--run-dir", s.run_dir, "Run directory")->required();
        sub->add_option("--config", s.config_file, "key=value config file");
        sub->add_option("--seed", s.seed, "Base seed");
        sub->add_option("--backend", s.backend, "Language backend")->check(CLI::IsMember({"live", "scripted"}));
        sub->add_option("--recommender", s.recommender, "Recommender strategy")
            ->check(CLI::IsMember({"random", "pop", "mf", "lightgcn"}));
        sub->add_option("--agents", s.agents, "Number of agents");
        sub->add_option("--set", s.sets, "Override a config key (key=value)");
        sub->add_flag("--force", s.force, "Overwrite existing outputs");
    };

    const std::vector<std::pair<std::string, std::string>> commands = {
        {"prepare", "Sample users, split and compute item statistics"},
        {"profiles", "Generate agent and item profiles"},
        {"simulate", "Run the agent simulation against a recommender"},
        {"eval-offline", "Offline Recall/NDCG of a recommender"},
        {"alignment", "Taste-alignment experiment"},
        {"augment", "Retrain with simulated feedback"},
        {"bubble", "Multi-round filter-bubble experiment"},
        {"causal", "Causal discovery over simulated item factors"},
    };
    std::map<std::string, CLI::App*> subs;
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        common(sub);
        subs[name] = sub;
    }
    subs["prepare"]->add_option("--data", s.data, "Ratings file");
    subs["prepare"]->add_option("--items", s.items, "Item metadata file");
    subs["prepare"]->add_option("--schema", s.schema, "Ratings layout")->check(CLI::IsMember({"movielens", "csv"}));

    std::string verify_dir;
    auto* verify = app.add_subcommand("verify", "Check output digests against the manifest");
    verify->add_option("--run-dir", verify_dir, "Run directory")->required();

    std::string synth_out, synth_kind = "genre-world";
    std::size_t synth_users = 100, synth_items = 400;
    long long synth_seed = 0;
    auto* synth = app.add_subcommand("synth", "Write a synthetic dataset");
    synth->add_option("--out", synth_out, "Output directory")->required();
    synth->add_option("--kind", synth_kind, "genre-world or two-community")
        ->check(CLI::IsMember({"genre-world", "two-community"}));
    synth->add_option("--users", synth_users, "Users");
    synth->add_option("--items", synth_items, "Items");
    synth->add_option("--seed", synth_seed, "Seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? ok : input_error;
    }

    try {
        if (synth->parsed()) {
            cmd_synth(synth_out, synth_kind, synth_users, synth_items, static_cast<std::uint64_t>(synth_seed), err);
            return ok;
        }
        if (verify->parsed()) {
            auto m = RunManifest::load(verify_dir);
            if (!m) throw MissingPrerequisite((fs::path(verify_dir) / kManifestName).string());
            const auto problems = m->verify(verify_dir);
            for (const auto& p : problems) err << p << '\n';
            out << (problems.empty() ? "manifest verified" : "manifest mismatch") << '\n';
            return problems.empty() ? ok : input_error;
        }

        std::string name;
        for (const auto& [n, sub] : subs)
            if (sub->parsed()) name = n;

        CommandContext c;
        c.run = s.run_dir;
        c.force = s.force;
        c.log = &err;
        if (!s.config_file.empty()) c.config.load_file(s.config_file);
        for (const auto& kv : s.sets) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw ArgumentError("--set expects key=value, got '" + kv + "'");
            c.config.set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
        }
        if (s.seed) c.config.set("seed", std::to_string(*s.seed));
        if (!s.backend.empty()) c.config.set("backend", s.backend);
        if (!s.recommender.empty()) c.config.set("recommender", s.recommender);
        if (s.agents) c.config.set("agents", std::to_string(*s.agents));
        if (!s.data.empty()) c.config.set("data", s.data);
        if (!s.items.empty()) c.config.set("items", s.items);
        if (!s.schema.empty()) c.config.set("schema", s.schema);
        c.config.validate();
        fs::create_directories(c.run);

        int code = ok;
        try {
            if (name == "prepare") cmd_prepare(c);
            else if (name == "profiles") cmd_profiles(c);
            else if (name == "simulate") cmd_simulate(c);
            else if (name == "eval-offline") cmd_eval_offline(c);
            else if (name == "alignment") cmd_alignment(c);
            else if (name == "augment") cmd_augment(c);
            else if (name == "bubble") cmd_bubble(c);
            else if (name == "causal") cmd_causal(c);
        } catch (const BackendError& e) {
            if (!c.failed) throw;
            err << "error: " << e.what() << '\n';
            code = backend_failure;
        }
        finalize_manifest(c, name);
        return code;
    } catch (const MissingPrerequisite& e) {
        err << e.what() << '\n';
        return missing_prerequisite;
    } catch (const BackendError& e) {
        err << "backend failure: " << e.what() << '\n';
        return backend_failure;
    } catch (const ParseError& e) {
        err << "input error: " << e.what() << '\n';
        return input_error;
    } catch (const ValidationError& e) {
        err << "input error: " << e.what() << '\n';
        return input_error;
    } catch (const ArgumentError& e) {
        err << "input error: " << e.what() << '\n';
        return input_error;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return failure;
    }
}

}  // namespace agentrec::cli
