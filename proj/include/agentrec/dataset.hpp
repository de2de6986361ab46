#pragma once
// Rating-log ingestion, per-item statistics, user sampling and the per-user
// train/validation/test split with cold-start pruning.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "agentrec/common.hpp"

namespace agentrec {

struct Interaction {
    std::string user;
    std::string item;
    int rating = 0;
    std::int64_t timestamp = 0;

    friend bool operator==(const Interaction&, const Interaction&) = default;
};

// Immutable rating log. Rows are kept in canonical order (user, timestamp, item)
// so each user's history is a contiguous span and serialization is stable.
class InteractionLog {
  public:
    InteractionLog() = default;

    // Validates ratings and collapses duplicate (user, item) pairs, keeping the
    // latest timestamp (the later row wins a timestamp tie).
    explicit InteractionLog(std::vector<Interaction> rows) {
        for (const auto& r : rows)
            if (r.rating < 1 || r.rating > 5)
                throw ValidationError("rating " + std::to_string(r.rating) + " outside 1..5 for user " +
                                      r.user + ", item " + r.item);
        std::vector<std::size_t> order(rows.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            const auto& x = rows[a];
            const auto& y = rows[b];
            if (x.user != y.user) return x.user < y.user;
            if (x.item != y.item) return x.item < y.item;
            return x.timestamp < y.timestamp;
        });
        rows_.reserve(rows.size());
        for (std::size_t k = 0; k < order.size(); ++k) {
            const auto& r = rows[order[k]];
            bool last_of_pair = k + 1 == order.size() || rows[order[k + 1]].user != r.user ||
                                rows[order[k + 1]].item != r.item;
            if (last_of_pair) rows_.push_back(std::move(rows[order[k]]));
        }
        std::sort(rows_.begin(), rows_.end(), [](const Interaction& x, const Interaction& y) {
            if (x.user != y.user) return x.user < y.user;
            if (x.timestamp != y.timestamp) return x.timestamp < y.timestamp;
            return x.item < y.item;
        });
        std::set<std::string> items;
        for (std::size_t i = 0; i < rows_.size();) {
            std::size_t j = i;
            while (j < rows_.size() && rows_[j].user == rows_[i].user) items.insert(rows_[j++].item);
            user_spans_.emplace(rows_[i].user, std::make_pair(i, j - i));
            users_.push_back(rows_[i].user);
            i = j;
        }
        items_.assign(items.begin(), items.end());
    }

    const std::vector<Interaction>& rows() const noexcept { return rows_; }
    std::size_t size() const noexcept { return rows_.size(); }
    bool empty() const noexcept { return rows_.empty(); }

    // Sorted unique ids.
    const std::vector<std::string>& users() const noexcept { return users_; }
    const std::vector<std::string>& items() const noexcept { return items_; }

    bool has_user(const std::string& user) const { return user_spans_.count(user) != 0; }

    std::span<const Interaction> history(const std::string& user) const {
        auto it = user_spans_.find(user);
        if (it == user_spans_.end()) return {};
        return std::span<const Interaction>(rows_.data() + it->second.first, it->second.second);
    }

    std::unordered_set<std::string> item_set() const { return {items_.begin(), items_.end()}; }

    std::unordered_set<std::string> items_of(const std::string& user) const {
        std::unordered_set<std::string> out;
        for (const auto& r : history(user)) out.insert(r.item);
        return out;
    }

  private:
    std::vector<Interaction> rows_;
    std::vector<std::string> users_;
    std::vector<std::string> items_;
    std::map<std::string, std::pair<std::size_t, std::size_t>> user_spans_;
};

// ---------------------------------------------------------------------------
// Ingestion
// ---------------------------------------------------------------------------

struct ColumnSchema {
    std::string delimiter = "::";
    int user_col = 0;
    int item_col = 1;
    int rating_col = 2;
    int timestamp_col = 3;
    bool header = false;

    static ColumnSchema movielens() { return {}; }
    static ColumnSchema csv() { return {",", 0, 1, 2, 3, true}; }
};

namespace detail {

inline std::optional<std::int64_t> parse_int(std::string_view s) {
    s = std::string_view(s.data(), s.size());
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    if (s.empty()) return std::nullopt;
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec == std::errc() && ptr == s.data() + s.size()) return v;
    // Accept integral decimals such as "4.0".
    double d = 0;
    auto [p2, ec2] = std::from_chars(s.data(), s.data() + s.size(), d);
    if (ec2 == std::errc() && p2 == s.data() + s.size() && std::floor(d) == d) return static_cast<std::int64_t>(d);
    return std::nullopt;
}

}  // namespace detail

inline std::vector<Interaction> parse_interactions(std::istream& in, const ColumnSchema& schema) {
    std::vector<Interaction> rows;
    std::string line;
    std::size_t line_no = 0;
    const int needed = std::max({schema.user_col, schema.item_col, schema.rating_col, schema.timestamp_col}) + 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (schema.header && line_no == 1) continue;
        if (trim(line).empty()) continue;
        auto fields = split(line, schema.delimiter);
        if (static_cast<int>(fields.size()) < needed)
            throw ParseError("expected " + std::to_string(needed) + " fields, got " + std::to_string(fields.size()),
                             line_no);
        Interaction r;
        r.user = trim(fields[schema.user_col]);
        r.item = trim(fields[schema.item_col]);
        if (r.user.empty() || r.item.empty()) throw ParseError("empty user or item id", line_no);
        auto rating = detail::parse_int(fields[schema.rating_col]);
        if (!rating) throw ParseError("rating is not an integer: '" + fields[schema.rating_col] + "'", line_no);
        if (*rating < 1 || *rating > 5)
            throw ValidationError("rating " + std::to_string(*rating) + " outside 1..5", line_no);
        auto ts = detail::parse_int(fields[schema.timestamp_col]);
        if (!ts) throw ParseError("timestamp is not an integer: '" + fields[schema.timestamp_col] + "'", line_no);
        r.rating = static_cast<int>(*rating);
        r.timestamp = *ts;
        rows.push_back(std::move(r));
    }
    return rows;
}

inline InteractionLog load_interactions(const std::filesystem::path& path, const ColumnSchema& schema = {}) {
    std::ifstream in(path);
    if (!in) throw ArgumentError("cannot open interactions file: " + path.string());
    return InteractionLog(parse_interactions(in, schema));
}

inline void save_interactions_csv(const InteractionLog& log, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << "user,item,rating,timestamp\n";
    for (const auto& r : log.rows()) {
        if (r.user.find_first_of(",\n") != std::string::npos || r.item.find_first_of(",\n") != std::string::npos)
            throw ValidationError("identifier contains a CSV delimiter: " + r.user + "/" + r.item);
        out << r.user << ',' << r.item << ',' << r.rating << ',' << r.timestamp << '\n';
    }
}

inline InteractionLog load_interactions_csv(const std::filesystem::path& path) {
    return load_interactions(path, ColumnSchema::csv());
}

// ---------------------------------------------------------------------------
// Item metadata and statistics
// ---------------------------------------------------------------------------

struct ItemInfo {
    std::string title;
    GenreSet genres;
};

using ItemCatalog = std::map<std::string, ItemInfo>;

// MovieLens movies.dat layout: id<delim>title<delim>Genre1|Genre2.
inline ItemCatalog parse_items(std::istream& in, std::string_view delimiter = "::", bool header = false) {
    ItemCatalog out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (header && line_no == 1) continue;
        if (trim(line).empty()) continue;
        auto fields = split(line, delimiter);
        if (fields.size() < 3) throw ParseError("expected id, title, genres", line_no);
        // Titles may contain the delimiter when it is a comma; genres are the last field.
        std::string id = trim(fields.front());
        std::string genres_field = trim(fields.back());
        std::vector<std::string> title_parts(fields.begin() + 1, fields.end() - 1);
        ItemInfo info;
        info.title = trim(join(title_parts, delimiter));
        if (genres_field != "(no genres listed)") {
            for (const auto& g : split(genres_field, "|")) {
                auto idx = genre_index(trim(g));
                if (!idx) throw ValidationError("unknown genre '" + g + "'", line_no);
                info.genres.set(*idx);
            }
        }
        out[id] = std::move(info);
    }
    return out;
}

inline ItemCatalog load_items(const std::filesystem::path& path, std::string_view delimiter = "::",
                              bool header = false) {
    std::ifstream in(path);
    if (!in) throw ArgumentError("cannot open items file: " + path.string());
    return parse_items(in, delimiter, header);
}

struct ItemStats {
    double quality = 0.0;  // mean rating
    int popularity = 0;    // rater count
    GenreSet genres;
    std::string title;
};

using ItemStatsMap = std::map<std::string, ItemStats>;

inline ItemStatsMap item_stats(const InteractionLog& log) {
    std::map<std::string, std::pair<long long, int>> acc;
    for (const auto& r : log.rows()) {
        auto& a = acc[r.item];
        a.first += r.rating;
        a.second += 1;
    }
    ItemStatsMap out;
    for (const auto& [item, a] : acc) {
        ItemStats s;
        s.popularity = a.second;
        s.quality = static_cast<double>(a.first) / a.second;
        out.emplace(item, std::move(s));
    }
    return out;
}

inline ItemStatsMap item_stats(const InteractionLog& log, const ItemCatalog& catalog) {
    auto out = item_stats(log);
    for (auto& [item, s] : out) {
        auto it = catalog.find(item);
        if (it == catalog.end()) continue;
        s.title = it->second.title;
        s.genres = it->second.genres;
    }
    return out;
}

// Absent entry for never-rated items.
inline std::optional<ItemStats> find_stats(const ItemStatsMap& stats, const std::string& item) {
    auto it = stats.find(item);
    if (it == stats.end()) return std::nullopt;
    return it->second;
}

// ---------------------------------------------------------------------------
// Sampling and splitting
// ---------------------------------------------------------------------------

inline InteractionLog restrict_to_users(const InteractionLog& log, const std::vector<std::string>& users) {
    std::vector<Interaction> rows;
    for (const auto& u : users)
        for (const auto& r : log.history(u)) rows.push_back(r);
    return InteractionLog(std::move(rows));
}

inline InteractionLog sample_users(const InteractionLog& log, std::size_t n, std::uint64_t seed) {
    if (n > log.users().size())
        throw ArgumentError("cannot sample " + std::to_string(n) + " users from a log with " +
                            std::to_string(log.users().size()));
    std::vector<std::string> users = log.users();
    std::mt19937_64 rng(mix_seed(seed, "sample_users"));
    std::shuffle(users.begin(), users.end(), rng);
    users.resize(n);
    std::sort(users.begin(), users.end());
    return restrict_to_users(log, users);
}

struct SplitRatios {
    double train = 4, validation = 3, test = 3;
};

// Largest-remainder apportionment of n into buckets; remainder ties go to the
// earlier bucket, and the first bucket never ends up empty when n > 0.
inline std::vector<std::size_t> apportion(std::size_t n, std::span<const double> weights) {
    double total = 0;
    for (double w : weights) {
        if (!(w > 0)) throw ArgumentError("ratios must be positive");
        total += w;
    }
    std::vector<std::size_t> counts(weights.size());
    std::vector<double> frac(weights.size());
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        double q = static_cast<double>(n) * weights[i] / total;
        counts[i] = static_cast<std::size_t>(std::floor(q + 1e-12));
        frac[i] = q - static_cast<double>(counts[i]);
        assigned += counts[i];
    }
    std::vector<std::size_t> order(weights.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b] + 1e-12; });
    for (std::size_t k = 0; assigned < n; ++k, ++assigned) counts[order[k % order.size()]] += 1;
    return counts;
}

struct Split {
    InteractionLog train;
    InteractionLog validation;
    InteractionLog test;
    std::vector<Interaction> pruned;  // val/test rows whose item never occurs in train
};

inline Split split_per_user(const InteractionLog& log, SplitRatios ratios = {}, std::uint64_t seed = 0) {
    const std::array<double, 3> w{ratios.train, ratios.validation, ratios.test};
    std::vector<Interaction> train, val, test;
    for (const auto& user : log.users()) {
        auto hist = log.history(user);
        std::vector<Interaction> rows(hist.begin(), hist.end());
        std::mt19937_64 rng(mix_seed(seed, user));
        std::shuffle(rows.begin(), rows.end(), rng);
        auto counts = apportion(rows.size(), w);
        if (counts[0] == 0 && !rows.empty()) {
            auto donor = counts[1] >= counts[2] ? 1 : 2;
            counts[donor] -= 1;
            counts[0] += 1;
        }
        std::size_t k = 0;
        for (; k < counts[0]; ++k) train.push_back(rows[k]);
        for (; k < counts[0] + counts[1]; ++k) val.push_back(rows[k]);
        for (; k < rows.size(); ++k) test.push_back(rows[k]);
    }
    Split out;
    out.train = InteractionLog(std::move(train));
    auto train_items = out.train.item_set();
    auto prune = [&](std::vector<Interaction>& rows) {
        std::vector<Interaction> kept;
        for (auto& r : rows) {
            if (train_items.count(r.item))
                kept.push_back(std::move(r));
            else
                out.pruned.push_back(std::move(r));
        }
        return kept;
    };
    out.validation = InteractionLog(prune(val));
    out.test = InteractionLog(prune(test));
    return out;
}

}  // namespace agentrec
