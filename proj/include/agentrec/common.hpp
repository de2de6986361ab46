#pragma once
// Shared vocabulary: error hierarchy, the genre catalog, and small string/hash helpers.

#include <algorithm>
#include <array>
#include <bitset>
#include <cctype>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace agentrec {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Malformed input text (data files or generated responses).
class ParseError : public Error {
  public:
    explicit ParseError(const std::string& what, std::size_t line = 0)
        : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

  private:
    std::size_t line_;
};

// Well-formed input that violates a domain bound.
class ValidationError : public Error {
  public:
    explicit ValidationError(const std::string& what, std::size_t line = 0)
        : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

  private:
    std::size_t line_;
};

class ArgumentError : public Error {
  public:
    using Error::Error;
};

// A quantity that has no value for the given input (e.g. mean of nothing).
class UndefinedResultError : public Error {
  public:
    using Error::Error;
};

class BackendError : public Error {
  public:
    explicit BackendError(const std::string& what, bool retryable = false)
        : Error(what), retryable_(retryable) {}
    bool retryable() const noexcept { return retryable_; }

  private:
    bool retryable_;
};

class TrainingError : public Error {
  public:
    using Error::Error;
};

// A run-directory artifact that a command depends on does not exist yet.
class MissingPrerequisite : public Error {
  public:
    explicit MissingPrerequisite(const std::string& artifact)
        : Error("missing prerequisite: " + artifact), artifact_(artifact) {}
    const std::string& artifact() const noexcept { return artifact_; }

  private:
    std::string artifact_;
};

// ---------------------------------------------------------------------------
// Genre catalog (MovieLens 18 genres)
// ---------------------------------------------------------------------------

inline constexpr std::size_t kGenreCount = 18;

inline constexpr std::array<std::string_view, kGenreCount> kGenreNames = {
    "Action",  "Adventure", "Animation", "Children's", "Comedy",  "Crime",
    "Documentary", "Drama", "Fantasy",   "Film-Noir",  "Horror",  "Musical",
    "Mystery", "Romance",   "Sci-Fi",    "Thriller",   "War",     "Western"};

using GenreSet = std::bitset<kGenreCount>;

inline std::optional<std::size_t> genre_index(std::string_view name) {
    for (std::size_t i = 0; i < kGenreCount; ++i)
        if (kGenreNames[i] == name) return i;
    return std::nullopt;
}

inline std::string genre_list(const GenreSet& genres, std::string_view sep = "|") {
    std::string out;
    for (std::size_t i = 0; i < kGenreCount; ++i) {
        if (!genres.test(i)) continue;
        if (!out.empty()) out += sep;
        out += kGenreNames[i];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Strings
// ---------------------------------------------------------------------------

inline std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

inline std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

inline std::vector<std::string> split(std::string_view s, std::string_view delim) {
    std::vector<std::string> out;
    if (delim.empty()) {
        out.emplace_back(s);
        return out;
    }
    std::size_t start = 0;
    while (true) {
        auto pos = s.find(delim, start);
        if (pos == std::string_view::npos) {
            out.emplace_back(s.substr(start));
            break;
        }
        out.emplace_back(s.substr(start, pos - start));
        start = pos + delim.size();
    }
    return out;
}

inline std::vector<std::string> split_lines(std::string_view text) {
    auto lines = split(text, "\n");
    for (auto& l : lines)
        if (!l.empty() && l.back() == '\r') l.pop_back();
    return lines;
}

template <class Range>
std::string join(const Range& parts, std::string_view sep) {
    std::string out;
    bool first = true;
    for (const auto& p : parts) {
        if (!first) out += sep;
        out += p;
        first = false;
    }
    return out;
}

inline bool istarts_with(std::string_view s, std::string_view prefix) {
    if (s.size() < prefix.size()) return false;
    for (std::size_t i = 0; i < prefix.size(); ++i)
        if (std::tolower(static_cast<unsigned char>(s[i])) !=
            std::tolower(static_cast<unsigned char>(prefix[i])))
            return false;
    return true;
}

// Case-insensitive find; npos when absent.
inline std::size_t ifind(std::string_view hay, std::string_view needle, std::size_t from = 0) {
    if (needle.empty()) return from;
    if (hay.size() < needle.size()) return std::string_view::npos;
    for (std::size_t i = from; i + needle.size() <= hay.size(); ++i)
        if (istarts_with(hay.substr(i), needle)) return i;
    return std::string_view::npos;
}

// Strips list markers and markdown emphasis that chat models like to add.
inline std::string strip_decoration(std::string_view line) {
    std::string s = trim(line);
    while (!s.empty() && (s.front() == '-' || s.front() == '*' || s.front() == '#' ||
                          s.front() == '>' || s.front() == '`'))
        s = trim(std::string_view(s).substr(1));
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '*' && i + 1 < s.size() && s[i + 1] == '*') {
            ++i;
            continue;
        }
        out += s[i];
    }
    return trim(out);
}

inline std::string format_fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

// ---------------------------------------------------------------------------
// Hashing and seeds
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Derives an independent stream seed from a base seed and a label.
inline std::uint64_t mix_seed(std::uint64_t seed, std::string_view label) {
    return splitmix64(seed ^ fnv1a(label));
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t value) {
    return splitmix64(seed ^ splitmix64(value + 0x632BE59BD9B4E019ULL));
}

// JSON text that tolerates non-UTF-8 bytes (MovieLens titles are Latin-1).
inline std::string json_text(const json& j, int indent = -1) {
    return j.dump(indent, ' ', false, json::error_handler_t::replace);
}

}  // namespace agentrec
