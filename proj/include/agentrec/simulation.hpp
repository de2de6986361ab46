#pragma once
// Runs agent populations against a recommender and implements the evaluation
// experiments: satisfaction metrics, rating histogram, taste alignment,
// feedback augmentation and the filter-bubble loop.

#include <algorithm>
#include <array>
#include <atomic>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "agentrec/agent.hpp"
#include "agentrec/diagnostics.hpp"
#include "agentrec/profiles.hpp"
#include "agentrec/recommenders.hpp"

namespace agentrec {

struct SimulationConfig {
    SessionConfig session;
    std::size_t threads = 16;
    double max_abort_rate = 0.05;
};

struct SimulationResult {
    std::vector<SimRecord> records;  // one per agent in input order, invalid ones included
    std::size_t aborted = 0;
    bool failed = false;

    std::vector<SimRecord> valid_records() const {
        std::vector<SimRecord> out;
        for (const auto& r : records)
            if (r.valid) out.push_back(r);
        return out;
    }
};

// Runs `n` independent jobs on up to `threads` workers; results land by index.
template <class F>
void parallel_for(std::size_t n, std::size_t threads, F&& job) {
    threads = std::max<std::size_t>(1, std::min(threads, n));
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(n);
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                job(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

// Sessions for every profile. `train` supplies each agent's exclusion set.
inline SimulationResult run_simulation(const std::vector<AgentProfile>& profiles, const Recommender& recommender,
                                       Gateway& gateway, const ItemProfileMap& items,
                                       const std::vector<std::string>& pool, const ImplicitFeedback& train,
                                       const SimulationConfig& cfg = {}, Diagnostics* diag = nullptr,
                                       std::vector<MemoryStore>* memories = nullptr) {
    SimulationResult out;
    out.records.resize(profiles.size());
    if (memories) memories->assign(profiles.size(), MemoryStore());
    parallel_for(profiles.size(), cfg.threads, [&](std::size_t i) {
        const auto& p = profiles[i];
        ItemSet train_items;
        if (auto it = train.find(p.user_id); it != train.end()) train_items.insert(it->second.begin(), it->second.end());
        SessionContext ctx{&items, &pool, &train_items};
        SessionConfig sc = cfg.session;
        sc.seed = mix_seed(cfg.session.seed, p.user_id);
        out.records[i] = run_agent_session(p, recommender, gateway, ctx, sc, diag, memories ? &(*memories)[i] : nullptr);
    });
    for (const auto& r : out.records)
        if (!r.valid) ++out.aborted;
    out.failed = !profiles.empty() &&
                 static_cast<double>(out.aborted) / static_cast<double>(profiles.size()) > cfg.max_abort_rate;
    return out;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

struct SimMetrics {
    double p_view = 0.0;
    double n_like = 0.0;
    double p_like = 0.0;
    double n_exit = 0.0;
    double s_sat = 0.0;
    std::size_t agents = 0;
    std::size_t interviewed = 0;
};

// Macro averages over valid records: views/exposures, likes, likes/exposures,
// exit page and interview score.
inline SimMetrics aggregate_metrics(const std::vector<SimRecord>& records) {
    SimMetrics m;
    for (const auto& r : records) {
        if (!r.valid || r.n_expose() == 0) continue;
        const double expose = static_cast<double>(r.n_expose());
        m.p_view += static_cast<double>(r.n_view()) / expose;
        m.n_like += static_cast<double>(r.n_like());
        m.p_like += static_cast<double>(r.n_like()) / expose;
        m.n_exit += r.exit_page;
        if (r.interview) {
            m.s_sat += r.interview->score;
            ++m.interviewed;
        }
        ++m.agents;
    }
    if (m.agents == 0) throw UndefinedResultError("no valid simulation records to aggregate");
    const double n = static_cast<double>(m.agents);
    m.p_view /= n;
    m.n_like /= n;
    m.p_like /= n;
    m.n_exit /= n;
    if (m.interviewed) m.s_sat /= static_cast<double>(m.interviewed);
    return m;
}

inline void write_metrics_csv(std::ostream& out, const SimMetrics& m) {
    out << "P_view,N_like,P_like,N_exit,S_sat\n";
    out << format_fixed(m.p_view, 6) << ',' << format_fixed(m.n_like, 6) << ',' << format_fixed(m.p_like, 6) << ','
        << format_fixed(m.n_exit, 6) << ',' << format_fixed(m.s_sat, 6) << '\n';
}

struct RatingHistogram {
    std::array<std::size_t, 5> counts{};
    std::array<double, 5> proportions{};
    std::size_t total = 0;
};

inline RatingHistogram rating_distribution(const std::vector<SimRecord>& records) {
    RatingHistogram h;
    for (const auto& r : records) {
        if (!r.valid) continue;
        for (const auto& p : r.pages)
            for (const auto& x : p.reaction.ratings) {
                ++h.counts[static_cast<std::size_t>(x.rating - 1)];
                ++h.total;
            }
    }
    if (h.total)
        for (std::size_t i = 0; i < 5; ++i) h.proportions[i] = static_cast<double>(h.counts[i]) / static_cast<double>(h.total);
    return h;
}

inline void write_rating_csv(std::ostream& out, const RatingHistogram& h) {
    out << "rating,count,proportion\n";
    for (std::size_t i = 0; i < 5; ++i) out << i + 1 << ',' << h.counts[i] << ',' << format_fixed(h.proportions[i], 6) << '\n';
}

// ---------------------------------------------------------------------------
// Taste alignment
// ---------------------------------------------------------------------------

struct AlignmentReport {
    int m = 1;
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    std::size_t agents = 0;
    std::size_t skipped = 0;
    std::map<std::string, double> per_agent_accuracy;
    double macro_accuracy = 0.0;

    std::size_t decisions() const { return tp + fp + tn + fn; }
};

inline std::size_t alignment_positives(int m, std::size_t page = 20) {
    if (m < 1) throw ArgumentError("distractor ratio must be >= 1");
    return static_cast<std::size_t>(std::lround(static_cast<double>(page) / (1.0 + m)));
}

struct AlignmentInputs {
    const std::vector<AgentProfile>* profiles = nullptr;
    const ImplicitFeedback* held_out = nullptr;     // interacted items not used for profiles
    const ImplicitFeedback* interacted = nullptr;   // every item each user touched
    const ItemProfileMap* items = nullptr;          // candidates for distractors and rendering
    std::size_t page = 20;
    std::uint64_t seed = 0;
    std::size_t threads = 16;
};

inline AlignmentReport alignment_experiment(const AlignmentInputs& in, int m, Gateway& gateway,
                                            Diagnostics* diag = nullptr) {
    AlignmentReport rep;
    rep.m = m;
    const std::size_t n_pos = alignment_positives(m, in.page);
    std::vector<std::string> catalog;
    for (const auto& [id, p] : *in.items)
        if (p.kept) catalog.push_back(id);

    struct Outcome {
        bool skipped = true;
        std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    };
    std::vector<Outcome> outcomes(in.profiles->size());
    parallel_for(in.profiles->size(), in.threads, [&](std::size_t a) {
        const auto& prof = (*in.profiles)[a];
        std::mt19937_64 rng(mix_seed(mix_seed(in.seed, prof.user_id), static_cast<std::uint64_t>(m)));
        std::vector<std::string> pos;
        if (auto it = in.held_out->find(prof.user_id); it != in.held_out->end())
            for (const auto& i : it->second)
                if (in.items->count(i) && in.items->at(i).kept &&
                    std::find(prof.seed_items.begin(), prof.seed_items.end(), i) == prof.seed_items.end())
                    pos.push_back(i);
        const auto* touched = in.interacted->count(prof.user_id) ? &in.interacted->at(prof.user_id) : nullptr;
        std::vector<std::string> neg;
        for (const auto& i : catalog)
            if (!touched || !touched->count(i)) neg.push_back(i);
        if (pos.size() < n_pos || neg.size() < in.page - n_pos) return;
        std::shuffle(pos.begin(), pos.end(), rng);
        std::shuffle(neg.begin(), neg.end(), rng);
        std::vector<std::pair<std::string, bool>> shown;
        for (std::size_t i = 0; i < n_pos; ++i) shown.emplace_back(pos[i], true);
        for (std::size_t i = 0; i < in.page - n_pos; ++i) shown.emplace_back(neg[i], false);
        std::shuffle(shown.begin(), shown.end(), rng);
        std::vector<PageItem> items;
        for (const auto& [id, truth] : shown) items.push_back(page_item(in.items->at(id)));
        auto reaction = react_to_page(prof, {}, 1, items, gateway, diag, nullptr);
        if (!reaction) return;
        const auto aligned = reaction->aligned_set();
        Outcome o;
        o.skipped = false;
        for (const auto& [id, truth] : shown) {
            const bool said = aligned.count(id) != 0;
            (truth ? (said ? o.tp : o.fn) : (said ? o.fp : o.tn))++;
        }
        outcomes[a] = o;
    });
    for (std::size_t a = 0; a < outcomes.size(); ++a) {
        const auto& o = outcomes[a];
        if (o.skipped) {
            ++rep.skipped;
            if (diag) diag->add(Diagnostics::alignment_skips);
            continue;
        }
        rep.tp += o.tp;
        rep.fp += o.fp;
        rep.tn += o.tn;
        rep.fn += o.fn;
        const double acc = static_cast<double>(o.tp + o.tn) / static_cast<double>(o.tp + o.tn + o.fp + o.fn);
        rep.per_agent_accuracy[(*in.profiles)[a].user_id] = acc;
        rep.macro_accuracy += acc;
        ++rep.agents;
    }
    if (rep.decisions()) rep.accuracy = static_cast<double>(rep.tp + rep.tn) / static_cast<double>(rep.decisions());
    if (rep.tp + rep.fp) rep.precision = static_cast<double>(rep.tp) / static_cast<double>(rep.tp + rep.fp);
    if (rep.tp + rep.fn) rep.recall = static_cast<double>(rep.tp) / static_cast<double>(rep.tp + rep.fn);
    if (rep.precision > 0 && rep.recall > 0) rep.f1 = 2 * rep.precision * rep.recall / (rep.precision + rep.recall);
    if (rep.agents) rep.macro_accuracy /= static_cast<double>(rep.agents);
    return rep;
}

inline void write_alignment_csv(std::ostream& out, const std::vector<AlignmentReport>& reports) {
    out << "ratio,accuracy,precision,recall,f1,agents,skipped,macro_accuracy\n";
    for (const auto& r : reports)
        out << "1:" << r.m << ',' << format_fixed(r.accuracy, 6) << ',' << format_fixed(r.precision, 6) << ','
            << format_fixed(r.recall, 6) << ',' << format_fixed(r.f1, 6) << ',' << r.agents << ',' << r.skipped << ','
            << format_fixed(r.macro_accuracy, 6) << '\n';
}

// ---------------------------------------------------------------------------
// Feedback augmentation
// ---------------------------------------------------------------------------

struct AugmentationRow {
    std::string mode;  // origin, +unviewed, +viewed
    OfflineMetrics offline;
    std::optional<SimMetrics> sim;
    std::size_t train_size = 0;
};

struct AugmentationInputs {
    std::string strategy = "mf";  // mf or lightgcn
    const ImplicitFeedback* train = nullptr;
    const ImplicitFeedback* validation = nullptr;
    const ImplicitFeedback* test = nullptr;
    const std::vector<SimRecord>* records = nullptr;
    TrainConfig config;
    std::vector<std::string> extra_items;
    std::size_t k = 20;
};

inline std::shared_ptr<EmbeddingRecommender> fit_strategy(const std::string& strategy, const ImplicitFeedback& train,
                                                          const ImplicitFeedback& validation, const TrainConfig& cfg,
                                                          const std::vector<std::string>& extra_items = {}) {
    return train_embedding_model(strategy, train, validation, cfg, extra_items);
}

// Offline evaluation always ranks against the base train and validation
// exclusions so every mode sees the same candidate sets.
inline std::vector<AugmentationRow> augmentation_experiment(
    const AugmentationInputs& in, const std::function<SimMetrics(const Recommender&)>& rerun = {}) {
    const ImplicitFeedback exclude = merge_feedback(*in.train, *in.validation);
    std::vector<AugmentationRow> rows;
    const std::array<std::pair<const char*, std::optional<FeedbackMode>>, 3> modes = {
        std::pair<const char*, std::optional<FeedbackMode>>{"origin", std::nullopt},
        {"+unviewed", FeedbackMode::unviewed},
        {"+viewed", FeedbackMode::viewed}};
    for (const auto& [name, mode] : modes) {
        const ImplicitFeedback train = mode ? with_feedback(*in.train, *in.records, *mode) : *in.train;
        auto model = fit_strategy(in.strategy, train, *in.validation, in.config, in.extra_items);
        AugmentationRow row;
        row.mode = name;
        row.train_size = feedback_size(train);
        row.offline = evaluate_offline(*model, *in.test, exclude, in.k);
        if (rerun) row.sim = rerun(*model);
        rows.push_back(std::move(row));
    }
    return rows;
}

inline void write_augmentation_csv(std::ostream& out, const std::vector<AugmentationRow>& rows) {
    out << "mode,train_size,recall,ndcg,N_exit,S_sat\n";
    for (const auto& r : rows)
        out << r.mode << ',' << r.train_size << ',' << format_fixed(r.offline.recall, 6) << ','
            << format_fixed(r.offline.ndcg, 6) << ',' << (r.sim ? format_fixed(r.sim->n_exit, 6) : "") << ','
            << (r.sim ? format_fixed(r.sim->s_sat, 6) : "") << '\n';
}

// ---------------------------------------------------------------------------
// Filter bubble
// ---------------------------------------------------------------------------

struct GenreConcentration {
    double top1_share = 0.0;
    std::size_t distinct = 0;
};

// Multi-genre items count once per genre; the share is over genre occurrences.
inline GenreConcentration genre_concentration(const std::vector<std::string>& items, const ItemProfileMap& profiles) {
    std::array<std::size_t, kGenreCount> counts{};
    std::size_t total = 0;
    for (const auto& id : items) {
        const auto& g = profiles.at(id).genres;
        for (std::size_t i = 0; i < kGenreCount; ++i)
            if (g.test(i)) {
                ++counts[i];
                ++total;
            }
    }
    GenreConcentration c;
    if (total == 0) return c;
    c.top1_share = static_cast<double>(*std::max_element(counts.begin(), counts.end())) / static_cast<double>(total);
    c.distinct = static_cast<std::size_t>(std::count_if(counts.begin(), counts.end(), [](auto n) { return n > 0; }));
    return c;
}

struct BubbleRound {
    int round = 0;
    double top1_share = 0.0;
    double n_genres = 0.0;
    std::size_t pool_size = 0;
    std::set<std::string> recommended;  // everything exposed during the round
    std::size_t viewed = 0;
};

struct BubbleReport {
    std::vector<BubbleRound> rounds;
    bool pools_disjoint() const {
        std::set<std::string> seen;
        for (const auto& r : rounds)
            for (const auto& i : r.recommended)
                if (!seen.insert(i).second) return false;
        return true;
    }
};

struct BubbleInputs {
    const std::vector<AgentProfile>* profiles = nullptr;
    const ItemProfileMap* items = nullptr;
    const std::vector<std::string>* pool = nullptr;  // kept items
    const ImplicitFeedback* train = nullptr;
    const ImplicitFeedback* validation = nullptr;
    TrainConfig config;
    SimulationConfig sim;
    int rounds = 4;
    std::size_t top_k = 20;
    std::uint64_t seed = 0;
};

inline std::vector<std::vector<std::string>> partition_pool(std::vector<std::string> pool, int parts,
                                                            std::uint64_t seed) {
    if (parts < 1) throw ArgumentError("need at least one part");
    std::sort(pool.begin(), pool.end());
    std::mt19937_64 rng(mix_seed(seed, "bubble-pools"));
    std::shuffle(pool.begin(), pool.end(), rng);
    std::vector<std::vector<std::string>> out(static_cast<std::size_t>(parts));
    const std::size_t base = pool.size() / static_cast<std::size_t>(parts);
    std::size_t at = 0;
    for (int p = 0; p < parts; ++p) {
        const std::size_t n = p + 1 == parts ? pool.size() - at : base;
        out[static_cast<std::size_t>(p)].assign(pool.begin() + static_cast<std::ptrdiff_t>(at),
                                                pool.begin() + static_cast<std::ptrdiff_t>(at + n));
        at += n;
    }
    return out;
}

// Round t recommends only from pool part t. Each agent's top-k over the whole
// pool is measured at the start of the round; MF is then retrained on the
// training set plus everything viewed so far.
inline BubbleReport filter_bubble_experiment(const BubbleInputs& in, Gateway& gateway, Diagnostics* diag = nullptr) {
    BubbleReport rep;
    const auto parts = partition_pool(*in.pool, in.rounds, in.seed);
    ImplicitFeedback train = *in.train;
    auto model = fit_mf(train, *in.validation, in.config, *in.pool);
    for (int t = 0; t < in.rounds; ++t) {
        BubbleRound round;
        round.round = t + 1;
        round.pool_size = parts[static_cast<std::size_t>(t)].size();
        std::size_t measured = 0;
        for (const auto& prof : *in.profiles) {
            ItemSet ex;
            if (auto it = train.find(prof.user_id); it != train.end()) ex.insert(it->second.begin(), it->second.end());
            RecommendRequest req{prof.user_id, in.top_k, &ex, in.pool, 0};
            const auto top = item_ids(model->recommend(req));
            if (top.empty()) continue;
            const auto c = genre_concentration(top, *in.items);
            round.top1_share += c.top1_share;
            round.n_genres += static_cast<double>(c.distinct);
            ++measured;
        }
        if (measured) {
            round.top1_share /= static_cast<double>(measured);
            round.n_genres /= static_cast<double>(measured);
        }
        SimulationConfig sc = in.sim;
        sc.session.seed = mix_seed(in.sim.session.seed, static_cast<std::uint64_t>(t));
        auto result = run_simulation(*in.profiles, *model, gateway, *in.items, parts[static_cast<std::size_t>(t)], train,
                                     sc, diag);
        for (const auto& r : result.records) {
            const auto exposed = r.exposed_items();
            round.recommended.insert(exposed.begin(), exposed.end());
        }
        const auto viewed = feedback_from_records(result.records, FeedbackMode::viewed);
        round.viewed = feedback_size(viewed);
        train = merge_feedback(train, viewed);
        rep.rounds.push_back(std::move(round));
        if (t + 1 < in.rounds) model = fit_mf(train, *in.validation, in.config, *in.pool);
    }
    return rep;
}

inline void write_bubble_csv(std::ostream& out, const BubbleReport& rep) {
    out << "round,P_top1_genre,N_genres,pool_size,viewed\n";
    for (const auto& r : rep.rounds)
        out << r.round << ',' << format_fixed(r.top1_share, 6) << ',' << format_fixed(r.n_genres, 6) << ','
            << r.pool_size << ',' << r.viewed << '\n';
}

}  // namespace agentrec
