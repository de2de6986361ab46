#pragma once
// Recommendation strategies behind one interface: uniform random, most
// popular, matrix factorisation and LightGCN (both trained with a pairwise
// ranking loss and Adam), top-k metrics and feedback-augmented retraining.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "agentrec/dataset.hpp"
#include "agentrec/record.hpp"

namespace agentrec {

struct ScoredItem {
    std::string item;
    double score = 0.0;
};

using RankedList = std::vector<ScoredItem>;
using ItemSet = std::unordered_set<std::string>;

struct RecommendRequest {
    std::string user;
    std::size_t k = 20;
    const ItemSet* exclude = nullptr;                   // never returned
    const std::vector<std::string>* candidates = nullptr;  // when set, only these may be returned
    std::uint64_t seed = 0;                             // for sampling strategies
};

class Recommender {
  public:
    virtual ~Recommender() = default;
    virtual std::string strategy() const = 0;
    virtual RankedList recommend(const RecommendRequest& request) const = 0;
};

inline std::vector<std::string> item_ids(const RankedList& list) {
    std::vector<std::string> out;
    out.reserve(list.size());
    for (const auto& s : list) out.push_back(s.item);
    return out;
}

// user -> positive items
using ImplicitFeedback = std::map<std::string, std::set<std::string>>;

inline ImplicitFeedback implicit_feedback(const InteractionLog& log) {
    ImplicitFeedback out;
    for (const auto& r : log.rows()) out[r.user].insert(r.item);
    return out;
}

inline std::size_t feedback_size(const ImplicitFeedback& f) {
    std::size_t n = 0;
    for (const auto& [u, items] : f) n += items.size();
    return n;
}

inline ImplicitFeedback merge_feedback(ImplicitFeedback a, const ImplicitFeedback& b) {
    for (const auto& [u, items] : b) a[u].insert(items.begin(), items.end());
    return a;
}

namespace detail {

inline RankedList sample_ranked(std::vector<std::string> allowed, std::size_t k, std::uint64_t seed,
                                const std::string& user) {
    std::mt19937_64 rng(mix_seed(seed, "rec:" + user));
    std::shuffle(allowed.begin(), allowed.end(), rng);
    if (allowed.size() > k) allowed.resize(k);
    RankedList out;
    for (std::size_t i = 0; i < allowed.size(); ++i)
        out.push_back({allowed[i], static_cast<double>(allowed.size() - i)});
    return out;
}

inline std::vector<std::string> allowed_items(const std::vector<std::string>& pool, const RecommendRequest& req) {
    std::vector<std::string> out;
    std::unordered_set<std::string> cand;
    if (req.candidates) cand.insert(req.candidates->begin(), req.candidates->end());
    for (const auto& item : pool) {
        if (req.candidates && !cand.count(item)) continue;
        if (req.exclude && req.exclude->count(item)) continue;
        out.push_back(item);
    }
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Random and most-popular
// ---------------------------------------------------------------------------

class RandomRecommender : public Recommender {
  public:
    explicit RandomRecommender(std::vector<std::string> pool) : pool_(std::move(pool)) {
        if (pool_.empty()) throw ArgumentError("random recommender needs a non-empty item pool");
        std::sort(pool_.begin(), pool_.end());
        pool_.erase(std::unique(pool_.begin(), pool_.end()), pool_.end());
    }
    std::string strategy() const override { return "random"; }
    RankedList recommend(const RecommendRequest& req) const override {
        return detail::sample_ranked(detail::allowed_items(pool_, req), req.k, req.seed, req.user);
    }
    const std::vector<std::string>& pool() const { return pool_; }

  private:
    std::vector<std::string> pool_;
};

inline std::shared_ptr<RandomRecommender> fit_random(std::vector<std::string> pool) {
    return std::make_shared<RandomRecommender>(std::move(pool));
}

// Top `pool_size` items by training popularity, ties by item id.
inline std::vector<std::string> popularity_pool(const ImplicitFeedback& train, std::size_t pool_size = 600) {
    std::map<std::string, std::size_t> pop;
    for (const auto& [u, items] : train)
        for (const auto& i : items) ++pop[i];
    std::vector<std::pair<std::string, std::size_t>> sorted(pop.begin(), pop.end());
    std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    if (sorted.size() > pool_size) sorted.resize(pool_size);
    std::vector<std::string> out;
    for (const auto& [i, n] : sorted) out.push_back(i);
    return out;
}

class PopRecommender : public Recommender {
  public:
    PopRecommender(const ImplicitFeedback& train, std::size_t pool_size = 600)
        : pool_(popularity_pool(train, pool_size)) {
        if (pool_.empty()) throw ArgumentError("most-popular recommender needs a non-empty training set");
    }
    std::string strategy() const override { return "pop"; }
    RankedList recommend(const RecommendRequest& req) const override {
        return detail::sample_ranked(detail::allowed_items(pool_, req), req.k, req.seed, req.user);
    }
    const std::vector<std::string>& pool() const { return pool_; }

  private:
    std::vector<std::string> pool_;
};

inline std::shared_ptr<PopRecommender> fit_pop(const ImplicitFeedback& train, std::size_t pool_size = 600) {
    return std::make_shared<PopRecommender>(train, pool_size);
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

inline double recall_at_k(const std::vector<std::string>& ranked, const std::set<std::string>& positives,
                          std::size_t k = 20) {
    if (k == 0) throw ArgumentError("k must be >= 1");
    if (positives.empty()) throw UndefinedResultError("recall with no positives is undefined");
    std::size_t hits = 0;
    for (std::size_t r = 0; r < std::min(k, ranked.size()); ++r) hits += positives.count(ranked[r]);
    return static_cast<double>(hits) / static_cast<double>(positives.size());
}

inline double ndcg_at_k(const std::vector<std::string>& ranked, const std::set<std::string>& positives,
                        std::size_t k = 20) {
    if (k == 0) throw ArgumentError("k must be >= 1");
    if (positives.empty()) throw UndefinedResultError("NDCG with no positives is undefined");
    double dcg = 0.0, idcg = 0.0;
    for (std::size_t r = 0; r < std::min(k, ranked.size()); ++r)
        if (positives.count(ranked[r])) dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    for (std::size_t r = 0; r < std::min(k, positives.size()); ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    return dcg / idcg;
}

struct OfflineMetrics {
    double recall = 0.0;
    double ndcg = 0.0;
    std::size_t users = 0;  // users with at least one positive
};

// Macro average over users with positives. `exclude` holds per-user items
// that are removed from the ranking (usually training interactions).
inline OfflineMetrics evaluate_offline(const Recommender& model, const ImplicitFeedback& positives,
                                       const ImplicitFeedback& exclude, std::size_t k = 20) {
    OfflineMetrics m;
    static const std::set<std::string> kNone;
    for (const auto& [user, pos] : positives) {
        if (pos.empty()) continue;
        auto ex_it = exclude.find(user);
        const auto& ex = ex_it == exclude.end() ? kNone : ex_it->second;
        ItemSet ex_set(ex.begin(), ex.end());
        RecommendRequest req{user, k, &ex_set, nullptr, 0};
        const auto ranked = item_ids(model.recommend(req));
        m.recall += recall_at_k(ranked, pos, k);
        m.ndcg += ndcg_at_k(ranked, pos, k);
        ++m.users;
    }
    if (m.users) {
        m.recall /= static_cast<double>(m.users);
        m.ndcg /= static_cast<double>(m.users);
    }
    return m;
}

// ---------------------------------------------------------------------------
// Learned models
// ---------------------------------------------------------------------------

struct TrainConfig {
    double lr = 5e-4;
    int dim = 64;
    int layers = 2;  // LightGCN only
    int batch_size = 1024;
    int max_epochs = 500;
    int patience = 20;
    int eval_k = 20;
    double reg = 1e-4;
    double init_std = 0.1;
    std::uint64_t seed = 0;
    bool mean_of_layers = true;  // LightGCN readout: mean of layers 0..L, else layer L

    void validate() const {
        if (lr <= 0 || dim < 1 || batch_size < 1 || max_epochs < 0 || eval_k < 1 || reg < 0 || init_std <= 0)
            throw ArgumentError("invalid training configuration");
        if (patience < 1) throw ArgumentError("patience must be >= 1");
        if (layers < 0) throw ArgumentError("layers must be >= 0");
    }

    json to_json() const {
        return {{"lr", lr},         {"dim", dim},           {"layers", layers},
                {"batch_size", batch_size}, {"max_epochs", max_epochs}, {"patience", patience},
                {"eval_k", eval_k}, {"reg", reg},           {"init_std", init_std},
                {"seed", seed},     {"mean_of_layers", mean_of_layers}};
    }
};

struct EpochLog {
    int epoch = 0;
    double loss = 0.0;
    double val_recall = 0.0;
};

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

// D^{-1/2} A D^{-1/2} over the user-item bipartite graph; users occupy rows
// [0, n_users), items follow. Isolated nodes get empty rows.
struct NormalizedAdjacency {
    std::size_t n_users = 0;
    std::size_t n_items = 0;
    SparseMatrix matrix;

    NormalizedAdjacency() = default;
    NormalizedAdjacency(std::size_t nu, std::size_t ni, const std::vector<std::pair<std::size_t, std::size_t>>& edges)
        : n_users(nu), n_items(ni), matrix(static_cast<Eigen::Index>(nu + ni), static_cast<Eigen::Index>(nu + ni)) {
        std::vector<double> deg(nu + ni, 0.0);
        for (const auto& [u, i] : edges) {
            deg[u] += 1.0;
            deg[nu + i] += 1.0;
        }
        std::vector<Eigen::Triplet<double>> trips;
        trips.reserve(edges.size() * 2);
        for (const auto& [u, i] : edges) {
            const double w = 1.0 / std::sqrt(deg[u] * deg[nu + i]);
            trips.emplace_back(static_cast<int>(u), static_cast<int>(nu + i), w);
            trips.emplace_back(static_cast<int>(nu + i), static_cast<int>(u), w);
        }
        matrix.setFromTriplets(trips.begin(), trips.end());
    }
};

inline Matrix propagate_layer(const NormalizedAdjacency& adj, const Matrix& e) { return adj.matrix * e; }

// Readout over `layers` propagation steps; the same operator maps gradients
// back because the normalised adjacency is symmetric.
inline Matrix lightgcn_readout(const NormalizedAdjacency& adj, const Matrix& e0, int layers, bool mean_of_layers) {
    if (layers == 0) return e0;
    Matrix cur = e0;
    Matrix acc = mean_of_layers ? e0 : Matrix();
    for (int l = 0; l < layers; ++l) {
        cur = propagate_layer(adj, cur);
        if (mean_of_layers) acc += cur;
    }
    return mean_of_layers ? Matrix(acc / static_cast<double>(layers + 1)) : cur;
}

class EmbeddingRecommender : public Recommender {
  public:
    EmbeddingRecommender(std::string strategy, std::vector<std::string> users, std::vector<std::string> items,
                         Matrix user_factors, Matrix item_factors)
        : strategy_(std::move(strategy)),
          users_(std::move(users)),
          items_(std::move(items)),
          uf_(std::move(user_factors)),
          if_(std::move(item_factors)) {
        for (std::size_t i = 0; i < users_.size(); ++i) user_index_[users_[i]] = i;
        for (std::size_t i = 0; i < items_.size(); ++i) item_index_[items_[i]] = i;
    }

    std::string strategy() const override { return strategy_; }

    double score(const std::string& user, const std::string& item) const {
        auto u = user_index_.find(user);
        auto i = item_index_.find(item);
        if (u == user_index_.end() || i == item_index_.end()) return 0.0;
        return uf_.row(static_cast<Eigen::Index>(u->second)).dot(if_.row(static_cast<Eigen::Index>(i->second)));
    }

    // Highest scores first, ties by item id. Unknown users score every item 0.
    RankedList recommend(const RecommendRequest& req) const override {
        std::vector<std::pair<double, const std::string*>> scored;
        auto u = user_index_.find(req.user);
        auto consider = [&](const std::string& item, std::size_t idx) {
            if (req.exclude && req.exclude->count(item)) return;
            double s = 0.0;
            if (u != user_index_.end())
                s = uf_.row(static_cast<Eigen::Index>(u->second)).dot(if_.row(static_cast<Eigen::Index>(idx)));
            scored.emplace_back(s, &item);
        };
        if (req.candidates) {
            for (const auto& item : *req.candidates) {
                auto it = item_index_.find(item);
                if (it != item_index_.end()) consider(it->first, it->second);
            }
        } else {
            for (std::size_t i = 0; i < items_.size(); ++i) consider(items_[i], i);
        }
        auto better = [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return *a.second < *b.second;
        };
        const std::size_t k = std::min(req.k, scored.size());
        std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end(), better);
        RankedList out;
        for (std::size_t r = 0; r < k; ++r) out.push_back({*scored[r].second, scored[r].first});
        return out;
    }

    const std::vector<std::string>& users() const { return users_; }
    const std::vector<std::string>& items() const { return items_; }
    const Matrix& user_factors() const { return uf_; }
    const Matrix& item_factors() const { return if_; }

    std::vector<EpochLog> training_log;
    int best_epoch = 0;
    double best_val_recall = 0.0;
    TrainConfig config;

    void save(const std::filesystem::path& dir) const {
        std::filesystem::create_directories(dir);
        json header = {{"strategy", strategy_},      {"dim", uf_.cols()},           {"n_users", users_.size()},
                       {"n_items", items_.size()},   {"users", users_},             {"items", items_},
                       {"config", config.to_json()}, {"best_epoch", best_epoch},    {"best_val_recall", best_val_recall}};
        std::ofstream(dir / "model.json") << json_text(header, 2) << '\n';
        std::ofstream bin(dir / "model.bin", std::ios::binary);
        bin.write(reinterpret_cast<const char*>(uf_.data()), static_cast<std::streamsize>(uf_.size() * sizeof(double)));
        bin.write(reinterpret_cast<const char*>(if_.data()), static_cast<std::streamsize>(if_.size() * sizeof(double)));
        std::ofstream curve(dir / "training_curve.csv");
        curve << "epoch,loss,val_recall\n";
        for (const auto& e : training_log)
            curve << e.epoch << ',' << format_fixed(e.loss, 9) << ',' << format_fixed(e.val_recall, 9) << '\n';
    }

    static std::shared_ptr<EmbeddingRecommender> load(const std::filesystem::path& dir) {
        std::ifstream hin(dir / "model.json");
        if (!hin) throw MissingPrerequisite((dir / "model.json").string());
        const json h = json::parse(hin);
        const auto users = h.at("users").get<std::vector<std::string>>();
        const auto items = h.at("items").get<std::vector<std::string>>();
        const auto dim = h.at("dim").get<Eigen::Index>();
        Matrix uf(static_cast<Eigen::Index>(users.size()), dim), itf(static_cast<Eigen::Index>(items.size()), dim);
        std::ifstream bin(dir / "model.bin", std::ios::binary);
        if (!bin) throw MissingPrerequisite((dir / "model.bin").string());
        bin.read(reinterpret_cast<char*>(uf.data()), static_cast<std::streamsize>(uf.size() * sizeof(double)));
        bin.read(reinterpret_cast<char*>(itf.data()), static_cast<std::streamsize>(itf.size() * sizeof(double)));
        if (!bin) throw ValidationError("checkpoint " + dir.string() + " is truncated");
        auto m = std::make_shared<EmbeddingRecommender>(h.at("strategy"), users, items, uf, itf);
        m->best_epoch = h.value("best_epoch", 0);
        m->best_val_recall = h.value("best_val_recall", 0.0);
        return m;
    }

  private:
    std::string strategy_;
    std::vector<std::string> users_;
    std::vector<std::string> items_;
    std::unordered_map<std::string, std::size_t> user_index_;
    std::unordered_map<std::string, std::size_t> item_index_;
    Matrix uf_;
    Matrix if_;
};

namespace detail {

struct Adam {
    double lr, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    Matrix m, v;
    long t = 0;
    Adam(double rate, Eigen::Index rows, Eigen::Index cols) : lr(rate), m(Matrix::Zero(rows, cols)), v(Matrix::Zero(rows, cols)) {}
    void step(Matrix& p, const Matrix& g) {
        ++t;
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g.cwiseProduct(g);
        const double c1 = 1 - std::pow(b1, static_cast<double>(t));
        const double c2 = 1 - std::pow(b2, static_cast<double>(t));
        p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    }
};

inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace detail

// Trains "mf" (layers ignored) or "lightgcn" on `train`, early-stopping on
// validation Recall@eval_k. `extra_items` widens the item universe.
inline std::shared_ptr<EmbeddingRecommender> train_embedding_model(const std::string& strategy,
                                                                   const ImplicitFeedback& train,
                                                                   const ImplicitFeedback& validation,
                                                                   TrainConfig cfg,
                                                                   const std::vector<std::string>& extra_items = {}) {
    cfg.validate();
    if (strategy != "mf" && strategy != "lightgcn") throw ArgumentError("unknown learned strategy: " + strategy);
    const bool gcn = strategy == "lightgcn";

    std::vector<std::string> users, items;
    {
        std::set<std::string> iset(extra_items.begin(), extra_items.end());
        for (const auto& [u, its] : train) {
            if (its.empty()) throw ArgumentError("user " + u + " has no training positives");
            users.push_back(u);
            iset.insert(its.begin(), its.end());
        }
        items.assign(iset.begin(), iset.end());
    }
    if (users.empty() || items.empty()) throw ArgumentError("training set is empty");
    const std::size_t nu = users.size(), ni = items.size();
    std::unordered_map<std::string, std::size_t> item_index;
    for (std::size_t i = 0; i < ni; ++i) item_index[items[i]] = i;

    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    std::vector<std::vector<std::size_t>> user_pos(nu);
    for (std::size_t u = 0; u < nu; ++u) {
        for (const auto& it : train.at(users[u])) {
            pairs.emplace_back(u, item_index.at(it));
            user_pos[u].push_back(item_index.at(it));
        }
        std::sort(user_pos[u].begin(), user_pos[u].end());
    }
    const NormalizedAdjacency adj = gcn ? NormalizedAdjacency(nu, ni, pairs) : NormalizedAdjacency();
    const int layers = gcn ? cfg.layers : 0;

    std::mt19937_64 rng(mix_seed(cfg.seed, "train:" + strategy));
    const auto n = static_cast<Eigen::Index>(nu + ni);
    Matrix e0(n, cfg.dim);
    {
        std::normal_distribution<double> init(0.0, cfg.init_std);
        for (Eigen::Index r = 0; r < e0.rows(); ++r)
            for (Eigen::Index c = 0; c < e0.cols(); ++c) e0(r, c) = init(rng);
    }
    auto readout = [&](const Matrix& base) { return lightgcn_readout(adj, base, layers, cfg.mean_of_layers); };
    auto make_model = [&](const Matrix& fin) {
        return std::make_shared<EmbeddingRecommender>(strategy, users, items, Matrix(fin.topRows(static_cast<Eigen::Index>(nu))),
                                                      Matrix(fin.bottomRows(static_cast<Eigen::Index>(ni))));
    };

    ImplicitFeedback val_users;
    for (const auto& [u, its] : validation)
        if (!its.empty() && train.count(u)) val_users[u] = its;

    auto validation_recall = [&](const Matrix& fin) {
        if (val_users.empty()) return 0.0;
        auto model = make_model(fin);
        return evaluate_offline(*model, val_users, train, static_cast<std::size_t>(cfg.eval_k)).recall;
    };

    detail::Adam adam(cfg.lr, n, cfg.dim);
    std::vector<EpochLog> log;
    Matrix best = readout(e0);
    double best_recall = -1.0;
    int best_epoch = 0;
    std::uniform_int_distribution<std::size_t> pick_item(0, ni - 1);

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::shuffle(pairs.begin(), pairs.end(), rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < pairs.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(pairs.size(), start + static_cast<std::size_t>(cfg.batch_size));
            const double bsz = static_cast<double>(end - start);
            const Matrix fin = readout(e0);
            Matrix grad = Matrix::Zero(n, cfg.dim);
            Matrix reg_grad = Matrix::Zero(n, cfg.dim);
            for (std::size_t b = start; b < end; ++b) {
                const auto [u, i] = pairs[b];
                if (user_pos[u].size() >= ni) continue;
                std::size_t j;
                do {
                    j = pick_item(rng);
                } while (std::binary_search(user_pos[u].begin(), user_pos[u].end(), j));
                const auto ru = static_cast<Eigen::Index>(u);
                const auto ri = static_cast<Eigen::Index>(nu + i);
                const auto rj = static_cast<Eigen::Index>(nu + j);
                const double x = fin.row(ru).dot(fin.row(ri) - fin.row(rj));
                epoch_loss += detail::softplus(-x);
                const double g = -1.0 / (1.0 + std::exp(x)) / bsz;
                grad.row(ru) += g * (fin.row(ri) - fin.row(rj));
                grad.row(ri) += g * fin.row(ru);
                grad.row(rj) -= g * fin.row(ru);
                const double rs = cfg.reg / bsz;
                epoch_loss += 0.5 * cfg.reg *
                              (e0.row(ru).squaredNorm() + e0.row(ri).squaredNorm() + e0.row(rj).squaredNorm());
                reg_grad.row(ru) += rs * e0.row(ru);
                reg_grad.row(ri) += rs * e0.row(ri);
                reg_grad.row(rj) += rs * e0.row(rj);
            }
            adam.step(e0, Matrix(readout(grad) + reg_grad));
        }
        epoch_loss /= static_cast<double>(pairs.size());
        if (!std::isfinite(epoch_loss) || !e0.allFinite())
            throw TrainingError(strategy + " diverged at epoch " + std::to_string(epoch) + " (loss " +
                                std::to_string(epoch_loss) + ", lr " + std::to_string(cfg.lr) + ")");
        const Matrix fin = readout(e0);
        const double recall = validation_recall(fin);
        log.push_back({epoch, epoch_loss, recall});
        if (recall > best_recall) {
            best_recall = recall;
            best_epoch = epoch;
            best = fin;
        } else if (epoch - best_epoch >= cfg.patience) {
            break;
        }
    }
    auto model = make_model(best);
    model->training_log = std::move(log);
    model->best_epoch = best_epoch;
    model->best_val_recall = std::max(best_recall, 0.0);
    model->config = cfg;
    return model;
}

inline std::shared_ptr<EmbeddingRecommender> fit_mf(const ImplicitFeedback& train, const ImplicitFeedback& validation,
                                                    const TrainConfig& cfg = {},
                                                    const std::vector<std::string>& extra_items = {}) {
    return train_embedding_model("mf", train, validation, cfg, extra_items);
}

inline std::shared_ptr<EmbeddingRecommender> fit_lightgcn(const ImplicitFeedback& train,
                                                          const ImplicitFeedback& validation,
                                                          const TrainConfig& cfg = {},
                                                          const std::vector<std::string>& extra_items = {}) {
    return train_embedding_model("lightgcn", train, validation, cfg, extra_items);
}

// ---------------------------------------------------------------------------
// Feedback augmentation
// ---------------------------------------------------------------------------

enum class FeedbackMode { viewed, unviewed };

inline ImplicitFeedback feedback_from_records(const std::vector<SimRecord>& records, FeedbackMode mode) {
    ImplicitFeedback out;
    for (const auto& r : records) {
        if (!r.valid) continue;
        if (mode == FeedbackMode::viewed) {
            for (const auto& [item, rating] : r.viewed()) out[r.agent].insert(item);
        } else {
            for (const auto& item : r.unviewed_exposed()) out[r.agent].insert(item);
        }
    }
    return out;
}

inline ImplicitFeedback with_feedback(const ImplicitFeedback& base, const std::vector<SimRecord>& records,
                                      FeedbackMode mode) {
    return merge_feedback(base, feedback_from_records(records, mode));
}

}  // namespace agentrec
