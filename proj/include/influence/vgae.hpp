#pragma once

// Variational graph auto-encoder over the popular-node subgraph.
//
// Each popular node i owns free parameters mu_raw_i, logvar_i in R^d.
//
//   m_i = relu(mu_raw_i)                       posterior mean (>= 0)
//   z_i = max(0, m_i + exp(logvar_i / 2) * eps_i)
//   p(u,a) = logistic(z_u . z_a)
//
//   loss = sum_pairs w * BCE(p(u,a), y)    y = 1, w = 1 for edges;
//                                          y = 0, w = mass/r for the r sampled non-edges per edge
//        + beta   * sum_i 0.5 * sum_k (sigma^2 + m^2 - 1 - logvar)
//        + lambda * sum_{k != l} G_kl^2,   G = Zhat^T Zhat, Zhat = column-normalized M
//
// Gradients are derived by hand; the relu and clamp kinks take derivative 1
// at exactly zero for relu (so a warm-started zero can revive) and 0 for the
// clamp.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <vector>

#include "influence/embedding.hpp"
#include "influence/error.hpp"
#include "influence/graph.hpp"

namespace influence {

struct EmbedConfig {
    std::size_t latent_dim = 2;
    std::size_t epochs = 300;
    double learning_rate = 0.05;
    double kl_weight = 0.1;
    double ortho_weight = 1.0;
    std::size_t negative_ratio = 5;
    double negative_mass = 0.5;  // total BCE weight of the negatives drawn per positive edge
    std::size_t popular_user_count = 2000;
    std::size_t popular_assertion_count = 2000;
    std::uint64_t seed = 42;

    void validate() const {
        if (latent_dim < 2 || latent_dim > 4) throw ConfigError("embedding.latent_dim", "must lie in [2,4]");
        if (!(learning_rate > 0) || !std::isfinite(learning_rate))
            throw ConfigError("embedding.learning_rate", "must be positive and finite");
        if (!(kl_weight >= 0) || !std::isfinite(kl_weight))
            throw ConfigError("embedding.kl_weight", "must be nonnegative and finite");
        if (!(ortho_weight >= 0) || !std::isfinite(ortho_weight))
            throw ConfigError("embedding.ortho_weight", "must be nonnegative and finite");
        if (negative_ratio < 1) throw ConfigError("embedding.negative_ratio", "must be >= 1");
        if (!(negative_mass > 0) || !std::isfinite(negative_mass))
            throw ConfigError("embedding.negative_mass", "must be positive and finite");
        if (popular_user_count < 1) throw ConfigError("embedding.popular_user_count", "must be >= 1");
        if (popular_assertion_count < 1) throw ConfigError("embedding.popular_assertion_count", "must be >= 1");
    }
};

// Popular-node subgraph in dense local indexing: users first, then assertions.
struct TrainingProblem {
    std::vector<NodeId> nodes;
    std::size_t n_users = 0;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> positives;  // distinct (user, assertion) local pairs
    std::set<std::pair<std::uint32_t, std::uint32_t>> positive_set;

    std::size_t size() const { return nodes.size(); }
    std::size_t n_assertions() const { return nodes.size() - n_users; }

    static TrainingProblem from_graph(const BipartiteGraph& g, const PopularSet& popular) {
        TrainingProblem p;
        std::vector<std::int64_t> ulocal(g.users().size(), -1), alocal(g.assertions().size(), -1);
        for (auto u : popular.users) {
            ulocal[u] = static_cast<std::int64_t>(p.nodes.size());
            p.nodes.push_back(g.user_id(u));
        }
        p.n_users = p.nodes.size();
        for (auto a : popular.assertions) {
            alocal[a] = static_cast<std::int64_t>(p.nodes.size());
            p.nodes.push_back(g.assertion_id(a));
        }
        for (auto u : popular.users)
            for (auto a : g.user_neighbors(u))
                if (alocal[a] >= 0) {
                    std::pair<std::uint32_t, std::uint32_t> e{static_cast<std::uint32_t>(ulocal[u]),
                                                              static_cast<std::uint32_t>(alocal[a])};
                    p.positives.push_back(e);
                    p.positive_set.insert(e);
                }
        return p;
    }
};

struct LabeledPair {
    std::uint32_t user = 0;
    std::uint32_t assertion = 0;
    double label = 0.0;
    double weight = 1.0;
};

struct VgaeParameters {
    std::size_t n = 0, d = 0;
    std::vector<double> mu_raw;  // n x d, row-major
    std::vector<double> logvar;  // n x d

    VgaeParameters() = default;
    VgaeParameters(std::size_t n_, std::size_t d_) : n(n_), d(d_), mu_raw(n_ * d_, 0.0), logvar(n_ * d_, 0.0) {}
};

struct LossTerms {
    double recon = 0, kl = 0, ortho = 0, total = 0;
};

inline double logistic(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// Decoder probability, kept strictly inside (0,1).
inline double edge_probability(std::span<const double> zu, std::span<const double> za) {
    double x = 0;
    for (std::size_t k = 0; k < zu.size(); ++k) x += zu[k] * za[k];
    return std::clamp(logistic(x), std::nextafter(0.0, 1.0), std::nextafter(1.0, 0.0));
}

// Orthogonality penalty sum_{k != l} G_kl^2 of the column-normalized means,
// and its gradient with respect to the means when grad is non-empty.
inline double ortho_penalty(std::span<const double> means, std::size_t n, std::size_t d, std::span<double> grad) {
    constexpr double kEps2 = 1e-24;
    std::vector<double> norm(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < d; ++k) norm[k] += means[i * d + k] * means[i * d + k];
    for (auto& s : norm) s = std::sqrt(s + kEps2);
    std::vector<double> gram(d * d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < d; ++k)
            for (std::size_t l = k + 1; l < d; ++l)
                gram[k * d + l] += means[i * d + k] * means[i * d + l];
    double penalty = 0;
    for (std::size_t k = 0; k < d; ++k)
        for (std::size_t l = k + 1; l < d; ++l) {
            gram[k * d + l] /= norm[k] * norm[l];
            gram[l * d + k] = gram[k * d + l];
            penalty += 2.0 * gram[k * d + l] * gram[k * d + l];
        }
    if (!grad.empty()) {
        // dP/dc_k = (4 / s_k) sum_{l != k} G_kl (zhat_l - G_kl zhat_k)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < d; ++k) {
                double g = 0;
                const double zk = means[i * d + k] / norm[k];
                for (std::size_t l = 0; l < d; ++l) {
                    if (l == k) continue;
                    const double gkl = gram[k * d + l];
                    g += gkl * (means[i * d + l] / norm[l] - gkl * zk);
                }
                grad[i * d + k] = 4.0 * g / norm[k];
            }
    }
    return penalty;
}

// Full loss for given noise (n x d) and labeled pairs; accumulates the
// gradient into grad when non-null.
inline LossTerms vgae_loss(const VgaeParameters& p, std::span<const double> eps, std::span<const LabeledPair> pairs,
                           double kl_weight, double ortho_weight, VgaeParameters* grad) {
    const std::size_t n = p.n, d = p.d;
    std::vector<double> m(n * d), sigma(n * d), z(n * d);
    for (std::size_t i = 0; i < n * d; ++i) {
        m[i] = std::max(0.0, p.mu_raw[i]);
        sigma[i] = std::exp(0.5 * p.logvar[i]);
        z[i] = std::max(0.0, m[i] + sigma[i] * eps[i]);
    }
    LossTerms t;
    std::vector<double> dz(grad ? n * d : 0, 0.0);
    for (const auto& pr : pairs) {
        const double* zu = &z[pr.user * d];
        const double* za = &z[pr.assertion * d];
        double x = 0;
        for (std::size_t k = 0; k < d; ++k) x += zu[k] * za[k];
        t.recon += pr.weight * (softplus(x) - pr.label * x);
        if (grad) {
            const double g = pr.weight * (logistic(x) - pr.label);
            for (std::size_t k = 0; k < d; ++k) {
                dz[pr.user * d + k] += g * za[k];
                dz[pr.assertion * d + k] += g * zu[k];
            }
        }
    }
    for (std::size_t i = 0; i < n * d; ++i)
        t.kl += 0.5 * (sigma[i] * sigma[i] + m[i] * m[i] - 1.0 - p.logvar[i]);

    std::vector<double> dortho(grad ? n * d : 0, 0.0);
    t.ortho = ortho_penalty(m, n, d, dortho);
    t.total = t.recon + kl_weight * t.kl + ortho_weight * t.ortho;

    if (grad) {
        grad->n = n;
        grad->d = d;
        grad->mu_raw.assign(n * d, 0.0);
        grad->logvar.assign(n * d, 0.0);
        for (std::size_t i = 0; i < n * d; ++i) {
            const double through_clamp = (m[i] + sigma[i] * eps[i]) > 0.0 ? dz[i] : 0.0;
            const double relu_grad = p.mu_raw[i] >= 0.0 ? 1.0 : 0.0;
            grad->mu_raw[i] = relu_grad * (through_clamp + kl_weight * m[i] + ortho_weight * dortho[i]);
            grad->logvar[i] = through_clamp * 0.5 * sigma[i] * eps[i] + kl_weight * 0.5 * (sigma[i] * sigma[i] - 1.0);
        }
    }
    return t;
}

namespace detail {

// ratio corrupted copies of every positive edge: alternately the assertion
// or the user is replaced by the matching endpoint of a uniformly drawn
// positive edge, so each node's negative mass follows its degree. Each
// negative carries weight mass / ratio.
inline void sample_negatives(const TrainingProblem& prob, std::size_t ratio, double mass, std::mt19937_64& rng,
                             std::vector<LabeledPair>& out) {
    const std::size_t E = prob.positives.size();
    if (E == 0 || prob.positive_set.size() >= prob.n_users * prob.n_assertions()) return;
    std::uniform_int_distribution<std::size_t> pick(0, E - 1);
    const double w = mass / static_cast<double>(ratio);
    for (const auto& [u, a] : prob.positives) {
        for (std::size_t k = 0; k < ratio; ++k) {
            const bool corrupt_assertion = (k % 2) == 0;
            for (int attempt = 0; attempt < 16; ++attempt) {
                const auto& other = prob.positives[pick(rng)];
                const std::pair<std::uint32_t, std::uint32_t> cand =
                    corrupt_assertion ? std::pair{u, other.second} : std::pair{other.first, a};
                if (!prob.positive_set.contains(cand)) {
                    out.push_back({cand.first, cand.second, 0.0, w});
                    break;
                }
            }
        }
    }
}

inline void check_finite(const LossTerms& t, std::size_t epoch) {
    if (std::isfinite(t.total)) return;
    std::ostringstream os;
    os << "non-finite loss at epoch " << epoch << " (recon=" << t.recon << ", kl=" << t.kl << ", ortho=" << t.ortho
       << ")";
    throw TrainingError(os.str());
}

}  // namespace detail

struct TrainResult {
    EmbeddingTable table;  // popular nodes, Trained
    TrainReport report;
    VgaeParameters parameters;
};

// Trains on the subgraph induced by the popular nodes. warm_start seeds
// mu_raw for nodes it contains; the rest start from small positive random
// values. Reported initial/final losses are evaluated at the posterior
// means (eps = 0) on a fixed negative sample.
inline TrainResult train_window_embedding(const BipartiteGraph& g, const PopularSet& popular, const EmbedConfig& cfg,
                                          const EmbeddingTable* warm_start = nullptr) {
    cfg.validate();
    const TrainingProblem prob = TrainingProblem::from_graph(g, popular);
    if (prob.positives.empty()) throw TrainingError("popular subgraph has no edges");
    const std::size_t n = prob.size(), d = cfg.latent_dim;

    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> init(0.1, 0.6);
    VgaeParameters params(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        const std::vector<double>* w = warm_start ? warm_start->vector_of(prob.nodes[i]) : nullptr;
        if (w && w->size() != d) throw ConfigError("warm_start", "dimension mismatch");
        for (std::size_t k = 0; k < d; ++k) {
            const double r = init(rng);
            params.mu_raw[i * d + k] = w ? (*w)[k] : r;
            params.logvar[i * d + k] = -4.0;
        }
    }

    std::vector<LabeledPair> eval_pairs;
    for (auto [u, a] : prob.positives) eval_pairs.push_back({u, a, 1.0});
    {
        std::mt19937_64 eval_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
        detail::sample_negatives(prob, cfg.negative_ratio, cfg.negative_mass, eval_rng, eval_pairs);
    }
    const std::vector<double> zero_eps(n * d, 0.0);
    auto evaluate = [&] { return vgae_loss(params, zero_eps, eval_pairs, cfg.kl_weight, cfg.ortho_weight, nullptr); };

    TrainReport report;
    report.epochs = cfg.epochs;
    report.nodes = n;
    report.positive_edges = prob.positives.size();
    const LossTerms initial = evaluate();
    detail::check_finite(initial, 0);
    report.initial_loss = initial.total;
    report.initial_recon = initial.recon;
    report.initial_kl = initial.kl;
    report.initial_ortho = initial.ortho;

    // Adam
    constexpr double b1 = 0.9, b2 = 0.999, adam_eps = 1e-8;
    std::vector<double> m1(2 * n * d, 0.0), m2(2 * n * d, 0.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> eps(n * d);
    std::vector<LabeledPair> pairs;
    VgaeParameters grad;
    double b1t = 1.0, b2t = 1.0;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        for (auto& e : eps) e = gauss(rng);
        pairs.clear();
        for (auto [u, a] : prob.positives) pairs.push_back({u, a, 1.0});
        detail::sample_negatives(prob, cfg.negative_ratio, cfg.negative_mass, rng, pairs);
        const LossTerms t = vgae_loss(params, eps, pairs, cfg.kl_weight, cfg.ortho_weight, &grad);
        detail::check_finite(t, epoch);
        report.trajectory.push_back(t.total);

        b1t *= b1;
        b2t *= b2;
        auto step = [&](std::vector<double>& theta, const std::vector<double>& gr, std::size_t offset) {
            for (std::size_t i = 0; i < theta.size(); ++i) {
                auto& mm = m1[offset + i];
                auto& vv = m2[offset + i];
                mm = b1 * mm + (1 - b1) * gr[i];
                vv = b2 * vv + (1 - b2) * gr[i] * gr[i];
                theta[i] -= cfg.learning_rate * (mm / (1 - b1t)) / (std::sqrt(vv / (1 - b2t)) + adam_eps);
            }
        };
        step(params.mu_raw, grad.mu_raw, 0);
        step(params.logvar, grad.logvar, n * d);
        // projection onto mu_raw >= 0: relu is then the identity on the
        // iterate, and a coordinate sitting at 0 still sees its gradient
        for (auto& mu : params.mu_raw) mu = std::max(0.0, mu);
        // keep the variance in a sane band; exp() overflow otherwise ends training
        for (auto& lv : params.logvar) lv = std::clamp(lv, -20.0, 10.0);
    }

    const LossTerms final_terms = evaluate();
    detail::check_finite(final_terms, cfg.epochs);
    report.final_loss = final_terms.total;
    report.final_recon = final_terms.recon;
    report.final_kl = final_terms.kl;
    report.final_ortho = final_terms.ortho;

    EmbeddingTable table(d);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> mean(d);
        for (std::size_t k = 0; k < d; ++k) mean[k] = std::max(0.0, params.mu_raw[i * d + k]);
        table.set(prob.nodes[i], std::move(mean), Provenance::Trained);
    }
    return {std::move(table), std::move(report), std::move(params)};
}

inline TrainResult train_window_embedding(const BipartiteGraph& g, const EmbedConfig& cfg,
                                          const EmbeddingTable* warm_start = nullptr) {
    return train_window_embedding(g, select_popular(g, cfg.popular_user_count, cfg.popular_assertion_count), cfg,
                                  warm_start);
}

// Normalized off-diagonal Gram entries of a table's trained means.
inline double max_offdiagonal_gram(const EmbeddingTable& t) {
    std::vector<double> means;
    std::size_t n = 0;
    for (const auto& [id, e] : t.entries())
        if (e.provenance == Provenance::Trained) {
            means.insert(means.end(), e.coords.begin(), e.coords.end());
            ++n;
        }
    const std::size_t d = t.dim();
    double worst = 0;
    for (std::size_t k = 0; k < d; ++k)
        for (std::size_t l = k + 1; l < d; ++l) {
            double dot = 0, nk = 0, nl = 0;
            for (std::size_t i = 0; i < n; ++i) {
                dot += means[i * d + k] * means[i * d + l];
                nk += means[i * d + k] * means[i * d + k];
                nl += means[i * d + l] * means[i * d + l];
            }
            if (nk > 0 && nl > 0) worst = std::max(worst, dot / std::sqrt(nk * nl));
        }
    return worst;
}

// Per window: slice, select popular nodes, train (warm-started from the
// previous aligned table), propagate, align to the previous non-empty window.
// Windows without edges yield an empty, all-Missing table.
inline EmbeddingSeries build_embedding_series(const BipartiteGraph& g, std::span<const TimeWindow> windows,
                                              const EmbedConfig& cfg) {
    cfg.validate();
    for (std::size_t i = 1; i < windows.size(); ++i)
        if (!(windows[i - 1].start < windows[i].start))
            throw ConfigError("windows", "must be strictly increasing by start date");
    EmbeddingSeries series;
    series.dim = cfg.latent_dim;
    series.windows.reserve(windows.size());
    const EmbeddingTable* prev = nullptr;
    for (const auto& w : windows) {
        WindowEmbedding out{w, EmbeddingTable(cfg.latent_dim), std::nullopt, {}, false};
        for (std::size_t k = 0; k < cfg.latent_dim; ++k) out.permutation.push_back(k);
        const BipartiteGraph slice = window_slice(g, w);
        if (!slice.edges().empty()) {
            try {
                EmbedConfig wcfg = cfg;
                wcfg.seed = cfg.seed + w.index;
                TrainResult trained = train_window_embedding(slice, wcfg, prev);
                EmbeddingTable full = propagate_embeddings(trained.table, slice);
                if (prev) {
                    AlignResult aligned = align_axes(*prev, full);
                    out.table = std::move(aligned.table);
                    out.permutation = std::move(aligned.permutation);
                    out.align_warning = aligned.no_shared_nodes;
                } else {
                    out.table = std::move(full);
                }
                out.report = std::move(trained.report);
            } catch (const TrainingError& e) {
                throw TrainingError("window " + std::to_string(w.index) + ": " + e.what());
            }
        }
        series.windows.push_back(std::move(out));
        if (series.windows.back().report) prev = &series.windows.back().table;
    }
    return series;
}

}  // namespace influence
