#pragma once

// Batch query policies over teacher failure scores: batched random, Top-b,
// diverse batches via prefiltering + weighted k-means (DBAL), and the
// epsilon-weighted hybrid query strategy with its epsilon schedules.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "batchal/error.hpp"
#include "batchal/random.hpp"

namespace batchal::strategies {

using Id = std::size_t;

struct Score {
    Id id;
    double p;  // teacher failure probability in [0, 1]
};

/// One score per unlabeled pool id.
using FailureScores = std::vector<Score>;

struct ConstantEps {
    double eps = 0.5;
};
/// eps_t = ln(1 + t) / ln(1 + T), reaching 1 at the final iteration.
struct LogGreedyEps {};
using EpsSchedule = std::variant<ConstantEps, LogGreedyEps>;

struct RandomBatch {};
struct TopB {};
struct Dbal {
    std::size_t beta = 10;
};
struct EpsHqs {
    EpsSchedule eps = LogGreedyEps{};
    double threshold = 0.5;
};
using StrategyKind = std::variant<RandomBatch, TopB, Dbal, EpsHqs>;

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

inline void validate(const StrategyKind& kind) {
    std::visit(overloaded{[](const RandomBatch&) {}, [](const TopB&) {},
                          [](const Dbal& d) {
                              if (d.beta < 1) throw ConfigError("dbal: beta must be >= 1");
                          },
                          [](const EpsHqs& e) {
                              if (!(e.threshold > 0.0 && e.threshold < 1.0))
                                  throw ConfigError("eps_hqs: threshold must lie in (0, 1)");
                              if (const auto* c = std::get_if<ConstantEps>(&e.eps))
                                  if (!(c->eps >= 0.0 && c->eps <= 1.0))
                                      throw ConfigError("eps_hqs: eps must lie in [0, 1]");
                          }},
               kind);
}

inline std::string format_number(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

/// Short stable name used in result files, e.g. "dbal10" or "eps_hqs_0.25".
inline std::string label(const StrategyKind& kind) {
    return std::visit(
        overloaded{[](const RandomBatch&) { return std::string("random"); },
                   [](const TopB&) { return std::string("top_b"); },
                   [](const Dbal& d) { return "dbal" + std::to_string(d.beta); },
                   [](const EpsHqs& e) {
                       std::string s = "eps_hqs_";
                       if (const auto* c = std::get_if<ConstantEps>(&e.eps))
                           s += format_number(c->eps);
                       else
                           s += "greedy";
                       if (e.threshold != 0.5) s += "_th" + format_number(e.threshold);
                       return s;
                   }},
        kind);
}

inline void check_budget(std::size_t b, std::size_t available, const char* who) {
    if (b > available)
        throw BudgetError(std::string(who) + ": batch size " + std::to_string(b) + " exceeds " +
                          std::to_string(available) + " unlabeled candidates");
}

// ---------------------------------------------------------------------------

/// Uniform sample of b distinct ids without replacement.
inline std::vector<Id> select_random(std::span<const Id> unlabeled, std::size_t b, Rng& rng) {
    check_budget(b, unlabeled.size(), "select_random");
    return sample_without_replacement(std::vector<Id>(unlabeled.begin(), unlabeled.end()), b, rng);
}

/// Scores ordered by decreasing p, ties by increasing id.
inline FailureScores ranked(FailureScores scores) {
    std::sort(scores.begin(), scores.end(), [](const Score& l, const Score& r) {
        return l.p != r.p ? l.p > r.p : l.id < r.id;
    });
    return scores;
}

/// The b ids with the largest failure probability (maximizes the batch sum).
inline std::vector<Id> select_top_b(const FailureScores& scores, std::size_t b) {
    check_budget(b, scores.size(), "select_top_b");
    FailureScores r = ranked(scores);
    std::vector<Id> ids;
    ids.reserve(b);
    for (std::size_t i = 0; i < b; ++i) ids.push_back(r[i].id);
    return ids;
}

// ---------------------------------------------------------------------------
// Weighted k-means

struct KMeansResult {
    std::vector<std::vector<double>> centers;
    std::vector<std::size_t> assignment;
    double objective = 0.0;
    /// Objective after seeding, then after every center update.
    std::vector<double> history;
    std::size_t iterations = 0;
};

namespace detail {

inline double sq_dist(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

inline std::size_t nearest(std::span<const double> x, const std::vector<std::vector<double>>& centers) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centers.size(); ++c) {
        const double d = sq_dist(x, centers[c]);
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

inline double objective(const std::vector<std::vector<double>>& points, std::span<const double> w,
                        const std::vector<std::vector<double>>& centers, const std::vector<std::size_t>& assign) {
    double j = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) j += w[i] * sq_dist(points[i], centers[assign[i]]);
    return j;
}

// Index drawn with probability proportional to mass[i]; mass must have a positive sum.
inline std::size_t draw_proportional(const std::vector<double>& mass, Rng& rng) {
    const double total = std::accumulate(mass.begin(), mass.end(), 0.0);
    const double u = uniform01(rng) * total;
    double acc = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < mass.size(); ++i) {
        if (mass[i] <= 0.0) continue;
        acc += mass[i];
        last_positive = i;
        if (u < acc) return i;
    }
    return last_positive;
}

// Weighted k-means++: first center with probability proportional to weight,
// later ones proportional to weight * squared distance to the chosen set.
inline std::vector<std::vector<double>> seed_centers(const std::vector<std::vector<double>>& points,
                                                     std::span<const double> w, std::size_t k, Rng& rng) {
    const std::size_t n = points.size();
    std::vector<char> chosen(n, 0);
    std::vector<std::vector<double>> centers;
    std::size_t first = draw_proportional(std::vector<double>(w.begin(), w.end()), rng);
    centers.push_back(points[first]);
    chosen[first] = 1;
    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) d2[i] = sq_dist(points[i], centers[0]);
    while (centers.size() < k) {
        std::vector<double> mass(n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            if (!chosen[i]) mass[i] = w[i] * d2[i];
        std::size_t next;
        if (std::accumulate(mass.begin(), mass.end(), 0.0) > 0.0) {
            next = draw_proportional(mass, rng);
        } else {
            // no weighted mass left: farthest unchosen point, smallest index on ties
            next = n;
            for (std::size_t i = 0; i < n; ++i)
                if (!chosen[i] && (next == n || d2[i] > d2[next])) next = i;
        }
        chosen[next] = 1;
        centers.push_back(points[next]);
        for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], sq_dist(points[i], centers.back()));
    }
    return centers;
}

// One pass of Hartigan single-point moves: relocate a point when the drop in
// its own cluster's cost exceeds the rise in the target's, with both centers
// updated to the exact new weighted means. Lloyd fixed points that are not
// globally optimal (common for tiny n) are escaped this way. Returns whether
// anything moved.
inline bool hartigan_sweep(const std::vector<std::vector<double>>& points, std::span<const double> w,
                           std::vector<std::vector<double>>& centers, std::vector<std::size_t>& assign) {
    const std::size_t n = points.size(), k = centers.size();
    std::vector<double> mass(k, 0.0);
    for (std::size_t i = 0; i < n; ++i) mass[assign[i]] += w[i];
    bool moved = false;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t a = assign[i];
        if (!(w[i] > 0.0) || !(mass[a] - w[i] > 0.0)) continue;
        const double gain = w[i] * mass[a] / (mass[a] - w[i]) * sq_dist(points[i], centers[a]);
        std::size_t to = k;
        double best = gain * (1.0 - 1e-12);
        for (std::size_t c = 0; c < k; ++c) {
            if (c == a || !(mass[c] > 0.0)) continue;
            const double cost = w[i] * mass[c] / (mass[c] + w[i]) * sq_dist(points[i], centers[c]);
            if (cost < best) {
                best = cost;
                to = c;
            }
        }
        if (to == k) continue;
        for (std::size_t d = 0; d < points[i].size(); ++d) {
            centers[a][d] = (mass[a] * centers[a][d] - w[i] * points[i][d]) / (mass[a] - w[i]);
            centers[to][d] = (mass[to] * centers[to][d] + w[i] * points[i][d]) / (mass[to] + w[i]);
        }
        mass[a] -= w[i];
        mass[to] += w[i];
        assign[i] = to;
        moved = true;
    }
    return moved;
}

inline KMeansResult lloyd(const std::vector<std::vector<double>>& points, std::span<const double> w, std::size_t k,
                          std::size_t max_iters, Rng& rng) {
    const std::size_t n = points.size();
    const std::size_t dim = points.front().size();
    KMeansResult res;
    res.centers = seed_centers(points, w, k, rng);
    res.assignment.resize(n);
    for (std::size_t i = 0; i < n; ++i) res.assignment[i] = nearest(points[i], res.centers);
    res.history.push_back(objective(points, w, res.centers, res.assignment));

    for (std::size_t it = 0; it < max_iters; ++it) {
        ++res.iterations;
        // Clusters with no weight take over the point with the largest weighted cost.
        std::vector<double> mass(k, 0.0);
        for (std::size_t i = 0; i < n; ++i) mass[res.assignment[i]] += w[i];
        for (std::size_t c = 0; c < k; ++c) {
            if (mass[c] > 0.0) continue;
            std::size_t far = n;
            double far_cost = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double cost = w[i] * sq_dist(points[i], res.centers[res.assignment[i]]);
                if (cost > far_cost) {
                    far_cost = cost;
                    far = i;
                }
            }
            if (far == n) continue;
            mass[res.assignment[far]] -= w[far];
            mass[c] += w[far];
            res.assignment[far] = c;
            res.centers[c] = points[far];
        }
        std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t d = 0; d < dim; ++d) sums[res.assignment[i]][d] += w[i] * points[i][d];
        for (std::size_t c = 0; c < k; ++c)
            if (mass[c] > 0.0)
                for (std::size_t d = 0; d < dim; ++d) res.centers[c][d] = sums[c][d] / mass[c];
        res.history.push_back(objective(points, w, res.centers, res.assignment));

        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t c = nearest(points[i], res.centers);
            // keep the current cluster on exact ties so stable states terminate
            if (c != res.assignment[i] &&
                sq_dist(points[i], res.centers[c]) < sq_dist(points[i], res.centers[res.assignment[i]])) {
                res.assignment[i] = c;
                changed = true;
            }
        }
        if (!changed && !hartigan_sweep(points, w, res.centers, res.assignment)) break;
    }
    res.objective = objective(points, w, res.centers, res.assignment);
    if (res.objective != res.history.back()) res.history.push_back(res.objective);
    return res;
}

}  // namespace detail

/// Lloyd iterations on sum_i w_i ||x_i - mu_{z_i}||^2 with weighted k-means++
/// seeding; each Lloyd fixed point is followed by a Hartigan sweep. With
/// restarts > 1 the lowest-objective run is returned.
inline KMeansResult weighted_kmeans(const std::vector<std::vector<double>>& points, std::span<const double> weights,
                                    std::size_t k, std::size_t max_iters, Rng& rng, std::size_t restarts = 1) {
    if (points.empty()) throw ConfigError("weighted_kmeans: no points");
    if (weights.size() != points.size()) throw ShapeError("weighted_kmeans: one weight per point required");
    if (k == 0 || k > points.size())
        throw ConfigError("weighted_kmeans: k = " + std::to_string(k) + " must lie in [1, " +
                          std::to_string(points.size()) + "]");
    const std::size_t dim = points.front().size();
    for (const auto& p : points)
        if (p.size() != dim) throw ShapeError("weighted_kmeans: ragged points");
    bool any_positive = false;
    for (double w : weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("weighted_kmeans: weights must be finite and >= 0");
        any_positive = any_positive || w > 0.0;
    }
    if (!any_positive) throw ConfigError("weighted_kmeans: at least one weight must be positive");

    KMeansResult best;
    for (std::size_t r = 0; r < std::max<std::size_t>(restarts, 1); ++r) {
        KMeansResult run = detail::lloyd(points, weights, k, max_iters, rng);
        if (r == 0 || run.objective < best.objective) best = std::move(run);
    }
    return best;
}

// ---------------------------------------------------------------------------

/// Prefilter the beta*b highest scores, cluster them into b groups with
/// score-weighted k-means, and return the member nearest each center.
/// `normalized_pool` holds [0,1]-scaled coordinates indexed by pool id.
inline std::vector<Id> select_dbal(const std::vector<std::vector<double>>& normalized_pool,
                                   const FailureScores& scores, std::size_t b, std::size_t beta, Rng& rng,
                                   std::size_t kmeans_restarts = 3, std::size_t kmeans_iters = 100) {
    check_budget(b, scores.size(), "select_dbal");
    if (beta < 1) throw ConfigError("select_dbal: beta must be >= 1");
    if (b == 0) return {};
    const FailureScores order = ranked(scores);
    const std::size_t m = std::min(beta * b, order.size());

    std::vector<std::vector<double>> pts;
    std::vector<double> w;
    pts.reserve(m);
    w.reserve(m);
    for (std::size_t i = 0; i < m; ++i) {
        if (order[i].id >= normalized_pool.size()) throw ShapeError("select_dbal: score id outside the pool");
        pts.push_back(normalized_pool[order[i].id]);
        w.push_back(order[i].p);
    }
    if (std::all_of(w.begin(), w.end(), [](double v) { return v <= 0.0; })) std::fill(w.begin(), w.end(), 1.0);

    const KMeansResult km = weighted_kmeans(pts, w, b, kmeans_iters, rng, kmeans_restarts);

    std::vector<char> taken(m, 0);
    std::vector<Id> out;
    out.reserve(b);
    std::size_t unfilled = 0;
    for (std::size_t c = 0; c < b; ++c) {
        std::size_t pick = m;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < m; ++i) {
            if (km.assignment[i] != c || taken[i]) continue;
            const double d = detail::sq_dist(pts[i], km.centers[c]);
            if (d < best || (d == best && pick != m && order[i].id < order[pick].id)) {
                best = d;
                pick = i;
            }
        }
        if (pick == m) {
            ++unfilled;
            continue;
        }
        taken[pick] = 1;
        out.push_back(order[pick].id);
    }
    // degenerate clusters: fall back to the best remaining prefiltered scores
    for (std::size_t i = 0; i < m && unfilled > 0; ++i) {
        if (taken[i]) continue;
        taken[i] = 1;
        out.push_back(order[i].id);
        --unfilled;
    }
    return out;
}

/// Exploration weight for iteration t of T (1-based).
inline double eps_schedule(const EpsSchedule& sched, std::size_t t, std::size_t T) {
    if (T == 0 || t < 1 || t > T) throw ConfigError("eps_schedule: need 1 <= t <= T");
    if (const auto* c = std::get_if<ConstantEps>(&sched)) return c->eps;
    return std::log1p(double(t)) / std::log1p(double(T));
}

/// Number of exploit picks floor(eps * b); the tiny slack absorbs products
/// like 0.3 * 10 landing a hair below the integer.
inline std::size_t exploit_quota(double eps, std::size_t b) {
    const double raw = std::floor(eps * double(b) + 1e-9);
    return std::min<std::size_t>(b, static_cast<std::size_t>(std::max(0.0, raw)));
}

struct HqsBatch {
    std::vector<Id> exploit;  // drawn from the high-failure set
    std::vector<Id> explore;  // drawn from everything else still unlabeled

    std::vector<Id> ids() const {
        std::vector<Id> all = exploit;
        all.insert(all.end(), explore.begin(), explore.end());
        return all;
    }
};

/// Epsilon-weighted hybrid: floor(eps*b) ids uniformly from {p >= threshold},
/// the rest uniformly from the remaining unlabeled ids.
inline HqsBatch select_eps_hqs_split(const FailureScores& scores, std::size_t b, double eps, double threshold,
                                     Rng& rng) {
    check_budget(b, scores.size(), "select_eps_hqs");
    if (!(eps >= 0.0 && eps <= 1.0)) throw ConfigError("select_eps_hqs: eps must lie in [0, 1]");
    std::vector<Id> all;
    std::vector<Id> failing;
    all.reserve(scores.size());
    for (const auto& s : scores) {
        all.push_back(s.id);
        if (s.p >= threshold) failing.push_back(s.id);
    }
    std::sort(all.begin(), all.end());
    std::sort(failing.begin(), failing.end());

    HqsBatch batch;
    const std::size_t n_f = std::min(exploit_quota(eps, b), failing.size());
    batch.exploit = sample_without_replacement(std::move(failing), n_f, rng);

    std::vector<Id> sorted_exploit = batch.exploit;
    std::sort(sorted_exploit.begin(), sorted_exploit.end());
    std::vector<Id> rest;
    rest.reserve(all.size() - n_f);
    std::set_difference(all.begin(), all.end(), sorted_exploit.begin(), sorted_exploit.end(),
                        std::back_inserter(rest));
    batch.explore = sample_without_replacement(std::move(rest), b - n_f, rng);
    return batch;
}

inline std::vector<Id> select_eps_hqs(const FailureScores& scores, std::size_t b, double eps, double threshold,
                                      Rng& rng) {
    return select_eps_hqs_split(scores, b, eps, threshold, rng).ids();
}

/// Applies `kind` at AL iteration t of T.
inline std::vector<Id> select_batch(const StrategyKind& kind, const std::vector<std::vector<double>>& normalized_pool,
                                    const FailureScores& scores, std::size_t b, std::size_t t, std::size_t T,
                                    Rng& rng) {
    return std::visit(overloaded{[&](const RandomBatch&) {
                                     std::vector<Id> ids;
                                     ids.reserve(scores.size());
                                     for (const auto& s : scores) ids.push_back(s.id);
                                     std::sort(ids.begin(), ids.end());
                                     return select_random(ids, b, rng);
                                 },
                                 [&](const TopB&) { return select_top_b(scores, b); },
                                 [&](const Dbal& d) { return select_dbal(normalized_pool, scores, b, d.beta, rng); },
                                 [&](const EpsHqs& e) {
                                     return select_eps_hqs(scores, b, eps_schedule(e.eps, t, T), e.threshold, rng);
                                 }},
                      kind);
}

/// Whether the policy consumes teacher scores (Random ignores them).
inline bool uses_teacher(const StrategyKind& kind) { return !std::holds_alternative<RandomBatch>(kind); }

}  // namespace batchal::strategies
