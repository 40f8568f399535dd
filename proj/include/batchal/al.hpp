#pragma once

// Pool bookkeeping, the fractional-error metric and failure labels, and the
// pool-based student/teacher active-learning loop.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "batchal/error.hpp"
#include "batchal/nn.hpp"
#include "batchal/oracles.hpp"
#include "batchal/random.hpp"
#include "batchal/strategies.hpp"

namespace batchal::al {

using oracles::DesignPoint;
using strategies::Id;

/// Below this magnitude a true label is treated as zero and the error is
/// measured relative to tau instead (oracle output units).
inline constexpr double kTauAbs = 1e-9;

/// Relative slack on the pass boundary so that e.g. 1.05 * y counts as a 5% error.
inline constexpr double kBoundarySlack = 1e-12;

inline double fractional_error(double y_pred, double y_true) {
    const double err = std::abs(y_true - y_pred);
    const double scale = std::abs(y_true);
    return scale > kTauAbs ? err / scale : err / kTauAbs;
}

/// Prediction within the acceptable fractional error (inclusive).
inline bool within_tolerance(double y_pred, double y_true, double aa) {
    return fractional_error(y_pred, y_true) <= aa * (1.0 + kBoundarySlack);
}

namespace detail {
inline void check_pairs(std::span<const double> preds, std::span<const double> truths) {
    if (preds.size() != truths.size()) throw ShapeError("predictions and truths differ in length");
    if (preds.empty()) throw DataError("no predictions to score");
}
}  // namespace detail

/// Fraction of predictions within aa fractional error of the truth. Computed
/// as 1 - misses/n so it equals 1 - mean(F) bit for bit.
inline double accuracy(std::span<const double> preds, std::span<const double> truths, double aa) {
    detail::check_pairs(preds, truths);
    std::size_t misses = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) misses += !within_tolerance(preds[i], truths[i], aa);
    return 1.0 - double(misses) / double(preds.size());
}

/// F = 1 where the student misses the aa tolerance, 0 otherwise.
inline std::vector<double> make_failure_labels(std::span<const double> preds, std::span<const double> truths,
                                               double aa) {
    detail::check_pairs(preds, truths);
    std::vector<double> f(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i) f[i] = within_tolerance(preds[i], truths[i], aa) ? 0.0 : 1.0;
    return f;
}

// ---------------------------------------------------------------------------

/// Candidate designs with stable ids (id == index) and a labeled flag.
class Pool {
public:
    Pool() = default;
    explicit Pool(std::vector<DesignPoint> points) : points_(std::move(points)), labeled_(points_.size(), 0) {}

    std::size_t size() const { return points_.size(); }
    const std::vector<DesignPoint>& points() const { return points_; }
    const DesignPoint& point(Id id) const { return points_.at(id); }
    bool is_labeled(Id id) const { return labeled_.at(id) != 0; }
    std::size_t labeled_count() const { return labeled_count_; }

    std::vector<Id> unlabeled_ids() const { return collect(false); }
    std::vector<Id> labeled_ids() const { return collect(true); }

    void mark_labeled(std::span<const Id> ids) {
        for (Id id : ids) {
            if (id >= points_.size()) throw DataError("Pool: unknown id " + std::to_string(id));
            if (labeled_[id]) throw DataError("Pool: id " + std::to_string(id) + " already labeled");
            labeled_[id] = 1;
            ++labeled_count_;
        }
    }

private:
    std::vector<Id> collect(bool labeled) const {
        std::vector<Id> ids;
        ids.reserve(labeled ? labeled_count_ : size() - labeled_count_);
        for (Id id = 0; id < points_.size(); ++id)
            if ((labeled_[id] != 0) == labeled) ids.push_back(id);
        return ids;
    }

    std::vector<DesignPoint> points_;
    std::vector<char> labeled_;
    std::size_t labeled_count_ = 0;
};

/// Memoized oracle labels for one run; each point is evaluated at most once.
class LabelCache {
public:
    LabelCache(const oracles::Oracle& oracle, const Pool& pool)
        : oracle_(&oracle), pool_(&pool), labels_(pool.size()) {}

    double operator()(Id id) {
        auto& slot = labels_.at(id);
        if (!slot) {
            slot = (*oracle_)(pool_->point(id));
            ++calls_;
        }
        return *slot;
    }

    std::vector<double> operator()(std::span<const Id> ids) {
        std::vector<double> out;
        out.reserve(ids.size());
        for (Id id : ids) out.push_back((*this)(id));
        return out;
    }

    std::size_t oracle_calls() const { return calls_; }

private:
    const oracles::Oracle* oracle_;
    const Pool* pool_;
    std::vector<std::optional<double>> labels_;
    std::size_t calls_ = 0;
};

struct LabeledSet {
    std::vector<Id> ids;
    std::vector<double> y;
};

struct FailureSet {
    std::vector<Id> ids;
    std::vector<double> failed;  // 0 or 1
};

// ---------------------------------------------------------------------------

struct ALConfig {
    std::size_t warmup_M = 100;
    std::size_t iterations_T = 25;
    std::size_t batch_b = 10;
    double aa = 0.05;
    std::uint64_t base_seed = 0;
    /// Continue each round from the previous weights instead of re-initializing.
    bool warm_start = true;
    /// Train the student on 80% of the labeled set and label failures on the
    /// held-out 20% for the teacher.
    bool inner_split = false;

    std::size_t budget() const { return warmup_M + iterations_T * batch_b; }

    void validate(std::size_t pool_size) const {
        if (warmup_M == 0) throw ConfigError("ALConfig: warmup_M must be >= 1");
        if (batch_b == 0 && iterations_T > 0) throw ConfigError("ALConfig: batch_b must be >= 1");
        if (!(aa > 0.0 && aa < 1.0)) throw ConfigError("ALConfig: aa must lie in (0, 1)");
        if (budget() >= pool_size)
            throw ConfigError("budget: warmup_M + T*b = " + std::to_string(budget()) +
                              " leaves no test points in a pool of " + std::to_string(pool_size));
        if (inner_split && warmup_M < 5) throw ConfigError("ALConfig: inner_split needs warmup_M >= 5");
    }
};

/// Student and teacher architectures with their training settings.
struct NetworkSetup {
    nn::MlpConfig student;
    nn::MlpConfig teacher;
    nn::TrainConfig student_train;
    nn::TrainConfig teacher_train;

    static NetworkSetup defaults(std::size_t input_dim) {
        return {nn::MlpConfig::student(input_dim), nn::MlpConfig::teacher(input_dim), {}, {}};
    }

    void validate(std::size_t input_dim) const {
        student.validate();
        teacher.validate();
        student_train.validate();
        teacher_train.validate();
        if (student.input_dim() != input_dim || teacher.input_dim() != input_dim)
            throw ConfigError("network input size does not match the design space dimension");
        if (student.output_dim() != 1 || teacher.output_dim() != 1)
            throw ConfigError("student and teacher must have a single output");
        if (student.output != nn::OutputActivation::Identity)
            throw ConfigError("student network must use an identity output");
        if (teacher.output != nn::OutputActivation::Sigmoid)
            throw ConfigError("teacher network must use a sigmoid output");
    }
};

/// A trained student together with the scalings it was trained under.
struct Surrogate {
    nn::MlpConfig config;
    nn::MlpParams params;
    oracles::DesignSpace space;
    double y_mean = 0.0;
    double y_std = 1.0;

    std::vector<double> predict(std::span<const DesignPoint> points) const {
        if (points.empty()) return {};
        nn::Tensor2 X(points.size(), space.size());
        for (std::size_t i = 0; i < points.size(); ++i) {
            const auto u = space.normalize(points[i]);
            std::copy(u.begin(), u.end(), X.data.begin() + std::ptrdiff_t(i * space.size()));
        }
        const nn::Tensor2 out = nn::forward(params, config, X);
        std::vector<double> y(out.data.size());
        for (std::size_t i = 0; i < y.size(); ++i) y[i] = out.data[i] * y_std + y_mean;
        return y;
    }
};

using Predictor = std::function<std::vector<double>(std::span<const DesignPoint>)>;

/// Accuracy of `student` over the pool points that are not labeled.
inline double evaluate_on_leftover(const Predictor& student, const Pool& pool, LabelCache& labels, double aa) {
    const std::vector<Id> test = pool.unlabeled_ids();
    if (test.empty()) throw EvaluationError("evaluate_on_leftover: no unlabeled points left to test on");
    std::vector<DesignPoint> xs;
    xs.reserve(test.size());
    for (Id id : test) xs.push_back(pool.point(id));
    const std::vector<double> preds = student(xs);
    if (preds.size() != test.size()) throw EvaluationError("evaluate_on_leftover: predictor returned wrong count");
    return accuracy(preds, labels(test), aa);
}

inline double evaluate_on_leftover(const Surrogate& student, const Pool& pool, LabelCache& labels, double aa) {
    return evaluate_on_leftover([&](std::span<const DesignPoint> xs) { return student.predict(xs); }, pool, labels,
                                aa);
}

// ---------------------------------------------------------------------------

struct IterationRecord {
    std::size_t iteration = 0;
    std::vector<Id> selected;  // warmup ids on iteration 0
    std::size_t n_labeled = 0;
    double accuracy = 0.0;
    double wall_ms = 0.0;
};

struct RunTrace {
    std::vector<Id> warmup_ids;
    std::vector<IterationRecord> rows;  // iteration 0 (warmup) through T
    Surrogate student;
    std::size_t oracle_calls = 0;
};

/// Id sets seen by the networks at one iteration, for leakage checks.
struct IterationView {
    std::size_t iteration;
    std::span<const Id> student_ids;
    std::span<const Id> teacher_ids;
    std::span<const Id> eval_ids;
};
using Observer = std::function<void(const IterationView&)>;

/// Seeds for one run: `shared` drives everything that should be identical
/// across strategies for the same repetition (warmup draw, network init,
/// minibatch order); `policy` drives the batch selection.
struct RunSeeds {
    std::uint64_t shared = 0;
    std::uint64_t policy = 0;

    static RunSeeds from(std::uint64_t seed) { return {derive_seed(seed, {1}), derive_seed(seed, {2})}; }
};

namespace detail {

inline nn::Tensor2 design_matrix(const std::vector<std::vector<double>>& normalized, std::span<const Id> ids) {
    const std::size_t d = normalized.empty() ? 0 : normalized.front().size();
    nn::Tensor2 X(ids.size(), d);
    for (std::size_t i = 0; i < ids.size(); ++i)
        std::copy(normalized[ids[i]].begin(), normalized[ids[i]].end(), X.data.begin() + std::ptrdiff_t(i * d));
    return X;
}

inline std::pair<double, double> mean_std(std::span<const double> v) {
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / double(v.size()));
    return {mean, sd > 0.0 && std::isfinite(sd) ? sd : 1.0};
}

}  // namespace detail

/// One pool-based active-learning run.
///
/// Iteration 0 labels warmup_M random points, trains the student and scores
/// it on the leftover pool. Each iteration t = 1..T then labels failures of
/// the current student, trains the teacher on them, scores the unlabeled
/// points, lets the policy pick b of them, labels those, retrains the student
/// on everything labeled so far and scores it on what is left. Row t therefore
/// reports a student trained on exactly M + t*b labels.
inline RunTrace al_run(const oracles::Oracle& oracle, const std::vector<DesignPoint>& pool_points,
                       const strategies::StrategyKind& strategy, const NetworkSetup& nets, const ALConfig& cfg,
                       RunSeeds seeds, const Observer& observer = {}) {
    using clock = std::chrono::steady_clock;
    const std::size_t dim = oracle.space.size();
    cfg.validate(pool_points.size());
    nets.validate(dim);
    strategies::validate(strategy);
    for (const auto& x : pool_points)
        if (!oracle.accepts(x)) throw ConfigError("al_run: pool contains a point outside the oracle's design space");

    Pool pool(pool_points);
    LabelCache labels(oracle, pool);
    std::vector<std::vector<double>> normalized;
    normalized.reserve(pool.size());
    for (const auto& x : pool.points()) normalized.push_back(oracle.space.normalize(x));

    Rng warmup_rng(derive_seed(seeds.shared, {0x3a}));
    Rng policy_rng(derive_seed(seeds.policy, {0x3b}));
    const std::uint64_t student_seed = derive_seed(seeds.shared, {0x51});
    const std::uint64_t teacher_seed = derive_seed(seeds.shared, {0x7e});

    RunTrace trace;
    trace.student.config = nets.student;
    trace.student.config.seed = student_seed;
    trace.student.space = oracle.space;
    trace.student.params = nn::init_mlp(trace.student.config);
    nn::MlpConfig teacher_cfg = nets.teacher;
    teacher_cfg.seed = teacher_seed;
    nn::MlpParams teacher = nn::init_mlp(teacher_cfg);

    LabeledSet S;
    auto add_labeled = [&](std::span<const Id> ids) {
        pool.mark_labeled(ids);
        for (Id id : ids) {
            S.ids.push_back(id);
            S.y.push_back(labels(id));
        }
    };

    // Student/teacher id split for this round.
    std::vector<Id> student_ids, teacher_ids;
    auto split_round = [&](std::size_t t) {
        if (!cfg.inner_split) {
            student_ids = S.ids;
            teacher_ids = S.ids;
            return;
        }
        std::vector<Id> order = S.ids;
        Rng split_rng(derive_seed(seeds.shared, {0x5b, t}));
        shuffle(std::span(order), split_rng);
        const std::size_t n_train = std::max<std::size_t>(1, (order.size() * 4) / 5);
        student_ids.assign(order.begin(), order.begin() + std::ptrdiff_t(n_train));
        teacher_ids.assign(order.begin() + std::ptrdiff_t(n_train), order.end());
    };

    auto train_student = [&](std::size_t t) {
        const auto [mean, sd] = detail::mean_std(S.y);
        trace.student.y_mean = mean;
        trace.student.y_std = sd;
        nn::Tensor2 Y(student_ids.size(), 1);
        for (std::size_t i = 0; i < student_ids.size(); ++i) Y.data[i] = (labels(student_ids[i]) - mean) / sd;
        if (!cfg.warm_start) trace.student.params = nn::init_mlp(trace.student.config);
        nn::TrainConfig tc = nets.student_train;
        tc.seed = derive_seed(seeds.shared, {0x5e, t});
        trace.student.params = nn::train(std::move(trace.student.params), trace.student.config,
                                         detail::design_matrix(normalized, student_ids), Y, nn::Loss::MAE, tc)
                                   .params;
    };

    auto finish_row = [&](std::size_t t, std::vector<Id> selected, clock::time_point started) {
        const double acc = evaluate_on_leftover(trace.student, pool, labels, cfg.aa);
        if (observer) {
            const std::vector<Id> eval_ids = pool.unlabeled_ids();
            observer(IterationView{t, student_ids, teacher_ids, eval_ids});
        }
        IterationRecord row;
        row.iteration = t;
        row.selected = std::move(selected);
        row.n_labeled = pool.labeled_count();
        row.accuracy = acc;
        row.wall_ms = std::chrono::duration<double, std::milli>(clock::now() - started).count();
        trace.rows.push_back(std::move(row));
    };

    {
        const auto started = clock::now();
        trace.warmup_ids = strategies::select_random(pool.unlabeled_ids(), cfg.warmup_M, warmup_rng);
        add_labeled(trace.warmup_ids);
        split_round(0);
        train_student(0);
        finish_row(0, trace.warmup_ids, started);
    }

    for (std::size_t t = 1; t <= cfg.iterations_T; ++t) {
        const auto started = clock::now();

        // Failure labels of the current student on the teacher's share of S.
        const std::vector<DesignPoint> teacher_x = [&] {
            std::vector<DesignPoint> xs;
            for (Id id : teacher_ids) xs.push_back(pool.point(id));
            return xs;
        }();
        const std::vector<double> f =
            make_failure_labels(trace.student.predict(teacher_x), labels(teacher_ids), cfg.aa);
        if (!cfg.warm_start) teacher = nn::init_mlp(teacher_cfg);
        nn::TrainConfig tc = nets.teacher_train;
        tc.seed = derive_seed(seeds.shared, {0x7c, t});
        teacher = nn::train(std::move(teacher), teacher_cfg, detail::design_matrix(normalized, teacher_ids),
                            nn::Tensor2::column(f), nn::Loss::BCE, tc)
                      .params;

        const std::vector<Id> unlabeled = pool.unlabeled_ids();
        const nn::Tensor2 probs = nn::forward(teacher, teacher_cfg, detail::design_matrix(normalized, unlabeled));
        strategies::FailureScores scores(unlabeled.size());
        for (std::size_t i = 0; i < unlabeled.size(); ++i) scores[i] = {unlabeled[i], probs.data[i]};

        std::vector<Id> batch =
            strategies::select_batch(strategy, normalized, scores, cfg.batch_b, t, cfg.iterations_T, policy_rng);
        if (batch.size() != cfg.batch_b) throw Error("al_run: policy returned a batch of the wrong size");
        add_labeled(batch);

        split_round(t);
        train_student(t);
        finish_row(t, std::move(batch), started);
    }
    trace.oracle_calls = labels.oracle_calls();
    return trace;
}

// ---------------------------------------------------------------------------

struct IterationSummary {
    std::size_t iteration = 0;
    std::size_t n_labeled = 0;
    double mean_accuracy = 0.0;
    double std_accuracy = 0.0;  // unbiased; 0 for a single run
    std::size_t runs = 0;
};

/// Per-iteration mean and sample standard deviation of accuracy across runs.
inline std::vector<IterationSummary> aggregate_runs(std::span<const RunTrace> traces) {
    if (traces.empty()) throw DataError("aggregate_runs: no traces");
    const std::size_t rows = traces.front().rows.size();
    for (const auto& t : traces)
        if (t.rows.size() != rows) throw DataError("aggregate_runs: traces have different lengths");
    std::vector<IterationSummary> out(rows);
    const double n = double(traces.size());
    std::vector<double> acc(traces.size());
    for (std::size_t i = 0; i < rows; ++i) {
        // summed in sorted order so the result does not depend on trace order
        for (std::size_t r = 0; r < traces.size(); ++r) acc[r] = traces[r].rows[i].accuracy;
        std::sort(acc.begin(), acc.end());
        const double mean = std::accumulate(acc.begin(), acc.end(), 0.0) / n;
        double ss = 0.0;
        for (double a : acc) ss += (a - mean) * (a - mean);
        out[i] = {traces.front().rows[i].iteration, traces.front().rows[i].n_labeled, mean,
                  traces.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0, traces.size()};
    }
    return out;
}

}  // namespace batchal::al
