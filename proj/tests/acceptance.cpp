// Acceptance suite: one PASS/FAIL line per criterion, with wall time.
// Exit status is nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "batchal/al.hpp"
#include "batchal/harness.hpp"
#include "batchal/nn.hpp"
#include "batchal/oracles.hpp"
#include "batchal/selftest.hpp"
#include "batchal/strategies.hpp"

namespace {

using namespace batchal;
namespace st = batchal::strategies;
namespace fs = std::filesystem;

struct Outcome {
    bool ok = true;
    std::string detail;
};

struct Criterion {
    int number;
    std::string name;
    double budget_s;
    std::function<Outcome()> body;
};

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

std::string fmt(const char* f, double v) {
    char buf[96];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

// --------------------------------------------------------------------------

Outcome gradients() {
    Rng rng(20240611);
    double worst = 0.0;
    int draws = 0;
    for (auto act : {nn::HiddenActivation::ReLU, nn::HiddenActivation::Tanh})
        for (auto loss : {nn::Loss::MAE, nn::Loss::BCE})
            for (int k = 0; k < 5; ++k, ++draws) {
                const auto d = selftest::draw_gradient_case(rng, act, loss);
                worst = std::max(worst, nn::grad_check(d.params, d.config, d.X, d.Y, d.loss, 1e-5));
            }
    return {worst < 1e-4, std::to_string(draws) + " draws, max rel err " + fmt("%.3e", worst)};
}

Outcome physics() {
    const double p = oracles::crush_pressure(500.0);
    // closed form at the bore: sqrt(3) * p * b^2 / (b^2 - a^2)
    const double a = 0.040, b = 0.050;
    const double closed = std::sqrt(3.0) * p * b * b / (b * b - a * a);
    const double vm = oracles::max_vessel_stress({500.0, 0.100, a, 0.010});
    const bool ok = rel(p, 7.556e6) <= 1e-3 && rel(vm, 3.636e7) <= 5e-3 && rel(vm, closed) <= 5e-3 &&
                    rel(vm, 37e6) <= 0.05;
    return {ok, "crush " + fmt("%.6g Pa", p) + ", max stress " + fmt("%.6g Pa", vm) + " (" +
                    fmt("%+.2f%%", 100 * (vm / 37e6 - 1)) + " vs 37 MPa FEA)"};
}

Outcome myring() {
    Rng rng(31);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const oracles::MyringHull h{uniform_real(rng, 0.05, 0.6),  uniform_real(rng, 0.001, 1.85),
                                    uniform_real(rng, 0.05, 0.6),  uniform_real(rng, 0.05, 0.2),
                                    uniform_real(rng, 1.0, 5.0),   uniform_real(rng, 0.0, 50.0 * std::numbers::pi / 180)};
        const double R = h.diameter / 2, xa = h.nose, xb = h.nose + h.body;
        const double errs[] = {
            oracles::myring_radius(0.0, h) / R,
            rel(oracles::myring_radius(xa, h), R),
            oracles::myring_radius(h.length(), h) / R,
            rel(oracles::myring_radius(std::nextafter(xa, 0.0), h), R),
            rel(oracles::myring_radius(std::nextafter(xa, 9.0), h), R),
            rel(oracles::myring_radius(std::nextafter(xb, 0.0), h), R),
            rel(oracles::myring_radius(std::nextafter(xb, 9.0), h), R),
        };
        for (double e : errs) worst = std::max(worst, e);
    }
    return {worst <= 1e-12, "100 hulls, worst relative deviation " + fmt("%.2e", worst)};
}

Outcome brute_force() {
    const auto top = selftest::top_b_brute_force(200, 41);
    const auto km = selftest::kmeans_brute_force(200, 43);
    // non-increase on larger Lloyd traces as well
    Rng rng(47);
    bool mono = true;
    std::size_t traces = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 4 + uniform_index(rng, 100), k = 1 + uniform_index(rng, std::min<std::size_t>(n, 10));
        std::vector<std::vector<double>> pts(n, std::vector<double>(1 + uniform_index(rng, 4)));
        const std::size_t dim = pts[0].size();
        std::vector<double> w(n);
        for (std::size_t i = 0; i < n; ++i) {
            pts[i].resize(dim);
            for (auto& v : pts[i]) v = uniform01(rng);
            w[i] = uniform01(rng);
        }
        const auto res = st::weighted_kmeans(pts, w, k, 100, rng);
        ++traces;
        for (std::size_t i = 1; i < res.history.size(); ++i)
            mono = mono && res.history[i] <= res.history[i - 1] * (1 + 1e-12) + 1e-15;
    }
    return {top.passed && km.passed && mono, top.detail + "; " + km.detail + "; " + std::to_string(traces + 200) +
                                                 " Lloyd traces " + (mono ? "non-increasing" : "INCREASED")};
}

std::size_t pair_cell(std::vector<st::Id> v) {
    std::sort(v.begin(), v.end());
    return v[0] * 20 - v[0] * (v[0] + 1) / 2 + (v[1] - v[0] - 1);
}

Outcome eps_hqs() {
    Rng rng(53);
    // eps = 0 against select_random: two-sample chi-square over the 190 possible pairs
    st::FailureScores scores;
    for (st::Id i = 0; i < 20; ++i) scores.push_back({i, i < 7 ? 0.9 : 0.1});
    std::vector<st::Id> ids(20);
    for (st::Id i = 0; i < 20; ++i) ids[i] = i;
    const int draws = 10000;
    std::vector<double> h(190, 0), r(190, 0);
    for (int i = 0; i < draws; ++i) {
        ++h[pair_cell(st::select_eps_hqs(scores, 2, 0.0, 0.5, rng))];
        ++r[pair_cell(st::select_random(ids, 2, rng))];
    }
    double stat = 0;
    std::size_t cells = 0;
    for (std::size_t c = 0; c < 190; ++c) {
        if (h[c] + r[c] == 0) continue;
        stat += (h[c] - r[c]) * (h[c] - r[c]) / (h[c] + r[c]);
        ++cells;
    }
    const double p = boost::math::cdf(boost::math::complement(boost::math::chi_squared(double(cells - 1)), stat));

    // eps = 1 with |X_f| >= b stays inside X_f
    st::FailureScores big;
    for (st::Id i = 0; i < 200; ++i) big.push_back({i, i % 4 == 0 ? 0.5 + 0.5 * uniform01(rng) : 0.49 * uniform01(rng)});
    int inside = 0;
    for (int i = 0; i < 1000; ++i) {
        const auto batch = st::select_eps_hqs(big, 10, 1.0, 0.5, rng);
        inside += std::all_of(batch.begin(), batch.end(), [](st::Id id) { return id % 4 == 0; });
    }

    // split counts equal floor(eps * b) exactly
    bool splits = true;
    int split_cases = 0;
    for (std::size_t b = 1; b <= 20; ++b)
        for (int e = 0; e <= 20; ++e, ++split_cases) {
            const double eps = e / 20.0;
            const auto batch = st::select_eps_hqs_split(big, b, eps, 0.5, rng);
            const auto want = static_cast<std::size_t>(std::floor(e * b / 20.0));  // exact integer arithmetic
            std::set<st::Id> all(batch.exploit.begin(), batch.exploit.end());
            all.insert(batch.explore.begin(), batch.explore.end());
            splits = splits && batch.exploit.size() == want && batch.explore.size() == b - want && all.size() == b;
        }
    return {p > 0.01 && inside == 1000 && splits, "chi-square p = " + fmt("%.3f", p) + ", " + std::to_string(inside) +
                                                     "/1000 batches inside X_f, " + std::to_string(split_cases) +
                                                     " split cases " + (splits ? "exact" : "WRONG")};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

harness::ExperimentConfig vessel_experiment() {
    harness::ExperimentConfig cfg;
    cfg.oracle = "vessel_max_stress";
    cfg.space = oracles::vessel_space();
    cfg.pool_size = 3000;
    cfg.al.warmup_M = 100;
    cfg.al.iterations_T = 25;
    cfg.al.batch_b = 10;
    return cfg;
}

Outcome bookkeeping() {
    auto cfg = vessel_experiment();
    cfg.al.base_seed = 606;
    cfg.strategies = {st::EpsHqs{}};
    cfg.repetitions = 1;

    const auto oracle = oracles::make_oracle(cfg.oracle, &cfg.space);
    const auto pool = oracles::sample_pool(oracle, cfg.pool_size, harness::pool_seed(cfg.al.base_seed));
    bool counts = true, disjoint = true, no_leak = true;
    std::set<st::Id> selected;
    std::size_t expected_t = 0;
    const al::Observer obs = [&](const al::IterationView& v) {
        counts = counts && v.iteration == expected_t &&
                 v.student_ids.size() == cfg.al.warmup_M + v.iteration * cfg.al.batch_b &&
                 v.eval_ids.size() + v.student_ids.size() == cfg.pool_size;
        const std::set<st::Id> eval(v.eval_ids.begin(), v.eval_ids.end());
        for (auto id : v.student_ids) disjoint = disjoint && !eval.count(id);
        for (auto id : v.teacher_ids) disjoint = disjoint && !eval.count(id);
        ++expected_t;
    };
    const auto trace = al::al_run(oracle, pool, cfg.strategies[0], cfg.networks(), cfg.al,
                                  harness::run_seeds(cfg.al.base_seed, 0, 0), obs);
    selected.insert(trace.warmup_ids.begin(), trace.warmup_ids.end());
    for (const auto& row : trace.rows) {
        if (row.iteration > 0) selected.insert(row.selected.begin(), row.selected.end());
        counts = counts && row.n_labeled == cfg.al.warmup_M + row.iteration * cfg.al.batch_b;
    }
    no_leak = selected.size() == cfg.al.warmup_M + cfg.al.iterations_T * cfg.al.batch_b;
    counts = counts && expected_t == cfg.al.iterations_T + 1;

    const fs::path dir = fs::temp_directory_path() / "batchal_acceptance";
    fs::remove_all(dir);
    cfg.out_dir = dir / "a";
    harness::run_experiment(cfg);
    cfg.out_dir = dir / "b";
    harness::run_experiment(cfg);
    const std::string a = slurp(dir / "a" / "trace.csv"), b = slurp(dir / "b" / "trace.csv");
    const bool same = !a.empty() && a == b;
    fs::remove_all(dir);
    return {counts && disjoint && no_leak && same,
            std::string("|S| = M + t*b ") + (counts ? "held" : "BROKEN") + ", train/eval " +
                (disjoint ? "disjoint" : "OVERLAP") + ", selections " + (no_leak ? "unique" : "DUPLICATED") +
                ", trace.csv " + (same ? "byte-identical" : "DIFFERS")};
}

Outcome trend() {
    auto cfg = vessel_experiment();
    cfg.al.base_seed = 7;
    cfg.repetitions = 5;
    cfg.strategies = {st::RandomBatch{}, st::EpsHqs{st::LogGreedyEps{}, 0.5}};
    const auto res = harness::execute(cfg);
    double mean_r = 0, mean_e = 0;
    int wins = 0;
    std::string finals;
    for (std::size_t r = 0; r < 5; ++r) {
        const double ar = res.traces[0][r].rows.back().accuracy, ae = res.traces[1][r].rows.back().accuracy;
        mean_r += ar / 5;
        mean_e += ae / 5;
        wins += ae > ar;
        finals += fmt(" %.4f", ae) + fmt("/%.4f", ar);
    }
    return {mean_e >= mean_r - 0.01 && wins >= 4, "eps_hqs " + fmt("%.4f", mean_e) + " vs random " +
                                                      fmt("%.4f", mean_r) + ", wins " + std::to_string(wins) +
                                                      "/5 (eps/random per seed:" + finals + ")"};
}

Outcome metric_identity() {
    Rng rng(71);
    int exact = 0;
    for (int i = 0; i < 1000; ++i) {
        const std::size_t n = 1 + uniform_index(rng, 200);
        const double aa = uniform_real(rng, 0.001, 0.5);
        std::vector<double> y(n), p(n);
        for (std::size_t k = 0; k < n; ++k) {
            y[k] = uniform_index(rng, 10) == 0 ? 0.0 : uniform_real(rng, -1e6, 1e6);
            // include exact boundary hits on a fraction of points
            const double e = uniform_index(rng, 5) == 0 ? aa : uniform_real(rng, -2 * aa, 2 * aa);
            p[k] = y[k] * (1 + e);
        }
        const auto f = al::make_failure_labels(p, y, aa);
        double sum = 0;
        for (double v : f) sum += v;
        exact += al::accuracy(p, y, aa) == 1.0 - sum / double(n);
    }
    return {exact == 1000, std::to_string(exact) + "/1000 draws exact"};
}

}  // namespace

int main() {
    const std::vector<Criterion> criteria{
        {1, "gradient correctness", 30, gradients},
        {2, "physics oracle cross-check", 1, physics},
        {3, "myring geometry", 1, myring},
        {4, "strategy brute-force equivalence", 30, brute_force},
        {5, "eps-hqs structure", 30, eps_hqs},
        {6, "al bookkeeping", 120, bookkeeping},
        {7, "eps-hqs vs random trend", 600, trend},
        {8, "metric identity", 1, metric_identity},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = c.body();
        } catch (const std::exception& e) {
            out = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = secs <= c.budget_s;
        const bool pass = out.ok && in_time;
        failed += !pass;
        std::printf("%s criterion %d (%s): %s [%.2fs of %.0fs]%s\n", pass ? "PASS" : "FAIL", c.number,
                    c.name.c_str(), out.detail.c_str(), secs, c.budget_s, in_time ? "" : " OVER TIME BUDGET");
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
