#pragma once

// Built-in property checks behind `batchal selftest`: gradient checks over
// random networks, Top-b against exhaustive subset search, and weighted
// k-means against partition enumeration.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "batchal/nn.hpp"
#include "batchal/random.hpp"
#include "batchal/strategies.hpp"

namespace batchal::selftest {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

/// Random (architecture, data) draw with hidden pre-activations and MAE
/// residuals kept away from their kinks so central differences are valid.
struct GradDraw {
    nn::MlpConfig config;
    nn::MlpParams params;
    nn::Tensor2 X;
    nn::Tensor2 Y;
    nn::Loss loss;
};

inline bool away_from_kinks(const GradDraw& d, double margin) {
    // walk the layers by hand to inspect hidden pre-activations
    std::vector<double> h;
    for (std::size_t r = 0; r < d.X.rows; ++r) {
        h.assign(d.X.data.begin() + std::ptrdiff_t(r * d.X.cols), d.X.data.begin() + std::ptrdiff_t((r + 1) * d.X.cols));
        for (std::size_t l = 0; l < d.params.layers.size(); ++l) {
            const auto& layer = d.params.layers[l];
            std::vector<double> z(layer.weights.rows);
            for (std::size_t o = 0; o < z.size(); ++o) {
                double s = layer.bias[o];
                for (std::size_t i = 0; i < h.size(); ++i) s += layer.weights(o, i) * h[i];
                z[o] = s;
            }
            const bool last = l + 1 == d.params.layers.size();
            if (!last && d.config.hidden == nn::HiddenActivation::ReLU)
                for (double v : z)
                    if (std::abs(v) < margin) return false;
            if (!last) {
                for (auto& v : z) v = d.config.hidden == nn::HiddenActivation::ReLU ? std::max(0.0, v) : std::tanh(v);
            } else if (d.loss == nn::Loss::MAE) {
                for (std::size_t o = 0; o < z.size(); ++o)
                    if (std::abs(z[o] - d.Y(r, o)) < margin) return false;
            }
            h = std::move(z);
        }
    }
    return true;
}

inline GradDraw draw_gradient_case(Rng& rng, nn::HiddenActivation act, nn::Loss loss) {
    for (;;) {
        GradDraw d;
        const std::size_t in = 1 + uniform_index(rng, 4);
        const std::size_t depth = 1 + uniform_index(rng, 2);
        d.config.layer_sizes = {in};
        for (std::size_t l = 0; l < depth; ++l) d.config.layer_sizes.push_back(2 + uniform_index(rng, 6));
        d.config.layer_sizes.push_back(1);
        d.config.hidden = act;
        d.config.output = loss == nn::Loss::BCE ? nn::OutputActivation::Sigmoid : nn::OutputActivation::Identity;
        d.config.seed = rng();
        d.loss = loss;
        d.params = nn::init_mlp(d.config);
        for (auto& l : d.params.layers)
            for (auto& b : l.bias) b = uniform_real(rng, -0.3, 0.3);
        const std::size_t n = 8;
        d.X = nn::Tensor2(n, in);
        for (auto& v : d.X.data) v = uniform_real(rng, -1.0, 1.0);
        d.Y = nn::Tensor2(n, 1);
        for (auto& v : d.Y.data) v = loss == nn::Loss::BCE ? double(uniform_index(rng, 2)) : uniform_real(rng, -2.0, 2.0);
        if (away_from_kinks(d, 1e-3)) return d;
    }
}

inline CheckResult gradient_checks(std::size_t draws = 20, std::uint64_t seed = 2024) {
    Rng rng(seed);
    double worst = 0.0;
    for (std::size_t i = 0; i < draws; ++i) {
        const auto act = i % 2 ? nn::HiddenActivation::Tanh : nn::HiddenActivation::ReLU;
        const auto loss = (i / 2) % 2 ? nn::Loss::BCE : nn::Loss::MAE;
        const GradDraw d = draw_gradient_case(rng, act, loss);
        worst = std::max(worst, nn::grad_check(d.params, d.config, d.X, d.Y, d.loss, 1e-5));
    }
    return {"gradient check (" + std::to_string(draws) + " random networks)", worst < 1e-4,
            "max relative error " + std::to_string(worst)};
}

inline CheckResult top_b_brute_force(std::size_t pools = 200, std::uint64_t seed = 7) {
    Rng rng(seed);
    for (std::size_t trial = 0; trial < pools; ++trial) {
        const std::size_t n = 1 + uniform_index(rng, 12);
        const std::size_t b = 1 + uniform_index(rng, n);
        strategies::FailureScores scores;
        for (std::size_t i = 0; i < n; ++i) scores.push_back({i, uniform01(rng)});
        double best = -1.0;
        for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
            if (std::size_t(__builtin_popcount(mask)) != b) continue;
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                if (mask >> i & 1u) s += scores[i].p;
            best = std::max(best, s);
        }
        double got = 0.0;
        for (auto id : strategies::select_top_b(scores, b)) got += scores[id].p;
        if (std::abs(got - best) > 1e-12)
            return {"top-b vs exhaustive subsets", false, "mismatch on trial " + std::to_string(trial)};
    }
    return {"top-b vs exhaustive subsets", true, std::to_string(pools) + " pools"};
}

inline CheckResult kmeans_brute_force(std::size_t triples = 200, std::uint64_t seed = 11) {
    Rng rng(seed);
    for (std::size_t trial = 0; trial < triples; ++trial) {
        std::vector<std::vector<double>> pts(3, std::vector<double>(1));
        std::vector<double> w(3);
        for (std::size_t i = 0; i < 3; ++i) {
            pts[i][0] = uniform_real(rng, -5.0, 5.0);
            w[i] = uniform_real(rng, 0.1, 2.0);
        }
        // every 2-partition of three points isolates exactly one of them
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t solo = 0; solo < 3; ++solo) {
            double sw = 0.0, sx = 0.0;
            for (std::size_t i = 0; i < 3; ++i)
                if (i != solo) sw += w[i], sx += w[i] * pts[i][0];
            const double mu = sx / sw;
            double j = 0.0;
            for (std::size_t i = 0; i < 3; ++i)
                if (i != solo) j += w[i] * (pts[i][0] - mu) * (pts[i][0] - mu);
            best = std::min(best, j);
        }
        const auto km = strategies::weighted_kmeans(pts, w, 2, 100, rng, 10);
        if (std::abs(km.objective - best) > 1e-9 * std::max(1.0, best))
            return {"weighted k-means vs partition enumeration", false, "mismatch on trial " + std::to_string(trial)};
        for (std::size_t i = 1; i < km.history.size(); ++i)
            if (km.history[i] > km.history[i - 1] * (1.0 + 1e-12) + 1e-15)
                return {"weighted k-means vs partition enumeration", false, "objective increased"};
    }
    return {"weighted k-means vs partition enumeration", true, std::to_string(triples) + " triples"};
}

inline std::vector<CheckResult> run_all() { return {gradient_checks(), top_b_brute_force(), kmeans_brute_force()}; }

}  // namespace batchal::selftest
