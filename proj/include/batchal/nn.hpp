#pragma once

// Minimal dense feed-forward network: forward pass, exact backpropagation,
// MAE / binary cross-entropy losses, SGD and Adam, and a central-difference
// gradient checker. Matrix products go through Eigen maps over the plain
// row-major storage so parameters stay ordinary value types.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "batchal/error.hpp"
#include "batchal/random.hpp"

namespace batchal::nn {

/// Dense row-major matrix of doubles.
struct Tensor2 {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Tensor2() = default;
    Tensor2(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
    Tensor2(std::size_t r, std::size_t c, std::vector<double> values) : rows(r), cols(c), data(std::move(values)) {
        if (data.size() != rows * cols)
            throw ShapeError("Tensor2: data length " + std::to_string(data.size()) + " != " +
                             std::to_string(rows) + "x" + std::to_string(cols));
    }

    static Tensor2 from_rows(std::initializer_list<std::initializer_list<double>> rows_in) {
        Tensor2 t;
        t.rows = rows_in.size();
        t.cols = t.rows ? rows_in.begin()->size() : 0;
        for (const auto& row : rows_in) {
            if (row.size() != t.cols) throw ShapeError("Tensor2::from_rows: ragged rows");
            t.data.insert(t.data.end(), row.begin(), row.end());
        }
        return t;
    }

    /// Column vector from a list of values.
    static Tensor2 column(const std::vector<double>& values) { return Tensor2(values.size(), 1, values); }

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    bool all_finite() const {
        return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
    }

    friend bool operator==(const Tensor2&, const Tensor2&) = default;
};

enum class HiddenActivation { ReLU, Tanh };
enum class OutputActivation { Identity, Sigmoid };
enum class Loss { MAE, BCE };

struct MlpConfig {
    std::vector<std::size_t> layer_sizes;  // input dim first, output dim last
    HiddenActivation hidden = HiddenActivation::ReLU;
    OutputActivation output = OutputActivation::Identity;
    std::uint64_t seed = 0;

    std::size_t input_dim() const { return layer_sizes.front(); }
    std::size_t output_dim() const { return layer_sizes.back(); }
    std::size_t layer_count() const { return layer_sizes.size() - 1; }

    void validate() const {
        if (layer_sizes.size() < 2) throw ConfigError("MlpConfig: need at least 2 layer sizes");
        for (auto s : layer_sizes)
            if (s == 0) throw ConfigError("MlpConfig: layer sizes must be >= 1");
    }

    /// Regression network: [d, 64, 64, 1] ReLU with linear output.
    static MlpConfig student(std::size_t input_dim, std::uint64_t seed = 0) {
        return {{input_dim, 64, 64, 1}, HiddenActivation::ReLU, OutputActivation::Identity, seed};
    }
    /// Failure classifier: [d, 32, 1] ReLU with sigmoid output.
    static MlpConfig teacher(std::size_t input_dim, std::uint64_t seed = 0) {
        return {{input_dim, 32, 1}, HiddenActivation::ReLU, OutputActivation::Sigmoid, seed};
    }
};

/// Loss that matches the output head: MAE for regression, BCE for probabilities.
inline Loss default_loss(const MlpConfig& config) {
    return config.output == OutputActivation::Sigmoid ? Loss::BCE : Loss::MAE;
}

struct Layer {
    Tensor2 weights;  // out x in
    std::vector<double> bias;

    friend bool operator==(const Layer&, const Layer&) = default;
};

struct MlpParams {
    std::vector<Layer> layers;

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += l.weights.data.size() + l.bias.size();
        return n;
    }

    bool all_finite() const {
        return std::all_of(layers.begin(), layers.end(), [](const Layer& l) {
            return l.weights.all_finite() &&
                   std::all_of(l.bias.begin(), l.bias.end(), [](double v) { return std::isfinite(v); });
        });
    }

    /// Visits every scalar parameter (weights then bias, layer by layer).
    template <class F>
    void for_each(F&& f) {
        for (auto& l : layers) {
            for (auto& w : l.weights.data) f(w);
            for (auto& b : l.bias) f(b);
        }
    }
    template <class F>
    void for_each(F&& f) const {
        for (const auto& l : layers) {
            for (auto w : l.weights.data) f(w);
            for (auto b : l.bias) f(b);
        }
    }

    friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

struct Sgd {};
struct Adam {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct TrainConfig {
    double learning_rate = 1e-3;
    std::size_t epochs = 300;
    std::size_t minibatch_size = 32;
    std::variant<Sgd, Adam> optimizer = Adam{};
    std::uint64_t seed = 0;
    /// Multiplier on learning_rate; 0 freezes the parameters.
    double lr_scale = 1.0;

    void validate() const {
        if (!(learning_rate > 0.0)) throw ConfigError("TrainConfig: learning_rate must be > 0");
        if (minibatch_size == 0) throw ConfigError("TrainConfig: minibatch_size must be >= 1");
        if (!(lr_scale >= 0.0)) throw ConfigError("TrainConfig: lr_scale must be >= 0");
        if (const auto* adam = std::get_if<Adam>(&optimizer)) {
            if (!(adam->beta1 >= 0.0 && adam->beta1 < 1.0 && adam->beta2 >= 0.0 && adam->beta2 < 1.0))
                throw ConfigError("TrainConfig: Adam betas must lie in [0, 1)");
            if (!(adam->eps > 0.0)) throw ConfigError("TrainConfig: Adam eps must be > 0");
        }
    }
};

inline constexpr double kBceClip = 1e-7;

namespace detail {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;
using ConstRowVectorMap = Eigen::Map<const Eigen::RowVectorXd>;

inline ConstMatrixMap view(const Tensor2& t) { return {t.data.data(), Eigen::Index(t.rows), Eigen::Index(t.cols)}; }
inline MatrixMap view(Tensor2& t) { return {t.data.data(), Eigen::Index(t.rows), Eigen::Index(t.cols)}; }

// Sigmoid clamped away from {0, 1} so outputs stay strictly inside the interval.
inline double sigmoid(double z) {
    constexpr double lo = 0x1.0p-60;
    constexpr double hi = 1.0 - 0x1.0p-53;
    const double s = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    return std::clamp(s, lo, hi);
}

inline void check_params(const MlpParams& params, const MlpConfig& config) {
    config.validate();
    if (params.layers.size() != config.layer_count()) throw ShapeError("MlpParams: layer count mismatch");
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const auto& layer = params.layers[l];
        if (layer.weights.rows != config.layer_sizes[l + 1] || layer.weights.cols != config.layer_sizes[l] ||
            layer.bias.size() != config.layer_sizes[l + 1])
            throw ShapeError("MlpParams: layer " + std::to_string(l) + " shape mismatch");
    }
}

inline void check_input(const MlpConfig& config, const Tensor2& X) {
    if (X.cols != config.input_dim())
        throw ShapeError("forward: input has " + std::to_string(X.cols) + " columns, network expects " +
                         std::to_string(config.input_dim()));
}

inline void check_targets(const MlpConfig& config, const Tensor2& X, const Tensor2& Y) {
    check_input(config, X);
    if (Y.rows != X.rows || Y.cols != config.output_dim())
        throw ShapeError("targets shape " + std::to_string(Y.rows) + "x" + std::to_string(Y.cols) +
                         " does not match inputs/network");
}

inline void check_binary(const Tensor2& target) {
    for (double t : target.data)
        if (t != 0.0 && t != 1.0) throw LabelError("bce: target " + std::to_string(t) + " not in {0,1}");
}

// Activations of one forward pass; acts[0] is the input batch.
struct Cache {
    std::vector<Matrix> acts;
    std::vector<Matrix> deltas;
};

template <class Input>
const Matrix& forward_cached(const MlpParams& params, const MlpConfig& config, const Input& X, Cache& cache) {
    const std::size_t L = params.layers.size();
    cache.acts.resize(L + 1);
    cache.acts[0] = X;
    for (std::size_t l = 0; l < L; ++l) {
        const auto& layer = params.layers[l];
        Matrix& out = cache.acts[l + 1];
        out.noalias() = cache.acts[l] * view(layer.weights).transpose();
        out.rowwise() += ConstRowVectorMap(layer.bias.data(), Eigen::Index(layer.bias.size()));
        if (l + 1 < L) {
            if (config.hidden == HiddenActivation::ReLU)
                out = out.cwiseMax(0.0);
            else
                out = out.array().tanh().matrix();
        } else if (config.output == OutputActivation::Sigmoid) {
            out = out.unaryExpr([](double z) { return sigmoid(z); });
        }
    }
    return cache.acts[L];
}

template <class Target>
double loss_value(const Matrix& pred, const Target& target, Loss loss) {
    const double n = static_cast<double>(pred.size());
    if (loss == Loss::MAE) return (pred - target).cwiseAbs().sum() / n;
    double total = 0.0;
    for (Eigen::Index i = 0; i < pred.rows(); ++i)
        for (Eigen::Index j = 0; j < pred.cols(); ++j) {
            const double p = std::clamp(pred(i, j), kBceClip, 1.0 - kBceClip);
            const double t = target(i, j);
            total -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
        }
    return total / n;
}

// Back-propagates the mean loss of the cached batch into `grads` (same shape
// as params, overwritten). Returns the loss value.
template <class Target>
double backprop(const MlpParams& params, const MlpConfig& config, const Target& Y, Loss loss, Cache& cache,
                MlpParams& grads) {
    const std::size_t L = params.layers.size();
    const Matrix& out = cache.acts[L];
    const double n = static_cast<double>(out.size());
    const double value = loss_value(out, Y, loss);

    cache.deltas.resize(L);
    Matrix& top = cache.deltas[L - 1];
    top.resize(out.rows(), out.cols());
    for (Eigen::Index i = 0; i < out.rows(); ++i)
        for (Eigen::Index j = 0; j < out.cols(); ++j) {
            const double a = out(i, j);
            const double t = Y(i, j);
            double dA;
            if (loss == Loss::MAE) {
                const double r = a - t;
                dA = (r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0)) / n;
            } else {
                // clamp(p) is flat outside the clip window
                dA = (a < kBceClip || a > 1.0 - kBceClip) ? 0.0 : (-t / a + (1.0 - t) / (1.0 - a)) / n;
            }
            top(i, j) = config.output == OutputActivation::Sigmoid ? dA * a * (1.0 - a) : dA;
        }

    for (std::size_t l = L; l-- > 0;) {
        const Matrix& delta = cache.deltas[l];
        auto& g = grads.layers[l];
        view(g.weights).noalias() = delta.transpose() * cache.acts[l];
        Eigen::Map<Eigen::RowVectorXd>(g.bias.data(), Eigen::Index(g.bias.size())) = delta.colwise().sum();
        if (l == 0) break;
        Matrix& below = cache.deltas[l - 1];
        below.noalias() = delta * view(params.layers[l].weights);
        const Matrix& a = cache.acts[l];
        if (config.hidden == HiddenActivation::ReLU)
            below = below.cwiseProduct((a.array() > 0.0).cast<double>().matrix());
        else
            below = below.cwiseProduct((1.0 - a.array().square()).matrix());
    }
    return value;
}

inline MlpParams zeros_like(const MlpParams& params) {
    MlpParams z;
    z.layers.reserve(params.layers.size());
    for (const auto& l : params.layers)
        z.layers.push_back({Tensor2(l.weights.rows, l.weights.cols), std::vector<double>(l.bias.size(), 0.0)});
    return z;
}

}  // namespace detail

/// Draws fresh parameters: He-normal weights in front of ReLU units,
/// Xavier-normal otherwise (including the output layer); zero biases.
inline MlpParams init_mlp(const MlpConfig& config) {
    config.validate();
    Rng rng(derive_seed(config.seed, {0x1417}));
    MlpParams params;
    for (std::size_t l = 0; l < config.layer_count(); ++l) {
        const std::size_t fan_in = config.layer_sizes[l];
        const std::size_t fan_out = config.layer_sizes[l + 1];
        const bool feeds_relu = l + 1 < config.layer_count() && config.hidden == HiddenActivation::ReLU;
        const double stddev = feeds_relu ? std::sqrt(2.0 / double(fan_in)) : std::sqrt(2.0 / double(fan_in + fan_out));
        Layer layer{Tensor2(fan_out, fan_in), std::vector<double>(fan_out, 0.0)};
        for (auto& w : layer.weights.data) w = stddev * standard_normal(rng);
        params.layers.push_back(std::move(layer));
    }
    return params;
}

inline Tensor2 forward(const MlpParams& params, const MlpConfig& config, const Tensor2& X) {
    detail::check_params(params, config);
    detail::check_input(config, X);
    detail::Cache cache;
    const auto& out = detail::forward_cached(params, config, detail::view(X), cache);
    Tensor2 result(out.rows(), out.cols());
    detail::view(result) = out;
    return result;
}

inline double mae_loss(const Tensor2& pred, const Tensor2& target) {
    if (pred.rows != target.rows || pred.cols != target.cols) throw ShapeError("mae_loss: shape mismatch");
    if (pred.data.empty()) throw DataError("mae_loss: empty input");
    double total = 0.0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) total += std::abs(pred.data[i] - target.data[i]);
    return total / static_cast<double>(pred.data.size());
}

inline double bce_loss(const Tensor2& pred, const Tensor2& target) {
    if (pred.rows != target.rows || pred.cols != target.cols) throw ShapeError("bce_loss: shape mismatch");
    if (pred.data.empty()) throw DataError("bce_loss: empty input");
    detail::check_binary(target);
    return detail::loss_value(detail::Matrix(detail::view(pred)), detail::view(target), Loss::BCE);
}

inline double loss_of(const Tensor2& pred, const Tensor2& target, Loss loss) {
    return loss == Loss::MAE ? mae_loss(pred, target) : bce_loss(pred, target);
}

/// Exact gradient of the mean loss over (X, Y) with respect to every parameter.
inline MlpParams backward(const MlpParams& params, const MlpConfig& config, const Tensor2& X, const Tensor2& Y,
                          Loss loss) {
    detail::check_params(params, config);
    detail::check_targets(config, X, Y);
    if (X.rows == 0) throw DataError("backward: empty batch");
    if (loss == Loss::BCE) detail::check_binary(Y);
    detail::Cache cache;
    detail::forward_cached(params, config, detail::view(X), cache);
    MlpParams grads = detail::zeros_like(params);
    detail::backprop(params, config, detail::view(Y), loss, cache, grads);
    return grads;
}

struct TrainResult {
    MlpParams params;
    std::vector<double> loss_history;  // mean minibatch loss per epoch
};

/// Minibatch training. Runs epochs * ceil(N / minibatch_size) optimizer steps
/// over a per-epoch shuffle drawn from `tcfg.seed`.
inline TrainResult train(MlpParams params, const MlpConfig& config, const Tensor2& X, const Tensor2& Y, Loss loss,
                         const TrainConfig& tcfg) {
    using detail::Matrix;
    detail::check_params(params, config);
    tcfg.validate();
    if (X.rows == 0) throw DataError("train: empty data");
    detail::check_targets(config, X, Y);
    if (loss == Loss::BCE) detail::check_binary(Y);

    TrainResult result;
    result.loss_history.reserve(tcfg.epochs);
    if (tcfg.epochs == 0) {
        result.params = std::move(params);
        return result;
    }

    const std::size_t n = X.rows;
    const std::size_t mb = std::min(tcfg.minibatch_size, n);
    const double lr = tcfg.learning_rate * tcfg.lr_scale;
    Rng rng(derive_seed(tcfg.seed, {0x7a11}));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    const auto Xv = detail::view(X);
    const auto Yv = detail::view(Y);
    Matrix xb, yb;
    detail::Cache cache;
    MlpParams grads = detail::zeros_like(params);
    MlpParams m1 = detail::zeros_like(params);
    MlpParams m2 = detail::zeros_like(params);
    std::uint64_t step = 0;

    auto apply_update = [&](auto&& update) {
        for (std::size_t l = 0; l < params.layers.size(); ++l) {
            update(params.layers[l].weights.data, grads.layers[l].weights.data, m1.layers[l].weights.data,
                   m2.layers[l].weights.data);
            update(params.layers[l].bias, grads.layers[l].bias, m1.layers[l].bias, m2.layers[l].bias);
        }
    };

    for (std::size_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
        shuffle(std::span(order), rng);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < n; start += mb) {
            const std::size_t count = std::min(mb, n - start);
            xb.resize(Eigen::Index(count), Xv.cols());
            yb.resize(Eigen::Index(count), Yv.cols());
            for (std::size_t i = 0; i < count; ++i) {
                xb.row(Eigen::Index(i)) = Xv.row(Eigen::Index(order[start + i]));
                yb.row(Eigen::Index(i)) = Yv.row(Eigen::Index(order[start + i]));
            }
            detail::forward_cached(params, config, xb, cache);
            epoch_loss += detail::backprop(params, config, yb, loss, cache, grads);
            ++batches;
            ++step;

            if (const auto* adam = std::get_if<Adam>(&tcfg.optimizer)) {
                const double c1 = 1.0 - std::pow(adam->beta1, double(step));
                const double c2 = 1.0 - std::pow(adam->beta2, double(step));
                apply_update([&](std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m,
                                 std::vector<double>& v) {
                    for (std::size_t i = 0; i < p.size(); ++i) {
                        m[i] = adam->beta1 * m[i] + (1.0 - adam->beta1) * g[i];
                        v[i] = adam->beta2 * v[i] + (1.0 - adam->beta2) * g[i] * g[i];
                        p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + adam->eps);
                    }
                });
            } else {
                apply_update([&](std::vector<double>& p, const std::vector<double>& g, std::vector<double>&,
                                 std::vector<double>&) {
                    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
                });
            }
        }
        result.loss_history.push_back(epoch_loss / double(batches));
    }
    if (!params.all_finite()) throw DataError("train: parameters diverged to non-finite values");
    result.params = std::move(params);
    return result;
}

inline TrainResult train(MlpParams params, const MlpConfig& config, const Tensor2& X, const Tensor2& Y,
                         const TrainConfig& tcfg) {
    return train(std::move(params), config, X, Y, default_loss(config), tcfg);
}

/// Largest relative disagreement between backward() and central differences
/// over all parameters: |g - fd| / max(|g|, |fd|, 1e-6). The floor keeps
/// exactly-zero gradients from being judged against roundoff in the
/// difference quotient, which is ~eps*|loss|/h (about 1e-11 at h = 1e-5).
inline double grad_check(const MlpParams& params, const MlpConfig& config, const Tensor2& X, const Tensor2& Y,
                         Loss loss, double h = 1e-5) {
    const MlpParams analytic = backward(params, config, X, Y, loss);
    std::vector<double> g;
    g.reserve(params.parameter_count());
    analytic.for_each([&](double v) { g.push_back(v); });

    MlpParams probe = params;
    std::vector<double*> slots;
    probe.for_each([&](double& v) { slots.push_back(&v); });

    double worst = 0.0;
    for (std::size_t i = 0; i < slots.size(); ++i) {
        const double saved = *slots[i];
        *slots[i] = saved + h;
        const double up = loss_of(forward(probe, config, X), Y, loss);
        *slots[i] = saved - h;
        const double down = loss_of(forward(probe, config, X), Y, loss);
        *slots[i] = saved;
        const double fd = (up - down) / (2.0 * h);
        const double denom = std::max({std::abs(g[i]), std::abs(fd), 1e-6});
        worst = std::max(worst, std::abs(g[i] - fd) / denom);
    }
    return worst;
}

}  // namespace batchal::nn
