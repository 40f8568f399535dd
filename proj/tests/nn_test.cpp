#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "batchal/nn.hpp"
#include "batchal/selftest.hpp"

namespace {

using namespace batchal;
using namespace batchal::nn;

MlpConfig linear_1x1() { return {{1, 1}, HiddenActivation::ReLU, OutputActivation::Identity, 0}; }

MlpParams single_layer(std::vector<double> w, std::size_t in, double b) {
    MlpParams p;
    p.layers.push_back({Tensor2(1, in, std::move(w)), {b}});
    return p;
}

TEST(InitMlp, DeterministicForSeed) {
    MlpConfig c{{4, 8, 1}, HiddenActivation::ReLU, OutputActivation::Identity, 7};
    EXPECT_EQ(init_mlp(c), init_mlp(c));
    c.seed = 8;
    MlpConfig c7 = c;
    c7.seed = 7;
    EXPECT_NE(init_mlp(c), init_mlp(c7));
}

TEST(InitMlp, ShapesFollowLayerSizes) {
    const auto p = init_mlp({{4, 8, 1}, HiddenActivation::Tanh, OutputActivation::Identity, 1});
    ASSERT_EQ(p.layers.size(), 2u);
    EXPECT_EQ(p.layers[0].weights.rows, 8u);
    EXPECT_EQ(p.layers[0].weights.cols, 4u);
    EXPECT_EQ(p.layers[0].bias.size(), 8u);
    EXPECT_EQ(p.layers[1].weights.rows, 1u);
    EXPECT_EQ(p.layers[1].weights.cols, 8u);
    for (const auto& l : p.layers)
        for (double b : l.bias) EXPECT_EQ(b, 0.0);
}

TEST(InitMlp, WeightsAreZeroMeanAndFanInScaled) {
    // 64 x 157 = 10048 weights with fan-in 64
    const auto p = init_mlp({{64, 157, 1}, HiddenActivation::ReLU, OutputActivation::Identity, 3});
    const auto& w = p.layers[0].weights.data;
    const double mean = std::accumulate(w.begin(), w.end(), 0.0) / double(w.size());
    double var = 0.0;
    for (double v : w) var += (v - mean) * (v - mean);
    var /= double(w.size() - 1);
    EXPECT_LT(std::abs(mean), 0.02);
    EXPECT_NEAR(var, 2.0 / 64.0, 0.1 * 2.0 / 64.0);  // He variance
}

TEST(InitMlp, RejectsBadLayerSizes) {
    EXPECT_THROW(init_mlp({{4}, HiddenActivation::ReLU, OutputActivation::Identity, 0}), ConfigError);
    EXPECT_THROW(init_mlp({{4, 0, 1}, HiddenActivation::ReLU, OutputActivation::Identity, 0}), ConfigError);
}

TEST(Forward, AffineSingleLayer) {
    const auto out = forward(single_layer({2.0}, 1, 1.0), linear_1x1(), Tensor2::from_rows({{3.0}}));
    ASSERT_EQ(out.rows, 1u);
    EXPECT_EQ(out(0, 0), 7.0);
}

TEST(Forward, ZeroWeightSigmoidGivesHalf) {
    MlpConfig c{{3, 4, 1}, HiddenActivation::ReLU, OutputActivation::Sigmoid, 0};
    MlpParams p = init_mlp(c);
    p.for_each([](double& v) { v = 0.0; });
    const auto out = forward(p, c, Tensor2(5, 3, 0.0));
    for (double v : out.data) EXPECT_EQ(v, 0.5);
}

TEST(Forward, ReluClipsNegativePreactivations) {
    MlpConfig c{{1, 2, 1}, HiddenActivation::ReLU, OutputActivation::Identity, 0};
    MlpParams p;
    p.layers.push_back({Tensor2(2, 1, {-1.0, -2.0}), {-0.5, -0.1}});
    p.layers.push_back({Tensor2(1, 2, {1.0, 1.0}), {0.0}});
    const auto out = forward(p, c, Tensor2::from_rows({{0.5}, {3.0}}));
    EXPECT_EQ(out(0, 0), 0.0);
    EXPECT_EQ(out(1, 0), 0.0);
}

TEST(Forward, SigmoidStaysStrictlyInsideUnitInterval) {
    MlpConfig c{{1, 1}, HiddenActivation::ReLU, OutputActivation::Sigmoid, 0};
    for (double w : {-1e6, -800.0, -40.0, 40.0, 800.0, 1e6}) {
        const auto out = forward(single_layer({w}, 1, 0.0), c, Tensor2::from_rows({{1.0}}));
        EXPECT_GT(out(0, 0), 0.0);
        EXPECT_LT(out(0, 0), 1.0);
    }
}

TEST(Forward, DimensionMismatchThrows) {
    EXPECT_THROW(forward(single_layer({2.0}, 1, 1.0), linear_1x1(), Tensor2(1, 2)), ShapeError);
}

TEST(Losses, Mae) {
    EXPECT_EQ(mae_loss(Tensor2::from_rows({{1.0}, {2.0}}), Tensor2::from_rows({{1.0}, {2.0}})), 0.0);
    EXPECT_EQ(mae_loss(Tensor2::from_rows({{0.0}}), Tensor2::from_rows({{2.0}})), 2.0);
    EXPECT_DOUBLE_EQ(mae_loss(Tensor2::from_rows({{1.0}, {3.0}}), Tensor2::from_rows({{2.0}, {1.0}})), 1.5);
    EXPECT_THROW(mae_loss(Tensor2(2, 1), Tensor2(1, 2)), ShapeError);
}

TEST(Losses, Bce) {
    EXPECT_NEAR(bce_loss(Tensor2::from_rows({{0.5}}), Tensor2::from_rows({{1.0}})), std::log(2.0), 1e-15);
    EXPECT_NEAR(bce_loss(Tensor2::from_rows({{1.0 - 1e-7}}), Tensor2::from_rows({{1.0}})), 1e-7, 1e-12);
    EXPECT_NEAR(bce_loss(Tensor2::from_rows({{0.9}, {0.1}}), Tensor2::from_rows({{1.0}, {0.0}})),
                0.10536051565782628, 1e-12);
    // exact 0/1 predictions are clipped rather than producing infinities
    EXPECT_TRUE(std::isfinite(bce_loss(Tensor2::from_rows({{0.0}}), Tensor2::from_rows({{1.0}}))));
    EXPECT_THROW(bce_loss(Tensor2::from_rows({{0.5}}), Tensor2::from_rows({{0.5}})), LabelError);
}

TEST(Backward, ZeroAtPerfectMaeFit) {
    const auto g = backward(single_layer({2.0}, 1, 1.0), linear_1x1(), Tensor2::from_rows({{3.0}}),
                            Tensor2::from_rows({{7.0}}), Loss::MAE);
    g.for_each([](double v) { EXPECT_EQ(v, 0.0); });
}

TEST(Backward, LinearMaeGradientIsSignTimesInput) {
    MlpConfig c{{2, 1}, HiddenActivation::ReLU, OutputActivation::Identity, 0};
    // pred = 0.5*1.5 - 1*2 + 0.2 = -1.05 < 10, so sign(pred - y) = -1
    const auto g = backward(single_layer({0.5, -1.0}, 2, 0.2), c, Tensor2::from_rows({{1.5, 2.0}}),
                            Tensor2::from_rows({{10.0}}), Loss::MAE);
    EXPECT_EQ(g.layers[0].weights.data, (std::vector<double>{-1.5, -2.0}));
    EXPECT_EQ(g.layers[0].bias[0], -1.0);
}

TEST(Backward, ShapeMismatchThrows) {
    EXPECT_THROW(backward(single_layer({2.0}, 1, 1.0), linear_1x1(), Tensor2(2, 1), Tensor2(3, 1), Loss::MAE),
                 ShapeError);
}

TEST(GradCheck, TanhMaeNetwork) {
    Rng rng(5);
    MlpConfig c{{3, 5, 1}, HiddenActivation::Tanh, OutputActivation::Identity, 11};
    auto p = init_mlp(c);
    for (auto& l : p.layers)
        for (auto& b : l.bias) b = uniform_real(rng, -0.2, 0.2);
    Tensor2 X(8, 3), Y(8, 1);
    for (auto& v : X.data) v = uniform_real(rng, -1, 1);
    for (auto& v : Y.data) v = uniform_real(rng, 3, 4);  // residuals far from zero
    EXPECT_LT(grad_check(p, c, X, Y, Loss::MAE, 1e-5), 1e-4);
}

TEST(GradCheck, ReluSigmoidBceAwayFromKinks) {
    Rng rng(9);
    for (int trial = 0; trial < 5; ++trial) {
        const auto d = selftest::draw_gradient_case(rng, HiddenActivation::ReLU, Loss::BCE);
        EXPECT_LT(grad_check(d.params, d.config, d.X, d.Y, Loss::BCE, 1e-5), 1e-4);
    }
}

TEST(GradCheck, ZeroNetworkAtPerfectFit) {
    MlpConfig c{{2, 3, 1}, HiddenActivation::Tanh, OutputActivation::Identity, 0};
    MlpParams p = init_mlp(c);
    p.for_each([](double& v) { v = 0.0; });
    EXPECT_EQ(grad_check(p, c, Tensor2(4, 2, 0.3), Tensor2(4, 1, 0.0), Loss::MAE, 1e-5), 0.0);
}

Tensor2 line_inputs(std::size_t n) {
    Tensor2 X(n, 1);
    for (std::size_t i = 0; i < n; ++i) X.data[i] = double(i) / double(n - 1);
    return X;
}

TEST(Train, ZeroEpochsReturnsInputUnchanged) {
    MlpConfig c{{1, 16, 1}, HiddenActivation::ReLU, OutputActivation::Identity, 4};
    const auto p0 = init_mlp(c);
    TrainConfig tc;
    tc.epochs = 0;
    const auto X = line_inputs(20);
    const auto r = train(p0, c, X, Tensor2(20, 1, 1.0), Loss::MAE, tc);
    EXPECT_EQ(r.params, p0);
    EXPECT_TRUE(r.loss_history.empty());
}

TEST(Train, ZeroLearningRateScaleFreezesParameters) {
    MlpConfig c{{1, 16, 1}, HiddenActivation::ReLU, OutputActivation::Identity, 4};
    const auto p0 = init_mlp(c);
    for (auto opt : {std::variant<Sgd, Adam>{Sgd{}}, std::variant<Sgd, Adam>{Adam{}}}) {
        TrainConfig tc;
        tc.epochs = 5;
        tc.lr_scale = 0.0;
        tc.optimizer = opt;
        const auto r = train(p0, c, line_inputs(20), Tensor2(20, 1, 1.0), Loss::MAE, tc);
        EXPECT_EQ(r.params, p0);
    }
}

TEST(Train, FitsAStraightLine) {
    MlpConfig c{{1, 16, 1}, HiddenActivation::ReLU, OutputActivation::Identity, 21};
    const auto X = line_inputs(200);
    Tensor2 Y(200, 1);
    for (std::size_t i = 0; i < 200; ++i) Y.data[i] = 2.0 * X.data[i] + 1.0;
    TrainConfig tc;
    tc.epochs = 500;
    tc.seed = 3;
    const auto r = train(init_mlp(c), c, X, Y, Loss::MAE, tc);
    EXPECT_LT(mae_loss(forward(r.params, c, X), Y), 0.05);
    EXPECT_EQ(r.loss_history.size(), 500u);
    EXPECT_LT(r.loss_history.back(), r.loss_history.front());
}

TEST(Train, DeterministicGivenSeeds) {
    MlpConfig c{{1, 8, 1}, HiddenActivation::Tanh, OutputActivation::Identity, 2};
    const auto X = line_inputs(50);
    Tensor2 Y(50, 1);
    for (std::size_t i = 0; i < 50; ++i) Y.data[i] = std::sin(3.0 * X.data[i]);
    TrainConfig tc;
    tc.epochs = 40;
    tc.minibatch_size = 7;
    tc.seed = 99;
    const auto a = train(init_mlp(c), c, X, Y, Loss::MAE, tc);
    const auto b = train(init_mlp(c), c, X, Y, Loss::MAE, tc);
    EXPECT_EQ(a.loss_history, b.loss_history);
    EXPECT_EQ(a.params, b.params);
}

TEST(Train, TeacherLearnsSeparableLabels) {
    MlpConfig c{{1, 8, 1}, HiddenActivation::ReLU, OutputActivation::Sigmoid, 1};
    const auto X = line_inputs(100);
    Tensor2 Y(100, 1);
    for (std::size_t i = 0; i < 100; ++i) Y.data[i] = X.data[i] > 0.6 ? 1.0 : 0.0;
    TrainConfig tc;
    tc.epochs = 300;
    tc.learning_rate = 1e-2;
    const auto r = train(init_mlp(c), c, X, Y, tc);
    const auto p = forward(r.params, c, X);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < 100; ++i) correct += (p.data[i] >= 0.5) == (Y.data[i] == 1.0);
    EXPECT_GE(correct, 95u);
}

TEST(Train, RejectsEmptyDataAndBadConfig) {
    MlpConfig c{{1, 4, 1}, HiddenActivation::ReLU, OutputActivation::Identity, 0};
    EXPECT_THROW(train(init_mlp(c), c, Tensor2(0, 1), Tensor2(0, 1), Loss::MAE, {}), DataError);
    TrainConfig bad;
    bad.learning_rate = 0.0;
    EXPECT_THROW(train(init_mlp(c), c, line_inputs(5), Tensor2(5, 1), Loss::MAE, bad), ConfigError);
    bad = {};
    bad.minibatch_size = 0;
    EXPECT_THROW(train(init_mlp(c), c, line_inputs(5), Tensor2(5, 1), Loss::MAE, bad), ConfigError);
}

}  // namespace
