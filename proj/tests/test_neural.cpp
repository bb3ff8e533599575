#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "auscult/error.hpp"
#include "auscult/neural.hpp"

using namespace auscult;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = u(rng);
    return m;
}

// Targets that suit the output: one-hot rows for softmax, values in (0,1) otherwise.
Matrix targets(Activation out, Eigen::Index n, Eigen::Index k, std::uint64_t seed) {
    if (out == Activation::Softmax) {
        Matrix y = Matrix::Zero(n, k);
        for (Eigen::Index i = 0; i < n; ++i) y(i, i % k) = 1.0;
        return y;
    }
    return random_matrix(n, k, seed, 0.05, 0.95);
}

struct Combo {
    Activation hidden;
    Activation output;
    Loss loss;
};

void expect_close(double analytic, double numeric, const std::string& what) {
    const double scale = std::max(std::abs(analytic), std::abs(numeric));
    EXPECT_LE(std::abs(analytic - numeric), 1e-7 + 1e-4 * scale) << what << " analytic=" << analytic
                                                                   << " numeric=" << numeric;
}

}  // namespace

TEST(Neural, GradientMatchesFiniteDifferences) {
    const Activation hiddens[] = {Activation::Relu, Activation::Logistic, Activation::Tanh, Activation::Identity};
    const Combo heads[] = {{Activation::Relu, Activation::Softmax, Loss::CrossEntropy},
                           {Activation::Relu, Activation::Logistic, Loss::CrossEntropy},
                           {Activation::Relu, Activation::Softmax, Loss::Mse},
                           {Activation::Relu, Activation::Logistic, Loss::Mse},
                           {Activation::Relu, Activation::Identity, Loss::Mse},
                           {Activation::Relu, Activation::Tanh, Loss::Mse}};
    const double h = 1e-5;
    int combos = 0;
    for (auto hid : hiddens) {
        for (auto head : heads) {
            NetworkSpec spec;
            spec.layer_sizes = {3, 5, 4, 3};
            spec.hidden_activation = hid;
            spec.output_activation = head.output;
            spec.loss = head.loss;
            spec.seed = 11;
            spec.linear_layer = combos % 2 ? 2 : -1;
            Network net = init_network(spec);
            for (auto& b : net.biases) b = random_matrix(b.size(), 1, 99, -0.3, 0.3);
            const Matrix x = random_matrix(6, 3, 5);
            const Matrix y = targets(head.output, 6, 3, 6);
            const Gradients g = backward(net, x, y);
            const std::string tag = std::string(to_string(hid)) + "/" + std::string(to_string(head.output)) + "/" +
                                    std::string(to_string(head.loss));
            for (std::size_t l = 0; l < net.weights.size(); ++l) {
                for (Eigen::Index i = 0; i < net.weights[l].size(); ++i) {
                    Network p = net, m = net;
                    p.weights[l].data()[i] += h;
                    m.weights[l].data()[i] -= h;
                    const double num = (p.loss(x, y) - m.loss(x, y)) / (2 * h);
                    expect_close(g.weights[l].data()[i], num, tag + " W" + std::to_string(l));
                }
                for (Eigen::Index i = 0; i < net.biases[l].size(); ++i) {
                    Network p = net, m = net;
                    p.biases[l](i) += h;
                    m.biases[l](i) -= h;
                    const double num = (p.loss(x, y) - m.loss(x, y)) / (2 * h);
                    expect_close(g.biases[l](i), num, tag + " b" + std::to_string(l));
                }
            }
            ++combos;
        }
    }
    EXPECT_EQ(combos, 24);
}

TEST(Neural, UninformativeTwoClassSoftmaxLossIsLn2) {
    NetworkSpec spec;
    spec.layer_sizes = {4, 6, 2};
    Network net = init_network(spec);
    net.weights.back().setZero();
    const Matrix x = random_matrix(10, 4, 3);
    Matrix y = Matrix::Zero(10, 2);
    for (int i = 0; i < 10; ++i) y(i, i % 2) = 1.0;
    EXPECT_NEAR(net.loss(x, y), std::log(2.0), 1e-12);
}

TEST(Neural, InitShapesAndGlorotBounds) {
    NetworkSpec spec;
    spec.layer_sizes = {7, 5, 3};
    spec.seed = 42;
    const Network a = init_network(spec);
    ASSERT_EQ(a.weights.size(), 2u);
    EXPECT_EQ(a.weights[0].rows(), 5);
    EXPECT_EQ(a.weights[0].cols(), 7);
    EXPECT_EQ(a.weights[1].rows(), 3);
    EXPECT_EQ(a.weights[1].cols(), 5);
    for (std::size_t l = 0; l < 2; ++l) {
        const double limit = std::sqrt(6.0 / double(a.weights[l].rows() + a.weights[l].cols()));
        EXPECT_LE(a.weights[l].cwiseAbs().maxCoeff(), limit);
        EXPECT_EQ(a.biases[l].size(), a.weights[l].rows());
        EXPECT_EQ(a.biases[l].cwiseAbs().maxCoeff(), 0.0);
    }
    const Network b = init_network(spec);
    EXPECT_EQ(a.weights[0], b.weights[0]);
    spec.seed = 43;
    EXPECT_NE(a.weights[0], init_network(spec).weights[0]);
}

namespace {

void blobs(std::size_t n, std::uint64_t seed, Matrix& x, Matrix& y) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 0.5);
    x.resize(static_cast<Eigen::Index>(n), 2);
    y = Matrix::Zero(static_cast<Eigen::Index>(n), 2);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const int c = static_cast<int>(i % 2);
        x(i, 0) = (c ? 1.5 : -1.5) + g(rng);
        x(i, 1) = (c ? -1.0 : 1.0) + g(rng);
        y(i, c) = 1.0;
    }
}

double accuracy(const Network& net, const Matrix& x, const Matrix& y) {
    const Matrix p = net.forward(x);
    int ok = 0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) ok += (p(i, 1) > p(i, 0)) == (y(i, 1) > 0.5);
    return double(ok) / double(x.rows());
}

}  // namespace

TEST(Neural, LearnsSeparableBlobs) {
    Matrix x, y, xt, yt;
    blobs(200, 1, x, y);
    blobs(400, 2, xt, yt);
    NetworkSpec spec;
    spec.layer_sizes = {2, 16, 2};
    spec.learning_rate = 0.05;
    spec.epochs = 40;
    spec.seed = 7;
    const Network net = train(init_network(spec), x, y);
    EXPECT_GE(accuracy(net, xt, yt), 0.95);
    ASSERT_EQ(net.training_curve.size(), 40u);
    EXPECT_LT(net.training_curve.back(), net.training_curve.front());
}

TEST(Neural, TrainingIgnoresRowOrder) {
    Matrix x, y;
    blobs(64, 3, x, y);
    std::vector<Eigen::Index> perm(64);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), std::mt19937_64(9));
    Matrix xp(64, 2), yp(64, 2);
    for (Eigen::Index i = 0; i < 64; ++i) {
        xp.row(i) = x.row(perm[static_cast<std::size_t>(i)]);
        yp.row(i) = y.row(perm[static_cast<std::size_t>(i)]);
    }
    NetworkSpec spec;
    spec.layer_sizes = {2, 8, 2};
    spec.epochs = 5;
    spec.learning_rate = 0.05;
    const Network a = train(init_network(spec), x, y);
    const Network b = train(init_network(spec), xp, yp);
    for (std::size_t l = 0; l < a.weights.size(); ++l) EXPECT_EQ(a.weights[l], b.weights[l]);
}

TEST(Neural, ClippingBoundsUpdates) {
    Matrix x, y;
    blobs(32, 4, x, y);
    NetworkSpec spec;
    spec.layer_sizes = {2, 4, 2};
    spec.epochs = 1;
    spec.batch = 32;
    spec.learning_rate = 1.0;
    spec.clip_norm = 1e-3;
    const Network start = init_network(spec);
    const Network end = train(start, x, y);
    double step = 0.0;
    for (std::size_t l = 0; l < start.weights.size(); ++l) {
        step += (end.weights[l] - start.weights[l]).squaredNorm() + (end.biases[l] - start.biases[l]).squaredNorm();
    }
    EXPECT_LE(std::sqrt(step), 1e-3 * (1 + 1e-9));
}

TEST(Neural, DivergenceIsReported) {
    Matrix x = random_matrix(16, 3, 1, -10, 10);
    Matrix y = random_matrix(16, 2, 2, -10, 10);
    NetworkSpec spec;
    spec.layer_sizes = {3, 8, 2};
    spec.hidden_activation = Activation::Identity;
    spec.output_activation = Activation::Identity;
    spec.loss = Loss::Mse;
    spec.learning_rate = 1e3;
    spec.epochs = 100;
    EXPECT_THROW(train(init_network(spec), x, y), DivergenceError);
}

TEST(Neural, InvalidSpecsRejected) {
    NetworkSpec s;
    s.layer_sizes = {3, 2};
    s.output_activation = Activation::Identity;  // CE needs a probability output
    EXPECT_THROW(s.validate(), ConfigError);
    s.output_activation = Activation::Softmax;
    s.hidden_activation = Activation::Softmax;
    s.layer_sizes = {3, 4, 2};
    EXPECT_THROW(s.validate(), ConfigError);
    EXPECT_THROW(parse_activation("gelu"), ConfigError);
}

TEST(Neural, JsonRoundTripIsExact) {
    Matrix x, y;
    blobs(32, 5, x, y);
    NetworkSpec spec;
    spec.layer_sizes = {2, 5, 3, 2};
    spec.hidden_activation = Activation::Tanh;
    spec.epochs = 3;
    const Network a = train(init_network(spec), x, y);
    const Network b = network_from_json(nlohmann::json::parse(to_json(a).dump()));
    EXPECT_EQ(a.forward(x), b.forward(x));
    EXPECT_EQ(b.spec.hidden_activation, Activation::Tanh);
    EXPECT_EQ(a.training_curve, b.training_curve);
}
