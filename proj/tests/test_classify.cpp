#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "auscult/classify.hpp"
#include "auscult/error.hpp"

using namespace auscult;

namespace {

constexpr Label C = Label::Crackle;
constexpr Label N = Label::NoCrackle;

// Two Gaussian clouds; class alternates by row.
void blobs(std::size_t n, std::size_t d, double sep, std::uint64_t seed, Rows& x, Labels& y) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    x.assign(n, std::vector<double>(d));
    y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = i % 2 ? C : N;
        for (std::size_t j = 0; j < d; ++j) x[i][j] = g(rng) + (i % 2 ? sep / 2 : -sep / 2);
    }
}

double accuracy(const Classifier& c, const Rows& x, const Labels& y) {
    const auto p = c.predict(x);
    std::size_t ok = 0;
    for (std::size_t i = 0; i < y.size(); ++i) ok += p[i] == y[i];
    return double(ok) / double(y.size());
}

ClassifierSpec spec_of(ClassifierKind k, const nlohmann::json& params = nlohmann::json::object(), std::uint64_t seed = 0) {
    auto s = spec_from_params(k, params);
    s.seed = seed;
    return s;
}

}  // namespace

// ---- k-NN -----------------------------------------------------------------

TEST(Knn, KdTreeMatchesBruteForce) {
    // Integer coordinates make exact distance ties common, which exercises the
    // (distance, index) ordering.
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> u(0, 6);
    Rows train(300, std::vector<double>(4));
    Labels labels(300);
    for (std::size_t i = 0; i < train.size(); ++i) {
        for (auto& v : train[i]) v = u(rng);
        labels[i] = u(rng) % 2 ? C : N;
    }
    Rows queries(200, std::vector<double>(4));
    for (auto& q : queries)
        for (auto& v : q) v = u(rng) + 0.5 * (u(rng) % 2);

    for (double p : {1.0, 2.0, 3.0}) {
        for (int k : {1, 3, 5}) {
            for (int leaf : {1, 5, 40}) {
                const KnnClassifier knn(spec_of(ClassifierKind::Knn, {{"n_neighbors", k}, {"p", p}, {"leaf_size", leaf}}),
                                        train, labels);
                for (const auto& q : queries) {
                    std::vector<std::pair<double, std::size_t>> all;
                    for (std::size_t i = 0; i < train.size(); ++i) {
                        double s = 0;
                        for (std::size_t j = 0; j < 4; ++j) s += std::pow(std::abs(q[j] - train[i][j]), p);
                        all.emplace_back(s, i);
                    }
                    std::sort(all.begin(), all.end());
                    std::vector<std::size_t> want;
                    for (int i = 0; i < k; ++i) want.push_back(all[static_cast<std::size_t>(i)].second);
                    ASSERT_EQ(knn.neighbours(q), want) << "p=" << p << " k=" << k << " leaf=" << leaf;
                }
            }
        }
    }
}

TEST(Knn, TwoNeighbourTieGoesToNearest) {
    const Rows x = {{0.0}, {2.0}};
    const Labels y = {C, N};
    const KnnClassifier knn(spec_of(ClassifierKind::Knn, {{"n_neighbors", 2}}), x, y);
    EXPECT_EQ(knn.predict(std::vector<double>{0.9}), C);
    EXPECT_EQ(knn.predict(std::vector<double>{1.1}), N);
    // Equidistant: the lower row index is the nearer neighbour.
    EXPECT_EQ(knn.predict(std::vector<double>{1.0}), C);
}

TEST(Knn, RejectsTooFewRowsAndWrongWidth) {
    EXPECT_THROW(fit_classifier(spec_of(ClassifierKind::Knn, {{"n_neighbors", 3}}), {{0.0}, {1.0}}, {C, N}),
                 ConfigError);
    const KnnClassifier knn(spec_of(ClassifierKind::Knn), {{0.0, 1.0}}, {C});
    EXPECT_THROW(knn.predict(std::vector<double>{1.0}), ConfigError);
}

// ---- random forest ----------------------------------------------------------

TEST(Forest, SplitsAtMidpointAndFitsSeparableData) {
    const Rows x = {{0.0}, {0.0}, {1.0}, {1.0}};
    const Labels y = {N, N, C, C};
    // One feature and a single tree: the root split must be the midpoint whenever
    // the bootstrap drew both values.
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const ForestClassifier f(spec_of(ClassifierKind::Rf, {{"n_estimators", 1}, {"max_depth", 3}}, seed), x, y);
        const auto& root = f.trees()[0][0];
        if (root.feature >= 0) EXPECT_DOUBLE_EQ(root.threshold, 0.5);
    }
    Rows bx;
    Labels by;
    blobs(300, 4, 6.0, 2, bx, by);
    const ForestClassifier f(spec_of(ClassifierKind::Rf, {{"n_estimators", 25}}, 1), bx, by);
    Rows tx;
    Labels ty;
    blobs(300, 4, 6.0, 3, tx, ty);
    EXPECT_GE(accuracy(f, tx, ty), 0.97);
}

TEST(Forest, DepthCapAndDeterminism) {
    Rows x;
    Labels y;
    blobs(200, 5, 1.0, 4, x, y);
    const auto sp = spec_of(ClassifierKind::Rf, {{"n_estimators", 10}, {"max_depth", 2}}, 9);
    const ForestClassifier a(sp, x, y), b(sp, x, y);
    for (const auto& t : a.trees()) EXPECT_LE(t.size(), 7u);  // depth 2 => at most 1 + 2 + 4 nodes
    EXPECT_EQ(a.to_json(), b.to_json());
    const ForestClassifier c(spec_of(ClassifierKind::Rf, {{"n_estimators", 10}, {"max_depth", 2}}, 10), x, y);
    EXPECT_NE(a.to_json(), c.to_json());
}

TEST(Forest, VoteTieGoesToNoCrackle) {
    ForestClassifier::Node leaf_c, leaf_n;
    leaf_c.label = C;
    leaf_n.label = N;
    const ForestClassifier f(spec_of(ClassifierKind::Rf, {{"n_estimators", 2}}), {{leaf_c}, {leaf_n}});
    EXPECT_EQ(f.predict(std::vector<double>{0.0}), N);
}

// ---- SVM --------------------------------------------------------------------

TEST(Svm, TwoPointsHardMargin) {
    // Symmetric pair, gamma = 1: alpha1 = alpha2 = a, b = 0 and f(x+) = a (1 - e^-1) = 1.
    const SvmClassifier s(spec_of(ClassifierKind::Svm, {{"C", 10.0}, {"gamma", 1.0}}), {{0.0, 0.0}, {1.0, 0.0}}, {N, C});
    const double a = 1.0 / (1.0 - std::exp(-1.0));
    EXPECT_NEAR(s.alphas()[0], a, 1e-6);
    EXPECT_NEAR(s.alphas()[1], a, 1e-6);
    EXPECT_NEAR(s.bias(), 0.0, 1e-6);
    EXPECT_NEAR(s.decision(std::vector<double>{1.0, 0.0}), 1.0, 1e-6);
    EXPECT_NEAR(s.decision(std::vector<double>{0.0, 0.0}), -1.0, 1e-6);
    EXPECT_NEAR(s.decision(std::vector<double>{0.5, 0.0}), 0.0, 1e-6);
    EXPECT_TRUE(s.converged());
}

TEST(Svm, SolvesXor) {
    const Rows x = {{0, 0}, {1, 1}, {0, 1}, {1, 0}};
    const Labels y = {N, N, C, C};
    const SvmClassifier s(spec_of(ClassifierKind::Svm, {{"C", 10.0}, {"gamma", 1.0}}), x, y);
    EXPECT_EQ(s.predict(x), y);
}

TEST(Svm, DualFeasibilityAndKkt) {
    Rows x;
    Labels y;
    blobs(300, 3, 1.5, 5, x, y);
    const double Cv = 1.0;
    const auto sp = spec_of(ClassifierKind::Svm, {{"C", Cv}, {"gamma", 0.5}, {"max_passes", 50}}, 3);
    const SvmClassifier s(sp, x, y);
    double balance = 0.0;
    std::size_t ok = 0;
    const double tol = 2 * sp.svm.tolerance;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double a = s.alphas()[i];
        const double yi = y[i] == C ? 1.0 : -1.0;
        EXPECT_GE(a, 0.0);
        EXPECT_LE(a, Cv);
        balance += a * yi;
        const double m = yi * s.decision(x[i]);
        if (a == 0.0) {
            ok += m >= 1 - tol;
        } else if (a == Cv) {
            ok += m <= 1 + tol;
        } else {
            ok += std::abs(m - 1) <= tol;
        }
    }
    EXPECT_NEAR(balance, 0.0, 1e-8);
    EXPECT_GE(double(ok) / double(x.size()), 0.99);
    EXPECT_TRUE(s.converged());
    EXPECT_TRUE(s.warnings().empty());
}

TEST(Svm, PassCapIsReported) {
    Rows x;
    Labels y;
    blobs(200, 3, 0.5, 6, x, y);
    const SvmClassifier s(spec_of(ClassifierKind::Svm, {{"max_passes", 1}}), x, y);
    EXPECT_FALSE(s.converged());
    ASSERT_EQ(s.warnings().size(), 1u);
}

TEST(Svm, OneClassIsRejected) {
    EXPECT_THROW(fit_classifier(spec_of(ClassifierKind::Svm), {{0.0}, {1.0}}, {C, C}), DataError);
}

// ---- k-means ----------------------------------------------------------------

TEST(Kmeans, RecoversBlobCentres) {
    const std::vector<std::vector<double>> centres = {{0, 0}, {10, 0}, {0, 10}};
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g(0.0, 0.5);
    Rows x;
    Labels y;
    for (int i = 0; i < 150; ++i) {
        const auto& c = centres[static_cast<std::size_t>(i % 3)];
        x.push_back({c[0] + g(rng), c[1] + g(rng)});
        y.push_back(i % 3 == 1 ? C : N);
    }
    const KmeansClassifier km(spec_of(ClassifierKind::Kmeans, {{"k", 3}}, 1), x, y);
    for (const auto& c : centres) {
        double best = 1e9;
        for (const auto& m : km.centroids()) best = std::min(best, std::hypot(m[0] - c[0], m[1] - c[1]));
        EXPECT_LT(best, 0.3);
    }
    EXPECT_EQ(km.predict(std::vector<double>{10, 0}), C);
    EXPECT_EQ(km.predict(std::vector<double>{0, 10}), N);
    const auto& h = km.inertia_history();
    for (std::size_t i = 1; i < h.size(); ++i) EXPECT_LE(h[i], h[i - 1] + 1e-9);
    EXPECT_DOUBLE_EQ(km.inertia(), h.back());
}

TEST(Kmeans, KEqualsNGivesZeroInertia) {
    const Rows x = {{0, 0}, {1, 5}, {3, 2}, {7, 7}, {2, 9}};
    const KmeansClassifier km(spec_of(ClassifierKind::Kmeans, {{"k", 5}}, 4), x, {C, N, C, N, C});
    EXPECT_DOUBLE_EQ(km.inertia(), 0.0);
    EXPECT_EQ(km.predict(x), (Labels{C, N, C, N, C}));
    EXPECT_THROW(fit_classifier(spec_of(ClassifierKind::Kmeans, {{"k", 6}}), x, {C, N, C, N, C}), ConfigError);
}

TEST(Kmeans, MonotoneInertiaOnUnstructuredData) {
    Rows x;
    Labels y;
    blobs(400, 6, 0.0, 8, x, y);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const KmeansClassifier km(spec_of(ClassifierKind::Kmeans, {{"k", 8}, {"n_init", 1}}, seed), x, y);
        const auto& h = km.inertia_history();
        ASSERT_GE(h.size(), 2u);
        for (std::size_t i = 1; i < h.size(); ++i) EXPECT_LE(h[i], h[i - 1] * (1 + 1e-12));
    }
}

// ---- SOM --------------------------------------------------------------------

TEST(Som, SingleNodeTakesMajorityLabel) {
    const Rows x = {{0.0}, {0.2}, {0.4}, {1.0}};
    const SomClassifier s(spec_of(ClassifierKind::Som, {{"rows", 1}, {"cols", 1}}, 2), x, {C, C, N, C});
    EXPECT_GE(s.codebook()[0][0], 0.0);
    EXPECT_LE(s.codebook()[0][0], 1.0);
    EXPECT_EQ(s.predict(std::vector<double>{5.0}), C);
    const SomClassifier t(spec_of(ClassifierKind::Som, {{"rows", 1}, {"cols", 1}}, 2), x, {C, C, N, N});
    EXPECT_EQ(t.predict(std::vector<double>{5.0}), N);
}

TEST(Som, TwoNodesSeparateTwoClusters) {
    Rows x;
    Labels y;
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(0.0, 0.1);
    for (int i = 0; i < 60; ++i) {
        x.push_back({(i % 2 ? 5.0 : 0.0) + g(rng), g(rng)});
        y.push_back(i % 2 ? C : N);
    }
    const SomClassifier s(spec_of(ClassifierKind::Som, {{"rows", 2}, {"cols", 1}, {"epochs", 50}}, 5), x, y);
    EXPECT_NE(s.bmu(std::vector<double>{0, 0}), s.bmu(std::vector<double>{5, 0}));
    EXPECT_EQ(s.predict(std::vector<double>{0, 0}), N);
    EXPECT_EQ(s.predict(std::vector<double>{5, 0}), C);
}

TEST(Som, ScheduleDecays) {
    SomParams p;
    EXPECT_DOUBLE_EQ(SomClassifier::learning_rate_at(p, 0, 100), 0.5);
    EXPECT_DOUBLE_EQ(SomClassifier::radius_at(p, 0, 100), 4.0);  // half of the 8x8 grid
    EXPECT_NEAR(SomClassifier::learning_rate_at(p, 100, 100), 0.5 * std::exp(-3.0), 1e-15);
    for (int t = 1; t <= 100; ++t) {
        EXPECT_LT(SomClassifier::learning_rate_at(p, t, 100), SomClassifier::learning_rate_at(p, t - 1, 100));
        EXPECT_LT(SomClassifier::radius_at(p, t, 100), SomClassifier::radius_at(p, t - 1, 100));
    }
}

TEST(Som, EveryNodeGetsALabel) {
    Rows x;
    Labels y;
    blobs(40, 2, 4.0, 9, x, y);
    const SomClassifier s(spec_of(ClassifierKind::Som, {{"epochs", 5}}, 1), x, y);
    EXPECT_EQ(s.node_labels().size(), 64u);
    EXPECT_GE(accuracy(s, x, y), 0.9);
}

// ---- MLP --------------------------------------------------------------------

TEST(Mlp, LearnsBlobs) {
    Rows x, tx;
    Labels y, ty;
    blobs(200, 3, 4.0, 10, x, y);
    blobs(200, 3, 4.0, 11, tx, ty);
    const MlpClassifier m(spec_of(ClassifierKind::Mlp, {{"hidden", {16}}, {"epochs", 30}}, 1), x, y);
    EXPECT_GE(accuracy(m, tx, ty), 0.95);
    const auto p = m.probabilities(tx[0]);
    EXPECT_NEAR(p[0] + p[1], 1.0, 1e-12);
}

// ---- specs, grids, serialization -------------------------------------------

TEST(Spec, GridExpansionOrder) {
    const auto g = expand_grid(ClassifierKind::Knn, {{"n_neighbors", {1, 2}}, {"p", {1, 2}}});
    ASSERT_EQ(g.size(), 4u);
    EXPECT_EQ(g[0].describe(), "knn(leaf_size=1,n_neighbors=1,p=1)");
    EXPECT_EQ(g[1].describe(), "knn(leaf_size=1,n_neighbors=1,p=2)");
    EXPECT_EQ(g[2].describe(), "knn(leaf_size=1,n_neighbors=2,p=1)");
    EXPECT_EQ(g[3].describe(), "knn(leaf_size=1,n_neighbors=2,p=2)");
    const auto h = expand_grid(ClassifierKind::Mlp, {{"hidden", {{1000, 500}, {1000, 500, 250}}}});
    ASSERT_EQ(h.size(), 2u);
    EXPECT_EQ(h[1].mlp.hidden, (std::vector<int>{1000, 500, 250}));
    EXPECT_EQ(expand_grid(ClassifierKind::Mlp, {{"hidden", {64, 32}}}).size(), 1u);
    EXPECT_THROW(spec_from_params(ClassifierKind::Svm, {{"kernel", "linear"}}), ConfigError);
    EXPECT_THROW(spec_from_params(ClassifierKind::Knn, {{"n_neighbors", 0}}), ConfigError);
    EXPECT_THROW(parse_classifier("xgboost"), ConfigError);
}

TEST(Serialization, AllKindsRoundTrip) {
    Rows x, tx;
    Labels y, ty;
    blobs(80, 3, 2.0, 12, x, y);
    blobs(50, 3, 2.0, 13, tx, ty);
    const std::vector<ClassifierSpec> specs = {
        spec_of(ClassifierKind::Knn, {{"n_neighbors", 3}}),
        spec_of(ClassifierKind::Rf, {{"n_estimators", 5}}, 2),
        spec_of(ClassifierKind::Svm, {}, 3),
        spec_of(ClassifierKind::Mlp, {{"hidden", {8}}, {"epochs", 5}}, 4),
        spec_of(ClassifierKind::Kmeans, {{"k", 4}}, 5),
        spec_of(ClassifierKind::Som, {{"rows", 3}, {"cols", 3}, {"epochs", 3}}, 6)};
    for (const auto& sp : specs) {
        const auto model = fit_classifier(sp, x, y);
        const auto text = model->to_json().dump();
        const auto back = classifier_from_json(nlohmann::json::parse(text));
        EXPECT_EQ(back->predict(tx), model->predict(tx)) << sp.describe();
        EXPECT_EQ(back->to_json().dump(), text) << sp.describe();
        EXPECT_EQ(back->spec().seed, sp.seed);
    }
    auto j = fit_classifier(specs[0], x, y)->to_json();
    j["version"] = 99;
    EXPECT_THROW(classifier_from_json(j), DataError);
    EXPECT_THROW(classifier_from_json(nlohmann::json::object()), DataError);
}

TEST(Determinism, SameSeedSameModel) {
    Rows x;
    Labels y;
    blobs(60, 3, 1.0, 14, x, y);
    for (auto kind : {ClassifierKind::Rf, ClassifierKind::Svm, ClassifierKind::Mlp, ClassifierKind::Kmeans,
                      ClassifierKind::Som}) {
        nlohmann::json params = nlohmann::json::object();
        if (kind == ClassifierKind::Mlp) params = {{"hidden", {8}}, {"epochs", 3}};
        if (kind == ClassifierKind::Rf) params = {{"n_estimators", 5}};
        const auto sp = spec_of(kind, params, 77);
        EXPECT_EQ(fit_classifier(sp, x, y)->to_json(), fit_classifier(sp, x, y)->to_json()) << sp.describe();
    }
}
