#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "auscult/error.hpp"
#include "auscult/eval.hpp"

using namespace auscult;

namespace {

Labels to_labels(const std::vector<int>& v) {
    Labels l;
    for (int x : v) l.push_back(x ? Label::Crackle : Label::NoCrackle);
    return l;
}

// Two Gaussian blobs; `n1` crackle rows centred at +sep, the rest at 0.
FeatureMatrix blobs(std::size_t n0, std::size_t n1, std::size_t d, double sep, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 0.3);
    FeatureMatrix m;
    for (std::size_t j = 0; j < d; ++j) m.feature_names.push_back("f" + std::to_string(j));
    for (std::size_t i = 0; i < n0 + n1; ++i) {
        const bool c = i >= n0;
        std::vector<double> r(d);
        for (auto& v : r) v = (c ? sep : 0.0) + g(rng);
        m.rows.push_back(r);
        m.labels.push_back(c ? Label::Crackle : Label::NoCrackle);
        char id[16];
        std::snprintf(id, sizeof id, "c%04zu", i);
        m.cycle_ids.push_back(id);
        m.groups.push_back("p" + std::to_string(i % 17));
    }
    return m;
}

ClassifierSpec knn(int k) {
    ClassifierSpec s;
    s.knn.n_neighbors = k;
    return s;
}

nlohmann::json without_timing(nlohmann::json j) {
    for (auto& c : j["cells"]) c.erase("wall_time_s");
    return j;
}

}  // namespace

TEST(Metrics, WorkedExample) {
    // tp=2 fp=1 fn=1 tn=6
    const auto truth = to_labels({1, 1, 1, 0, 0, 0, 0, 0, 0, 0});
    const auto pred = to_labels({1, 1, 0, 1, 0, 0, 0, 0, 0, 0});
    const auto m = compute_metrics(truth, pred);
    EXPECT_EQ(m.confusion.tp, 2u);
    EXPECT_EQ(m.confusion.fp, 1u);
    EXPECT_EQ(m.confusion.fn, 1u);
    EXPECT_EQ(m.confusion.tn, 6u);
    EXPECT_DOUBLE_EQ(m.accuracy, 0.8);
    EXPECT_DOUBLE_EQ(m.precision, 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(m.recall, 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(m.f1, 2.0 / 3.0);
}

TEST(Metrics, MatchesConfusionOracleOnRandomPairs) {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng() % 40;
        std::vector<int> t(n), p(n);
        for (auto& v : t) v = static_cast<int>(rng() % 2);
        for (auto& v : p) v = static_cast<int>(rng() % 2);
        // Oracle: counts as sums of products.
        double tp = 0, fp = 0, fn = 0, tn = 0;
        for (std::size_t i = 0; i < n; ++i) {
            tp += t[i] * p[i];
            fp += (1 - t[i]) * p[i];
            fn += t[i] * (1 - p[i]);
            tn += (1 - t[i]) * (1 - p[i]);
        }
        const double prec = tp + fp > 0 ? tp / (tp + fp) : 0.0;
        const double rec = tp + fn > 0 ? tp / (tp + fn) : 0.0;
        const double f1 = tp > 0 ? 2 * tp / (2 * tp + fp + fn) : 0.0;  // equivalent closed form
        const auto m = compute_metrics(to_labels(t), to_labels(p));
        ASSERT_NEAR(m.accuracy, (tp + tn) / double(n), 1e-12);
        ASSERT_NEAR(m.precision, prec, 1e-12);
        ASSERT_NEAR(m.recall, rec, 1e-12);
        ASSERT_NEAR(m.f1, f1, 1e-12);
        ASSERT_EQ(m.confusion.total(), n);
    }
}

TEST(Metrics, DegenerateAndMismatchedInputs) {
    const auto m = compute_metrics(to_labels({0, 0, 1}), to_labels({0, 0, 0}));
    EXPECT_EQ(m.precision, 0.0);
    EXPECT_EQ(m.recall, 0.0);
    EXPECT_EQ(m.f1, 0.0);
    EXPECT_THROW(compute_metrics(to_labels({0, 1}), to_labels({0})), DataError);
    EXPECT_THROW(compute_metrics({}, {}), DataError);
}

TEST(Metrics, MeanAveragesRatesAndSumsCounts) {
    const auto a = compute_metrics(to_labels({1, 0}), to_labels({1, 0}));
    const auto b = compute_metrics(to_labels({1, 0}), to_labels({0, 0}));
    const auto m = mean_metrics({a, b});
    EXPECT_DOUBLE_EQ(m.accuracy, 0.75);
    EXPECT_DOUBLE_EQ(m.recall, 0.5);
    EXPECT_EQ(m.confusion.total(), 4u);
    const auto back = metrics_from_json(nlohmann::json::parse(to_json(m).dump()));
    EXPECT_EQ(back.accuracy, m.accuracy);
    EXPECT_EQ(back.confusion.fn, m.confusion.fn);
}

TEST(Folds, TenItemsFiveFoldsOneOfEachClassPerFold) {
    std::vector<std::string> ids;
    for (int i = 0; i < 10; ++i) ids.push_back("id" + std::to_string(i));
    const auto labels = to_labels({0, 1, 0, 1, 0, 1, 0, 1, 0, 1});
    const auto f = stratified_kfold(ids, labels, 5, 3);
    std::map<int, std::pair<int, int>> per;
    for (std::size_t i = 0; i < 10; ++i) (labels[i] == Label::Crackle ? per[f[i]].second : per[f[i]].first)++;
    ASSERT_EQ(per.size(), 5u);
    for (const auto& [fold, c] : per) {
        EXPECT_EQ(c.first, 1) << fold;
        EXPECT_EQ(c.second, 1) << fold;
    }
}

TEST(Folds, SizesBalancedAndIndependentOfRowOrder) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const int k = 2 + static_cast<int>(rng() % 6);
        const std::size_t n0 = k + rng() % 60, n1 = k + rng() % 60;
        std::vector<std::string> ids;
        Labels labels;
        for (std::size_t i = 0; i < n0 + n1; ++i) {
            ids.push_back("r" + std::to_string(i));
            labels.push_back(i < n0 ? Label::NoCrackle : Label::Crackle);
        }
        const auto f = stratified_kfold(ids, labels, k, trial);
        std::vector<std::size_t> size(k), c1(k);
        for (std::size_t i = 0; i < f.size(); ++i) {
            ++size[f[i]];
            c1[f[i]] += labels[i] == Label::Crackle;
        }
        EXPECT_LE(*std::max_element(size.begin(), size.end()) - *std::min_element(size.begin(), size.end()), 1u);
        EXPECT_LE(*std::max_element(c1.begin(), c1.end()) - *std::min_element(c1.begin(), c1.end()), 1u);

        std::vector<std::size_t> perm(ids.size());
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<std::string> pids;
        Labels plabels;
        for (auto i : perm) {
            pids.push_back(ids[i]);
            plabels.push_back(labels[i]);
        }
        const auto pf = stratified_kfold(pids, plabels, k, trial);
        for (std::size_t j = 0; j < perm.size(); ++j) ASSERT_EQ(pf[j], f[perm[j]]);
    }
    EXPECT_THROW(stratified_kfold({"a", "b", "c"}, to_labels({0, 0, 1}), 2, 0), DataError);
    EXPECT_THROW(stratified_kfold({"a"}, to_labels({0}), 1, 0), ConfigError);
}

TEST(Folds, GroupedKeepsPatientsTogether) {
    const auto m = blobs(60, 30, 2, 1.0, 1);
    const auto f = grouped_kfold(m.groups, m.labels, 5, 9);
    std::map<std::string, std::set<int>> seen;
    for (std::size_t i = 0; i < f.size(); ++i) seen[m.groups[i]].insert(f[i]);
    for (const auto& [g, s] : seen) EXPECT_EQ(s.size(), 1u) << g;
    EXPECT_EQ(std::set<int>(f.begin(), f.end()).size(), 5u);
    EXPECT_THROW(grouped_kfold({"a", "a", "b"}, to_labels({0, 1, 0}), 3, 0), DataError);
}

TEST(Grid, TiesGoToTheFirstPointAndDuplicatesChangeNothing) {
    const auto m = blobs(40, 40, 3, 4.0, 2);  // trivially separable: every k scores 1.0
    CvOptions opts;
    const SelectorSpec none{};
    const auto g = grid_search(m, none, {knn(3), knn(1), knn(5)}, opts);
    EXPECT_EQ(g.best, 0u);
    EXPECT_EQ(g.best_spec().knn.n_neighbors, 3);

    const auto m2 = blobs(60, 30, 3, 1.2, 3);
    const std::vector<ClassifierSpec> base = {knn(1), knn(7), knn(15)};
    auto dup = base;
    dup.push_back(knn(7));
    dup.insert(dup.begin(), knn(15));
    const auto a = grid_search(m2, none, base, opts);
    const auto b = grid_search(m2, none, dup, opts);
    EXPECT_EQ(a.best_spec().describe(), b.best_spec().describe());
    EXPECT_EQ(a.best_result().mean.accuracy, b.best_result().mean.accuracy);
}

TEST(Grid, SelectsTheKnownBestSpec) {
    // 100 quiet rows and 20 crackle rows in a tight far cluster: one neighbour is
    // perfect, 41 neighbours always out-vote the ~16 crackle training rows.
    const auto m = blobs(100, 20, 2, 5.0, 4);
    CvOptions opts;
    opts.split_seed = 8;
    const std::vector<ClassifierSpec> grid = {knn(41), knn(1), knn(9)};
    const auto g = grid_search(m, SelectorSpec{}, grid, opts);
    EXPECT_EQ(g.best_spec().knn.n_neighbors, 1);
    EXPECT_DOUBLE_EQ(g.best_result().mean.accuracy, 1.0);

    // Oracle: evaluate every point directly and take the first maximum.
    std::size_t arg = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double acc = cross_validate(m, SelectorSpec{}, grid[i], opts).mean.accuracy;
        EXPECT_DOUBLE_EQ(acc, g.points[i].result->mean.accuracy);
        if (acc > best) best = acc, arg = i;
    }
    EXPECT_EQ(arg, g.best);
    EXPECT_LT(g.points[0].result->mean.accuracy, 0.9);
}

TEST(Grid, FailingPointsAreRecordedAndAllFailingThrows) {
    const auto m = blobs(30, 30, 2, 3.0, 5);
    auto bad = knn(1);
    bad.knn.n_neighbors = 1000;  // more neighbours than training rows
    const auto g = grid_search(m, SelectorSpec{}, {bad, knn(1)}, CvOptions{});
    EXPECT_EQ(g.best, 1u);
    EXPECT_FALSE(g.points[0].result.has_value());
    EXPECT_FALSE(g.points[0].error.empty());
    EXPECT_THROW(grid_search(m, SelectorSpec{}, {bad}, CvOptions{}), Error);
    EXPECT_THROW(grid_search(m, SelectorSpec{}, {}, CvOptions{}), ConfigError);
}

TEST(CrossValidation, TrainingSideIgnoresTestRows) {
    auto m = blobs(50, 50, 4, 1.0, 6);
    // An extreme row: with leakage it would stretch the scaling and move PCA.
    m.rows[7] = {50.0, -40.0, 30.0, 90.0};
    CvOptions opts;
    opts.split_seed = 1;
    opts.model_seed = 2;
    const auto folds = assign_folds(m, opts);
    const int f = folds[7];
    const SelectorSpec pca{SelectorKind::Pca, 2, {}};

    auto drop_row = [](const FeatureMatrix& src, std::vector<int> fl, std::size_t r) {
        std::vector<std::size_t> keep;
        for (std::size_t i = 0; i < src.size(); ++i)
            if (i != r) keep.push_back(i);
        fl.erase(fl.begin() + static_cast<std::ptrdiff_t>(r));
        return std::make_pair(src.subset_rows(keep), fl);
    };

    const auto full = fit_fold(m, folds, f, pca, knn(3), opts);
    for (std::size_t r = 0; r < m.size(); ++r) {
        if (folds[r] != f) continue;
        const auto [mr, fr] = drop_row(m, folds, r);
        EXPECT_EQ(fit_fold(mr, fr, f, pca, knn(3), opts).to_json(), full.to_json()) << "row " << r;
    }

    // The leakage detector works: global scaling does see the test row.
    opts.paper_compat_scaling = true;
    const auto leaky = fit_fold(m, folds, f, pca, knn(3), opts);
    const auto [mr, fr] = drop_row(m, folds, 7);
    EXPECT_NE(fit_fold(mr, fr, f, pca, knn(3), opts).to_json(), leaky.to_json());
}

TEST(CrossValidation, DeterministicAcrossWorkers) {
    const auto m = blobs(60, 40, 3, 1.0, 7);
    CvOptions a;
    a.model_seed = 4;
    CvOptions b = a;
    b.workers = 3;
    ClassifierSpec rf;
    rf.kind = ClassifierKind::Rf;
    rf.rf.n_estimators = 10;
    const auto ra = cross_validate(m, SelectorSpec{}, rf, a);
    const auto rb = cross_validate(m, SelectorSpec{}, rf, b);
    ASSERT_EQ(ra.folds.size(), 5u);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(to_json(ra.folds[i]), to_json(rb.folds[i]));
}

TEST(Pipeline, JsonRoundTripPredictsIdentically) {
    const auto m = blobs(40, 40, 5, 1.0, 8);
    const auto p = fit_pipeline(m, SelectorSpec{SelectorKind::Pca, 3, {}}, knn(3), 0);
    const auto q = pipeline_from_json(nlohmann::json::parse(p.to_json().dump()));
    EXPECT_EQ(p.predict(m.rows), q.predict(m.rows));
    EXPECT_EQ(q.feature_names, m.feature_names);
    auto j = p.to_json();
    j["version"] = 7;
    EXPECT_THROW(pipeline_from_json(j), DataError);
}

namespace {

// Feature sets differ in how informative they are; the EMD matrix is unavailable.
MatrixProvider toy_provider() {
    return [](Decomposition d, FeatureSet f) {
        if (d == Decomposition::Emd) throw DataError("no EMD features in this test");
        const double sep = f == FeatureSet::Full ? 2.0 : f == FeatureSet::Simple ? 0.6 : 1.0;
        return blobs(40, 30, 4, sep, 10 + static_cast<std::uint64_t>(f));
    };
}

}  // namespace

TEST(Matrix, SingleCellHasFiveFolds) {
    const auto r = run_matrix(ExperimentConfig{}, toy_provider());
    ASSERT_EQ(r.cells.size(), 1u);
    EXPECT_EQ(r.cells[0].folds.size(), 5u);
    EXPECT_TRUE(r.cells[0].error.empty());
    EXPECT_EQ(r.cells[0].rows, 70u);
    EXPECT_EQ(r.cells[0].best->describe(), knn(1).describe());
}

TEST(Matrix, OneCellPerCombinationSortedWithFailuresLast) {
    ExperimentConfig cfg;
    cfg.decompositions = {Decomposition::None, Decomposition::Emd};
    cfg.feature_sets = {FeatureSet::Simple, FeatureSet::Full, FeatureSet::HosSpectral};
    cfg.selectors = {SelectorKind::None, SelectorKind::Pca};
    cfg.selector_output_dim = 2;
    ClassifierGrid rf{ClassifierKind::Rf, {{"n_estimators", {5}}, {"max_depth", {2, 4}}}};
    cfg.classifiers = {ClassifierGrid{ClassifierKind::Knn, {{"n_neighbors", {1, 3}}}}, rf};
    cfg.seed = 3;
    const auto r = run_matrix(cfg, toy_provider());
    ASSERT_EQ(r.cells.size(), 2u * 3u * 2u * 2u);
    std::size_t failed = 0;
    for (std::size_t i = 0; i < r.cells.size(); ++i) {
        const auto& c = r.cells[i];
        if (c.decomposition == Decomposition::Emd) {
            EXPECT_FALSE(c.mean.has_value());
            EXPECT_NE(c.error.find("no EMD"), std::string::npos);
            ++failed;
        } else {
            ASSERT_TRUE(c.mean.has_value()) << c.error;
            EXPECT_EQ(c.grid.size(), 2u);
            EXPECT_EQ(failed, 0u) << "a successful cell follows a failed one";
            if (i > 0) EXPECT_GE(r.cells[i - 1].mean->accuracy, c.mean->accuracy);
        }
    }
    EXPECT_EQ(failed, 12u);
    std::set<std::size_t> idx;
    for (const auto& c : r.cells) idx.insert(c.index);
    EXPECT_EQ(idx.size(), r.cells.size());
}

TEST(Matrix, DeterministicAcrossWorkersAndRoundTrips) {
    ExperimentConfig cfg;
    cfg.feature_sets = {FeatureSet::Simple, FeatureSet::Full};
    cfg.selectors = {SelectorKind::None, SelectorKind::Chi2};
    cfg.selector_output_dim = 2;
    cfg.classifiers = {ClassifierGrid{ClassifierKind::Knn, {{"n_neighbors", {1, 5}}}},
                       ClassifierGrid{ClassifierKind::Rf, {{"n_estimators", 5}}}};
    cfg.seed = 11;
    const auto a = run_matrix(cfg, toy_provider());
    cfg.workers = 4;
    const auto b = run_matrix(cfg, toy_provider());
    EXPECT_EQ(without_timing(to_json(a)), without_timing(to_json(b)));

    const auto back = report_from_json(nlohmann::json::parse(to_json(a).dump()));
    EXPECT_EQ(to_json(back), to_json(a));
    EXPECT_EQ(report_csv(back), report_csv(a));

    const auto csv = report_csv(a, 3);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
    EXPECT_EQ(csv.substr(0, csv.find('\n')).substr(csv.find_last_of(',', csv.find('\n')) + 1), "wall_time_s");
}

TEST(Matrix, InvalidConfigsRejected) {
    ExperimentConfig cfg;
    cfg.selectors.clear();
    EXPECT_THROW(run_matrix(cfg, toy_provider()), ConfigError);
    cfg = ExperimentConfig{};
    cfg.k = 1;
    EXPECT_THROW(run_matrix(cfg, toy_provider()), ConfigError);
    cfg = ExperimentConfig{};
    cfg.classifiers = {ClassifierGrid{ClassifierKind::Knn, {{"depth", {1}}}}};
    EXPECT_THROW(run_matrix(cfg, toy_provider()), ConfigError);
}
