#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "auscult/classify.hpp"
#include "auscult/error.hpp"
#include "auscult/random.hpp"
#include "classify_detail.hpp"

namespace auscult {

namespace {

double gini(std::size_t pos, std::size_t n) {
    if (n == 0) return 0.0;
    const double p = static_cast<double>(pos) / static_cast<double>(n);
    return 2.0 * p * (1.0 - p);
}

class TreeBuilder {
public:
    TreeBuilder(const Rows& rows, const Labels& labels, int max_depth, std::uint64_t seed)
        : rows_(rows), labels_(labels), max_depth_(max_depth), rng_(seed) {
        const std::size_t d = rows.front().size();
        mtry_ = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(d)))));
        features_.resize(d);
        std::iota(features_.begin(), features_.end(), std::size_t{0});
    }

    ForestClassifier::Tree build() {
        const std::size_t n = rows_.size();
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        std::vector<std::size_t> sample(n);
        for (auto& s : sample) s = pick(rng_);
        grow(sample, 0);
        return std::move(tree_);
    }

private:
    int grow(std::vector<std::size_t>& idx, int depth) {
        const int id = static_cast<int>(tree_.size());
        tree_.emplace_back();
        std::size_t pos = 0;
        for (auto i : idx) pos += labels_[i] == Label::Crackle;
        tree_[static_cast<std::size_t>(id)].label = detail::majority(pos, idx.size() - pos);
        if (depth >= max_depth_ || pos == 0 || pos == idx.size()) return id;

        // Partial Fisher-Yates: the first mtry entries become this node's candidates.
        const std::size_t d = features_.size();
        for (std::size_t c = 0; c < mtry_; ++c) {
            std::uniform_int_distribution<std::size_t> u(c, d - 1);
            std::swap(features_[c], features_[u(rng_)]);
        }
        const double parent = gini(pos, idx.size());
        double best = parent;
        int best_feature = -1;
        double best_threshold = 0.0;
        std::vector<std::pair<double, Label>> col(idx.size());
        for (std::size_t c = 0; c < mtry_; ++c) {
            const std::size_t f = features_[c];
            for (std::size_t k = 0; k < idx.size(); ++k) col[k] = {rows_[idx[k]][f], labels_[idx[k]]};
            std::sort(col.begin(), col.end());
            std::size_t left_pos = 0;
            for (std::size_t k = 0; k + 1 < col.size(); ++k) {
                left_pos += col[k].second == Label::Crackle;
                if (col[k].first == col[k + 1].first) continue;
                const std::size_t nl = k + 1;
                const std::size_t nr = col.size() - nl;
                const double impurity = (static_cast<double>(nl) * gini(left_pos, nl) +
                                         static_cast<double>(nr) * gini(pos - left_pos, nr)) /
                                        static_cast<double>(col.size());
                if (impurity < best) {
                    best = impurity;
                    best_feature = static_cast<int>(f);
                    best_threshold = 0.5 * (col[k].first + col[k + 1].first);
                    // Midpoint can round onto the upper value; keep the split strict.
                    if (!(best_threshold < col[k + 1].first)) best_threshold = col[k].first;
                }
            }
        }
        if (best_feature < 0) return id;

        std::vector<std::size_t> left;
        std::vector<std::size_t> right;
        for (auto i : idx) {
            (rows_[i][static_cast<std::size_t>(best_feature)] <= best_threshold ? left : right).push_back(i);
        }
        idx.clear();
        idx.shrink_to_fit();
        const int l = grow(left, depth + 1);
        const int r = grow(right, depth + 1);
        auto& node = tree_[static_cast<std::size_t>(id)];
        node.feature = best_feature;
        node.threshold = best_threshold;
        node.left = l;
        node.right = r;
        return id;
    }

    const Rows& rows_;
    const Labels& labels_;
    int max_depth_;
    std::mt19937_64 rng_;
    std::size_t mtry_ = 1;
    std::vector<std::size_t> features_;
    ForestClassifier::Tree tree_;
};

}  // namespace

ForestClassifier::ForestClassifier(ClassifierSpec spec, const Rows& rows, const Labels& labels)
    : Classifier(std::move(spec)) {
    trees_.reserve(static_cast<std::size_t>(spec_.rf.n_estimators));
    for (int t = 0; t < spec_.rf.n_estimators; ++t) {
        TreeBuilder b(rows, labels, spec_.rf.max_depth, derive_seed(spec_.seed, {static_cast<std::uint64_t>(t)}));
        trees_.push_back(b.build());
    }
}

ForestClassifier::ForestClassifier(ClassifierSpec spec, std::vector<Tree> trees)
    : Classifier(std::move(spec)), trees_(std::move(trees)) {
    for (const auto& t : trees_) {
        if (t.empty()) throw DataError("forest contains an empty tree");
        for (const auto& n : t) {
            if (n.feature >= 0 && (n.left < 0 || n.right < 0 || static_cast<std::size_t>(n.left) >= t.size() ||
                                   static_cast<std::size_t>(n.right) >= t.size())) {
                throw DataError("forest node has invalid children");
            }
        }
    }
}

Label ForestClassifier::tree_predict(const Tree& t, std::span<const double> row) {
    std::size_t id = 0;
    while (t[id].feature >= 0) {
        const auto& n = t[id];
        id = static_cast<std::size_t>(row[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
    }
    return t[id].label;
}

Label ForestClassifier::predict(std::span<const double> row) const {
    std::size_t crackle = 0;
    for (const auto& t : trees_) crackle += tree_predict(t, row) == Label::Crackle;
    return detail::majority(crackle, trees_.size() - crackle);
}

nlohmann::json ForestClassifier::to_json() const {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : trees_) {
        nlohmann::json nodes = nlohmann::json::array();
        for (const auto& n : t) nodes.push_back({n.feature, n.threshold, n.left, n.right, static_cast<int>(n.label)});
        trees.push_back(std::move(nodes));
    }
    return detail::model_envelope(spec_, {{"trees", trees}});
}

}  // namespace auscult
