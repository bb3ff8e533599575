#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>

#include "auscult/classify.hpp"
#include "auscult/error.hpp"
#include "classify_detail.hpp"

namespace auscult {

KnnClassifier::KnnClassifier(ClassifierSpec spec, Rows rows, Labels labels)
    : Classifier(std::move(spec)), rows_(std::move(rows)), labels_(std::move(labels)) {
    if (rows_.empty() || rows_.size() != labels_.size()) throw DataError("k-NN needs matching, non-empty rows and labels");
    if (static_cast<std::size_t>(spec_.knn.n_neighbors) > rows_.size()) {
        throw ConfigError("k-NN n_neighbors=" + std::to_string(spec_.knn.n_neighbors) + " exceeds the " +
                          std::to_string(rows_.size()) + " training rows");
    }
    order_.resize(rows_.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    build(0, order_.size());
}

int KnnClassifier::build(std::size_t begin, std::size_t end) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({-1, 0.0, begin, end, -1, -1});
    if (end - begin <= static_cast<std::size_t>(spec_.knn.leaf_size)) return id;

    const std::size_t d = rows_.front().size();
    int dim = -1;
    double widest = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        double lo = rows_[order_[begin]][j];
        double hi = lo;
        for (std::size_t i = begin; i < end; ++i) {
            lo = std::min(lo, rows_[order_[i]][j]);
            hi = std::max(hi, rows_[order_[i]][j]);
        }
        if (hi - lo > widest) {
            widest = hi - lo;
            dim = static_cast<int>(j);
        }
    }
    if (dim < 0) return id;  // all points identical

    const std::size_t mid = begin + (end - begin) / 2;
    const auto col = static_cast<std::size_t>(dim);
    auto less = [&](std::size_t a, std::size_t b) {
        return rows_[a][col] != rows_[b][col] ? rows_[a][col] < rows_[b][col] : a < b;
    };
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin), order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(end), less);
    const double split = rows_[order_[mid]][col];
    const int left = build(begin, mid);
    const int right = build(mid, end);
    nodes_[static_cast<std::size_t>(id)].split_dim = dim;
    nodes_[static_cast<std::size_t>(id)].split = split;
    nodes_[static_cast<std::size_t>(id)].left = left;
    nodes_[static_cast<std::size_t>(id)].right = right;
    return id;
}

double KnnClassifier::distance_pow(std::span<const double> a, std::span<const double> b) const {
    const double p = spec_.knn.p;
    double s = 0.0;
    if (p == 1.0) {
        for (std::size_t j = 0; j < a.size(); ++j) s += std::abs(a[j] - b[j]);
    } else if (p == 2.0) {
        for (std::size_t j = 0; j < a.size(); ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
    } else {
        for (std::size_t j = 0; j < a.size(); ++j) s += std::pow(std::abs(a[j] - b[j]), p);
    }
    return s;
}

std::vector<std::size_t> KnnClassifier::neighbours(std::span<const double> row) const {
    if (row.size() != rows_.front().size()) {
        throw ConfigError("k-NN fitted on " + std::to_string(rows_.front().size()) + " features, query has " +
                          std::to_string(row.size()));
    }
    const auto k = static_cast<std::size_t>(spec_.knn.n_neighbors);
    using Entry = std::pair<double, std::size_t>;  // (distance^p, row index); max-heap keeps the worst on top
    std::priority_queue<Entry> heap;
    auto offer = [&](double dist, std::size_t idx) {
        if (heap.size() < k) {
            heap.emplace(dist, idx);
        } else if (Entry(dist, idx) < heap.top()) {
            heap.pop();
            heap.emplace(dist, idx);
        }
    };
    // Per-axis gap lower-bounds the full Minkowski distance: |gap|^p <= sum |d_j|^p.
    auto axis_pow = [&](double gap) { return spec_.knn.p == 1.0 ? std::abs(gap) : std::pow(std::abs(gap), spec_.knn.p); };

    auto visit = [&](auto&& self, int id) -> void {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.split_dim < 0) {
            for (std::size_t i = n.begin; i < n.end; ++i) offer(distance_pow(row, rows_[order_[i]]), order_[i]);
            return;
        }
        const double gap = row[static_cast<std::size_t>(n.split_dim)] - n.split;
        const int near = gap < 0.0 ? n.left : n.right;
        const int far = gap < 0.0 ? n.right : n.left;
        self(self, near);
        // Points on the far side may tie with the current worst and win on index, so
        // only strictly farther planes are pruned.
        if (heap.size() < k || axis_pow(gap) <= heap.top().first) self(self, far);
    };
    visit(visit, 0);

    std::vector<std::size_t> out(heap.size());
    for (std::size_t i = out.size(); i-- > 0;) {
        out[i] = heap.top().second;
        heap.pop();
    }
    return out;
}

Label KnnClassifier::predict(std::span<const double> row) const {
    const auto nn = neighbours(row);
    std::size_t crackle = 0;
    for (auto i : nn) crackle += labels_[i] == Label::Crackle;
    const std::size_t other = nn.size() - crackle;
    if (crackle == other) return labels_[nn.front()];
    return crackle > other ? Label::Crackle : Label::NoCrackle;
}

nlohmann::json KnnClassifier::to_json() const {
    return detail::model_envelope(spec_, {{"rows", rows_}, {"labels", detail::label_ints(labels_)}});
}

}  // namespace auscult
