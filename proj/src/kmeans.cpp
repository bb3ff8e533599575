#include <algorithm>
#include <limits>
#include <random>

#include "auscult/classify.hpp"
#include "auscult/error.hpp"
#include "auscult/random.hpp"
#include "classify_detail.hpp"

namespace auscult {

namespace {

struct Run {
    Rows centroids;
    std::vector<std::size_t> assign;
    std::vector<double> history;
    double inertia = 0.0;
};

std::size_t nearest_of(const Rows& centroids, std::span<const double> x, double* dist = nullptr) {
    std::size_t best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.size(); ++c) {
        const double d = detail::squared_distance(centroids[c], x);
        if (d < bd) {
            bd = d;
            best = c;
        }
    }
    if (dist) *dist = bd;
    return best;
}

Rows plus_plus(const Rows& x, std::size_t k, std::mt19937_64& rng) {
    const std::size_t n = x.size();
    Rows c;
    c.push_back(x[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)]);
    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) d2[i] = detail::squared_distance(x[i], c[0]);
    while (c.size() < k) {
        double total = 0.0;
        for (double v : d2) total += v;
        std::size_t pick = 0;
        if (total > 0.0) {
            double r = std::uniform_real_distribution<double>(0.0, total)(rng);
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                if (d2[i] > 0.0 && r < d2[i]) {
                    pick = i;
                    break;
                }
                r -= d2[i];
            }
        } else {
            pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
        }
        c.push_back(x[pick]);
        for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], detail::squared_distance(x[i], c.back()));
    }
    return c;
}

Run lloyd(const Rows& x, Rows centroids, int max_iter) {
    const std::size_t n = x.size(), k = centroids.size(), d = x.front().size();
    Run run;
    run.assign.assign(n, k);
    std::vector<double> dist(n);
    auto assign = [&] {
        bool changed = false;
        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t c = nearest_of(centroids, x[i], &dist[i]);
            changed |= c != run.assign[i];
            run.assign[i] = c;
            inertia += dist[i];
        }
        run.history.push_back(inertia);
        return changed;
    };
    assign();
    for (int it = 0; it < max_iter; ++it) {
        Rows sum(k, std::vector<double>(d, 0.0));
        std::vector<std::size_t> count(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            ++count[run.assign[i]];
            for (std::size_t j = 0; j < d; ++j) sum[run.assign[i]][j] += x[i][j];
        }
        std::vector<bool> taken(n, false);
        for (std::size_t c = 0; c < k; ++c) {
            if (count[c] > 0) {
                for (std::size_t j = 0; j < d; ++j) centroids[c][j] = sum[c][j] / static_cast<double>(count[c]);
                continue;
            }
            // Empty cluster: move it onto the point worst served by its centroid.
            std::size_t far = 0;
            double fd = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (!taken[i] && dist[i] > fd) {
                    fd = dist[i];
                    far = i;
                }
            }
            taken[far] = true;
            centroids[c] = x[far];
        }
        if (!assign()) break;
    }
    run.centroids = std::move(centroids);
    run.inertia = run.history.back();
    return run;
}

}  // namespace

KmeansClassifier::KmeansClassifier(ClassifierSpec spec, const Rows& rows, const Labels& labels)
    : Classifier(std::move(spec)) {
    if (rows.empty() || rows.size() != labels.size()) throw DataError("k-means needs matching, non-empty rows and labels");
    const auto k = static_cast<std::size_t>(spec_.kmeans.k);
    if (k > rows.size()) {
        throw ConfigError("kmeans k=" + std::to_string(k) + " exceeds the " + std::to_string(rows.size()) + " rows");
    }
    Run best;
    bool have = false;
    for (int r = 0; r < spec_.kmeans.n_init; ++r) {
        std::mt19937_64 rng(derive_seed(spec_.seed, {static_cast<std::uint64_t>(r)}));
        Run run = lloyd(rows, plus_plus(rows, k, rng), spec_.kmeans.max_iter);
        if (!have || run.inertia < best.inertia) {
            best = std::move(run);
            have = true;
        }
    }
    std::vector<std::size_t> pos(k, 0), neg(k, 0);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        (labels[i] == Label::Crackle ? pos : neg)[best.assign[i]]++;
    }
    for (std::size_t c = 0; c < k; ++c) cluster_labels_.push_back(detail::majority(pos[c], neg[c]));
    centroids_ = std::move(best.centroids);
    inertia_ = best.inertia;
    history_ = std::move(best.history);
}

KmeansClassifier::KmeansClassifier(ClassifierSpec spec, Rows centroids, Labels cluster_labels, double inertia)
    : Classifier(std::move(spec)), centroids_(std::move(centroids)), cluster_labels_(std::move(cluster_labels)),
      inertia_(inertia) {
    if (centroids_.empty() || centroids_.size() != cluster_labels_.size()) {
        throw DataError("kmeans centroids/labels mismatch");
    }
}

std::size_t KmeansClassifier::nearest(std::span<const double> row) const {
    if (row.size() != centroids_.front().size()) {
        throw ConfigError("kmeans fitted on " + std::to_string(centroids_.front().size()) + " features, query has " +
                          std::to_string(row.size()));
    }
    return nearest_of(centroids_, row);
}

Label KmeansClassifier::predict(std::span<const double> row) const { return cluster_labels_[nearest(row)]; }

nlohmann::json KmeansClassifier::to_json() const {
    return detail::model_envelope(spec_, {{"centroids", centroids_},
                                          {"cluster_labels", detail::label_ints(cluster_labels_)},
                                          {"inertia", inertia_}});
}

}  // namespace auscult
