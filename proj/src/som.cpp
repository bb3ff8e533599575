#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "auscult/classify.hpp"
#include "auscult/error.hpp"
#include "classify_detail.hpp"

namespace auscult {

namespace {

// Decay constant: both schedules fall to e^-3 (~5%) of their start by the end.
constexpr double kDecay = 3.0;

double initial_radius(const SomParams& p) {
    return p.radius > 0.0 ? p.radius : 0.5 * static_cast<double>(std::max(p.rows, p.cols));
}

double grid_distance_sq(const SomParams& p, std::size_t a, std::size_t b) {
    const auto cols = static_cast<std::size_t>(p.cols);
    const double dr = static_cast<double>(a / cols) - static_cast<double>(b / cols);
    const double dc = static_cast<double>(a % cols) - static_cast<double>(b % cols);
    return dr * dr + dc * dc;
}

}  // namespace

double SomClassifier::learning_rate_at(const SomParams& p, double t, double total) {
    return p.learning_rate * std::exp(-kDecay * t / total);
}

double SomClassifier::radius_at(const SomParams& p, double t, double total) {
    return initial_radius(p) * std::exp(-kDecay * t / total);
}

SomClassifier::SomClassifier(ClassifierSpec spec, const Rows& rows, const Labels& labels) : Classifier(std::move(spec)) {
    if (rows.empty() || rows.size() != labels.size()) throw DataError("SOM needs matching, non-empty rows and labels");
    const SomParams& p = spec_.som;
    const std::size_t n = rows.size();
    const auto nodes = static_cast<std::size_t>(p.rows) * static_cast<std::size_t>(p.cols);
    std::mt19937_64 rng(spec_.seed);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t m = 0; m < nodes; ++m) codebook_.push_back(rows[order[m % n]]);

    const double total = static_cast<double>(p.epochs) * static_cast<double>(n);
    double t = 0.0;
    for (int e = 0; e < p.epochs; ++e) {
        std::shuffle(order.begin(), order.end(), rng);
        for (auto i : order) {
            const double eta = learning_rate_at(p, t, total);
            const double r = radius_at(p, t, total);
            const std::size_t win = bmu(rows[i]);
            for (std::size_t m = 0; m < nodes; ++m) {
                const double h = std::exp(-grid_distance_sq(p, m, win) / (2.0 * r * r));
                auto& w = codebook_[m];
                for (std::size_t j = 0; j < w.size(); ++j) w[j] += eta * h * (rows[i][j] - w[j]);
            }
            t += 1.0;
        }
    }

    std::vector<std::size_t> pos(nodes, 0), neg(nodes, 0);
    for (std::size_t i = 0; i < n; ++i) (labels[i] == Label::Crackle ? pos : neg)[bmu(rows[i])]++;
    node_labels_.assign(nodes, Label::NoCrackle);
    for (std::size_t m = 0; m < nodes; ++m) {
        if (pos[m] + neg[m] == 0) continue;
        node_labels_[m] = detail::majority(pos[m], neg[m]);
    }
    // Nodes no training row mapped to inherit from the closest hit node on the grid.
    const Labels hit_labels = node_labels_;
    for (std::size_t m = 0; m < nodes; ++m) {
        if (pos[m] + neg[m] > 0) continue;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t o = 0; o < nodes; ++o) {
            if (pos[o] + neg[o] == 0) continue;
            const double d = grid_distance_sq(p, m, o);
            if (d < best) {
                best = d;
                node_labels_[m] = hit_labels[o];
            }
        }
    }
}

SomClassifier::SomClassifier(ClassifierSpec spec, Rows codebook, Labels node_labels, Restore)
    : Classifier(std::move(spec)), codebook_(std::move(codebook)), node_labels_(std::move(node_labels)) {
    const auto nodes = static_cast<std::size_t>(spec_.som.rows) * static_cast<std::size_t>(spec_.som.cols);
    if (codebook_.size() != nodes || node_labels_.size() != nodes) throw DataError("som codebook does not match its grid");
}

std::size_t SomClassifier::bmu(std::span<const double> row) const {
    if (row.size() != codebook_.front().size()) {
        throw ConfigError("som fitted on " + std::to_string(codebook_.front().size()) + " features, query has " +
                          std::to_string(row.size()));
    }
    std::size_t best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < codebook_.size(); ++m) {
        const double d = detail::squared_distance(codebook_[m], row);
        if (d < bd) {
            bd = d;
            best = m;
        }
    }
    return best;
}

Label SomClassifier::predict(std::span<const double> row) const { return node_labels_[bmu(row)]; }

nlohmann::json SomClassifier::to_json() const {
    return detail::model_envelope(spec_, {{"codebook", codebook_}, {"node_labels", detail::label_ints(node_labels_)}});
}

}  // namespace auscult
