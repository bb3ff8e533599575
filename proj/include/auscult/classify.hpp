#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "auscult/neural.hpp"
#include "auscult/types.hpp"

namespace auscult {

enum class ClassifierKind { Knn, Rf, Svm, Mlp, Kmeans, Som };

ClassifierKind parse_classifier(std::string_view s);
std::string_view to_string(ClassifierKind k);

struct KnnParams {
    int n_neighbors = 1;
    double p = 1.0;  ///< Minkowski order
    int leaf_size = 1;
};

struct RfParams {
    int n_estimators = 100;
    int max_depth = 12;
};

struct SvmParams {
    double C = 10.0;
    double gamma = 1.0;
    double tolerance = 1e-3;
    int max_passes = 10;  ///< cap on examine-all sweeps
};

struct MlpParams {
    std::vector<int> hidden = {1000, 500};
    Activation activation = Activation::Relu;
    double learning_rate = 0.05;
    int epochs = 200;
    int batch = 32;
};

struct KmeansParams {
    int k = 2;
    int n_init = 10;
    int max_iter = 300;
};

struct SomParams {
    int rows = 8;
    int cols = 8;
    double learning_rate = 0.5;
    double radius = 0.0;  ///< 0 means half the larger grid dimension
    int epochs = 20;
};

/// Only the block matching `kind` is meaningful.
struct ClassifierSpec {
    ClassifierKind kind = ClassifierKind::Knn;
    KnnParams knn;
    RfParams rf;
    SvmParams svm;
    MlpParams mlp;
    KmeansParams kmeans;
    SomParams som;
    std::uint64_t seed = 0;

    void validate() const;
    /// Compact identifier, e.g. "knn(n_neighbors=1,p=1,leaf_size=1)". Excludes the seed.
    std::string describe() const;
};

/// Parameters of `kind` as a flat JSON object (no seed).
nlohmann::json params_to_json(const ClassifierSpec& spec);
/// Overrides the defaults of `kind` with the keys of `params`; unknown keys are a ConfigError.
ClassifierSpec spec_from_params(ClassifierKind kind, const nlohmann::json& params);
/// Cartesian product of a grid whose values are arrays (scalars count as one-element arrays).
/// Keys are expanded in sorted order, the last varying fastest.
std::vector<ClassifierSpec> expand_grid(ClassifierKind kind, const nlohmann::json& grid);

/// A trained model: immutable, predict is pure and thread-safe.
class Classifier {
public:
    virtual ~Classifier() = default;
    virtual Label predict(std::span<const double> row) const = 0;
    virtual nlohmann::json to_json() const = 0;
    Labels predict(const Rows& rows) const;
    const ClassifierSpec& spec() const { return spec_; }
    /// Non-fatal notes from fitting (e.g. SMO hit its pass cap).
    const std::vector<std::string>& warnings() const { return warnings_; }

protected:
    explicit Classifier(ClassifierSpec spec) : spec_(std::move(spec)) {}
    ClassifierSpec spec_;
    std::vector<std::string> warnings_;
};

using ClassifierPtr = std::shared_ptr<const Classifier>;

ClassifierPtr fit_classifier(const ClassifierSpec& spec, const Rows& rows, const Labels& labels);
ClassifierPtr classifier_from_json(const nlohmann::json& j);

inline constexpr int kModelFormatVersion = 1;

/// Selects the constructor that rebuilds a model from stored state rather than training.
struct Restore {};
inline constexpr Restore restore{};

// ---- k-NN -----------------------------------------------------------------

/// kd-tree over the training rows. Neighbours are ordered by (distance, row
/// index); the vote is a majority, ties going to the nearest neighbour.
class KnnClassifier final : public Classifier {
public:
    KnnClassifier(ClassifierSpec spec, Rows rows, Labels labels);
    using Classifier::predict;
    Label predict(std::span<const double> row) const override;
    nlohmann::json to_json() const override;
    /// Indices of the k nearest training rows, nearest first.
    std::vector<std::size_t> neighbours(std::span<const double> row) const;

private:
    struct Node {
        int split_dim = -1;  // -1 for a leaf
        double split = 0.0;
        std::size_t begin = 0, end = 0;  // leaf range in order_
        int left = -1, right = -1;
    };
    int build(std::size_t begin, std::size_t end);
    double distance_pow(std::span<const double> a, std::span<const double> b) const;

    Rows rows_;
    Labels labels_;
    std::vector<std::size_t> order_;
    std::vector<Node> nodes_;
};

// ---- random forest ----------------------------------------------------------

class ForestClassifier final : public Classifier {
public:
    struct Node {
        int feature = -1;  // -1 for a leaf
        double threshold = 0.0;
        int left = -1, right = -1;
        Label label = Label::NoCrackle;
    };
    using Tree = std::vector<Node>;

    ForestClassifier(ClassifierSpec spec, const Rows& rows, const Labels& labels);
    ForestClassifier(ClassifierSpec spec, std::vector<Tree> trees);
    using Classifier::predict;
    Label predict(std::span<const double> row) const override;
    nlohmann::json to_json() const override;
    const std::vector<Tree>& trees() const { return trees_; }
    static Label tree_predict(const Tree& t, std::span<const double> row);

private:
    std::vector<Tree> trees_;
};

// ---- SVM --------------------------------------------------------------------

/// RBF-kernel soft-margin SVM trained with Platt's SMO (error cache,
/// second-choice heuristic). Crackle = +1.
class SvmClassifier final : public Classifier {
public:
    SvmClassifier(ClassifierSpec spec, const Rows& rows, const Labels& labels);
    SvmClassifier(ClassifierSpec spec, Rows support, std::vector<double> coef, double bias);
    using Classifier::predict;
    Label predict(std::span<const double> row) const override;
    nlohmann::json to_json() const override;
    /// sum_i alpha_i y_i K(x_i, x) + b
    double decision(std::span<const double> row) const;
    /// Dual variables for every training row (empty after deserialization).
    const std::vector<double>& alphas() const { return alphas_; }
    double bias() const { return bias_; }
    std::size_t support_count() const { return support_.size(); }
    bool converged() const { return converged_; }

private:
    Rows support_;
    std::vector<double> coef_;  // alpha_i * y_i
    double bias_ = 0.0;
    std::vector<double> alphas_;
    bool converged_ = true;
};

// ---- k-means ----------------------------------------------------------------

class KmeansClassifier final : public Classifier {
public:
    KmeansClassifier(ClassifierSpec spec, const Rows& rows, const Labels& labels);
    KmeansClassifier(ClassifierSpec spec, Rows centroids, Labels cluster_labels, double inertia);
    using Classifier::predict;
    Label predict(std::span<const double> row) const override;
    nlohmann::json to_json() const override;
    std::size_t nearest(std::span<const double> row) const;
    const Rows& centroids() const { return centroids_; }
    const Labels& cluster_labels() const { return cluster_labels_; }
    double inertia() const { return inertia_; }
    /// Inertia after each Lloyd iteration of the winning restart.
    const std::vector<double>& inertia_history() const { return history_; }

private:
    Rows centroids_;
    Labels cluster_labels_;
    double inertia_ = 0.0;
    std::vector<double> history_;
};

// ---- SOM --------------------------------------------------------------------

class SomClassifier final : public Classifier {
public:
    SomClassifier(ClassifierSpec spec, const Rows& rows, const Labels& labels);
    SomClassifier(ClassifierSpec spec, Rows codebook, Labels node_labels, Restore);
    using Classifier::predict;
    Label predict(std::span<const double> row) const override;
    nlohmann::json to_json() const override;
    std::size_t bmu(std::span<const double> row) const;
    const Rows& codebook() const { return codebook_; }
    const Labels& node_labels() const { return node_labels_; }

    /// Learning rate and neighbourhood radius at step t of T.
    static double learning_rate_at(const SomParams& p, double t, double total);
    static double radius_at(const SomParams& p, double t, double total);

private:
    Rows codebook_;
    Labels node_labels_;
};

// ---- MLP --------------------------------------------------------------------

class MlpClassifier final : public Classifier {
public:
    MlpClassifier(ClassifierSpec spec, const Rows& rows, const Labels& labels);
    MlpClassifier(ClassifierSpec spec, Network net);
    using Classifier::predict;
    Label predict(std::span<const double> row) const override;
    nlohmann::json to_json() const override;
    /// (P(no-crackle), P(crackle))
    std::vector<double> probabilities(std::span<const double> row) const;
    const Network& network() const { return net_; }

private:
    Network net_;
};

}  // namespace auscult
