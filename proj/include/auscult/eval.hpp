#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "auscult/classify.hpp"
#include "auscult/decompose.hpp"
#include "auscult/feature_matrix.hpp"
#include "auscult/features.hpp"
#include "auscult/select.hpp"

namespace auscult {

// ---- metrics ----------------------------------------------------------------

/// Counts with crackle as the positive class.
struct Confusion {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    std::size_t total() const { return tp + fp + fn + tn; }
};

struct Metrics {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    Confusion confusion;
};

/// Precision (recall) is 0 when nothing is predicted (present) positive.
Metrics compute_metrics(const Labels& truth, const Labels& predicted);
/// Arithmetic mean of each rate over folds; confusion counts are summed.
Metrics mean_metrics(const std::vector<Metrics>& folds);

nlohmann::json to_json(const Metrics& m);
Metrics metrics_from_json(const nlohmann::json& j);

// ---- splitting ----------------------------------------------------------------

/// Fold index (0..k-1) per row. Rows of each class are ordered by id, shuffled
/// with a seed derived from `seed` and the class, and the two class lists are
/// dealt round-robin in turn, so folds differ in size by at most one and every
/// fold holds floor or ceil of each class's share. Independent of row order.
/// Throws DataError when a class has fewer than k members.
std::vector<int> stratified_kfold(const std::vector<std::string>& ids, const Labels& labels, int k,
                                  std::uint64_t seed);

/// Like stratified_kfold, but every row of a group (patient) lands in the same
/// fold. Groups are placed greedily, crackle-heaviest first, into the fold with
/// the fewest crackle rows (then fewest rows). Throws DataError with fewer than
/// k groups.
std::vector<int> grouped_kfold(const std::vector<std::string>& groups, const Labels& labels, int k,
                               std::uint64_t seed);

// ---- fitted pipeline -----------------------------------------------------------

/// Scaling -> selector -> classifier, all fitted on the same training rows.
struct FittedPipeline {
    std::vector<std::string> feature_names;
    MinMaxScaling scaling;
    SelectorModel selector;
    ClassifierPtr classifier;

    /// Rows in the original (unscaled) feature space.
    Labels predict(const Rows& rows) const;
    nlohmann::json to_json() const;
};

FittedPipeline pipeline_from_json(const nlohmann::json& j);

/// Fits on the rows of `train` only; the classifier seed is classifier.seed.
/// `scaling`, when given, replaces the fit on `train` (paper-compatible global
/// scaling).
FittedPipeline fit_pipeline(const FeatureMatrix& train, const SelectorSpec& selector, const ClassifierSpec& classifier,
                            std::uint64_t selector_seed, const std::optional<MinMaxScaling>& scaling = std::nullopt);

// ---- cross-validation and grid search -------------------------------------------

struct CvOptions {
    int k = 5;
    std::uint64_t split_seed = 0;  ///< fold assignment
    std::uint64_t model_seed = 0;  ///< selector and classifier seeds derive from this and the fold index
    bool group_by_patient = false;
    /// Fit min-max scaling once on all rows before splitting (leaks test-fold
    /// ranges into training; offered only to mirror the original setup).
    bool paper_compat_scaling = false;
    int workers = 1;  ///< folds evaluated in parallel

    void validate() const;
};

struct CvResult {
    std::vector<Metrics> folds;
    Metrics mean;
    std::size_t selected_dim = 0;  ///< width after the selector (first fold)
    std::vector<std::string> warnings;
};

std::vector<int> assign_folds(const FeatureMatrix& m, const CvOptions& opts);

/// Seeds used for fold `fold`: classifier then selector.
std::uint64_t fold_classifier_seed(const CvOptions& opts, int fold);
std::uint64_t fold_selector_seed(const CvOptions& opts, int fold);

/// The pipeline cross_validate fits for fold `fold`: trained on the rows whose
/// fold differs, with that fold's seeds.
FittedPipeline fit_fold(const FeatureMatrix& m, const std::vector<int>& folds, int fold, const SelectorSpec& selector,
                        const ClassifierSpec& classifier, const CvOptions& opts);

CvResult cross_validate(const FeatureMatrix& m, const SelectorSpec& selector, const ClassifierSpec& classifier,
                        const CvOptions& opts);

struct GridPoint {
    ClassifierSpec spec;
    std::optional<CvResult> result;
    std::string error;
};

struct GridResult {
    std::size_t best = 0;  ///< index into points
    std::vector<GridPoint> points;

    const ClassifierSpec& best_spec() const { return points[best].spec; }
    const CvResult& best_result() const { return *points[best].result; }
};

/// Every grid point on the same folds; best = highest mean accuracy, ties to
/// the earlier point. Failing points are recorded; throws the first failure if
/// none succeeds.
GridResult grid_search(const FeatureMatrix& m, const SelectorSpec& selector, const std::vector<ClassifierSpec>& grid,
                       const CvOptions& opts);

// ---- experiment matrix -----------------------------------------------------------

struct ClassifierGrid {
    ClassifierKind kind = ClassifierKind::Knn;
    nlohmann::json grid = nlohmann::json::object();  ///< see expand_grid
};

struct ExperimentConfig {
    std::vector<Decomposition> decompositions = {Decomposition::None};
    std::vector<FeatureSet> feature_sets = {FeatureSet::Full};
    std::vector<SelectorKind> selectors = {SelectorKind::None};
    std::size_t selector_output_dim = 30;
    AutoencoderConfig autoencoder;
    std::vector<ClassifierGrid> classifiers = {ClassifierGrid{}};
    int k = 5;
    std::uint64_t seed = 0;
    bool group_by_patient = false;
    bool paper_compat_scaling = false;
    int workers = 1;

    void validate() const;
};

struct CellReport {
    std::size_t index = 0;  ///< enumeration order: decomposition, feature set, selector, classifier
    Decomposition decomposition = Decomposition::None;
    FeatureSet feature_set = FeatureSet::Full;
    SelectorKind selector = SelectorKind::None;
    ClassifierKind classifier = ClassifierKind::Knn;
    std::uint64_t seed = 0;  ///< model seed of the cell
    std::size_t rows = 0;
    std::size_t input_dim = 0;
    std::size_t selected_dim = 0;
    std::optional<ClassifierSpec> best;
    std::vector<Metrics> folds;
    std::optional<Metrics> mean;
    std::vector<std::pair<std::string, double>> grid;  ///< (spec, mean accuracy) per successful grid point
    std::vector<std::string> warnings;
    std::string error;  ///< empty when the cell succeeded
    double wall_time_s = 0.0;
};

struct EvalReport {
    nlohmann::json config;
    std::vector<CellReport> cells;  ///< mean accuracy descending; failed cells last
};

/// Feature matrix for (decomposition, feature set); unscaled.
using MatrixProvider = std::function<FeatureMatrix(Decomposition, FeatureSet)>;

/// One cell per combination, each a grid search under k-fold CV. Cells run on
/// up to cfg.workers threads; results do not depend on the schedule.
EvalReport run_matrix(const ExperimentConfig& cfg, const MatrixProvider& matrices);

/// Extracts each decomposition's full feature set once and narrows it to the
/// smaller sets by column name (they are nested).
MatrixProvider cycle_matrix_provider(const std::vector<CycleRecord>& cycles, const DecompositionConfig& dcfg,
                                     const FeatureConfig& fcfg, std::uint64_t seed, int workers);

nlohmann::json to_json(const ExperimentConfig& cfg);
nlohmann::json to_json(const EvalReport& r);
EvalReport report_from_json(const nlohmann::json& j);

/// Header plus one row per cell (at most `top` rows when top > 0). The last
/// column is wall_time_s.
std::string report_csv(const EvalReport& r, std::size_t top = 0);
void write_report(const std::filesystem::path& json_path, const std::filesystem::path& csv_path, const EvalReport& r);

}  // namespace auscult
