#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "auscult/neural.hpp"
#include "auscult/types.hpp"

namespace auscult {

enum class SelectorKind { None, Chi2, Pca, Autoencoder };

SelectorKind parse_selector(std::string_view s);
std::string_view to_string(SelectorKind k);

struct AutoencoderConfig {
    int hidden = 128;
    int epochs = 200;
    int batch = 32;
    double learning_rate = 1e-3;
    double clip_norm = 5.0;
};

struct SelectorSpec {
    SelectorKind kind = SelectorKind::None;
    std::size_t output_dim = 30;
    AutoencoderConfig autoencoder;
};

/// A fitted, immutable feature reducer.
struct SelectorModel {
    SelectorKind kind = SelectorKind::None;
    std::size_t input_dim = 0;
    std::size_t output_dim = 0;

    // chi2: selected columns, best score first, and their scores.
    std::vector<std::size_t> indices;
    std::vector<double> scores;

    // pca: training mean, components (output_dim x input_dim, orthonormal
    // rows), singular values and explained-variance ratios of the kept components.
    Vector mean;
    Matrix components;
    std::vector<double> singular_values;
    std::vector<double> explained_variance_ratio;

    // autoencoder: the full input->hidden->bottleneck->hidden->input network.
    std::optional<Network> network;

    Rows transform(const Rows& rows) const;
    /// Names of the output columns given the input column names.
    std::vector<std::string> output_names(const std::vector<std::string>& input_names) const;
};

/// Class-sum chi-square score per column; columns must be non-negative.
std::vector<double> chi2_scores(const Rows& rows, const Labels& labels);
/// Top-k columns by score; ties go to the lower column index.
SelectorModel chi2_fit(const Rows& rows, const Labels& labels, std::size_t k);

/// Economy SVD of the centred data. Requires n_components <= min(n-1, d).
SelectorModel pca_fit(const Rows& rows, std::size_t n_components);
/// Maps reduced rows back to input space (exact when all components are kept).
Rows pca_inverse(const SelectorModel& model, const Rows& reduced);

/// Bottleneck autoencoder trained on MSE reconstruction; values should lie in [0, 1].
/// Hidden layers are rectified, the code layer is linear, the output logistic.
SelectorModel autoencoder_fit(const Rows& rows, std::size_t bottleneck, const AutoencoderConfig& cfg,
                              std::uint64_t seed);
/// Full reconstruction through the autoencoder.
Rows autoencoder_reconstruct(const SelectorModel& model, const Rows& rows);

SelectorModel identity_selector(std::size_t input_dim);

/// Dispatches on spec.kind. output_dim is capped at what the data supports
/// (width, and n-1 for PCA); the cap is visible in the returned output_dim.
SelectorModel fit_selector(const SelectorSpec& spec, const Rows& rows, const Labels& labels, std::uint64_t seed);

nlohmann::json to_json(const SelectorModel& m);
SelectorModel selector_from_json(const nlohmann::json& j);

}  // namespace auscult
