#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "auscult/types.hpp"

namespace auscult {

/// Per-feature [min, max] learned from training rows.
struct MinMaxScaling {
    std::vector<double> min;
    std::vector<double> max;

    bool fitted() const { return !min.empty(); }
};

struct FeatureMatrix {
    std::vector<std::string> feature_names;
    std::vector<std::string> cycle_ids;
    std::vector<std::string> groups;  ///< patient id per row; used by grouped splits
    Rows rows;
    Labels labels;
    std::optional<MinMaxScaling> scaling;
    nlohmann::json provenance = nlohmann::json::object();

    std::size_t size() const { return rows.size(); }
    std::size_t width() const { return feature_names.size(); }

    /// Throws DataError on ragged rows, duplicate names or non-finite values.
    void validate() const;

    FeatureMatrix subset_rows(std::span<const std::size_t> idx) const;
    FeatureMatrix subset_columns(std::span<const std::size_t> idx) const;
    /// Columns selected by name, in the given order.
    FeatureMatrix subset_columns(const std::vector<std::string>& names) const;
};

/// Fits on `rows` only. Constant columns get min == max.
MinMaxScaling minmax_fit(const Rows& rows);

/// Maps fitted [min, max] to [0, 1], clamping values outside; constant
/// columns map to 0. Throws ConfigError when `s` is unfitted or too narrow.
Rows minmax_apply(const MinMaxScaling& s, const Rows& rows);

/// Fits on the matrix's own rows and returns a scaled copy carrying `scaling`.
FeatureMatrix minmax_fit_apply(const FeatureMatrix& m);
/// Applies m.scaling; throws ConfigError if the matrix was never fitted.
FeatureMatrix minmax_apply(const FeatureMatrix& m);

nlohmann::json to_json(const MinMaxScaling& s);
MinMaxScaling scaling_from_json(const nlohmann::json& j);

/// `<path>` gets the CSV (cycle_id, label, features...), `<path>.json` the
/// sidecar (provenance, groups, scaling).
void write_feature_matrix(const std::filesystem::path& csv_path, const FeatureMatrix& m);
FeatureMatrix read_feature_matrix(const std::filesystem::path& csv_path);

}  // namespace auscult
