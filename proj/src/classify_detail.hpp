#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "auscult/classify.hpp"

namespace auscult::detail {

inline nlohmann::json model_envelope(const ClassifierSpec& spec, nlohmann::json model) {
    return {{"version", kModelFormatVersion},
            {"kind", to_string(spec.kind)},
            {"params", params_to_json(spec)},
            {"seed", spec.seed},
            {"model", std::move(model)}};
}

inline std::vector<int> label_ints(const Labels& labels) {
    std::vector<int> out;
    out.reserve(labels.size());
    for (auto l : labels) out.push_back(static_cast<int>(l));
    return out;
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        const double d = a[j] - b[j];
        s += d * d;
    }
    return s;
}

/// Majority label; an exact tie goes to no-crackle.
inline Label majority(std::size_t crackle, std::size_t no_crackle) {
    return crackle > no_crackle ? Label::Crackle : Label::NoCrackle;
}

}  // namespace auscult::detail
