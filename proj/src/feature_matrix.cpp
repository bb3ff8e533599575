#include "auscult/feature_matrix.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "auscult/error.hpp"

namespace auscult {

namespace fs = std::filesystem;

namespace {

std::string format_double(double v) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

double parse_double(std::string_view s, int line) {
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
        throw ParseError("invalid number '" + std::string(s) + "'", line);
    }
    return v;
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(sep, start);
        out.push_back(line.substr(start, pos - start));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return out;
}

fs::path sidecar_path(const fs::path& csv) { return fs::path(csv.string() + ".json"); }

}  // namespace

void FeatureMatrix::validate() const {
    std::unordered_set<std::string> seen;
    for (const auto& n : feature_names) {
        if (!seen.insert(n).second) throw DataError("duplicate feature name '" + n + "'");
    }
    if (labels.size() != rows.size() || cycle_ids.size() != rows.size()) {
        throw DataError("feature matrix has inconsistent row metadata");
    }
    if (!groups.empty() && groups.size() != rows.size()) throw DataError("feature matrix has inconsistent groups");
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != feature_names.size()) {
            throw DataError("row '" + cycle_ids[i] + "' has " + std::to_string(rows[i].size()) + " values, expected " +
                            std::to_string(feature_names.size()));
        }
        for (double v : rows[i]) {
            if (!std::isfinite(v)) throw DataError("row '" + cycle_ids[i] + "' has a non-finite value");
        }
    }
}

FeatureMatrix FeatureMatrix::subset_rows(std::span<const std::size_t> idx) const {
    FeatureMatrix out;
    out.feature_names = feature_names;
    out.scaling = scaling;
    out.provenance = provenance;
    for (auto i : idx) {
        out.rows.push_back(rows.at(i));
        out.labels.push_back(labels.at(i));
        out.cycle_ids.push_back(cycle_ids.at(i));
        if (!groups.empty()) out.groups.push_back(groups.at(i));
    }
    return out;
}

FeatureMatrix FeatureMatrix::subset_columns(std::span<const std::size_t> idx) const {
    FeatureMatrix out;
    out.cycle_ids = cycle_ids;
    out.groups = groups;
    out.labels = labels;
    out.provenance = provenance;
    for (auto j : idx) out.feature_names.push_back(feature_names.at(j));
    out.rows.reserve(rows.size());
    for (const auto& r : rows) {
        std::vector<double> sub;
        sub.reserve(idx.size());
        for (auto j : idx) sub.push_back(r.at(j));
        out.rows.push_back(std::move(sub));
    }
    if (scaling) {
        MinMaxScaling s;
        for (auto j : idx) {
            s.min.push_back(scaling->min.at(j));
            s.max.push_back(scaling->max.at(j));
        }
        out.scaling = std::move(s);
    }
    return out;
}

FeatureMatrix FeatureMatrix::subset_columns(const std::vector<std::string>& names) const {
    std::unordered_map<std::string, std::size_t> pos;
    for (std::size_t j = 0; j < feature_names.size(); ++j) pos.emplace(feature_names[j], j);
    std::vector<std::size_t> idx;
    idx.reserve(names.size());
    for (const auto& n : names) {
        auto it = pos.find(n);
        if (it == pos.end()) throw ConfigError("feature '" + n + "' not present in matrix");
        idx.push_back(it->second);
    }
    return subset_columns(std::span<const std::size_t>(idx));
}

MinMaxScaling minmax_fit(const Rows& rows) {
    if (rows.empty()) throw DataError("cannot fit scaling on zero rows");
    MinMaxScaling s;
    s.min = rows.front();
    s.max = rows.front();
    for (const auto& r : rows) {
        if (r.size() != s.min.size()) throw DataError("ragged rows in scaling fit");
        for (std::size_t j = 0; j < r.size(); ++j) {
            s.min[j] = std::min(s.min[j], r[j]);
            s.max[j] = std::max(s.max[j], r[j]);
        }
    }
    return s;
}

Rows minmax_apply(const MinMaxScaling& s, const Rows& rows) {
    if (!s.fitted()) throw ConfigError("scaling applied before it was fitted");
    Rows out;
    out.reserve(rows.size());
    for (const auto& r : rows) {
        if (r.size() != s.min.size()) {
            throw ConfigError("scaling fitted on " + std::to_string(s.min.size()) + " features, row has " +
                              std::to_string(r.size()));
        }
        std::vector<double> y(r.size());
        for (std::size_t j = 0; j < r.size(); ++j) {
            const double span = s.max[j] - s.min[j];
            y[j] = span > 0.0 ? std::clamp((r[j] - s.min[j]) / span, 0.0, 1.0) : 0.0;
        }
        out.push_back(std::move(y));
    }
    return out;
}

FeatureMatrix minmax_fit_apply(const FeatureMatrix& m) {
    FeatureMatrix out = m;
    out.scaling = minmax_fit(m.rows);
    out.rows = minmax_apply(*out.scaling, m.rows);
    return out;
}

FeatureMatrix minmax_apply(const FeatureMatrix& m) {
    if (!m.scaling) throw ConfigError("feature matrix has no fitted scaling");
    FeatureMatrix out = m;
    out.rows = minmax_apply(*m.scaling, m.rows);
    return out;
}

nlohmann::json to_json(const MinMaxScaling& s) { return {{"min", s.min}, {"max", s.max}}; }

MinMaxScaling scaling_from_json(const nlohmann::json& j) {
    MinMaxScaling s;
    try {
        s.min = j.at("min").get<std::vector<double>>();
        s.max = j.at("max").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed scaling: ") + e.what());
    }
    if (s.min.size() != s.max.size()) throw DataError("malformed scaling: min/max lengths differ");
    return s;
}

void write_feature_matrix(const fs::path& csv_path, const FeatureMatrix& m) {
    m.validate();
    if (csv_path.has_parent_path()) fs::create_directories(csv_path.parent_path());
    std::ofstream out(csv_path);
    if (!out) throw ConfigError("cannot write " + csv_path.string());
    out << "cycle_id,label";
    for (const auto& n : m.feature_names) out << ',' << n;
    out << '\n';
    for (std::size_t i = 0; i < m.size(); ++i) {
        out << m.cycle_ids[i] << ',' << to_string(m.labels[i]);
        for (double v : m.rows[i]) out << ',' << format_double(v);
        out << '\n';
    }
    nlohmann::json side;
    side["provenance"] = m.provenance;
    side["groups"] = m.groups;
    side["scaling"] = m.scaling ? to_json(*m.scaling) : nlohmann::json(nullptr);
    std::ofstream js(sidecar_path(csv_path));
    if (!js) throw ConfigError("cannot write " + sidecar_path(csv_path).string());
    js << side.dump(2) << '\n';
}

FeatureMatrix read_feature_matrix(const fs::path& csv_path) {
    std::ifstream in(csv_path);
    if (!in) throw DataError("cannot open feature matrix '" + csv_path.string() + "'");
    FeatureMatrix m;
    std::string line;
    if (!std::getline(in, line)) throw DataError(csv_path.string() + ": empty file");
    auto header = split(line, ',');
    if (header.size() < 2 || header[0] != "cycle_id" || header[1] != "label") {
        throw ParseError("feature matrix header must start with cycle_id,label", 1);
    }
    m.feature_names.assign(header.begin() + 2, header.end());
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto cells = split(line, ',');
        if (cells.size() != header.size()) throw ParseError("expected " + std::to_string(header.size()) + " cells", lineno);
        m.cycle_ids.push_back(cells[0]);
        try {
            m.labels.push_back(parse_label(cells[1]));
        } catch (const Error& e) {
            throw ParseError(e.what(), lineno);
        }
        std::vector<double> row;
        row.reserve(cells.size() - 2);
        for (std::size_t j = 2; j < cells.size(); ++j) row.push_back(parse_double(cells[j], lineno));
        m.rows.push_back(std::move(row));
    }
    const auto side = sidecar_path(csv_path);
    if (fs::exists(side)) {
        std::ifstream js(side);
        nlohmann::json j;
        try {
            js >> j;
        } catch (const nlohmann::json::exception& e) {
            throw DataError(side.string() + ": " + e.what());
        }
        if (j.contains("provenance")) m.provenance = j["provenance"];
        if (j.contains("groups") && j["groups"].is_array()) m.groups = j["groups"].get<std::vector<std::string>>();
        if (j.contains("scaling") && !j["scaling"].is_null()) m.scaling = scaling_from_json(j["scaling"]);
    }
    if (m.groups.size() != m.rows.size()) m.groups = m.cycle_ids;
    m.validate();
    return m;
}

}  // namespace auscult
