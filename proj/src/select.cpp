#include "auscult/select.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "auscult/codec.hpp"
#include "auscult/error.hpp"

namespace auscult {

namespace {

void check_rows(const Rows& rows) {
    if (rows.empty()) throw DataError("selector needs at least one row");
    const auto d = rows.front().size();
    if (d == 0) throw DataError("selector needs at least one feature");
    for (const auto& r : rows) {
        if (r.size() != d) throw DataError("ragged rows");
    }
}

std::string encode_matrix(const Matrix& m) {
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
    return encode_doubles(std::span<const double>(rm.data(), static_cast<std::size_t>(rm.size())));
}

Matrix decode_matrix(const std::string& b64, Eigen::Index rows, Eigen::Index cols) {
    const auto v = decode_doubles(b64);
    if (static_cast<Eigen::Index>(v.size()) != rows * cols) throw DataError("matrix blob does not match its shape");
    return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(v.data(), rows, cols);
}

}  // namespace

SelectorKind parse_selector(std::string_view s) {
    if (s == "none") return SelectorKind::None;
    if (s == "chi2") return SelectorKind::Chi2;
    if (s == "pca") return SelectorKind::Pca;
    if (s == "autoencoder") return SelectorKind::Autoencoder;
    throw ConfigError("unknown selector '" + std::string(s) + "' (expected none|chi2|pca|autoencoder)");
}

std::string_view to_string(SelectorKind k) {
    switch (k) {
        case SelectorKind::None: return "none";
        case SelectorKind::Chi2: return "chi2";
        case SelectorKind::Pca: return "pca";
        case SelectorKind::Autoencoder: return "autoencoder";
    }
    return "?";
}

Rows SelectorModel::transform(const Rows& rows) const {
    for (const auto& r : rows) {
        if (r.size() != input_dim) {
            throw ConfigError("selector fitted on " + std::to_string(input_dim) + " features, row has " +
                              std::to_string(r.size()));
        }
    }
    switch (kind) {
        case SelectorKind::None: return rows;
        case SelectorKind::Chi2: {
            Rows out;
            out.reserve(rows.size());
            for (const auto& r : rows) {
                std::vector<double> y;
                y.reserve(indices.size());
                for (auto j : indices) y.push_back(r[j]);
                out.push_back(std::move(y));
            }
            return out;
        }
        case SelectorKind::Pca: {
            if (rows.empty()) return {};
            Matrix x = to_matrix(rows);
            x.rowwise() -= mean.transpose();
            return to_rows(x * components.transpose());
        }
        case SelectorKind::Autoencoder: {
            if (rows.empty()) return {};
            return to_rows(network->activations(to_matrix(rows))[2]);
        }
    }
    return rows;
}

std::vector<std::string> SelectorModel::output_names(const std::vector<std::string>& input_names) const {
    std::vector<std::string> out;
    switch (kind) {
        case SelectorKind::None: return input_names;
        case SelectorKind::Chi2:
            for (auto j : indices) out.push_back(input_names.at(j));
            return out;
        case SelectorKind::Pca:
            for (std::size_t k = 0; k < output_dim; ++k) out.push_back("pc" + std::to_string(k + 1));
            return out;
        case SelectorKind::Autoencoder:
            for (std::size_t k = 0; k < output_dim; ++k) out.push_back("code" + std::to_string(k + 1));
            return out;
    }
    return out;
}

std::vector<double> chi2_scores(const Rows& rows, const Labels& labels) {
    check_rows(rows);
    if (labels.size() != rows.size()) throw DataError("labels and rows differ in length");
    const std::size_t d = rows.front().size();
    std::vector<double> observed[2] = {std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
    double class_count[2] = {0.0, 0.0};
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const int c = static_cast<int>(labels[i]);
        class_count[c] += 1.0;
        for (std::size_t j = 0; j < d; ++j) {
            if (rows[i][j] < 0.0) throw DataError("chi-square needs non-negative features (scale to [0,1] first)");
            observed[c][j] += rows[i][j];
        }
    }
    if (class_count[0] == 0.0 || class_count[1] == 0.0) throw DataError("chi-square needs both classes present");
    const double n = class_count[0] + class_count[1];
    std::vector<double> scores(d, 0.0);
    for (std::size_t j = 0; j < d; ++j) {
        const double total = observed[0][j] + observed[1][j];
        for (int c = 0; c < 2; ++c) {
            const double expected = total * class_count[c] / n;
            if (expected > 0.0) scores[j] += (observed[c][j] - expected) * (observed[c][j] - expected) / expected;
        }
    }
    return scores;
}

SelectorModel chi2_fit(const Rows& rows, const Labels& labels, std::size_t k) {
    const auto scores = chi2_scores(rows, labels);
    if (k == 0 || k > scores.size()) {
        throw ConfigError("chi2 k=" + std::to_string(k) + " must be in [1, " + std::to_string(scores.size()) + "]");
    }
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    SelectorModel m;
    m.kind = SelectorKind::Chi2;
    m.input_dim = scores.size();
    m.output_dim = k;
    m.indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    for (auto j : m.indices) m.scores.push_back(scores[j]);
    return m;
}

SelectorModel pca_fit(const Rows& rows, std::size_t n_components) {
    check_rows(rows);
    const std::size_t n = rows.size();
    const std::size_t d = rows.front().size();
    const std::size_t limit = std::min(n - 1, d);
    if (n_components == 0 || n_components > limit) {
        throw ConfigError("pca n_components=" + std::to_string(n_components) + " must be in [1, min(n-1, d)=" +
                          std::to_string(limit) + "]");
    }
    Matrix x = to_matrix(rows);
    SelectorModel m;
    m.kind = SelectorKind::Pca;
    m.input_dim = d;
    m.output_dim = n_components;
    m.mean = x.colwise().mean().transpose();
    x.rowwise() -= m.mean.transpose();
    Eigen::BDCSVD<Matrix> svd(x, Eigen::ComputeThinV);
    const Vector& s = svd.singularValues();
    const double total = s.squaredNorm();
    const auto k = static_cast<Eigen::Index>(n_components);
    m.components = svd.matrixV().leftCols(k).transpose();
    for (Eigen::Index c = 0; c < k; ++c) {
        Eigen::Index arg = 0;
        m.components.row(c).cwiseAbs().maxCoeff(&arg);
        if (m.components(c, arg) < 0.0) m.components.row(c) *= -1.0;
        m.singular_values.push_back(s(c));
        m.explained_variance_ratio.push_back(total > 0.0 ? s(c) * s(c) / total : 0.0);
    }
    return m;
}

Rows pca_inverse(const SelectorModel& model, const Rows& reduced) {
    if (model.kind != SelectorKind::Pca) throw ConfigError("pca_inverse needs a PCA model");
    if (reduced.empty()) return {};
    Matrix x = to_matrix(reduced) * model.components;
    x.rowwise() += model.mean.transpose();
    return to_rows(x);
}

SelectorModel autoencoder_fit(const Rows& rows, std::size_t bottleneck, const AutoencoderConfig& cfg,
                              std::uint64_t seed) {
    check_rows(rows);
    const auto d = static_cast<int>(rows.front().size());
    if (bottleneck == 0 || static_cast<int>(bottleneck) > d) {
        throw ConfigError("autoencoder bottleneck must be in [1, " + std::to_string(d) + "]");
    }
    NetworkSpec spec;
    spec.layer_sizes = {d, cfg.hidden, static_cast<int>(bottleneck), cfg.hidden, d};
    spec.hidden_activation = Activation::Relu;
    spec.output_activation = Activation::Logistic;
    spec.loss = Loss::Mse;
    spec.seed = seed;
    spec.learning_rate = cfg.learning_rate;
    spec.epochs = cfg.epochs;
    spec.batch = cfg.batch;
    spec.clip_norm = cfg.clip_norm;
    spec.linear_layer = 2;  // a rectified 1-unit code can start (and stay) dead on non-negative inputs
    const Matrix x = to_matrix(rows);
    SelectorModel m;
    m.kind = SelectorKind::Autoencoder;
    m.input_dim = static_cast<std::size_t>(d);
    m.output_dim = bottleneck;
    m.network = train(init_network(spec), x, x);
    return m;
}

Rows autoencoder_reconstruct(const SelectorModel& model, const Rows& rows) {
    if (model.kind != SelectorKind::Autoencoder) throw ConfigError("not an autoencoder model");
    if (rows.empty()) return {};
    return to_rows(model.network->forward(to_matrix(rows)));
}

SelectorModel identity_selector(std::size_t input_dim) {
    SelectorModel m;
    m.input_dim = input_dim;
    m.output_dim = input_dim;
    return m;
}

SelectorModel fit_selector(const SelectorSpec& spec, const Rows& rows, const Labels& labels, std::uint64_t seed) {
    check_rows(rows);
    const std::size_t d = rows.front().size();
    std::size_t k = std::min(spec.output_dim, d);
    switch (spec.kind) {
        case SelectorKind::None: return identity_selector(d);
        case SelectorKind::Chi2: return chi2_fit(rows, labels, k);
        case SelectorKind::Pca: return pca_fit(rows, std::min(k, rows.size() - 1));
        case SelectorKind::Autoencoder: return autoencoder_fit(rows, k, spec.autoencoder, seed);
    }
    return identity_selector(d);
}

nlohmann::json to_json(const SelectorModel& m) {
    nlohmann::json j{{"kind", to_string(m.kind)}, {"input_dim", m.input_dim}, {"output_dim", m.output_dim}};
    switch (m.kind) {
        case SelectorKind::None: break;
        case SelectorKind::Chi2:
            j["indices"] = m.indices;
            j["scores"] = m.scores;
            break;
        case SelectorKind::Pca:
            j["mean"] = encode_doubles(std::span<const double>(m.mean.data(), static_cast<std::size_t>(m.mean.size())));
            j["components"] = encode_matrix(m.components);
            j["singular_values"] = m.singular_values;
            j["explained_variance_ratio"] = m.explained_variance_ratio;
            break;
        case SelectorKind::Autoencoder: j["network"] = to_json(*m.network); break;
    }
    return j;
}

SelectorModel selector_from_json(const nlohmann::json& j) {
    SelectorModel m;
    try {
        m.kind = parse_selector(j.at("kind").get<std::string>());
        m.input_dim = j.at("input_dim").get<std::size_t>();
        m.output_dim = j.at("output_dim").get<std::size_t>();
        switch (m.kind) {
            case SelectorKind::None: break;
            case SelectorKind::Chi2:
                m.indices = j.at("indices").get<std::vector<std::size_t>>();
                m.scores = j.at("scores").get<std::vector<double>>();
                for (auto i : m.indices) {
                    if (i >= m.input_dim) throw DataError("chi2 index out of range");
                }
                break;
            case SelectorKind::Pca: {
                const auto mean = decode_doubles(j.at("mean").get<std::string>());
                m.mean = Eigen::Map<const Vector>(mean.data(), static_cast<Eigen::Index>(mean.size()));
                m.components = decode_matrix(j.at("components").get<std::string>(),
                                             static_cast<Eigen::Index>(m.output_dim),
                                             static_cast<Eigen::Index>(m.input_dim));
                m.singular_values = j.at("singular_values").get<std::vector<double>>();
                m.explained_variance_ratio = j.at("explained_variance_ratio").get<std::vector<double>>();
                break;
            }
            case SelectorKind::Autoencoder: m.network = network_from_json(j.at("network")); break;
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed selector: ") + e.what());
    }
    return m;
}

}  // namespace auscult
