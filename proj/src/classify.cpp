#include "auscult/classify.hpp"

#include <cmath>
#include <sstream>

#include "auscult/error.hpp"

namespace auscult {

namespace {

template <typename T>
void take(const nlohmann::json& params, const char* key, T& out, std::vector<std::string>& used) {
    if (!params.contains(key)) return;
    used.emplace_back(key);
    try {
        out = params.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(std::string("classifier parameter '") + key + "' has the wrong type");
    }
}

std::string format_value(const nlohmann::json& v) {
    if (v.is_number_float()) {
        std::ostringstream ss;
        ss << v.get<double>();
        return ss.str();
    }
    if (v.is_array()) {
        std::string s = "[";
        for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ";" : "") + format_value(v[i]);
        return s + "]";
    }
    if (v.is_string()) return v.get<std::string>();
    return v.dump();
}

}  // namespace

ClassifierKind parse_classifier(std::string_view s) {
    if (s == "knn") return ClassifierKind::Knn;
    if (s == "rf") return ClassifierKind::Rf;
    if (s == "svm") return ClassifierKind::Svm;
    if (s == "mlp") return ClassifierKind::Mlp;
    if (s == "kmeans") return ClassifierKind::Kmeans;
    if (s == "som") return ClassifierKind::Som;
    throw ConfigError("unknown classifier '" + std::string(s) + "' (expected knn|rf|svm|mlp|kmeans|som)");
}

std::string_view to_string(ClassifierKind k) {
    switch (k) {
        case ClassifierKind::Knn: return "knn";
        case ClassifierKind::Rf: return "rf";
        case ClassifierKind::Svm: return "svm";
        case ClassifierKind::Mlp: return "mlp";
        case ClassifierKind::Kmeans: return "kmeans";
        case ClassifierKind::Som: return "som";
    }
    return "?";
}

void ClassifierSpec::validate() const {
    switch (kind) {
        case ClassifierKind::Knn:
            if (knn.n_neighbors < 1 || knn.leaf_size < 1) throw ConfigError("knn n_neighbors and leaf_size must be >= 1");
            if (!(knn.p >= 1.0) || !std::isfinite(knn.p)) throw ConfigError("knn p must be a finite value >= 1");
            break;
        case ClassifierKind::Rf:
            if (rf.n_estimators < 1 || rf.max_depth < 1) throw ConfigError("rf n_estimators and max_depth must be >= 1");
            break;
        case ClassifierKind::Svm:
            if (!(svm.C > 0.0) || !(svm.gamma > 0.0)) throw ConfigError("svm C and gamma must be > 0");
            if (!(svm.tolerance > 0.0) || svm.max_passes < 1) throw ConfigError("svm tolerance > 0 and max_passes >= 1");
            break;
        case ClassifierKind::Mlp:
            for (int h : mlp.hidden) {
                if (h < 1) throw ConfigError("mlp hidden sizes must be >= 1");
            }
            if (!(mlp.learning_rate > 0.0) || mlp.epochs < 1 || mlp.batch < 1) {
                throw ConfigError("mlp learning_rate > 0, epochs >= 1, batch >= 1");
            }
            if (mlp.activation == Activation::Softmax) throw ConfigError("mlp hidden activation cannot be softmax");
            break;
        case ClassifierKind::Kmeans:
            if (kmeans.k < 1 || kmeans.n_init < 1 || kmeans.max_iter < 1) throw ConfigError("kmeans counts must be >= 1");
            break;
        case ClassifierKind::Som:
            if (som.rows < 1 || som.cols < 1 || som.epochs < 1) throw ConfigError("som grid and epochs must be >= 1");
            if (!(som.learning_rate > 0.0) || som.radius < 0.0) throw ConfigError("som learning_rate > 0, radius >= 0");
            break;
    }
}

nlohmann::json params_to_json(const ClassifierSpec& s) {
    switch (s.kind) {
        case ClassifierKind::Knn: return {{"n_neighbors", s.knn.n_neighbors}, {"p", s.knn.p}, {"leaf_size", s.knn.leaf_size}};
        case ClassifierKind::Rf: return {{"n_estimators", s.rf.n_estimators}, {"max_depth", s.rf.max_depth}};
        case ClassifierKind::Svm:
            return {{"C", s.svm.C}, {"gamma", s.svm.gamma}, {"tolerance", s.svm.tolerance}, {"max_passes", s.svm.max_passes}};
        case ClassifierKind::Mlp:
            return {{"hidden", s.mlp.hidden},
                    {"activation", to_string(s.mlp.activation)},
                    {"learning_rate", s.mlp.learning_rate},
                    {"epochs", s.mlp.epochs},
                    {"batch", s.mlp.batch}};
        case ClassifierKind::Kmeans:
            return {{"k", s.kmeans.k}, {"n_init", s.kmeans.n_init}, {"max_iter", s.kmeans.max_iter}};
        case ClassifierKind::Som:
            return {{"rows", s.som.rows},
                    {"cols", s.som.cols},
                    {"learning_rate", s.som.learning_rate},
                    {"radius", s.som.radius},
                    {"epochs", s.som.epochs}};
    }
    return nlohmann::json::object();
}

ClassifierSpec spec_from_params(ClassifierKind kind, const nlohmann::json& params) {
    ClassifierSpec s;
    s.kind = kind;
    if (params.is_null()) return s;
    if (!params.is_object()) throw ConfigError("classifier parameters must be a table");
    std::vector<std::string> used;
    switch (kind) {
        case ClassifierKind::Knn:
            take(params, "n_neighbors", s.knn.n_neighbors, used);
            take(params, "p", s.knn.p, used);
            take(params, "leaf_size", s.knn.leaf_size, used);
            break;
        case ClassifierKind::Rf:
            take(params, "n_estimators", s.rf.n_estimators, used);
            take(params, "max_depth", s.rf.max_depth, used);
            break;
        case ClassifierKind::Svm:
            take(params, "C", s.svm.C, used);
            take(params, "gamma", s.svm.gamma, used);
            take(params, "tolerance", s.svm.tolerance, used);
            take(params, "max_passes", s.svm.max_passes, used);
            break;
        case ClassifierKind::Mlp: {
            take(params, "hidden", s.mlp.hidden, used);
            std::string act(to_string(s.mlp.activation));
            take(params, "activation", act, used);
            s.mlp.activation = parse_activation(act);
            take(params, "learning_rate", s.mlp.learning_rate, used);
            take(params, "epochs", s.mlp.epochs, used);
            take(params, "batch", s.mlp.batch, used);
            break;
        }
        case ClassifierKind::Kmeans:
            take(params, "k", s.kmeans.k, used);
            take(params, "n_init", s.kmeans.n_init, used);
            take(params, "max_iter", s.kmeans.max_iter, used);
            break;
        case ClassifierKind::Som:
            take(params, "rows", s.som.rows, used);
            take(params, "cols", s.som.cols, used);
            take(params, "learning_rate", s.som.learning_rate, used);
            take(params, "radius", s.som.radius, used);
            take(params, "epochs", s.som.epochs, used);
            break;
    }
    for (const auto& [key, _] : params.items()) {
        if (std::find(used.begin(), used.end(), key) == used.end()) {
            throw ConfigError("unknown " + std::string(to_string(kind)) + " parameter '" + key + "'");
        }
    }
    s.validate();
    return s;
}

std::vector<ClassifierSpec> expand_grid(ClassifierKind kind, const nlohmann::json& grid) {
    if (grid.is_null() || grid.empty()) return {spec_from_params(kind, nlohmann::json::object())};
    if (!grid.is_object()) throw ConfigError("classifier grid must be a table");
    std::vector<std::pair<std::string, nlohmann::json>> axes;
    for (const auto& [key, values] : grid.items()) {
        // MLP hidden sizes are themselves arrays: a list of lists is a grid axis.
        const bool is_axis = values.is_array() && !(key == "hidden" && !values.empty() && values[0].is_number());
        axes.emplace_back(key, is_axis ? values : nlohmann::json::array({values}));
        if (axes.back().second.empty()) throw ConfigError("grid axis '" + key + "' is empty");
    }
    std::vector<ClassifierSpec> out;
    std::vector<std::size_t> pos(axes.size(), 0);
    for (;;) {
        nlohmann::json params = nlohmann::json::object();
        for (std::size_t a = 0; a < axes.size(); ++a) params[axes[a].first] = axes[a].second[pos[a]];
        out.push_back(spec_from_params(kind, params));
        std::size_t a = axes.size();
        while (a > 0) {
            --a;
            if (++pos[a] < axes[a].second.size()) break;
            pos[a] = 0;
            if (a == 0) return out;
        }
        if (axes.empty()) return out;
    }
}

std::string ClassifierSpec::describe() const {
    std::string s(to_string(kind));
    s += "(";
    bool first = true;
    const auto params = params_to_json(*this);
    for (const auto& [key, value] : params.items()) {
        s += (first ? "" : ",") + key + "=" + format_value(value);
        first = false;
    }
    return s + ")";
}

Labels Classifier::predict(const Rows& rows) const {
    Labels out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(predict(std::span<const double>(r)));
    return out;
}

ClassifierPtr fit_classifier(const ClassifierSpec& spec, const Rows& rows, const Labels& labels) {
    spec.validate();
    if (rows.empty()) throw DataError("cannot fit a classifier on zero rows");
    if (rows.size() != labels.size()) throw DataError("rows and labels differ in length");
    const auto d = rows.front().size();
    for (const auto& r : rows) {
        if (r.size() != d) throw DataError("ragged training rows");
    }
    switch (spec.kind) {
        case ClassifierKind::Knn: return std::make_shared<KnnClassifier>(spec, rows, labels);
        case ClassifierKind::Rf: return std::make_shared<ForestClassifier>(spec, rows, labels);
        case ClassifierKind::Svm: return std::make_shared<SvmClassifier>(spec, rows, labels);
        case ClassifierKind::Mlp: return std::make_shared<MlpClassifier>(spec, rows, labels);
        case ClassifierKind::Kmeans: return std::make_shared<KmeansClassifier>(spec, rows, labels);
        case ClassifierKind::Som: return std::make_shared<SomClassifier>(spec, rows, labels);
    }
    throw ConfigError("unknown classifier kind");
}

namespace {

Labels labels_from_json(const nlohmann::json& j) {
    Labels out;
    for (int v : j.get<std::vector<int>>()) {
        if (v != 0 && v != 1) throw DataError("label value " + std::to_string(v) + " is not 0 or 1");
        out.push_back(Label(v));
    }
    return out;
}

}  // namespace

ClassifierPtr classifier_from_json(const nlohmann::json& j) {
    try {
        if (j.at("version").get<int>() != kModelFormatVersion) {
            throw DataError("unsupported model version " + j.at("version").dump());
        }
        const auto kind = parse_classifier(j.at("kind").get<std::string>());
        auto spec = spec_from_params(kind, j.at("params"));
        spec.seed = j.at("seed").get<std::uint64_t>();
        const auto& m = j.at("model");
        switch (kind) {
            case ClassifierKind::Knn: {
                Labels labels = labels_from_json(m.at("labels"));
                return std::make_shared<KnnClassifier>(spec, m.at("rows").get<Rows>(), std::move(labels));
            }
            case ClassifierKind::Rf: {
                std::vector<ForestClassifier::Tree> trees;
                for (const auto& t : m.at("trees")) {
                    ForestClassifier::Tree tree;
                    for (const auto& n : t) {
                        ForestClassifier::Node node;
                        node.feature = n.at(0).get<int>();
                        node.threshold = n.at(1).get<double>();
                        node.left = n.at(2).get<int>();
                        node.right = n.at(3).get<int>();
                        node.label = labels_from_json(nlohmann::json::array({n.at(4)})).front();
                        tree.push_back(node);
                    }
                    trees.push_back(std::move(tree));
                }
                return std::make_shared<ForestClassifier>(spec, std::move(trees));
            }
            case ClassifierKind::Svm:
                return std::make_shared<SvmClassifier>(spec, m.at("support").get<Rows>(),
                                                       m.at("coef").get<std::vector<double>>(), m.at("bias").get<double>());
            case ClassifierKind::Mlp: return std::make_shared<MlpClassifier>(spec, network_from_json(m.at("network")));
            case ClassifierKind::Kmeans: {
                Labels labels = labels_from_json(m.at("cluster_labels"));
                return std::make_shared<KmeansClassifier>(spec, m.at("centroids").get<Rows>(), std::move(labels),
                                                          m.at("inertia").get<double>());
            }
            case ClassifierKind::Som: {
                Labels labels = labels_from_json(m.at("node_labels"));
                return std::make_shared<SomClassifier>(spec, m.at("codebook").get<Rows>(), std::move(labels), restore);
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed model: ") + e.what());
    }
    throw DataError("malformed model");
}

}  // namespace auscult
