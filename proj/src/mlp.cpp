#include "auscult/classify.hpp"
#include "auscult/error.hpp"
#include "classify_detail.hpp"

namespace auscult {

namespace {

NetworkSpec network_spec(const ClassifierSpec& s, int inputs) {
    NetworkSpec n;
    n.layer_sizes.push_back(inputs);
    n.layer_sizes.insert(n.layer_sizes.end(), s.mlp.hidden.begin(), s.mlp.hidden.end());
    n.layer_sizes.push_back(2);
    n.hidden_activation = s.mlp.activation;
    n.output_activation = Activation::Softmax;
    n.loss = Loss::CrossEntropy;
    n.seed = s.seed;
    n.learning_rate = s.mlp.learning_rate;
    n.epochs = s.mlp.epochs;
    n.batch = s.mlp.batch;
    return n;
}

}  // namespace

MlpClassifier::MlpClassifier(ClassifierSpec spec, const Rows& rows, const Labels& labels) : Classifier(std::move(spec)) {
    if (rows.empty() || rows.size() != labels.size()) throw DataError("MLP needs matching, non-empty rows and labels");
    const Matrix x = to_matrix(rows);
    Matrix y = Matrix::Zero(x.rows(), 2);  // column 0 no-crackle, column 1 crackle
    for (std::size_t i = 0; i < labels.size(); ++i) y(static_cast<Eigen::Index>(i), static_cast<int>(labels[i])) = 1.0;
    net_ = train(init_network(network_spec(spec_, static_cast<int>(x.cols()))), x, y);
}

MlpClassifier::MlpClassifier(ClassifierSpec spec, Network net) : Classifier(std::move(spec)), net_(std::move(net)) {
    if (net_.weights.empty() || net_.spec.layer_sizes.back() != 2) throw DataError("mlp network must have 2 outputs");
}

std::vector<double> MlpClassifier::probabilities(std::span<const double> row) const {
    const auto d = static_cast<std::size_t>(net_.spec.layer_sizes.front());
    if (row.size() != d) {
        throw ConfigError("mlp fitted on " + std::to_string(d) + " features, query has " + std::to_string(row.size()));
    }
    Matrix x(1, static_cast<Eigen::Index>(d));
    for (std::size_t j = 0; j < d; ++j) x(0, static_cast<Eigen::Index>(j)) = row[j];
    const Matrix out = net_.forward(x);
    return {out(0, 0), out(0, 1)};
}

Label MlpClassifier::predict(std::span<const double> row) const {
    const auto p = probabilities(row);
    return p[1] > p[0] ? Label::Crackle : Label::NoCrackle;
}

nlohmann::json MlpClassifier::to_json() const { return detail::model_envelope(spec_, {{"network", auscult::to_json(net_)}}); }

}  // namespace auscult
