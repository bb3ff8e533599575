#include "auscult/neural.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <span>
#include <string>

#include "auscult/codec.hpp"
#include "auscult/error.hpp"

namespace auscult {

namespace {

Matrix apply(Activation a, const Matrix& z) {
    switch (a) {
        case Activation::Relu: return z.cwiseMax(0.0);
        case Activation::Logistic: return z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
        case Activation::Tanh: return z.array().tanh().matrix();
        case Activation::Identity: return z;
        case Activation::Softmax: {
            Matrix out(z.rows(), z.cols());
            for (Eigen::Index i = 0; i < z.rows(); ++i) {
                const double m = z.row(i).maxCoeff();
                out.row(i) = (z.row(i).array() - m).exp().matrix();
                out.row(i) /= out.row(i).sum();
            }
            return out;
        }
    }
    return z;
}

/// Elementwise derivative expressed through the activation output `a`.
Matrix derivative(Activation act, const Matrix& z, const Matrix& a) {
    switch (act) {
        case Activation::Relu: return z.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
        case Activation::Logistic: return a.cwiseProduct((1.0 - a.array()).matrix());
        case Activation::Tanh: return (1.0 - a.array().square()).matrix();
        case Activation::Identity: return Matrix::Ones(z.rows(), z.cols());
        case Activation::Softmax: break;
    }
    throw ConfigError("softmax derivative is only available fused with cross-entropy");
}

// log(1 + e^v) without overflow.
double softplus(double v) { return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); }

struct Pass {
    std::vector<Matrix> z;  // pre-activations per layer (index l -> layer l+1)
    std::vector<Matrix> a;  // activations, a[0] = input
};

Pass run(const Network& net, const Matrix& x) {
    if (x.cols() != net.spec.layer_sizes.front()) {
        throw ConfigError("network expects " + std::to_string(net.spec.layer_sizes.front()) + " inputs, got " +
                          std::to_string(x.cols()));
    }
    Pass p;
    p.a.push_back(x);
    const std::size_t layers = net.weights.size();
    for (std::size_t l = 0; l < layers; ++l) {
        Matrix z = p.a.back() * net.weights[l].transpose();
        z.rowwise() += net.biases[l].transpose();
        p.a.push_back(apply(net.spec.activation_at(l + 1), z));
        p.z.push_back(std::move(z));
    }
    return p;
}

double loss_of(const NetworkSpec& spec, const Matrix& z_out, const Matrix& out, const Matrix& y) {
    const auto n = static_cast<double>(y.rows());
    if (spec.loss == Loss::Mse) return (out - y).squaredNorm() / (n * static_cast<double>(y.cols()));
    double total = 0.0;
    if (spec.output_activation == Activation::Softmax) {
        for (Eigen::Index i = 0; i < z_out.rows(); ++i) {
            const double m = z_out.row(i).maxCoeff();
            const double lse = m + std::log((z_out.row(i).array() - m).exp().sum());
            total += (y.row(i).array() * (lse - z_out.row(i).array())).sum();
        }
    } else {
        // -[y log s(z) + (1-y) log(1 - s(z))] = y softplus(-z) + (1-y) softplus(z)
        for (Eigen::Index i = 0; i < z_out.rows(); ++i) {
            for (Eigen::Index j = 0; j < z_out.cols(); ++j) {
                const double v = z_out(i, j);
                total += y(i, j) * softplus(-v) + (1.0 - y(i, j)) * softplus(v);
            }
        }
    }
    return total / n;
}

/// Index order that depends only on the row contents.
std::vector<Eigen::Index> canonical_order(const Matrix& x, const Matrix& y) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(x.rows()));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    auto less = [&](Eigen::Index a, Eigen::Index b) {
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            if (x(a, j) != x(b, j)) return x(a, j) < x(b, j);
        }
        for (Eigen::Index j = 0; j < y.cols(); ++j) {
            if (y(a, j) != y(b, j)) return y(a, j) < y(b, j);
        }
        return false;
    };
    std::stable_sort(idx.begin(), idx.end(), less);
    return idx;
}

Matrix gather(const Matrix& m, std::span<const Eigen::Index> idx) {
    Matrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(idx[i]);
    return out;
}

}  // namespace

Activation parse_activation(std::string_view s) {
    if (s == "relu" || s == "rectifier") return Activation::Relu;
    if (s == "logistic" || s == "sigmoid") return Activation::Logistic;
    if (s == "tanh") return Activation::Tanh;
    if (s == "identity") return Activation::Identity;
    if (s == "softmax") return Activation::Softmax;
    throw ConfigError("unknown activation '" + std::string(s) + "'");
}

std::string_view to_string(Activation a) {
    switch (a) {
        case Activation::Relu: return "relu";
        case Activation::Logistic: return "logistic";
        case Activation::Tanh: return "tanh";
        case Activation::Identity: return "identity";
        case Activation::Softmax: return "softmax";
    }
    return "?";
}

Loss parse_loss(std::string_view s) {
    if (s == "mse") return Loss::Mse;
    if (s == "cross_entropy") return Loss::CrossEntropy;
    throw ConfigError("unknown loss '" + std::string(s) + "' (expected mse|cross_entropy)");
}

std::string_view to_string(Loss l) { return l == Loss::Mse ? "mse" : "cross_entropy"; }

void NetworkSpec::validate() const {
    if (layer_sizes.size() < 2) throw ConfigError("a network needs at least an input and an output layer");
    for (int s : layer_sizes) {
        if (s < 1) throw ConfigError("layer sizes must be >= 1");
    }
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be > 0");
    if (epochs < 1 || batch < 1) throw ConfigError("epochs and batch must be >= 1");
    if (clip_norm < 0.0) throw ConfigError("clip_norm must be >= 0");
    if (hidden_activation == Activation::Softmax) throw ConfigError("softmax is only valid on the output layer");
    if (linear_layer != -1 && (linear_layer < 1 || linear_layer + 1 >= static_cast<int>(layer_sizes.size()))) {
        throw ConfigError("linear_layer must name a hidden layer");
    }
    if (loss == Loss::CrossEntropy && output_activation != Activation::Logistic &&
        output_activation != Activation::Softmax) {
        throw ConfigError("cross-entropy needs a logistic or softmax output");
    }
}

Activation NetworkSpec::activation_at(std::size_t layer) const {
    if (layer + 1 == layer_sizes.size()) return output_activation;
    if (static_cast<int>(layer) == linear_layer) return Activation::Identity;
    return hidden_activation;
}

Matrix Network::forward(const Matrix& x) const { return run(*this, x).a.back(); }

std::vector<Matrix> Network::activations(const Matrix& x) const { return run(*this, x).a; }

double Network::loss(const Matrix& x, const Matrix& y) const {
    const auto p = run(*this, x);
    return loss_of(spec, p.z.back(), p.a.back(), y);
}

double Gradients::norm() const {
    double s = 0.0;
    for (const auto& w : weights) s += w.squaredNorm();
    for (const auto& b : biases) s += b.squaredNorm();
    return std::sqrt(s);
}

Network init_network(const NetworkSpec& spec) {
    spec.validate();
    Network net;
    net.spec = spec;
    std::mt19937_64 rng(spec.seed);
    for (std::size_t l = 0; l + 1 < spec.layer_sizes.size(); ++l) {
        const int fan_in = spec.layer_sizes[l];
        const int fan_out = spec.layer_sizes[l + 1];
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        std::uniform_real_distribution<double> u(-limit, limit);
        Matrix w(fan_out, fan_in);
        for (Eigen::Index i = 0; i < w.rows(); ++i) {
            for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = u(rng);
        }
        net.weights.push_back(std::move(w));
        net.biases.push_back(Vector::Zero(fan_out));
    }
    return net;
}

Gradients backward(const Network& net, const Matrix& x, const Matrix& y) {
    const auto p = run(net, x);
    const std::size_t layers = net.weights.size();
    if (y.rows() != x.rows() || y.cols() != net.spec.layer_sizes.back()) {
        throw ConfigError("target shape does not match the network output");
    }
    const auto n = static_cast<double>(x.rows());
    Matrix delta;
    if (net.spec.loss == Loss::CrossEntropy) {
        delta = (p.a.back() - y) / n;  // fused softmax/logistic + cross-entropy
    } else {
        const Matrix& a = p.a.back();
        const Matrix g = (2.0 / (n * static_cast<double>(y.cols()))) * (a - y);
        if (net.spec.output_activation == Activation::Softmax) {
            // Softmax Jacobian-vector product: a * (g - <g, a>) per row.
            const Vector dots = g.cwiseProduct(a).rowwise().sum();
            delta = a.cwiseProduct((g.colwise() - dots));
        } else {
            delta = g.cwiseProduct(derivative(net.spec.output_activation, p.z.back(), a));
        }
    }
    Gradients g;
    g.weights.resize(layers);
    g.biases.resize(layers);
    for (std::size_t l = layers; l-- > 0;) {
        g.weights[l] = delta.transpose() * p.a[l];
        g.biases[l] = delta.colwise().sum().transpose();
        if (l > 0) {
            delta = (delta * net.weights[l]).cwiseProduct(derivative(net.spec.activation_at(l), p.z[l - 1], p.a[l]));
        }
    }
    return g;
}

Network train(Network net, const Matrix& x, const Matrix& y) {
    net.spec.validate();
    if (x.rows() == 0) throw DataError("cannot train on zero rows");
    if (x.rows() != y.rows()) throw ConfigError("input and target row counts differ");
    const auto order = canonical_order(x, y);
    const Matrix xs = gather(x, order);
    const Matrix ys = gather(y, order);
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(xs.rows()));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    std::mt19937_64 rng(net.spec.seed ^ 0x5bd1e995ULL);
    const auto batch = static_cast<std::size_t>(net.spec.batch);
    net.training_curve.clear();
    for (int epoch = 0; epoch < net.spec.epochs; ++epoch) {
        std::shuffle(idx.begin(), idx.end(), rng);
        for (std::size_t start = 0; start < idx.size(); start += batch) {
            const std::size_t len = std::min(batch, idx.size() - start);
            const std::span<const Eigen::Index> part(idx.data() + start, len);
            auto g = backward(net, gather(xs, part), gather(ys, part));
            double scale = net.spec.learning_rate;
            if (net.spec.clip_norm > 0.0) {
                const double norm = g.norm();
                if (norm > net.spec.clip_norm) scale *= net.spec.clip_norm / norm;
            }
            for (std::size_t l = 0; l < net.weights.size(); ++l) {
                net.weights[l] -= scale * g.weights[l];
                net.biases[l] -= scale * g.biases[l];
            }
        }
        const double loss = net.loss(xs, ys);
        if (!std::isfinite(loss)) {
            throw DivergenceError("training diverged at epoch " + std::to_string(epoch + 1) +
                                  " (non-finite loss); try a smaller learning rate than " +
                                  std::to_string(net.spec.learning_rate));
        }
        net.training_curve.push_back(loss);
    }
    return net;
}

Matrix to_matrix(const std::vector<std::vector<double>>& rows) {
    const auto cols = rows.empty() ? 0 : rows.front().size();
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != cols) throw DataError("ragged rows");
        for (std::size_t j = 0; j < cols; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
    return m;
}

std::vector<std::vector<double>> to_rows(const Matrix& m) {
    std::vector<std::vector<double>> out(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        auto& r = out[static_cast<std::size_t>(i)];
        r.resize(static_cast<std::size_t>(m.cols()));
        for (Eigen::Index j = 0; j < m.cols(); ++j) r[static_cast<std::size_t>(j)] = m(i, j);
    }
    return out;
}

nlohmann::json to_json(const NetworkSpec& s) {
    return {{"layer_sizes", s.layer_sizes},
            {"hidden_activation", to_string(s.hidden_activation)},
            {"output_activation", to_string(s.output_activation)},
            {"loss", to_string(s.loss)},
            {"seed", s.seed},
            {"learning_rate", s.learning_rate},
            {"epochs", s.epochs},
            {"batch", s.batch},
            {"clip_norm", s.clip_norm},
            {"linear_layer", s.linear_layer}};
}

NetworkSpec network_spec_from_json(const nlohmann::json& j) {
    NetworkSpec s;
    try {
        s.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
        s.hidden_activation = parse_activation(j.at("hidden_activation").get<std::string>());
        s.output_activation = parse_activation(j.at("output_activation").get<std::string>());
        s.loss = parse_loss(j.at("loss").get<std::string>());
        s.seed = j.at("seed").get<std::uint64_t>();
        s.learning_rate = j.at("learning_rate").get<double>();
        s.epochs = j.at("epochs").get<int>();
        s.batch = j.at("batch").get<int>();
        s.clip_norm = j.value("clip_norm", 0.0);
        s.linear_layer = j.value("linear_layer", -1);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed network spec: ") + e.what());
    }
    s.validate();
    return s;
}

nlohmann::json to_json(const Network& net) {
    nlohmann::json layers = nlohmann::json::array();
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        // Eigen is column-major; serialize row-major so the blob reads naturally.
        const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> w = net.weights[l];
        layers.push_back({{"shape", {w.rows(), w.cols()}},
                          {"weights", encode_doubles(std::span<const double>(w.data(), static_cast<std::size_t>(w.size())))},
                          {"biases", encode_doubles(std::span<const double>(net.biases[l].data(),
                                                                            static_cast<std::size_t>(net.biases[l].size())))}});
    }
    return {{"spec", to_json(net.spec)}, {"layers", layers}, {"training_curve", net.training_curve}};
}

Network network_from_json(const nlohmann::json& j) {
    Network net;
    try {
        net.spec = network_spec_from_json(j.at("spec"));
        for (const auto& layer : j.at("layers")) {
            const auto shape = layer.at("shape").get<std::vector<Eigen::Index>>();
            const auto w = decode_doubles(layer.at("weights").get<std::string>());
            const auto b = decode_doubles(layer.at("biases").get<std::string>());
            if (shape.size() != 2 || static_cast<Eigen::Index>(w.size()) != shape[0] * shape[1] ||
                static_cast<Eigen::Index>(b.size()) != shape[0]) {
                throw DataError("layer blob does not match its shape");
            }
            net.weights.push_back(
                Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(w.data(), shape[0],
                                                                                                       shape[1]));
            net.biases.push_back(Eigen::Map<const Vector>(b.data(), shape[0]));
        }
        net.training_curve = j.value("training_curve", std::vector<double>{});
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed network: ") + e.what());
    }
    if (net.weights.size() + 1 != net.spec.layer_sizes.size()) throw DataError("network layer count mismatch");
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        if (net.weights[l].rows() != net.spec.layer_sizes[l + 1] || net.weights[l].cols() != net.spec.layer_sizes[l]) {
            throw DataError("network layer " + std::to_string(l) + " has the wrong shape");
        }
    }
    return net;
}

}  // namespace auscult
