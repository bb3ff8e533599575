#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace auscult {

enum class Activation { Relu, Logistic, Tanh, Identity, Softmax };
enum class Loss { Mse, CrossEntropy };

Activation parse_activation(std::string_view s);
std::string_view to_string(Activation a);
Loss parse_loss(std::string_view s);
std::string_view to_string(Loss l);

struct NetworkSpec {
    std::vector<int> layer_sizes;  ///< input, hidden..., output
    Activation hidden_activation = Activation::Relu;
    Activation output_activation = Activation::Softmax;
    Loss loss = Loss::CrossEntropy;
    std::uint64_t seed = 0;
    double learning_rate = 1e-3;
    int epochs = 200;
    int batch = 32;
    double clip_norm = 0.0;  ///< global gradient-norm cap; 0 disables
    /// Index into layer_sizes of a hidden layer kept linear (an autoencoder code);
    /// -1 for none.
    int linear_layer = -1;

    /// Activation applied at layer_sizes[layer], layer >= 1.
    Activation activation_at(std::size_t layer) const;

    /// Cross-entropy needs a logistic or softmax output; softmax is output-only.
    void validate() const;
};

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Fully connected network. weights[l] maps layer l to l+1 and is
/// (size[l+1] x size[l]); inputs are rows.
struct Network {
    NetworkSpec spec;
    std::vector<Matrix> weights;
    std::vector<Vector> biases;
    std::vector<double> training_curve;  ///< mean loss over the training set after each epoch

    /// Output activations, one row per input row.
    Matrix forward(const Matrix& x) const;
    /// Activations of every layer (index 0 = input).
    std::vector<Matrix> activations(const Matrix& x) const;
    /// Mean per-sample loss. MSE averages over output units; cross-entropy sums.
    double loss(const Matrix& x, const Matrix& y) const;
};

struct Gradients {
    std::vector<Matrix> weights;
    std::vector<Vector> biases;

    double norm() const;
};

/// Glorot-uniform weights, zero biases; a pure function of spec.seed.
Network init_network(const NetworkSpec& spec);

/// Exact gradient of Network::loss over the batch.
Gradients backward(const Network& net, const Matrix& x, const Matrix& y);

/// Minibatch SGD for spec.epochs. Rows are put in a canonical order before the
/// seeded shuffle, so the result does not depend on the order they arrive in.
/// Throws DivergenceError on a non-finite loss.
Network train(Network net, const Matrix& x, const Matrix& y);

/// Row-major helpers between Rows-style data and Eigen.
Matrix to_matrix(const std::vector<std::vector<double>>& rows);
std::vector<std::vector<double>> to_rows(const Matrix& m);

nlohmann::json to_json(const NetworkSpec& spec);
NetworkSpec network_spec_from_json(const nlohmann::json& j);
/// Layer shapes plus base-64 little-endian float64 weights and biases.
nlohmann::json to_json(const Network& net);
Network network_from_json(const nlohmann::json& j);

}  // namespace auscult
