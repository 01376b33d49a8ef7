#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "flowsentry/matrix.hpp"

namespace flowsentry {

enum class OutputActivation { Sigmoid, Softmax };

/// Fully connected ReLU network with a sigmoid or softmax head. Parameters
/// live in one flat vector: for each layer, its weights (out x in, row-major)
/// followed by its biases.
class Mlp {
public:
    Mlp() = default;
    Mlp(std::vector<std::size_t> layer_sizes, OutputActivation head);

    /// [n_features, 20, 20, 1] with a sigmoid head for two classes,
    /// [n_features, 20, 20, n_classes] with softmax otherwise.
    static Mlp table8(std::size_t n_features, std::size_t n_classes);

    /// He-style uniform weights U(-sqrt(6 / fan_in), +sqrt(6 / fan_in)), zero biases.
    void init_he_uniform(std::uint64_t seed);

    const std::vector<std::size_t>& layer_sizes() const noexcept { return sizes_; }
    OutputActivation head() const noexcept { return head_; }
    std::size_t layer_count() const noexcept { return sizes_.empty() ? 0 : sizes_.size() - 1; }
    std::size_t input_size() const noexcept { return sizes_.front(); }
    std::size_t output_size() const noexcept { return sizes_.back(); }

    std::span<double> params() noexcept { return params_; }
    std::span<const double> params() const noexcept { return params_; }

    double& weight(std::size_t layer, std::size_t out, std::size_t in);
    double weight(std::size_t layer, std::size_t out, std::size_t in) const;
    double& bias(std::size_t layer, std::size_t out);
    double bias(std::size_t layer, std::size_t out) const;

    std::size_t weight_offset(std::size_t layer) const { return offsets_.at(layer); }
    std::size_t bias_offset(std::size_t layer) const {
        return offsets_.at(layer) + sizes_[layer] * sizes_[layer + 1];
    }

    bool operator==(const Mlp&) const = default;

private:
    std::vector<std::size_t> sizes_;
    std::vector<std::size_t> offsets_;
    OutputActivation head_ = OutputActivation::Sigmoid;
    std::vector<double> params_;
};

struct ForwardCache {
    std::vector<std::vector<double>> pre;          // affine outputs, one per layer
    std::vector<std::vector<double>> activations;  // activations[0] is the input
};

std::vector<double> forward(const Mlp& net, std::span<const double> x, ForwardCache* cache = nullptr);

inline constexpr double kOutputClamp = 1e-15;

/// Sigmoid: -[t ln p + (1 - t) ln(1 - p)] on the single output.
/// Softmax: -sum t_k ln p_k. Outputs are clamped to [1e-15, 1 - 1e-15].
double cross_entropy_loss(std::span<const double> output, std::span<const double> target, OutputActivation head);

/// Adds the gradient of cross_entropy_loss at the cached forward pass to grad.
void backward(const Mlp& net, const ForwardCache& cache, std::span<const double> target, std::span<double> grad);

struct AdamState {
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::vector<double> m;
    std::vector<double> v;
    long step = 0;

    AdamState() = default;
    explicit AdamState(std::size_t n_params) : m(n_params, 0.0), v(n_params, 0.0) {}
};

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads);

/// Mean loss over the rows (targets one row per sample).
double mean_loss(const Mlp& net, const Matrix& x, const Matrix& targets);

/// One Adam step on the mean loss of the given rows. Returns the mean loss
/// before the update.
double train_step(Mlp& net, AdamState& state, const Matrix& x, const Matrix& targets,
                  std::span<const std::size_t> rows);

/// Single sigmoid output: 1 iff p > 0.5. Softmax: argmax, lowest index on ties.
std::size_t predicted_class(std::span<const double> output);
std::vector<std::size_t> mlp_predict(const Mlp& net, const Matrix& x);

nlohmann::json to_json(const Mlp& net);
Mlp mlp_from_json(const nlohmann::json& j);

}  // namespace flowsentry
