#include "flowsentry/neuralnet.hpp"

#include <algorithm>
#include <cmath>

#include "flowsentry/error.hpp"
#include "flowsentry/random.hpp"

namespace flowsentry {

Mlp::Mlp(std::vector<std::size_t> layer_sizes, OutputActivation head) : sizes_(std::move(layer_sizes)), head_(head) {
    if (sizes_.size() < 2) throw InvalidArgument("an MLP needs at least an input and an output layer");
    for (auto s : sizes_) {
        if (s == 0) throw InvalidArgument("MLP layers must be non-empty");
    }
    if (head_ == OutputActivation::Sigmoid && sizes_.back() != 1) {
        throw InvalidArgument("a sigmoid head has exactly one output");
    }
    if (head_ == OutputActivation::Softmax && sizes_.back() < 2) {
        throw InvalidArgument("a softmax head needs at least two outputs");
    }
    std::size_t total = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
        offsets_.push_back(total);
        total += sizes_[l] * sizes_[l + 1] + sizes_[l + 1];
    }
    params_.assign(total, 0.0);
}

Mlp Mlp::table8(std::size_t n_features, std::size_t n_classes) {
    if (n_classes < 2) throw InvalidArgument("the network needs at least two classes");
    if (n_classes == 2) return Mlp({n_features, 20, 20, 1}, OutputActivation::Sigmoid);
    return Mlp({n_features, 20, 20, n_classes}, OutputActivation::Softmax);
}

void Mlp::init_he_uniform(std::uint64_t seed) {
    auto rng = make_rng(seed);
    for (std::size_t l = 0; l < layer_count(); ++l) {
        const double limit = std::sqrt(6.0 / static_cast<double>(sizes_[l]));
        std::uniform_real_distribution<double> u(-limit, limit);
        const std::size_t w = weight_offset(l);
        for (std::size_t i = 0; i < sizes_[l] * sizes_[l + 1]; ++i) params_[w + i] = u(rng);
        const std::size_t b = bias_offset(l);
        for (std::size_t i = 0; i < sizes_[l + 1]; ++i) params_[b + i] = 0.0;
    }
}

double& Mlp::weight(std::size_t layer, std::size_t out, std::size_t in) {
    return params_[weight_offset(layer) + out * sizes_[layer] + in];
}
double Mlp::weight(std::size_t layer, std::size_t out, std::size_t in) const {
    return params_[weight_offset(layer) + out * sizes_[layer] + in];
}
double& Mlp::bias(std::size_t layer, std::size_t out) { return params_[bias_offset(layer) + out]; }
double Mlp::bias(std::size_t layer, std::size_t out) const { return params_[bias_offset(layer) + out]; }

std::vector<double> forward(const Mlp& net, std::span<const double> x, ForwardCache* cache) {
    if (x.size() != net.input_size()) throw InvalidArgument("MLP input has the wrong size");
    const auto& sizes = net.layer_sizes();
    const auto params = net.params();
    std::vector<double> a(x.begin(), x.end());
    if (cache) {
        cache->pre.clear();
        cache->activations.clear();
        cache->activations.push_back(a);
    }
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        const std::size_t in = sizes[l];
        const std::size_t out = sizes[l + 1];
        const double* w = params.data() + net.weight_offset(l);
        const double* b = params.data() + net.bias_offset(l);
        std::vector<double> z(out);
        for (std::size_t j = 0; j < out; ++j) {
            double s = b[j];
            for (std::size_t i = 0; i < in; ++i) s += w[j * in + i] * a[i];
            z[j] = s;
        }
        std::vector<double> next(out);
        if (l + 1 < net.layer_count()) {
            for (std::size_t j = 0; j < out; ++j) next[j] = z[j] > 0.0 ? z[j] : 0.0;
        } else if (net.head() == OutputActivation::Sigmoid) {
            next[0] = 1.0 / (1.0 + std::exp(-z[0]));
        } else {
            const double mx = *std::max_element(z.begin(), z.end());
            double sum = 0.0;
            for (std::size_t j = 0; j < out; ++j) {
                next[j] = std::exp(z[j] - mx);
                sum += next[j];
            }
            for (auto& v : next) v /= sum;
        }
        if (cache) {
            cache->pre.push_back(z);
            cache->activations.push_back(next);
        }
        a = std::move(next);
    }
    return a;
}

double cross_entropy_loss(std::span<const double> output, std::span<const double> target, OutputActivation head) {
    if (output.size() != target.size()) throw InvalidArgument("loss output and target differ in size");
    auto clamp = [](double p) { return std::clamp(p, kOutputClamp, 1.0 - kOutputClamp); };
    if (head == OutputActivation::Sigmoid) {
        const double p = clamp(output[0]);
        return -(target[0] * std::log(p) + (1.0 - target[0]) * std::log(1.0 - p));
    }
    double loss = 0.0;
    for (std::size_t k = 0; k < output.size(); ++k) {
        if (target[k] != 0.0) loss -= target[k] * std::log(clamp(output[k]));
    }
    return loss;
}

void backward(const Mlp& net, const ForwardCache& cache, std::span<const double> target, std::span<double> grad) {
    if (grad.size() != net.params().size()) throw InvalidArgument("gradient buffer has the wrong size");
    if (target.size() != net.output_size()) throw InvalidArgument("target has the wrong size");
    const auto& sizes = net.layer_sizes();
    const auto params = net.params();
    const std::size_t layers = net.layer_count();

    // delta = dL/dz at the output layer.
    const auto& out = cache.activations.back();
    std::vector<double> delta(out.size());
    if (net.head() == OutputActivation::Sigmoid) {
        delta[0] = out[0] - target[0];
    } else {
        double mass = 0.0;
        for (auto t : target) mass += t;
        for (std::size_t k = 0; k < out.size(); ++k) delta[k] = out[k] * mass - target[k];
    }

    for (std::size_t l = layers; l-- > 0;) {
        const std::size_t in = sizes[l];
        const std::size_t outn = sizes[l + 1];
        const auto& a = cache.activations[l];
        double* gw = grad.data() + net.weight_offset(l);
        double* gb = grad.data() + net.bias_offset(l);
        for (std::size_t j = 0; j < outn; ++j) {
            gb[j] += delta[j];
            for (std::size_t i = 0; i < in; ++i) gw[j * in + i] += delta[j] * a[i];
        }
        if (l == 0) break;
        const double* w = params.data() + net.weight_offset(l);
        const auto& z = cache.pre[l - 1];
        std::vector<double> prev(in, 0.0);
        for (std::size_t i = 0; i < in; ++i) {
            if (z[i] <= 0.0) continue;
            double s = 0.0;
            for (std::size_t j = 0; j < outn; ++j) s += w[j * in + i] * delta[j];
            prev[i] = s;
        }
        delta = std::move(prev);
    }
}

void adam_step(AdamState& s, std::span<double> params, std::span<const double> grads) {
    if (params.size() != grads.size() || s.m.size() != params.size() || s.v.size() != params.size()) {
        throw InvalidArgument("Adam state, parameters and gradients differ in size");
    }
    ++s.step;
    const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
    const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * grads[i];
        s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * grads[i] * grads[i];
        const double mh = s.m[i] / c1;
        const double vh = s.v[i] / c2;
        params[i] -= s.learning_rate * mh / (std::sqrt(vh) + s.epsilon);
    }
}

double mean_loss(const Mlp& net, const Matrix& x, const Matrix& targets) {
    if (x.rows() == 0) throw InvalidArgument("mean loss over no rows");
    double total = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) total += cross_entropy_loss(forward(net, x.row(i)), targets.row(i), net.head());
    return total / static_cast<double>(x.rows());
}

double train_step(Mlp& net, AdamState& state, const Matrix& x, const Matrix& targets,
                  std::span<const std::size_t> rows) {
    if (rows.empty()) throw InvalidArgument("training step over no rows");
    std::vector<double> grad(net.params().size(), 0.0);
    ForwardCache cache;
    double loss = 0.0;
    for (auto r : rows) {
        auto out = forward(net, x.row(r), &cache);
        loss += cross_entropy_loss(out, targets.row(r), net.head());
        backward(net, cache, targets.row(r), grad);
    }
    const double scale = 1.0 / static_cast<double>(rows.size());
    for (auto& g : grad) g *= scale;
    adam_step(state, net.params(), grad);
    return loss * scale;
}

std::size_t predicted_class(std::span<const double> output) {
    if (output.size() == 1) return output[0] > 0.5 ? 1 : 0;
    return static_cast<std::size_t>(std::max_element(output.begin(), output.end()) - output.begin());
}

std::vector<std::size_t> mlp_predict(const Mlp& net, const Matrix& x) {
    std::vector<std::size_t> out(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) out[i] = predicted_class(forward(net, x.row(i)));
    return out;
}

nlohmann::json to_json(const Mlp& net) {
    nlohmann::json layers = nlohmann::json::array();
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        const auto in = net.layer_sizes()[l];
        const auto out = net.layer_sizes()[l + 1];
        nlohmann::json w = nlohmann::json::array();
        for (std::size_t j = 0; j < out; ++j) {
            std::vector<double> row(in);
            for (std::size_t i = 0; i < in; ++i) row[i] = net.weight(l, j, i);
            w.push_back(row);
        }
        std::vector<double> b(out);
        for (std::size_t j = 0; j < out; ++j) b[j] = net.bias(l, j);
        layers.push_back({{"shape", {out, in}}, {"weights", std::move(w)}, {"biases", b}});
    }
    return {{"layer_sizes", net.layer_sizes()},
            {"head", net.head() == OutputActivation::Sigmoid ? "sigmoid" : "softmax"},
            {"layers", std::move(layers)}};
}

Mlp mlp_from_json(const nlohmann::json& j) {
    auto head_name = j.at("head").get<std::string>();
    OutputActivation head;
    if (head_name == "sigmoid") head = OutputActivation::Sigmoid;
    else if (head_name == "softmax") head = OutputActivation::Softmax;
    else throw DataError("unknown MLP head '" + head_name + "'");
    Mlp net(j.at("layer_sizes").get<std::vector<std::size_t>>(), head);
    const auto& layers = j.at("layers");
    if (layers.size() != net.layer_count()) throw DataError("MLP JSON layer count mismatch");
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        auto w = layers[l].at("weights").get<std::vector<std::vector<double>>>();
        auto b = layers[l].at("biases").get<std::vector<double>>();
        const auto in = net.layer_sizes()[l];
        const auto out = net.layer_sizes()[l + 1];
        if (w.size() != out || b.size() != out) throw DataError("MLP JSON layer shape mismatch");
        for (std::size_t o = 0; o < out; ++o) {
            if (w[o].size() != in) throw DataError("MLP JSON layer shape mismatch");
            for (std::size_t i = 0; i < in; ++i) net.weight(l, o, i) = w[o][i];
            net.bias(l, o) = b[o];
        }
    }
    return net;
}

}  // namespace flowsentry
