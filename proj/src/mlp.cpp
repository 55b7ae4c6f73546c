#include "burg/mlp.hpp"

#include <cmath>

#include "burg/errors.hpp"

namespace burg {

Activation activation_from_string(const std::string& name) {
    if (name == "relu") return Activation::relu;
    if (name == "tanh") return Activation::tanh;
    throw ConfigError("unknown activation '" + name + "' (expected relu or tanh)");
}

std::string to_string(Activation activation) {
    return activation == Activation::relu ? "relu" : "tanh";
}

void MlpSpec::validate() const {
    if (input_dim == 0 || output_dim == 0)
        throw ConfigError("mlp: input and output dims must be positive");
    for (std::size_t h : hidden_dims)
        if (h == 0) throw ConfigError("mlp: hidden dim must be positive");
}

Mlp::Mlp(MlpSpec spec, Rng& rng, const std::string& name_prefix) : spec_(std::move(spec)) {
    spec_.validate();
    std::vector<std::size_t> dims;
    dims.push_back(spec_.input_dim);
    dims.insert(dims.end(), spec_.hidden_dims.begin(), spec_.hidden_dims.end());
    dims.push_back(spec_.output_dim);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const std::size_t fan_in = dims[l], fan_out = dims[l + 1];
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::vector<double> w(fan_in * fan_out);
        for (double& value : w) value = rng.uniform(-bound, bound);
        Tensor weight = Tensor::matrix(fan_in, fan_out, std::move(w), true);
        weight.set_name(name_prefix + "/W" + std::to_string(l));
        weights_.push_back(std::move(weight));
        Tensor bias = Tensor::zeros({fan_out}, true);
        bias.set_name(name_prefix + "/b" + std::to_string(l));
        biases_.push_back(std::move(bias));
    }
}

Tensor Mlp::forward(const Tensor& x) const {
    if (x.ndim() != 2 || x.cols() != spec_.input_dim)
        throw ShapeError("mlp '" + (weights_.empty() ? std::string() : weights_[0].name()) +
                         "': input has " + std::to_string(x.cols()) + " columns, expected " +
                         std::to_string(spec_.input_dim));
    Tensor h = x;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        h = add(matmul(h, weights_[l]), biases_[l]);
        if (l + 1 < weights_.size())
            h = spec_.activation == Activation::relu ? relu(h) : burg::tanh(h);
    }
    return h;
}

std::vector<Tensor> Mlp::parameters() const {
    std::vector<Tensor> params;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        params.push_back(weights_[l]);
        params.push_back(biases_[l]);
    }
    return params;
}

}  // namespace burg
