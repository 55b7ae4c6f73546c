#pragma once

#include <string>
#include <vector>

#include "burg/rng.hpp"
#include "burg/tensor.hpp"

namespace burg {

enum class Activation { relu, tanh };

Activation activation_from_string(const std::string& name);
std::string to_string(Activation activation);

struct MlpSpec {
    std::size_t input_dim = 0;
    std::size_t output_dim = 0;
    std::vector<std::size_t> hidden_dims;
    Activation activation = Activation::relu;

    void validate() const;
};

/// Fully connected net; activation between layers, linear output.
/// Weights start uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases at zero.
class Mlp {
public:
    Mlp() = default;
    Mlp(MlpSpec spec, Rng& rng, const std::string& name_prefix);

    Tensor forward(const Tensor& x) const;
    std::vector<Tensor> parameters() const;
    const MlpSpec& spec() const { return spec_; }

private:
    MlpSpec spec_;
    std::vector<Tensor> weights_;  // [in, out] per layer
    std::vector<Tensor> biases_;   // [out] per layer
};

}  // namespace burg
