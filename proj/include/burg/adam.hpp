#pragma once

#include <cstddef>
#include <vector>

#include "burg/tensor.hpp"

namespace burg {

struct AdamOptions {
    double learning_rate = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Bias-corrected Adam over a fixed parameter set.
class Adam {
public:
    Adam(std::vector<Tensor> params, AdamOptions options = {});

    /// One update from the parameters' current gradients. Non-finite
    /// gradients raise NumericError naming the parameter.
    void step();
    void zero_grad();

    std::size_t step_count() const { return step_count_; }
    const AdamOptions& options() const { return options_; }

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> first_moment_;
    std::vector<std::vector<double>> second_moment_;
    std::size_t step_count_ = 0;
    AdamOptions options_;
};

}  // namespace burg
