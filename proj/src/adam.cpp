#include "burg/adam.hpp"

#include <cmath>
#include <string>

#include "burg/errors.hpp"

namespace burg {

Adam::Adam(std::vector<Tensor> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
    if (!(options_.learning_rate > 0.0)) throw ContractError("Adam: learning_rate must be positive");
    if (!(options_.beta1 > 0.0 && options_.beta1 < 1.0))
        throw ContractError("Adam: beta1 must lie in (0,1)");
    if (!(options_.beta2 > 0.0 && options_.beta2 < 1.0))
        throw ContractError("Adam: beta2 must lie in (0,1)");
    if (!(options_.epsilon > 0.0)) throw ContractError("Adam: epsilon must be positive");
    first_moment_.reserve(params_.size());
    second_moment_.reserve(params_.size());
    for (const Tensor& p : params_) {
        if (!p.requires_grad()) throw ContractError("Adam: parameter does not track gradients");
        first_moment_.emplace_back(p.numel(), 0.0);
        second_moment_.emplace_back(p.numel(), 0.0);
    }
}

void Adam::step() {
    ++step_count_;
    const double t = static_cast<double>(step_count_);
    const double correction1 = 1.0 - std::pow(options_.beta1, t);
    const double correction2 = 1.0 - std::pow(options_.beta2, t);
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
        Tensor& param = params_[pi];
        const auto grad = param.grad();
        auto values = param.mutable_values();
        auto& m = first_moment_[pi];
        auto& v = second_moment_[pi];
        for (std::size_t i = 0; i < grad.size(); ++i) {
            const double g = grad[i];
            if (!std::isfinite(g)) {
                const std::string label =
                    param.name().empty() ? "parameter #" + std::to_string(pi) : param.name();
                throw NumericError("Adam: non-finite gradient in " + label);
            }
            m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * g;
            v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * g * g;
            const double m_hat = m[i] / correction1;
            const double v_hat = v[i] / correction2;
            values[i] -= options_.learning_rate * m_hat / (std::sqrt(v_hat) + options_.epsilon);
        }
    }
}

void Adam::zero_grad() {
    for (Tensor& p : params_) p.zero_grad();
}

}  // namespace burg
