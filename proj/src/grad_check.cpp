#include "burg/grad_check.hpp"

#include <cmath>

#include "burg/errors.hpp"

namespace burg {

double grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& params, double h) {
    if (!(h > 0.0)) throw ContractError("grad_check: perturbation must be positive");

    std::vector<Tensor> leaves = params;
    for (Tensor& p : leaves) p.zero_grad();

    Tensor loss = f();
    if (!std::isfinite(loss.item()))
        throw NumericError("grad_check: loss is not finite at the probe point");
    loss.backward();

    std::vector<std::vector<double>> analytic;
    analytic.reserve(leaves.size());
    for (const Tensor& p : leaves) {
        const auto g = p.grad();
        analytic.emplace_back(g.begin(), g.end());
    }

    auto eval = [&]() {
        NoGradGuard guard;
        const double value = f().item();
        if (!std::isfinite(value))
            throw NumericError("grad_check: loss is not finite at a probe point");
        return value;
    };

    double worst = 0.0;
    for (std::size_t pi = 0; pi < leaves.size(); ++pi) {
        auto values = leaves[pi].mutable_values();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double original = values[i];
            values[i] = original + h;
            const double plus = eval();
            values[i] = original - h;
            const double minus = eval();
            values[i] = original;
            const double fd = (plus - minus) / (2.0 * h);
            const double err = std::abs(analytic[pi][i] - fd) / std::max(1.0, std::abs(fd));
            worst = std::max(worst, err);
        }
        leaves[pi].zero_grad();
    }
    return worst;
}

}  // namespace burg
