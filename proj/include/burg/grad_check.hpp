#pragma once

#include <functional>
#include <vector>

#include "burg/tensor.hpp"

namespace burg {

/// Compares the analytic gradient of `f` against central finite differences
/// at the parameters' current values. `f` must rebuild its graph from the
/// parameter tensors on every call. Returns
/// max over coordinates of |analytic - fd| / max(1, |fd|).
/// Parameters are restored on exit; their gradients are left zeroed.
double grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& params,
                  double h = 1e-5);

}  // namespace burg
