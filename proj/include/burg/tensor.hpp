#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace burg {

using Shape = std::vector<std::size_t>;

namespace detail {
struct TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;
struct OpAccess;
}  // namespace detail

/// Dense 64-bit tensor with reverse-mode gradients.
///
/// A Tensor is a cheap handle onto a graph node. Ops on tensors whose inputs
/// require gradients record the backward function; `backward()` on a scalar
/// loss accumulates d(loss)/d(node) into every node on the path. Repeated
/// backward calls accumulate until `zero_grad()`.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from_values(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    /// 1-D tensor of shape [n].
    static Tensor row(std::vector<double> values, bool requires_grad = false);
    /// 2-D tensor of shape [rows, cols], row-major values.
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                         bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t ndim() const;
    std::size_t numel() const;
    /// Extent of dim 0 (1 for scalars).
    std::size_t rows() const;
    /// Extent of the last dim (1 for scalars).
    std::size_t cols() const;
    bool requires_grad() const;

    const std::string& name() const;
    Tensor& set_name(std::string name);

    std::span<const double> values() const;
    /// Direct write access to a leaf's buffer (optimizer steps, loaders,
    /// finite-difference probes). Mutating a non-leaf invalidates any graph
    /// already built from it.
    std::span<double> mutable_values();
    /// Empty span when requires_grad is false.
    std::span<const double> grad() const;

    double value_at(std::size_t index) const;
    /// Sole element of a one-element tensor.
    double item() const;

    void zero_grad();
    /// Value copy detached from the graph; never requires grad.
    Tensor detach() const;
    /// Reverse-mode pass from a scalar. Accumulates into `grad()` of every
    /// tensor on the path.
    void backward() const;

    bool same_node(const Tensor& other) const { return node_.get() == other.node_.get(); }

private:
    explicit Tensor(detail::NodePtr node) : node_(std::move(node)) {}
    detail::NodePtr node_;
    friend struct detail::OpAccess;
};

/// While alive, newly created tensors record no graph; results are constants.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool autograd_enabled();

// Forward ops. Shapes must conform; mismatches raise ShapeError naming both
// shapes. add/sub/mul broadcast a scalar, a row [n] / [1,n] against [B,n],
// or a column [B,1] against [B,n].
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double constant);
Tensor exp(const Tensor& a);
/// Natural log; any element <= 0 raises DomainError.
Tensor log(const Tensor& a);
/// Elementwise square root; negative elements raise DomainError.
Tensor sqrt(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor clamp_min(const Tensor& a, double floor);
/// Softmax over the last axis of a 2-D tensor.
Tensor softmax_rows(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// [B,n] -> [B,1] sums over the last axis.
Tensor row_sum(const Tensor& a);
/// Scalar sum of squared elements.
Tensor squared_norm(const Tensor& a);
Tensor concat_cols(const Tensor& a, const Tensor& b);
std::pair<Tensor, Tensor> split_cols(const Tensor& a, std::size_t at);

}  // namespace burg
