#include "burg/tensor.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "burg/errors.hpp"

namespace burg {

namespace detail {

class GradStore;
using BackFn = std::function<void(GradStore&, const TensorNode&)>;

struct TensorNode {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;  // sized iff requires_grad
    bool requires_grad = false;
    std::string name;
    std::vector<NodePtr> parents;
    BackFn backprop;

    std::size_t numel() const { return values.size(); }
};

/// Scratch gradients for one backward sweep. Keeping the sweep's gradients
/// outside the nodes lets repeated backward calls accumulate exactly.
class GradStore {
public:
    std::vector<double>& buffer(const TensorNode& node) {
        auto [it, inserted] = buffers_.try_emplace(&node);
        if (inserted) it->second.assign(node.numel(), 0.0);
        return it->second;
    }

    const std::vector<double>* find(const TensorNode* node) const {
        auto it = buffers_.find(node);
        return it == buffers_.end() ? nullptr : &it->second;
    }

private:
    std::unordered_map<const TensorNode*, std::vector<double>> buffers_;
};

struct OpAccess {
    static const NodePtr& node(const Tensor& t) { return t.node_; }
    static Tensor wrap(NodePtr node) { return Tensor(std::move(node)); }
};

}  // namespace detail

using detail::GradStore;
using detail::NodePtr;
using detail::OpAccess;
using detail::TensorNode;

namespace {

thread_local bool g_autograd_enabled = true;

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t extent : shape) n *= extent;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << ',';
        out << shape[i];
    }
    out << ']';
    return out.str();
}

NodePtr make_leaf(Shape shape, std::vector<double> values, bool requires_grad) {
    auto node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->values = std::move(values);
    node->requires_grad = requires_grad && g_autograd_enabled;
    if (node->requires_grad) node->grad.assign(node->values.size(), 0.0);
    return node;
}

/// Builds an op result. Parents and the backward function are dropped when
/// no input tracks gradients, so constant subgraphs are never retained.
Tensor make_op(Shape shape, std::vector<double> values, std::vector<NodePtr> parents,
               detail::BackFn backprop) {
    auto node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->values = std::move(values);
    bool track = g_autograd_enabled;
    if (track) {
        bool any = false;
        for (const auto& p : parents) any = any || (p && p->requires_grad);
        track = any;
    }
    node->requires_grad = track;
    if (track) {
        node->grad.assign(node->values.size(), 0.0);
        node->parents = std::move(parents);
        node->backprop = std::move(backprop);
    }
    return OpAccess::wrap(std::move(node));
}

const NodePtr& need(const Tensor& t, const char* op) {
    const NodePtr& n = OpAccess::node(t);
    if (!n) throw ContractError(std::string(op) + ": undefined tensor");
    return n;
}

void require_2d(const TensorNode& n, const char* op) {
    if (n.shape.size() != 2)
        throw ShapeError(std::string(op) + ": expected 2-D tensor, got " + shape_str(n.shape));
}

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<EMat>;
using CMatMap = Eigen::Map<const EMat>;

// How the smaller operand of a binary op maps onto the larger one.
enum class Bcast { same, scalar, row, col };

struct BinaryPlan {
    bool b_is_small = true;  // false: a is the broadcast operand
    Bcast kind = Bcast::same;
    std::size_t rows = 1;
    std::size_t cols = 1;
    Shape out_shape;
};

BinaryPlan plan_binary(const TensorNode& a, const TensorNode& b, const char* op) {
    BinaryPlan plan;
    auto fail = [&]() -> BinaryPlan {
        throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape) + " and " +
                         shape_str(b.shape) + " are not compatible");
    };
    if (a.shape == b.shape) {
        plan.kind = Bcast::same;
        plan.out_shape = a.shape;
        plan.rows = a.numel();
        plan.cols = 1;
        return plan;
    }
    auto classify = [&](const TensorNode& big, const TensorNode& small) -> bool {
        if (small.numel() == 1) {
            plan.kind = Bcast::scalar;
            plan.out_shape = big.shape;
            plan.rows = big.shape.empty() ? 1 : big.shape.front();
            plan.cols = big.numel() / std::max<std::size_t>(plan.rows, 1);
            return true;
        }
        if (big.shape.size() != 2) return false;
        const std::size_t r = big.shape[0], c = big.shape[1];
        const bool is_row = (small.shape.size() == 1 && small.shape[0] == c) ||
                            (small.shape.size() == 2 && small.shape[0] == 1 && small.shape[1] == c);
        if (is_row) {
            plan.kind = Bcast::row;
            plan.out_shape = big.shape;
            plan.rows = r;
            plan.cols = c;
            return true;
        }
        const bool is_col = small.shape.size() == 2 && small.shape[0] == r && small.shape[1] == 1;
        if (is_col) {
            plan.kind = Bcast::col;
            plan.out_shape = big.shape;
            plan.rows = r;
            plan.cols = c;
            return true;
        }
        return false;
    };
    if (classify(a, b)) {
        plan.b_is_small = true;
        return plan;
    }
    if (classify(b, a)) {
        plan.b_is_small = false;
        return plan;
    }
    return fail();
}

// Reads the broadcast operand's element for position (i, j).
inline double small_at(const std::vector<double>& small, const BinaryPlan& plan, std::size_t i,
                       std::size_t j) {
    switch (plan.kind) {
        case Bcast::scalar: return small[0];
        case Bcast::row: return small[j];
        case Bcast::col: return small[i];
        default: return small[i * plan.cols + j];
    }
}

inline std::size_t small_index(const BinaryPlan& plan, std::size_t i, std::size_t j) {
    switch (plan.kind) {
        case Bcast::scalar: return 0;
        case Bcast::row: return j;
        case Bcast::col: return i;
        default: return i * plan.cols + j;
    }
}

Tensor unary_op(const Tensor& input, const char* op, const std::function<double(double)>& fwd,
                detail::BackFn back) {
    const NodePtr& node = need(input, op);
    std::vector<double> out(node->numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(node->values[i]);
    return make_op(node->shape, std::move(out), {node}, std::move(back));
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor handle
// ---------------------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    std::vector<double> values(shape_numel(shape), 0.0);
    return OpAccess::wrap(make_leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    std::vector<double> values(shape_numel(shape), value);
    return OpAccess::wrap(make_leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values, bool requires_grad) {
    if (shape_numel(shape) != values.size())
        throw ShapeError("Tensor: shape " + shape_str(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
    return OpAccess::wrap(make_leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return OpAccess::wrap(make_leaf({}, {value}, requires_grad));
}

Tensor Tensor::row(std::vector<double> values, bool requires_grad) {
    Shape shape{values.size()};
    return OpAccess::wrap(make_leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                      bool requires_grad) {
    return from_values({rows, cols}, std::move(values), requires_grad);
}

const Shape& Tensor::shape() const { return need(*this, "shape")->shape; }

std::size_t Tensor::ndim() const { return need(*this, "ndim")->shape.size(); }

std::size_t Tensor::numel() const { return need(*this, "numel")->numel(); }

std::size_t Tensor::rows() const {
    const auto& s = need(*this, "rows")->shape;
    return s.empty() ? 1 : s.front();
}

std::size_t Tensor::cols() const {
    const auto& s = need(*this, "cols")->shape;
    return s.empty() ? 1 : s.back();
}

bool Tensor::requires_grad() const { return need(*this, "requires_grad")->requires_grad; }

const std::string& Tensor::name() const { return need(*this, "name")->name; }

Tensor& Tensor::set_name(std::string name) {
    need(*this, "set_name")->name = std::move(name);
    return *this;
}

std::span<const double> Tensor::values() const {
    const NodePtr& n = need(*this, "values");
    return {n->values.data(), n->values.size()};
}

std::span<double> Tensor::mutable_values() {
    const NodePtr& n = need(*this, "mutable_values");
    return {n->values.data(), n->values.size()};
}

std::span<const double> Tensor::grad() const {
    const NodePtr& n = need(*this, "grad");
    if (!n->requires_grad) return {};
    return {n->grad.data(), n->grad.size()};
}

double Tensor::value_at(std::size_t index) const {
    const NodePtr& n = need(*this, "value_at");
    if (index >= n->numel()) throw ContractError("value_at: index out of range");
    return n->values[index];
}

double Tensor::item() const {
    const NodePtr& n = need(*this, "item");
    if (n->numel() != 1)
        throw ContractError("item: tensor of shape " + shape_str(n->shape) + " is not a scalar");
    return n->values[0];
}

void Tensor::zero_grad() {
    const NodePtr& n = need(*this, "zero_grad");
    std::fill(n->grad.begin(), n->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
    const NodePtr& n = need(*this, "detach");
    return OpAccess::wrap(make_leaf(n->shape, n->values, false));
}

void Tensor::backward() const {
    const NodePtr& root = need(*this, "backward");
    if (root->numel() != 1)
        throw ContractError("backward: loss must be a scalar, got shape " +
                            shape_str(root->shape));
    if (!root->requires_grad) return;  // constant loss: nothing is tracked

    // Iterative postorder DFS: parents before children, root last.
    std::vector<TensorNode*> order;
    std::unordered_set<const TensorNode*> visited;
    struct Frame {
        TensorNode* node;
        std::size_t next_parent;
    };
    std::vector<Frame> stack;
    stack.push_back({root.get(), 0});
    visited.insert(root.get());
    while (!stack.empty()) {
        Frame& frame = stack.back();
        if (frame.next_parent < frame.node->parents.size()) {
            TensorNode* parent = frame.node->parents[frame.next_parent++].get();
            if (parent && !visited.count(parent)) {
                visited.insert(parent);
                stack.push_back({parent, 0});
            }
        } else {
            order.push_back(frame.node);
            stack.pop_back();
        }
    }

    GradStore store;
    store.buffer(*root)[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode* node = *it;
        if (node->backprop && store.find(node)) node->backprop(store, *node);
    }
    for (TensorNode* node : order) {
        if (!node->requires_grad) continue;
        if (const auto* scratch = store.find(node)) {
            for (std::size_t i = 0; i < node->grad.size(); ++i) node->grad[i] += (*scratch)[i];
        }
    }
}

NoGradGuard::NoGradGuard() : previous_(g_autograd_enabled) { g_autograd_enabled = false; }

NoGradGuard::~NoGradGuard() { g_autograd_enabled = previous_; }

bool autograd_enabled() { return g_autograd_enabled; }

// ---------------------------------------------------------------------------
// Binary ops
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    const NodePtr& na = need(a, "matmul");
    const NodePtr& nb = need(b, "matmul");
    require_2d(*na, "matmul");
    require_2d(*nb, "matmul");
    const std::size_t m = na->shape[0], k = na->shape[1];
    const std::size_t k2 = nb->shape[0], n = nb->shape[1];
    if (k != k2)
        throw ShapeError("matmul: shapes " + shape_str(na->shape) + " and " +
                         shape_str(nb->shape) + " are not compatible");
    std::vector<double> out(m * n);
    {
        CMatMap ma(na->values.data(), m, k);
        CMatMap mb(nb->values.data(), k, n);
        MatMap mo(out.data(), m, n);
        mo.noalias() = ma * mb;
    }
    auto back = [na, nb, m, k, n](GradStore& gs, const TensorNode& self) {
        const auto& gout = *gs.find(&self);
        CMatMap go(gout.data(), m, n);
        if (na->requires_grad) {
            CMatMap mb(nb->values.data(), k, n);
            MatMap ga(gs.buffer(*na).data(), m, k);
            ga.noalias() += go * mb.transpose();
        }
        if (nb->requires_grad) {
            CMatMap ma(na->values.data(), m, k);
            MatMap gb(gs.buffer(*nb).data(), k, n);
            gb.noalias() += ma.transpose() * go;
        }
    };
    return make_op({m, n}, std::move(out), {na, nb}, std::move(back));
}

Tensor add(const Tensor& a, const Tensor& b) {
    const NodePtr& na = need(a, "add");
    const NodePtr& nb = need(b, "add");
    const BinaryPlan plan = plan_binary(*na, *nb, "add");
    const NodePtr& big = plan.b_is_small ? na : nb;
    const NodePtr& small = plan.b_is_small ? nb : na;
    std::vector<double> out(big->numel());
    for (std::size_t i = 0; i < plan.rows; ++i)
        for (std::size_t j = 0; j < plan.cols; ++j) {
            const std::size_t idx = i * plan.cols + j;
            out[idx] = big->values[idx] + small_at(small->values, plan, i, j);
        }
    auto back = [na, nb, plan](GradStore& gs, const TensorNode& self) {
        const auto& gout = *gs.find(&self);
        const NodePtr& big = plan.b_is_small ? na : nb;
        const NodePtr& small = plan.b_is_small ? nb : na;
        if (big->requires_grad) {
            auto& gb = gs.buffer(*big);
            for (std::size_t i = 0; i < gout.size(); ++i) gb[i] += gout[i];
        }
        if (small->requires_grad) {
            auto& gsm = gs.buffer(*small);
            for (std::size_t i = 0; i < plan.rows; ++i)
                for (std::size_t j = 0; j < plan.cols; ++j)
                    gsm[small_index(plan, i, j)] += gout[i * plan.cols + j];
        }
    };
    return make_op(plan.out_shape, std::move(out), {na, nb}, std::move(back));
}

Tensor mul(const Tensor& a, const Tensor& b) {
    const NodePtr& na = need(a, "mul");
    const NodePtr& nb = need(b, "mul");
    const BinaryPlan plan = plan_binary(*na, *nb, "mul");
    const NodePtr& big = plan.b_is_small ? na : nb;
    const NodePtr& small = plan.b_is_small ? nb : na;
    std::vector<double> out(big->numel());
    for (std::size_t i = 0; i < plan.rows; ++i)
        for (std::size_t j = 0; j < plan.cols; ++j) {
            const std::size_t idx = i * plan.cols + j;
            out[idx] = big->values[idx] * small_at(small->values, plan, i, j);
        }
    auto back = [na, nb, plan](GradStore& gs, const TensorNode& self) {
        const auto& gout = *gs.find(&self);
        const NodePtr& big = plan.b_is_small ? na : nb;
        const NodePtr& small = plan.b_is_small ? nb : na;
        if (big->requires_grad) {
            auto& gb = gs.buffer(*big);
            for (std::size_t i = 0; i < plan.rows; ++i)
                for (std::size_t j = 0; j < plan.cols; ++j) {
                    const std::size_t idx = i * plan.cols + j;
                    gb[idx] += gout[idx] * small_at(small->values, plan, i, j);
                }
        }
        if (small->requires_grad) {
            auto& gsm = gs.buffer(*small);
            for (std::size_t i = 0; i < plan.rows; ++i)
                for (std::size_t j = 0; j < plan.cols; ++j) {
                    const std::size_t idx = i * plan.cols + j;
                    gsm[small_index(plan, i, j)] += gout[idx] * big->values[idx];
                }
        }
    };
    return make_op(plan.out_shape, std::move(out), {na, nb}, std::move(back));
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, neg(b)); }

// ---------------------------------------------------------------------------
// Unary ops
// ---------------------------------------------------------------------------

Tensor neg(const Tensor& a) {
    const NodePtr& na = need(a, "neg");
    return unary_op(
        a, "neg", [](double x) { return -x; },
        [na](GradStore& gs, const TensorNode& self) {
            if (!na->requires_grad) return;
            const auto& gout = *gs.find(&self);
            auto& ga = gs.buffer(*na);
            for (std::size_t i = 0; i < gout.size(); ++i) ga[i] -= gout[i];
        });
}

Tensor scale(const Tensor& a, double factor) {
    const NodePtr& na = need(a, "scale");
    return unary_op(
        a, "scale", [factor](double x) { return factor * x; },
        [na, factor](GradStore& gs, const TensorNode& self) {
            if (!na->requires_grad) return;
            const auto& gout = *gs.find(&self);
            auto& ga = gs.buffer(*na);
            for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += factor * gout[i];
        });
}

Tensor add_scalar(const Tensor& a, double constant) {
    const NodePtr& na = need(a, "add_scalar");
    return unary_op(
        a, "add_scalar", [constant](double x) { return x + constant; },
        [na](GradStore& gs, const TensorNode& self) {
            if (!na->requires_grad) return;
            const auto& gout = *gs.find(&self);
            auto& ga = gs.buffer(*na);
            for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i];
        });
}

Tensor exp(const Tensor& a) {
    const NodePtr& na = need(a, "exp");
    return unary_op(
        a, "exp", [](double x) { return std::exp(x); },
        [na](GradStore& gs, const TensorNode& self) {
            if (!na->requires_grad) return;
            const auto& gout = *gs.find(&self);
            auto& ga = gs.buffer(*na);
            for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i] * self.values[i];
        });
}

Tensor log(const Tensor& a) {
    const NodePtr& na = need(a, "log");
    for (double v : na->values)
        if (!(v > 0.0))
            throw DomainError("log: element " + std::to_string(v) + " is not positive");
    return unary_op(
        a, "log", [](double x) { return std::log(x); },
        [na](GradStore& gs, const TensorNode& self) {
            if (!na->requires_grad) return;
            const auto& gout = *gs.find(&self);
            auto& ga = gs.buffer(*na);
            for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i] / na->values[i];
        });
}

Tensor sqrt(const Tensor& a) {
    const NodePtr& na = need(a, "sqrt");
    for (double v : na->values)
        if (v < 0.0) throw DomainError("sqrt: element " + std::to_string(v) + " is negative");
    return unary_op(
        a, "sqrt", [](double x) { return std::sqrt(x); },
        [na](GradStore& gs, const TensorNode& self) {
            if (!na->requires_grad) return;
            const auto& gout = *gs.find(&self);
            auto& ga = gs.buffer(*na);
            for (std::size_t i = 0; i < gout.size(); ++i)
                ga[i] += gout[i] * 0.5 / self.values[i];
        });
}

Tensor tanh(const Tensor& a) {
    const NodePtr& na = need(a, "tanh");
    return unary_op(
        a, "tanh", [](double x) { return std::tanh(x); },
        [na](GradStore& gs, const TensorNode& self) {
            if (!na->requires_grad) return;
            const auto& gout = *gs.find(&self);
            auto& ga = gs.buffer(*na);
            for (std::size_t i = 0; i < gout.size(); ++i)
                ga[i] += gout[i] * (1.0 - self.values[i] * self.values[i]);
        });
}

Tensor relu(const Tensor& a) {
    const NodePtr& na = need(a, "relu");
    return unary_op(
        a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
        [na](GradStore& gs, const TensorNode& self) {
            if (!na->requires_grad) return;
            const auto& gout = *gs.find(&self);
            auto& ga = gs.buffer(*na);
            for (std::size_t i = 0; i < gout.size(); ++i)
                if (na->values[i] > 0.0) ga[i] += gout[i];
        });
}

Tensor clamp_min(const Tensor& a, double floor) {
    const NodePtr& na = need(a, "clamp_min");
    return unary_op(
        a, "clamp_min", [floor](double x) { return x < floor ? floor : x; },
        [na, floor](GradStore& gs, const TensorNode& self) {
            if (!na->requires_grad) return;
            const auto& gout = *gs.find(&self);
            auto& ga = gs.buffer(*na);
            for (std::size_t i = 0; i < gout.size(); ++i)
                if (na->values[i] >= floor) ga[i] += gout[i];
        });
}

Tensor softmax_rows(const Tensor& a) {
    const NodePtr& na = need(a, "softmax_rows");
    require_2d(*na, "softmax_rows");
    const std::size_t rows = na->shape[0], cols = na->shape[1];
    if (cols == 0) throw ShapeError("softmax_rows: empty rows");
    std::vector<double> out(na->numel());
    for (std::size_t i = 0; i < rows; ++i) {
        const double* in = na->values.data() + i * cols;
        double* o = out.data() + i * cols;
        double mx = in[0];
        for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, in[j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            o[j] = std::exp(in[j] - mx);
            denom += o[j];
        }
        for (std::size_t j = 0; j < cols; ++j) o[j] /= denom;
    }
    auto back = [na, rows, cols](GradStore& gs, const TensorNode& self) {
        if (!na->requires_grad) return;
        const auto& gout = *gs.find(&self);
        auto& ga = gs.buffer(*na);
        for (std::size_t i = 0; i < rows; ++i) {
            const double* y = self.values.data() + i * cols;
            const double* g = gout.data() + i * cols;
            double dot = 0.0;
            for (std::size_t j = 0; j < cols; ++j) dot += g[j] * y[j];
            double* d = ga.data() + i * cols;
            for (std::size_t j = 0; j < cols; ++j) d[j] += y[j] * (g[j] - dot);
        }
    };
    return make_op(na->shape, std::move(out), {na}, std::move(back));
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

Tensor sum(const Tensor& a) {
    const NodePtr& na = need(a, "sum");
    double total = 0.0;
    for (double v : na->values) total += v;
    auto back = [na](GradStore& gs, const TensorNode& self) {
        if (!na->requires_grad) return;
        const double g = (*gs.find(&self))[0];
        auto& ga = gs.buffer(*na);
        for (double& v : ga) v += g;
    };
    return make_op({}, {total}, {na}, std::move(back));
}

Tensor mean(const Tensor& a) {
    const NodePtr& na = need(a, "mean");
    if (na->numel() == 0) throw ShapeError("mean: empty tensor");
    double total = 0.0;
    for (double v : na->values) total += v;
    const double inv = 1.0 / static_cast<double>(na->numel());
    auto back = [na, inv](GradStore& gs, const TensorNode& self) {
        if (!na->requires_grad) return;
        const double g = (*gs.find(&self))[0] * inv;
        auto& ga = gs.buffer(*na);
        for (double& v : ga) v += g;
    };
    return make_op({}, {total * inv}, {na}, std::move(back));
}

Tensor row_sum(const Tensor& a) {
    const NodePtr& na = need(a, "row_sum");
    require_2d(*na, "row_sum");
    const std::size_t rows = na->shape[0], cols = na->shape[1];
    std::vector<double> out(rows, 0.0);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) out[i] += na->values[i * cols + j];
    auto back = [na, rows, cols](GradStore& gs, const TensorNode& self) {
        if (!na->requires_grad) return;
        const auto& gout = *gs.find(&self);
        auto& ga = gs.buffer(*na);
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) ga[i * cols + j] += gout[i];
    };
    return make_op({rows, 1}, std::move(out), {na}, std::move(back));
}

Tensor squared_norm(const Tensor& a) {
    const NodePtr& na = need(a, "squared_norm");
    double total = 0.0;
    for (double v : na->values) total += v * v;
    auto back = [na](GradStore& gs, const TensorNode& self) {
        if (!na->requires_grad) return;
        const double g = (*gs.find(&self))[0];
        auto& ga = gs.buffer(*na);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += 2.0 * g * na->values[i];
    };
    return make_op({}, {total}, {na}, std::move(back));
}

// ---------------------------------------------------------------------------
// Layout ops
// ---------------------------------------------------------------------------

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    const NodePtr& na = need(a, "concat_cols");
    const NodePtr& nb = need(b, "concat_cols");
    require_2d(*na, "concat_cols");
    require_2d(*nb, "concat_cols");
    if (na->shape[0] != nb->shape[0])
        throw ShapeError("concat_cols: shapes " + shape_str(na->shape) + " and " +
                         shape_str(nb->shape) + " differ in rows");
    const std::size_t rows = na->shape[0], ca = na->shape[1], cb = nb->shape[1];
    std::vector<double> out(rows * (ca + cb));
    for (std::size_t i = 0; i < rows; ++i) {
        std::copy_n(na->values.data() + i * ca, ca, out.data() + i * (ca + cb));
        std::copy_n(nb->values.data() + i * cb, cb, out.data() + i * (ca + cb) + ca);
    }
    auto back = [na, nb, rows, ca, cb](GradStore& gs, const TensorNode& self) {
        const auto& gout = *gs.find(&self);
        if (na->requires_grad) {
            auto& ga = gs.buffer(*na);
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < ca; ++j) ga[i * ca + j] += gout[i * (ca + cb) + j];
        }
        if (nb->requires_grad) {
            auto& gb = gs.buffer(*nb);
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < cb; ++j)
                    gb[i * cb + j] += gout[i * (ca + cb) + ca + j];
        }
    };
    return make_op({rows, ca + cb}, std::move(out), {na, nb}, std::move(back));
}

std::pair<Tensor, Tensor> split_cols(const Tensor& a, std::size_t at) {
    const NodePtr& na = need(a, "split_cols");
    require_2d(*na, "split_cols");
    const std::size_t rows = na->shape[0], cols = na->shape[1];
    if (at == 0 || at >= cols)
        throw ShapeError("split_cols: split point " + std::to_string(at) +
                         " out of range for shape " + shape_str(na->shape));
    const std::size_t cb = cols - at;
    std::vector<double> left(rows * at), right(rows * cb);
    for (std::size_t i = 0; i < rows; ++i) {
        std::copy_n(na->values.data() + i * cols, at, left.data() + i * at);
        std::copy_n(na->values.data() + i * cols + at, cb, right.data() + i * cb);
    }
    auto back_left = [na, rows, cols, at](GradStore& gs, const TensorNode& self) {
        if (!na->requires_grad) return;
        const auto& gout = *gs.find(&self);
        auto& ga = gs.buffer(*na);
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < at; ++j) ga[i * cols + j] += gout[i * at + j];
    };
    auto back_right = [na, rows, cols, at, cb](GradStore& gs, const TensorNode& self) {
        if (!na->requires_grad) return;
        const auto& gout = *gs.find(&self);
        auto& ga = gs.buffer(*na);
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cb; ++j) ga[i * cols + at + j] += gout[i * cb + j];
    };
    Tensor l = make_op({rows, at}, std::move(left), {na}, std::move(back_left));
    Tensor r = make_op({rows, cb}, std::move(right), {na}, std::move(back_right));
    return {std::move(l), std::move(r)};
}

}  // namespace burg
