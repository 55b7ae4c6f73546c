#include "burg/consistency.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "burg/errors.hpp"

namespace burg {

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
    double total = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        const double diff = a[j] - b[j];
        total += diff * diff;
    }
    return total;
}

}  // namespace

NeighborIndex NeighborIndex::build(std::vector<std::vector<double>> view_latents,
                                   std::vector<std::uint8_t> mask, std::size_t n,
                                   std::size_t n_views, std::size_t dim) {
    if (view_latents.size() != n_views) throw ContractError("NeighborIndex: latent list != V");
    for (const auto& m : view_latents)
        if (m.size() != n * dim) throw ContractError("NeighborIndex: latent matrix size mismatch");
    if (mask.size() != n * n_views) throw ContractError("NeighborIndex: mask size mismatch");
    NeighborIndex index;
    index.n = n;
    index.n_views = n_views;
    index.dim = dim;
    index.latents = std::move(view_latents);
    index.mask = std::move(mask);
    return index;
}

std::optional<std::size_t> find_cross_view_neighbor(std::size_t sample, std::size_t view,
                                                    std::span<const double> z_tilde,
                                                    const NeighborIndex& index) {
    if (index.mask[sample * index.n_views + view])
        throw ContractError("find_cross_view_neighbor: instance is observed, nothing to recover");
    double best_score = std::numeric_limits<double>::infinity();
    std::optional<std::size_t> best;
    for (std::size_t other_view = 0; other_view < index.n_views; ++other_view) {
        if (other_view == view) continue;
        if (!index.mask[sample * index.n_views + other_view]) continue;
        // nearest observed candidate to the recovered latent, restricted to
        // candidates whose view `view` is observed
        double nearest = std::numeric_limits<double>::infinity();
        std::optional<std::size_t> candidate;
        for (std::size_t j = 0; j < index.n; ++j) {
            if (j == sample) continue;
            if (!index.mask[j * index.n_views + other_view]) continue;
            if (!index.mask[j * index.n_views + view]) continue;
            const double d = sq_dist(index.latent(j, other_view), z_tilde);
            if (d < nearest) {
                nearest = d;
                candidate = j;
            }
        }
        if (!candidate) continue;
        const double score =
            sq_dist(index.latent(*candidate, other_view), index.latent(sample, other_view));
        if (score < best_score) {
            best_score = score;
            best = candidate;
        }
    }
    return best;
}

NeighborResolution resolve_neighbors(const NeighborIndex& index,
                                     const std::vector<std::vector<double>>& recovered) {
    if (recovered.size() != index.n_views)
        throw ContractError("resolve_neighbors: recovered latent list != V");
    NeighborResolution resolution;
    resolution.neighbor.assign(index.n * index.n_views, -1);
    for (std::size_t i = 0; i < index.n; ++i)
        for (std::size_t v = 0; v < index.n_views; ++v) {
            if (index.mask[i * index.n_views + v]) continue;
            const std::span<const double> z_tilde{recovered[v].data() + i * index.dim, index.dim};
            const auto neighbor = find_cross_view_neighbor(i, v, z_tilde, index);
            if (neighbor)
                resolution.neighbor[i * index.n_views + v] =
                    static_cast<std::int64_t>(*neighbor);
        }
    return resolution;
}

Tensor nac_loss(const Batch& batch, const std::vector<Tensor>& z_tilde,
                const NeighborIndex& index, const NeighborResolution& resolution) {
    if (z_tilde.size() != batch.n_views) throw ContractError("nac_loss: latent list != V");
    std::size_t missing = 0;
    for (std::size_t r = 0; r < batch.size; ++r)
        for (std::size_t v = 0; v < batch.n_views; ++v)
            missing += batch.mask[r * batch.n_views + v] ? 0 : 1;
    if (missing == 0) return Tensor::scalar(0.0);

    const std::size_t d = index.dim;
    Tensor total;
    for (std::size_t v = 0; v < batch.n_views; ++v) {
        std::vector<double> target(batch.size * d, 0.0);
        std::vector<double> gate(batch.size, 0.0);
        bool any = false;
        for (std::size_t r = 0; r < batch.size; ++r) {
            if (batch.mask[r * batch.n_views + v]) continue;
            const std::int64_t neighbor =
                resolution.neighbor[batch.indices[r] * batch.n_views + v];
            if (neighbor < 0) continue;
            const auto source = index.latent(static_cast<std::size_t>(neighbor), v);
            std::copy(source.begin(), source.end(), target.begin() + r * d);
            gate[r] = 1.0;
            any = true;
        }
        if (!any) continue;
        const Tensor diff = sub(z_tilde[v], Tensor::matrix(batch.size, d, std::move(target)));
        const Tensor gated =
            sum(mul(Tensor::matrix(batch.size, 1, std::move(gate)), row_sum(mul(diff, diff))));
        total = total.defined() ? add(total, gated) : gated;
    }
    if (!total.defined()) return Tensor::scalar(0.0);
    return scale(total, 1.0 / static_cast<double>(missing));
}

PrototypeSet compute_prototypes(const std::vector<double>& latents, std::size_t n,
                                std::size_t dim, std::size_t k, Rng& rng, double tau,
                                double gamma) {
    if (k < 2) throw ContractError("compute_prototypes: need at least 2 prototypes");
    if (!(tau > 0.0)) throw ContractError("compute_prototypes: tau must be positive");
    if (gamma < 0.0) throw ContractError("compute_prototypes: gamma must be non-negative");
    KmeansOptions options;
    options.max_iters = 20;
    options.restarts = 4;
    KmeansResult result = kmeans(latents, n, dim, k, rng, options);
    PrototypeSet prototypes;
    prototypes.k = k;
    prototypes.dim = dim;
    prototypes.centroids = std::move(result.centroids);
    prototypes.tau = tau;
    prototypes.gamma = gamma;
    return prototypes;
}

Tensor soft_assign(const Tensor& z, const PrototypeSet& prototypes) {
    if (prototypes.k == 0) throw ContractError("soft_assign: empty prototype set");
    if (z.ndim() != 2 || z.cols() != prototypes.dim)
        throw ShapeError("soft_assign: latent has " + std::to_string(z.cols()) +
                         " columns, prototypes have " + std::to_string(prototypes.dim));
    const std::size_t rows = z.rows(), d = prototypes.dim, k = prototypes.k;
    // centroid directions scaled by 1/(||c|| * tau), transposed for matmul
    std::vector<double> directions(d * k);
    for (std::size_t c = 0; c < k; ++c) {
        double norm2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double value = prototypes.centroids[c * d + j];
            norm2 += value * value;
        }
        if (norm2 == 0.0)
            throw DomainError("soft_assign: prototype " + std::to_string(c) +
                              " has zero norm, cosine undefined");
        const double inv = 1.0 / (std::sqrt(norm2) * prototypes.tau);
        for (std::size_t j = 0; j < d; ++j)
            directions[j * k + c] = prototypes.centroids[c * d + j] * inv;
    }
    const auto values = z.values();
    for (std::size_t i = 0; i < rows; ++i) {
        double norm2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) norm2 += values[i * d + j] * values[i * d + j];
        if (norm2 == 0.0)
            throw DomainError("soft_assign: latent row " + std::to_string(i) +
                              " has zero norm, cosine undefined");
    }
    const Tensor dots = matmul(z, Tensor::matrix(d, k, std::move(directions)));
    // 1/||z_i|| as exp(-0.5 log ||z_i||^2), differentiable through z
    const Tensor inv_norm = exp(scale(log(row_sum(mul(z, z))), -0.5));
    return softmax_rows(mul(dots, inv_norm));
}

int consensus_label(const std::vector<std::vector<double>>& view_assignments,
                    std::span<const std::uint8_t> mask_row) {
    if (view_assignments.empty()) throw ContractError("consensus_label: no views");
    const std::size_t k = view_assignments[0].size();
    double observed = 0.0;
    std::vector<double> mean(k, 0.0);
    for (std::size_t v = 0; v < view_assignments.size(); ++v) {
        if (!mask_row[v]) continue;
        observed += 1.0;
        for (std::size_t c = 0; c < k; ++c) mean[c] += view_assignments[v][c];
    }
    if (observed == 0.0) throw ContractError("consensus_label: no observed view");
    int best = 0;
    for (std::size_t c = 1; c < k; ++c)
        if (mean[c] > mean[static_cast<std::size_t>(best)]) best = static_cast<int>(c);
    return best;
}

Tensor pc_loss(const std::vector<Tensor>& slot_assignments, const std::vector<int>& consensus,
               double gamma) {
    if (slot_assignments.empty()) throw ContractError("pc_loss: no views");
    const std::size_t rows = slot_assignments[0].rows();
    const std::size_t k = slot_assignments[0].cols();
    if (consensus.size() != rows) throw ContractError("pc_loss: consensus length != batch size");
    std::vector<double> one_hot(rows * k, 0.0);
    for (std::size_t i = 0; i < rows; ++i) {
        const int label = consensus[i];
        if (label < 0 || static_cast<std::size_t>(label) >= k)
            throw ContractError("pc_loss: consensus label out of range");
        one_hot[i * k + static_cast<std::size_t>(label)] = 1.0;
    }
    const Tensor targets = Tensor::matrix(rows, k, std::move(one_hot));
    Tensor total;
    for (const Tensor& p : slot_assignments) {
        if (p.rows() != rows || p.cols() != k) throw ShapeError("pc_loss: assignment shape mismatch");
        const Tensor log_p = log(clamp_min(p, 1e-12));
        const Tensor cross_entropy = neg(row_sum(mul(targets, log_p)));
        const Tensor entropy = neg(row_sum(mul(p, log_p)));
        const Tensor term = sum(add(cross_entropy, scale(entropy, gamma)));
        total = total.defined() ? add(total, term) : term;
    }
    return scale(total, 1.0 / static_cast<double>(rows * slot_assignments.size()));
}

}  // namespace burg
